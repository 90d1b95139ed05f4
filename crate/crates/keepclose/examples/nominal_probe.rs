//! Diagnostic sweep of the classical-guidance descent profile.

use keepclose::scenarios::apollo;
use nalgebra::Vector3;

fn main() {
    let target = apollo::default_target();
    let wind = Vector3::new(-20.0, 0.0, 0.0);
    let mut state = nalgebra::DVector::from_vec(vec![
        apollo::P0[0],
        apollo::P0[1],
        apollo::P0[2],
        apollo::V0[0],
        apollo::V0[1],
        apollo::V0[2],
        apollo::M0_KG,
    ]);
    let dt = 0.05;
    let mut t = 0.0;
    for step in 0..40_000 {
        let r = Vector3::new(state[0], state[1], state[2]);
        let v = Vector3::new(state[3], state[4], state[5]);
        let tgo = apollo::apollo_tgo(&r, &v, &target).unwrap_or(3.0).max(3.0);
        let cmd = apollo::apollo_acmd(&r, &v, &target, tgo).unwrap();
        let f = apollo::thrust_from_accel_cmd(&cmd, state[6]);
        if step % 400 == 0 || (r.z < 20.0 && step % 20 == 0) {
            println!(
                "t={:6.1} x={:8.1} z={:8.1} |v|={:7.2} vz={:7.2} m={:6.1} tgo={:6.1} |F|={:6.0} |acmd|={:5.2}",
                t,
                r.x,
                r.z,
                v.norm(),
                v.z,
                state[6],
                tgo,
                f.norm(),
                cmd.norm()
            );
        }
        if r.z <= 0.5 || state[6] <= apollo::DRY_MASS_KG + 1.0 {
            println!("stop at t={t:.1} z={:.2} m={:.1}", r.z, state[6]);
            break;
        }
        let field = |x: &nalgebra::DVector<f64>| {
            let rr = Vector3::new(x[0], x[1], x[2]);
            let vv = Vector3::new(x[3], x[4], x[5]);
            let cmd = apollo::guidance_command(&rr, &vv, &target);
            let f = apollo::thrust_from_accel_cmd(&cmd, x[6]);
            apollo::apollo_dynamics(x, &f, &wind)
                .unwrap_or_else(|_| nalgebra::DVector::from_element(7, f64::NAN))
        };
        let k1 = field(&state);
        let k2 = field(&(&state + &k1 * (dt / 2.0)));
        let k3 = field(&(&state + &k2 * (dt / 2.0)));
        let k4 = field(&(&state + &k3 * dt));
        state += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0);
        t += dt;
        if !state[2].is_finite() {
            println!("non-finite state at t={t:.2}");
            break;
        }
    }
}
