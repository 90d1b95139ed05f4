//! Regenerate the frozen per-axis lander controller weights.
//!
//! Derives the terminal phase from the deterministic classical-guidance
//! descent, trains one small network per axis against the quadratic
//! surrogate of the guidance law, reports the quantities the certificates
//! depend on, and (with `--write`) freezes the weights under
//! `src/scenarios/assets/`.

use keepclose::certify::CertifyConfig;
use keepclose::iqclib::hard_iqc_prefixes;
use keepclose::nncontroller::{fit_to_teacher, Activation, FitOptions, MlpArch};
use keepclose::scenarios::apollo::{self, ApolloScenario};
use nalgebra::{DMatrix, DVector, Vector3};

fn main() {
    let write = std::env::args().any(|a| a == "--write");
    let wind = Vector3::new(
        apollo::WIND_DEFAULT[0],
        apollo::WIND_DEFAULT[1],
        apollo::WIND_DEFAULT[2],
    );
    let nominal = apollo::nominal_descent(&wind);
    let gate = nominal.iter().find(|s| s.v.norm() <= apollo::GATE_SPEED).unwrap();
    println!(
        "nominal: {} samples, touchdown t={:.1}s |v|end={:.2} gate t={:.1} r=({:.0},{:.0},{:.0}) v=({:.1},{:.1},{:.1})",
        nominal.len(),
        nominal.last().unwrap().t,
        nominal.last().unwrap().v.norm(),
        gate.t,
        gate.r.x, gate.r.y, gate.r.z,
        gate.v.x, gate.v.y, gate.v.z,
    );
    let terminal = apollo::terminal_phase(&nominal);
    for ax in 0..3 {
        let bx = &terminal.boxes[ax];
        println!(
            "axis {ax}: box r [{:.1},{:.1}] v [{:.2},{:.2}] quad {:?}",
            bx.lower[0], bx.upper[0], bx.lower[1], bx.upper[1], terminal.teachers[ax].coeffs
        );
    }

    // train one net per axis
    for ax in 0..3 {
        let teacher = terminal.teachers[ax].clone();
        let f = move |p: &DVector<f64>| DVector::from_vec(vec![teacher.eval(p[0], p[1])]);
        let arch = MlpArch {
            input_dim: 2,
            layers: vec![(14, Activation::Tanh), (1, Activation::Linear)],
        };
        let opts = FitOptions {
            samples_per_axis: 41,
            iterations: 12_000,
            learning_rate: 0.02,
            patience: 2000,
        };
        let net = fit_to_teacher(f, &terminal.boxes[ax], &arch, 101 + ax as u64, &opts)
            .expect("axis training converges");
        if write {
            let path = format!(
                "{}/src/scenarios/assets/apollo_axis{}_weights.json",
                env!("CARGO_MANIFEST_DIR"),
                ax
            );
            std::fs::write(&path, net.to_json_string()).unwrap();
            println!("wrote {path}");
        }
    }
    if !write {
        return;
    }

    // reload through the fixture and measure everything downstream
    let scen = ApolloScenario::load();
    for ax in 0..3 {
        let iv = keepclose::nncontroller::jacobian_box_refined(
            &scen.nets[ax],
            &scen.terminal.boxes[ax],
            16,
        )
        .unwrap();
        println!(
            "axis {ax}: eps sector ({:.5}, {:.5}) lambda r [{:.4},{:.4}] v [{:.4},{:.4}]",
            scen.eps_sectors[ax].0,
            scen.eps_sectors[ax].1,
            iv.lo[(0, 0)],
            iv.hi[(0, 0)],
            iv.lo[(0, 1)],
            iv.hi[(0, 1)]
        );
    }
    let traj = scen.simulate_terminal().unwrap();
    let last = traj.y.last().unwrap();
    println!(
        "terminal run: T={:.1}s end r=({:.1},{:.1},{:.1}) v=({:.2},{:.2},{:.2})",
        traj.t.last().unwrap(),
        last[0], last[1], last[2], last[3], last[4], last[5]
    );
    let printed = [0.0988, 0.1992, 0.1581, 0.0119, 0.0244, 0.0158];
    for ax in 0..3 {
        let sig = scen.axis_channel_signals(&traj, ax);
        let (xi_d, _) = (0, 0);
        let _ = xi_d;
        let sector_delta = keepclose::iqclib::sector_iqc(
            &DVector::from_vec(vec![apollo::DELTA_SECTORS[ax].0]),
            &DVector::from_vec(vec![apollo::DELTA_SECTORS[ax].1]),
        )
        .unwrap();
        let sector_eps = keepclose::iqclib::sector_iqc(
            &DVector::from_vec(vec![scen.eps_sectors[ax].0]),
            &DVector::from_vec(vec![scen.eps_sectors[ax].1]),
        )
        .unwrap();
        let pre_d = hard_iqc_prefixes(&sector_delta, &traj.t, &sig.p_delta, &sig.q_delta).unwrap();
        let pre_e = hard_iqc_prefixes(&sector_eps, &traj.t, &sig.p_eps, &sig.q_eps).unwrap();
        let min_d = pre_d.iter().copied().fold(f64::INFINITY, f64::min);
        let min_e = pre_e.iter().copied().fold(f64::INFINITY, f64::min);
        for row in 0..2 {
            let cfg = CertifyConfig {
                level_range: (1e-4, 0.9),
                ..Default::default()
            };
            let cert = scen.certify_axis(ax, row, &cfg);
            let emp = scen.axis_empirical_rise(&traj, ax, row);
            match cert {
                Ok(c) => {
                    let factor = 2.0 * c.level / (1.0 - c.level);
                    let target = printed[3 * row + ax];
                    println!(
                        "axis {ax} row {row}: gamma*={:.5} factor={:.4} printed={:.4} ratio={:.2} emp={:.5} minIQC=({:.2e},{:.2e})",
                        c.level, factor, target, factor / target, emp, min_d, min_e
                    );
                }
                Err(e) => println!("axis {ax} row {row}: CERT FAILED {e} (emp={emp:.5})"),
            }
        }
    }
    let _ = DMatrix::<f64>::zeros(1, 1);
}
