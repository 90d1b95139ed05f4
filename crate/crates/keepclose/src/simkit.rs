//! Fixed-step nonlinear closed-loop simulation and empirical metrics.
//!
//! One run integrates the true plant under the neural controller and the
//! reference closed loop side by side from the shared initial state, with
//! classical fourth-order Runge–Kutta. Controllers are evaluated at the
//! stage states (continuous-feedback idealization); a sampled-data mode
//! holds the control over a fixed period instead.
//!
//! Empirical RISE and SSE divide the output-error norm by the joint output
//! energy, with trapezoidal norms on the integration grid so that the
//! numbers are directly comparable with the dissipation checks.

use nalgebra::DVector;
use thiserror::Error;

use crate::sysmodels::SignalNorms;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("state became non-finite at t = {t}")]
    NonFiniteState { t: f64, partial: Box<Trajectory> },
    #[error("signals share no grid: {0}")]
    GridMismatch(String),
    #[error("zero denominator: both outputs have no energy")]
    ZeroDenominator,
    #[error("bad step configuration: dt = {dt}, T = {t_final}")]
    BadStep { dt: f64, t_final: f64 },
}

/// Sampled closed-loop run of plant and reference from a shared initial
/// state. `z = y - yhat` is derived.
#[derive(Debug, Clone, Default)]
pub struct Trajectory {
    pub t: Vec<f64>,
    pub x: Vec<DVector<f64>>,
    pub xhat: Vec<DVector<f64>>,
    pub y: Vec<DVector<f64>>,
    pub yhat: Vec<DVector<f64>>,
    pub u: Vec<DVector<f64>>,
    pub uhat: Vec<DVector<f64>>,
}

impl Trajectory {
    pub fn z(&self) -> Vec<DVector<f64>> {
        self.y
            .iter()
            .zip(self.yhat.iter())
            .map(|(a, b)| a - b)
            .collect()
    }

    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }
}

/// Control evaluation mode.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FeedbackMode {
    /// Controller evaluated at every RK4 stage state.
    Continuous,
    /// Zero-order hold: control recomputed every `dt_ctrl` seconds.
    SampledData { dt_ctrl: f64 },
}

/// The two coupled loops of one scenario run.
pub struct ClosedLoop<'a> {
    /// Plant field (t, x, u) -> dx/dt.
    pub plant: &'a dyn Fn(f64, &DVector<f64>, &DVector<f64>) -> DVector<f64>,
    /// Plant measurement map x -> y.
    pub plant_output: &'a dyn Fn(&DVector<f64>) -> DVector<f64>,
    /// Neural controller (t, x) -> u; reference input wiring happens here.
    pub controller: &'a dyn Fn(f64, &DVector<f64>) -> DVector<f64>,
    /// Reference field (t, xhat, uhat) -> dxhat/dt.
    pub reference: &'a dyn Fn(f64, &DVector<f64>, &DVector<f64>) -> DVector<f64>,
    pub reference_output: &'a dyn Fn(&DVector<f64>) -> DVector<f64>,
    /// Ideal controller (t, xhat) -> uhat.
    pub ideal_controller: &'a dyn Fn(f64, &DVector<f64>) -> DVector<f64>,
}

/// Classical RK4 on a single autonomous-with-time field; plain integration
/// without controllers. Returns the grid and states.
pub fn rk4_integrate<F>(
    field: F,
    x0: DVector<f64>,
    t_final: f64,
    dt: f64,
) -> Result<(Vec<f64>, Vec<DVector<f64>>), SimError>
where
    F: Fn(f64, &DVector<f64>) -> DVector<f64>,
{
    if dt <= 0.0 || t_final < dt {
        return Err(SimError::BadStep { dt, t_final });
    }
    let steps = (t_final / dt).round() as usize;
    let mut t_grid = Vec::with_capacity(steps + 1);
    let mut xs = Vec::with_capacity(steps + 1);
    let mut x = x0;
    for k in 0..=steps {
        let t = k as f64 * dt;
        if !x.iter().all(|v| v.is_finite()) {
            let partial = Trajectory {
                t: t_grid.clone(),
                x: xs.clone(),
                ..Default::default()
            };
            return Err(SimError::NonFiniteState {
                t,
                partial: Box::new(partial),
            });
        }
        t_grid.push(t);
        xs.push(x.clone());
        if k < steps {
            let k1 = field(t, &x);
            let k2 = field(t + dt / 2.0, &(&x + &k1 * (dt / 2.0)));
            let k3 = field(t + dt / 2.0, &(&x + &k2 * (dt / 2.0)));
            let k4 = field(t + dt, &(&x + &k3 * dt));
            x += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0);
        }
    }
    Ok((t_grid, xs))
}

/// Integrate both loops from the shared initial state and sample all
/// signals on the grid.
pub fn simulate_closed_loop(
    loop_def: &ClosedLoop<'_>,
    x0: &DVector<f64>,
    t_final: f64,
    dt: f64,
    mode: FeedbackMode,
) -> Result<Trajectory, SimError> {
    if dt <= 0.0 || t_final < dt {
        return Err(SimError::BadStep { dt, t_final });
    }
    let steps = (t_final / dt).round() as usize;
    let n = x0.len();
    let mut traj = Trajectory::default();
    let mut x = x0.clone();
    let mut xh = x0.clone();
    // held controls for sampled-data mode
    let mut held_u: Option<(f64, DVector<f64>, DVector<f64>)> = None;

    for k in 0..=steps {
        let t = k as f64 * dt;
        if !(x.iter().all(|v| v.is_finite()) && xh.iter().all(|v| v.is_finite())) {
            return Err(SimError::NonFiniteState {
                t,
                partial: Box::new(traj),
            });
        }
        let (u_now, uh_now) = match mode {
            FeedbackMode::Continuous => ((loop_def.controller)(t, &x), (loop_def.ideal_controller)(t, &xh)),
            FeedbackMode::SampledData { dt_ctrl } => {
                let refresh = match &held_u {
                    None => true,
                    Some((t_held, _, _)) => t - t_held >= dt_ctrl - 1e-12,
                };
                if refresh {
                    held_u = Some((t, (loop_def.controller)(t, &x), (loop_def.ideal_controller)(t, &xh)));
                }
                let (_, u, uh) = held_u.as_ref().unwrap();
                (u.clone(), uh.clone())
            }
        };
        traj.t.push(t);
        traj.x.push(x.clone());
        traj.xhat.push(xh.clone());
        traj.y.push((loop_def.plant_output)(&x));
        traj.yhat.push((loop_def.reference_output)(&xh));
        traj.u.push(u_now.clone());
        traj.uhat.push(uh_now.clone());

        if k < steps {
            let eval_u = |tt: f64, xx: &DVector<f64>| -> DVector<f64> {
                match mode {
                    FeedbackMode::Continuous => (loop_def.controller)(tt, xx),
                    FeedbackMode::SampledData { .. } => u_now.clone(),
                }
            };
            let eval_uh = |tt: f64, xx: &DVector<f64>| -> DVector<f64> {
                match mode {
                    FeedbackMode::Continuous => (loop_def.ideal_controller)(tt, xx),
                    FeedbackMode::SampledData { .. } => uh_now.clone(),
                }
            };
            let field = |tt: f64, joint: &DVector<f64>| -> DVector<f64> {
                let xp = DVector::from_iterator(n, joint.iter().take(n).copied());
                let xr = DVector::from_iterator(n, joint.iter().skip(n).copied());
                let u = eval_u(tt, &xp);
                let uh = eval_uh(tt, &xr);
                let dxp = (loop_def.plant)(tt, &xp, &u);
                let dxr = (loop_def.reference)(tt, &xr, &uh);
                let mut out = DVector::zeros(2 * n);
                out.rows_mut(0, n).copy_from(&dxp);
                out.rows_mut(n, n).copy_from(&dxr);
                out
            };
            let mut joint = DVector::zeros(2 * n);
            joint.rows_mut(0, n).copy_from(&x);
            joint.rows_mut(n, n).copy_from(&xh);
            let k1 = field(t, &joint);
            let k2 = field(t + dt / 2.0, &(&joint + &k1 * (dt / 2.0)));
            let k3 = field(t + dt / 2.0, &(&joint + &k2 * (dt / 2.0)));
            let k4 = field(t + dt, &(&joint + &k3 * dt));
            let next = joint + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0);
            x = DVector::from_iterator(n, next.iter().take(n).copied());
            xh = DVector::from_iterator(n, next.iter().skip(n).copied());
        }
    }
    Ok(traj)
}

fn joint_energy(t: &[f64], y: &[DVector<f64>], yhat: &[DVector<f64>]) -> Result<f64, SimError> {
    let ny = SignalNorms::from_samples(t, y)
        .map_err(|e| SimError::GridMismatch(e.to_string()))?;
    let nyh = SignalNorms::from_samples(t, yhat)
        .map_err(|e| SimError::GridMismatch(e.to_string()))?;
    let denom = (ny.l2 * ny.l2 + nyh.l2 * nyh.l2).sqrt();
    if denom <= 0.0 {
        return Err(SimError::ZeroDenominator);
    }
    Ok(denom)
}

/// ‖y − ŷ‖₂ / sqrt(‖y‖₂² + ‖ŷ‖₂²) with trapezoidal norms.
pub fn empirical_rise(t: &[f64], y: &[DVector<f64>], yhat: &[DVector<f64>]) -> Result<f64, SimError> {
    if t.len() != y.len() || t.len() != yhat.len() {
        return Err(SimError::GridMismatch("length mismatch".into()));
    }
    let z: Vec<DVector<f64>> = y.iter().zip(yhat.iter()).map(|(a, b)| a - b).collect();
    let nz = SignalNorms::from_samples(t, &z)
        .map_err(|e| SimError::GridMismatch(e.to_string()))?;
    Ok(nz.l2 / joint_energy(t, y, yhat)?)
}

/// ‖y − ŷ‖∞ / sqrt(‖y‖₂² + ‖ŷ‖₂²), sup over the grid.
pub fn empirical_sse(t: &[f64], y: &[DVector<f64>], yhat: &[DVector<f64>]) -> Result<f64, SimError> {
    if t.len() != y.len() || t.len() != yhat.len() {
        return Err(SimError::GridMismatch("length mismatch".into()));
    }
    let z: Vec<DVector<f64>> = y.iter().zip(yhat.iter()).map(|(a, b)| a - b).collect();
    let nz = SignalNorms::from_samples(t, &z)
        .map_err(|e| SimError::GridMismatch(e.to_string()))?;
    Ok(nz.linf / joint_energy(t, y, yhat)?)
}

/// Running value of both metrics at every grid prefix. Entries where the
/// denominator is still zero are reported as 0.
pub fn running_metrics(
    t: &[f64],
    y: &[DVector<f64>],
    yhat: &[DVector<f64>],
) -> (Vec<f64>, Vec<f64>) {
    let n = t.len();
    let mut rise = vec![0.0; n];
    let mut sse = vec![0.0; n];
    let mut acc_z = 0.0;
    let mut acc_y = 0.0;
    let mut acc_yh = 0.0;
    let mut peak_z: f64 = 0.0;
    let sq = |v: &DVector<f64>| v.dot(v);
    for k in 0..n {
        let zk = &y[k] - &yhat[k];
        peak_z = peak_z.max(sq(&zk).sqrt());
        if k > 0 {
            let dt = t[k] - t[k - 1];
            let zprev = &y[k - 1] - &yhat[k - 1];
            acc_z += 0.5 * dt * (sq(&zk) + sq(&zprev));
            acc_y += 0.5 * dt * (sq(&y[k]) + sq(&y[k - 1]));
            acc_yh += 0.5 * dt * (sq(&yhat[k]) + sq(&yhat[k - 1]));
        }
        let denom = (acc_y + acc_yh).sqrt();
        if denom > 0.0 {
            rise[k] = acc_z.sqrt() / denom;
            sse[k] = peak_z / denom;
        }
    }
    (rise, sse)
}

/// CSV export with running metrics, 9 significant digits.
///
/// Header: `t,y_1..y_p,yhat_1..yhat_p,u_1..u_m,uhat_1..uhat_m,rise_running,sse_running`.
pub fn trajectory_to_csv(traj: &Trajectory) -> String {
    let p = traj.y.first().map_or(0, |v| v.len());
    let m = traj.u.first().map_or(0, |v| v.len());
    let mut header = String::from("t");
    for i in 1..=p {
        header.push_str(&format!(",y_{i}"));
    }
    for i in 1..=p {
        header.push_str(&format!(",yhat_{i}"));
    }
    for i in 1..=m {
        header.push_str(&format!(",u_{i}"));
    }
    for i in 1..=m {
        header.push_str(&format!(",uhat_{i}"));
    }
    header.push_str(",rise_running,sse_running\n");
    let (rise, sse) = running_metrics(&traj.t, &traj.y, &traj.yhat);
    let mut out = header;
    let fmt = |v: f64| format!("{:.8e}", v);
    for k in 0..traj.len() {
        let mut row = fmt(traj.t[k]);
        for i in 0..p {
            row.push(',');
            row.push_str(&fmt(traj.y[k][i]));
        }
        for i in 0..p {
            row.push(',');
            row.push_str(&fmt(traj.yhat[k][i]));
        }
        for i in 0..m {
            row.push(',');
            row.push_str(&fmt(traj.u[k][i]));
        }
        for i in 0..m {
            row.push(',');
            row.push_str(&fmt(traj.uhat[k][i]));
        }
        row.push(',');
        row.push_str(&fmt(rise[k]));
        row.push(',');
        row.push_str(&fmt(sse[k]));
        row.push('\n');
        out.push_str(&row);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn rk4_exponential_decay() {
        let (t, xs) = rk4_integrate(
            |_, x| -x.clone(),
            DVector::from_vec(vec![1.0]),
            1.0,
            1e-3,
        )
        .unwrap();
        assert_eq!(t.len(), 1001);
        assert_relative_eq!(xs.last().unwrap()[0], (-1.0_f64).exp(), epsilon = 1e-9);
    }

    #[test]
    fn rk4_zero_field_constant() {
        let (_, xs) = rk4_integrate(
            |_, x| DVector::zeros(x.len()),
            DVector::from_vec(vec![2.5, -1.0]),
            0.5,
            1e-2,
        )
        .unwrap();
        for x in xs {
            assert_eq!(x[0], 2.5);
            assert_eq!(x[1], -1.0);
        }
    }

    #[test]
    fn rk4_finite_escape_detected() {
        let res = rk4_integrate(
            |_, x| x.component_mul(x),
            DVector::from_vec(vec![1.0]),
            2.0,
            1e-3,
        );
        match res {
            Err(SimError::NonFiniteState { t, partial }) => {
                assert!(t < 1.05, "escape detected only at t = {t}");
                assert!(!partial.t.is_empty());
            }
            _ => panic!("expected blow-up"),
        }
    }

    #[test]
    fn empirical_rise_examples() {
        let t: Vec<f64> = (0..=1000).map(|k| k as f64 * 0.01).collect();
        let y: Vec<DVector<f64>> = t.iter().map(|&tk| DVector::from_vec(vec![tk.sin()])).collect();
        // identical outputs: 0
        assert_eq!(empirical_rise(&t, &y, &y).unwrap(), 0.0);
        // y = 2 yhat: |yhat| / sqrt(5 |yhat|^2) = 1/sqrt(5)
        let y2: Vec<DVector<f64>> = y.iter().map(|v| v * 2.0).collect();
        assert_relative_eq!(
            empirical_rise(&t, &y2, &y).unwrap(),
            1.0 / 5.0_f64.sqrt(),
            epsilon = 1e-12
        );
    }

    #[test]
    fn empirical_sse_constant_offset() {
        let t: Vec<f64> = (0..=500).map(|k| k as f64 * 0.01).collect();
        let yhat: Vec<DVector<f64>> = t.iter().map(|&tk| DVector::from_vec(vec![tk.cos()])).collect();
        let c = 0.3;
        let y: Vec<DVector<f64>> = yhat.iter().map(|v| v.add_scalar(c)).collect();
        let ny = SignalNorms::from_samples(&t, &y).unwrap();
        let nyh = SignalNorms::from_samples(&t, &yhat).unwrap();
        let expected = c / (ny.l2 * ny.l2 + nyh.l2 * nyh.l2).sqrt();
        assert_relative_eq!(empirical_sse(&t, &y, &yhat).unwrap(), expected, epsilon = 1e-12);
        // identical outputs: 0
        assert_eq!(empirical_sse(&t, &yhat, &yhat).unwrap(), 0.0);
    }

    #[test]
    fn zero_denominator_rejected() {
        let t = vec![0.0, 0.1];
        let z = vec![DVector::zeros(1), DVector::zeros(1)];
        assert!(matches!(
            empirical_rise(&t, &z, &z),
            Err(SimError::ZeroDenominator)
        ));
    }

    #[test]
    fn metrics_invariant_to_leading_zero_padding() {
        let t: Vec<f64> = (0..=2000).map(|k| k as f64 * 0.01).collect();
        let onset = 5.0;
        let sig = |tk: f64| if tk < onset { 0.0 } else { ((tk - onset) * 1.3).sin() };
        let y: Vec<DVector<f64>> = t.iter().map(|&tk| DVector::from_vec(vec![sig(tk)])).collect();
        let yh: Vec<DVector<f64>> = t
            .iter()
            .map(|&tk| DVector::from_vec(vec![0.9 * sig(tk)]))
            .collect();
        let r_full = empirical_rise(&t, &y, &yh).unwrap();
        // drop the silent prefix: the metric must not change
        let k0 = t.iter().position(|&tk| tk >= onset).unwrap();
        let t2: Vec<f64> = t[k0..].iter().map(|&tk| tk - onset).collect();
        let r_cut = empirical_rise(&t2, &y[k0..], &yh[k0..]).unwrap();
        assert_relative_eq!(r_full, r_cut, epsilon = 1e-12);
    }

    #[test]
    fn closed_loop_two_exponentials() {
        // both loops are x' = -x with zero control: identical trajectories
        let plant = |_: f64, x: &DVector<f64>, u: &DVector<f64>| -x + u;
        let out = |x: &DVector<f64>| x.clone();
        let zero_ctl = |_: f64, _: &DVector<f64>| DVector::zeros(1);
        let cl = ClosedLoop {
            plant: &plant,
            plant_output: &out,
            controller: &zero_ctl,
            reference: &plant,
            reference_output: &out,
            ideal_controller: &zero_ctl,
        };
        let traj = simulate_closed_loop(
            &cl,
            &DVector::from_vec(vec![1.0]),
            1.0,
            1e-3,
            FeedbackMode::Continuous,
        )
        .unwrap();
        assert_relative_eq!(traj.y.last().unwrap()[0], (-1.0_f64).exp(), epsilon = 1e-9);
        assert_eq!(traj.z().last().unwrap()[0], 0.0);
    }

    #[test]
    fn csv_header_and_digits() {
        let t = vec![0.0, 0.5];
        let v = |a: f64| DVector::from_vec(vec![a]);
        let traj = Trajectory {
            t,
            x: vec![v(0.0), v(1.0)],
            xhat: vec![v(0.0), v(1.0)],
            y: vec![v(0.123456789123), v(1.0)],
            yhat: vec![v(0.0), v(1.0)],
            u: vec![v(0.0), v(0.0)],
            uhat: vec![v(0.0), v(0.0)],
        };
        let csv = trajectory_to_csv(&traj);
        let mut lines = csv.lines();
        assert_eq!(
            lines.next().unwrap(),
            "t,y_1,yhat_1,u_1,uhat_1,rise_running,sse_running"
        );
        assert!(lines.next().unwrap().contains("1.23456789e-1"));
    }

    #[test]
    fn grid_refinement_converges() {
        // halving dt barely changes RISE for a smooth pair of loops
        let plant = |_: f64, x: &DVector<f64>, u: &DVector<f64>| {
            DVector::from_vec(vec![-x[0] + u[0]])
        };
        let out = |x: &DVector<f64>| x.clone();
        let ctl = |t: f64, _: &DVector<f64>| DVector::from_vec(vec![(0.8 * t).sin()]);
        let ctl_ref = |t: f64, _: &DVector<f64>| DVector::from_vec(vec![0.95 * (0.8 * t).sin()]);
        let cl = ClosedLoop {
            plant: &plant,
            plant_output: &out,
            controller: &ctl,
            reference: &plant,
            reference_output: &out,
            ideal_controller: &ctl_ref,
        };
        let x0 = DVector::from_vec(vec![0.3]);
        let t1 = simulate_closed_loop(&cl, &x0, 10.0, 2e-3, FeedbackMode::Continuous).unwrap();
        let t2 = simulate_closed_loop(&cl, &x0, 10.0, 1e-3, FeedbackMode::Continuous).unwrap();
        let r1 = empirical_rise(&t1.t, &t1.y, &t1.yhat).unwrap();
        let r2 = empirical_rise(&t2.t, &t2.y, &t2.yhat).unwrap();
        assert!((r1 - r2).abs() < 1e-3, "refinement gap {}", (r1 - r2).abs());
    }

    #[test]
    fn sampled_data_mode_holds_control() {
        let plant = |_: f64, _x: &DVector<f64>, u: &DVector<f64>| u.clone();
        let out = |x: &DVector<f64>| x.clone();
        let ctl = |t: f64, _: &DVector<f64>| DVector::from_vec(vec![t.floor()]);
        let cl = ClosedLoop {
            plant: &plant,
            plant_output: &out,
            controller: &ctl,
            reference: &plant,
            reference_output: &out,
            ideal_controller: &ctl,
        };
        let traj = simulate_closed_loop(
            &cl,
            &DVector::zeros(1),
            1.0,
            0.25,
            FeedbackMode::SampledData { dt_ctrl: 0.5 },
        )
        .unwrap();
        // holds at t=0 value until 0.5
        assert_eq!(traj.u[1][0], 0.0);
    }
}
