//! Single-link robot arm fixture.
//!
//! A pendulum-type arm with gravity torque, viscous friction, and a torque
//! input tracks a second-order linear reference model. The arm nonlinearity
//! is pulled out as the sector-bounded channel q = θ − sin θ, the trained
//! controller's residual against the exact model-matching law is the
//! norm-bounded channel, and the controller's mean-value slope over the
//! operating box supplies the vertex family.
//!
//! States are ordered (ω, θ); the measured output is θ.

use std::f64::consts::FRAC_PI_2;

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::certify::{
    certify_rise, certify_sse, Certificate, CertifyConfig, CertifyError, SseSearch,
};
use crate::errorsys::{
    build_error_system, build_extended_routed, controller_error_gain, DeltaRouting,
    ExtendedSystem,
};
use crate::iqclib::{combine, norm_bound_iqc, sector_iqc, IqcFactor, UncertaintyClass};
use crate::nncontroller::{forward, jacobian_box_refined, MlpController};
use crate::simkit::{simulate_closed_loop, ClosedLoop, FeedbackMode, SimError, Trajectory};
use crate::sysmodels::{LpvParameterBox, StateSpace};

/// Arm mass, kg.
pub const MASS_KG: f64 = 0.15;
/// Arm length, m.
pub const LENGTH_M: f64 = 0.5;
/// Viscous friction, N·m·s/rad.
pub const FRICTION_NMS: f64 = 0.5;
/// Angle domain bound, rad.
pub const THETA_MAX: f64 = FRAC_PI_2;
/// Declared sector upper slope of q = θ − sin θ on |θ| ≤ π/2.
pub const SECTOR_BETA: f64 = 0.364;
/// Declared amplitude bound of the controller residual channel.
pub const EPSILON_BOUND: f64 = 0.2;
/// Default simulation step and horizon.
pub const DT: f64 = 1e-3;
pub const T_FINAL: f64 = 20.0;

const WEIGHTS_JSON: &str = include_str!("assets/arm_weights.json");

#[derive(Debug, Error)]
pub enum ArmError {
    #[error("theta {0} outside the declared domain [-pi/2, pi/2]")]
    DomainExceeded(f64),
    #[error(transparent)]
    Certify(#[from] CertifyError),
    #[error(transparent)]
    Sim(#[from] SimError),
}

/// Sign convention of the ideal controller.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SignConvention {
    /// Exact model matching: substituting the law into the arm field
    /// reproduces the reference field identically.
    #[default]
    ExactMatching,
    /// The historical printed form, kept for comparison; it does not
    /// reproduce the reference model under substitution.
    Printed,
}

/// Arm field: ω̇ = −10 sin θ − 2ω + τ, θ̇ = ω. State (ω, θ).
pub fn plant_field(state: &DVector<f64>, tau: f64) -> DVector<f64> {
    let (omega, theta) = (state[0], state[1]);
    DVector::from_vec(vec![-10.0 * theta.sin() - 2.0 * omega + tau, omega])
}

/// Rearranged entry point: ω̇ = −9θ − 2ω + τ + 10 q with q = θ − sin θ.
pub fn plant_field_rearranged(state: &DVector<f64>, tau: f64, q: f64) -> DVector<f64> {
    let (omega, theta) = (state[0], state[1]);
    DVector::from_vec(vec![-9.0 * theta - 2.0 * omega + tau + 10.0 * q, omega])
}

/// Reference model: ω̇ = −9θ − 6ω + 9r, θ̇ = ω.
pub fn reference_field(state: &DVector<f64>, r: f64) -> DVector<f64> {
    let (omega, theta) = (state[0], state[1]);
    DVector::from_vec(vec![-9.0 * theta - 6.0 * omega + 9.0 * r, omega])
}

/// Ideal controller. The exact-matching law makes the closed arm reproduce
/// the reference model; the printed variant is available behind the flag.
pub fn ideal_controller(state: &DVector<f64>, r: f64, conv: SignConvention) -> f64 {
    let (omega, theta) = (state[0], state[1]);
    match conv {
        SignConvention::ExactMatching => {
            10.0 * theta.sin() - 9.0 * theta - 4.0 * omega + 9.0 * r
        }
        SignConvention::Printed => 10.0 * theta + 4.0 * omega - 9.0 * r - 10.0 * theta.sin(),
    }
}

/// Sector channel value q = θ − sin θ; the declared sector only covers the
/// angle domain.
pub fn delta(theta: f64) -> Result<f64, ArmError> {
    if theta.abs() > THETA_MAX + 1e-12 {
        return Err(ArmError::DomainExceeded(theta));
    }
    Ok(theta - theta.sin())
}

pub fn declared_sector() -> UncertaintyClass {
    UncertaintyClass::Sector {
        alpha: vec![0.0],
        beta: vec![SECTOR_BETA],
        domain: LpvParameterBox::new(vec![-THETA_MAX], vec![THETA_MAX]).unwrap(),
    }
}

pub fn declared_epsilon() -> UncertaintyClass {
    UncertaintyClass::Norm {
        c: EPSILON_BOUND,
        domain: operating_box(),
    }
}

/// Error-system plant: A = [[-6,-9],[1,0]], disturbance column 10·q first,
/// control column second, output θ.
pub fn error_plant() -> StateSpace {
    StateSpace::new(
        DMatrix::from_row_slice(2, 2, &[-6.0, -9.0, 1.0, 0.0]),
        DMatrix::from_row_slice(2, 2, &[10.0, 1.0, 0.0, 0.0]),
        DMatrix::from_row_slice(1, 2, &[0.0, 1.0]),
        DMatrix::zeros(1, 2),
        1,
    )
    .unwrap()
}

/// Controller input envelope (θ, ω, r) that bundled runs stay inside; the
/// Jacobian enclosure and the residual estimate are taken over it.
pub fn operating_box() -> LpvParameterBox {
    LpvParameterBox::new(vec![-THETA_MAX, -1.8, -1.15], vec![THETA_MAX, 1.8, 1.15]).unwrap()
}

/// Wider box used when fitting the controller, so the envelope edges are
/// still well inside the training data.
pub fn training_box() -> LpvParameterBox {
    LpvParameterBox::new(vec![-THETA_MAX, -2.5, -1.25], vec![THETA_MAX, 2.5, 1.25]).unwrap()
}

/// Teacher for the trained controller: the exact-matching law as a function
/// of the net inputs (θ, ω, r).
pub fn teacher(input: &DVector<f64>) -> DVector<f64> {
    let state = DVector::from_vec(vec![input[1], input[0]]);
    DVector::from_vec(vec![ideal_controller(
        &state,
        input[2],
        SignConvention::ExactMatching,
    )])
}

/// One bundled case study: a reference signal with its run parameters.
pub struct ArmCase {
    pub name: &'static str,
    pub reference: Box<dyn Fn(f64) -> f64 + Sync>,
    pub x0: DVector<f64>,
    pub t_final: f64,
    pub dt: f64,
}

fn smooth_step(x: f64) -> f64 {
    0.5 * (1.0 + (2.5 * x).tanh())
}

/// Case study A: periodic reference.
pub fn case_a() -> ArmCase {
    ArmCase {
        name: "arm-case-a",
        reference: Box::new(|t| 0.90 * (0.5 * t).sin()),
        x0: DVector::from_vec(vec![0.0, 0.45]),
        t_final: T_FINAL,
        dt: DT,
    }
}

/// Case study B: non-periodic multi-step reference.
pub fn case_b() -> ArmCase {
    ArmCase {
        name: "arm-case-b",
        reference: Box::new(|t| {
            0.90 * smooth_step(t - 1.0) - 1.60 * smooth_step(t - 8.0)
                + 1.40 * smooth_step(t - 14.0)
        }),
        x0: DVector::from_vec(vec![0.0, 0.45]),
        t_final: T_FINAL,
        dt: DT,
    }
}

/// Deterministic randomized bounded reference (amplitude ≤ 1) for the
/// soundness sweeps.
pub fn random_reference(seed: u64) -> ArmCase {
    use rand::Rng;
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut amps = [0.0_f64; 3];
    let mut total = 0.0;
    for a in amps.iter_mut() {
        *a = rng.gen_range(0.2..1.0);
        total += *a;
    }
    for a in amps.iter_mut() {
        *a *= rng.gen_range(0.5..1.0) / total;
    }
    let freqs: Vec<f64> = (0..3).map(|_| rng.gen_range(0.05..0.9)).collect();
    let phases: Vec<f64> = (0..3)
        .map(|_| rng.gen_range(0.0..std::f64::consts::TAU))
        .collect();
    ArmCase {
        name: "arm-random",
        reference: Box::new(move |t| {
            (0..3)
                .map(|k| amps[k] * (freqs[k] * t + phases[k]).sin())
                .sum()
        }),
        x0: DVector::from_vec(vec![0.0, 0.4]),
        t_final: T_FINAL,
        dt: DT,
    }
}

/// The loaded fixture: trained controller plus its declared classes and the
/// derived vertex family.
pub struct ArmScenario {
    pub net: MlpController,
    pub epsilon_bound: f64,
    pub lambda_interval: (f64, f64),
}

impl ArmScenario {
    pub fn load() -> Self {
        let net = MlpController::from_json_str(WEIGHTS_JSON)
            .expect("bundled arm weights must parse");
        Self::from_net(net)
    }

    pub fn from_net(net: MlpController) -> Self {
        let iv = jacobian_box_refined(&net, &operating_box(), 8)
            .expect("jacobian enclosure over the operating box");
        Self {
            net,
            epsilon_bound: EPSILON_BOUND,
            lambda_interval: (iv.lo[(0, 0)], iv.hi[(0, 0)]),
        }
    }

    /// Controller evaluation on raw signals.
    pub fn control(&self, theta: f64, omega: f64, r: f64) -> f64 {
        forward(&self.net, &DVector::from_vec(vec![theta, omega, r]))
            .expect("net evaluation")[0]
    }

    /// The combined multiplier and its per-factor output blocks.
    pub fn multiplier(&self) -> (IqcFactor, Vec<(usize, usize)>) {
        let sector = sector_iqc(
            &DVector::from_vec(vec![0.0]),
            &DVector::from_vec(vec![SECTOR_BETA]),
        )
        .unwrap();
        let eps = norm_bound_iqc(self.epsilon_bound, 1, 1).unwrap();
        let blocks = vec![(0, sector.m.nrows()), (sector.m.nrows(), eps.m.nrows())];
        (combine(&[sector, eps]).unwrap(), blocks)
    }

    /// Vertex family of extended systems at the enclosure's endpoints.
    pub fn vertices(&self) -> Vec<ExtendedSystem> {
        let plant = error_plant();
        let err = build_error_system(&plant, &plant).unwrap();
        let (xi, _) = self.multiplier();
        [self.lambda_interval.0, self.lambda_interval.1]
            .iter()
            .map(|&l| {
                let lam = DMatrix::from_row_slice(1, 1, &[l]);
                let gain = controller_error_gain(&lam, &plant).unwrap();
                build_extended_routed(&err, &gain, &xi, DeltaRouting::ErrorOutput).unwrap()
            })
            .collect()
    }

    pub fn certify_rise(&self, cfg: &CertifyConfig) -> Result<Certificate, ArmError> {
        let (xi, blocks) = self.multiplier();
        Ok(certify_rise(&self.vertices(), &xi.m, &blocks, cfg)?)
    }

    pub fn certify_sse(
        &self,
        cfg: &CertifyConfig,
        search: SseSearch,
    ) -> Result<Certificate, ArmError> {
        let (xi, blocks) = self.multiplier();
        Ok(certify_sse(&self.vertices(), &xi.m, &blocks, cfg, search)?)
    }

    /// Run one case study: true arm under the net against the reference
    /// loop, from the shared initial state.
    pub fn simulate(&self, case: &ArmCase) -> Result<Trajectory, ArmError> {
        self.simulate_with(case, SignConvention::ExactMatching, FeedbackMode::Continuous)
    }

    pub fn simulate_with(
        &self,
        case: &ArmCase,
        conv: SignConvention,
        mode: FeedbackMode,
    ) -> Result<Trajectory, ArmError> {
        let r = &case.reference;
        let plant = |_t: f64, x: &DVector<f64>, u: &DVector<f64>| plant_field(x, u[0]);
        let output = |x: &DVector<f64>| DVector::from_vec(vec![x[1]]);
        let controller = |t: f64, x: &DVector<f64>| {
            DVector::from_vec(vec![self.control(x[1], x[0], r(t))])
        };
        let reference = |t: f64, xh: &DVector<f64>, _u: &DVector<f64>| reference_field(xh, r(t));
        let ideal = |t: f64, xh: &DVector<f64>| {
            DVector::from_vec(vec![ideal_controller(xh, r(t), conv)])
        };
        let cl = ClosedLoop {
            plant: &plant,
            plant_output: &output,
            controller: &controller,
            reference: &reference,
            reference_output: &output,
            ideal_controller: &ideal,
        };
        Ok(simulate_closed_loop(&cl, &case.x0, case.t_final, case.dt, mode)?)
    }

    /// Extract the declared uncertainty-channel signals from a run:
    /// sector pair (θ, θ − sin θ) and residual pair (θ̂, ε) with
    /// ε = π(ŷ) − π*(ŷ, t) evaluated on the reference trajectory.
    pub fn channel_signals(
        &self,
        traj: &Trajectory,
        case: &ArmCase,
    ) -> ChannelSignals {
        let r = &case.reference;
        let mut p_delta = Vec::with_capacity(traj.len());
        let mut q_delta = Vec::with_capacity(traj.len());
        let mut p_eps = Vec::with_capacity(traj.len());
        let mut q_eps = Vec::with_capacity(traj.len());
        for k in 0..traj.len() {
            let theta = traj.y[k][0];
            p_delta.push(DVector::from_vec(vec![theta]));
            q_delta.push(DVector::from_vec(vec![theta - theta.sin()]));
            let (om_r, th_r) = (traj.xhat[k][0], traj.xhat[k][1]);
            let rt = r(traj.t[k]);
            let eps = self.control(th_r, om_r, rt)
                - ideal_controller(&traj.xhat[k], rt, SignConvention::ExactMatching);
            p_eps.push(DVector::from_vec(vec![th_r]));
            q_eps.push(DVector::from_vec(vec![eps]));
        }
        ChannelSignals {
            p_delta,
            q_delta,
            p_eps,
            q_eps,
        }
    }
}

/// Uncertainty-channel signals extracted from one run.
pub struct ChannelSignals {
    pub p_delta: Vec<DVector<f64>>,
    pub q_delta: Vec<DVector<f64>>,
    pub p_eps: Vec<DVector<f64>>,
    pub q_eps: Vec<DVector<f64>>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    #[test]
    fn field_examples() {
        let eq = plant_field(&DVector::from_vec(vec![0.0, 0.0]), 0.0);
        assert_eq!(eq[0], 0.0);
        assert_eq!(eq[1], 0.0);
        let tip = plant_field(&DVector::from_vec(vec![0.0, FRAC_PI_2]), 0.0);
        assert_relative_eq!(tip[0], -10.0, epsilon = 1e-12);
    }

    #[test]
    fn rearranged_form_matches_original() {
        let mut rng = StdRng::seed_from_u64(2);
        for _ in 0..1000 {
            let state = DVector::from_vec(vec![
                rng.gen_range(-3.0..3.0),
                rng.gen_range(-FRAC_PI_2..FRAC_PI_2),
            ]);
            let tau = rng.gen_range(-5.0..5.0);
            let q = state[1] - state[1].sin();
            let f1 = plant_field(&state, tau);
            let f2 = plant_field_rearranged(&state, tau, q);
            assert_relative_eq!(f1[0], f2[0], epsilon = 1e-12);
            assert_relative_eq!(f1[1], f2[1], epsilon = 1e-12);
        }
    }

    #[test]
    fn reference_dc_gain_and_poles() {
        // step r = 1: steady state theta = 9/9 = 1
        let steady = DVector::from_vec(vec![0.0, 1.0]);
        let f = reference_field(&steady, 1.0);
        assert_relative_eq!(f[0], 0.0, epsilon = 1e-12);
        assert_relative_eq!(f[1], 0.0, epsilon = 1e-12);
        // characteristic polynomial (s+3)^2
        let a = DMatrix::from_row_slice(2, 2, &[-6.0, -9.0, 1.0, 0.0]);
        let eigs = crate::sysmodels::eigenvalues(&a).unwrap();
        for e in eigs {
            assert_relative_eq!(e.re, -3.0, epsilon = 1e-9);
            assert_relative_eq!(e.im, 0.0, epsilon = 1e-9);
        }
    }

    #[test]
    fn exact_matching_substitution() {
        let mut rng = StdRng::seed_from_u64(3);
        for _ in 0..1000 {
            let state = DVector::from_vec(vec![
                rng.gen_range(-3.0..3.0),
                rng.gen_range(-FRAC_PI_2..FRAC_PI_2),
            ]);
            let r = rng.gen_range(-1.5..1.5);
            let tau = ideal_controller(&state, r, SignConvention::ExactMatching);
            let closed = plant_field(&state, tau);
            let reference = reference_field(&state, r);
            assert_relative_eq!(closed[0], reference[0], epsilon = 1e-12);
            assert_relative_eq!(closed[1], reference[1], epsilon = 1e-12);
        }
        // origin is a fixed point of the law
        assert_eq!(
            ideal_controller(&DVector::zeros(2), 0.0, SignConvention::ExactMatching),
            0.0
        );
    }

    #[test]
    fn printed_variant_differs() {
        let state = DVector::from_vec(vec![0.3, 0.7]);
        let exact = ideal_controller(&state, 0.5, SignConvention::ExactMatching);
        let printed = ideal_controller(&state, 0.5, SignConvention::Printed);
        assert!((exact - printed).abs() > 1e-6);
    }

    #[test]
    fn feedback_linearized_tracking_exact() {
        // the ideal law cancels the plant exactly: closed loop equals the
        // reference to integration accuracy over the full horizon
        let case = case_a();
        let r = &case.reference;
        let plant = |t: f64, x: &DVector<f64>, _u: &DVector<f64>| {
            plant_field(x, ideal_controller(x, r(t), SignConvention::ExactMatching))
        };
        let reff = |t: f64, x: &DVector<f64>| reference_field(x, r(t));
        let x0 = case.x0.clone();
        let (_, xs) = crate::simkit::rk4_integrate(plant, x0.clone(), 20.0, 1e-3).unwrap();
        let (_, xr) = crate::simkit::rk4_integrate(reff, x0, 20.0, 1e-3).unwrap();
        let mut gap = 0.0_f64;
        for (a, b) in xs.iter().zip(xr.iter()) {
            gap = gap.max((a - b).amax());
        }
        assert!(gap < 1e-8, "tracking gap {gap}");
    }

    #[test]
    fn delta_examples() {
        assert_eq!(delta(0.0).unwrap(), 0.0);
        assert!(matches!(
            delta(std::f64::consts::PI),
            Err(ArmError::DomainExceeded(_))
        ));
        // max slope of q/theta on the domain confirms the declared beta
        let mut max_ratio = 0.0_f64;
        for k in 1..=10_000 {
            let th = FRAC_PI_2 * k as f64 / 10_000.0;
            max_ratio = max_ratio.max((th - th.sin()) / th);
        }
        assert_relative_eq!(max_ratio, 0.36338, epsilon = 1e-4);
        assert!(max_ratio <= SECTOR_BETA);
    }
}
