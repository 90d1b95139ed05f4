//! Powered planetary lander fixture.
//!
//! A point-mass lander with drag, throttle-limited thrust, and fuel
//! depletion descends under polynomial targeting guidance: time-to-go from
//! the vertical channel, a quadratic acceleration-command profile from the
//! target boundary conditions. The certified comparison happens on the
//! terminal approach: a per-axis linear reference model (drag linearized as
//! a diagonal matrix) closed by a smooth polynomial surrogate of the
//! guidance law, tracked by per-axis trained networks.
//!
//! Axis order follows the landing-site east/north/up frame of the mission
//! constants.

use nalgebra::{DMatrix, DVector, Vector3};
use thiserror::Error;

use crate::certify::{certify_rise, Certificate, CertifyConfig, CertifyError};
use crate::errorsys::{
    build_error_system, build_extended_routed, controller_error_gain, DeltaRouting,
    ExtendedSystem,
};
use crate::iqclib::{combine, sector_iqc, IqcFactor, UncertaintyClass};
use crate::nncontroller::{
    estimate_epsilon, forward, jacobian_box_refined, EpsilonFit, EpsilonKind, MlpController,
    NnError,
};
use crate::simkit::{simulate_closed_loop, ClosedLoop, FeedbackMode, SimError, Trajectory};
use crate::sysmodels::{LpvParameterBox, StateSpace};

/// Mission constants.
pub const P0: [f64; 3] = [-5632.2, 709.25, 6190.5];
pub const V0: [f64; 3] = [206.48, -26.006, -103.51];
pub const A0: [f64; 3] = [-2.1124, 0.24947, -2.6404];
pub const M0_KG: f64 = 600.3;
pub const S_REF_M2: f64 = 5.137426149499100;
pub const G_MARS: [f64; 3] = [0.0, 0.0, 3.725258];
pub const THRUST_MAX_N: f64 = 3600.0;
pub const THROTTLE_MIN: f64 = 0.30;
pub const THROTTLE_MAX: f64 = 1.00;
pub const RHO_KGM3: f64 = 0.023;
pub const C_D: f64 = 2.0;
/// Engine exhaust velocity V_e = g0 * Isp.
pub const G0: f64 = 9.80665;
pub const ISP_S: f64 = 225.0;
/// Structural mass floor; burning below it is a failure.
pub const DRY_MASS_KG: f64 = 350.0;
/// Worst-case constant head wind magnitude, m/s.
pub const WIND_DEFAULT: [f64; 3] = [-20.0, 0.0, 0.0];
/// Drag linearization of the reference model, per axis.
pub const A_DIAG: [f64; 3] = [-0.0087, -0.0075, -0.0077];
/// Guidance time-to-go floor; the command is frozen below it.
pub const TGO_FLOOR_S: f64 = 3.0;
/// Default simulation step, s.
pub const DT: f64 = 0.05;
/// Declared speed envelope of the drag-residual sector, m/s.
pub const SPEED_ENVELOPE: (f64, f64) = (6.0, 30.0);

/// Printed per-axis drag-residual sector pairs, normalized to (min, max).
pub const DELTA_SECTORS: [(f64, f64); 3] =
    [(-0.003, 0.008), (-0.004, 0.013), (-0.004, 0.006)];

const NET_X: &str = include_str!("assets/apollo_axis0_weights.json");
const NET_Y: &str = include_str!("assets/apollo_axis1_weights.json");
const NET_Z: &str = include_str!("assets/apollo_axis2_weights.json");

#[derive(Debug, Error)]
pub enum ApolloError {
    #[error("no positive time-to-go from this state")]
    NoPositiveTgo,
    #[error("time-to-go must be positive, got {0}")]
    NonPositiveTgo(f64),
    #[error("fuel exhausted: mass {0} at the structural floor")]
    MassDepleted(f64),
    #[error("speed {0} outside the declared envelope")]
    DomainExceeded(f64),
    #[error(transparent)]
    Certify(#[from] CertifyError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Nn(#[from] NnError),
}

/// Landing boundary conditions.
#[derive(Debug, Clone)]
pub struct Target {
    pub r_t: Vector3<f64>,
    pub v_t: Vector3<f64>,
    pub a_t: Vector3<f64>,
    pub j_t: Vector3<f64>,
    pub s_t: Vector3<f64>,
}

/// Soft-landing defaults: zero position, gentle sink rate, a small upward
/// commanded deceleration at touchdown.
pub fn default_target() -> Target {
    Target {
        r_t: Vector3::zeros(),
        v_t: Vector3::new(0.0, 0.0, -1.0),
        a_t: Vector3::new(0.0, 0.0, 0.60),
        j_t: Vector3::zeros(),
        s_t: Vector3::zeros(),
    }
}

/// Time-to-go from the vertical channel. Quadratic-in-t_go branch for a
/// nonzero vertical target acceleration, linear branch otherwise.
pub fn apollo_tgo(r: &Vector3<f64>, v: &Vector3<f64>, target: &Target) -> Result<f64, ApolloError> {
    let az = target.a_t.z;
    if az.abs() > 0.0 {
        let lead = (2.0 * target.v_t.z + v.z) / az;
        let disc = lead * lead + 6.0 * (r.z - target.r_t.z) / az;
        if disc < 0.0 {
            return Err(ApolloError::NoPositiveTgo);
        }
        let tgo = lead + disc.sqrt();
        if tgo <= 0.0 {
            return Err(ApolloError::NoPositiveTgo);
        }
        Ok(tgo)
    } else {
        let denom = v.z + 2.0 * target.v_t.z;
        if denom.abs() < 1e-30 {
            return Err(ApolloError::NoPositiveTgo);
        }
        let tgo = 3.0 * (target.r_t.z - r.z) / denom;
        if tgo <= 0.0 {
            return Err(ApolloError::NoPositiveTgo);
        }
        Ok(tgo)
    }
}

/// Acceleration-profile coefficients from the target boundary conditions.
pub fn apollo_acmd_coeffs(
    r: &Vector3<f64>,
    v: &Vector3<f64>,
    target: &Target,
    tgo: f64,
) -> Result<(Vector3<f64>, Vector3<f64>, Vector3<f64>), ApolloError> {
    if tgo <= 0.0 {
        return Err(ApolloError::NonPositiveTgo(tgo));
    }
    let dr = target.r_t - r;
    let c0 = target.a_t - 6.0 * (target.v_t + v) / tgo + 12.0 * dr / (tgo * tgo);
    let c1 = -6.0 * target.a_t / tgo + 6.0 * (5.0 * target.v_t + 3.0 * v) / (tgo * tgo)
        - 48.0 * dr / (tgo * tgo * tgo);
    let c2 = 6.0 * target.a_t / (tgo * tgo) - 12.0 * (2.0 * target.v_t + v) / (tgo * tgo * tgo)
        + 36.0 * dr / (tgo * tgo * tgo * tgo);
    Ok((c0, c1, c2))
}

/// Commanded total acceleration now: the profile evaluated at the current
/// instant, i.e. its constant coefficient.
pub fn apollo_acmd(
    r: &Vector3<f64>,
    v: &Vector3<f64>,
    target: &Target,
    tgo: f64,
) -> Result<Vector3<f64>, ApolloError> {
    apollo_acmd_coeffs(r, v, target, tgo).map(|(c0, _, _)| c0)
}

/// Reference position at a given time-to-go (diagnostic only: the command
/// path never uses jerk and snap).
pub fn reference_position(target: &Target, tgo: f64) -> Vector3<f64> {
    target.r_t + target.v_t * tgo + target.a_t * (tgo * tgo / 2.0)
        + target.j_t * (tgo * tgo * tgo / 6.0)
        + target.s_t * (tgo * tgo * tgo * tgo / 24.0)
}

/// Drag acceleration on the vehicle at fluid-relative velocity `v_rel`.
pub fn drag_accel(v_rel: &Vector3<f64>, mass: f64) -> Vector3<f64> {
    let speed = v_rel.norm();
    -0.5 * RHO_KGM3 * C_D * S_REF_M2 / mass * speed * v_rel
}

/// Engine force realizing a desired total acceleration command, with the
/// throttle clamp applied to the magnitude (direction preserved).
pub fn thrust_from_accel_cmd(u_cmd: &Vector3<f64>, mass: f64) -> Vector3<f64> {
    let g = Vector3::new(0.0, 0.0, -G_MARS[2]);
    let f_raw = mass * (u_cmd - g);
    let f_mag = f_raw.norm();
    let f_min = THROTTLE_MIN * THRUST_MAX_N;
    let f_max = THROTTLE_MAX * THRUST_MAX_N;
    if f_mag < 1e-12 {
        return Vector3::new(0.0, 0.0, f_min);
    }
    let clamped = f_mag.clamp(f_min, f_max);
    f_raw * (clamped / f_mag)
}

/// Point-mass translational dynamics with gravity, drag opposing the
/// fluid-relative velocity, and fuel depletion. State (r, v, m).
pub fn apollo_dynamics(
    state: &DVector<f64>,
    thrust_force: &Vector3<f64>,
    wind: &Vector3<f64>,
) -> Result<DVector<f64>, ApolloError> {
    let v = Vector3::new(state[3], state[4], state[5]);
    let m = state[6];
    if m <= DRY_MASS_KG {
        return Err(ApolloError::MassDepleted(m));
    }
    let g = Vector3::new(0.0, 0.0, -G_MARS[2]);
    let a = g + thrust_force / m + drag_accel(&(v - wind), m);
    let mdot = -thrust_force.norm() / (G0 * ISP_S);
    Ok(DVector::from_vec(vec![v.x, v.y, v.z, a.x, a.y, a.z, mdot]))
}

/// Reference model field on (r̂, v̂): dr̂ = v̂, dv̂ = a v̂ + û.
pub fn apollo_reference(state: &DVector<f64>, u: &Vector3<f64>) -> DVector<f64> {
    DVector::from_vec(vec![
        state[3],
        state[4],
        state[5],
        A_DIAG[0] * state[3] + u.x,
        A_DIAG[1] * state[4] + u.y,
        A_DIAG[2] * state[5] + u.z,
    ])
}

/// Drag-model residual against the diagonal linearization, per axis, with
/// the declared speed envelope enforced.
pub fn apollo_delta(v: &Vector3<f64>) -> Result<Vector3<f64>, ApolloError> {
    let speed = v.norm();
    if speed < SPEED_ENVELOPE.0 - 1e-9 || speed > SPEED_ENVELOPE.1 + 1e-9 {
        return Err(ApolloError::DomainExceeded(speed));
    }
    Ok(apollo_delta_raw(v))
}

/// Residual without the envelope check (signal extraction along runs).
pub fn apollo_delta_raw(v: &Vector3<f64>) -> Vector3<f64> {
    let drag = drag_accel(v, M0_KG);
    Vector3::new(
        drag.x - A_DIAG[0] * v.x,
        drag.y - A_DIAG[1] * v.y,
        drag.z - A_DIAG[2] * v.z,
    )
}

pub fn declared_delta_class(axis: usize) -> UncertaintyClass {
    let (alpha, beta) = DELTA_SECTORS[axis];
    UncertaintyClass::Sector {
        alpha: vec![alpha],
        beta: vec![beta],
        domain: LpvParameterBox::new(vec![SPEED_ENVELOPE.0], vec![SPEED_ENVELOPE.1]).unwrap(),
    }
}

/// Re-fit the diagonal drag linearization from velocity samples:
/// per axis the least-squares slope of drag acceleration against velocity.
pub fn fit_drag_linearization(v_samples: &[Vector3<f64>]) -> [f64; 3] {
    let mut num = [0.0; 3];
    let mut den = [0.0; 3];
    for v in v_samples {
        let d = drag_accel(v, M0_KG);
        let dv = [d.x, d.y, d.z];
        let vv = [v.x, v.y, v.z];
        for ax in 0..3 {
            num[ax] += dv[ax] * vv[ax];
            den[ax] += vv[ax] * vv[ax];
        }
    }
    let mut out = [0.0; 3];
    for ax in 0..3 {
        out[ax] = if den[ax] > 0.0 { num[ax] / den[ax] } else { 0.0 };
    }
    out
}

/// Classical guidance loop command: total acceleration from the polynomial
/// profile with the time-to-go floor.
pub fn guidance_command(r: &Vector3<f64>, v: &Vector3<f64>, target: &Target) -> Vector3<f64> {
    let tgo = apollo_tgo(r, v, target)
        .unwrap_or(TGO_FLOOR_S)
        .max(TGO_FLOOR_S);
    apollo_acmd(r, v, target, tgo).expect("tgo is positive")
}

/// One sampled state of the classical-guidance descent.
#[derive(Debug, Clone)]
pub struct NominalSample {
    pub t: f64,
    pub r: Vector3<f64>,
    pub v: Vector3<f64>,
    pub mass: f64,
    pub tgo: f64,
    /// Reference-model input realizing the guidance command: û = a_cmd − a·v.
    pub u_ref: Vector3<f64>,
}

/// Full-descent classical run from the mission initial conditions,
/// integrated until touchdown.
pub fn nominal_descent(wind: &Vector3<f64>) -> Vec<NominalSample> {
    let target = default_target();
    let mut state = DVector::from_vec(vec![
        P0[0], P0[1], P0[2], V0[0], V0[1], V0[2], M0_KG,
    ]);
    let mut out = Vec::new();
    let mut t = 0.0;
    let max_steps = 200_000;
    for _ in 0..max_steps {
        let r = Vector3::new(state[0], state[1], state[2]);
        let v = Vector3::new(state[3], state[4], state[5]);
        let tgo = apollo_tgo(&r, &v, &target)
            .unwrap_or(TGO_FLOOR_S)
            .max(TGO_FLOOR_S);
        let cmd = apollo_acmd(&r, &v, &target, tgo).expect("positive tgo");
        let u_ref = Vector3::new(
            cmd.x - A_DIAG[0] * v.x,
            cmd.y - A_DIAG[1] * v.y,
            cmd.z - A_DIAG[2] * v.z,
        );
        out.push(NominalSample {
            t,
            r,
            v,
            mass: state[6],
            tgo,
            u_ref,
        });
        if r.z <= 0.5 {
            break;
        }
        let field = |_tt: f64, x: &DVector<f64>| {
            let rr = Vector3::new(x[0], x[1], x[2]);
            let vv = Vector3::new(x[3], x[4], x[5]);
            let cmd = guidance_command(&rr, &vv, &target);
            let f = thrust_from_accel_cmd(&cmd, x[6]);
            apollo_dynamics(x, &f, wind).expect("mass above floor")
        };
        let k1 = field(t, &state);
        let k2 = field(t + DT / 2.0, &(&state + &k1 * (DT / 2.0)));
        let k3 = field(t + DT / 2.0, &(&state + &k2 * (DT / 2.0)));
        let k4 = field(t + DT, &(&state + &k3 * DT));
        state += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (DT / 6.0);
        t += DT;
    }
    out
}

/// Quadratic surrogate of the guidance-derived reference input on one axis:
/// û_i ≈ q(r_i, v_i) with q a full quadratic in two variables.
#[derive(Debug, Clone)]
pub struct QuadTeacher {
    /// Coefficients of [1, r, v, r², r·v, v²] on normalized inputs.
    pub coeffs: [f64; 6],
    pub r_scale: f64,
    pub v_scale: f64,
}

impl QuadTeacher {
    pub fn eval(&self, r: f64, v: f64) -> f64 {
        let rn = r / self.r_scale;
        let vn = v / self.v_scale;
        let f = [1.0, rn, vn, rn * rn, rn * vn, vn * vn];
        f.iter().zip(self.coeffs.iter()).map(|(a, b)| a * b).sum()
    }

    /// Least-squares fit on (r, v, û) triples with mild ridge damping.
    pub fn fit(samples: &[(f64, f64, f64)], r_scale: f64, v_scale: f64) -> QuadTeacher {
        let n = samples.len();
        let mut a = DMatrix::zeros(n, 6);
        let mut b = DVector::zeros(n);
        for (k, &(r, v, u)) in samples.iter().enumerate() {
            let rn = r / r_scale;
            let vn = v / v_scale;
            let row = [1.0, rn, vn, rn * rn, rn * vn, vn * vn];
            for (j, val) in row.iter().enumerate() {
                a[(k, j)] = *val;
            }
            b[k] = u;
        }
        let mut ata = a.transpose() * &a;
        for i in 0..6 {
            ata[(i, i)] += 1e-9 * n as f64;
        }
        let atb = a.transpose() * b;
        let sol = ata.lu().solve(&atb).expect("normal equations solvable");
        let mut coeffs = [0.0; 6];
        for i in 0..6 {
            coeffs[i] = sol[i];
        }
        QuadTeacher {
            coeffs,
            r_scale,
            v_scale,
        }
    }
}

/// Terminal-phase data derived deterministically from the nominal descent.
pub struct TerminalPhase {
    /// Shared initial state of the certified comparison (r, v, m).
    pub gate_state: DVector<f64>,
    pub gate_time: f64,
    /// Per-axis (r_i, v_i) boxes covering the terminal funnel.
    pub boxes: [LpvParameterBox; 3],
    pub teachers: [QuadTeacher; 3],
    /// Run length from the gate.
    pub t_final: f64,
}

/// Gate condition: the certified comparison starts on final approach, when
/// the nominal time-to-go first drops to this value.
pub const GATE_TGO: f64 = 21.0;

pub fn terminal_phase(nominal: &[NominalSample]) -> TerminalPhase {
    let gate_idx = nominal
        .iter()
        .position(|s| s.tgo <= GATE_TGO)
        .expect("nominal descent reaches the gate time-to-go");
    let gate = &nominal[gate_idx];
    let seg = &nominal[gate_idx..];
    let mut boxes = Vec::with_capacity(3);
    let mut teachers = Vec::with_capacity(3);
    for ax in 0..3 {
        let pick = |s: &NominalSample| -> (f64, f64, f64) {
            ((s.r[ax]), (s.v[ax]), (s.u_ref[ax]))
        };
        let rs: Vec<f64> = seg.iter().map(|s| pick(s).0).collect();
        let vs: Vec<f64> = seg.iter().map(|s| pick(s).1).collect();
        let r_lo = rs.iter().cloned().fold(f64::INFINITY, f64::min);
        let r_hi = rs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let v_lo = vs.iter().cloned().fold(f64::INFINITY, f64::min);
        let v_hi = vs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let r_pad = 0.15 * (r_hi - r_lo).max(10.0);
        let v_pad = 0.15 * (v_hi - v_lo).max(2.0);
        let bx = LpvParameterBox::new(
            vec![r_lo - r_pad, v_lo - v_pad],
            vec![r_hi + r_pad, v_hi + v_pad],
        )
        .unwrap();
        let r_scale = bx.upper[0].abs().max(bx.lower[0].abs()).max(1.0);
        let v_scale = bx.upper[1].abs().max(bx.lower[1].abs()).max(1.0);
        // on-manifold samples plus jittered off-manifold coverage so the
        // quadratic is well-posed in both variables
        let mut samples = Vec::new();
        let target = default_target();
        for s in seg {
            samples.push(pick(s));
            for (dr, dv) in [
                (0.08_f64, 0.0_f64),
                (-0.08, 0.0),
                (0.0, 0.08),
                (0.0, -0.08),
                (0.06, 0.06),
                (-0.06, -0.06),
            ] {
                let mut r = s.r;
                let mut v = s.v;
                r[ax] += dr * r_scale;
                v[ax] += dv * v_scale;
                let tgo = apollo_tgo(&r, &v, &target)
                    .unwrap_or(TGO_FLOOR_S)
                    .max(TGO_FLOOR_S);
                if let Ok(cmd) = apollo_acmd(&r, &v, &target, tgo) {
                    samples.push((r[ax], v[ax], cmd[ax] - A_DIAG[ax] * v[ax]));
                }
            }
        }
        teachers.push(QuadTeacher::fit(&samples, r_scale, v_scale));
        boxes.push(bx);
    }
    let t_final = (nominal.last().unwrap().t - gate.t + 6.0).max(10.0);
    TerminalPhase {
        gate_state: DVector::from_vec(vec![
            gate.r.x, gate.r.y, gate.r.z, gate.v.x, gate.v.y, gate.v.z, gate.mass,
        ]),
        gate_time: gate.t,
        boxes: [boxes[0].clone(), boxes[1].clone(), boxes[2].clone()],
        teachers: [
            teachers[0].clone(),
            teachers[1].clone(),
            teachers[2].clone(),
        ],
        t_final,
    }
}

/// Per-axis error-system plant: A = [[0,1],[0,a_i]], disturbance and
/// control both entering the velocity row, outputs (r_i, v_i).
pub fn axis_error_plant(axis: usize) -> StateSpace {
    StateSpace::new(
        DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, A_DIAG[axis]]),
        DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 1.0, 1.0]),
        DMatrix::identity(2, 2),
        DMatrix::zeros(2, 2),
        1,
    )
    .unwrap()
}

/// The loaded fixture.
pub struct ApolloScenario {
    pub nets: [MlpController; 3],
    pub terminal: TerminalPhase,
    pub nominal: Vec<NominalSample>,
    /// Declared residual sectors per axis (normalized, inflated).
    pub eps_sectors: [(f64, f64); 3],
    pub wind: Vector3<f64>,
}

/// Sector floor so the declared residual class always straddles zero.
const EPS_SECTOR_FLOOR: f64 = 2e-4;

impl ApolloScenario {
    pub fn load() -> Self {
        let wind = Vector3::new(WIND_DEFAULT[0], WIND_DEFAULT[1], WIND_DEFAULT[2]);
        let nominal = nominal_descent(&wind);
        let terminal = terminal_phase(&nominal);
        let nets = [
            MlpController::from_json_str(NET_X).expect("axis 0 weights parse"),
            MlpController::from_json_str(NET_Y).expect("axis 1 weights parse"),
            MlpController::from_json_str(NET_Z).expect("axis 2 weights parse"),
        ];
        let mut eps_sectors = [(0.0, 0.0); 3];
        for ax in 0..3 {
            eps_sectors[ax] = Self::estimate_eps_sector(&nets[ax], &terminal, ax)
                .expect("residual sector estimation");
        }
        Self {
            nets,
            terminal,
            nominal,
            eps_sectors,
            wind,
        }
    }

    /// Residual sector of one axis net against its teacher, anchored at the
    /// velocity input, estimated away from the velocity sign change.
    fn estimate_eps_sector(
        net: &MlpController,
        terminal: &TerminalPhase,
        axis: usize,
    ) -> Result<(f64, f64), ApolloError> {
        let bx = &terminal.boxes[axis];
        // keep the anchor away from zero: restrict the v-range to the side
        // the descent actually sweeps
        let (v_lo, v_hi) = (bx.lower[1], bx.upper[1]);
        let span = v_hi - v_lo;
        let (v_lo, v_hi) = if v_hi.abs() > v_lo.abs() {
            (v_lo.max(0.08 * span), v_hi)
        } else {
            (v_lo, v_hi.min(-0.08 * span))
        };
        let est_box = LpvParameterBox::new(vec![bx.lower[0], v_lo], vec![bx.upper[0], v_hi])
            .map_err(|e| ApolloError::Sim(SimError::GridMismatch(e.to_string())))?;
        let teacher = terminal.teachers[axis].clone();
        let bound = estimate_epsilon(
            net,
            move |p: &DVector<f64>| DVector::from_vec(vec![teacher.eval(p[0], p[1])]),
            &est_box,
            100,
            EpsilonFit::Sector { anchor_input: 1 },
        )?;
        match bound.kind {
            EpsilonKind::Sector { alpha, beta, .. } => Ok((
                alpha[0].min(-EPS_SECTOR_FLOOR),
                beta[0].max(EPS_SECTOR_FLOOR),
            )),
            _ => unreachable!("sector fit requested"),
        }
    }

    pub fn control_axis(&self, axis: usize, r: f64, v: f64) -> f64 {
        forward(&self.nets[axis], &DVector::from_vec(vec![r, v])).expect("net evaluation")[0]
    }

    /// Full vector control u(r, v) from the three axis nets.
    pub fn control(&self, r: &Vector3<f64>, v: &Vector3<f64>) -> Vector3<f64> {
        Vector3::new(
            self.control_axis(0, r.x, v.x),
            self.control_axis(1, r.y, v.y),
            self.control_axis(2, r.z, v.z),
        )
    }

    /// Combined multiplier for one axis: drag-residual sector on v plus
    /// residual sector on v̂.
    pub fn axis_multiplier(&self, axis: usize) -> (IqcFactor, Vec<(usize, usize)>) {
        let (da, db) = DELTA_SECTORS[axis];
        let sector_delta = sector_iqc(
            &DVector::from_vec(vec![da]),
            &DVector::from_vec(vec![db]),
        )
        .unwrap()
        .with_p_selector(&DMatrix::from_row_slice(1, 2, &[0.0, 1.0]))
        .unwrap();
        let (ea, eb) = self.eps_sectors[axis];
        let sector_eps = sector_iqc(
            &DVector::from_vec(vec![ea]),
            &DVector::from_vec(vec![eb]),
        )
        .unwrap()
        .with_p_selector(&DMatrix::from_row_slice(1, 2, &[0.0, 1.0]))
        .unwrap();
        let blocks = vec![
            (0, sector_delta.m.nrows()),
            (sector_delta.m.nrows(), sector_eps.m.nrows()),
        ];
        (combine(&[sector_delta, sector_eps]).unwrap(), blocks)
    }

    /// Vertex family of one axis from the refined Jacobian enclosure of its
    /// net over the terminal box.
    pub fn axis_vertices(&self, axis: usize) -> Result<Vec<ExtendedSystem>, ApolloError> {
        let iv = jacobian_box_refined(&self.nets[axis], &self.terminal.boxes[axis], 16)?;
        let corners = crate::nncontroller::vertices(&iv, crate::nncontroller::VERTEX_CAP)?;
        let plant = axis_error_plant(axis);
        let err = build_error_system(&plant, &plant).unwrap();
        let (xi, _) = self.axis_multiplier(axis);
        let mut out = Vec::with_capacity(corners.len());
        for lam in corners {
            let gain = controller_error_gain(&lam, &plant)
                .map_err(|e| ApolloError::Sim(SimError::GridMismatch(e.to_string())))?;
            out.push(
                build_extended_routed(&err, &gain, &xi, DeltaRouting::ErrorOutput)
                    .map_err(|e| ApolloError::Sim(SimError::GridMismatch(e.to_string())))?,
            );
        }
        Ok(out)
    }

    /// Certified worst-case RISE of one axis and output channel
    /// (0 = position, 1 = velocity).
    pub fn certify_axis(
        &self,
        axis: usize,
        output_row: usize,
        cfg: &CertifyConfig,
    ) -> Result<Certificate, ApolloError> {
        let (xi, blocks) = self.axis_multiplier(axis);
        let vertices: Vec<ExtendedSystem> = self
            .axis_vertices(axis)?
            .iter()
            .map(|e| e.with_output_row(output_row))
            .collect();
        let bx = &self.terminal.boxes[axis];
        let r_scale = bx.upper[0].abs().max(bx.lower[0].abs()).max(1.0);
        let v_scale = bx.upper[1].abs().max(bx.lower[1].abs()).max(1.0);
        let cfg = CertifyConfig {
            state_scale: Some(vec![(0.05 * r_scale).recip(), (0.05 * v_scale).recip()]),
            ..cfg.clone()
        };
        Ok(certify_rise(&vertices, &xi.m, &blocks, &cfg)?)
    }

    /// Terminal comparison run: true lander under the axis nets against the
    /// reference model closed by the quadratic surrogates, from the shared
    /// gate state.
    pub fn simulate_terminal(&self) -> Result<Trajectory, ApolloError> {
        self.simulate_from(self.terminal.gate_state.clone(), self.terminal.t_final)
    }

    pub fn simulate_from(&self, x0: DVector<f64>, t_final: f64) -> Result<Trajectory, ApolloError> {
        let wind = self.wind;
        let plant = move |_t: f64, x: &DVector<f64>, u: &DVector<f64>| {
            let cmd = Vector3::new(u[0], u[1], u[2]);
            let f = thrust_from_accel_cmd(&cmd, x[6]);
            match apollo_dynamics(x, &f, &wind) {
                Ok(d) => d,
                Err(_) => DVector::from_element(7, f64::NAN),
            }
        };
        let output = |x: &DVector<f64>| {
            DVector::from_vec(vec![x[0], x[1], x[2], x[3], x[4], x[5]])
        };
        let controller = |_t: f64, x: &DVector<f64>| {
            let r = Vector3::new(x[0], x[1], x[2]);
            let v = Vector3::new(x[3], x[4], x[5]);
            let u = self.control(&r, &v);
            DVector::from_vec(vec![u.x, u.y, u.z])
        };
        let reference = |_t: f64, xh: &DVector<f64>, u: &DVector<f64>| {
            let mut d = apollo_reference(xh, &Vector3::new(u[0], u[1], u[2]));
            // carry the frozen mass coordinate
            d = d.insert_row(6, 0.0);
            d
        };
        let ideal = |_t: f64, xh: &DVector<f64>| {
            let u = Vector3::new(
                self.terminal.teachers[0].eval(xh[0], xh[3]),
                self.terminal.teachers[1].eval(xh[1], xh[4]),
                self.terminal.teachers[2].eval(xh[2], xh[5]),
            );
            DVector::from_vec(vec![u.x, u.y, u.z])
        };
        let cl = ClosedLoop {
            plant: &plant,
            plant_output: &output,
            controller: &controller,
            reference: &reference,
            reference_output: &output,
            ideal_controller: &ideal,
        };
        Ok(simulate_closed_loop(&cl, &x0, t_final, DT, FeedbackMode::Continuous)?)
    }

    /// Extract per-axis uncertainty-channel signals from a terminal run.
    pub fn axis_channel_signals(&self, traj: &Trajectory, axis: usize) -> AxisChannels {
        let mut p_delta = Vec::with_capacity(traj.len());
        let mut q_delta = Vec::with_capacity(traj.len());
        let mut p_eps = Vec::with_capacity(traj.len());
        let mut q_eps = Vec::with_capacity(traj.len());
        for k in 0..traj.len() {
            let v = Vector3::new(traj.y[k][3], traj.y[k][4], traj.y[k][5]);
            let delta = apollo_delta_raw(&v);
            p_delta.push(DVector::from_vec(vec![v[axis]]));
            q_delta.push(DVector::from_vec(vec![delta[axis]]));
            let (rh, vh) = (traj.yhat[k][axis], traj.yhat[k][3 + axis]);
            let eps =
                self.control_axis(axis, rh, vh) - self.terminal.teachers[axis].eval(rh, vh);
            p_eps.push(DVector::from_vec(vec![vh]));
            q_eps.push(DVector::from_vec(vec![eps]));
        }
        AxisChannels {
            p_delta,
            q_delta,
            p_eps,
            q_eps,
        }
    }

    /// Per-axis empirical RISE of one output channel on a run, normalized
    /// by the axis-pair energy the certificates bound against.
    pub fn axis_empirical_rise(
        &self,
        traj: &Trajectory,
        axis: usize,
        output_row: usize,
    ) -> f64 {
        let t = &traj.t;
        let comp = |ys: &Vec<DVector<f64>>, idx: usize| -> Vec<DVector<f64>> {
            ys.iter().map(|v| DVector::from_vec(vec![v[idx]])).collect()
        };
        let pair = |ys: &Vec<DVector<f64>>| -> Vec<DVector<f64>> {
            ys.iter()
                .map(|v| DVector::from_vec(vec![v[axis], v[3 + axis]]))
                .collect()
        };
        let idx = if output_row == 0 { axis } else { 3 + axis };
        let zy = comp(&traj.y, idx);
        let zyh = comp(&traj.yhat, idx);
        let z: Vec<DVector<f64>> = zy.iter().zip(zyh.iter()).map(|(a, b)| a - b).collect();
        let nz = crate::sysmodels::SignalNorms::from_samples(t, &z).unwrap();
        let ny = crate::sysmodels::SignalNorms::from_samples(t, &pair(&traj.y)).unwrap();
        let nyh = crate::sysmodels::SignalNorms::from_samples(t, &pair(&traj.yhat)).unwrap();
        nz.l2 / (ny.l2 * ny.l2 + nyh.l2 * nyh.l2).sqrt()
    }
}

/// Per-axis channel signals of one run.
pub struct AxisChannels {
    pub p_delta: Vec<DVector<f64>>,
    pub q_delta: Vec<DVector<f64>>,
    pub p_eps: Vec<DVector<f64>>,
    pub q_eps: Vec<DVector<f64>>,
}
