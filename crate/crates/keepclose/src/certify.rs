//! Worst-case RISE and SSE certificates.
//!
//! For a vertex family of extended systems, a certificate is one shared
//! storage matrix P ⪰ 0 and multiplier scaling λ > 0 making the dissipation
//! LMI hold at every vertex simultaneously:
//!
//! ```text
//! [ PA+AᵀP  PB₁  PB₂ ]        1  [C₂ᵀ ]                 [C₁ᵀ ]
//! [ B₁ᵀP     0    0  ]  +  ───── [D₂₁ᵀ][C₂ D₂₁ D₂₂]  + λ[D₁₁ᵀ] M [C₁ D₁₁ D₁₂]  ≺ 0
//! [ B₂ᵀP     0   −I  ]      γ²   [D₂₂ᵀ]                 [D₁₂ᵀ]
//! ```
//!
//! Feasibility at a level γ certifies the RISE bound; the smallest such γ is
//! found by bisection (the 1/γ² term shrinks with growing γ, so feasibility
//! is monotone). The SSE certificate drops the 1/γ² term and adds the Schur
//! block [[P, C₂ᵀ],[C₂, σ²I]] ≻ 0; σ² enters affinely, so a direct
//! linear-objective solve and the bisection bracket can cross-check each
//! other.
//!
//! λ is a single scalar by default; when the single-λ problem is
//! infeasible the per-factor block-diagonal scaling (strictly more
//! expressive, still convex) is tried before declaring a level infeasible.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;
use thiserror::Error;

use crate::errorsys::{DeltaRouting, ExtendedSystem};
use crate::lmi::{self, Feasibility, LmiProblem, Sense, Witness};

#[derive(Debug, Error)]
pub enum CertifyError {
    #[error("gamma must be positive, got {0}")]
    NonPositiveGamma(f64),
    #[error("sigma must be positive, got {0}")]
    NonPositiveSigma(f64),
    #[error("gamma {0} outside (0, 1); the tube factor needs gamma < 1")]
    GammaOutOfRange(f64),
    #[error("no certificate in range: infeasible at upper level {0}")]
    InfeasibleAtUpper(f64),
    #[error("empty vertex list")]
    NoVertices,
    #[error("trajectory grids disagree: {0}")]
    GridMismatch(String),
    #[error(transparent)]
    Lmi(#[from] lmi::LmiError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Metric {
    Rise,
    Sse,
}

/// Certified level with its witness and search trace.
#[derive(Debug, Clone)]
pub struct Certificate {
    pub metric: Metric,
    pub level: f64,
    pub witness: Witness,
    pub vertices: usize,
    pub bisection_trace: Vec<(f64, bool)>,
    pub per_factor_lambda: bool,
}

#[derive(Debug, Serialize)]
struct CertificateJson {
    metric: Metric,
    level: f64,
    factor_2g_over_1mg: Option<f64>,
    vertices: usize,
    bisection_trace: Vec<(f64, bool)>,
    witness_eigs: Vec<f64>,
}

impl Certificate {
    /// Deterministic JSON rendering with a fixed field order.
    pub fn to_json_string(&self) -> String {
        let factor = match self.metric {
            Metric::Rise if self.level < 1.0 => {
                Some(2.0 * self.level / (1.0 - self.level))
            }
            _ => None,
        };
        let j = CertificateJson {
            metric: self.metric,
            level: self.level,
            factor_2g_over_1mg: factor,
            vertices: self.vertices,
            bisection_trace: self.bisection_trace.clone(),
            witness_eigs: lmi::sym_eigs(&self.witness.p),
        };
        serde_json::to_string_pretty(&j).unwrap()
    }
}

/// Containment radius around the reference output implied by a RISE level.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct TubeBound {
    pub factor: f64,
    pub reference_norm: f64,
    pub bound: f64,
}

/// factor = 2γ/(1−γ); requires 0 < γ < 1.
pub fn tube_bound(gamma: f64, ref_norm: f64) -> Result<TubeBound, CertifyError> {
    if gamma <= 0.0 || gamma >= 1.0 {
        return Err(CertifyError::GammaOutOfRange(gamma));
    }
    let factor = 2.0 * gamma / (1.0 - gamma);
    Ok(TubeBound {
        factor,
        reference_norm: ref_norm,
        bound: factor * ref_norm,
    })
}

/// Search configuration shared by both certificates.
#[derive(Debug, Clone)]
pub struct CertifyConfig {
    pub level_range: (f64, f64),
    pub tol_bisect: f64,
    pub max_iters: usize,
    /// Diagonal state rescaling applied before solving (conditioning for
    /// fixtures whose states differ by orders of magnitude).
    pub state_scale: Option<Vec<f64>>,
}

impl Default for CertifyConfig {
    fn default() -> Self {
        Self {
            level_range: (1e-3, 0.9),
            tol_bisect: 1e-4,
            max_iters: 40,
            state_scale: None,
        }
    }
}

fn stacked_output(
    c: &DMatrix<f64>,
    d1: &DMatrix<f64>,
    d2: &DMatrix<f64>,
) -> DMatrix<f64> {
    let rows = c.nrows();
    let cols = c.ncols() + d1.ncols() + d2.ncols();
    let mut out = DMatrix::zeros(rows, cols);
    out.view_mut((0, 0), (rows, c.ncols())).copy_from(c);
    out.view_mut((0, c.ncols()), (rows, d1.ncols())).copy_from(d1);
    out.view_mut((0, c.ncols() + d1.ncols()), (rows, d2.ncols()))
        .copy_from(d2);
    out
}

fn rescaled(ext: &ExtendedSystem, scale: &[f64]) -> ExtendedSystem {
    // chi' = T chi with T = diag(scale)
    let n = ext.n_states();
    assert_eq!(scale.len(), n);
    let t = DMatrix::from_diagonal(&DVector::from_vec(scale.to_vec()));
    let tinv = DMatrix::from_diagonal(&DVector::from_iterator(n, scale.iter().map(|s| 1.0 / s)));
    ExtendedSystem {
        acal: &t * &ext.acal * &tinv,
        b1: &t * &ext.b1,
        b2: &t * &ext.b2,
        c1: &ext.c1 * &tinv,
        c2: &ext.c2 * &tinv,
        d11: ext.d11.clone(),
        d12: ext.d12.clone(),
        d21: ext.d21.clone(),
        d22: ext.d22.clone(),
        lambda: ext.lambda.clone(),
        n_zeta: ext.n_zeta,
        n_xi: ext.n_xi,
        routing: ext.routing,
    }
}

fn unscale_witness(mut w: Witness, scale: &[f64]) -> Witness {
    // P_original = T P' T so that chi'ᵀ P' chi' = chiᵀ P chi
    let t = DMatrix::from_diagonal(&DVector::from_vec(scale.to_vec()));
    w.p = &t * &w.p * &t;
    w
}

/// One-vertex RISE LMI at fixed γ with a single multiplier scalar.
pub fn rise_lmi(
    ext: &ExtendedSystem,
    m: &DMatrix<f64>,
    gamma: f64,
) -> Result<LmiProblem, CertifyError> {
    if gamma <= 0.0 {
        return Err(CertifyError::NonPositiveGamma(gamma));
    }
    let blocks = vec![(0usize, m.nrows())];
    build_joint_problem(
        std::slice::from_ref(ext),
        m,
        &blocks,
        Some(gamma),
        SseMode::None,
    )
    .map_err(Into::into)
}

/// Both SSE LMIs at fixed σ with a single multiplier scalar.
pub fn sse_lmis(
    ext: &ExtendedSystem,
    m: &DMatrix<f64>,
    sigma: f64,
) -> Result<LmiProblem, CertifyError> {
    if sigma <= 0.0 {
        return Err(CertifyError::NonPositiveSigma(sigma));
    }
    let blocks = vec![(0usize, m.nrows())];
    build_joint_problem(
        std::slice::from_ref(ext),
        m,
        &blocks,
        None,
        SseMode::Fixed(sigma),
    )
    .map_err(Into::into)
}

#[derive(Debug, Clone, Copy)]
enum SseMode {
    /// RISE problem (1/γ² output term present, no Schur block).
    None,
    /// SSE with fixed σ² folded into the Schur block constant.
    Fixed(f64),
    /// SSE with σ² as the extra decision scalar.
    Variable,
}

/// Assemble the joint problem over all vertices with shared (P, λ).
///
/// `lambda_blocks` lists (offset, size) output blocks of M, one λ per
/// block. `gamma` is Some for the RISE family.
fn build_joint_problem(
    vertices: &[ExtendedSystem],
    m: &DMatrix<f64>,
    lambda_blocks: &[(usize, usize)],
    gamma: Option<f64>,
    sse: SseMode,
) -> Result<LmiProblem, lmi::LmiError> {
    let nchi = vertices[0].n_states();
    let has_s = matches!(sse, SseMode::Variable);
    let mut prob = LmiProblem::new(nchi, lambda_blocks.len(), has_s);
    let basis = LmiProblem::sym_basis(nchi);
    let n_vars = prob.n_vars();

    for (vi, ext) in vertices.iter().enumerate() {
        let nq = ext.n_q();
        let neta = ext.n_eta();
        let dim = nchi + nq + neta;
        let cbar1 = stacked_output(&ext.c1, &ext.d11, &ext.d12);
        let cbar2 = stacked_output(&ext.c2, &ext.d21, &ext.d22);

        // constant block: -I on the eta diagonal plus the 1/γ² output term
        let mut f0 = DMatrix::zeros(dim, dim);
        for i in 0..neta {
            f0[(nchi + nq + i, nchi + nq + i)] = -1.0;
        }
        if let Some(g) = gamma {
            f0 += cbar2.transpose() * &cbar2 / (g * g);
        }

        let mut coeffs: Vec<DMatrix<f64>> = Vec::with_capacity(n_vars);
        for e in &basis {
            let mut c = DMatrix::zeros(dim, dim);
            let ea = e * &ext.acal;
            c.view_mut((0, 0), (nchi, nchi))
                .copy_from(&(&ea + ea.transpose()));
            let eb1 = e * &ext.b1;
            let eb2 = e * &ext.b2;
            c.view_mut((0, nchi), (nchi, nq)).copy_from(&eb1);
            c.view_mut((nchi, 0), (nq, nchi)).copy_from(&eb1.transpose());
            c.view_mut((0, nchi + nq), (nchi, neta)).copy_from(&eb2);
            c.view_mut((nchi + nq, 0), (neta, nchi))
                .copy_from(&eb2.transpose());
            coeffs.push(c);
        }
        for &(off, size) in lambda_blocks {
            let mblock = m.view((off, off), (size, size));
            let crows: DMatrix<f64> = cbar1.rows(off, size).into();
            coeffs.push(crows.transpose() * mblock * &crows);
        }
        if has_s {
            coeffs.push(DMatrix::zeros(dim, dim));
        }
        prob.add_constraint(f0, coeffs, Sense::NegDef, format!("dissipation[{vi}]"))?;

        // Schur block for the SSE family
        if !matches!(sse, SseMode::None) {
            let nz = ext.n_z();
            let sdim = nchi + nz;
            let mut f0s = DMatrix::zeros(sdim, sdim);
            f0s.view_mut((nchi, 0), (nz, nchi)).copy_from(&ext.c2);
            f0s.view_mut((0, nchi), (nchi, nz))
                .copy_from(&ext.c2.transpose());
            if let SseMode::Fixed(sigma) = sse {
                for i in 0..nz {
                    f0s[(nchi + i, nchi + i)] = sigma * sigma;
                }
            }
            let mut coeffs_s: Vec<DMatrix<f64>> = Vec::with_capacity(n_vars);
            for e in &basis {
                let mut c = DMatrix::zeros(sdim, sdim);
                c.view_mut((0, 0), (nchi, nchi)).copy_from(e);
                coeffs_s.push(c);
            }
            for _ in lambda_blocks {
                coeffs_s.push(DMatrix::zeros(sdim, sdim));
            }
            if has_s {
                let mut c = DMatrix::zeros(sdim, sdim);
                for i in 0..nz {
                    c[(nchi + i, nchi + i)] = 1.0;
                }
                coeffs_s.push(c);
            }
            prob.add_constraint(f0s, coeffs_s, Sense::PosDef, format!("peak[{vi}]"))?;
        }
    }
    Ok(prob)
}

/// Feasibility at one level: single λ first, block-diagonal λ as fallback.
fn feasible_at(
    vertices: &[ExtendedSystem],
    m: &DMatrix<f64>,
    factor_blocks: &[(usize, usize)],
    gamma: Option<f64>,
    sse: SseMode,
) -> (Option<Witness>, bool) {
    let single = vec![(0usize, m.nrows())];
    if let Ok(prob) = build_joint_problem(vertices, m, &single, gamma, sse) {
        if let Feasibility::Feasible(w) = lmi::is_feasible(&prob) {
            return (Some(w), false);
        }
    }
    if factor_blocks.len() > 1 {
        if let Ok(prob) = build_joint_problem(vertices, m, factor_blocks, gamma, sse) {
            if let Feasibility::Feasible(w) = lmi::is_feasible(&prob) {
                return (Some(w), true);
            }
        }
    }
    (None, false)
}

/// Smallest certified RISE level over the vertex family, by bisection.
pub fn certify_rise(
    ext_vertices: &[ExtendedSystem],
    m: &DMatrix<f64>,
    factor_blocks: &[(usize, usize)],
    cfg: &CertifyConfig,
) -> Result<Certificate, CertifyError> {
    certify_level(ext_vertices, m, factor_blocks, cfg, Metric::Rise)
}

fn certify_level(
    ext_vertices: &[ExtendedSystem],
    m: &DMatrix<f64>,
    factor_blocks: &[(usize, usize)],
    cfg: &CertifyConfig,
    metric: Metric,
) -> Result<Certificate, CertifyError> {
    if ext_vertices.is_empty() {
        return Err(CertifyError::NoVertices);
    }
    let scaled: Vec<ExtendedSystem> = match &cfg.state_scale {
        Some(s) => ext_vertices.iter().map(|e| rescaled(e, s)).collect(),
        None => ext_vertices.to_vec(),
    };
    let (lo0, hi0) = cfg.level_range;
    if lo0 <= 0.0 {
        return Err(CertifyError::NonPositiveGamma(lo0));
    }
    let mode = |level: f64| match metric {
        Metric::Rise => (Some(level), SseMode::None),
        Metric::Sse => (None, SseMode::Fixed(level)),
    };
    let mut trace = Vec::new();
    let try_level = |level: f64, trace: &mut Vec<(f64, bool)>| {
        let (g, s) = mode(level);
        let (w, pf) = feasible_at(&scaled, m, factor_blocks, g, s);
        trace.push((level, w.is_some()));
        w.map(|w| (w, pf))
    };

    let Some((mut best_w, mut best_pf)) = try_level(hi0, &mut trace) else {
        return Err(CertifyError::InfeasibleAtUpper(hi0));
    };
    let mut hi = hi0;
    if let Some((w, pf)) = try_level(lo0, &mut trace) {
        // feasible already at the lower edge: bisection collapses there
        let cert_w = match &cfg.state_scale {
            Some(s) => unscale_witness(w, s),
            None => w,
        };
        return Ok(Certificate {
            metric,
            level: lo0,
            witness: cert_w,
            vertices: ext_vertices.len(),
            bisection_trace: trace,
            per_factor_lambda: pf,
        });
    }
    let mut lo = lo0;
    let mut iters = 0;
    while (hi - lo) / hi > cfg.tol_bisect && iters < cfg.max_iters {
        let mid = 0.5 * (lo + hi);
        match try_level(mid, &mut trace) {
            Some((w, pf)) => {
                hi = mid;
                best_w = w;
                best_pf = pf;
            }
            None => lo = mid,
        }
        iters += 1;
    }
    let cert_w = match &cfg.state_scale {
        Some(s) => unscale_witness(best_w, s),
        None => best_w,
    };
    Ok(Certificate {
        metric,
        level: hi,
        witness: cert_w,
        vertices: ext_vertices.len(),
        bisection_trace: trace,
        per_factor_lambda: best_pf,
    })
}

/// SSE search mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SseSearch {
    Bisect,
    Direct,
}

/// Smallest certified SSE level, either by bisection on σ or by minimizing
/// σ² directly as a linear objective.
pub fn certify_sse(
    ext_vertices: &[ExtendedSystem],
    m: &DMatrix<f64>,
    factor_blocks: &[(usize, usize)],
    cfg: &CertifyConfig,
    search: SseSearch,
) -> Result<Certificate, CertifyError> {
    match search {
        SseSearch::Bisect => certify_level(ext_vertices, m, factor_blocks, cfg, Metric::Sse),
        SseSearch::Direct => {
            if ext_vertices.is_empty() {
                return Err(CertifyError::NoVertices);
            }
            let scaled: Vec<ExtendedSystem> = match &cfg.state_scale {
                Some(s) => ext_vertices.iter().map(|e| rescaled(e, s)).collect(),
                None => ext_vertices.to_vec(),
            };
            let single = vec![(0usize, m.nrows())];
            let run = |blocks: &[(usize, usize)]| -> Option<(Witness, bool)> {
                let prob =
                    build_joint_problem(&scaled, m, blocks, None, SseMode::Variable).ok()?;
                match lmi::minimize_s(&prob) {
                    Feasibility::Feasible(w) => Some((w, blocks.len() > 1)),
                    _ => None,
                }
            };
            // per-factor scaling dominates single-λ; keep whichever gives
            // the smaller certified peak
            let cand_single = run(&single);
            let cand_pf = (factor_blocks.len() > 1)
                .then(|| run(factor_blocks))
                .flatten();
            let result = match (cand_single, cand_pf) {
                (Some(a), Some(b)) => {
                    if a.0.s.unwrap_or(f64::MAX) <= b.0.s.unwrap_or(f64::MAX) {
                        Some(a)
                    } else {
                        Some(b)
                    }
                }
                (a, b) => a.or(b),
            };
            let Some((w, pf)) = result else {
                return Err(CertifyError::InfeasibleAtUpper(cfg.level_range.1));
            };
            let sigma = w.s.expect("direct mode carries s").max(0.0).sqrt();
            if sigma > cfg.level_range.1 {
                return Err(CertifyError::InfeasibleAtUpper(cfg.level_range.1));
            }
            let level = sigma.max(cfg.level_range.0);
            let cert_w = match &cfg.state_scale {
                Some(s) => unscale_witness(w, s),
                None => w,
            };
            Ok(Certificate {
                metric: Metric::Sse,
                level,
                witness: cert_w,
                vertices: ext_vertices.len(),
                bisection_trace: vec![(level, true)],
                per_factor_lambda: pf,
            })
        }
    }
}

/// Sampled extended-system run for dissipation verification.
#[derive(Debug, Clone)]
pub struct ExtTrajectory {
    pub t: Vec<f64>,
    pub chi: Vec<DVector<f64>>,
    pub z: Vec<DVector<f64>>,
    pub eta: Vec<DVector<f64>>,
    pub r: Vec<DVector<f64>>,
}

/// Max over interior samples of dV/dt + (1/γ²)zᵀz − ηᵀη + rᵀ(λM)r, with
/// dV/dt by central differences of V = χᵀPχ.
pub fn check_dissipation(
    traj: &ExtTrajectory,
    p: &DMatrix<f64>,
    lambda: &[f64],
    lambda_blocks: &[(usize, usize)],
    gamma: f64,
    m: &DMatrix<f64>,
) -> Result<f64, CertifyError> {
    let n = traj.t.len();
    if traj.chi.len() != n || traj.z.len() != n || traj.eta.len() != n || traj.r.len() != n {
        return Err(CertifyError::GridMismatch("sample counts differ".into()));
    }
    if n < 3 {
        return Err(CertifyError::GridMismatch("need at least 3 samples".into()));
    }
    // weighted middle matrix
    let mut mw = DMatrix::zeros(m.nrows(), m.ncols());
    if lambda.len() == 1 && lambda_blocks.len() <= 1 {
        mw = m * lambda[0];
    } else {
        for (&l, &(off, size)) in lambda.iter().zip(lambda_blocks.iter()) {
            let block = m.view((off, off), (size, size)) * l;
            mw.view_mut((off, off), (size, size)).copy_from(&block);
        }
    }
    let v: Vec<f64> = traj.chi.iter().map(|c| (c.transpose() * p * c)[(0, 0)]).collect();
    let mut max_res = f64::NEG_INFINITY;
    for k in 1..n - 1 {
        let dt = traj.t[k + 1] - traj.t[k - 1];
        let vdot = (v[k + 1] - v[k - 1]) / dt;
        let zz = traj.z[k].dot(&traj.z[k]);
        let ee = traj.eta[k].dot(&traj.eta[k]);
        let rmr = (traj.r[k].transpose() * &mw * &traj.r[k])[(0, 0)];
        let res = vdot + zz / (gamma * gamma) - ee + rmr;
        max_res = max_res.max(res);
    }
    Ok(max_res)
}

/// Trapezoid-integrated dissipation inequality over [0, T]:
/// V(χ(T)) + λ∫rᵀMr ≤ ∫ηᵀη − (1/γ²)∫zᵀz, returned as the left side minus
/// the right side (≤ 0 when the certificate holds).
pub fn integrated_dissipation_gap(
    traj: &ExtTrajectory,
    p: &DMatrix<f64>,
    lambda: &[f64],
    lambda_blocks: &[(usize, usize)],
    gamma: f64,
    m: &DMatrix<f64>,
) -> Result<f64, CertifyError> {
    let n = traj.t.len();
    if traj.chi.len() != n || traj.z.len() != n || traj.eta.len() != n || traj.r.len() != n {
        return Err(CertifyError::GridMismatch("sample counts differ".into()));
    }
    let mut mw = DMatrix::zeros(m.nrows(), m.ncols());
    if lambda.len() == 1 && lambda_blocks.len() <= 1 {
        mw = m * lambda[0];
    } else {
        for (&l, &(off, size)) in lambda.iter().zip(lambda_blocks.iter()) {
            let block = m.view((off, off), (size, size)) * l;
            mw.view_mut((off, off), (size, size)).copy_from(&block);
        }
    }
    let rmr: Vec<f64> = traj
        .r
        .iter()
        .map(|r| (r.transpose() * &mw * r)[(0, 0)])
        .collect();
    let zz: Vec<f64> = traj.z.iter().map(|z| z.dot(z)).collect();
    let ee: Vec<f64> = traj.eta.iter().map(|e| e.dot(e)).collect();
    let int = |f: &[f64]| crate::sysmodels::trapezoid(&traj.t, f);
    let v_end = {
        let c = traj.chi.last().unwrap();
        (c.transpose() * p * c)[(0, 0)]
    };
    Ok(v_end + int(&rmr) + int(&zz) / (gamma * gamma) - int(&ee))
}

/// Generate an admissible run of the extended system: each scalar q channel
/// follows a smoothly varying gain inside its class bounds against its
/// source p row, and η is a smooth band-limited excitation.
///
/// Requires D21 = 0 (true whenever the plant has no feedthrough), so the
/// uncertainty channels close without an algebraic loop.
pub fn simulate_inclass(
    ext: &ExtendedSystem,
    channel_bounds: &[(f64, f64)],
    p_rows: &[usize],
    t_final: f64,
    dt: f64,
    seed: u64,
) -> Result<ExtTrajectory, CertifyError> {
    use rand::Rng;
    use rand::SeedableRng;
    let nq = ext.n_q();
    if channel_bounds.len() != nq || p_rows.len() != nq {
        return Err(CertifyError::GridMismatch(format!(
            "{} channels but {} bounds / {} rows",
            nq,
            channel_bounds.len(),
            p_rows.len()
        )));
    }
    if ext.d21.amax() > 0.0 {
        return Err(CertifyError::GridMismatch(
            "in-class simulation needs D21 = 0".into(),
        ));
    }
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let neta = ext.n_eta();
    // band-limited eta and per-channel gain schedules
    let eta_waves: Vec<(f64, f64, f64)> = (0..3 * neta)
        .map(|_| {
            (
                rng.gen_range(0.5..1.5),
                rng.gen_range(0.1..1.2),
                rng.gen_range(0.0..std::f64::consts::TAU),
            )
        })
        .collect();
    let eta_of = move |t: f64| {
        DVector::from_iterator(
            neta,
            (0..neta).map(|i| {
                (0..3)
                    .map(|k| {
                        let (a, w, ph) = eta_waves[3 * i + k];
                        a / 3.0 * (w * t + ph).sin()
                    })
                    .sum::<f64>()
            }),
        )
    };
    let gain_waves: Vec<(f64, f64)> = (0..nq)
        .map(|_| (rng.gen_range(0.2..0.9), rng.gen_range(0.0..std::f64::consts::TAU)))
        .collect();
    let gain_of = |i: usize, t: f64| {
        let (lo, hi) = channel_bounds[i];
        let (w, ph) = gain_waves[i];
        let mid = 0.5 * (lo + hi);
        let amp = 0.5 * (hi - lo);
        mid + amp * (w * t + ph).sin()
    };
    // p sources per routing:
    //   exogenous: full p = eta; error-output: p = (z, yhat-part of eta)
    let nz = ext.n_z();
    let p_full = |chi: &DVector<f64>, eta: &DVector<f64>| -> DVector<f64> {
        match ext.routing {
            DeltaRouting::Exogenous => eta.clone(),
            DeltaRouting::ErrorOutput => {
                let z = &ext.c2 * chi;
                let mut p = DVector::zeros(neta);
                p.rows_mut(0, nz).copy_from(&z);
                p.rows_mut(nz, neta - nz)
                    .copy_from(&eta.rows(nz, neta - nz));
                p
            }
        }
    };
    let q_of = |t: f64, chi: &DVector<f64>, eta: &DVector<f64>| -> DVector<f64> {
        let p = p_full(chi, eta);
        DVector::from_iterator(nq, (0..nq).map(|i| gain_of(i, t) * p[p_rows[i]]))
    };
    let steps = (t_final / dt).round() as usize;
    let mut chi = DVector::zeros(ext.n_states());
    let mut traj = ExtTrajectory {
        t: Vec::with_capacity(steps + 1),
        chi: Vec::with_capacity(steps + 1),
        z: Vec::with_capacity(steps + 1),
        eta: Vec::with_capacity(steps + 1),
        r: Vec::with_capacity(steps + 1),
    };
    for k in 0..=steps {
        let t = k as f64 * dt;
        let eta = eta_of(t);
        let q = q_of(t, &chi, &eta);
        traj.t.push(t);
        traj.chi.push(chi.clone());
        traj.z.push(&ext.c2 * &chi + &ext.d21 * &q + &ext.d22 * &eta);
        traj.r.push(&ext.c1 * &chi + &ext.d11 * &q + &ext.d12 * &eta);
        traj.eta.push(eta);
        if k < steps {
            let field = |tt: f64, x: &DVector<f64>| {
                let e = eta_of(tt);
                let q = q_of(tt, x, &e);
                &ext.acal * x + &ext.b1 * q + &ext.b2 * e
            };
            let k1 = field(t, &chi);
            let k2 = field(t + dt / 2.0, &(&chi + &k1 * (dt / 2.0)));
            let k3 = field(t + dt / 2.0, &(&chi + &k2 * (dt / 2.0)));
            let k4 = field(t + dt, &(&chi + &k3 * dt));
            chi += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0);
        }
    }
    Ok(traj)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::errorsys::{build_error_system, build_extended_routed, controller_error_gain};
    use crate::iqclib::{combine, norm_bound_iqc, sector_iqc};
    use crate::sysmodels::StateSpace;
    use approx::assert_relative_eq;

    fn arm_plant() -> StateSpace {
        StateSpace::new(
            DMatrix::from_row_slice(2, 2, &[-6.0, -9.0, 1.0, 0.0]),
            DMatrix::from_row_slice(2, 2, &[10.0, 1.0, 0.0, 0.0]),
            DMatrix::from_row_slice(1, 2, &[0.0, 1.0]),
            DMatrix::zeros(1, 2),
            1,
        )
        .unwrap()
    }

    fn arm_vertices(
        lams: &[f64],
        routing: DeltaRouting,
        eps_bound: f64,
    ) -> (Vec<ExtendedSystem>, DMatrix<f64>, Vec<(usize, usize)>) {
        let plant = arm_plant();
        let err = build_error_system(&plant, &plant).unwrap();
        let sector = sector_iqc(
            &DVector::from_vec(vec![0.0]),
            &DVector::from_vec(vec![0.364]),
        )
        .unwrap();
        let norm = norm_bound_iqc(eps_bound, 1, 1).unwrap();
        let blocks = vec![(0, sector.m.nrows()), (sector.m.nrows(), norm.m.nrows())];
        let xi = combine(&[sector, norm]).unwrap();
        let m = xi.m.clone();
        let verts = lams
            .iter()
            .map(|&l| {
                let lam = DMatrix::from_row_slice(1, 1, &[l]);
                let gain = controller_error_gain(&lam, &plant).unwrap();
                build_extended_routed(&err, &gain, &xi, routing).unwrap()
            })
            .collect();
        (verts, m, blocks)
    }

    #[test]
    fn tube_bound_examples() {
        let tb = tube_bound(0.05669, 1.0).unwrap();
        assert_relative_eq!(tb.factor, 0.1202, epsilon = 5e-5);
        let tb = tube_bound(1.0 / 3.0, 2.0).unwrap();
        assert_relative_eq!(tb.factor, 1.0, epsilon = 1e-12);
        assert_relative_eq!(tb.bound, 2.0, epsilon = 1e-12);
        let tb = tube_bound(1e-9, 1.0).unwrap();
        assert!(tb.factor < 1e-8);
        assert!(tube_bound(1.0, 1.0).is_err());
        assert!(tube_bound(0.0, 1.0).is_err());
    }

    #[test]
    fn rise_lmi_rejects_bad_gamma() {
        let (v, m, _) = arm_vertices(&[0.5], DeltaRouting::ErrorOutput, 0.2);
        assert!(matches!(
            rise_lmi(&v[0], &m, 0.0),
            Err(CertifyError::NonPositiveGamma(_))
        ));
    }

    #[test]
    fn vanishing_error_system_feasible_for_small_gamma() {
        // Lambda = 0 and both uncertainty channels degenerate: the LMI
        // family reduces to a Lyapunov condition, feasible for tiny gamma
        let (v, m, blocks) = arm_vertices(&[0.0], DeltaRouting::ErrorOutput, 0.0);
        let cfg = CertifyConfig {
            level_range: (1e-3, 0.9),
            ..Default::default()
        };
        let cert = certify_rise(&v, &m, &blocks, &cfg).unwrap();
        assert_relative_eq!(cert.level, 1e-3, epsilon = 1e-15);
    }

    #[test]
    fn arm_family_feasible_at_half_infeasible_at_tiny() {
        let (v, m, _blocks) = arm_vertices(&[1.0, -9.0], DeltaRouting::ErrorOutput, 0.2);
        let p1 = rise_lmi(&v[0], &m, 0.5).unwrap();
        assert!(lmi::is_feasible(&p1).is_feasible());
        let p2 = rise_lmi(&v[0], &m, 1e-6).unwrap();
        assert!(!lmi::is_feasible(&p2).is_feasible());
    }

    #[test]
    fn bisection_trace_is_monotone_step() {
        let (v, m, blocks) = arm_vertices(&[1.0, -9.0], DeltaRouting::ErrorOutput, 0.2);
        let cfg = CertifyConfig::default();
        let cert = certify_rise(&v, &m, &blocks, &cfg).unwrap();
        // no feasible level sits below an infeasible level
        let feas_min = cert
            .bisection_trace
            .iter()
            .filter(|(_, f)| *f)
            .map(|(l, _)| *l)
            .fold(f64::INFINITY, f64::min);
        let infeas_max = cert
            .bisection_trace
            .iter()
            .filter(|(_, f)| !*f)
            .map(|(l, _)| *l)
            .fold(f64::NEG_INFINITY, f64::max);
        assert!(infeas_max < feas_min);
        assert!(cert.level > 0.0 && cert.level < 0.9);
        // monotonicity: re-solving at twice the level stays feasible
        // (same multiplier structure as the certificate)
        let (w, _) = feasible_at(
            &v,
            &m,
            &blocks,
            Some((2.0 * cert.level).min(0.89)),
            SseMode::None,
        );
        assert!(w.is_some());
    }

    #[test]
    fn infeasible_at_upper_reported() {
        let (v, m, blocks) = arm_vertices(&[1.0], DeltaRouting::ErrorOutput, 0.2);
        let cfg = CertifyConfig {
            level_range: (1e-7, 1e-6),
            ..Default::default()
        };
        assert!(matches!(
            certify_rise(&v, &m, &blocks, &cfg),
            Err(CertifyError::InfeasibleAtUpper(_))
        ));
    }

    #[test]
    fn shared_witness_reverifies_per_vertex() {
        let (v, m, blocks) = arm_vertices(&[1.0, -4.0, -9.0], DeltaRouting::ErrorOutput, 0.2);
        let cfg = CertifyConfig::default();
        let cert = certify_rise(&v, &m, &blocks, &cfg).unwrap();
        // rebuild each single-vertex problem at the certified level and
        // evaluate the constraint at the shared witness
        for ext in &v {
            let prob = rise_lmi(ext, &m, cert.level).unwrap();
            let mut x = Vec::new();
            for i in 0..2 {
                for j in i..2 {
                    x.push(cert.witness.p[(i, j)]);
                }
            }
            // single-lambda problem: weight is the sum when the certificate
            // used per-factor scaling with equal blocks; re-derive instead
            // from the witness directly
            let lam = if cert.witness.lambda.len() == 1 {
                cert.witness.lambda[0]
            } else {
                // evaluate with per-factor weights via margin_at on a
                // rebuilt per-factor problem
                f64::NAN
            };
            if lam.is_nan() {
                let prob_pf = build_joint_problem(
                    std::slice::from_ref(ext),
                    &m,
                    &blocks,
                    Some(cert.level),
                    SseMode::None,
                )
                .unwrap();
                let mut xs = x.clone();
                xs.extend_from_slice(&cert.witness.lambda);
                assert!(prob_pf.margin_at(&xs) <= -lmi::TOL_FEAS / 2.0);
            } else {
                let mut xs = x.clone();
                xs.push(lam);
                assert!(prob.margin_at(&xs) <= -lmi::TOL_FEAS / 2.0);
            }
        }
    }

    #[test]
    fn sse_direct_and_bisect_agree() {
        let (v, m, blocks) = arm_vertices(&[1.0, -9.0], DeltaRouting::ErrorOutput, 0.2);
        let cfg = CertifyConfig {
            level_range: (1e-4, 5.0),
            tol_bisect: 1e-4,
            ..Default::default()
        };
        let direct = certify_sse(&v, &m, &blocks, &cfg, SseSearch::Direct).unwrap();
        let bisect = certify_sse(&v, &m, &blocks, &cfg, SseSearch::Bisect).unwrap();
        let tol = 2.0 * cfg.tol_bisect * bisect.level.max(direct.level) + 2e-3;
        assert!(
            (direct.level - bisect.level).abs() <= tol,
            "direct {} vs bisect {}",
            direct.level,
            bisect.level
        );
    }

    #[test]
    fn sse_sigma_monotone() {
        let (v, m, _) = arm_vertices(&[1.0], DeltaRouting::ErrorOutput, 0.2);
        let p_small = sse_lmis(&v[0], &m, 0.05).unwrap();
        let p_big = sse_lmis(&v[0], &m, 5.0).unwrap();
        let small_ok = lmi::is_feasible(&p_small).is_feasible();
        let big_ok = lmi::is_feasible(&p_big).is_feasible();
        assert!(big_ok, "large sigma must be feasible");
        let _ = small_ok;
    }

    #[test]
    fn zero_output_map_sse_collapses() {
        // C2 = 0: the Schur block reduces to P > 0 and sigma is limited
        // only by the first LMI; the search returns the lower edge
        let plant = StateSpace::new(
            DMatrix::from_row_slice(2, 2, &[-1.0, 0.0, 0.0, -2.0]),
            DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 1.0]),
            DMatrix::zeros(1, 2),
            DMatrix::zeros(1, 2),
            1,
        )
        .unwrap();
        let err = build_error_system(&plant, &plant).unwrap();
        let gain = controller_error_gain(&DMatrix::zeros(1, 1), &plant).unwrap();
        let sector = sector_iqc(&DVector::from_vec(vec![0.0]), &DVector::from_vec(vec![0.1])).unwrap();
        let norm = norm_bound_iqc(0.1, 1, 1).unwrap();
        let xi = combine(&[sector, norm]).unwrap();
        let m = xi.m.clone();
        let ext = build_extended_routed(&err, &gain, &xi, DeltaRouting::Exogenous).unwrap();
        let cfg = CertifyConfig {
            level_range: (1e-3, 2.0),
            ..Default::default()
        };
        let cert = certify_sse(
            &[ext],
            &m,
            &[(0, 2), (2, 2)],
            &cfg,
            SseSearch::Bisect,
        )
        .unwrap();
        assert_relative_eq!(cert.level, 1e-3, epsilon = 1e-12);
    }

    #[test]
    fn dissipation_residual_negative_with_certificate() {
        let (v, m, blocks) = arm_vertices(&[1.0, -9.0], DeltaRouting::ErrorOutput, 0.2);
        let cfg = CertifyConfig::default();
        let cert = certify_rise(&v, &m, &blocks, &cfg).unwrap();
        let lam_blocks: Vec<(usize, usize)> = if cert.witness.lambda.len() == 1 {
            vec![(0, m.nrows())]
        } else {
            blocks.clone()
        };
        let bounds = [(0.0, 0.364), (-0.2, 0.2)];
        // p rows: sector reads z (row 0 via error routing maps to p slot 0),
        // norm channel reads yhat (p slot 1)
        let rows = [0usize, 1usize];
        let traj = simulate_inclass(&v[0], &bounds, &rows, 20.0, 1e-3, 5).unwrap();
        let max_eta = traj
            .eta
            .iter()
            .map(|e| e.dot(e))
            .fold(0.0_f64, f64::max);
        let res = check_dissipation(
            &traj,
            &cert.witness.p,
            &cert.witness.lambda,
            &lam_blocks,
            cert.level,
            &m,
        )
        .unwrap();
        assert!(
            res <= 1e-3 * max_eta,
            "residual {res} vs 1e-3*max eta {max_eta}"
        );
        // integrated form as well
        let gap = integrated_dissipation_gap(
            &traj,
            &cert.witness.p,
            &cert.witness.lambda,
            &lam_blocks,
            cert.level,
            &m,
        )
        .unwrap();
        assert!(gap <= 1e-6 + 1e-3 * max_eta * traj.t.last().unwrap());

        // halving gamma with the same witness must break dissipation
        let res_bad = check_dissipation(
            &traj,
            &cert.witness.p,
            &cert.witness.lambda,
            &lam_blocks,
            cert.level / 2.0,
            &m,
        )
        .unwrap();
        assert!(res_bad > res);
    }

    #[test]
    fn dissipation_zero_run_zero_residual() {
        let (v, m, _) = arm_vertices(&[1.0], DeltaRouting::ErrorOutput, 0.2);
        let n = 11;
        let traj = ExtTrajectory {
            t: (0..n).map(|k| k as f64 * 0.1).collect(),
            chi: vec![DVector::zeros(2); n],
            z: vec![DVector::zeros(1); n],
            eta: vec![DVector::zeros(2); n],
            r: vec![DVector::zeros(4); n],
        };
        let res = check_dissipation(
            &traj,
            &DMatrix::identity(2, 2),
            &[1.0],
            &[(0, 4)],
            0.5,
            &m,
        )
        .unwrap();
        assert_eq!(res, 0.0);
        let _ = v;
    }

    #[test]
    fn certificate_json_fields() {
        let (v, m, blocks) = arm_vertices(&[1.0, -9.0], DeltaRouting::ErrorOutput, 0.2);
        let cert = certify_rise(&v, &m, &blocks, &CertifyConfig::default()).unwrap();
        let text = cert.to_json_string();
        let val: serde_json::Value = serde_json::from_str(&text).unwrap();
        assert_eq!(val["metric"], "RISE");
        assert!(val["factor_2g_over_1mg"].as_f64().unwrap() > 0.0);
        assert_eq!(val["vertices"], 2);
        assert!(val["witness_eigs"].as_array().unwrap().len() == 2);
        // key order is fixed by the struct
        let first_brace = text.find('\n').unwrap();
        assert!(text[..first_brace + 20].contains("metric"));
    }
}

