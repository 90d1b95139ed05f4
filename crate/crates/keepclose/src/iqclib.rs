//! Hard-IQC multiplier library.
//!
//! An uncertain operator q = Δ(p) is admitted into a certificate through a
//! factorized quadratic constraint: a stable (here: static) filter Ψ maps
//! (p, q) to r, and a constant symmetric matrix M makes
//! ∫₀ᵀ rᵀ M r dτ ≥ 0 hold on every finite horizon for every operator in the
//! class. Static multipliers keep the factorization hard by construction:
//! the integrand itself is pointwise nonnegative for in-class signal pairs.
//!
//! Two classes are provided, matching the bundled scenarios: sector-bounded
//! channels (per-component α p ≤ q ≤ β p) and norm-bounded channels
//! (c²‖p‖² ≥ ‖q‖² in the running integral). Dynamic, frequency-weighted
//! multipliers are an extension hook, not implemented.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::sysmodels::{is_hurwitz, LpvParameterBox, StateSpace, SysError};

#[derive(Debug, Error)]
pub enum IqcError {
    #[error("sector bounds out of order at component {0}: alpha > beta")]
    BoundOrder(usize),
    #[error("negative norm bound {0}")]
    NegativeBound(f64),
    #[error("empty factor list")]
    EmptyList,
    #[error("sample grids disagree: {0}")]
    GridMismatch(String),
    #[error("middle matrix must be symmetric")]
    AsymmetricM,
    #[error("filter must be stable or static")]
    UnstableFilter,
    #[error(transparent)]
    Sys(#[from] SysError),
}

/// Filter/middle-matrix pair (Ψ, M) with Ψ inputs ordered (p, q).
///
/// `p_dim` leading filter inputs carry p; the remaining `q_dim` carry q.
#[derive(Debug, Clone)]
pub struct IqcFactor {
    pub psi: StateSpace,
    pub m: DMatrix<f64>,
    pub p_dim: usize,
    pub q_dim: usize,
}

impl IqcFactor {
    pub fn new(psi: StateSpace, m: DMatrix<f64>, p_dim: usize, q_dim: usize) -> Result<Self, IqcError> {
        if m.nrows() != m.ncols() || psi.ny() != m.nrows() {
            return Err(IqcError::AsymmetricM);
        }
        if (&m - m.transpose()).amax() > 1e-12 {
            return Err(IqcError::AsymmetricM);
        }
        if psi.nu() != p_dim + q_dim {
            return Err(IqcError::GridMismatch(format!(
                "filter has {} inputs, expected {}",
                psi.nu(),
                p_dim + q_dim
            )));
        }
        if !psi.is_static() && !is_hurwitz(&psi.a)? {
            return Err(IqcError::UnstableFilter);
        }
        Ok(Self { psi, m, p_dim, q_dim })
    }

    /// Filter B/D columns acting on p.
    pub fn b_p(&self) -> DMatrix<f64> {
        self.psi.b.columns(0, self.p_dim).into()
    }

    pub fn b_q(&self) -> DMatrix<f64> {
        self.psi.b.columns(self.p_dim, self.q_dim).into()
    }

    pub fn d_p(&self) -> DMatrix<f64> {
        self.psi.d.columns(0, self.p_dim).into()
    }

    pub fn d_q(&self) -> DMatrix<f64> {
        self.psi.d.columns(self.p_dim, self.q_dim).into()
    }

    /// Precompose the p input with a selection map: the new factor reads
    /// p_new (wider) and feeds `sel * p_new` to the original filter. Used
    /// to aim a scalar channel at one component of a vector output.
    pub fn with_p_selector(&self, sel: &DMatrix<f64>) -> Result<IqcFactor, IqcError> {
        if sel.nrows() != self.p_dim {
            return Err(IqcError::GridMismatch(format!(
                "selector has {} rows, factor p dim is {}",
                sel.nrows(),
                self.p_dim
            )));
        }
        let new_p = sel.ncols();
        let mut b = DMatrix::zeros(self.psi.nx(), new_p + self.q_dim);
        b.view_mut((0, 0), (self.psi.nx(), new_p))
            .copy_from(&(self.b_p() * sel));
        b.view_mut((0, new_p), (self.psi.nx(), self.q_dim))
            .copy_from(&self.b_q());
        let mut d = DMatrix::zeros(self.psi.ny(), new_p + self.q_dim);
        d.view_mut((0, 0), (self.psi.ny(), new_p))
            .copy_from(&(self.d_p() * sel));
        d.view_mut((0, new_p), (self.psi.ny(), self.q_dim))
            .copy_from(&self.d_q());
        let psi = StateSpace::new(self.psi.a.clone(), b, self.psi.c.clone(), d, 0)?;
        IqcFactor::new(psi, self.m.clone(), new_p, self.q_dim)
    }
}

/// Declared admissible class of an uncertainty channel.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum UncertaintyClass {
    Sector {
        alpha: Vec<f64>,
        beta: Vec<f64>,
        domain: LpvParameterBox,
    },
    Norm {
        c: f64,
        domain: LpvParameterBox,
    },
}

impl UncertaintyClass {
    /// Build the matching static hard-IQC factor.
    pub fn factor(&self) -> Result<IqcFactor, IqcError> {
        match self {
            UncertaintyClass::Sector { alpha, beta, .. } => {
                sector_iqc(&DVector::from_vec(alpha.clone()), &DVector::from_vec(beta.clone()))
            }
            UncertaintyClass::Norm { c, .. } => norm_bound_iqc(*c, 1, 1),
        }
    }
}

/// Static sector multiplier, one 2-row block per channel.
///
/// Per channel i the filter rows are [β_i, −1] and [−α_i, 1] acting on
/// (p_i, q_i), and the middle block [[0,1],[1,0]] gives the integrand
/// 2(β_i p_i − q_i)(q_i − α_i p_i), pointwise nonnegative whenever
/// α_i p_i ≤ q_i ≤ β_i p_i.
pub fn sector_iqc(alpha: &DVector<f64>, beta: &DVector<f64>) -> Result<IqcFactor, IqcError> {
    if alpha.len() != beta.len() {
        return Err(IqcError::GridMismatch(format!(
            "alpha has {} entries, beta {}",
            alpha.len(),
            beta.len()
        )));
    }
    for i in 0..alpha.len() {
        if alpha[i] > beta[i] {
            return Err(IqcError::BoundOrder(i));
        }
    }
    let k = alpha.len();
    let mut d = DMatrix::zeros(2 * k, 2 * k);
    let mut m = DMatrix::zeros(2 * k, 2 * k);
    for i in 0..k {
        // columns: p block first, then q block
        d[(2 * i, i)] = beta[i];
        d[(2 * i, k + i)] = -1.0;
        d[(2 * i + 1, i)] = -alpha[i];
        d[(2 * i + 1, k + i)] = 1.0;
        m[(2 * i, 2 * i + 1)] = 1.0;
        m[(2 * i + 1, 2 * i)] = 1.0;
    }
    let psi = StateSpace::new(
        DMatrix::zeros(0, 0),
        DMatrix::zeros(0, 2 * k),
        DMatrix::zeros(2 * k, 0),
        d,
        0,
    )?;
    IqcFactor::new(psi, m, k, k)
}

/// Static norm-bound multiplier: Ψ = I on (p, q), M = diag(c²·I, −I).
///
/// The running constraint is c²‖p‖² − ‖q‖² ≥ 0, satisfied by any channel
/// with pointwise ‖q(t)‖ ≤ c‖p(t)‖ and, more generally, by any causal
/// operator whose truncated gain stays below c. The bundled scenarios use
/// it for the trained-controller residual driven by the reference output;
/// an amplitude-bounded residual is admitted relative to that exogenous
/// signal, which is a recorded conservatism source.
pub fn norm_bound_iqc(c: f64, p_dim: usize, q_dim: usize) -> Result<IqcFactor, IqcError> {
    if c < 0.0 {
        return Err(IqcError::NegativeBound(c));
    }
    let n = p_dim + q_dim;
    let mut m = DMatrix::zeros(n, n);
    for i in 0..p_dim {
        m[(i, i)] = c * c;
    }
    for i in p_dim..n {
        m[(i, i)] = -1.0;
    }
    let psi = StateSpace::new(
        DMatrix::zeros(0, 0),
        DMatrix::zeros(0, n),
        DMatrix::zeros(n, 0),
        DMatrix::identity(n, n),
        0,
    )?;
    IqcFactor::new(psi, m, p_dim, q_dim)
}

/// Combine factors into the extended filter: block-diagonal Ψ and M, with
/// the combined p inputs stacked factor-by-factor, then the combined q
/// inputs likewise.
pub fn combine(factors: &[IqcFactor]) -> Result<IqcFactor, IqcError> {
    if factors.is_empty() {
        return Err(IqcError::EmptyList);
    }
    let nx: usize = factors.iter().map(|f| f.psi.nx()).sum();
    let np: usize = factors.iter().map(|f| f.p_dim).sum();
    let nq: usize = factors.iter().map(|f| f.q_dim).sum();
    let nr: usize = factors.iter().map(|f| f.psi.ny()).sum();
    let mut a = DMatrix::zeros(nx, nx);
    let mut b = DMatrix::zeros(nx, np + nq);
    let mut c = DMatrix::zeros(nr, nx);
    let mut d = DMatrix::zeros(nr, np + nq);
    let mut m = DMatrix::zeros(nr, nr);
    let (mut ix, mut ip, mut iq, mut ir) = (0, 0, 0, 0);
    for f in factors {
        let (fx, fp, fq, fr) = (f.psi.nx(), f.p_dim, f.q_dim, f.psi.ny());
        a.view_mut((ix, ix), (fx, fx)).copy_from(&f.psi.a);
        b.view_mut((ix, ip), (fx, fp)).copy_from(&f.b_p());
        b.view_mut((ix, np + iq), (fx, fq)).copy_from(&f.b_q());
        c.view_mut((ir, ix), (fr, fx)).copy_from(&f.psi.c);
        d.view_mut((ir, ip), (fr, fp)).copy_from(&f.d_p());
        d.view_mut((ir, np + iq), (fr, fq)).copy_from(&f.d_q());
        m.view_mut((ir, ir), (fr, fr)).copy_from(&f.m);
        ix += fx;
        ip += fp;
        iq += fq;
        ir += fr;
    }
    let psi = StateSpace::new(a, b, c, d, 0)?;
    IqcFactor::new(psi, m, np, nq)
}

/// Filter response r(t) on sampled (p, q) from zero filter state, then the
/// trapezoidal integral of rᵀ M r over [0, T].
///
/// `t` must be a uniform grid containing T. Static filters evaluate the
/// feedthrough directly; stateful filters are stepped with RK4 using linear
/// input interpolation between samples.
pub fn eval_hard_iqc(
    factor: &IqcFactor,
    t: &[f64],
    p: &[DVector<f64>],
    q: &[DVector<f64>],
    horizon: f64,
) -> Result<f64, IqcError> {
    if t.len() != p.len() || t.len() != q.len() || t.is_empty() {
        return Err(IqcError::GridMismatch(
            "time, p, q sample counts differ".into(),
        ));
    }
    if p[0].len() != factor.p_dim || q[0].len() != factor.q_dim {
        return Err(IqcError::GridMismatch(format!(
            "channel dims ({}, {}) vs factor ({}, {})",
            p[0].len(),
            q[0].len(),
            factor.p_dim,
            factor.q_dim
        )));
    }
    let t_end = *t.last().unwrap();
    if horizon < t[0] - 1e-12 || horizon > t_end + 1e-12 {
        return Err(IqcError::GridMismatch(format!(
            "horizon {horizon} outside grid [{}, {t_end}]",
            t[0]
        )));
    }
    let input = |k: usize| {
        let mut u = DVector::zeros(factor.p_dim + factor.q_dim);
        u.rows_mut(0, factor.p_dim).copy_from(&p[k]);
        u.rows_mut(factor.p_dim, factor.q_dim).copy_from(&q[k]);
        u
    };
    let mut integrand = Vec::with_capacity(t.len());
    if factor.psi.is_static() {
        for k in 0..t.len() {
            let r = &factor.psi.d * input(k);
            integrand.push((r.transpose() * &factor.m * &r)[(0, 0)]);
        }
    } else {
        let mut psi_state = DVector::zeros(factor.psi.nx());
        for k in 0..t.len() {
            let u_k = input(k);
            let r = &factor.psi.c * &psi_state + &factor.psi.d * &u_k;
            integrand.push((r.transpose() * &factor.m * &r)[(0, 0)]);
            if k + 1 < t.len() {
                let dt = t[k + 1] - t[k];
                let u_next = input(k + 1);
                let field = |tau: f64, x: &DVector<f64>| {
                    let u = &u_k * (1.0 - tau) + &u_next * tau;
                    &factor.psi.a * x + &factor.psi.b * u
                };
                let k1 = field(0.0, &psi_state);
                let k2 = field(0.5, &(&psi_state + &k1 * (dt / 2.0)));
                let k3 = field(0.5, &(&psi_state + &k2 * (dt / 2.0)));
                let k4 = field(1.0, &(&psi_state + &k3 * dt));
                psi_state += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0);
            }
        }
    }
    // trapezoid up to the horizon (grid point or interior cut)
    let mut acc = 0.0;
    for k in 1..t.len() {
        if t[k] <= horizon + 1e-12 {
            acc += 0.5 * (t[k] - t[k - 1]) * (integrand[k] + integrand[k - 1]);
        } else {
            let frac = (horizon - t[k - 1]) / (t[k] - t[k - 1]);
            if frac > 0.0 {
                let mid = integrand[k - 1] + frac * (integrand[k] - integrand[k - 1]);
                acc += 0.5 * (horizon - t[k - 1]) * (integrand[k - 1] + mid);
            }
            break;
        }
    }
    Ok(acc)
}

/// Convenience: the integral at every grid prefix.
pub fn hard_iqc_prefixes(
    factor: &IqcFactor,
    t: &[f64],
    p: &[DVector<f64>],
    q: &[DVector<f64>],
) -> Result<Vec<f64>, IqcError> {
    // one filter pass, cumulative trapezoid
    if t.len() != p.len() || t.len() != q.len() || t.is_empty() {
        return Err(IqcError::GridMismatch(
            "time, p, q sample counts differ".into(),
        ));
    }
    let full = eval_hard_iqc(factor, t, p, q, *t.last().unwrap())?;
    let _ = full;
    let input = |k: usize| {
        let mut u = DVector::zeros(factor.p_dim + factor.q_dim);
        u.rows_mut(0, factor.p_dim).copy_from(&p[k]);
        u.rows_mut(factor.p_dim, factor.q_dim).copy_from(&q[k]);
        u
    };
    let mut integrand = Vec::with_capacity(t.len());
    if factor.psi.is_static() {
        for k in 0..t.len() {
            let r = &factor.psi.d * input(k);
            integrand.push((r.transpose() * &factor.m * &r)[(0, 0)]);
        }
    } else {
        let mut psi_state = DVector::zeros(factor.psi.nx());
        for k in 0..t.len() {
            let u_k = input(k);
            let r = &factor.psi.c * &psi_state + &factor.psi.d * &u_k;
            integrand.push((r.transpose() * &factor.m * &r)[(0, 0)]);
            if k + 1 < t.len() {
                let dt = t[k + 1] - t[k];
                let u_next = input(k + 1);
                let field = |tau: f64, x: &DVector<f64>| {
                    let u = &u_k * (1.0 - tau) + &u_next * tau;
                    &factor.psi.a * x + &factor.psi.b * u
                };
                let k1 = field(0.0, &psi_state);
                let k2 = field(0.5, &(&psi_state + &k1 * (dt / 2.0)));
                let k3 = field(0.5, &(&psi_state + &k2 * (dt / 2.0)));
                let k4 = field(1.0, &(&psi_state + &k3 * dt));
                psi_state += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0);
            }
        }
    }
    let mut out = Vec::with_capacity(t.len());
    let mut acc = 0.0;
    out.push(0.0);
    for k in 1..t.len() {
        acc += 0.5 * (t[k] - t[k - 1]) * (integrand[k] + integrand[k - 1]);
        out.push(acc);
    }
    Ok(out)
}
