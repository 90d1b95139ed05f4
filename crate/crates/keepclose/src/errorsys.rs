//! Error-system and extended-system assembly.
//!
//! [`build_error_system`] forms the dynamics of ζ = x − x̂ between the plant
//! closed by the neural controller and the reference closed loop; both share
//! the same nominal matrices and initial state, so ζ(0) = 0 by construction.
//! [`controller_error_gain`] resolves the controller difference through the
//! mean-value matrix Λ. [`build_extended`] then stacks the error dynamics
//! with the combined IQC filter into the per-vertex system whose dissipation
//! certificate the `certify` module searches.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::iqclib::IqcFactor;
use crate::sysmodels::{StateSpace, SysError};

#[derive(Debug, Error)]
pub enum ErrorSysError {
    #[error("I - Lambda*D is numerically singular (condition {0:.3e})")]
    SingularFeedthrough(f64),
    #[error("plant and reference nominal matrices differ by {0:.3e}")]
    ModelMismatch(f64),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error(transparent)]
    Sys(#[from] SysError),
}

/// Coefficients of μ = Gζ·ζ + Gq·q_δ + Gε·ε.
#[derive(Debug, Clone)]
pub struct ControllerErrorGain {
    pub g_zeta: DMatrix<f64>,
    pub g_q: DMatrix<f64>,
    pub g_eps: DMatrix<f64>,
}

/// Error dynamics over ζ with inputs (μ, q_δ) and output z = y − ŷ.
#[derive(Debug, Clone)]
pub struct ErrorSystem {
    pub a: DMatrix<f64>,
    pub b_mu: DMatrix<f64>,
    pub b_q: DMatrix<f64>,
    pub c: DMatrix<f64>,
    pub d_mu: DMatrix<f64>,
    pub d_q: DMatrix<f64>,
}

impl ErrorSystem {
    pub fn nx(&self) -> usize {
        self.a.nrows()
    }

    pub fn nz(&self) -> usize {
        self.c.nrows()
    }

    pub fn n_mu(&self) -> usize {
        self.b_mu.ncols()
    }

    pub fn n_q(&self) -> usize {
        self.b_q.ncols()
    }
}

/// How the uncertainty filter's p-input is driven inside the extended
/// system.
///
/// `Exogenous` feeds the filter straight from the free input η = (y, ŷ),
/// the default assembly. `ErrorOutput` instead closes the physical-output
/// channel p_δ through the error output map z, which encodes that the
/// uncertainty acts across the tracking error rather than across an
/// unconstrained signal; the bundled scenarios certify in this mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DeltaRouting {
    Exogenous,
    ErrorOutput,
}

/// Per-vertex extended system over χ = (ζ, ξ) with inputs q = (q_δ, q_ε)
/// and η, outputs r (filter) and z (performance).
#[derive(Debug, Clone)]
pub struct ExtendedSystem {
    pub acal: DMatrix<f64>,
    pub b1: DMatrix<f64>,
    pub b2: DMatrix<f64>,
    pub c1: DMatrix<f64>,
    pub c2: DMatrix<f64>,
    pub d11: DMatrix<f64>,
    pub d12: DMatrix<f64>,
    pub d21: DMatrix<f64>,
    pub d22: DMatrix<f64>,
    /// Vertex tag: the Λ this instance was assembled at.
    pub lambda: DMatrix<f64>,
    pub n_zeta: usize,
    pub n_xi: usize,
    pub routing: DeltaRouting,
}

impl ExtendedSystem {
    pub fn n_states(&self) -> usize {
        self.acal.nrows()
    }

    /// Restrict the performance output to a single row of z.
    ///
    /// The filter coupling keeps reading the full error output (it was
    /// baked in at assembly time), only the supply-rate output changes, so
    /// per-channel certificates share one uncertainty description.
    pub fn with_output_row(&self, row: usize) -> ExtendedSystem {
        let mut out = self.clone();
        out.c2 = self.c2.rows(row, 1).into_owned();
        out.d21 = self.d21.rows(row, 1).into_owned();
        out.d22 = self.d22.rows(row, 1).into_owned();
        out
    }

    pub fn n_q(&self) -> usize {
        self.b1.ncols()
    }

    pub fn n_eta(&self) -> usize {
        self.b2.ncols()
    }

    pub fn n_r(&self) -> usize {
        self.c1.nrows()
    }

    pub fn n_z(&self) -> usize {
        self.c2.nrows()
    }
}

const COND_LIMIT: f64 = 1e12;

/// Resolve μ through the mean-value matrix: μ = [I−ΛD]⁻¹(ΛCζ + ΛD̃q_δ + ε).
///
/// With D = 0 the inverse is skipped and the gains are ΛC, ΛD̃, I verbatim.
pub fn controller_error_gain(
    lambda: &DMatrix<f64>,
    plant: &StateSpace,
) -> Result<ControllerErrorGain, ErrorSysError> {
    let d = plant.d_ctrl();
    let d_dist = plant.d_dist();
    if lambda.ncols() != plant.ny() {
        return Err(ErrorSysError::DimensionMismatch(format!(
            "Lambda has {} cols, plant has {} outputs",
            lambda.ncols(),
            plant.ny()
        )));
    }
    let m = lambda.nrows();
    if d.amax() == 0.0 {
        return Ok(ControllerErrorGain {
            g_zeta: lambda * &plant.c,
            g_q: lambda * d_dist,
            g_eps: DMatrix::identity(m, m),
        });
    }
    let iminus = DMatrix::identity(m, m) - lambda * &d;
    let svd = iminus.clone().svd(false, false);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    let cond = if smin > 0.0 { smax / smin } else { f64::INFINITY };
    if cond > COND_LIMIT {
        return Err(ErrorSysError::SingularFeedthrough(cond));
    }
    let inv = iminus
        .try_inverse()
        .ok_or(ErrorSysError::SingularFeedthrough(f64::INFINITY))?;
    Ok(ControllerErrorGain {
        g_zeta: &inv * lambda * &plant.c,
        g_q: &inv * lambda * d_dist,
        g_eps: inv,
    })
}

/// Form the error system; the reference loop must share the plant's nominal
/// matrices for ζ = x − x̂ to obey them.
pub fn build_error_system(
    plant: &StateSpace,
    reference_check: &StateSpace,
) -> Result<ErrorSystem, ErrorSysError> {
    let dev = |x: &DMatrix<f64>, y: &DMatrix<f64>| -> f64 {
        if x.shape() != y.shape() {
            f64::INFINITY
        } else {
            (x - y).amax()
        }
    };
    let gap = dev(&plant.a, &reference_check.a)
        .max(dev(&plant.b_ctrl(), &reference_check.b_ctrl()))
        .max(dev(&plant.c, &reference_check.c))
        .max(dev(&plant.d_ctrl(), &reference_check.d_ctrl()));
    if gap > 1e-12 {
        return Err(ErrorSysError::ModelMismatch(gap));
    }
    Ok(ErrorSystem {
        a: plant.a.clone(),
        b_mu: plant.b_ctrl(),
        b_q: plant.b_dist(),
        c: plant.c.clone(),
        d_mu: plant.d_ctrl(),
        d_q: plant.d_dist(),
    })
}

/// Assemble the per-vertex extended system with the default exogenous
/// filter routing.
pub fn build_extended(
    err: &ErrorSystem,
    gain: &ControllerErrorGain,
    xi: &IqcFactor,
) -> Result<ExtendedSystem, ErrorSysError> {
    build_extended_routed(err, gain, xi, DeltaRouting::Exogenous)
}

/// Assemble the per-vertex extended system.
///
/// χ = (ζ, ξ), q = (q_δ, q_ε), p = (p_δ, p_ε) and η = (y, ŷ). q_ε is the
/// trained-controller residual channel entering through the μ gains. The
/// filter's p-block is split: the leading `n_p_delta` filter p-inputs are
/// the physical-output channel, the rest the reference-output channel.
/// `routing` chooses whether p_δ reads η directly or the error output z.
pub fn build_extended_routed(
    err: &ErrorSystem,
    gain: &ControllerErrorGain,
    xi: &IqcFactor,
    routing: DeltaRouting,
) -> Result<ExtendedSystem, ErrorSysError> {
    let n = err.nx();
    let n_xi = xi.psi.nx();
    let nq_delta = err.n_q();
    let nq_eps = gain.g_eps.ncols();
    let nq = nq_delta + nq_eps;
    if xi.q_dim != nq {
        return Err(ErrorSysError::DimensionMismatch(format!(
            "filter q dim {} vs channels {}",
            xi.q_dim, nq
        )));
    }
    let nz = err.nz();
    // p = (p_delta, p_eps) = (y, yhat); both blocks have output dimension nz
    if xi.p_dim != 2 * nz {
        return Err(ErrorSysError::DimensionMismatch(format!(
            "filter p dim {} vs 2*{}",
            xi.p_dim, nz
        )));
    }
    let n_eta = 2 * nz;
    let nr = xi.psi.ny();

    // closed error dynamics: zeta' = (A + B_mu Gz) zeta + (B_mu Gq + B_q) q_d + B_mu Ge q_e
    let a_cl = &err.a + &err.b_mu * &gain.g_zeta;
    let b_qd = &err.b_mu * &gain.g_q + &err.b_q;
    let b_qe = &err.b_mu * &gain.g_eps;
    // performance output z
    let c2_zeta = &err.c + &err.d_mu * &gain.g_zeta;
    let d21_qd = &err.d_mu * &gain.g_q + &err.d_q;
    let d21_qe = &err.d_mu * &gain.g_eps;

    let nchi = n + n_xi;
    let mut acal = DMatrix::zeros(nchi, nchi);
    acal.view_mut((0, 0), (n, n)).copy_from(&a_cl);
    acal.view_mut((n, n), (n_xi, n_xi)).copy_from(&xi.psi.a);

    let mut b1 = DMatrix::zeros(nchi, nq);
    b1.view_mut((0, 0), (n, nq_delta)).copy_from(&b_qd);
    b1.view_mut((0, nq_delta), (n, nq_eps)).copy_from(&b_qe);
    b1.view_mut((n, 0), (n_xi, nq)).copy_from(&xi.b_q());

    let mut c2 = DMatrix::zeros(nz, nchi);
    c2.view_mut((0, 0), (nz, n)).copy_from(&c2_zeta);
    let mut d21 = DMatrix::zeros(nz, nq);
    d21.view_mut((0, 0), (nz, nq_delta)).copy_from(&d21_qd);
    d21.view_mut((0, nq_delta), (nz, nq_eps)).copy_from(&d21_qe);
    let d22 = DMatrix::zeros(nz, n_eta);

    // filter p routing
    let b_p = xi.b_p();
    let d_p = xi.d_p();
    let b_p_delta: DMatrix<f64> = b_p.columns(0, nz).into();
    let b_p_eps: DMatrix<f64> = b_p.columns(nz, nz).into();
    let d_p_delta: DMatrix<f64> = d_p.columns(0, nz).into();
    let d_p_eps: DMatrix<f64> = d_p.columns(nz, nz).into();

    let mut b2 = DMatrix::zeros(nchi, n_eta);
    let mut c1 = DMatrix::zeros(nr, nchi);
    let mut d11 = xi.d_q();
    let mut d12 = DMatrix::zeros(nr, n_eta);
    c1.view_mut((0, n), (nr, n_xi)).copy_from(&xi.psi.c);

    match routing {
        DeltaRouting::Exogenous => {
            // p reads eta = (y, yhat) directly
            b2.view_mut((n, 0), (n_xi, n_eta)).copy_from(&b_p);
            d12.copy_from(&d_p);
        }
        DeltaRouting::ErrorOutput => {
            // p_delta := z = C2 chi + D21 q; p_eps reads yhat from eta
            acal.view_mut((n, 0), (n_xi, n))
                .copy_from(&(&b_p_delta * &c2_zeta));
            b1.view_mut((n, 0), (n_xi, nq))
                .copy_from(&(xi.b_q() + &b_p_delta * &d21));
            b2.view_mut((n, nz), (n_xi, nz)).copy_from(&b_p_eps);
            c1.view_mut((0, 0), (nr, n))
                .copy_from(&(&d_p_delta * &c2_zeta));
            d11 += &d_p_delta * &d21;
            d12.view_mut((0, nz), (nr, nz)).copy_from(&d_p_eps);
        }
    }

    Ok(ExtendedSystem {
        acal,
        b1,
        b2,
        c1,
        c2,
        d11,
        d12,
        d21,
        d22,
        lambda: gain.g_zeta.clone(),
        n_zeta: n,
        n_xi,
        routing,
    })
}

/// Simulate the extended LTI system from χ(0) = 0 on a uniform grid with
/// given inputs; returns (χ, r, z) samples. Inputs are linearly
/// interpolated between samples inside each RK4 step.
pub fn simulate_extended(
    ext: &ExtendedSystem,
    t: &[f64],
    q: &[DVector<f64>],
    eta: &[DVector<f64>],
) -> (Vec<DVector<f64>>, Vec<DVector<f64>>, Vec<DVector<f64>>) {
    let mut chi = DVector::zeros(ext.n_states());
    let mut chis = Vec::with_capacity(t.len());
    let mut rs = Vec::with_capacity(t.len());
    let mut zs = Vec::with_capacity(t.len());
    for k in 0..t.len() {
        rs.push(&ext.c1 * &chi + &ext.d11 * &q[k] + &ext.d12 * &eta[k]);
        zs.push(&ext.c2 * &chi + &ext.d21 * &q[k] + &ext.d22 * &eta[k]);
        chis.push(chi.clone());
        if k + 1 < t.len() {
            let dt = t[k + 1] - t[k];
            let field = |tau: f64, x: &DVector<f64>| {
                let qq = &q[k] * (1.0 - tau) + &q[k + 1] * tau;
                let ee = &eta[k] * (1.0 - tau) + &eta[k + 1] * tau;
                &ext.acal * x + &ext.b1 * qq + &ext.b2 * ee
            };
            let k1 = field(0.0, &chi);
            let k2 = field(0.5, &(&chi + &k1 * (dt / 2.0)));
            let k3 = field(0.5, &(&chi + &k2 * (dt / 2.0)));
            let k4 = field(1.0, &(&chi + &k3 * dt));
            chi += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0);
        }
    }
    (chis, rs, zs)
}
