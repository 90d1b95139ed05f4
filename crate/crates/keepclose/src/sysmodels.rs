//! Core state-space types, dimension algebra, and stability checks.
//!
//! Everything downstream (IQC filters, error-system assembly, extended-system
//! construction) is built on [`StateSpace`]. Disturbance inputs are not a
//! separate pair of matrices: the leading `disturbance_split` input columns
//! of `B`/`D` form the disturbance block, the remaining columns the control
//! block. That keeps one interconnection algebra for all assembly code.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Eigenvalue real-part tolerance for the Hurwitz test. Double-precision
/// eigensolvers jitter near the imaginary axis.
pub const TOL_STAB: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum SysError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("non-finite entry in {0}")]
    NonFiniteEntry(String),
    #[error("eigenvalue iteration did not converge")]
    EigenFailure,
    #[error("empty system list")]
    EmptyList,
    #[error("box bounds out of order: lower > upper at index {0}")]
    BoundOrder(usize),
}

/// Continuous-time linear system (A, B, C, D) with a recorded disturbance
/// input split.
///
/// Input columns `0..disturbance_split` of `B` and `D` are the disturbance
/// channel; columns `disturbance_split..` are the control channel.
#[derive(Debug, Clone, PartialEq)]
pub struct StateSpace {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub c: DMatrix<f64>,
    pub d: DMatrix<f64>,
    pub disturbance_split: usize,
}

/// Serialized form of [`StateSpace`], row-major nested arrays.
#[derive(Debug, Serialize, Deserialize)]
pub struct StateSpaceJson {
    #[serde(rename = "A")]
    pub a: Vec<Vec<f64>>,
    #[serde(rename = "B")]
    pub b: Vec<Vec<f64>>,
    #[serde(rename = "C")]
    pub c: Vec<Vec<f64>>,
    #[serde(rename = "D")]
    pub d: Vec<Vec<f64>>,
    pub disturbance_split: usize,
}

pub fn mat_to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
        .collect()
}

pub fn rows_to_mat(rows: &[Vec<f64>]) -> Result<DMatrix<f64>, SysError> {
    if rows.is_empty() {
        return Ok(DMatrix::zeros(0, 0));
    }
    let ncols = rows[0].len();
    if rows.iter().any(|r| r.len() != ncols) {
        return Err(SysError::DimensionMismatch("ragged rows".into()));
    }
    let mut m = DMatrix::zeros(rows.len(), ncols);
    for (i, row) in rows.iter().enumerate() {
        for (j, &v) in row.iter().enumerate() {
            m[(i, j)] = v;
        }
    }
    Ok(m)
}

impl StateSpace {
    /// Validated constructor. `disturbance_split` marks how many leading
    /// input columns belong to the disturbance block.
    pub fn new(
        a: DMatrix<f64>,
        b: DMatrix<f64>,
        c: DMatrix<f64>,
        d: DMatrix<f64>,
        disturbance_split: usize,
    ) -> Result<Self, SysError> {
        let n = a.nrows();
        if a.ncols() != n {
            return Err(SysError::DimensionMismatch(format!(
                "A must be square, got {}x{}",
                a.nrows(),
                a.ncols()
            )));
        }
        if b.nrows() != n {
            return Err(SysError::DimensionMismatch(format!(
                "B has {} rows, A is {}x{}",
                b.nrows(),
                n,
                n
            )));
        }
        if c.ncols() != n {
            return Err(SysError::DimensionMismatch(format!(
                "C has {} cols, A is {}x{}",
                c.ncols(),
                n,
                n
            )));
        }
        if d.nrows() != c.nrows() || d.ncols() != b.ncols() {
            return Err(SysError::DimensionMismatch(format!(
                "D is {}x{}, expected {}x{}",
                d.nrows(),
                d.ncols(),
                c.nrows(),
                b.ncols()
            )));
        }
        if disturbance_split > b.ncols() {
            return Err(SysError::DimensionMismatch(format!(
                "disturbance split {} exceeds input count {}",
                disturbance_split,
                b.ncols()
            )));
        }
        for (name, m) in [("A", &a), ("B", &b), ("C", &c), ("D", &d)] {
            if m.iter().any(|v| !v.is_finite()) {
                return Err(SysError::NonFiniteEntry(name.into()));
            }
        }
        Ok(Self {
            a,
            b,
            c,
            d,
            disturbance_split,
        })
    }

    pub fn nx(&self) -> usize {
        self.a.nrows()
    }

    /// Total input count, disturbance and control columns together.
    pub fn nu(&self) -> usize {
        self.b.ncols()
    }

    pub fn ny(&self) -> usize {
        self.c.nrows()
    }

    /// Disturbance block of B (leading columns).
    pub fn b_dist(&self) -> DMatrix<f64> {
        self.b.columns(0, self.disturbance_split).into()
    }

    /// Control block of B (trailing columns).
    pub fn b_ctrl(&self) -> DMatrix<f64> {
        self.b
            .columns(self.disturbance_split, self.nu() - self.disturbance_split)
            .into()
    }

    pub fn d_dist(&self) -> DMatrix<f64> {
        self.d.columns(0, self.disturbance_split).into()
    }

    pub fn d_ctrl(&self) -> DMatrix<f64> {
        self.d
            .columns(self.disturbance_split, self.nu() - self.disturbance_split)
            .into()
    }

    /// True when the system carries no internal state (pure feedthrough).
    pub fn is_static(&self) -> bool {
        self.nx() == 0
    }

    pub fn to_json(&self) -> StateSpaceJson {
        StateSpaceJson {
            a: mat_to_rows(&self.a),
            b: mat_to_rows(&self.b),
            c: mat_to_rows(&self.c),
            d: mat_to_rows(&self.d),
            disturbance_split: self.disturbance_split,
        }
    }

    pub fn from_json(j: &StateSpaceJson) -> Result<Self, SysError> {
        Self::new(
            rows_to_mat(&j.a)?,
            rows_to_mat(&j.b)?,
            rows_to_mat(&j.c)?,
            rows_to_mat(&j.d)?,
            j.disturbance_split,
        )
    }
}

/// Hyperrectangle of parameter values (also hosts controller operating boxes
/// and Jacobian domains).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LpvParameterBox {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl LpvParameterBox {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self, SysError> {
        if lower.len() != upper.len() {
            return Err(SysError::DimensionMismatch(format!(
                "box bounds have lengths {} and {}",
                lower.len(),
                upper.len()
            )));
        }
        for (i, (lo, hi)) in lower.iter().zip(upper.iter()).enumerate() {
            if !(lo.is_finite() && hi.is_finite()) {
                return Err(SysError::NonFiniteEntry(format!("box entry {i}")));
            }
            if lo > hi {
                return Err(SysError::BoundOrder(i));
            }
        }
        Ok(Self { lower, upper })
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim()
            && x.iter()
                .zip(self.lower.iter().zip(self.upper.iter()))
                .all(|(v, (lo, hi))| *v >= *lo && *v <= *hi)
    }

    /// Corner of the box selected by one bit per axis (false = lower).
    pub fn corner(&self, bits: &[bool]) -> Vec<f64> {
        bits.iter()
            .enumerate()
            .map(|(i, &b)| if b { self.upper[i] } else { self.lower[i] })
            .collect()
    }
}

/// L2 and Linf norms of one sampled signal, computed on a shared grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SignalNorms {
    pub l2: f64,
    pub linf: f64,
}

impl SignalNorms {
    /// Trapezoidal L2 norm and grid sup norm of a (possibly vector valued)
    /// signal sampled at uniform times `t`. `samples[k]` is the value at
    /// `t[k]`.
    pub fn from_samples(t: &[f64], samples: &[DVector<f64>]) -> Result<Self, SysError> {
        if t.len() != samples.len() || t.is_empty() {
            return Err(SysError::DimensionMismatch(
                "time grid and samples disagree".into(),
            ));
        }
        let sq: Vec<f64> = samples.iter().map(|v| v.dot(v)).collect();
        let mut acc = 0.0;
        for k in 1..t.len() {
            acc += 0.5 * (t[k] - t[k - 1]) * (sq[k] + sq[k - 1]);
        }
        let linf = sq.iter().fold(0.0_f64, |m, &v| m.max(v)).sqrt();
        Ok(Self {
            l2: acc.max(0.0).sqrt(),
            linf,
        })
    }
}

/// Trapezoidal integral of scalar samples on grid `t`.
pub fn trapezoid(t: &[f64], f: &[f64]) -> f64 {
    let mut acc = 0.0;
    for k in 1..t.len() {
        acc += 0.5 * (t[k] - t[k - 1]) * (f[k] + f[k - 1]);
    }
    acc
}

/// True iff every eigenvalue of `a` has real part below `-TOL_STAB`.
pub fn is_hurwitz(a: &DMatrix<f64>) -> Result<bool, SysError> {
    if a.nrows() != a.ncols() {
        return Err(SysError::DimensionMismatch("A must be square".into()));
    }
    if a.nrows() == 0 {
        return Ok(true);
    }
    let schur = a
        .clone()
        .try_schur(1e-14, 10_000)
        .ok_or(SysError::EigenFailure)?;
    let eigs = schur.complex_eigenvalues();
    Ok(eigs.iter().all(|e| e.re < -TOL_STAB))
}

/// Complex eigenvalues via the real Schur form.
pub fn eigenvalues(a: &DMatrix<f64>) -> Result<Vec<nalgebra::Complex<f64>>, SysError> {
    if a.nrows() != a.ncols() {
        return Err(SysError::DimensionMismatch("A must be square".into()));
    }
    if a.nrows() == 0 {
        return Ok(vec![]);
    }
    let schur = a
        .clone()
        .try_schur(1e-14, 10_000)
        .ok_or(SysError::EigenFailure)?;
    Ok(schur.complex_eigenvalues().iter().copied().collect())
}

/// Stack systems block-diagonally: states, inputs, and outputs concatenate,
/// off-blocks are zero. Disturbance splits concatenate in order.
pub fn block_diag(systems: &[StateSpace]) -> Result<StateSpace, SysError> {
    if systems.is_empty() {
        return Err(SysError::EmptyList);
    }
    let nx: usize = systems.iter().map(|s| s.nx()).sum();
    let nu: usize = systems.iter().map(|s| s.nu()).sum();
    let ny: usize = systems.iter().map(|s| s.ny()).sum();
    let mut a = DMatrix::zeros(nx, nx);
    let mut b = DMatrix::zeros(nx, nu);
    let mut c = DMatrix::zeros(ny, nx);
    let mut d = DMatrix::zeros(ny, nu);
    let (mut ix, mut iu, mut iy) = (0, 0, 0);
    for s in systems {
        a.view_mut((ix, ix), (s.nx(), s.nx())).copy_from(&s.a);
        b.view_mut((ix, iu), (s.nx(), s.nu())).copy_from(&s.b);
        c.view_mut((iy, ix), (s.ny(), s.nx())).copy_from(&s.c);
        d.view_mut((iy, iu), (s.ny(), s.nu())).copy_from(&s.d);
        ix += s.nx();
        iu += s.nu();
        iy += s.ny();
    }
    // A meaningful split survives only when the blocks are homogeneous;
    // callers that care (the IQC combiner) track channel layout themselves.
    let split: usize = systems.iter().map(|s| s.disturbance_split).sum();
    StateSpace::new(a, b, c, d, split)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn arm_error_matrices() -> (DMatrix<f64>, DMatrix<f64>, DMatrix<f64>, DMatrix<f64>) {
        let a = DMatrix::from_row_slice(2, 2, &[-6.0, -9.0, 1.0, 0.0]);
        // inputs ordered (q, delta_tau): disturbance column first
        let b = DMatrix::from_row_slice(2, 2, &[10.0, 1.0, 0.0, 0.0]);
        let c = DMatrix::from_row_slice(1, 2, &[0.0, 1.0]);
        let d = DMatrix::zeros(1, 2);
        (a, b, c, d)
    }

    #[test]
    fn arm_error_system_constructs() {
        let (a, b, c, d) = arm_error_matrices();
        let ss = StateSpace::new(a, b, c, d, 1).unwrap();
        assert_eq!(ss.nx(), 2);
        assert_eq!(ss.b_dist(), DMatrix::from_row_slice(2, 1, &[10.0, 0.0]));
        assert_eq!(ss.b_ctrl(), DMatrix::from_row_slice(2, 1, &[1.0, 0.0]));
    }

    #[test]
    fn zero_system_accepted() {
        let z = DMatrix::zeros(1, 1);
        let ss = StateSpace::new(z.clone(), z.clone(), z.clone(), z, 0).unwrap();
        assert_eq!(ss.nx(), 1);
        assert!(ss.a.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let a = DMatrix::<f64>::identity(2, 2);
        let b = DMatrix::<f64>::zeros(3, 1);
        let c = DMatrix::<f64>::zeros(1, 2);
        let d = DMatrix::<f64>::zeros(1, 1);
        assert!(matches!(
            StateSpace::new(a, b, c, d, 0),
            Err(SysError::DimensionMismatch(_))
        ));
    }

    #[test]
    fn non_finite_rejected() {
        let a = DMatrix::from_row_slice(1, 1, &[f64::NAN]);
        let z = DMatrix::zeros(1, 1);
        assert!(matches!(
            StateSpace::new(a, z.clone(), z.clone(), z, 0),
            Err(SysError::NonFiniteEntry(_))
        ));
    }

    #[test]
    fn hurwitz_examples() {
        // characteristic polynomial (s+3)^2: both eigenvalues at -3
        let a = DMatrix::from_row_slice(2, 2, &[-6.0, -9.0, 1.0, 0.0]);
        assert!(is_hurwitz(&a).unwrap());
        let marginal = DMatrix::from_row_slice(1, 1, &[0.0]);
        assert!(!is_hurwitz(&marginal).unwrap());
        let unstable = DMatrix::from_row_slice(1, 1, &[1.0]);
        assert!(!is_hurwitz(&unstable).unwrap());
    }

    #[test]
    fn hurwitz_agrees_with_decay_simulation() {
        let mut rng = StdRng::seed_from_u64(7);
        for _ in 0..100 {
            let mut a = DMatrix::zeros(3, 3);
            for i in 0..3 {
                for j in 0..3 {
                    a[(i, j)] = rng.gen_range(-2.0..2.0);
                }
            }
            // shift diagonal to get a mix of stable and unstable samples
            let shift: f64 = rng.gen_range(-3.0..1.5);
            for i in 0..3 {
                a[(i, i)] += shift;
            }
            let hurwitz = is_hurwitz(&a).unwrap();
            // skip samples too close to marginal for the decay heuristic
            let max_re = eigenvalues(&a)
                .unwrap()
                .iter()
                .map(|e| e.re)
                .fold(f64::NEG_INFINITY, f64::max);
            if max_re.abs() < 0.05 {
                continue;
            }
            // propagate e^{At} x0 by small steps and compare norms at t=0 vs t=40
            let dt = 1e-3;
            let steps = 40_000;
            let x0 = DVector::from_vec(vec![1.0, 1.0, 1.0]);
            let mut x = x0.clone();
            let mut finite = true;
            for _ in 0..steps {
                let k1 = &a * &x;
                let k2 = &a * (&x + &k1 * (dt / 2.0));
                let k3 = &a * (&x + &k2 * (dt / 2.0));
                let k4 = &a * (&x + &k3 * dt);
                x += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0);
                if !x.iter().all(|v| v.is_finite()) {
                    finite = false;
                    break;
                }
            }
            let decayed = finite && x.norm() < 0.5 * x0.norm();
            assert_eq!(
                hurwitz, decayed,
                "disagreement at max_re={max_re}, |x(T)|={:?}",
                finite.then(|| x.norm())
            );
        }
    }

    #[test]
    fn block_diag_structure() {
        let f1 = StateSpace::new(
            DMatrix::from_row_slice(1, 1, &[-1.0]),
            DMatrix::from_row_slice(1, 1, &[1.0]),
            DMatrix::from_row_slice(1, 1, &[1.0]),
            DMatrix::zeros(1, 1),
            0,
        )
        .unwrap();
        let f2 = StateSpace::new(
            DMatrix::from_row_slice(1, 1, &[-2.0]),
            DMatrix::from_row_slice(1, 1, &[3.0]),
            DMatrix::from_row_slice(1, 1, &[1.0]),
            DMatrix::zeros(1, 1),
            0,
        )
        .unwrap();
        let g = block_diag(&[f1.clone(), f2]).unwrap();
        assert_eq!(g.nx(), 2);
        assert_eq!(g.a[(0, 1)], 0.0);
        assert_eq!(g.a[(1, 0)], 0.0);
        assert_eq!(g.b[(0, 1)], 0.0);
        assert_eq!(g.b[(1, 0)], 0.0);

        let single = block_diag(&[f1.clone()]).unwrap();
        assert_eq!(single, f1);

        assert!(matches!(block_diag(&[]), Err(SysError::EmptyList)));
    }

    #[test]
    fn block_diag_output_dimension_count() {
        // two 2-output static-filter-shaped systems stack to 4 outputs
        let psi = |beta: f64, alpha: f64| {
            StateSpace::new(
                DMatrix::zeros(0, 0),
                DMatrix::zeros(0, 2),
                DMatrix::zeros(2, 0),
                DMatrix::from_row_slice(2, 2, &[beta, -1.0, -alpha, 1.0]),
                0,
            )
            .unwrap()
        };
        let xi = block_diag(&[psi(0.364, 0.0), psi(0.2, -0.2)]).unwrap();
        assert_eq!(xi.ny(), 4);
        assert_eq!(xi.nu(), 4);
        assert_eq!(xi.nx(), 0);
    }

    #[test]
    fn block_diag_preserves_eigenvalue_multiset() {
        let mut rng = StdRng::seed_from_u64(21);
        for _ in 0..20 {
            let n1 = rng.gen_range(2..=4);
            let n2 = rng.gen_range(2..=4);
            let rand_sys = |rng: &mut StdRng, n: usize| {
                let a = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
                StateSpace::new(
                    a,
                    DMatrix::zeros(n, 1),
                    DMatrix::zeros(1, n),
                    DMatrix::zeros(1, 1),
                    0,
                )
                .unwrap()
            };
            let s1 = rand_sys(&mut rng, n1);
            let s2 = rand_sys(&mut rng, n2);
            let combined = block_diag(&[s1.clone(), s2.clone()]).unwrap();
            let mut expected: Vec<(f64, f64)> = eigenvalues(&s1.a)
                .unwrap()
                .into_iter()
                .chain(eigenvalues(&s2.a).unwrap())
                .map(|e| (e.re, e.im))
                .collect();
            let mut got: Vec<(f64, f64)> = eigenvalues(&combined.a)
                .unwrap()
                .into_iter()
                .map(|e| (e.re, e.im))
                .collect();
            let key = |p: &(f64, f64)| (p.0, p.1);
            expected.sort_by(|x, y| key(x).partial_cmp(&key(y)).unwrap());
            got.sort_by(|x, y| key(x).partial_cmp(&key(y)).unwrap());
            for (e, g) in expected.iter().zip(got.iter()) {
                assert_relative_eq!(e.0, g.0, epsilon = 1e-8);
                assert_relative_eq!(e.1.abs(), g.1.abs(), epsilon = 1e-8);
            }
        }
    }

    #[test]
    fn json_round_trip() {
        let (a, b, c, d) = arm_error_matrices();
        let ss = StateSpace::new(a, b, c, d, 1).unwrap();
        let text = serde_json::to_string(&ss.to_json()).unwrap();
        let back = StateSpace::from_json(&serde_json::from_str(&text).unwrap()).unwrap();
        assert_eq!(ss, back);
    }

    #[test]
    fn signal_norms_basic() {
        let t: Vec<f64> = (0..=1000).map(|k| k as f64 * 1e-2).collect();
        let samples: Vec<DVector<f64>> = t
            .iter()
            .map(|&tk| DVector::from_vec(vec![(tk).sin()]))
            .collect();
        let norms = SignalNorms::from_samples(&t, &samples).unwrap();
        // integral of sin^2 over [0, 10] = 5 - sin(20)/4
        let expected = (5.0 - (20.0_f64).sin() / 4.0).sqrt();
        assert_relative_eq!(norms.l2, expected, epsilon = 1e-4);
        assert_relative_eq!(norms.linf, 1.0, epsilon = 1e-4);
    }
}
