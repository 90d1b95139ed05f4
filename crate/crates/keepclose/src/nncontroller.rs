//! Neural controller representation, differentiation, and enclosure.
//!
//! The controller is a plain multilayer perceptron with smooth activations.
//! Three views of it matter here:
//!
//! * point evaluation ([`forward`]) closes the simulated loop,
//! * the exact Jacobian ([`jacobian`]) realizes the mean-value linearization
//!   of a controller difference,
//! * a sound interval enclosure of the Jacobian over a box
//!   ([`jacobian_box`]) produces the vertex set that the certificates sweep.
//!
//! Nonsmooth activations are deliberately unsupported: the mean-value step
//! requires differentiability everywhere on the segment between the two
//! compared inputs.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::sysmodels::LpvParameterBox;

#[derive(Debug, Error)]
pub enum NnError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("interval bounds out of order at ({0},{1})")]
    BoundOrder(usize, usize),
    #[error("vertex count {count} exceeds cap {cap}")]
    VertexExplosion { count: u128, cap: usize },
    #[error("grid density {0} below minimum of 100 per axis")]
    GridTooCoarse(usize),
    #[error("training diverged: loss non-decreasing over patience window")]
    Diverged,
    #[error("unsupported weight file: {0}")]
    BadWeightFile(String),
}

/// Elementwise activation. Only smooth choices are representable.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Tanh,
    Sigmoid,
    Linear,
}

impl Activation {
    pub fn eval(self, x: f64) -> f64 {
        match self {
            Activation::Tanh => x.tanh(),
            Activation::Sigmoid => 1.0 / (1.0 + (-x).exp()),
            Activation::Linear => x,
        }
    }

    pub fn deriv(self, x: f64) -> f64 {
        match self {
            Activation::Tanh => {
                let t = x.tanh();
                1.0 - t * t
            }
            Activation::Sigmoid => {
                let s = 1.0 / (1.0 + (-x).exp());
                s * (1.0 - s)
            }
            Activation::Linear => 1.0,
        }
    }

    /// Range of the derivative over pre-activation interval [lo, hi].
    ///
    /// tanh' and sigmoid' are even and decrease away from zero, so the range
    /// follows from the interval's distance to the origin.
    pub fn deriv_range(self, lo: f64, hi: f64) -> (f64, f64) {
        match self {
            Activation::Linear => (1.0, 1.0),
            _ => {
                let far = lo.abs().max(hi.abs());
                let near = if lo <= 0.0 && hi >= 0.0 {
                    0.0
                } else {
                    lo.abs().min(hi.abs())
                };
                (self.deriv(far), self.deriv(near))
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct Layer {
    pub w: DMatrix<f64>,
    pub b: DVector<f64>,
    pub act: Activation,
}

/// Layered affine maps with elementwise activations.
#[derive(Debug, Clone)]
pub struct MlpController {
    pub layers: Vec<Layer>,
    pub input_dim: usize,
    pub output_dim: usize,
}

#[derive(Debug, Serialize, Deserialize)]
struct LayerJson {
    #[serde(rename = "W")]
    w: Vec<Vec<f64>>,
    b: Vec<f64>,
    act: Activation,
}

/// Weight file layout: `{"layers":[{"W":[[...]],"b":[...],"act":"tanh"}]}`,
/// row-major.
#[derive(Debug, Serialize, Deserialize)]
struct WeightsJson {
    layers: Vec<LayerJson>,
}

impl MlpController {
    pub fn new(layers: Vec<Layer>) -> Result<Self, NnError> {
        if layers.is_empty() {
            return Err(NnError::DimensionMismatch("no layers".into()));
        }
        for pair in layers.windows(2) {
            if pair[1].w.ncols() != pair[0].w.nrows() {
                return Err(NnError::DimensionMismatch(format!(
                    "layer output {} feeds layer input {}",
                    pair[0].w.nrows(),
                    pair[1].w.ncols()
                )));
            }
        }
        for (k, l) in layers.iter().enumerate() {
            if l.b.len() != l.w.nrows() {
                return Err(NnError::DimensionMismatch(format!(
                    "layer {k}: bias length {} vs {} rows",
                    l.b.len(),
                    l.w.nrows()
                )));
            }
        }
        let input_dim = layers[0].w.ncols();
        let output_dim = layers.last().unwrap().w.nrows();
        Ok(Self {
            layers,
            input_dim,
            output_dim,
        })
    }

    pub fn to_json_string(&self) -> String {
        let j = WeightsJson {
            layers: self
                .layers
                .iter()
                .map(|l| LayerJson {
                    w: crate::sysmodels::mat_to_rows(&l.w),
                    b: l.b.iter().copied().collect(),
                    act: l.act,
                })
                .collect(),
        };
        serde_json::to_string_pretty(&j).unwrap()
    }

    pub fn from_json_str(text: &str) -> Result<Self, NnError> {
        let j: WeightsJson =
            serde_json::from_str(text).map_err(|e| NnError::BadWeightFile(e.to_string()))?;
        let layers = j
            .layers
            .into_iter()
            .map(|l| {
                let w = crate::sysmodels::rows_to_mat(&l.w)
                    .map_err(|e| NnError::BadWeightFile(e.to_string()))?;
                Ok(Layer {
                    b: DVector::from_vec(l.b),
                    w,
                    act: l.act,
                })
            })
            .collect::<Result<Vec<_>, NnError>>()?;
        Self::new(layers)
    }
}

/// Entrywise interval matrix, `lo <= hi`.
#[derive(Debug, Clone, PartialEq)]
pub struct IntervalMatrix {
    pub lo: DMatrix<f64>,
    pub hi: DMatrix<f64>,
}

impl IntervalMatrix {
    pub fn new(lo: DMatrix<f64>, hi: DMatrix<f64>) -> Result<Self, NnError> {
        if lo.shape() != hi.shape() {
            return Err(NnError::DimensionMismatch(format!(
                "interval shapes {:?} vs {:?}",
                lo.shape(),
                hi.shape()
            )));
        }
        for i in 0..lo.nrows() {
            for j in 0..lo.ncols() {
                if lo[(i, j)] > hi[(i, j)] {
                    return Err(NnError::BoundOrder(i, j));
                }
            }
        }
        Ok(Self { lo, hi })
    }

    pub fn point(m: DMatrix<f64>) -> Self {
        Self {
            lo: m.clone(),
            hi: m,
        }
    }

    pub fn nrows(&self) -> usize {
        self.lo.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.lo.ncols()
    }

    pub fn contains(&self, m: &DMatrix<f64>, tol: f64) -> bool {
        m.shape() == self.lo.shape()
            && (0..m.nrows()).all(|i| {
                (0..m.ncols())
                    .all(|j| m[(i, j)] >= self.lo[(i, j)] - tol && m[(i, j)] <= self.hi[(i, j)] + tol)
            })
    }

    /// Interval product self * rhs (exact per-entry min/max over products).
    pub fn mul_interval(&self, rhs: &IntervalMatrix) -> IntervalMatrix {
        assert_eq!(self.ncols(), rhs.nrows());
        let (m, n, p) = (self.nrows(), rhs.ncols(), self.ncols());
        let mut lo = DMatrix::zeros(m, n);
        let mut hi = DMatrix::zeros(m, n);
        for i in 0..m {
            for j in 0..n {
                let (mut acc_lo, mut acc_hi) = (0.0, 0.0);
                for k in 0..p {
                    let (a, b) = (self.lo[(i, k)], self.hi[(i, k)]);
                    let (c, d) = (rhs.lo[(k, j)], rhs.hi[(k, j)]);
                    let prods = [a * c, a * d, b * c, b * d];
                    acc_lo += prods.iter().copied().fold(f64::INFINITY, f64::min);
                    acc_hi += prods.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                }
                lo[(i, j)] = acc_lo;
                hi[(i, j)] = acc_hi;
            }
        }
        IntervalMatrix { lo, hi }
    }

    /// Scale each row range by a diagonal of derivative ranges
    /// (`d_lo[i] >= 0` is assumed, which holds for all supported
    /// activations).
    fn scale_rows(&self, d_lo: &[f64], d_hi: &[f64]) -> IntervalMatrix {
        let mut lo = self.lo.clone();
        let mut hi = self.hi.clone();
        for i in 0..self.nrows() {
            for j in 0..self.ncols() {
                let (a, b) = (self.lo[(i, j)], self.hi[(i, j)]);
                let prods = [a * d_lo[i], a * d_hi[i], b * d_lo[i], b * d_hi[i]];
                lo[(i, j)] = prods.iter().copied().fold(f64::INFINITY, f64::min);
                hi[(i, j)] = prods.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            }
        }
        IntervalMatrix { lo, hi }
    }
}

/// Residual bound of a trained controller against its teacher over a box.
#[derive(Debug, Clone)]
pub struct EpsilonBound {
    pub kind: EpsilonKind,
    pub domain: LpvParameterBox,
    pub grid_density: usize,
}

#[derive(Debug, Clone)]
pub enum EpsilonKind {
    /// Amplitude/gain bound c >= 0.
    NormBound(f64),
    /// Componentwise sector of the residual against one designated scalar
    /// input channel, normalized so `alpha <= beta`.
    Sector {
        alpha: DVector<f64>,
        beta: DVector<f64>,
        anchor_input: usize,
    },
}

/// How [`estimate_epsilon`] should summarize the sampled residual.
#[derive(Debug, Clone, Copy)]
pub enum EpsilonFit {
    Norm,
    /// Fit per-output sector slopes against the given input channel.
    Sector { anchor_input: usize },
}

/// Relative inflation applied to sampled residual extremes. Sampling is not
/// exhaustive; the margin keeps the hard-IQC assumption defensible.
pub const EPSILON_MARGIN: f64 = 0.05;

pub fn forward(net: &MlpController, y: &DVector<f64>) -> Result<DVector<f64>, NnError> {
    if y.len() != net.input_dim {
        return Err(NnError::DimensionMismatch(format!(
            "input length {} vs {}",
            y.len(),
            net.input_dim
        )));
    }
    let mut v = y.clone();
    for layer in &net.layers {
        v = &layer.w * v + &layer.b;
        v.apply(|x| *x = layer.act.eval(*x));
    }
    Ok(v)
}

/// Exact Jacobian at `y` by the chain rule over layers.
pub fn jacobian(net: &MlpController, y: &DVector<f64>) -> Result<DMatrix<f64>, NnError> {
    if y.len() != net.input_dim {
        return Err(NnError::DimensionMismatch(format!(
            "input length {} vs {}",
            y.len(),
            net.input_dim
        )));
    }
    let mut v = y.clone();
    let mut jac = DMatrix::identity(net.input_dim, net.input_dim);
    for layer in &net.layers {
        let z = &layer.w * &v;
        let z = z + &layer.b;
        let d = DVector::from_iterator(z.len(), z.iter().map(|&x| layer.act.deriv(x)));
        // J <- diag(d) * W * J
        let mut wj = &layer.w * jac;
        for i in 0..wj.nrows() {
            for j in 0..wj.ncols() {
                wj[(i, j)] *= d[i];
            }
        }
        jac = wj;
        v = z.map(|x| layer.act.eval(x));
    }
    Ok(jac)
}

/// Sound entrywise enclosure of the Jacobian over `domain`.
///
/// Forward interval propagation: pre-activation intervals bound the
/// activation-derivative diagonals, and interval matrix products accumulate
/// the layer chain. The enclosure contains `jacobian(net, y)` for every `y`
/// in the box; it is not claimed tight.
pub fn jacobian_box(net: &MlpController, domain: &LpvParameterBox) -> Result<IntervalMatrix, NnError> {
    if domain.dim() != net.input_dim {
        return Err(NnError::DimensionMismatch(format!(
            "box dim {} vs input dim {}",
            domain.dim(),
            net.input_dim
        )));
    }
    let mut x_lo = DVector::from_vec(domain.lower.clone());
    let mut x_hi = DVector::from_vec(domain.upper.clone());
    let mut jac = IntervalMatrix::point(DMatrix::identity(net.input_dim, net.input_dim));
    for layer in &net.layers {
        // affine image interval: split W by sign
        let rows = layer.w.nrows();
        let mut z_lo = DVector::zeros(rows);
        let mut z_hi = DVector::zeros(rows);
        for i in 0..rows {
            let (mut lo, mut hi) = (layer.b[i], layer.b[i]);
            for j in 0..layer.w.ncols() {
                let w = layer.w[(i, j)];
                if w >= 0.0 {
                    lo += w * x_lo[j];
                    hi += w * x_hi[j];
                } else {
                    lo += w * x_hi[j];
                    hi += w * x_lo[j];
                }
            }
            z_lo[i] = lo;
            z_hi[i] = hi;
        }
        let wj = IntervalMatrix::point(layer.w.clone()).mul_interval(&jac);
        let (d_lo, d_hi): (Vec<f64>, Vec<f64>) = (0..rows)
            .map(|i| layer.act.deriv_range(z_lo[i], z_hi[i]))
            .unzip();
        jac = wj.scale_rows(&d_lo, &d_hi);
        x_lo = DVector::from_iterator(rows, z_lo.iter().map(|&z| layer.act.eval(z)));
        x_hi = DVector::from_iterator(rows, z_hi.iter().map(|&z| layer.act.eval(z)));
    }
    Ok(jac)
}

/// Tighter enclosure: subdivide each axis into `subdivisions` pieces,
/// enclose the Jacobian over every cell, and take the entrywise hull.
///
/// The union of cell enclosures still contains every pointwise Jacobian,
/// so soundness is preserved while the interval-arithmetic slack shrinks
/// roughly linearly with the cell size.
pub fn jacobian_box_refined(
    net: &MlpController,
    domain: &LpvParameterBox,
    subdivisions: usize,
) -> Result<IntervalMatrix, NnError> {
    let k = subdivisions.max(1);
    let d = domain.dim();
    let mut idx = vec![0usize; d];
    let mut hull: Option<IntervalMatrix> = None;
    loop {
        let mut lo = Vec::with_capacity(d);
        let mut hi = Vec::with_capacity(d);
        for ax in 0..d {
            let w = (domain.upper[ax] - domain.lower[ax]) / k as f64;
            lo.push(domain.lower[ax] + w * idx[ax] as f64);
            hi.push(domain.lower[ax] + w * (idx[ax] + 1) as f64);
        }
        let cell = LpvParameterBox::new(lo, hi).map_err(|e| {
            NnError::DimensionMismatch(e.to_string())
        })?;
        let iv = jacobian_box(net, &cell)?;
        hull = Some(match hull {
            None => iv,
            Some(h) => IntervalMatrix {
                lo: h.lo.zip_map(&iv.lo, f64::min),
                hi: h.hi.zip_map(&iv.hi, f64::max),
            },
        });
        let mut ax = 0;
        loop {
            if ax == d {
                return Ok(hull.unwrap());
            }
            idx[ax] += 1;
            if idx[ax] < k {
                break;
            }
            idx[ax] = 0;
            ax += 1;
        }
    }
}

/// All corner matrices of the interval, degenerate entries fixed.
///
/// Corners are ordered lexicographically over the free entries in row-major
/// order, lower bound before upper bound.
pub fn vertices(iv: &IntervalMatrix, cap: usize) -> Result<Vec<DMatrix<f64>>, NnError> {
    let mut free = Vec::new();
    for i in 0..iv.nrows() {
        for j in 0..iv.ncols() {
            if iv.lo[(i, j)] < iv.hi[(i, j)] {
                free.push((i, j));
            }
        }
    }
    let count: u128 = 1u128 << free.len().min(127);
    if free.len() >= 128 || count > cap as u128 {
        return Err(NnError::VertexExplosion {
            count: if free.len() >= 128 { u128::MAX } else { count },
            cap,
        });
    }
    let mut out = Vec::with_capacity(count as usize);
    for idx in 0..count {
        let mut m = iv.lo.clone();
        for (bit, &(i, j)) in free.iter().enumerate() {
            // first free entry is the most significant choice
            let take_hi = (idx >> (free.len() - 1 - bit)) & 1 == 1;
            if take_hi {
                m[(i, j)] = iv.hi[(i, j)];
            }
        }
        out.push(m);
    }
    Ok(out)
}

/// Default cap for [`vertices`].
pub const VERTEX_CAP: usize = 4096;

fn grid_points(domain: &LpvParameterBox, density: usize) -> Vec<DVector<f64>> {
    let d = domain.dim();
    let mut pts = Vec::new();
    let mut idx = vec![0usize; d];
    loop {
        let p = DVector::from_iterator(
            d,
            (0..d).map(|k| {
                let a = domain.lower[k];
                let b = domain.upper[k];
                if density == 1 {
                    0.5 * (a + b)
                } else {
                    a + (b - a) * idx[k] as f64 / (density - 1) as f64
                }
            }),
        );
        pts.push(p);
        let mut k = 0;
        loop {
            if k == d {
                return pts;
            }
            idx[k] += 1;
            if idx[k] < density {
                break;
            }
            idx[k] = 0;
            k += 1;
        }
    }
}

/// Sample the controller residual against an ideal controller on a dense
/// grid and return an inflated bound of the chosen kind.
pub fn estimate_epsilon<F>(
    net: &MlpController,
    ideal: F,
    domain: &LpvParameterBox,
    grid_density: usize,
    fit: EpsilonFit,
) -> Result<EpsilonBound, NnError>
where
    F: Fn(&DVector<f64>) -> DVector<f64>,
{
    if grid_density < 100 {
        return Err(NnError::GridTooCoarse(grid_density));
    }
    if domain.dim() != net.input_dim {
        return Err(NnError::DimensionMismatch(format!(
            "box dim {} vs input dim {}",
            domain.dim(),
            net.input_dim
        )));
    }
    let pts = grid_points(domain, grid_density);
    match fit {
        EpsilonFit::Norm => {
            let mut max_abs = 0.0_f64;
            for p in &pts {
                let eps = forward(net, p)? - ideal(p);
                max_abs = max_abs.max(eps.amax());
            }
            Ok(EpsilonBound {
                kind: EpsilonKind::NormBound((1.0 + EPSILON_MARGIN) * max_abs),
                domain: domain.clone(),
                grid_density,
            })
        }
        EpsilonFit::Sector { anchor_input } => {
            if anchor_input >= net.input_dim {
                return Err(NnError::DimensionMismatch(format!(
                    "anchor input {anchor_input} out of range"
                )));
            }
            let scale = domain.upper[anchor_input]
                .abs()
                .max(domain.lower[anchor_input].abs())
                .max(1e-12);
            let floor = 1e-3 * scale;
            let m = net.output_dim;
            let mut alpha = DVector::from_element(m, f64::INFINITY);
            let mut beta = DVector::from_element(m, f64::NEG_INFINITY);
            for p in &pts {
                let anchor = p[anchor_input];
                if anchor.abs() < floor {
                    continue;
                }
                let eps = forward(net, p)? - ideal(p);
                for i in 0..m {
                    let slope = eps[i] / anchor;
                    alpha[i] = alpha[i].min(slope);
                    beta[i] = beta[i].max(slope);
                }
            }
            for i in 0..m {
                if !alpha[i].is_finite() || !beta[i].is_finite() {
                    alpha[i] = 0.0;
                    beta[i] = 0.0;
                }
                let span = alpha[i].abs().max(beta[i].abs());
                alpha[i] -= EPSILON_MARGIN * span;
                beta[i] += EPSILON_MARGIN * span;
            }
            Ok(EpsilonBound {
                kind: EpsilonKind::Sector {
                    alpha,
                    beta,
                    anchor_input,
                },
                domain: domain.clone(),
                grid_density,
            })
        }
    }
}

/// Layer sizes and activations for [`fit_to_teacher`]; the final entry is
/// the output layer.
#[derive(Debug, Clone)]
pub struct MlpArch {
    pub input_dim: usize,
    pub layers: Vec<(usize, Activation)>,
}

/// Training hyperparameters for the teacher-fitting routine.
#[derive(Debug, Clone)]
pub struct FitOptions {
    pub samples_per_axis: usize,
    pub iterations: usize,
    pub learning_rate: f64,
    pub patience: usize,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            samples_per_axis: 17,
            iterations: 4000,
            learning_rate: 0.02,
            patience: 600,
        }
    }
}

/// Deterministic least-squares fit of an MLP to a teacher function on a box.
///
/// Full-batch Adam on grid samples; identical seeds give bitwise-identical
/// weights. The fit is plumbing — any weights whose estimated residual bound
/// is finite are acceptable downstream.
pub fn fit_to_teacher<F>(
    ideal: F,
    domain: &LpvParameterBox,
    arch: &MlpArch,
    seed: u64,
    opts: &FitOptions,
) -> Result<MlpController, NnError>
where
    F: Fn(&DVector<f64>) -> DVector<f64>,
{
    if arch.input_dim != domain.dim() {
        return Err(NnError::DimensionMismatch(format!(
            "arch input {} vs box dim {}",
            arch.input_dim,
            domain.dim()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut layers = Vec::new();
    let mut fan_in = arch.input_dim;
    for &(size, act) in &arch.layers {
        let scale = (1.0 / fan_in as f64).sqrt();
        let w = DMatrix::from_fn(size, fan_in, |_, _| rng.gen_range(-scale..scale));
        let b = DVector::from_fn(size, |_, _| rng.gen_range(-0.1..0.1));
        layers.push(Layer { w, b, act });
        fan_in = size;
    }
    let mut net = MlpController::new(layers)?;

    let pts = grid_points(domain, opts.samples_per_axis);
    let targets: Vec<DVector<f64>> = pts.iter().map(|p| ideal(p)).collect();
    let n = pts.len() as f64;

    // Adam state per layer
    let mut mw: Vec<DMatrix<f64>> = net.layers.iter().map(|l| DMatrix::zeros(l.w.nrows(), l.w.ncols())).collect();
    let mut vw = mw.clone();
    let mut mb: Vec<DVector<f64>> = net.layers.iter().map(|l| DVector::zeros(l.b.len())).collect();
    let mut vb = mb.clone();
    let (beta1, beta2, eps_adam) = (0.9, 0.999, 1e-8);

    let mut best_loss = f64::INFINITY;
    let mut since_best = 0usize;
    for it in 0..opts.iterations {
        // forward pass storing activations and pre-activations
        let l_count = net.layers.len();
        let mut grads_w: Vec<DMatrix<f64>> = net
            .layers
            .iter()
            .map(|l| DMatrix::zeros(l.w.nrows(), l.w.ncols()))
            .collect();
        let mut grads_b: Vec<DVector<f64>> =
            net.layers.iter().map(|l| DVector::zeros(l.b.len())).collect();
        let mut loss = 0.0;
        for (p, target) in pts.iter().zip(targets.iter()) {
            let mut acts = Vec::with_capacity(l_count + 1);
            let mut pre = Vec::with_capacity(l_count);
            acts.push(p.clone());
            for layer in &net.layers {
                let z = &layer.w * acts.last().unwrap() + &layer.b;
                let mut a = z.clone();
                a.apply(|x| *x = layer.act.eval(*x));
                pre.push(z);
                acts.push(a);
            }
            let err = acts.last().unwrap() - target;
            loss += err.dot(&err);
            // backprop
            let mut delta = err * (2.0 / n);
            for k in (0..l_count).rev() {
                let dz = DVector::from_iterator(
                    delta.len(),
                    delta
                        .iter()
                        .zip(pre[k].iter())
                        .map(|(&d, &z)| d * net.layers[k].act.deriv(z)),
                );
                grads_w[k] += &dz * acts[k].transpose();
                grads_b[k] += &dz;
                if k > 0 {
                    delta = net.layers[k].w.transpose() * dz;
                }
            }
        }
        loss /= n;
        if !loss.is_finite() || loss > 10.0 * best_loss.max(1e-12) + 1e3 {
            return Err(NnError::Diverged);
        }
        if loss < best_loss - 1e-15 {
            best_loss = loss;
            since_best = 0;
        } else {
            since_best += 1;
            if since_best > opts.patience {
                // plateaued: treat as converged unless the loss has been
                // climbing away from the best seen
                if loss > 1.5 * best_loss + 1e-12 {
                    return Err(NnError::Diverged);
                }
                break;
            }
        }
        let t = (it + 1) as f64;
        let lr = opts.learning_rate * (1.0 - it as f64 / opts.iterations as f64).max(0.1);
        for k in 0..l_count {
            mw[k] = &mw[k] * beta1 + &grads_w[k] * (1.0 - beta1);
            vw[k] = &vw[k] * beta2 + grads_w[k].component_mul(&grads_w[k]) * (1.0 - beta2);
            mb[k] = &mb[k] * beta1 + &grads_b[k] * (1.0 - beta1);
            vb[k] = &vb[k] * beta2 + grads_b[k].component_mul(&grads_b[k]) * (1.0 - beta2);
            let bc1 = 1.0 - beta1.powf(t);
            let bc2 = 1.0 - beta2.powf(t);
            for i in 0..mw[k].nrows() {
                for j in 0..mw[k].ncols() {
                    let mhat = mw[k][(i, j)] / bc1;
                    let vhat = vw[k][(i, j)] / bc2;
                    net.layers[k].w[(i, j)] -= lr * mhat / (vhat.sqrt() + eps_adam);
                }
            }
            for i in 0..mb[k].len() {
                let mhat = mb[k][i] / bc1;
                let vhat = vb[k][i] / bc2;
                net.layers[k].b[i] -= lr * mhat / (vhat.sqrt() + eps_adam);
            }
        }
    }
    Ok(net)
}
