//! Training objectives with analytic gradients.
//!
//! Every loss returns its value in f64 together with the gradient with
//! respect to each raw input. Where an input is normalized inside the loss,
//! the gradient is taken through the normalization.

use crate::error::{FddError, Result};
use crate::mask::{CellMask, GRID};
use crate::net::ops::sigmoid;
use crate::scalar::Scalar;
use crate::template::MinutiaMap;
use crate::tensor::DenseTensor;

pub const DEFAULT_SCALE: f64 = 30.0;
pub const DEFAULT_MARGIN: f64 = 0.4;

/// Row-major `N × dim` feature matrix with one class label per row.
#[derive(Clone, Debug, PartialEq)]
pub struct Batch<T> {
    dim: usize,
    features: Vec<T>,
    labels: Vec<usize>,
}

impl<T: Scalar> Batch<T> {
    pub fn new(dim: usize, features: Vec<T>, labels: Vec<usize>) -> Result<Self> {
        if dim == 0 || labels.is_empty() {
            return Err(FddError::param("a batch needs dim ≥ 1 and at least one sample"));
        }
        if features.len() != dim * labels.len() {
            return Err(FddError::shape(format!(
                "{} labels of dim {dim} need {} feature values, got {}",
                labels.len(),
                dim * labels.len(),
                features.len()
            )));
        }
        if features.iter().any(|v| !v.is_finite()) {
            return Err(FddError::Input("non-finite feature value".into()));
        }
        Ok(Self { dim, features, labels })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn features(&self) -> &[T] {
        &self.features
    }

    pub fn feature(&self, n: usize) -> &[T] {
        &self.features[n * self.dim..(n + 1) * self.dim]
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }
}

/// Large-margin cosine head: scale `A`, margin `b`, and `K` raw class
/// vectors stored row-major. The class vectors are normalized on use.
#[derive(Clone, Debug, PartialEq)]
pub struct CosFaceParams<T> {
    a_scale: f64,
    b_margin: f64,
    dim: usize,
    class_weights: Vec<T>,
}

impl<T: Scalar> CosFaceParams<T> {
    pub fn new(a_scale: f64, b_margin: f64, dim: usize, class_weights: Vec<T>) -> Result<Self> {
        if !(a_scale > 0.0 && a_scale.is_finite()) {
            return Err(FddError::param(format!("scale must be positive, got {a_scale}")));
        }
        if !(0.0..1.0).contains(&b_margin) {
            return Err(FddError::param(format!("margin must lie in [0, 1), got {b_margin}")));
        }
        if dim == 0 || class_weights.is_empty() || !class_weights.len().is_multiple_of(dim) {
            return Err(FddError::shape(format!(
                "{} class weight values do not form rows of dim {dim}",
                class_weights.len()
            )));
        }
        if class_weights.iter().any(|v| !v.is_finite()) {
            return Err(FddError::Input("non-finite class weight".into()));
        }
        Ok(Self {
            a_scale,
            b_margin,
            dim,
            class_weights,
        })
    }

    /// `A = 30`, `b = 0.4`.
    pub fn with_defaults(dim: usize, class_weights: Vec<T>) -> Result<Self> {
        Self::new(DEFAULT_SCALE, DEFAULT_MARGIN, dim, class_weights)
    }

    pub fn a_scale(&self) -> f64 {
        self.a_scale
    }

    pub fn b_margin(&self) -> f64 {
        self.b_margin
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn k_classes(&self) -> usize {
        self.class_weights.len() / self.dim
    }

    pub fn class_weights(&self) -> &[T] {
        &self.class_weights
    }

    pub fn class_weight(&self, k: usize) -> &[T] {
        &self.class_weights[k * self.dim..(k + 1) * self.dim]
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CosFaceOutput<T> {
    pub loss: f64,
    /// `N × dim`, same layout as the batch features.
    pub grad_features: Vec<T>,
    /// `K × dim`, same layout as the class weights.
    pub grad_weights: Vec<T>,
}

/// Loss and gradient for a single input.
#[derive(Clone, Debug, PartialEq)]
pub struct LossGrad<T> {
    pub loss: f64,
    pub grad: DenseTensor<T>,
}

/// Loss and gradients for a pair of inputs.
#[derive(Clone, Debug, PartialEq)]
pub struct PairLossGrad<T> {
    pub loss: f64,
    pub grad_q: DenseTensor<T>,
    pub grad_g: DenseTensor<T>,
}

fn unit_rows<T: Scalar>(data: &[T], dim: usize, what: &str) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut units = Vec::with_capacity(data.len());
    let mut norms = Vec::with_capacity(data.len() / dim);
    for (i, row) in data.chunks(dim).enumerate() {
        let norm = row.iter().map(|v| v.as_f64() * v.as_f64()).sum::<f64>().sqrt();
        if norm == 0.0 {
            return Err(FddError::param(format!("{what} {i} has zero norm")));
        }
        norms.push(norm);
        units.extend(row.iter().map(|v| v.as_f64() / norm));
    }
    Ok((units, norms))
}

/// Backpropagates `g` (gradient w.r.t. the unit vector `u`) through
/// `u = x / norm`: `(g − u⟨u, g⟩) / norm`.
fn through_normalization<T: Scalar>(u: &[f64], g: &[f64], norm: f64, out: &mut Vec<T>) {
    let proj: f64 = u.iter().zip(g).map(|(a, b)| a * b).sum();
    out.extend(u.iter().zip(g).map(|(a, b)| T::of((b - a * proj) / norm)));
}

/// Mean over the batch of `−log softmax(z)_y` with
/// `z_k = A·(cos θ_k − b·[k = y])` and `cos θ_k = ⟨Ŵ_k, f̂⟩`.
pub fn cosface_loss<T: Scalar>(batch: &Batch<T>, params: &CosFaceParams<T>) -> Result<CosFaceOutput<T>> {
    let dim = params.dim;
    if batch.dim != dim {
        return Err(FddError::shape(format!(
            "batch dim {} does not match class weight dim {dim}",
            batch.dim
        )));
    }
    let k_classes = params.k_classes();
    if let Some(bad) = batch.labels.iter().find(|&&y| y >= k_classes) {
        return Err(FddError::param(format!("label {bad} outside [0, {k_classes})")));
    }
    let (f_hat, f_norm) = unit_rows(&batch.features, dim, "feature")?;
    let (w_hat, w_norm) = unit_rows(&params.class_weights, dim, "class weight")?;
    let n = batch.len();
    let (a, b) = (params.a_scale, params.b_margin);

    let mut loss = 0.0;
    let mut grad_f_hat = vec![0.0; n * dim];
    let mut grad_w_hat = vec![0.0; k_classes * dim];
    let mut z = vec![0.0; k_classes];
    for (i, &y) in batch.labels.iter().enumerate() {
        let f = &f_hat[i * dim..(i + 1) * dim];
        for (k, zk) in z.iter_mut().enumerate() {
            let w = &w_hat[k * dim..(k + 1) * dim];
            let cos: f64 = w.iter().zip(f).map(|(p, q)| p * q).sum();
            *zk = a * (cos - if k == y { b } else { 0.0 });
        }
        let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let exp: Vec<f64> = z.iter().map(|v| (v - max).exp()).collect();
        let total: f64 = exp.iter().sum();
        // log1p of the off-target mass keeps well-separated losses accurate.
        let others: f64 = (0..k_classes).filter(|&k| k != y).map(|k| (z[k] - z[y]).exp()).sum();
        loss += if others.is_finite() {
            others.ln_1p()
        } else {
            max + total.ln() - z[y]
        };

        for k in 0..k_classes {
            let d_cos = a * (exp[k] / total - if k == y { 1.0 } else { 0.0 }) / n as f64;
            if d_cos == 0.0 {
                continue;
            }
            let w = &w_hat[k * dim..(k + 1) * dim];
            for j in 0..dim {
                grad_f_hat[i * dim + j] += d_cos * w[j];
                grad_w_hat[k * dim + j] += d_cos * f[j];
            }
        }
    }

    let mut grad_features = Vec::with_capacity(n * dim);
    for (i, &norm) in f_norm.iter().enumerate() {
        let r = i * dim..(i + 1) * dim;
        through_normalization(&f_hat[r.clone()], &grad_f_hat[r], norm, &mut grad_features);
    }
    let mut grad_weights = Vec::with_capacity(k_classes * dim);
    for (k, &norm) in w_norm.iter().enumerate() {
        let r = k * dim..(k + 1) * dim;
        through_normalization(&w_hat[r.clone()], &grad_w_hat[r], norm, &mut grad_weights);
    }
    Ok(CosFaceOutput {
        loss: loss / n as f64,
        grad_features,
        grad_weights,
    })
}

/// Mean squared distance between per-cell channel vectors over `overlap`.
pub fn local_similarity_loss<T: Scalar>(
    f_q: &DenseTensor<T>,
    f_g: &DenseTensor<T>,
    overlap: &CellMask,
) -> Result<PairLossGrad<T>> {
    f_q.require_same_dims(f_g)?;
    let (ch, h, w) = f_q.dims();
    if (h, w) != (GRID, GRID) {
        return Err(FddError::shape(format!(
            "features must be {GRID}×{GRID} spatially, got {h}×{w}"
        )));
    }
    let cells = overlap.count() as f64;
    if cells == 0.0 {
        return Err(FddError::param("local similarity is undefined on an empty overlap"));
    }
    let mut loss = 0.0;
    let mut grad_q = vec![T::zero(); f_q.len()];
    let mut grad_g = vec![T::zero(); f_q.len()];
    for cell in overlap.iter_set() {
        for c in 0..ch {
            let idx = c * GRID * GRID + cell;
            let d = f_q.data()[idx].as_f64() - f_g.data()[idx].as_f64();
            loss += d * d;
            grad_q[idx] = T::of(2.0 * d / cells);
            grad_g[idx] = T::of(-2.0 * d / cells);
        }
    }
    Ok(PairLossGrad {
        loss: loss / cells,
        grad_q: DenseTensor::new(f_q.dims(), grad_q)?,
        grad_g: DenseTensor::new(f_q.dims(), grad_g)?,
    })
}

/// Mean binary cross-entropy of `sigmoid(logits)` against the mask, in
/// logit form: `max(x, 0) − x·t + ln(1 + e^{−|x|})`.
pub fn mask_bce_loss<T: Scalar>(logits: &DenseTensor<T>, target: &CellMask) -> Result<LossGrad<T>> {
    if logits.dims() != (1, GRID, GRID) {
        return Err(FddError::shape(format!(
            "mask logits must be (1, 16, 16), got {:?}",
            logits.dims()
        )));
    }
    let count = logits.len() as f64;
    let mut loss = 0.0;
    let mut grad = Vec::with_capacity(logits.len());
    for (cell, x) in logits.data().iter().enumerate() {
        let x = x.as_f64();
        let t = if target.get_index(cell) { 1.0 } else { 0.0 };
        loss += x.max(0.0) - x * t + (-x.abs()).exp().ln_1p();
        grad.push(T::of((sigmoid(x) - t) / count));
    }
    Ok(LossGrad {
        loss: loss / count,
        grad: DenseTensor::new(logits.dims(), grad)?,
    })
}

/// Mean squared error over every heatmap entry.
pub fn minutia_mse_loss<T: Scalar>(pred: &MinutiaMap<T>, target: &MinutiaMap<T>) -> Result<LossGrad<T>> {
    let (p, t) = (pred.grid(), target.grid());
    p.require_same_dims(t)?;
    let count = p.len() as f64;
    let mut loss = 0.0;
    let mut grad = Vec::with_capacity(p.len());
    for (a, b) in p.data().iter().zip(t.data()) {
        let d = a.as_f64() - b.as_f64();
        loss += d * d;
        grad.push(T::of(2.0 * d / count));
    }
    Ok(LossGrad {
        loss: loss / count,
        grad: DenseTensor::new(p.dims(), grad)?,
    })
}

/// Trade-off weights of the auxiliary terms.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossWeights {
    pub lambda_mask: f64,
    pub lambda_minu: f64,
    pub lambda_sim: f64,
}

impl LossWeights {
    pub fn new(lambda_mask: f64, lambda_minu: f64, lambda_sim: f64) -> Result<Self> {
        for (name, v) in [
            ("mask", lambda_mask),
            ("minutia", lambda_minu),
            ("similarity", lambda_sim),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(FddError::param(format!(
                    "{name} weight must be finite and ≥ 0, got {v}"
                )));
            }
        }
        Ok(Self {
            lambda_mask,
            lambda_minu,
            lambda_sim,
        })
    }
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            lambda_mask: 1.0,
            lambda_minu: 0.01,
            lambda_sim: 0.00125,
        }
    }
}

/// Individual loss values, one classification term per branch.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct LossComponents {
    pub cls_texture: f64,
    pub cls_minutia: f64,
    pub mask: f64,
    pub minutia: f64,
    pub similarity: f64,
}

pub fn composite_loss(c: &LossComponents, w: &LossWeights) -> Result<f64> {
    let parts = [c.cls_texture, c.cls_minutia, c.mask, c.minutia, c.similarity];
    if parts.iter().any(|v| !v.is_finite()) {
        return Err(FddError::Input(format!("non-finite loss component in {c:?}")));
    }
    Ok(
        c.cls_texture
            + c.cls_minutia
            + w.lambda_mask * c.mask
            + w.lambda_minu * c.minutia
            + w.lambda_sim * c.similarity,
    )
}
