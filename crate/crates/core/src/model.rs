//! Small differentiable classifiers with closed-form gradients.
//!
//! Parameter layout (row-major, stable across versions):
//!
//! * softmax regression: `W[c][d]` at `c * input_dim + d`, then biases `b[c]`.
//! * one-hidden-layer MLP: `W1[h][d]`, `b1[h]`, `W2[c][h]`, `b2[c]`, in that order.

use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{config, shape, Result};
use crate::params::ParamVector;
use crate::rng::{stream, TAG_INIT};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ModelSpec {
    SoftmaxRegression {
        input_dim: usize,
        num_classes: usize,
    },
    #[serde(rename = "mlp-1")]
    Mlp1 {
        input_dim: usize,
        hidden_dim: usize,
        num_classes: usize,
    },
}

impl ModelSpec {
    pub fn softmax_regression(input_dim: usize, num_classes: usize) -> Self {
        ModelSpec::SoftmaxRegression {
            input_dim,
            num_classes,
        }
    }

    pub fn mlp(input_dim: usize, hidden_dim: usize, num_classes: usize) -> Self {
        ModelSpec::Mlp1 {
            input_dim,
            hidden_dim,
            num_classes,
        }
    }

    pub fn input_dim(&self) -> usize {
        match *self {
            ModelSpec::SoftmaxRegression { input_dim, .. } | ModelSpec::Mlp1 { input_dim, .. } => {
                input_dim
            }
        }
    }

    pub fn num_classes(&self) -> usize {
        match *self {
            ModelSpec::SoftmaxRegression { num_classes, .. }
            | ModelSpec::Mlp1 { num_classes, .. } => num_classes,
        }
    }

    pub fn param_count(&self) -> usize {
        match *self {
            ModelSpec::SoftmaxRegression {
                input_dim,
                num_classes,
            } => (input_dim + 1) * num_classes,
            ModelSpec::Mlp1 {
                input_dim,
                hidden_dim,
                num_classes,
            } => (input_dim + 1) * hidden_dim + (hidden_dim + 1) * num_classes,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim() == 0 {
            return Err(config("model.input_dim must be positive"));
        }
        if self.num_classes() < 2 {
            return Err(config("model.num_classes must be at least 2"));
        }
        if let ModelSpec::Mlp1 { hidden_dim: 0, .. } = self {
            return Err(config("model.hidden_dim must be positive"));
        }
        Ok(())
    }

    fn check_params(&self, params: &[f64]) -> Result<()> {
        if params.len() != self.param_count() {
            return Err(shape(format!(
                "expected {} parameters, got {}",
                self.param_count(),
                params.len()
            )));
        }
        Ok(())
    }

    fn check_batch(&self, batch: &Batch) -> Result<()> {
        if batch.input_dim != self.input_dim() {
            return Err(shape(format!(
                "batch has {} features per row, model expects {}",
                batch.input_dim,
                self.input_dim()
            )));
        }
        if let Some(&label) = batch.labels.iter().find(|&&l| l >= self.num_classes()) {
            return Err(shape(format!(
                "label {label} out of range for {} classes",
                self.num_classes()
            )));
        }
        Ok(())
    }
}

/// A block of feature rows with their class labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    features: Vec<f64>,
    labels: Vec<usize>,
    input_dim: usize,
}

impl Batch {
    /// `features` is row-major with `labels.len()` rows of `input_dim` entries.
    pub fn new(features: Vec<f64>, labels: Vec<usize>, input_dim: usize) -> Result<Self> {
        if labels.is_empty() {
            return Err(shape("batch must contain at least one row"));
        }
        if input_dim == 0 || features.len() != labels.len() * input_dim {
            return Err(shape(format!(
                "{} feature values do not form {} rows of width {input_dim}",
                features.len(),
                labels.len()
            )));
        }
        Ok(Self {
            features,
            labels,
            input_dim,
        })
    }

    pub fn from_rows(rows: &[Vec<f64>], labels: &[usize]) -> Result<Self> {
        let input_dim = rows.first().map_or(0, Vec::len);
        if rows.len() != labels.len() {
            return Err(shape("row and label counts differ"));
        }
        if rows.iter().any(|r| r.len() != input_dim) {
            return Err(shape("ragged feature rows"));
        }
        Self::new(rows.concat(), labels.to_vec(), input_dim)
    }

    pub fn rows(&self) -> usize {
        self.labels.len()
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.input_dim..(i + 1) * self.input_dim]
    }
}

/// Row-major `rows x num_classes` logits.
#[derive(Debug, Clone, PartialEq)]
pub struct Logits {
    values: Vec<f64>,
    num_classes: usize,
}

impl Logits {
    pub fn rows(&self) -> usize {
        self.values.len() / self.num_classes
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.num_classes..(i + 1) * self.num_classes]
    }

    pub fn iter_rows(&self) -> impl Iterator<Item = &[f64]> {
        self.values.chunks_exact(self.num_classes)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }
}

/// Weights drawn from N(0, 1/fan_in); every bias starts at exactly zero.
pub fn init_params(spec: &ModelSpec, seed: u64) -> Result<ParamVector> {
    spec.validate()?;
    let mut rng = stream(seed, &[TAG_INIT]);
    let mut values = Vec::with_capacity(spec.param_count());
    let mut layer = |values: &mut Vec<f64>, fan_in: usize, fan_out: usize| {
        let dist = Normal::new(0.0, 1.0 / (fan_in as f64).sqrt()).expect("positive scale");
        values.extend((0..fan_in * fan_out).map(|_| dist.sample(&mut rng)));
        values.extend(std::iter::repeat_n(0.0, fan_out));
    };
    match *spec {
        ModelSpec::SoftmaxRegression {
            input_dim,
            num_classes,
        } => layer(&mut values, input_dim, num_classes),
        ModelSpec::Mlp1 {
            input_dim,
            hidden_dim,
            num_classes,
        } => {
            layer(&mut values, input_dim, hidden_dim);
            layer(&mut values, hidden_dim, num_classes);
        }
    }
    Ok(ParamVector::new(values))
}

/// out = W x + b for a `rows(W) x x.len()` weight block followed by its biases.
fn affine(weights: &[f64], bias: &[f64], x: &[f64], out: &mut [f64]) {
    let width = x.len();
    for (o, (w_row, b)) in out.iter_mut().zip(weights.chunks_exact(width).zip(bias)) {
        *o = w_row.iter().zip(x).fold(*b, |acc, (w, xi)| acc + w * xi);
    }
}

struct MlpView<'a> {
    w1: &'a [f64],
    b1: &'a [f64],
    w2: &'a [f64],
    b2: &'a [f64],
}

fn split_mlp(params: &[f64], input_dim: usize, hidden_dim: usize, num_classes: usize) -> MlpView<'_> {
    let (w1, rest) = params.split_at(input_dim * hidden_dim);
    let (b1, rest) = rest.split_at(hidden_dim);
    let (w2, b2) = rest.split_at(hidden_dim * num_classes);
    MlpView { w1, b1, w2, b2 }
}

pub fn forward(spec: &ModelSpec, params: &ParamVector, batch: &Batch) -> Result<Logits> {
    spec.check_params(params)?;
    if batch.input_dim != spec.input_dim() {
        return Err(shape(format!(
            "batch has {} features per row, model expects {}",
            batch.input_dim,
            spec.input_dim()
        )));
    }
    let k = spec.num_classes();
    let mut values = vec![0.0; batch.rows() * k];
    match *spec {
        ModelSpec::SoftmaxRegression { input_dim, .. } => {
            let (w, b) = params.split_at(input_dim * k);
            for (i, out) in values.chunks_exact_mut(k).enumerate() {
                affine(w, b, batch.row(i), out);
            }
        }
        ModelSpec::Mlp1 {
            input_dim,
            hidden_dim,
            ..
        } => {
            let m = split_mlp(params, input_dim, hidden_dim, k);
            let mut hidden = vec![0.0; hidden_dim];
            for (i, out) in values.chunks_exact_mut(k).enumerate() {
                affine(m.w1, m.b1, batch.row(i), &mut hidden);
                hidden.iter_mut().for_each(|h| *h = h.max(0.0));
                affine(m.w2, m.b2, &hidden, out);
            }
        }
    }
    Ok(Logits {
        values,
        num_classes: k,
    })
}

/// Softmax of one logits row, stabilized by subtracting the row maximum.
pub fn softmax(row: &[f64]) -> Vec<f64> {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = row.iter().map(|z| (z - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// −log softmax(row)[label], computed as logsumexp(row) − row[label].
pub fn cross_entropy(row: &[f64], label: usize) -> f64 {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + row.iter().map(|z| (z - max).exp()).sum::<f64>().ln();
    (lse - row[label]).max(0.0)
}

/// Mean cross-entropy over the batch rows.
pub fn loss(spec: &ModelSpec, params: &ParamVector, batch: &Batch) -> Result<f64> {
    spec.check_batch(batch)?;
    let logits = forward(spec, params, batch)?;
    let total: f64 = logits
        .iter_rows()
        .zip(batch.labels())
        .map(|(row, &y)| cross_entropy(row, y))
        .sum();
    Ok(total / batch.rows() as f64)
}

pub fn gradient(spec: &ModelSpec, params: &ParamVector, batch: &Batch) -> Result<ParamVector> {
    loss_and_gradient(spec, params, batch).map(|(_, g)| g)
}

/// Mean cross-entropy and its exact gradient in a single pass.
///
/// ReLU's derivative at exactly zero is taken as zero.
pub fn loss_and_gradient(
    spec: &ModelSpec,
    params: &ParamVector,
    batch: &Batch,
) -> Result<(f64, ParamVector)> {
    spec.check_params(params)?;
    spec.check_batch(batch)?;
    let k = spec.num_classes();
    let scale = 1.0 / batch.rows() as f64;
    let mut grad = vec![0.0; params.len()];
    let mut total_loss = 0.0;
    let mut logits = vec![0.0; k];

    match *spec {
        ModelSpec::SoftmaxRegression { input_dim, .. } => {
            let (w, b) = params.split_at(input_dim * k);
            let (gw, gb) = grad.split_at_mut(input_dim * k);
            for i in 0..batch.rows() {
                let x = batch.row(i);
                let y = batch.labels[i];
                affine(w, b, x, &mut logits);
                total_loss += cross_entropy(&logits, y);
                let probs = softmax(&logits);
                for (c, p) in probs.iter().enumerate() {
                    let dz = (p - if c == y { 1.0 } else { 0.0 }) * scale;
                    gb[c] += dz;
                    for (g, xi) in gw[c * input_dim..(c + 1) * input_dim].iter_mut().zip(x) {
                        *g += dz * xi;
                    }
                }
            }
        }
        ModelSpec::Mlp1 {
            input_dim,
            hidden_dim,
            ..
        } => {
            let m = split_mlp(params, input_dim, hidden_dim, k);
            let (gw1, rest) = grad.split_at_mut(input_dim * hidden_dim);
            let (gb1, rest) = rest.split_at_mut(hidden_dim);
            let (gw2, gb2) = rest.split_at_mut(hidden_dim * k);
            let mut pre = vec![0.0; hidden_dim];
            let mut hidden = vec![0.0; hidden_dim];
            let mut d_hidden = vec![0.0; hidden_dim];
            for i in 0..batch.rows() {
                let x = batch.row(i);
                let y = batch.labels[i];
                affine(m.w1, m.b1, x, &mut pre);
                for (h, a) in hidden.iter_mut().zip(&pre) {
                    *h = a.max(0.0);
                }
                affine(m.w2, m.b2, &hidden, &mut logits);
                total_loss += cross_entropy(&logits, y);
                let probs = softmax(&logits);

                d_hidden.iter_mut().for_each(|d| *d = 0.0);
                for (c, p) in probs.iter().enumerate() {
                    let dz = (p - if c == y { 1.0 } else { 0.0 }) * scale;
                    gb2[c] += dz;
                    let w_row = &m.w2[c * hidden_dim..(c + 1) * hidden_dim];
                    let g_row = &mut gw2[c * hidden_dim..(c + 1) * hidden_dim];
                    for j in 0..hidden_dim {
                        g_row[j] += dz * hidden[j];
                        d_hidden[j] += w_row[j] * dz;
                    }
                }
                for j in 0..hidden_dim {
                    if pre[j] <= 0.0 {
                        continue;
                    }
                    let da = d_hidden[j];
                    gb1[j] += da;
                    for (g, xi) in gw1[j * input_dim..(j + 1) * input_dim].iter_mut().zip(x) {
                        *g += da * xi;
                    }
                }
            }
        }
    }
    Ok((total_loss * scale, ParamVector::new(grad)))
}

/// Index of the largest logit; ties go to the lowest index.
pub fn predict(row: &[f64]) -> Result<usize> {
    if row.is_empty() {
        return Err(shape("cannot predict from an empty logits row"));
    }
    let mut best = 0;
    for (i, &z) in row.iter().enumerate().skip(1) {
        if z > row[best] {
            best = i;
        }
    }
    Ok(best)
}
