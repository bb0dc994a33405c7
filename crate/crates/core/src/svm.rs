//! One-vs-rest linear SVM trained with Pegasos-style stochastic subgradient
//! descent on the L2-regularised hinge loss.
//!
//! For each class `c` a binary problem with targets `y = +1` (class `c`) and
//! `y = -1` (everything else) is solved. Step `t` (1-based) uses the rate
//! `1 / (lambda * t)`, picks a training point with the seeded generator, shrinks
//! `w` by `1 - rate * lambda` and, if the margin `y (w.x + b)` is below one,
//! adds `rate * y * x` to `w` and `rate * y` to the unregularised bias.

use rand::Rng as _;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::seed::{derive_seed, rng_from_seed};

#[derive(Debug, Error, PartialEq)]
pub enum SvmError {
    #[error("class {0} has no training samples")]
    DegenerateLabels(usize),
    #[error("lambda must be positive, got {0}")]
    NonPositiveLambda(f64),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("invalid training data: {0}")]
    InvalidData(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearSvmModel {
    /// `n_classes` rows of `n_features` weights.
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<f64>,
    pub n_classes: usize,
    pub lambda: f64,
    pub epochs: usize,
    pub seed: u64,
}

impl LinearSvmModel {
    pub fn n_features(&self) -> usize {
        self.weights.first().map_or(0, Vec::len)
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0f64; 4];
    let (ca, cb) = (a.chunks_exact(4), b.chunks_exact(4));
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for k in 0..4 {
            acc[k] += x[k] * y[k];
        }
    }
    let tail: f64 = ra.iter().zip(rb).map(|(x, y)| x * y).sum();
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// Pegasos state for one binary problem. `w` is stored as `scale * v` so the
/// per-step shrink is O(1).
struct BinaryPegasos {
    v: Vec<f64>,
    scale: f64,
    bias: f64,
}

impl BinaryPegasos {
    fn new(d: usize) -> Self {
        BinaryPegasos { v: vec![0.0; d], scale: 1.0, bias: 0.0 }
    }

    fn step(&mut self, x: &[f64], y: f64, lambda: f64, t: usize) {
        let rate = 1.0 / (lambda * t as f64);
        let margin = y * (self.scale * dot(&self.v, x) + self.bias);
        let shrink = 1.0 - rate * lambda;
        if shrink <= 0.0 {
            // t == 1: w is reset to zero
            self.v.iter_mut().for_each(|v| *v = 0.0);
            self.scale = 1.0;
        } else {
            self.scale *= shrink;
        }
        if margin < 1.0 {
            let k = rate * y / self.scale;
            self.v.iter_mut().zip(x).for_each(|(v, xi)| *v += k * xi);
            self.bias += rate * y;
        }
        if self.scale < 1e-150 {
            let s = self.scale;
            self.v.iter_mut().for_each(|v| *v *= s);
            self.scale = 1.0;
        }
    }

    fn into_weights(self) -> (Vec<f64>, f64) {
        let s = self.scale;
        (self.v.into_iter().map(|v| v * s).collect(), self.bias)
    }
}

fn validate(features: &[Vec<f64>], labels: &[usize], n_classes: usize, lambda: f64) -> Result<usize, SvmError> {
    if !(lambda > 0.0) {
        return Err(SvmError::NonPositiveLambda(lambda));
    }
    if features.len() != labels.len() {
        return Err(SvmError::InvalidData(format!("{} samples vs {} labels", features.len(), labels.len())));
    }
    if features.len() < n_classes || n_classes < 2 {
        return Err(SvmError::InvalidData(format!("{} samples for {n_classes} classes", features.len())));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= n_classes) {
        return Err(SvmError::InvalidData(format!("label {bad} >= {n_classes}")));
    }
    let d = features[0].len();
    if let Some(x) = features.iter().find(|x| x.len() != d) {
        return Err(SvmError::DimensionMismatch { expected: d, got: x.len() });
    }
    for c in 0..n_classes {
        if !labels.contains(&c) {
            return Err(SvmError::DegenerateLabels(c));
        }
    }
    Ok(d)
}

/// Trains one binary Pegasos problem per class. Class `c` draws its sample
/// indices from a generator seeded with `derive_seed(seed, c)`, so the
/// classes are independent of each other and of execution order.
pub fn train_linear_svm(
    features: &[Vec<f64>],
    labels: &[usize],
    n_classes: usize,
    lambda: f64,
    epochs: usize,
    seed: u64,
) -> Result<LinearSvmModel, SvmError> {
    let d = validate(features, labels, n_classes, lambda)?;
    let n = features.len();
    let steps = epochs * n;
    let mut weights = Vec::with_capacity(n_classes);
    let mut biases = Vec::with_capacity(n_classes);
    for c in 0..n_classes {
        let mut rng = rng_from_seed(derive_seed(seed, c as u64));
        // raw draw mod n, so duplicating the data set keeps the schedule
        let mut state = BinaryPegasos::new(d);
        for t in 1..=steps {
            let i = (rng.random::<u64>() % n as u64) as usize;
            let y = if labels[i] == c { 1.0 } else { -1.0 };
            state.step(&features[i], y, lambda, t);
        }
        let (w, b) = state.into_weights();
        weights.push(w);
        biases.push(b);
    }
    Ok(LinearSvmModel { weights, biases, n_classes, lambda, epochs, seed })
}

/// Class scores `w_c . x + b_c`.
pub fn decision_function(model: &LinearSvmModel, x: &[f64]) -> Result<Vec<f64>, SvmError> {
    if x.len() != model.n_features() {
        return Err(SvmError::DimensionMismatch { expected: model.n_features(), got: x.len() });
    }
    Ok(model.weights.iter().zip(&model.biases).map(|(w, b)| dot(w, x) + b).collect())
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax(scores: &[f64]) -> usize {
    let mut best = 0;
    for (i, &s) in scores.iter().enumerate().skip(1) {
        if s > scores[best] {
            best = i;
        }
    }
    best
}

pub fn svm_predict(model: &LinearSvmModel, x: &[f64]) -> Result<usize, SvmError> {
    decision_function(model, x).map(|s| argmax(&s))
}

/// Primal objective `lambda/2 |w|^2 + mean_i max(0, 1 - y_i (w.x_i + b))`.
pub fn binary_objective(w: &[f64], b: f64, features: &[Vec<f64>], targets: &[f64], lambda: f64) -> f64 {
    let hinge: f64 = features
        .iter()
        .zip(targets)
        .map(|(x, &y)| (1.0 - y * (dot(w, x) + b)).max(0.0))
        .sum::<f64>()
        / features.len() as f64;
    0.5 * lambda * dot(w, w) + hinge
}

/// Full-batch subgradient descent with a fixed step on one binary problem,
/// returning `(w, b, objective after each epoch)`. Exposed for checking the
/// objective's behaviour; training uses [`train_linear_svm`].
pub fn train_binary_full_batch(
    features: &[Vec<f64>],
    targets: &[f64],
    lambda: f64,
    step: f64,
    epochs: usize,
) -> (Vec<f64>, f64, Vec<f64>) {
    let d = features.first().map_or(0, Vec::len);
    let n = features.len() as f64;
    let mut w = vec![0.0; d];
    let mut b = 0.0;
    let mut trace = Vec::with_capacity(epochs + 1);
    trace.push(binary_objective(&w, b, features, targets, lambda));
    for _ in 0..epochs {
        let mut gw: Vec<f64> = w.iter().map(|wi| lambda * wi).collect();
        let mut gb = 0.0;
        for (x, &y) in features.iter().zip(targets) {
            if y * (dot(&w, x) + b) < 1.0 {
                gw.iter_mut().zip(x).for_each(|(g, xi)| *g -= y * xi / n);
                gb -= y / n;
            }
        }
        w.iter_mut().zip(&gw).for_each(|(wi, g)| *wi -= step * g);
        b -= step * gb;
        trace.push(binary_objective(&w, b, features, targets, lambda));
    }
    (w, b, trace)
}
