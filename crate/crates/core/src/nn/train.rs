use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::layers::softmax_cross_entropy;
use super::network::{DropoutSource, Layer, Network};
use super::{NnError, Tensor};
use crate::augment::{augment, AugmentParams};
use crate::image::Image;
use crate::seed::{derive_path, rng_from_seed};
use crate::svm::argmax;

const SHUFFLE_STREAM: u64 = 0x5348_5546;
const DROPOUT_STREAM: u64 = 0x4452_4f50;
const AUGMENT_STREAM: u64 = 0x4155_474d;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    /// Per-sample, per-epoch augmentation; `None` trains on the images as-is.
    pub augment: Option<AugmentParams>,
}

impl TrainConfig {
    pub fn new(learning_rate: f64, seed: u64) -> Self {
        TrainConfig { learning_rate, batch_size: 32, epochs: 50, seed, augment: None }
    }

    pub fn validate(&self) -> Result<(), NnError> {
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(NnError::InvalidConfig(format!("learning rate {}", self.learning_rate)));
        }
        if self.batch_size == 0 {
            return Err(NnError::InvalidConfig("batch size 0".into()));
        }
        if let Some(a) = &self.augment {
            a.validate().map_err(|e| NnError::InvalidConfig(e.to_string()))?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledImage {
    pub image: Image,
    pub label: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    /// Mean cross-entropy over the epoch's training samples.
    pub loss: f64,
    /// Training-mode accuracy over the epoch's samples.
    pub accuracy: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainTrace {
    pub epochs: Vec<EpochStats>,
}

impl TrainTrace {
    pub fn final_accuracy(&self) -> Option<f64> {
        self.epochs.last().map(|e| e.accuracy)
    }
}

/// Splits `n` shuffled positions into batches, folding a trailing batch of
/// one into its predecessor when batch norm needs at least two samples.
fn batch_bounds(n: usize, batch_size: usize, min_batch: usize) -> Vec<(usize, usize)> {
    let mut bounds: Vec<(usize, usize)> = (0..n).step_by(batch_size).map(|s| (s, (s + batch_size).min(n))).collect();
    if bounds.len() > 1 {
        let (s, e) = *bounds.last().unwrap();
        if e - s < min_batch {
            bounds.pop();
            bounds.last_mut().unwrap().1 = e;
        }
    }
    bounds
}

/// Mini-batch SGD on the mean softmax cross-entropy.
///
/// Every epoch reshuffles the samples with a generator derived from
/// `(seed, epoch)`. Augmentation draws come from `(seed, epoch, sample)` and
/// dropout masks from `(seed, epoch, batch)`, so the run is a pure function
/// of the seed.
pub fn train_network(net: &mut Network, data: &[LabeledImage], cfg: &TrainConfig) -> Result<TrainTrace, NnError> {
    if data.is_empty() {
        return Err(NnError::EmptyDataset);
    }
    cfg.validate()?;
    let classes = net.spec.n_classes;
    for d in data {
        if d.label >= classes {
            return Err(NnError::TargetOutOfRange { target: d.label, classes });
        }
        let t = [d.image.channels(), d.image.height(), d.image.width()];
        if t != net.spec.input_shape {
            return Err(NnError::ShapeMismatch(format!("image {t:?}, network expects {:?}", net.spec.input_shape)));
        }
    }
    let has_bn = net.layers.iter().any(|l| matches!(l, Layer::BatchNorm(_)));
    if has_bn && data.len() < 2 {
        return Err(NnError::BatchTooSmall(data.len()));
    }
    let fixed: Option<Vec<Tensor>> =
        if cfg.augment.is_none() { Some(data.iter().map(|d| Tensor::from_image(&d.image)).collect()) } else { None };

    let mut trace = TrainTrace::default();
    let mut order: Vec<usize> = (0..data.len()).collect();
    for epoch in 0..cfg.epochs {
        let e = epoch as u64;
        order.sort_unstable();
        order.shuffle(&mut rng_from_seed(derive_path(cfg.seed, &[SHUFFLE_STREAM, e])));
        let mut loss_sum = 0.0;
        let mut correct = 0usize;
        for (b, &(start, end)) in batch_bounds(order.len(), cfg.batch_size, if has_bn { 2 } else { 1 }).iter().enumerate() {
            let idx = &order[start..end];
            let inputs: Vec<Tensor> = idx
                .iter()
                .map(|&i| match (&fixed, &cfg.augment) {
                    (Some(t), _) => t[i].clone(),
                    (None, Some(p)) => {
                        let mut rng = rng_from_seed(derive_path(cfg.seed, &[AUGMENT_STREAM, e, i as u64]));
                        Tensor::from_image(&augment(&data[i].image, p, &mut rng))
                    }
                    (None, None) => unreachable!("tensors are cached when augmentation is off"),
                })
                .collect();
            let mut rng = rng_from_seed(derive_path(cfg.seed, &[DROPOUT_STREAM, e, b as u64]));
            let (logits, tape) = net.forward_train(&inputs, DropoutSource::Random(&mut rng))?;
            let scale = 1.0 / idx.len() as f64;
            let mut grads = Vec::with_capacity(idx.len());
            for (z, &i) in logits.iter().zip(idx) {
                let (loss, mut g) = softmax_cross_entropy(z.data(), data[i].label)?;
                loss_sum += loss;
                if argmax(z.data()) == data[i].label {
                    correct += 1;
                }
                g.iter_mut().for_each(|v| *v *= scale);
                grads.push(Tensor::vector(g));
            }
            let param_grads = net.backward(&tape, grads)?;
            net.sgd_step(&param_grads, cfg.learning_rate);
        }
        let n = data.len() as f64;
        let stats = EpochStats { epoch, loss: loss_sum / n, accuracy: correct as f64 / n };
        if !stats.loss.is_finite() {
            return Err(NnError::InvalidConfig(format!("training diverged at epoch {epoch}")));
        }
        trace.epochs.push(stats);
    }
    Ok(trace)
}
