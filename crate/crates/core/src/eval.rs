//! Evaluation protocol: train/test splits, k-fold cross-validation,
//! accuracy mean and sample standard deviation, confusion matrices.

use std::path::Path;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::augment::{augment, AugmentParams};
use crate::dataset::{LoadedDataset, Manifest};
use crate::hog::{hog_descriptor, HogError, HogParams};
use crate::image::Image;
use crate::nn::{build_network, nn_predict, train_network, LabeledImage, Network, NnError, TrainConfig};
use crate::search::{complement, kfold_split, HyperParams, SearchError};
use crate::seed::{derive_path, derive_seed, rng_from_seed};
use crate::svm::{svm_predict, train_linear_svm, LinearSvmModel, SvmError};
use crate::{StructureClass, N_CLASSES};

const FOLD_STREAM: u64 = 0xF01D;
const SPLIT_STREAM: u64 = 0x5711;
const SVM_AUGMENT_STREAM: u64 = 0x5A06;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("empty dataset")]
    EmptyDataset,
    #[error("length mismatch: {0} predictions, {1} labels")]
    LengthMismatch(usize, usize),
    #[error("no predictions")]
    Empty,
    #[error("sample {0} is not predicted exactly once")]
    CoverageGap(usize),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Split(#[from] SearchError),
    #[error(transparent)]
    Svm(#[from] SvmError),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Hog(#[from] HogError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Seeded split into `(train, test)` index lists, both ascending.
///
/// `n_train = round(train_frac * units)` clamped so both sides are non-empty,
/// where units are samples, or groups when `grouped` is set.
pub fn train_test_split(manifest: &Manifest, train_frac: f64, seed: u64, grouped: bool) -> Result<(Vec<usize>, Vec<usize>), EvalError> {
    let n = manifest.len();
    if n == 0 {
        return Err(EvalError::EmptyDataset);
    }
    if !(0.0..=1.0).contains(&train_frac) {
        return Err(EvalError::InvalidConfig(format!("train fraction {train_frac}")));
    }
    let mut units: Vec<Vec<usize>> = if grouped {
        let mut ids = manifest.group_ids();
        ids.sort_unstable();
        ids.dedup();
        ids.iter().map(|g| (0..n).filter(|&i| manifest.entries[i].group_id == *g).collect()).collect()
    } else {
        (0..n).map(|i| vec![i]).collect()
    };
    if units.len() < 2 {
        return Err(EvalError::InvalidConfig("need at least two units to split".into()));
    }
    units.shuffle(&mut rng_from_seed(derive_seed(seed, SPLIT_STREAM)));
    let n_train = ((train_frac * units.len() as f64).round() as usize).clamp(1, units.len() - 1);
    let mut train: Vec<usize> = units[..n_train].concat();
    let mut test: Vec<usize> = units[n_train..].concat();
    train.sort_unstable();
    test.sort_unstable();
    Ok((train, test))
}

pub fn accuracy(predictions: &[usize], labels: &[usize]) -> Result<f64, EvalError> {
    if predictions.len() != labels.len() {
        return Err(EvalError::LengthMismatch(predictions.len(), labels.len()));
    }
    if predictions.is_empty() {
        return Err(EvalError::Empty);
    }
    Ok(predictions.iter().zip(labels).filter(|(p, l)| p == l).count() as f64 / labels.len() as f64)
}

/// Mean and sample standard deviation (`k - 1` denominator; zero for one value).
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// `"89.60% ± 3.39%"` from fractions.
pub fn format_mean_std(mean: f64, std: f64) -> String {
    format!("{:.2}% ± {:.2}%", 100.0 * mean, 100.0 * std)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Svm,
    Cnn,
}

impl ModelKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::Svm => "svm",
            ModelKind::Cnn => "cnn",
        }
    }
}

impl std::str::FromStr for ModelKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "svm" => Ok(ModelKind::Svm),
            "cnn" => Ok(ModelKind::Cnn),
            _ => Err(format!("unknown model kind {s:?} (expected svm or cnn)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SvmConfig {
    pub lambda: f64,
    pub epochs: usize,
    pub hog: HogParams,
    /// Adds one augmented copy of every training image.
    pub augment: bool,
}

impl Default for SvmConfig {
    fn default() -> Self {
        SvmConfig { lambda: 1e-4, epochs: 50, hog: HogParams::default(), augment: false }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CnnConfig {
    pub hyper: HyperParams,
    pub image_size: usize,
    pub batch_size: usize,
    pub epochs: usize,
    pub augment: Option<AugmentParams>,
}

impl Default for CnnConfig {
    fn default() -> Self {
        CnnConfig {
            hyper: HyperParams::selected(),
            image_size: 224,
            batch_size: 32,
            epochs: 50,
            augment: Some(AugmentParams::default()),
        }
    }
}

impl CnnConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<CnnConfig, EvalError> {
        let cfg: CnnConfig = serde_json::from_slice(&std::fs::read(path)?)?;
        cfg.hyper.validate().map_err(|e| EvalError::InvalidConfig(e.to_string()))?;
        Ok(cfg)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), EvalError> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        std::fs::write(path, text)?;
        Ok(())
    }
}

impl SvmConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<SvmConfig, EvalError> {
        let cfg: SvmConfig = serde_json::from_slice(&std::fs::read(path)?)?;
        cfg.hog.validate()?;
        Ok(cfg)
    }
}

/// HOG descriptor of an image as a feature vector.
pub fn hog_features(img: &Image, params: &HogParams) -> Result<Vec<f64>, EvalError> {
    Ok(hog_descriptor(img, params)?.values)
}

pub fn fit_svm(images: &[Image], labels: &[usize], cfg: &SvmConfig, seed: u64) -> Result<LinearSvmModel, EvalError> {
    let mut features: Vec<Vec<f64>> = images.par_iter().map(|img| hog_features(img, &cfg.hog)).collect::<Result<_, _>>()?;
    let mut targets = labels.to_vec();
    if cfg.augment {
        let params = AugmentParams::default();
        let extra: Vec<Vec<f64>> = images
            .par_iter()
            .enumerate()
            .map(|(i, img)| {
                let mut rng = rng_from_seed(derive_path(seed, &[SVM_AUGMENT_STREAM, i as u64]));
                hog_features(&augment(img, &params, &mut rng), &cfg.hog)
            })
            .collect::<Result<_, _>>()?;
        features.extend(extra);
        targets.extend_from_slice(labels);
    }
    Ok(train_linear_svm(&features, &targets, N_CLASSES, cfg.lambda, cfg.epochs, seed)?)
}

/// Builds and trains a CNN on `data`; the seed covers initialisation and training.
pub fn fit_cnn(data: &[LabeledImage], cfg: &CnnConfig, seed: u64) -> Result<Network, EvalError> {
    let first = data.first().ok_or(EvalError::EmptyDataset)?;
    let shape = [first.image.channels(), first.image.height(), first.image.width()];
    if shape[1] != cfg.image_size || shape[2] != cfg.image_size {
        return Err(EvalError::InvalidConfig(format!(
            "images are {}x{}, config expects {}",
            shape[1], shape[2], cfg.image_size
        )));
    }
    let mut net = build_network(&cfg.hyper, shape, derive_seed(seed, 0))?;
    let tc = TrainConfig {
        learning_rate: cfg.hyper.learning_rate,
        batch_size: cfg.batch_size,
        epochs: cfg.epochs,
        seed: derive_seed(seed, 1),
        augment: cfg.augment,
    };
    train_network(&mut net, data, &tc)?;
    Ok(net)
}

/// One fold's validation indices and the predictions for them.
#[derive(Debug, Clone, PartialEq)]
pub struct FoldPredictions {
    pub indices: Vec<usize>,
    pub predictions: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorEntry {
    pub path: String,
    pub true_label: StructureClass,
    pub predicted_label: StructureClass,
}

/// Confusion matrix (rows true, columns predicted) and misclassified
/// samples sorted by path. Every manifest entry must be predicted exactly once.
pub fn confusion_and_errors(folds: &[FoldPredictions], manifest: &Manifest) -> Result<([[usize; N_CLASSES]; N_CLASSES], Vec<ErrorEntry>), EvalError> {
    let n = manifest.len();
    let mut seen = vec![false; n];
    let mut confusion = [[0usize; N_CLASSES]; N_CLASSES];
    let mut errors = Vec::new();
    for f in folds {
        if f.indices.len() != f.predictions.len() {
            return Err(EvalError::LengthMismatch(f.predictions.len(), f.indices.len()));
        }
        for (&i, &p) in f.indices.iter().zip(&f.predictions) {
            if i >= n || seen[i] {
                return Err(EvalError::CoverageGap(i));
            }
            seen[i] = true;
            let entry = &manifest.entries[i];
            let predicted = StructureClass::from_code(p).ok_or_else(|| EvalError::InvalidConfig(format!("class {p}")))?;
            confusion[entry.label.code()][p] += 1;
            if predicted != entry.label {
                errors.push(ErrorEntry { path: entry.path.clone(), true_label: entry.label, predicted_label: predicted });
            }
        }
    }
    if let Some(i) = seen.iter().position(|s| !s) {
        return Err(EvalError::CoverageGap(i));
    }
    errors.sort_by(|a, b| a.path.cmp(&b.path));
    Ok((confusion, errors))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub model_kind: ModelKind,
    pub seed: u64,
    pub k: usize,
    pub fold_accuracies: Vec<f64>,
    pub mean: f64,
    pub std: f64,
    pub confusion: [[usize; N_CLASSES]; N_CLASSES],
    pub errors: Vec<ErrorEntry>,
}

impl EvalReport {
    pub fn summary(&self) -> String {
        format_mean_std(self.mean, self.std)
    }

    pub fn to_json(&self) -> Result<String, EvalError> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), EvalError> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }
}

/// Human-readable table: one `name  mean% ± std%` row per model.
pub fn format_table(rows: &[(&str, &EvalReport)]) -> String {
    let width = rows.iter().map(|(n, _)| n.len()).max().unwrap_or(0).max(5);
    let mut out = format!("{:<width$}  accuracy\n", "model");
    for (name, r) in rows {
        out.push_str(&format!("{:<width$}  {}\n", name, r.summary()));
    }
    out
}

/// Stratified (optionally grouped) folds as used by [`cross_validate`].
pub fn evaluation_folds(data: &LoadedDataset, k: usize, seed: u64, grouped: bool) -> Result<Vec<Vec<usize>>, EvalError> {
    let labels = data.labels();
    let groups = data.group_ids();
    Ok(kfold_split(data.len(), k, derive_seed(seed, FOLD_STREAM), Some(&labels), grouped.then_some(groups.as_slice()))?)
}

/// Runs `fit_predict(fold, train_indices, val_indices)` for every fold in
/// parallel and assembles the report in fold order.
pub fn cross_validate_with<F>(
    data: &LoadedDataset,
    kind: ModelKind,
    k: usize,
    seed: u64,
    grouped: bool,
    fit_predict: F,
) -> Result<EvalReport, EvalError>
where
    F: Fn(usize, &[usize], &[usize]) -> Result<Vec<usize>, EvalError> + Sync,
{
    if data.is_empty() {
        return Err(EvalError::EmptyDataset);
    }
    let folds = evaluation_folds(data, k, seed, grouped)?;
    let labels = data.labels();
    let preds: Vec<FoldPredictions> = folds
        .par_iter()
        .enumerate()
        .map(|(f, val)| {
            let train = complement(&folds, f);
            let predictions = fit_predict(f, &train, val)?;
            Ok(FoldPredictions { indices: val.clone(), predictions })
        })
        .collect::<Result<_, EvalError>>()?;
    let fold_accuracies = preds
        .iter()
        .map(|p| accuracy(&p.predictions, &p.indices.iter().map(|&i| labels[i]).collect::<Vec<_>>()))
        .collect::<Result<Vec<_>, _>>()?;
    let (mean, std) = mean_std(&fold_accuracies);
    let (confusion, errors) = confusion_and_errors(&preds, &data.manifest)?;
    Ok(EvalReport { model_kind: kind, seed, k, fold_accuracies, mean, std, confusion, errors })
}

/// HOG + linear SVM cross-validation. Descriptors are computed once from
/// the unaugmented images.
pub fn cross_validate_svm(data: &LoadedDataset, k: usize, seed: u64, grouped: bool, cfg: &SvmConfig) -> Result<EvalReport, EvalError> {
    let features: Vec<Vec<f64>> = data.images.par_iter().map(|img| hog_features(img, &cfg.hog)).collect::<Result<_, _>>()?;
    let labels = data.labels();
    cross_validate_with(data, ModelKind::Svm, k, seed, grouped, |f, train, val| {
        let fold_seed = derive_seed(seed, f as u64);
        let model = if cfg.augment {
            let imgs: Vec<Image> = train.iter().map(|&i| data.images[i].clone()).collect();
            let l: Vec<usize> = train.iter().map(|&i| labels[i]).collect();
            fit_svm(&imgs, &l, cfg, fold_seed)?
        } else {
            let x: Vec<Vec<f64>> = train.iter().map(|&i| features[i].clone()).collect();
            let l: Vec<usize> = train.iter().map(|&i| labels[i]).collect();
            train_linear_svm(&x, &l, N_CLASSES, cfg.lambda, cfg.epochs, fold_seed)?
        };
        val.iter().map(|&i| Ok(svm_predict(&model, &features[i])?)).collect()
    })
}

pub fn cross_validate_cnn(data: &LoadedDataset, k: usize, seed: u64, grouped: bool, cfg: &CnnConfig) -> Result<EvalReport, EvalError> {
    let labeled = labeled_images(data);
    cross_validate_with(data, ModelKind::Cnn, k, seed, grouped, |f, train, val| {
        let subset: Vec<LabeledImage> = train.iter().map(|&i| labeled[i].clone()).collect();
        let net = fit_cnn(&subset, cfg, derive_seed(seed, f as u64))?;
        val.iter().map(|&i| Ok(nn_predict(&net, &data.images[i])?.0)).collect()
    })
}

pub fn labeled_images(data: &LoadedDataset) -> Vec<LabeledImage> {
    data.images.iter().zip(data.labels()).map(|(image, label)| LabeledImage { image: image.clone(), label }).collect()
}
