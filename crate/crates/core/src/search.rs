//! Random hyperparameter search with k-fold model selection.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;
use std::path::Path;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::augment::AugmentParams;
use crate::nn::{build_network, nn_predict, train_network, LabeledImage, NetworkSpec, NnError, TrainConfig};
use crate::seed::{derive_path, derive_seed, rng_from_seed};

pub const MAP_CHOICES: [usize; 3] = [16, 32, 48];
pub const DROPOUT_CHOICES: [f64; 4] = [0.2, 0.3, 0.4, 0.5];
pub const LAYER_RANGE: (usize, usize) = (1, 5);
pub const KERNEL_RANGE: (usize, usize) = (1, 5);
pub const LR_RANGE: (f64, f64) = (1e-5, 1e-1);

#[derive(Debug, Error)]
pub enum SearchError {
    #[error("empty dataset")]
    EmptyDataset,
    #[error("every trial had an invalid architecture or diverged")]
    AllTrialsInvalid,
    #[error("{n} samples cannot form {k} folds")]
    TooFewSamples { n: usize, k: usize },
    #[error("{groups} groups cannot form {k} folds")]
    TooFewGroups { groups: usize, k: usize },
    #[error("class {0} has no samples")]
    ClassMissing(usize),
    #[error("invalid hyperparameters: {0}")]
    InvalidHyperParams(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// One point of the architecture/optimizer space.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HyperParams {
    pub n_conv_layers: usize,
    pub n_maps: usize,
    pub kernel: usize,
    pub batchnorm: bool,
    pub dropout: f64,
    pub learning_rate: f64,
}

impl HyperParams {
    /// The reference architecture: three 16-map stages with
    /// 2x2 kernels, no batch norm, dropout 0.3, learning rate 0.008130275.
    pub fn selected() -> HyperParams {
        HyperParams { n_conv_layers: 3, n_maps: 16, kernel: 2, batchnorm: false, dropout: 0.3, learning_rate: 0.008130275 }
    }

    pub fn validate(&self) -> Result<(), SearchError> {
        let bad = |what: String| Err(SearchError::InvalidHyperParams(what));
        if !(LAYER_RANGE.0..=LAYER_RANGE.1).contains(&self.n_conv_layers) {
            return bad(format!("{} conv layers", self.n_conv_layers));
        }
        if !MAP_CHOICES.contains(&self.n_maps) {
            return bad(format!("{} maps", self.n_maps));
        }
        if !(KERNEL_RANGE.0..=KERNEL_RANGE.1).contains(&self.kernel) {
            return bad(format!("kernel {}", self.kernel));
        }
        if !DROPOUT_CHOICES.contains(&self.dropout) {
            return bad(format!("dropout {}", self.dropout));
        }
        if !(LR_RANGE.0..=LR_RANGE.1).contains(&self.learning_rate) {
            return bad(format!("learning rate {}", self.learning_rate));
        }
        Ok(())
    }
}

impl fmt::Display for HyperParams {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} layers, {} maps, k={}, bn={}, dropout={}, lr={}",
            self.n_conv_layers, self.n_maps, self.kernel, self.batchnorm, self.dropout, self.learning_rate
        )
    }
}

/// Discrete fields uniform over their sets; learning rate log-uniform.
pub fn sample_hyperparams<R: Rng + ?Sized>(rng: &mut R) -> HyperParams {
    let n_conv_layers = rng.random_range(LAYER_RANGE.0..=LAYER_RANGE.1);
    let n_maps = *MAP_CHOICES.choose(rng).unwrap();
    let kernel = rng.random_range(KERNEL_RANGE.0..=KERNEL_RANGE.1);
    let batchnorm = rng.random_bool(0.5);
    let dropout = *DROPOUT_CHOICES.choose(rng).unwrap();
    let ln_rate = rng.random_range(LR_RANGE.0.ln()..=LR_RANGE.1.ln());
    let learning_rate = ln_rate.exp().clamp(LR_RANGE.0, LR_RANGE.1);
    HyperParams { n_conv_layers, n_maps, kernel, batchnorm, dropout, learning_rate }
}

/// Partitions `0..n` into `k` folds, each sorted ascending.
///
/// Units (samples, or whole groups when `groups` is given) are shuffled and
/// dealt round-robin. With `labels`, units are dealt class by class with one
/// running counter, so per-class counts and total unit counts per fold both
/// differ by at most one. A group's class is the label of its first sample.
pub fn kfold_split(
    n: usize,
    k: usize,
    seed: u64,
    labels: Option<&[usize]>,
    groups: Option<&[usize]>,
) -> Result<Vec<Vec<usize>>, SearchError> {
    if k < 2 {
        return Err(SearchError::InvalidArgument(format!("k = {k}, need at least 2")));
    }
    if n < k {
        return Err(SearchError::TooFewSamples { n, k });
    }
    for (name, len) in [("labels", labels.map(<[_]>::len)), ("groups", groups.map(<[_]>::len))] {
        if let Some(len) = len.filter(|&l| l != n) {
            return Err(SearchError::InvalidArgument(format!("{len} {name} for {n} samples")));
        }
    }
    // unit -> member indices, in first-appearance order
    let units: Vec<Vec<usize>> = match groups {
        Some(g) => {
            let mut map: BTreeMap<usize, usize> = BTreeMap::new();
            let mut units: Vec<Vec<usize>> = Vec::new();
            for (i, &gid) in g.iter().enumerate() {
                let u = *map.entry(gid).or_insert_with(|| {
                    units.push(Vec::new());
                    units.len() - 1
                });
                units[u].push(i);
            }
            if units.len() < k {
                return Err(SearchError::TooFewGroups { groups: units.len(), k });
            }
            units
        }
        None => (0..n).map(|i| vec![i]).collect(),
    };
    let strata: Vec<Vec<usize>> = match labels {
        Some(l) => {
            let classes = l.iter().max().map_or(0, |m| m + 1).max(crate::N_CLASSES);
            let mut strata = vec![Vec::new(); classes];
            for (u, members) in units.iter().enumerate() {
                strata[l[members[0]]].push(u);
            }
            if let Some(c) = strata.iter().position(Vec::is_empty) {
                return Err(SearchError::ClassMissing(c));
            }
            strata
        }
        None => vec![(0..units.len()).collect()],
    };
    let mut rng = rng_from_seed(derive_seed(seed, 0x4b46_4f4c));
    let mut folds = vec![Vec::new(); k];
    let mut counter = 0;
    for mut stratum in strata {
        stratum.shuffle(&mut rng);
        for u in stratum {
            folds[counter % k].extend_from_slice(&units[u]);
            counter += 1;
        }
    }
    folds.iter_mut().for_each(|f| f.sort_unstable());
    Ok(folds)
}

/// Indices outside fold `f`, ascending.
pub fn complement(folds: &[Vec<usize>], f: usize) -> Vec<usize> {
    let mut out: Vec<usize> = folds.iter().enumerate().filter(|&(i, _)| i != f).flat_map(|(_, v)| v.iter().copied()).collect();
    out.sort_unstable();
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrialStatus {
    Ok,
    InvalidArchitecture,
    /// Training produced a non-finite loss.
    Diverged,
}

impl TrialStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            TrialStatus::Ok => "ok",
            TrialStatus::InvalidArchitecture => "invalid_architecture",
            TrialStatus::Diverged => "diverged",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialResult {
    pub trial_index: usize,
    pub hp: HyperParams,
    pub fold_accuracies: Vec<f64>,
    /// Mean of `fold_accuracies`; `None` unless the status is `Ok`.
    pub mean_accuracy: Option<f64>,
    pub param_count: Option<usize>,
    pub status: TrialStatus,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchConfig {
    pub n_trials: usize,
    pub seed: u64,
    pub folds: usize,
    /// Epochs per fold while ranking trials.
    pub epochs: usize,
    pub batch_size: usize,
    pub augment: Option<AugmentParams>,
    /// Keep a group's views in one fold.
    pub grouped: bool,
    /// Trials run concurrently on this many threads; results never depend on it.
    pub workers: usize,
}

impl Default for SearchConfig {
    fn default() -> Self {
        SearchConfig {
            n_trials: 32,
            seed: crate::DEFAULT_SEED,
            folds: 3,
            epochs: 20,
            batch_size: 32,
            augment: Some(AugmentParams::default()),
            grouped: false,
            workers: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchOutcome {
    pub best: TrialResult,
    pub ledger: Vec<TrialResult>,
}

/// Highest mean accuracy, then fewer parameters, then lower trial index.
pub fn select_best(ledger: &[TrialResult]) -> Option<&TrialResult> {
    ledger.iter().filter(|t| t.status == TrialStatus::Ok).min_by(|a, b| {
        let (ma, mb) = (a.mean_accuracy.unwrap_or(f64::NEG_INFINITY), b.mean_accuracy.unwrap_or(f64::NEG_INFINITY));
        mb.total_cmp(&ma).then(a.param_count.cmp(&b.param_count)).then(a.trial_index.cmp(&b.trial_index))
    })
}

fn run_trial(
    trial: usize,
    data: &[LabeledImage],
    folds: &[Vec<usize>],
    cfg: &SearchConfig,
) -> Result<TrialResult, SearchError> {
    let trial_seed = derive_seed(cfg.seed, trial as u64);
    let hp = sample_hyperparams(&mut rng_from_seed(trial_seed));
    let image = &data[0].image;
    let input_shape = [image.channels(), image.height(), image.width()];
    let spec = NetworkSpec::from_hyper(&hp, input_shape);
    let mut result =
        TrialResult { trial_index: trial, hp, fold_accuracies: Vec::new(), mean_accuracy: None, param_count: None, status: TrialStatus::Ok };
    match spec.param_count() {
        Ok(p) => result.param_count = Some(p),
        Err(NnError::InvalidArchitecture(_)) => {
            result.status = TrialStatus::InvalidArchitecture;
            return Ok(result);
        }
        Err(e) => return Err(e.into()),
    }
    for (f, val) in folds.iter().enumerate() {
        let train: Vec<LabeledImage> = complement(folds, f).into_iter().map(|i| data[i].clone()).collect();
        let mut net = build_network(&hp, input_shape, derive_path(trial_seed, &[f as u64, 0]))?;
        let tc = TrainConfig {
            learning_rate: hp.learning_rate,
            batch_size: cfg.batch_size,
            epochs: cfg.epochs,
            seed: derive_path(trial_seed, &[f as u64, 1]),
            augment: cfg.augment,
        };
        match train_network(&mut net, &train, &tc) {
            Ok(_) => {}
            Err(NnError::InvalidConfig(msg)) if msg.contains("diverged") => {
                result.status = TrialStatus::Diverged;
                result.fold_accuracies.clear();
                return Ok(result);
            }
            Err(e) => return Err(e.into()),
        }
        let mut correct = 0;
        for &i in val {
            if nn_predict(&net, &data[i].image)?.0 == data[i].label {
                correct += 1;
            }
        }
        result.fold_accuracies.push(correct as f64 / val.len() as f64);
    }
    result.mean_accuracy = Some(result.fold_accuracies.iter().sum::<f64>() / result.fold_accuracies.len() as f64);
    Ok(result)
}

/// Samples `n_trials` configurations and scores each with k-fold
/// cross-validation on `data`. Folds are shared by every trial; trial `t`
/// draws its hyperparameters and training seeds from `derive_seed(seed, t)`.
pub fn random_search(data: &[LabeledImage], groups: Option<&[usize]>, cfg: &SearchConfig) -> Result<SearchOutcome, SearchError> {
    if data.is_empty() {
        return Err(SearchError::EmptyDataset);
    }
    if cfg.n_trials == 0 {
        return Err(SearchError::InvalidArgument("n_trials must be at least 1".into()));
    }
    let labels: Vec<usize> = data.iter().map(|d| d.label).collect();
    let groups = if cfg.grouped { groups } else { None };
    let folds = kfold_split(data.len(), cfg.folds, derive_seed(cfg.seed, u64::MAX), Some(&labels), groups)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers.max(1))
        .build()
        .map_err(|e| SearchError::InvalidArgument(e.to_string()))?;
    let ledger: Vec<TrialResult> =
        pool.install(|| (0..cfg.n_trials).into_par_iter().map(|t| run_trial(t, data, &folds, cfg)).collect::<Result<_, _>>())?;
    let best = select_best(&ledger).cloned().ok_or(SearchError::AllTrialsInvalid)?;
    Ok(SearchOutcome { best, ledger })
}

pub const LEDGER_HEADER: &str = "trial,layers,maps,kernel,batchnorm,dropout,learning_rate,fold0,fold1,fold2,mean,params,status";

/// One CSV row per trial. Fold columns beyond the third are not written;
/// missing values are empty.
pub fn write_ledger(ledger: &[TrialResult], out: &mut impl Write) -> std::io::Result<()> {
    writeln!(out, "{LEDGER_HEADER}")?;
    for t in ledger {
        let fold = |i: usize| t.fold_accuracies.get(i).map(|v| v.to_string()).unwrap_or_default();
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{},{}",
            t.trial_index,
            t.hp.n_conv_layers,
            t.hp.n_maps,
            t.hp.kernel,
            u8::from(t.hp.batchnorm),
            t.hp.dropout,
            t.hp.learning_rate,
            fold(0),
            fold(1),
            fold(2),
            t.mean_accuracy.map(|v| v.to_string()).unwrap_or_default(),
            t.param_count.map(|v| v.to_string()).unwrap_or_default(),
            t.status.as_str()
        )?;
    }
    Ok(())
}

pub fn save_ledger(ledger: &[TrialResult], path: impl AsRef<Path>) -> Result<(), SearchError> {
    let mut buf = Vec::new();
    write_ledger(ledger, &mut buf)?;
    std::fs::write(path, buf)?;
    Ok(())
}
