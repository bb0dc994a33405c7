//! The `bimclass` command line.
//!
//! Exit codes: 0 on success, 1 on usage errors, 2 on data or model errors.

use std::ffi::OsString;
use std::fmt;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rand::Rng;

use crate::augment::{augment, hflip, rotate, shift, AugmentParams};
use crate::container::{KindTag, SavedModel};
use crate::dataset::{load_dataset, load_prepared, prepare};
use crate::eval::{
    cross_validate_cnn, cross_validate_svm, fit_cnn, fit_svm, format_table, hog_features, labeled_images, train_test_split,
    CnnConfig, EvalReport, ModelKind, SvmConfig,
};
use crate::hog::{hog_descriptor, write_descriptor, HogParams};
use crate::image::{load_image, native_extension, save_image, to_grayscale};
use crate::nn::nn_predict;
use crate::search::{random_search, save_ledger, SearchConfig};
use crate::seed::{derive_seed, rng_from_seed};
use crate::svm::{argmax, decision_function};
use crate::synth::generate_dataset;
use crate::{StructureClass, DEFAULT_SEED};

#[derive(Debug, Parser)]
#[command(name = "bimclass", version, about = "Classify BIM structure images with HOG+SVM or a random-structure CNN")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Render the synthetic wireframe dataset (4 views per structure).
    GenerateDataset(GenerateArgs),
    /// Compute a HOG descriptor and write it as a binary dump.
    Hog(HogArgs),
    /// Train the HOG + linear SVM baseline on a whole dataset.
    TrainSvm(TrainSvmArgs),
    /// Random hyperparameter search on the 80% training split.
    Search(SearchArgs),
    /// Train a CNN from a config file on a whole dataset.
    TrainCnn(TrainCnnArgs),
    /// k-fold cross-validation report for either model kind.
    Evaluate(EvaluateArgs),
    /// Classify one image with a saved model.
    Predict(PredictArgs),
    /// Write the original image and one example of each augmentation.
    AugmentPreview(PreviewArgs),
}

#[derive(Debug, Args)]
struct GenerateArgs {
    #[arg(long)]
    out: PathBuf,
    /// Structures per class.
    #[arg(long, default_value_t = 20)]
    per_class: usize,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    seed: u64,
    #[arg(long, default_value_t = 224)]
    size: usize,
}

#[derive(Debug, Args)]
struct HogArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Resize to a square of this side first.
    #[arg(long)]
    size: Option<usize>,
}

#[derive(Debug, Args)]
struct TrainSvmArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// JSON SVM config; flags below override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    seed: u64,
    /// Add one augmented copy of every image.
    #[arg(long)]
    augment: bool,
    #[arg(long, default_value_t = 224)]
    image_size: usize,
}

#[derive(Debug, Args)]
struct SearchArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value_t = 32)]
    trials: usize,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    seed: u64,
    /// Where to write the best configuration (JSON, readable by train-cnn).
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    ledger: PathBuf,
    #[arg(long, default_value_t = 224)]
    image_size: usize,
    #[arg(long)]
    grouped: bool,
    /// Epochs per fold while scoring trials.
    #[arg(long, default_value_t = 20)]
    trial_epochs: usize,
    /// Epochs written into the output config for final training.
    #[arg(long, default_value_t = 50)]
    epochs: usize,
    #[arg(long, default_value_t = 32)]
    batch_size: usize,
    /// Threads running trials; results do not depend on it.
    #[arg(long, default_value_t = 1)]
    workers: usize,
    /// Train without augmentation.
    #[arg(long)]
    no_augment: bool,
}

#[derive(Debug, Args)]
struct TrainCnnArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    seed: u64,
}

#[derive(Debug, Args)]
struct EvaluateArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    model_kind: ModelKind,
    /// JSON config of the chosen model kind; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value_t = 5)]
    folds: usize,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    seed: u64,
    #[arg(long)]
    report: PathBuf,
    #[arg(long)]
    grouped: bool,
    /// Input side; defaults to the CNN config's size, or 224 for the SVM.
    #[arg(long)]
    image_size: Option<usize>,
}

#[derive(Debug, Args)]
struct PredictArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long = "in")]
    input: PathBuf,
    /// Fail unless the model file holds this kind.
    #[arg(long)]
    model_kind: Option<ModelKind>,
}

#[derive(Debug, Args)]
struct PreviewArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 5)]
    n: usize,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    seed: u64,
}

/// Any failure after argument parsing; reported with exit code 2.
#[derive(Debug)]
pub struct CliError(String);

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl<E: std::error::Error> From<E> for CliError {
    fn from(e: E) -> Self {
        CliError(e.to_string())
    }
}

type CliResult = Result<(), CliError>;

/// Parses `args` (including the program name) and runs the subcommand.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            2
        }
    }
}

fn dispatch(cmd: Command) -> CliResult {
    match cmd {
        Command::GenerateDataset(a) => generate(a),
        Command::Hog(a) => hog(a),
        Command::TrainSvm(a) => train_svm(a),
        Command::Search(a) => search(a),
        Command::TrainCnn(a) => train_cnn(a),
        Command::Evaluate(a) => evaluate(a),
        Command::Predict(a) => predict(a),
        Command::AugmentPreview(a) => augment_preview(a),
    }
}

fn generate(a: GenerateArgs) -> CliResult {
    let m = generate_dataset(&a.out, a.per_class, a.seed, a.size)?;
    println!("wrote {} images to {}", m.len(), a.out.display());
    Ok(())
}

fn hog(a: HogArgs) -> CliResult {
    let mut img = load_image(&a.input)?;
    if let Some(s) = a.size {
        img = prepare(&img, s)?;
    }
    let desc = hog_descriptor(&to_grayscale(&img), &HogParams::default())?;
    write_descriptor(&desc, &a.out)?;
    println!("{} values", desc.len());
    Ok(())
}

fn train_svm(a: TrainSvmArgs) -> CliResult {
    let mut cfg = match &a.config {
        Some(p) => SvmConfig::load(p)?,
        None => SvmConfig::default(),
    };
    cfg.lambda = a.lambda.unwrap_or(cfg.lambda);
    cfg.epochs = a.epochs.unwrap_or(cfg.epochs);
    cfg.augment |= a.augment;
    let data = load_dataset(&a.data, a.image_size)?;
    let model = fit_svm(&data.images, &data.labels(), &cfg, a.seed)?;
    SavedModel::Svm { model, hog: cfg.hog, image_size: a.image_size }.save(&a.out)?;
    println!("trained on {} images", data.len());
    Ok(())
}

fn search(a: SearchArgs) -> CliResult {
    let data = load_dataset(&a.data, a.image_size)?;
    let (train_idx, _) = train_test_split(&data.manifest, 0.8, a.seed, a.grouped)?;
    let train = data.subset(&train_idx);
    let cfg = SearchConfig {
        n_trials: a.trials,
        seed: a.seed,
        folds: 3,
        epochs: a.trial_epochs,
        batch_size: a.batch_size,
        augment: (!a.no_augment).then(AugmentParams::default),
        grouped: a.grouped,
        workers: a.workers,
    };
    let outcome = random_search(&labeled_images(&train), Some(&train.group_ids()), &cfg)?;
    save_ledger(&outcome.ledger, &a.ledger)?;
    let best = CnnConfig {
        hyper: outcome.best.hp,
        image_size: a.image_size,
        batch_size: a.batch_size,
        epochs: a.epochs,
        augment: cfg.augment,
    };
    best.save(&a.out)?;
    println!(
        "best trial {} ({}): mean 3-fold accuracy {:.4}",
        outcome.best.trial_index,
        outcome.best.hp,
        outcome.best.mean_accuracy.unwrap_or(f64::NAN)
    );
    Ok(())
}

fn train_cnn(a: TrainCnnArgs) -> CliResult {
    let cfg = CnnConfig::load(&a.config)?;
    let data = load_dataset(&a.data, cfg.image_size)?;
    let network = fit_cnn(&labeled_images(&data), &cfg, a.seed)?;
    SavedModel::Cnn { network, image_size: cfg.image_size }.save(&a.out)?;
    println!("trained on {} images", data.len());
    Ok(())
}

fn evaluate(a: EvaluateArgs) -> CliResult {
    let report: EvalReport = match a.model_kind {
        ModelKind::Svm => {
            let cfg = match &a.config {
                Some(p) => SvmConfig::load(p)?,
                None => SvmConfig::default(),
            };
            let data = load_dataset(&a.data, a.image_size.unwrap_or(224))?;
            cross_validate_svm(&data, a.folds, a.seed, a.grouped, &cfg)?
        }
        ModelKind::Cnn => {
            let mut cfg = match &a.config {
                Some(p) => CnnConfig::load(p)?,
                None => CnnConfig::default(),
            };
            if let Some(s) = a.image_size {
                cfg.image_size = s;
            }
            let data = load_dataset(&a.data, cfg.image_size)?;
            cross_validate_cnn(&data, a.folds, a.seed, a.grouped, &cfg)?
        }
    };
    report.save(&a.report)?;
    print!("{}", format_table(&[(a.model_kind.as_str(), &report)]));
    Ok(())
}

fn predict(a: PredictArgs) -> CliResult {
    let model = SavedModel::load(&a.model)?;
    if let Some(want) = a.model_kind {
        let want_tag = match want {
            ModelKind::Svm => KindTag::SvmLinearOvr,
            ModelKind::Cnn => KindTag::Cnn,
        };
        if model.kind() != want_tag {
            return Err(CliError(format!(
                "model kind mismatch: {} holds a {} model, expected {}",
                a.model.display(),
                model.kind().name(),
                want.as_str()
            )));
        }
    }
    let img = load_prepared(&a.input, model.image_size())?;
    let (class, scores) = match &model {
        SavedModel::Svm { model, hog, .. } => {
            let scores = decision_function(model, &hog_features(&img, hog)?)?;
            (argmax(&scores), scores)
        }
        SavedModel::Cnn { network, .. } => nn_predict(network, &img)?,
    };
    let name = StructureClass::from_code(class).map_or("unknown", StructureClass::name);
    let label = if matches!(model, SavedModel::Cnn { .. }) { "probabilities" } else { "scores" };
    println!("{name}\t{label} {scores:?}");
    Ok(())
}

fn preview_name(out: &Path, i: usize, what: &str, ext: &str) -> PathBuf {
    out.join(format!("{i:02}_{what}.{ext}"))
}

/// Magnitude in `[0.5, 1]` of `max` with a random sign.
fn strong<R: Rng>(rng: &mut R, max: f64) -> f64 {
    let m = max * rng.random_range(0.5..=1.0);
    if rng.random_bool(0.5) {
        m
    } else {
        -m
    }
}

fn augment_preview(a: PreviewArgs) -> CliResult {
    let img = load_image(&a.input)?;
    std::fs::create_dir_all(&a.out)?;
    let params = AugmentParams::default();
    let ext = native_extension(&img);
    let mut rng = rng_from_seed(a.seed);
    let max_dx = (img.width() as f64 * params.max_shift_frac).floor().max(1.0);
    let max_dy = (img.height() as f64 * params.max_shift_frac).floor().max(1.0);
    for i in 0..a.n {
        let (what, out) = match i {
            0 => ("original", img.clone()),
            1 => ("rotation", rotate(&img, strong(&mut rng, params.max_rotation_deg), params.fill_value)),
            2 => ("hshift", shift(&img, strong(&mut rng, max_dx).round() as i64, 0, params.fill_value)?),
            3 => ("vshift", shift(&img, 0, strong(&mut rng, max_dy).round() as i64, params.fill_value)?),
            4 => ("hflip", hflip(&img)),
            _ => ("random", augment(&img, &params, &mut rng_from_seed(derive_seed(a.seed, i as u64)))),
        };
        let path = preview_name(&a.out, i, what, ext);
        if i == 0 && a.input.extension().and_then(|e| e.to_str()) == Some(ext) {
            std::fs::copy(&a.input, &path)?;
        } else {
            save_image(&out, &path)?;
        }
    }
    println!("wrote {} images to {}", a.n, a.out.display());
    Ok(())
}
