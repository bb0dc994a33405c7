//! End-to-end acceptance run. Prints one `PASS`/`FAIL` line per criterion
//! and exits non-zero if any fails.
//!
//! Criteria 5 and 6 run the full command-line pipeline twice on the
//! 240-image 64 px dataset; expect roughly 20-25 minutes on one core.

mod common;

use std::collections::{HashMap, HashSet};
use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use bimclass::dataset::load_dataset;
use bimclass::eval::{evaluation_folds, format_mean_std, format_table, mean_std, EvalReport};
use bimclass::nn::{build_network, nn_predict, train_network, LabeledImage, Layer, NetworkSpec, TrainConfig};
use bimclass::search::{sample_hyperparams, HyperParams, DROPOUT_CHOICES, KERNEL_RANGE, LAYER_RANGE, LR_RANGE, MAP_CHOICES};
use bimclass::synth::{render_structure, structure_seed};
use bimclass::StructureClass;

type Check = Result<String, String>;

struct Harness {
    failed: usize,
}

impl Harness {
    fn run(&mut self, id: usize, name: &str, f: impl FnOnce() -> Check) {
        let start = Instant::now();
        let result = f();
        let secs = start.elapsed().as_secs_f64();
        match result {
            Ok(detail) => println!("PASS  {id}. {name} ({secs:.1}s): {detail}"),
            Err(detail) => {
                self.failed += 1;
                println!("FAIL  {id}. {name} ({secs:.1}s): {detail}");
            }
        }
    }
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within(elapsed: Duration, limit: Duration) -> Result<(), String> {
    ensure(elapsed <= limit, || format!("took {:.1}s, limit {}s", elapsed.as_secs_f64(), limit.as_secs()))
}

fn oracle_equivalence() -> Check {
    let start = Instant::now();
    let (conv, pool, hog) = common::kernel_oracle_sweep(150, 2024);
    ensure(conv <= 1e-12, || format!("conv deviates by {conv:e}"))?;
    ensure(pool <= 1e-12, || format!("max-pool deviates by {pool:e}"))?;
    ensure(hog <= 1e-10, || format!("HOG deviates by {hog:e}"))?;
    within(start.elapsed(), Duration::from_secs(60))?;
    Ok(format!("150 instances each; max diff conv {conv:.1e}, pool {pool:.1e}, HOG {hog:.1e}"))
}

fn gradient_verification() -> Check {
    let start = Instant::now();
    let results = common::gradcheck_random_architectures(6, 99);
    ensure(results.iter().any(|(hp, _)| hp.batchnorm), || "no batch-norm architecture".into())?;
    let mut worst = 0.0f64;
    let (mut checked, mut refined, mut on_kink) = (0, 0, 0);
    for (hp, r) in &results {
        ensure(r.ok(), || format!("{hp}: {} of {} entries off (max rel {:.2e})", r.failures, r.checked, r.max_rel_error))?;
        worst = worst.max(r.max_rel_error);
        checked += r.checked;
        refined += r.refined;
        on_kink += r.on_kink;
    }
    ensure(on_kink * 100 <= checked, || format!("{on_kink} of {checked} entries sit on a kink"))?;
    within(start.elapsed(), Duration::from_secs(300))?;
    Ok(format!(
        "{} architectures, {checked} parameters, max rel error {worst:.2e}; {refined} needed a smaller step, {on_kink} on a kink",
        results.len()
    ))
}

fn selected_arithmetic() -> Check {
    let hp = HyperParams::selected();
    let spec = NetworkSpec::from_hyper(&hp, [3, 224, 224]);
    let flat = spec.flatten_len().map_err(|e| e.to_string())?;
    ensure(flat == 11_664, || format!("flatten length {flat}"))?;
    let net = build_network(&hp, [3, 224, 224], 1).map_err(|e| e.to_string())?;
    let dense = match net.layers.last() {
        Some(Layer::Dense(p)) => p.weights.len() + p.bias.len(),
        _ => return Err("last layer is not dense".into()),
    };
    ensure(dense == 34_995, || format!("dense parameters {dense}"))?;
    Ok(format!("flatten {flat}, dense {dense}"))
}

fn overfit_sanity() -> Check {
    let start = Instant::now();
    let data: Vec<LabeledImage> = (0..30)
        .map(|i| {
            let class = StructureClass::ALL[i % 3];
            let image = render_structure(class, structure_seed(7, (i / 3) * 3 + class.code()), i % 4, 64).unwrap();
            LabeledImage { image, label: class.code() }
        })
        .collect();
    let hp = HyperParams::selected();
    let mut net = build_network(&hp, [3, 64, 64], 1).map_err(|e| e.to_string())?;
    let cfg = TrainConfig { epochs: 200, ..TrainConfig::new(hp.learning_rate, 1) };
    train_network(&mut net, &data, &cfg).map_err(|e| e.to_string())?;
    let correct = data.iter().filter(|d| nn_predict(&net, &d.image).unwrap().0 == d.label).count();
    let acc = correct as f64 / data.len() as f64;
    ensure(acc >= 0.95, || format!("training accuracy {acc:.3}"))?;
    within(start.elapsed(), Duration::from_secs(600))?;
    Ok(format!("{correct}/30 after 200 epochs"))
}

/// Files every pipeline run leaves behind, relative to its directory.
const ARTIFACTS: [&str; 8] = [
    "data/manifest.csv",
    "data/render_meta.csv",
    "ledger.csv",
    "best.json",
    "cnn_report.json",
    "svm_report.json",
    "cnn.bim",
    "svm.bim",
];

fn cli(dir: &Path, args: &[&str]) -> Result<String, String> {
    let out = Command::new(env!("CARGO_BIN_EXE_bimclass"))
        .current_dir(dir)
        .args(args)
        .output()
        .map_err(|e| e.to_string())?;
    if !out.status.success() {
        return Err(format!("{args:?} failed: {}", String::from_utf8_lossy(&out.stderr).trim()));
    }
    Ok(String::from_utf8_lossy(&out.stdout).into_owned())
}

fn pipeline(dir: &Path) -> Result<Duration, String> {
    let start = Instant::now();
    fs::create_dir_all(dir).map_err(|e| e.to_string())?;
    cli(dir, &["generate-dataset", "--out", "data", "--size", "64", "--seed", "42"])?;
    let best = cli(
        dir,
        &["search", "--data", "data", "--trials", "16", "--seed", "42", "--image-size", "64", "--out", "best.json", "--ledger", "ledger.csv"],
    )?;
    print!("      {best}");
    for (kind, extra) in [("cnn", ["--config", "best.json"]), ("svm", ["--image-size", "64"])] {
        let report = format!("{kind}_report.json");
        let args = ["evaluate", "--data", "data", "--model-kind", kind, "--folds", "5", "--seed", "42", "--report", &report];
        cli(dir, &[&args[..], &extra[..]].concat())?;
    }
    cli(dir, &["train-cnn", "--data", "data", "--config", "best.json", "--out", "cnn.bim", "--seed", "42"])?;
    cli(dir, &["train-svm", "--data", "data", "--image-size", "64", "--out", "svm.bim", "--seed", "42"])?;
    Ok(start.elapsed())
}

fn read_report(path: impl AsRef<Path>) -> Result<EvalReport, String> {
    let text = fs::read_to_string(path.as_ref()).map_err(|e| e.to_string())?;
    serde_json::from_str(&text).map_err(|e| e.to_string())
}

fn benchmark(dir: &Path) -> Check {
    let elapsed = pipeline(dir)?;
    let cnn = read_report(dir.join("cnn_report.json"))?;
    let svm = read_report(dir.join("svm_report.json"))?;
    for line in format_table(&[("HOG+SVM", &svm), ("CNN", &cnn)]).lines() {
        println!("      {line}");
    }
    let order = if cnn.mean > svm.mean { "CNN > SVM" } else { "CNN <= SVM" };
    ensure(cnn.mean >= 0.85, || format!("CNN mean accuracy {} below 0.85", cnn.summary()))?;
    within(elapsed, Duration::from_secs(3600))?;
    Ok(format!("CNN {}, HOG+SVM {} ({order}); pipeline {:.0}s", cnn.summary(), svm.summary(), elapsed.as_secs_f64()))
}

fn determinism(first: &Path, second: &Path) -> Check {
    if !first.join("cnn.bim").exists() {
        return Err("first pipeline run did not finish".into());
    }
    let elapsed = pipeline(second)?;
    let mut differing = Vec::new();
    for name in ARTIFACTS {
        let (a, b) = (fs::read(first.join(name)), fs::read(second.join(name)));
        match (a, b) {
            (Ok(a), Ok(b)) if a == b => {}
            _ => differing.push(name),
        }
    }
    ensure(differing.is_empty(), || format!("differs: {differing:?}"))?;
    Ok(format!("{} artifacts byte-identical; rerun {:.0}s", ARTIFACTS.len(), elapsed.as_secs_f64()))
}

fn protocol_invariants(dir: &Path) -> Check {
    let data = load_dataset(dir.join("data"), 64).map_err(|e| e.to_string())?;
    ensure(data.len() == 240, || format!("{} images", data.len()))?;
    let groups = data.group_ids();
    for grouped in [false, true] {
        let folds = evaluation_folds(&data, 5, 42, grouped).map_err(|e| e.to_string())?;
        let sizes: Vec<usize> = folds.iter().map(Vec::len).collect();
        ensure(sizes == [48; 5], || format!("fold sizes {sizes:?} (grouped {grouped})"))?;
        let all: HashSet<usize> = folds.iter().flatten().copied().collect();
        ensure(all.len() == 240, || "folds do not partition the data".into())?;
        if grouped {
            let mut home: HashMap<usize, usize> = HashMap::new();
            for (f, fold) in folds.iter().enumerate() {
                for &i in fold {
                    if *home.entry(groups[i]).or_insert(f) != f {
                        return Err(format!("group {} straddles folds", groups[i]));
                    }
                }
            }
        }
    }
    for name in ["cnn_report.json", "svm_report.json"] {
        let r = read_report(dir.join(name))?;
        let (m, s) = mean_std(&r.fold_accuracies);
        ensure(m == r.mean && s == r.std, || format!("{name}: recomputed {m} ± {s}, stored {} ± {}", r.mean, r.std))?;
    }
    let (m, s) = mean_std(&[0.8, 0.9, 1.0, 0.9, 0.8]);
    ensure((m - 0.88).abs() < 1e-12 && format!("{s:.4}") == "0.0837", || format!("example gives {m} ± {s}"))?;
    Ok(format!("5 x 48 folds, groups intact, report statistics exact; example {}", format_mean_std(m, s)))
}

fn search_domain() -> Check {
    let mut rng = common::rng(8);
    let n = 10_000;
    let mut seen: HashSet<String> = HashSet::new();
    let mut low = 0;
    for _ in 0..n {
        let hp = sample_hyperparams(&mut rng);
        hp.validate().map_err(|e| format!("{hp}: {e}"))?;
        ensure((LR_RANGE.0..=LR_RANGE.1).contains(&hp.learning_rate), || format!("learning rate {}", hp.learning_rate))?;
        seen.insert(format!("layers{}", hp.n_conv_layers));
        seen.insert(format!("maps{}", hp.n_maps));
        seen.insert(format!("kernel{}", hp.kernel));
        seen.insert(format!("bn{}", hp.batchnorm));
        seen.insert(format!("dropout{}", hp.dropout));
        low += usize::from(hp.learning_rate < 1e-3);
    }
    let mut expected: HashSet<String> = HashSet::new();
    expected.extend((LAYER_RANGE.0..=LAYER_RANGE.1).map(|v| format!("layers{v}")));
    expected.extend(MAP_CHOICES.iter().map(|v| format!("maps{v}")));
    expected.extend((KERNEL_RANGE.0..=KERNEL_RANGE.1).map(|v| format!("kernel{v}")));
    expected.extend([true, false].iter().map(|v| format!("bn{v}")));
    expected.extend(DROPOUT_CHOICES.iter().map(|v| format!("dropout{v}")));
    ensure(seen == expected, || format!("values seen {seen:?}"))?;
    let frac = low as f64 / n as f64;
    ensure((frac - 0.5).abs() <= 0.05, || format!("{frac:.3} of learning rates below 1e-3"))?;
    Ok(format!("{n} samples in domain, all {} discrete values seen, {:.1}% below 1e-3", expected.len(), 100.0 * frac))
}

fn main() {
    let root = tempfile::tempdir().expect("temp dir");
    let (first, second): (PathBuf, PathBuf) = (root.path().join("run1"), root.path().join("run2"));
    let mut h = Harness { failed: 0 };
    h.run(1, "kernel oracle equivalence", oracle_equivalence);
    h.run(2, "gradient verification", gradient_verification);
    h.run(3, "selected-architecture arithmetic", selected_arithmetic);
    h.run(4, "overfit sanity", overfit_sanity);
    h.run(5, "synthetic benchmark", || benchmark(&first));
    h.run(6, "determinism", || determinism(&first, &second));
    h.run(7, "protocol invariants", || protocol_invariants(&first));
    h.run(8, "random-search domain", search_domain);
    println!("{} of 8 criteria passed", 8 - h.failed);
    if h.failed > 0 {
        std::process::exit(1);
    }
}
