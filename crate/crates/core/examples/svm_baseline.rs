//! HOG + one-vs-rest linear SVM on a grouped train/test split.
//!
//! ```text
//! cargo run --release --example svm_baseline -- [per_class] [size]
//! ```

use bimclass::dataset::load_dataset;
use bimclass::eval::{accuracy, hog_features, train_test_split};
use bimclass::hog::HogParams;
use bimclass::svm::{svm_predict, train_linear_svm};
use bimclass::synth::generate_dataset;
use bimclass::N_CLASSES;

fn main() {
    let args: Vec<usize> = std::env::args().skip(1).map(|a| a.parse().expect("numeric argument")).collect();
    let per_class = args.first().copied().unwrap_or(20);
    let size = args.get(1).copied().unwrap_or(64);

    let dir = tempfile::tempdir().unwrap();
    generate_dataset(dir.path(), per_class, 42, size).unwrap();
    let data = load_dataset(dir.path(), size).unwrap();
    let (train, test) = train_test_split(&data.manifest, 0.8, 42, true).unwrap();

    let params = HogParams::default();
    let features: Vec<Vec<f64>> = data.images.iter().map(|img| hog_features(img, &params).unwrap()).collect();
    let labels = data.labels();
    let pick = |idx: &[usize]| -> (Vec<Vec<f64>>, Vec<usize>) {
        (idx.iter().map(|&i| features[i].clone()).collect(), idx.iter().map(|&i| labels[i]).collect())
    };
    let (xtr, ytr) = pick(&train);
    let (xte, yte) = pick(&test);
    let model = train_linear_svm(&xtr, &ytr, N_CLASSES, 1e-4, 50, 42).unwrap();
    let pred: Vec<usize> = xte.iter().map(|x| svm_predict(&model, x).unwrap()).collect();
    println!("{} features, {} train / {} test", features[0].len(), train.len(), test.len());
    println!("held-out accuracy {:.3}", accuracy(&pred, &yte).unwrap());
}
