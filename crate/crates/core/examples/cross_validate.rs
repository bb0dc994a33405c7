//! Five-fold comparison of the SVM baseline and the selected CNN.
//!
//! ```text
//! cargo run --release --example cross_validate -- [per_class] [size] [cnn_epochs]
//! ```

use bimclass::dataset::load_dataset;
use bimclass::eval::{cross_validate_cnn, cross_validate_svm, format_table, CnnConfig, SvmConfig};
use bimclass::synth::generate_dataset;

fn main() {
    let args: Vec<usize> = std::env::args().skip(1).map(|a| a.parse().expect("numeric argument")).collect();
    let per_class = args.first().copied().unwrap_or(10);
    let size = args.get(1).copied().unwrap_or(64);
    let epochs = args.get(2).copied().unwrap_or(20);

    let dir = tempfile::tempdir().unwrap();
    generate_dataset(dir.path(), per_class, 42, size).unwrap();
    let data = load_dataset(dir.path(), size).unwrap();

    let svm = cross_validate_svm(&data, 5, 42, true, &SvmConfig::default()).unwrap();
    let cnn_cfg = CnnConfig { image_size: size, epochs, ..CnnConfig::default() };
    let cnn = cross_validate_cnn(&data, 5, 42, true, &cnn_cfg).unwrap();
    print!("{}", format_table(&[("HOG+SVM", &svm), ("CNN", &cnn)]));
    println!("CNN confusion (rows true): {:?}", cnn.confusion);
}
