//! A short random search over the CNN hyperparameter space, printing the ledger.
//!
//! ```text
//! cargo run --release --example random_search -- [trials] [epochs] [size]
//! ```

use bimclass::dataset::load_dataset;
use bimclass::eval::labeled_images;
use bimclass::search::{random_search, write_ledger, SearchConfig};
use bimclass::synth::generate_dataset;

fn main() {
    let args: Vec<usize> = std::env::args().skip(1).map(|a| a.parse().expect("numeric argument")).collect();
    let trials = args.first().copied().unwrap_or(6);
    let epochs = args.get(1).copied().unwrap_or(5);
    let size = args.get(2).copied().unwrap_or(32);

    let dir = tempfile::tempdir().unwrap();
    generate_dataset(dir.path(), 6, 42, size.max(32)).unwrap();
    let data = load_dataset(dir.path(), size).unwrap();
    let cfg = SearchConfig { n_trials: trials, epochs, grouped: true, ..SearchConfig::default() };
    let outcome = random_search(&labeled_images(&data), Some(&data.group_ids()), &cfg).unwrap();

    write_ledger(&outcome.ledger, &mut std::io::stdout()).unwrap();
    println!("best: trial {} ({})", outcome.best.trial_index, outcome.best.hp);
}
