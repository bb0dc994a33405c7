//! Render the synthetic wireframe dataset and print per-class counts.
//!
//! ```text
//! cargo run --release --example generate_dataset -- <out_dir> [per_class] [size] [seed]
//! ```

use bimclass::synth::generate_dataset;
use bimclass::StructureClass;

fn main() {
    let mut args = std::env::args().skip(1);
    let out = args.next().unwrap_or_else(|| "synthetic".into());
    let num = |a: Option<String>, d: u64| a.map_or(d, |s| s.parse().expect("numeric argument"));
    let per_class = num(args.next(), 20) as usize;
    let size = num(args.next(), 64) as usize;
    let seed = num(args.next(), bimclass::DEFAULT_SEED);

    let manifest = generate_dataset(&out, per_class, seed, size).unwrap();
    for class in StructureClass::ALL {
        let n = manifest.entries.iter().filter(|e| e.label == class).count();
        println!("{:<20} {n}", class.name());
    }
    println!("{} images at {size}x{size} in {out}", manifest.len());
}
