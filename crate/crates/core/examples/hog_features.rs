//! HOG descriptor of one rendered view, summarised per block.
//!
//! ```text
//! cargo run --release --example hog_features -- [size]
//! ```

use bimclass::hog::{hog_descriptor, HogParams};
use bimclass::image::to_grayscale;
use bimclass::synth::{render_structure, structure_seed};
use bimclass::StructureClass;

fn main() {
    let size: usize = std::env::args().nth(1).map_or(64, |s| s.parse().expect("numeric size"));
    let params = HogParams::default();
    for class in StructureClass::ALL {
        let img = render_structure(class, structure_seed(1, class.code()), 0, size).unwrap();
        let desc = hog_descriptor(&to_grayscale(&img), &params).unwrap();
        // Dominant orientation bin, summed over every block.
        let mut bins = vec![0.0; desc.n_bins];
        for (i, v) in desc.values.iter().enumerate() {
            bins[i % desc.n_bins] += v;
        }
        let top = bins.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).unwrap().0;
        println!(
            "{:<20} {} values ({}x{} blocks), dominant bin {top}",
            class.name(),
            desc.len(),
            desc.blocks_y,
            desc.blocks_x
        );
    }
}
