//! Apply each augmentation to a rendered view and save the results as PNGs.
//!
//! ```text
//! cargo run --release --example augment_preview -- [out_dir] [seed]
//! ```

use bimclass::augment::{augment, hflip, rotate, shift, AugmentParams};
use bimclass::image::save_image;
use bimclass::seed::rng_from_seed;
use bimclass::synth::{render_structure, structure_seed};
use bimclass::StructureClass;

fn main() {
    let mut args = std::env::args().skip(1);
    let out = std::path::PathBuf::from(args.next().unwrap_or_else(|| "preview".into()));
    let seed: u64 = args.next().map_or(7, |s| s.parse().expect("numeric seed"));
    std::fs::create_dir_all(&out).unwrap();

    let img = render_structure(StructureClass::IndustrialBuilding, structure_seed(seed, 0), 1, 128).unwrap();
    let p = AugmentParams::default();
    let mut rng = rng_from_seed(seed);
    let variants = [
        ("original", img.clone()),
        ("rotation", rotate(&img, p.max_rotation_deg, p.fill_value)),
        ("shift", shift(&img, 12, -12, p.fill_value).unwrap()),
        ("hflip", hflip(&img)),
        ("random_a", augment(&img, &p, &mut rng)),
        ("random_b", augment(&img, &p, &mut rng)),
    ];
    for (name, v) in &variants {
        save_image(v, out.join(format!("{name}.png"))).unwrap();
    }
    println!("wrote {} images to {}", variants.len(), out.display());
}
