//! Memorise a small synthetic subset with the selected architecture.
//!
//! ```text
//! cargo run --release --example cnn_overfit -- [n_images] [epochs] [size] [batch]
//! ```

use std::time::Instant;

use bimclass::nn::{build_network, nn_predict, train_network, LabeledImage, TrainConfig};
use bimclass::search::HyperParams;
use bimclass::synth::{render_structure, structure_seed};
use bimclass::StructureClass;

fn main() {
    let args: Vec<usize> = std::env::args().skip(1).map(|a| a.parse().expect("numeric argument")).collect();
    let n = args.first().copied().unwrap_or(30);
    let epochs = args.get(1).copied().unwrap_or(200);
    let size = args.get(2).copied().unwrap_or(64);
    let batch = args.get(3).copied().unwrap_or(32);

    let data: Vec<LabeledImage> = (0..n)
        .map(|i| {
            let class = StructureClass::ALL[i % 3];
            let group = i / 3;
            let image = render_structure(class, structure_seed(7, group * 3 + class.code()), i % 4, size).unwrap();
            LabeledImage { image, label: class.code() }
        })
        .collect();

    let hp = HyperParams::selected();
    let mut net = build_network(&hp, [3, size, size], 1).unwrap();
    let cfg = TrainConfig { epochs, batch_size: batch, ..TrainConfig::new(hp.learning_rate, 1) };
    let start = Instant::now();
    let trace = train_network(&mut net, &data, &cfg).unwrap();
    for e in trace.epochs.iter().filter(|e| e.epoch % 20 == 0 || e.epoch + 1 == epochs) {
        println!("epoch {:3}  loss {:.4}  acc {:.3}", e.epoch, e.loss, e.accuracy);
    }
    let correct = data.iter().filter(|d| nn_predict(&net, &d.image).unwrap().0 == d.label).count();
    println!("eval accuracy {}/{}  ({:.1}s)", correct, n, start.elapsed().as_secs_f64());
}
