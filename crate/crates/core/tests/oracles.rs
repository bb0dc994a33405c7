mod common;

use bimclass::hog::{cell_histograms, gradients, hog_descriptor, HogParams};
use bimclass::image::Image;
use bimclass::nn::{
    batchnorm_backward, batchnorm_forward, conv2d_backward, conv2d_forward, dropout_forward, softmax, softmax_cross_entropy,
    BatchNormParams, ConvKernel, Mode, Tensor,
};
use bimclass::seed::rng_from_seed;
use common::*;
use proptest::prelude::*;
use rand::Rng;

#[test]
fn kernels_match_brute_force_oracles() {
    let (conv, pool, hog) = kernel_oracle_sweep(150, 11);
    assert!(conv <= 1e-12, "conv deviates by {conv}");
    assert!(pool <= 1e-12, "max-pool deviates by {pool}");
    assert!(hog <= 1e-10, "HOG deviates by {hog}");
}

#[test]
fn conv_spec_instance() {
    let mut r = rng(3);
    let x = random_tensor(&mut r, [2, 5, 5]);
    let k = ConvKernel { c_out: 3, c_in: 2, k: 3, data: (0..54).map(|_| r.random_range(-1.0..1.0)).collect() };
    let b = [0.1, -0.2, 0.3];
    let got = conv2d_forward(&x, &k, &b).unwrap();
    assert!(max_abs_diff(got.data(), conv_oracle(&x, &k, &b).data()) <= 1e-12);
}

fn rel_err(a: f64, b: f64) -> f64 {
    let d = (a - b).abs();
    if a.abs() < 1e-6 && b.abs() < 1e-6 {
        if d <= 1e-8 {
            0.0
        } else {
            f64::INFINITY
        }
    } else {
        d / a.abs().max(b.abs())
    }
}

#[test]
fn conv_backward_matches_finite_differences() {
    let mut r = rng(5);
    for _ in 0..5 {
        let x = random_tensor(&mut r, [2, 6, 5]);
        let mut k = ConvKernel { c_out: 3, c_in: 2, k: 3, data: (0..54).map(|_| r.random_range(-1.0..1.0)).collect() };
        let b = vec![0.05, -0.1, 0.2];
        let g = random_tensor(&mut r, [3, 4, 3]);
        let loss = |x: &Tensor, k: &ConvKernel, b: &[f64]| -> f64 {
            conv2d_forward(x, k, b).unwrap().data().iter().zip(g.data()).map(|(a, b)| a * b).sum()
        };
        let (gx, gk, gb) = conv2d_backward(&x, &k, &g).unwrap();
        let h = 1e-5;
        let mut worst = 0.0f64;
        for i in 0..x.len() {
            let (mut p, mut m) = (x.clone(), x.clone());
            p.data_mut()[i] += h;
            m.data_mut()[i] -= h;
            worst = worst.max(rel_err(gx.data()[i], (loss(&p, &k, &b) - loss(&m, &k, &b)) / (2.0 * h)));
        }
        for i in 0..k.data.len() {
            let orig = k.data[i];
            k.data[i] = orig + h;
            let lp = loss(&x, &k, &b);
            k.data[i] = orig - h;
            let lm = loss(&x, &k, &b);
            k.data[i] = orig;
            worst = worst.max(rel_err(gk[i], (lp - lm) / (2.0 * h)));
        }
        for i in 0..b.len() {
            let (mut bp, mut bm) = (b.clone(), b.clone());
            bp[i] += h;
            bm[i] -= h;
            worst = worst.max(rel_err(gb[i], (loss(&x, &k, &bp) - loss(&x, &k, &bm)) / (2.0 * h)));
        }
        assert!(worst <= 1e-4, "relative error {worst}");
    }
}

#[test]
fn batchnorm_backward_matches_finite_differences() {
    let mut r = rng(8);
    let xs: Vec<Tensor> = (0..3).map(|_| random_tensor(&mut r, [2, 3, 3])).collect();
    let gs: Vec<Tensor> = (0..3).map(|_| random_tensor(&mut r, [2, 3, 3])).collect();
    let mut p = BatchNormParams::new(2);
    p.gamma = vec![1.3, 0.7];
    p.beta = vec![0.2, -0.4];
    let loss = |xs: &[Tensor], p: &BatchNormParams| -> f64 {
        let mut q = p.clone();
        let (y, _) = batchnorm_forward(xs, &mut q, Mode::Train, 1e-5, 0.9).unwrap();
        y.iter().zip(&gs).map(|(a, b)| a.data().iter().zip(b.data()).map(|(u, v)| u * v).sum::<f64>()).sum()
    };
    let (_, cache) = batchnorm_forward(&xs, &mut p.clone(), Mode::Train, 1e-5, 0.9).unwrap();
    let (dx, dgamma, dbeta) = batchnorm_backward(&cache.unwrap(), &p.gamma, &gs).unwrap();
    let h = 1e-5;
    let mut worst = 0.0f64;
    for s in 0..xs.len() {
        for i in 0..xs[s].len() {
            let (mut a, mut b) = (xs.clone(), xs.clone());
            a[s].data_mut()[i] += h;
            b[s].data_mut()[i] -= h;
            worst = worst.max(rel_err(dx[s].data()[i], (loss(&a, &p) - loss(&b, &p)) / (2.0 * h)));
        }
    }
    for c in 0..2 {
        let (mut a, mut b) = (p.clone(), p.clone());
        a.gamma[c] += h;
        b.gamma[c] -= h;
        worst = worst.max(rel_err(dgamma[c], (loss(&xs, &a) - loss(&xs, &b)) / (2.0 * h)));
        let (mut a, mut b) = (p.clone(), p.clone());
        a.beta[c] += h;
        b.beta[c] -= h;
        worst = worst.max(rel_err(dbeta[c], (loss(&xs, &a) - loss(&xs, &b)) / (2.0 * h)));
    }
    assert!(worst <= 1e-4, "relative error {worst}");
}

#[test]
fn softmax_gradient_matches_finite_differences() {
    let mut r = rng(21);
    for _ in 0..20 {
        let z: Vec<f64> = (0..3).map(|_| r.random_range(-5.0..5.0)).collect();
        let t = r.random_range(0..3);
        let (loss, g) = softmax_cross_entropy(&z, t).unwrap();
        assert!(loss >= 0.0);
        assert!((softmax(&z).iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        for i in 0..3 {
            let (mut a, mut b) = (z.clone(), z.clone());
            a[i] += 1e-5;
            b[i] -= 1e-5;
            let fd = (softmax_cross_entropy(&a, t).unwrap().0 - softmax_cross_entropy(&b, t).unwrap().0) / 2e-5;
            assert!(rel_err(g[i], fd) <= 1e-4);
        }
    }
}

#[test]
fn dropout_statistics() {
    let mut r = rng(2);
    let x = Tensor::vector((0..100_000).map(|_| r.random_range(0.5..1.5)).collect());
    let (y, mask) = dropout_forward(&x, 0.3, Mode::Train, &mut rng_from_seed(9)).unwrap();
    let survivors = mask.iter().filter(|&&m| m > 0.0).count() as f64 / mask.len() as f64;
    assert!((0.69..=0.71).contains(&survivors), "survivor fraction {survivors}");
    let (mx, my) = (x.data().iter().sum::<f64>(), y.data().iter().sum::<f64>());
    assert!(((my - mx) / mx).abs() <= 0.01);
}

#[test]
fn hog_vertical_step_edge() {
    let mut img = Image::filled(6, 6, 1, 0.0).unwrap();
    for r in 3..6 {
        for c in 0..6 {
            img.set(r, c, 0, 1.0);
        }
    }
    let (gx, gy) = gradients(&img).unwrap();
    let peak = (0..6).map(|r| gy.at(r, 2).abs()).fold(0.0, f64::max);
    for r in 0..6 {
        for c in 0..6 {
            assert_eq!(gx.at(r, c), 0.0);
        }
        let edge = r == 2 || r == 3;
        assert_eq!(gy.at(r, 0).abs() == peak, edge);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    /// Moving content by one cell moves the interior histograms by one cell.
    #[test]
    fn hog_cells_follow_a_cell_shift(seed in any::<u64>(), right in any::<bool>()) {
        let p = HogParams::default();
        let (h, w) = (24, 24);
        let mut r = rng(seed);
        let mut base = Image::filled(h, w, 1, 0.5).unwrap();
        for row in 6..18 {
            for col in 6..18 {
                base.set(row, col, 0, r.random::<f64>());
            }
        }
        let (dr, dc) = if right { (0, 4) } else { (4, 0) };
        let mut moved = Image::filled(h, w, 1, 0.5).unwrap();
        for row in 0..h - dr {
            for col in 0..w - dc {
                moved.set(row + dr, col + dc, 0, base.get(row, col, 0));
            }
        }
        let cells = |img: &Image| {
            let (gx, gy) = gradients(img).unwrap();
            cell_histograms(&gx, &gy, &p).unwrap()
        };
        let (a, b) = (cells(&base), cells(&moved));
        let (sy, sx) = (dr / 4, dc / 4);
        for cy in 1..a.cells_y - 2 {
            for cx in 1..a.cells_x - 2 {
                let diff = max_abs_diff(a.cell(cy, cx), b.cell(cy + sy, cx + sx));
                prop_assert!(diff <= 1e-12, "cell ({}, {}) differs by {}", cy, cx, diff);
            }
        }
    }

    #[test]
    fn hog_blocks_are_bounded(seed in any::<u64>()) {
        let mut r = rng(seed);
        let img = random_gray(&mut r, 16, 12, seed % 2 == 0);
        let d = hog_descriptor(&img, &HogParams::default()).unwrap();
        prop_assert_eq!(d.len(), 3 * 2 * 4 * 9);
        for by in 0..d.blocks_y {
            for bx in 0..d.blocks_x {
                let b = d.block(by, bx);
                prop_assert!(b.iter().map(|v| v * v).sum::<f64>().sqrt() <= 1.0 + 1e-9);
                prop_assert!(b.iter().all(|v| (0.0..=1.0).contains(v)));
            }
        }
    }
}
