//! Brute-force reference implementations shared by the integration tests.
//! They follow the textbook definitions directly and share no code with the
//! library kernels.

#![allow(dead_code)]

use bimclass::hog::HogParams;
use bimclass::image::Image;
use bimclass::nn::{ConvKernel, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_tensor(rng: &mut ChaCha8Rng, shape: [usize; 3]) -> Tensor {
    let n = shape.iter().product();
    Tensor::from_vec(shape, (0..n).map(|_| rng.random_range(-1.0..1.0)).collect())
}

/// Small integers, so pooling windows contain ties.
pub fn tied_tensor(rng: &mut ChaCha8Rng, shape: [usize; 3]) -> Tensor {
    let n = shape.iter().product();
    Tensor::from_vec(shape, (0..n).map(|_| rng.random_range(0..3) as f64).collect())
}

/// `out[o,i,j] = bias[o] + sum_{c,u,v} x[c,i+u,j+v] * w[o,c,u,v]`.
pub fn conv_oracle(x: &Tensor, w: &ConvKernel, bias: &[f64]) -> Tensor {
    let [c_in, h, wd] = x.shape();
    let k = w.k;
    let (oh, ow) = (h - k + 1, wd - k + 1);
    let mut out = Tensor::zeros([w.c_out, oh, ow]);
    for o in 0..w.c_out {
        for i in 0..oh {
            for j in 0..ow {
                let mut s = bias[o];
                for c in 0..c_in {
                    for u in 0..k {
                        for v in 0..k {
                            s += x.at(c, i + u, j + v) * w.data[((o * c_in + c) * k + u) * k + v];
                        }
                    }
                }
                *out.at_mut(o, i, j) = s;
            }
        }
    }
    out
}

/// Floor-mode 2x2 max-pool; returns the output and the `(row, col)` of the
/// first maximum of each window in row-major order.
pub fn maxpool_oracle(x: &Tensor) -> (Tensor, Vec<(usize, usize, usize)>) {
    let [c, h, w] = x.shape();
    let mut out = Tensor::zeros([c, h / 2, w / 2]);
    let mut winners = Vec::new();
    for ch in 0..c {
        for i in 0..h / 2 {
            for j in 0..w / 2 {
                let mut best = (2 * i, 2 * j);
                for (r, col) in [(2 * i, 2 * j), (2 * i, 2 * j + 1), (2 * i + 1, 2 * j), (2 * i + 1, 2 * j + 1)] {
                    if x.at(ch, r, col) > x.at(ch, best.0, best.1) {
                        best = (r, col);
                    }
                }
                *out.at_mut(ch, i, j) = x.at(ch, best.0, best.1);
                winners.push((ch, best.0, best.1));
            }
        }
    }
    (out, winners)
}

fn pixel(img: &Image, r: usize, c: usize) -> f64 {
    img.get(r, c, 0)
}

/// Difference quotient over the clamped neighbours `[x-1, x+1]`.
fn derivative(img: &Image, r: usize, c: usize, horizontal: bool) -> f64 {
    let (len, pos) = if horizontal { (img.width(), c) } else { (img.height(), r) };
    let lo = pos.saturating_sub(1);
    let hi = (pos + 1).min(len - 1);
    if hi == lo {
        return 0.0;
    }
    let (a, b) = if horizontal { (pixel(img, r, hi), pixel(img, r, lo)) } else { (pixel(img, hi, c), pixel(img, lo, c)) };
    (a - b) / (hi - lo) as f64
}

/// Dense HOG of a grayscale image: triangular orientation votes on the
/// circle of orientations, then L2-Hys per block, one block at a time.
pub fn hog_oracle(img: &Image, p: &HogParams) -> Vec<f64> {
    let range = if p.signed { 360.0 } else { 180.0 };
    let bw = range / p.n_bins as f64;
    let cells_y = img.height() / p.cell_size;
    let cells_x = img.width() / p.cell_size;
    let blocks_y = (cells_y - p.block_size) / p.block_stride + 1;
    let blocks_x = (cells_x - p.block_size) / p.block_stride + 1;
    let mut out = Vec::new();
    for by in 0..blocks_y {
        for bx in 0..blocks_x {
            let mut block = Vec::new();
            for cy in 0..p.block_size {
                for cx in 0..p.block_size {
                    let mut hist = vec![0.0; p.n_bins];
                    let (y0, x0) = ((by * p.block_stride + cy) * p.cell_size, (bx * p.block_stride + cx) * p.cell_size);
                    for r in y0..y0 + p.cell_size {
                        for c in x0..x0 + p.cell_size {
                            let gx = derivative(img, r, c, true);
                            let gy = derivative(img, r, c, false);
                            let mag = gx.hypot(gy);
                            let theta = gy.atan2(gx).to_degrees().rem_euclid(range);
                            for (b, h) in hist.iter_mut().enumerate() {
                                let centre = (b as f64 + 0.5) * bw;
                                let d = (theta - centre).abs();
                                let d = d.min(range - d);
                                *h += mag * (1.0 - d / bw).max(0.0);
                            }
                        }
                    }
                    block.extend(hist);
                }
            }
            let n1 = (block.iter().map(|v| v * v).sum::<f64>() + 1e-12).sqrt();
            let clipped: Vec<f64> = block.iter().map(|v| (v / n1).min(0.2)).collect();
            let n2 = (clipped.iter().map(|v| v * v).sum::<f64>() + 1e-12).sqrt();
            out.extend(clipped.iter().map(|v| v / n2));
        }
    }
    out
}

pub fn random_gray(rng: &mut ChaCha8Rng, h: usize, w: usize, binary: bool) -> Image {
    let data = (0..h * w)
        .map(|_| if binary { rng.random_range(0..2) as f64 } else { rng.random::<f64>() })
        .collect();
    Image::from_vec(h, w, 1, data).unwrap()
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len(), "length mismatch");
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Largest deviation of conv, pool and HOG from their oracles over
/// `instances` random cases each.
pub fn kernel_oracle_sweep(instances: usize, seed: u64) -> (f64, f64, f64) {
    let mut r = rng(seed);
    let (mut conv, mut pool, mut hog) = (0.0f64, 0.0f64, 0.0f64);
    for n in 0..instances {
        let c_in = r.random_range(1..=3);
        let k = r.random_range(1..=4);
        let (h, w) = (r.random_range(k..=9), r.random_range(k..=9));
        let c_out = r.random_range(1..=4);
        let x = random_tensor(&mut r, [c_in, h, w]);
        let kernel = ConvKernel { c_out, c_in, k, data: (0..c_out * c_in * k * k).map(|_| r.random_range(-1.0..1.0)).collect() };
        let bias: Vec<f64> = (0..c_out).map(|_| r.random_range(-1.0..1.0)).collect();
        let got = bimclass::nn::conv2d_forward(&x, &kernel, &bias).unwrap();
        let want = conv_oracle(&x, &kernel, &bias);
        assert_eq!(got.shape(), want.shape());
        conv = conv.max(max_abs_diff(got.data(), want.data()));

        let shape = [r.random_range(1..=3), r.random_range(2..=9), r.random_range(2..=9)];
        let x = if n % 2 == 0 { random_tensor(&mut r, shape) } else { tied_tensor(&mut r, shape) };
        let (got, arg) = bimclass::nn::maxpool2x2_forward(&x).unwrap();
        let (want, winners) = maxpool_oracle(&x);
        assert_eq!(got.shape(), want.shape());
        pool = pool.max(max_abs_diff(got.data(), want.data()));
        let routed: Vec<usize> = winners.iter().map(|&(c, i, j)| (c * shape[1] + i) * shape[2] + j).collect();
        if routed != arg {
            pool = f64::INFINITY;
        }

        let (hh, ww) = (4 * r.random_range(2..=4), 4 * r.random_range(2..=4));
        let img = random_gray(&mut r, hh, ww, n % 2 == 1);
        let params = HogParams::default();
        let got = bimclass::hog::hog_descriptor(&img, &params).unwrap();
        hog = hog.max(max_abs_diff(&got.values, &hog_oracle(&img, &params)));
    }
    (conv, pool, hog)
}

/// Samples architectures from the search space until `count` of them fit a
/// 3x12x12 input (the last is forced to use batch norm if none did), and
/// gradient-checks each on a two-sample batch.
pub fn gradcheck_random_architectures(
    count: usize,
    seed: u64,
) -> Vec<(bimclass::search::HyperParams, bimclass::nn::GradCheckReport)> {
    use bimclass::nn::{build_network, gradient_check};
    use bimclass::search::sample_hyperparams;
    let mut r = rng(seed);
    let mut picked = Vec::new();
    while picked.len() < count {
        let hp = sample_hyperparams(&mut r);
        if bimclass::nn::NetworkSpec::from_hyper(&hp, [3, 12, 12]).validate().is_ok() {
            picked.push(hp);
        }
    }
    if !picked.iter().any(|h| h.batchnorm) {
        picked.last_mut().unwrap().batchnorm = true;
    }
    picked
        .into_iter()
        .enumerate()
        .map(|(i, hp)| {
            let net = build_network(&hp, [3, 12, 12], seed + i as u64).unwrap();
            let batch: Vec<Tensor> =
                (0..2).map(|_| Tensor::from_vec([3, 12, 12], (0..432).map(|_| r.random::<f64>()).collect())).collect();
            let targets = [r.random_range(0..3), r.random_range(0..3)];
            let report = gradient_check(&net, &batch, &targets, seed ^ i as u64).unwrap();
            (hp, report)
        })
        .collect()
}
