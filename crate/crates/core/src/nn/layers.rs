//! Forward and backward kernels for every layer kind.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::{NnError, Tensor};
use crate::seed::Rng;

/// `c = beta * c + op(a) * op(b)` with `op(a)` of shape `m x k` and `op(b)` of
/// shape `k x n`, all row-major. `a_t`/`b_t` read the operand transposed.
#[allow(clippy::too_many_arguments)]
pub(crate) fn gemm(m: usize, k: usize, n: usize, a: &[f64], a_t: bool, b: &[f64], b_t: bool, beta: f64, c: &mut [f64]) {
    assert!(a.len() >= m * k && b.len() >= k * n && c.len() >= m * n);
    if m == 0 || n == 0 {
        return;
    }
    let (rsa, csa) = if a_t { (1, m as isize) } else { (k as isize, 1) };
    let (rsb, csb) = if b_t { (1, k as isize) } else { (n as isize, 1) };
    // SAFETY: the asserts above bound every index the strides can reach.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// Convolution kernels laid out `(c_out, c_in, k, k)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvKernel {
    pub c_out: usize,
    pub c_in: usize,
    pub k: usize,
    pub data: Vec<f64>,
}

impl ConvKernel {
    pub fn zeros(c_out: usize, c_in: usize, k: usize) -> ConvKernel {
        ConvKernel { c_out, c_in, k, data: vec![0.0; c_out * c_in * k * k] }
    }

    pub fn patch_len(&self) -> usize {
        self.c_in * self.k * self.k
    }
}

fn im2col(x: &Tensor, k: usize, cols: &mut Vec<f64>) {
    let [c_in, h, w] = x.shape();
    let (oh, ow) = (h - k + 1, w - k + 1);
    let p = oh * ow;
    cols.clear();
    cols.resize(c_in * k * k * p, 0.0);
    let xd = x.data();
    for c in 0..c_in {
        for u in 0..k {
            for v in 0..k {
                let row = &mut cols[((c * k + u) * k + v) * p..][..p];
                for i in 0..oh {
                    let src = &xd[(c * h + i + u) * w + v..][..ow];
                    row[i * ow..(i + 1) * ow].copy_from_slice(src);
                }
            }
        }
    }
}

fn col2im_add(cols: &[f64], k: usize, shape: [usize; 3], out: &mut Tensor) {
    let [c_in, h, w] = shape;
    let (oh, ow) = (h - k + 1, w - k + 1);
    let p = oh * ow;
    let od = out.data_mut();
    for c in 0..c_in {
        for u in 0..k {
            for v in 0..k {
                let row = &cols[((c * k + u) * k + v) * p..][..p];
                for i in 0..oh {
                    let dst = &mut od[(c * h + i + u) * w + v..][..ow];
                    for (d, s) in dst.iter_mut().zip(&row[i * ow..(i + 1) * ow]) {
                        *d += s;
                    }
                }
            }
        }
    }
}

fn check_conv(x: &Tensor, kernel: &ConvKernel, bias_len: usize) -> Result<(usize, usize), NnError> {
    let [c_in, h, w] = x.shape();
    if c_in != kernel.c_in || bias_len != kernel.c_out || kernel.data.len() != kernel.c_out * kernel.patch_len() {
        return Err(NnError::DimensionMismatch(format!(
            "input {:?} with kernel ({}, {}, {k}, {k}) and {bias_len} biases",
            x.shape(),
            kernel.c_out,
            kernel.c_in,
            k = kernel.k
        )));
    }
    if kernel.k == 0 || h < kernel.k || w < kernel.k {
        return Err(NnError::KernelTooLarge { kernel: kernel.k, rows: h, cols: w });
    }
    Ok((h - kernel.k + 1, w - kernel.k + 1))
}

/// Valid cross-correlation: `out[o,i,j] = bias[o] + sum_{c,u,v} x[c,i+u,j+v] * K[o,c,u,v]`.
pub fn conv2d_forward(x: &Tensor, kernel: &ConvKernel, bias: &[f64]) -> Result<Tensor, NnError> {
    let (oh, ow) = check_conv(x, kernel, bias.len())?;
    let p = oh * ow;
    let mut cols = Vec::new();
    im2col(x, kernel.k, &mut cols);
    let mut out = vec![0.0; kernel.c_out * p];
    for (o, b) in bias.iter().enumerate() {
        out[o * p..(o + 1) * p].iter_mut().for_each(|v| *v = *b);
    }
    gemm(kernel.c_out, kernel.patch_len(), p, &kernel.data, false, &cols, false, 1.0, &mut out);
    Ok(Tensor::from_vec([kernel.c_out, oh, ow], out))
}

/// Gradients of [`conv2d_forward`]: `(grad_x, grad_kernel, grad_bias)`.
pub fn conv2d_backward(x: &Tensor, kernel: &ConvKernel, grad_out: &Tensor) -> Result<(Tensor, Vec<f64>, Vec<f64>), NnError> {
    let mut gk = vec![0.0; kernel.data.len()];
    let mut gb = vec![0.0; kernel.c_out];
    let gx = conv2d_backward_acc(x, kernel, grad_out, &mut gk, &mut gb)?;
    Ok((gx, gk, gb))
}

/// Like [`conv2d_backward`], accumulating parameter gradients into `gk`/`gb`.
pub(crate) fn conv2d_backward_acc(
    x: &Tensor,
    kernel: &ConvKernel,
    grad_out: &Tensor,
    gk: &mut [f64],
    gb: &mut [f64],
) -> Result<Tensor, NnError> {
    let (oh, ow) = check_conv(x, kernel, gb.len())?;
    if grad_out.shape() != [kernel.c_out, oh, ow] {
        return Err(NnError::DimensionMismatch(format!(
            "grad_out {:?}, expected {:?}",
            grad_out.shape(),
            [kernel.c_out, oh, ow]
        )));
    }
    let p = oh * ow;
    let kk = kernel.patch_len();
    let g = grad_out.data();
    for (o, b) in gb.iter_mut().enumerate() {
        *b += g[o * p..(o + 1) * p].iter().sum::<f64>();
    }
    let mut cols = Vec::new();
    im2col(x, kernel.k, &mut cols);
    // dK (c_out x kk) += G (c_out x p) * cols^T (p x kk)
    gemm(kernel.c_out, p, kk, g, false, &cols, true, 1.0, gk);
    // dcols (kk x p) = K^T (kk x c_out) * G (c_out x p)
    gemm(kk, kernel.c_out, p, &kernel.data, true, g, false, 0.0, &mut cols);
    let mut gx = Tensor::zeros(x.shape());
    col2im_add(&cols, kernel.k, x.shape(), &mut gx);
    Ok(gx)
}

pub fn relu_forward(x: &Tensor) -> Tensor {
    Tensor::from_vec(x.shape(), x.data().iter().map(|&v| v.max(0.0)).collect())
}

/// Passes `grad` through where the forward input was positive.
pub fn relu_backward(x: &Tensor, grad: &Tensor) -> Result<Tensor, NnError> {
    same_shape(x, grad)?;
    let data = x.data().iter().zip(grad.data()).map(|(&v, &g)| if v > 0.0 { g } else { 0.0 }).collect();
    Ok(Tensor::from_vec(x.shape(), data))
}

fn same_shape(a: &Tensor, b: &Tensor) -> Result<(), NnError> {
    if a.shape() != b.shape() {
        return Err(NnError::DimensionMismatch(format!("{:?} vs {:?}", a.shape(), b.shape())));
    }
    Ok(())
}

/// 2x2 max-pooling with stride 2; a trailing odd row or column is dropped.
/// Returns the pooled tensor and, per output, the flat input index of the
/// first maximum in row-major window order.
pub fn maxpool2x2_forward(x: &Tensor) -> Result<(Tensor, Vec<usize>), NnError> {
    let [c, h, w] = x.shape();
    if h < 2 || w < 2 {
        return Err(NnError::DimensionMismatch(format!("max-pool input {:?} smaller than 2x2", x.shape())));
    }
    let (oh, ow) = (h / 2, w / 2);
    let xd = x.data();
    let mut out = Vec::with_capacity(c * oh * ow);
    let mut arg = Vec::with_capacity(c * oh * ow);
    for ch in 0..c {
        for i in 0..oh {
            for j in 0..ow {
                let base = (ch * h + 2 * i) * w + 2 * j;
                let mut best = base;
                for idx in [base + 1, base + w, base + w + 1] {
                    if xd[idx] > xd[best] {
                        best = idx;
                    }
                }
                out.push(xd[best]);
                arg.push(best);
            }
        }
    }
    Ok((Tensor::from_vec([c, oh, ow], out), arg))
}

pub fn maxpool2x2_backward(input_shape: [usize; 3], argmax: &[usize], grad: &Tensor) -> Result<Tensor, NnError> {
    if grad.len() != argmax.len() {
        return Err(NnError::DimensionMismatch(format!("{} grads for {} pooled outputs", grad.len(), argmax.len())));
    }
    let mut gx = Tensor::zeros(input_shape);
    let gd = gx.data_mut();
    for (&idx, &g) in argmax.iter().zip(grad.data()) {
        gd[idx] += g;
    }
    Ok(gx)
}

/// Fully connected layer, weights `(n_out, n_in)` row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseParams {
    pub n_in: usize,
    pub n_out: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

pub fn dense_forward(x: &Tensor, p: &DenseParams) -> Result<Tensor, NnError> {
    if x.len() != p.n_in {
        return Err(NnError::DimensionMismatch(format!("dense input {} vs {}", x.len(), p.n_in)));
    }
    let xd = x.data();
    let out = (0..p.n_out)
        .map(|o| p.bias[o] + p.weights[o * p.n_in..(o + 1) * p.n_in].iter().zip(xd).map(|(w, v)| w * v).sum::<f64>())
        .collect();
    Ok(Tensor::vector(out))
}

/// Returns `grad_x` and accumulates `grad_w += g x^T`, `grad_b += g`.
pub fn dense_backward(x: &Tensor, p: &DenseParams, grad: &Tensor, gw: &mut [f64], gb: &mut [f64]) -> Result<Tensor, NnError> {
    if x.len() != p.n_in || grad.len() != p.n_out {
        return Err(NnError::DimensionMismatch(format!(
            "dense backward with input {} and grad {} for ({}, {})",
            x.len(),
            grad.len(),
            p.n_out,
            p.n_in
        )));
    }
    let xd = x.data();
    let mut gx = vec![0.0; p.n_in];
    for (o, &g) in grad.data().iter().enumerate() {
        gb[o] += g;
        let row = &p.weights[o * p.n_in..(o + 1) * p.n_in];
        let grow = &mut gw[o * p.n_in..(o + 1) * p.n_in];
        for i in 0..p.n_in {
            grow[i] += g * xd[i];
            gx[i] += g * row[i];
        }
    }
    Ok(Tensor::from_vec(x.shape(), gx))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

pub const BN_EPS: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.9;

/// Per-channel batch-norm parameters and running statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchNormParams {
    pub gamma: Vec<f64>,
    pub beta: Vec<f64>,
    pub running_mean: Vec<f64>,
    pub running_var: Vec<f64>,
}

impl BatchNormParams {
    pub fn new(channels: usize) -> Self {
        BatchNormParams {
            gamma: vec![1.0; channels],
            beta: vec![0.0; channels],
            running_mean: vec![0.0; channels],
            running_var: vec![1.0; channels],
        }
    }
}

/// What the backward pass needs from a training-mode forward pass.
#[derive(Debug, Clone)]
pub struct BatchNormCache {
    pub x_hat: Vec<Tensor>,
    pub inv_std: Vec<f64>,
    pub batch_mean: Vec<f64>,
    pub batch_var: Vec<f64>,
}

/// Batch normalisation over `(batch, rows, cols)` per channel.
///
/// Training mode uses the biased batch variance, returns a cache for the
/// backward pass and updates the running statistics as
/// `running = momentum * running + (1 - momentum) * batch`. Evaluation mode
/// uses the running statistics and leaves them untouched.
pub fn batchnorm_forward(
    x: &[Tensor],
    p: &mut BatchNormParams,
    mode: Mode,
    eps: f64,
    momentum: f64,
) -> Result<(Vec<Tensor>, Option<BatchNormCache>), NnError> {
    let channels = p.gamma.len();
    let shape = x.first().map(Tensor::shape).ok_or(NnError::BatchTooSmall(0))?;
    if shape[0] != channels || x.iter().any(|t| t.shape() != shape) {
        return Err(NnError::DimensionMismatch(format!("batch-norm over {channels} channels got {shape:?}")));
    }
    let plane = shape[1] * shape[2];
    match mode {
        Mode::Eval => Ok((x.iter().map(|t| batchnorm_eval(t, p, eps)).collect(), None)),
        Mode::Train => {
            if x.len() < 2 {
                return Err(NnError::BatchTooSmall(x.len()));
            }
            let count = (x.len() * plane) as f64;
            let mut mean = vec![0.0; channels];
            let mut var = vec![0.0; channels];
            for c in 0..channels {
                mean[c] = x.iter().map(|t| t.channel(c).iter().sum::<f64>()).sum::<f64>() / count;
                var[c] = x
                    .iter()
                    .map(|t| t.channel(c).iter().map(|v| (v - mean[c]) * (v - mean[c])).sum::<f64>())
                    .sum::<f64>()
                    / count;
            }
            let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + eps).sqrt()).collect();
            let mut x_hat = Vec::with_capacity(x.len());
            let mut out = Vec::with_capacity(x.len());
            for t in x {
                let mut xh = t.clone();
                let mut y = t.clone();
                for c in 0..channels {
                    let r = c * plane..(c + 1) * plane;
                    for (h, v) in xh.data_mut()[r.clone()].iter_mut().zip(y.data_mut()[r].iter_mut()) {
                        *h = (*h - mean[c]) * inv_std[c];
                        *v = p.gamma[c] * *h + p.beta[c];
                    }
                }
                x_hat.push(xh);
                out.push(y);
            }
            for c in 0..channels {
                p.running_mean[c] = momentum * p.running_mean[c] + (1.0 - momentum) * mean[c];
                p.running_var[c] = momentum * p.running_var[c] + (1.0 - momentum) * var[c];
            }
            Ok((out, Some(BatchNormCache { x_hat, inv_std, batch_mean: mean, batch_var: var })))
        }
    }
}

/// Evaluation-mode batch norm of one sample using the running statistics.
pub(crate) fn batchnorm_eval(x: &Tensor, p: &BatchNormParams, eps: f64) -> Tensor {
    let plane = x.rows() * x.cols();
    let mut y = x.clone();
    for c in 0..p.gamma.len() {
        let inv = 1.0 / (p.running_var[c] + eps).sqrt();
        let (g, b, m) = (p.gamma[c], p.beta[c], p.running_mean[c]);
        y.data_mut()[c * plane..(c + 1) * plane].iter_mut().for_each(|v| *v = g * (*v - m) * inv + b);
    }
    y
}

/// Exact gradient through the batch mean and variance. Returns
/// `(grad_x, grad_gamma, grad_beta)`.
pub fn batchnorm_backward(
    cache: &BatchNormCache,
    gamma: &[f64],
    grad_out: &[Tensor],
) -> Result<(Vec<Tensor>, Vec<f64>, Vec<f64>), NnError> {
    if grad_out.len() != cache.x_hat.len() || grad_out.iter().zip(&cache.x_hat).any(|(g, x)| g.shape() != x.shape()) {
        return Err(NnError::DimensionMismatch("batch-norm gradient does not match its cache".into()));
    }
    let channels = gamma.len();
    let plane = cache.x_hat[0].rows() * cache.x_hat[0].cols();
    let count = (grad_out.len() * plane) as f64;
    let mut dgamma = vec![0.0; channels];
    let mut dbeta = vec![0.0; channels];
    for (g, xh) in grad_out.iter().zip(&cache.x_hat) {
        for c in 0..channels {
            let gc = g.channel(c);
            dbeta[c] += gc.iter().sum::<f64>();
            dgamma[c] += gc.iter().zip(xh.channel(c)).map(|(a, b)| a * b).sum::<f64>();
        }
    }
    let dx = grad_out
        .iter()
        .zip(&cache.x_hat)
        .map(|(g, xh)| {
            let mut d = g.clone();
            for c in 0..channels {
                let k = gamma[c] * cache.inv_std[c] / count;
                let r = c * plane..(c + 1) * plane;
                for (dv, &h) in d.data_mut()[r].iter_mut().zip(xh.channel(c)) {
                    *dv = k * (count * *dv - dbeta[c] - h * dgamma[c]);
                }
            }
            d
        })
        .collect();
    Ok((dx, dgamma, dbeta))
}

/// Inverted dropout. In training mode each element is zeroed with
/// probability `rate` and survivors are scaled by `1 / (1 - rate)`; the
/// returned mask holds those per-element factors. Evaluation mode is the
/// identity.
pub fn dropout_forward(x: &Tensor, rate: f64, mode: Mode, rng: &mut Rng) -> Result<(Tensor, Vec<f64>), NnError> {
    if !(0.0..1.0).contains(&rate) {
        return Err(NnError::InvalidRate(rate));
    }
    if mode == Mode::Eval || rate == 0.0 {
        return Ok((x.clone(), vec![1.0; x.len()]));
    }
    let keep = 1.0 / (1.0 - rate);
    let mask: Vec<f64> = (0..x.len()).map(|_| if rng.random::<f64>() < rate { 0.0 } else { keep }).collect();
    Ok((apply_mask(x, &mask)?, mask))
}

pub fn apply_mask(x: &Tensor, mask: &[f64]) -> Result<Tensor, NnError> {
    if mask.len() != x.len() {
        return Err(NnError::DimensionMismatch(format!("mask {} vs tensor {}", mask.len(), x.len())));
    }
    Ok(Tensor::from_vec(x.shape(), x.data().iter().zip(mask).map(|(a, m)| a * m).collect()))
}

pub fn dropout_backward(grad: &Tensor, mask: &[f64]) -> Result<Tensor, NnError> {
    apply_mask(grad, mask)
}

/// Max-subtracted softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&z| (z - m).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// `(-log softmax(logits)[target], softmax - one_hot(target))`.
pub fn softmax_cross_entropy(logits: &[f64], target: usize) -> Result<(f64, Vec<f64>), NnError> {
    if target >= logits.len() {
        return Err(NnError::TargetOutOfRange { target, classes: logits.len() });
    }
    let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let log_sum = logits.iter().map(|&z| (z - m).exp()).sum::<f64>().ln() + m;
    let loss = log_sum - logits[target];
    let mut grad = softmax(logits);
    grad[target] -= 1.0;
    Ok((loss.max(0.0), grad))
}
