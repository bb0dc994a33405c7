use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::layers::{
    batchnorm_backward, batchnorm_eval, batchnorm_forward, conv2d_backward_acc, conv2d_forward, dense_backward,
    dense_forward, dropout_backward, dropout_forward, maxpool2x2_backward, maxpool2x2_forward, relu_backward,
    relu_forward, softmax, BatchNormCache, BatchNormParams, ConvKernel, DenseParams, Mode, BN_EPS, BN_MOMENTUM,
};
use super::{NnError, Tensor};
use crate::image::Image;
use crate::search::HyperParams;
use crate::seed::{rng_from_seed, Rng};
use crate::svm::argmax;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvStage {
    pub maps: usize,
    pub kernel: usize,
    pub batchnorm: bool,
}

/// Architecture of a network: conv stages, dropout rate and class count.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkSpec {
    /// `(channels, rows, cols)` of the input tensor.
    pub input_shape: [usize; 3],
    pub stages: Vec<ConvStage>,
    pub dropout: f64,
    pub n_classes: usize,
}

impl NetworkSpec {
    pub fn from_hyper(hp: &HyperParams, input_shape: [usize; 3]) -> NetworkSpec {
        let stage = ConvStage { maps: hp.n_maps, kernel: hp.kernel, batchnorm: hp.batchnorm };
        NetworkSpec { input_shape, stages: vec![stage; hp.n_conv_layers], dropout: hp.dropout, n_classes: crate::N_CLASSES }
    }

    /// Spatial size after each conv and each pool, starting from the input.
    /// Fails if any dimension would fall below one.
    pub fn spatial_chain(&self) -> Result<Vec<(usize, usize)>, NnError> {
        let [_, mut h, mut w] = self.input_shape;
        let mut chain = vec![(h, w)];
        for (i, s) in self.stages.iter().enumerate() {
            if s.kernel == 0 || h < s.kernel || w < s.kernel {
                return Err(NnError::InvalidArchitecture(format!(
                    "stage {i}: kernel {} does not fit {h}x{w}",
                    s.kernel
                )));
            }
            h = h - s.kernel + 1;
            w = w - s.kernel + 1;
            chain.push((h, w));
            if h < 2 || w < 2 {
                return Err(NnError::InvalidArchitecture(format!("stage {i}: {h}x{w} cannot be max-pooled")));
            }
            h /= 2;
            w /= 2;
            chain.push((h, w));
        }
        Ok(chain)
    }

    pub fn validate(&self) -> Result<(), NnError> {
        if self.input_shape.contains(&0) {
            return Err(NnError::InvalidArchitecture(format!("input shape {:?}", self.input_shape)));
        }
        if self.stages.is_empty() || self.stages.iter().any(|s| s.maps == 0) {
            return Err(NnError::InvalidArchitecture("need at least one stage with >= 1 map".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(NnError::InvalidRate(self.dropout));
        }
        if self.n_classes < 2 {
            return Err(NnError::InvalidArchitecture("need at least two classes".into()));
        }
        self.spatial_chain().map(|_| ())
    }

    pub fn flatten_len(&self) -> Result<usize, NnError> {
        let (h, w) = *self.spatial_chain()?.last().expect("chain starts with the input");
        Ok(self.stages.last().map_or(self.input_shape[0], |s| s.maps) * h * w)
    }

    /// Trainable parameters: conv `c_out (c_in k^2 + 1)`, batch-norm
    /// `2 c_out`, dense `flatten * classes + classes`.
    pub fn param_count(&self) -> Result<usize, NnError> {
        let mut c_in = self.input_shape[0];
        let mut total = 0;
        for s in &self.stages {
            total += s.maps * (c_in * s.kernel * s.kernel + 1);
            if s.batchnorm {
                total += 2 * s.maps;
            }
            c_in = s.maps;
        }
        Ok(total + self.flatten_len()? * self.n_classes + self.n_classes)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Layer {
    Conv { kernel: ConvKernel, bias: Vec<f64> },
    BatchNorm(BatchNormParams),
    Relu,
    MaxPool,
    Flatten,
    Dropout { rate: f64 },
    Dense(DenseParams),
}

/// Activations kept by a training forward pass for the backward pass.
#[derive(Debug, Clone)]
pub struct Tape {
    entries: Vec<TapeEntry>,
}

impl Tape {
    /// Which side of every non-differentiable point the pass was on: ReLU
    /// input signs and max-pool winners. Two passes with equal signatures
    /// lie on the same smooth piece of the loss.
    pub fn kink_signature(&self) -> Vec<usize> {
        let mut sig = Vec::new();
        for e in &self.entries {
            match e {
                TapeEntry::Relu(inputs) => sig.extend(inputs.iter().flat_map(|t| t.data().iter().map(|&v| usize::from(v > 0.0)))),
                TapeEntry::MaxPool { argmax, .. } => sig.extend(argmax.iter().flatten().copied()),
                _ => {}
            }
        }
        sig
    }

    /// Dropout masks recorded during the pass, one per sample.
    pub fn dropout_masks(&self) -> Option<&[Vec<f64>]> {
        self.entries.iter().find_map(|e| match e {
            TapeEntry::Dropout(m) => Some(m.as_slice()),
            _ => None,
        })
    }
}

#[derive(Debug, Clone)]
enum TapeEntry {
    Conv(Vec<Tensor>),
    BatchNorm(BatchNormCache),
    Relu(Vec<Tensor>),
    MaxPool { shape: [usize; 3], argmax: Vec<Vec<usize>> },
    Flatten([usize; 3]),
    Dropout(Vec<Vec<f64>>),
    Dense(Vec<Tensor>),
}

/// Where dropout masks come from during a training pass.
pub enum DropoutSource<'a> {
    Random(&'a mut Rng),
    /// Reuse masks from an earlier pass (one per sample).
    Fixed(&'a [Vec<f64>]),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    pub spec: NetworkSpec,
    pub layers: Vec<Layer>,
}

/// Builds the network for one point of the hyperparameter space with
/// seeded initial weights.
pub fn build_network(hp: &HyperParams, input_shape: [usize; 3], seed: u64) -> Result<Network, NnError> {
    hp.validate().map_err(|e| NnError::InvalidArchitecture(e.to_string()))?;
    Network::from_spec(NetworkSpec::from_hyper(hp, input_shape), seed)
}

/// `U(-bound, bound)` samples.
fn uniform(rng: &mut Rng, n: usize, bound: f64) -> Vec<f64> {
    (0..n).map(|_| bound * (2.0 * rng.random::<f64>() - 1.0)).collect()
}

impl Network {
    /// Conv kernels are He-uniform (`sqrt(6 / fan_in)`), the dense layer is
    /// Glorot-uniform (`sqrt(6 / (fan_in + fan_out))`); biases start at zero,
    /// batch norm at `gamma = 1`, `beta = 0`.
    pub fn from_spec(spec: NetworkSpec, seed: u64) -> Result<Network, NnError> {
        spec.validate()?;
        let mut rng = rng_from_seed(seed);
        let mut layers = Vec::new();
        let mut c_in = spec.input_shape[0];
        for s in &spec.stages {
            let fan_in = c_in * s.kernel * s.kernel;
            let data = uniform(&mut rng, s.maps * fan_in, (6.0 / fan_in as f64).sqrt());
            layers.push(Layer::Conv { kernel: ConvKernel { c_out: s.maps, c_in, k: s.kernel, data }, bias: vec![0.0; s.maps] });
            if s.batchnorm {
                layers.push(Layer::BatchNorm(BatchNormParams::new(s.maps)));
            }
            layers.push(Layer::Relu);
            layers.push(Layer::MaxPool);
            c_in = s.maps;
        }
        let n_in = spec.flatten_len()?;
        let n_out = spec.n_classes;
        layers.push(Layer::Flatten);
        layers.push(Layer::Dropout { rate: spec.dropout });
        let bound = (6.0 / (n_in + n_out) as f64).sqrt();
        layers.push(Layer::Dense(DenseParams { n_in, n_out, weights: uniform(&mut rng, n_in * n_out, bound), bias: vec![0.0; n_out] }));
        Ok(Network { spec, layers })
    }

    pub fn param_count(&self) -> usize {
        self.params().iter().map(|p| p.len()).sum()
    }

    /// Trainable parameter tensors in topology order.
    pub fn params(&self) -> Vec<&[f64]> {
        let mut out: Vec<&[f64]> = Vec::new();
        for l in &self.layers {
            match l {
                Layer::Conv { kernel, bias } => {
                    out.push(&kernel.data);
                    out.push(bias);
                }
                Layer::BatchNorm(p) => {
                    out.push(&p.gamma);
                    out.push(&p.beta);
                }
                Layer::Dense(p) => {
                    out.push(&p.weights);
                    out.push(&p.bias);
                }
                _ => {}
            }
        }
        out
    }

    pub fn params_mut(&mut self) -> Vec<&mut Vec<f64>> {
        let mut out: Vec<&mut Vec<f64>> = Vec::new();
        for l in &mut self.layers {
            match l {
                Layer::Conv { kernel, bias } => {
                    out.push(&mut kernel.data);
                    out.push(bias);
                }
                Layer::BatchNorm(p) => {
                    out.push(&mut p.gamma);
                    out.push(&mut p.beta);
                }
                Layer::Dense(p) => {
                    out.push(&mut p.weights);
                    out.push(&mut p.bias);
                }
                _ => {}
            }
        }
        out
    }

    /// All stored values (parameters and batch-norm running statistics),
    /// one blob per tensor in topology order.
    pub fn blobs(&self) -> Vec<Vec<f64>> {
        let mut out = Vec::new();
        for l in &self.layers {
            match l {
                Layer::Conv { kernel, bias } => {
                    out.push(kernel.data.clone());
                    out.push(bias.clone());
                }
                Layer::BatchNorm(p) => {
                    out.extend([p.gamma.clone(), p.beta.clone(), p.running_mean.clone(), p.running_var.clone()]);
                }
                Layer::Dense(p) => {
                    out.push(p.weights.clone());
                    out.push(p.bias.clone());
                }
                _ => {}
            }
        }
        out
    }

    /// Rebuilds a network from its spec and the output of [`Network::blobs`].
    pub fn from_blobs(spec: NetworkSpec, blobs: Vec<Vec<f64>>) -> Result<Network, NnError> {
        let mut net = Network::from_spec(spec, 0)?;
        let expected: Vec<usize> = net.blobs().iter().map(Vec::len).collect();
        let got: Vec<usize> = blobs.iter().map(Vec::len).collect();
        if expected != got {
            return Err(NnError::ShapeMismatch(format!("weight blobs {got:?}, expected {expected:?}")));
        }
        if blobs.iter().flatten().any(|v| !v.is_finite()) {
            return Err(NnError::ShapeMismatch("non-finite weight".into()));
        }
        let mut it = blobs.into_iter();
        for l in &mut net.layers {
            match l {
                Layer::Conv { kernel, bias } => {
                    kernel.data = it.next().unwrap();
                    *bias = it.next().unwrap();
                }
                Layer::BatchNorm(p) => {
                    p.gamma = it.next().unwrap();
                    p.beta = it.next().unwrap();
                    p.running_mean = it.next().unwrap();
                    p.running_var = it.next().unwrap();
                }
                Layer::Dense(p) => {
                    p.weights = it.next().unwrap();
                    p.bias = it.next().unwrap();
                }
                _ => {}
            }
        }
        Ok(net)
    }

    fn check_input(&self, x: &Tensor) -> Result<(), NnError> {
        if x.shape() != self.spec.input_shape {
            return Err(NnError::ShapeMismatch(format!("input {:?}, network expects {:?}", x.shape(), self.spec.input_shape)));
        }
        Ok(())
    }

    /// Evaluation-mode forward pass of one sample, returning logits.
    pub fn logits(&self, x: &Tensor) -> Result<Tensor, NnError> {
        self.check_input(x)?;
        let mut a = x.clone();
        for l in &self.layers {
            a = match l {
                Layer::Conv { kernel, bias } => conv2d_forward(&a, kernel, bias)?,
                Layer::BatchNorm(p) => batchnorm_eval(&a, p, BN_EPS),
                Layer::Relu => relu_forward(&a),
                Layer::MaxPool => maxpool2x2_forward(&a)?.0,
                Layer::Flatten => {
                    let n = a.len();
                    a.reshape([n, 1, 1])
                }
                Layer::Dropout { .. } => a,
                Layer::Dense(p) => dense_forward(&a, p)?,
            };
        }
        Ok(a)
    }

    /// Class probabilities for one sample in evaluation mode.
    pub fn probabilities(&self, x: &Tensor) -> Result<Vec<f64>, NnError> {
        Ok(softmax(self.logits(x)?.data()))
    }

    /// Training-mode forward pass over a batch. Batch norm uses batch
    /// statistics and updates its running statistics.
    pub fn forward_train(&mut self, batch: &[Tensor], mut dropout: DropoutSource<'_>) -> Result<(Vec<Tensor>, Tape), NnError> {
        if batch.is_empty() {
            return Err(NnError::EmptyDataset);
        }
        for x in batch {
            self.check_input(x)?;
        }
        let mut acts: Vec<Tensor> = batch.to_vec();
        let mut entries = Vec::with_capacity(self.layers.len());
        for l in &mut self.layers {
            match l {
                Layer::Conv { kernel, bias } => {
                    let out = acts.iter().map(|x| conv2d_forward(x, kernel, bias)).collect::<Result<Vec<_>, _>>()?;
                    entries.push(TapeEntry::Conv(std::mem::replace(&mut acts, out)));
                }
                Layer::BatchNorm(p) => {
                    let (out, cache) = batchnorm_forward(&acts, p, Mode::Train, BN_EPS, BN_MOMENTUM)?;
                    entries.push(TapeEntry::BatchNorm(cache.expect("training mode returns a cache")));
                    acts = out;
                }
                Layer::Relu => {
                    let out = acts.iter().map(relu_forward).collect();
                    entries.push(TapeEntry::Relu(std::mem::replace(&mut acts, out)));
                }
                Layer::MaxPool => {
                    let shape = acts[0].shape();
                    let mut out = Vec::with_capacity(acts.len());
                    let mut argmax = Vec::with_capacity(acts.len());
                    for x in &acts {
                        let (y, arg) = maxpool2x2_forward(x)?;
                        out.push(y);
                        argmax.push(arg);
                    }
                    entries.push(TapeEntry::MaxPool { shape, argmax });
                    acts = out;
                }
                Layer::Flatten => {
                    let shape = acts[0].shape();
                    acts = acts.into_iter().map(|t| t.reshape([shape.iter().product(), 1, 1])).collect();
                    entries.push(TapeEntry::Flatten(shape));
                }
                Layer::Dropout { rate } => {
                    let mut masks = Vec::with_capacity(acts.len());
                    let mut out = Vec::with_capacity(acts.len());
                    for (i, x) in acts.iter().enumerate() {
                        let (y, m) = match &mut dropout {
                            DropoutSource::Random(rng) => dropout_forward(x, *rate, Mode::Train, rng)?,
                            DropoutSource::Fixed(masks) => {
                                let m = masks.get(i).ok_or_else(|| NnError::DimensionMismatch("missing dropout mask".into()))?;
                                (super::layers::apply_mask(x, m)?, m.clone())
                            }
                        };
                        out.push(y);
                        masks.push(m);
                    }
                    entries.push(TapeEntry::Dropout(masks));
                    acts = out;
                }
                Layer::Dense(p) => {
                    let out = acts.iter().map(|x| dense_forward(x, p)).collect::<Result<Vec<_>, _>>()?;
                    entries.push(TapeEntry::Dense(std::mem::replace(&mut acts, out)));
                }
            }
        }
        Ok((acts, Tape { entries }))
    }

    /// Gradients of every parameter tensor (same order as [`Network::params`])
    /// given the loss gradient with respect to the logits.
    pub fn backward(&self, tape: &Tape, grad_logits: Vec<Tensor>) -> Result<Vec<Vec<f64>>, NnError> {
        let mut grads: Vec<Vec<f64>> = self.params().iter().map(|p| vec![0.0; p.len()]).collect();
        let mut slot = grads.len();
        let mut g = grad_logits;
        for (l, entry) in self.layers.iter().zip(&tape.entries).rev() {
            g = match (l, entry) {
                (Layer::Dense(p), TapeEntry::Dense(inputs)) => {
                    slot -= 2;
                    let (gw, rest) = grads[slot..].split_at_mut(1);
                    inputs
                        .iter()
                        .zip(&g)
                        .map(|(x, gy)| dense_backward(x, p, gy, &mut gw[0], &mut rest[0]))
                        .collect::<Result<_, _>>()?
                }
                (Layer::Dropout { .. }, TapeEntry::Dropout(masks)) => {
                    g.iter().zip(masks).map(|(gy, m)| dropout_backward(gy, m)).collect::<Result<_, _>>()?
                }
                (Layer::Flatten, TapeEntry::Flatten(shape)) => g.into_iter().map(|t| t.reshape(*shape)).collect(),
                (Layer::MaxPool, TapeEntry::MaxPool { shape, argmax }) => g
                    .iter()
                    .zip(argmax)
                    .map(|(gy, arg)| maxpool2x2_backward(*shape, arg, gy))
                    .collect::<Result<_, _>>()?,
                (Layer::Relu, TapeEntry::Relu(inputs)) => {
                    inputs.iter().zip(&g).map(|(x, gy)| relu_backward(x, gy)).collect::<Result<_, _>>()?
                }
                (Layer::BatchNorm(p), TapeEntry::BatchNorm(cache)) => {
                    slot -= 2;
                    let (gx, dgamma, dbeta) = batchnorm_backward(cache, &p.gamma, &g)?;
                    grads[slot] = dgamma;
                    grads[slot + 1] = dbeta;
                    gx
                }
                (Layer::Conv { kernel, .. }, TapeEntry::Conv(inputs)) => {
                    slot -= 2;
                    let (gk, rest) = grads[slot..].split_at_mut(1);
                    inputs
                        .iter()
                        .zip(&g)
                        .map(|(x, gy)| conv2d_backward_acc(x, kernel, gy, &mut gk[0], &mut rest[0]))
                        .collect::<Result<_, _>>()?
                }
                _ => return Err(NnError::DimensionMismatch("tape does not match network layers".into())),
            };
        }
        Ok(grads)
    }

    /// `param -= learning_rate * grad` for every parameter tensor.
    pub fn sgd_step(&mut self, grads: &[Vec<f64>], learning_rate: f64) {
        for (p, g) in self.params_mut().into_iter().zip(grads) {
            p.iter_mut().zip(g).for_each(|(v, d)| *v -= learning_rate * d);
        }
    }
}

/// Evaluation-mode prediction for an image already at the network's input
/// size: `(argmax class, probabilities)`, ties to the lowest class.
pub fn nn_predict(net: &Network, img: &Image) -> Result<(usize, Vec<f64>), NnError> {
    let x = Tensor::from_image(img);
    let probs = net.probabilities(&x)?;
    Ok((argmax(&probs), probs))
}
