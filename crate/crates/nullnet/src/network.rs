//! Fixed-architecture network: parameter storage, forward passes (training
//! and inference), and the explicit backward pass used for both training and
//! input-gradient (FGSM) computation.

use rand::Rng;

use crate::arch::{ArchitectureDescriptor, LayerSpec};
use crate::error::Result;
use crate::init::glorot_uniform;
use crate::layers;
use crate::loss::softmax;
use crate::tensor::{Scalar, Tensor};

#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams<T: Scalar> {
    pub weights: Tensor<T>,
    pub bias: Vec<T>,
}

/// Per-layer caches recorded by a forward pass, consumed by `backward`.
enum Cache<T: Scalar> {
    Conv { input: Tensor<T> },
    Dense { input: Tensor<T> },
    Relu { input: Tensor<T> },
    Pool { argmax: Vec<usize>, in_shape: Vec<usize> },
    Dropout { mask: Option<Vec<T>> },
    Flatten { in_shape: Vec<usize> },
}

pub struct Tape<T: Scalar> {
    caches: Vec<Cache<T>>,
}

/// Per-layer parameter gradients, aligned with the layer list. Entries are
/// `None` for parameterless layers.
#[derive(Debug, Clone)]
pub struct Gradients<T: Scalar> {
    pub per_layer: Vec<Option<(Tensor<T>, Vec<T>)>>,
}

impl<T: Scalar> Gradients<T> {
    pub fn zeros_like(net: &Network<T>) -> Self {
        Self {
            per_layer: net
                .params
                .iter()
                .map(|p| {
                    p.as_ref().map(|lp| {
                        (
                            Tensor::zeros(lp.weights.shape().to_vec()),
                            vec![T::zero(); lp.bias.len()],
                        )
                    })
                })
                .collect(),
        }
    }

    pub fn add_assign(&mut self, other: &Gradients<T>) {
        for (a, b) in self.per_layer.iter_mut().zip(&other.per_layer) {
            if let (Some((aw, ab)), Some((bw, bb))) = (a.as_mut(), b.as_ref()) {
                for (x, &y) in aw.data_mut().iter_mut().zip(bw.data()) {
                    *x = *x + y;
                }
                for (x, &y) in ab.iter_mut().zip(bb) {
                    *x = *x + y;
                }
            }
        }
    }

    pub fn scale(&mut self, factor: T) {
        for entry in self.per_layer.iter_mut().flatten() {
            for x in entry.0.data_mut() {
                *x = *x * factor;
            }
            for x in entry.1.iter_mut() {
                *x = *x * factor;
            }
        }
    }

    /// Flat slice view in the fixed order (weights then bias per layer).
    pub fn slices(&self) -> Vec<&[T]> {
        let mut out = Vec::new();
        for entry in self.per_layer.iter().flatten() {
            out.push(entry.0.data());
            out.push(entry.1.as_slice());
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Network<T: Scalar> {
    pub arch: ArchitectureDescriptor,
    /// Aligned with `arch.layers`; `None` for parameterless layers.
    pub params: Vec<Option<LayerParams<T>>>,
}

impl<T: Scalar> Network<T> {
    /// Glorot-uniform weights, zero biases. Consumes `rng` layer by layer in
    /// architecture order.
    pub fn init<R: Rng>(arch: ArchitectureDescriptor, rng: &mut R) -> Self {
        let params = arch
            .layers
            .iter()
            .map(|layer| match *layer {
                LayerSpec::Conv2d {
                    in_ch,
                    out_ch,
                    kh,
                    kw,
                } => Some(LayerParams {
                    weights: glorot_uniform(vec![kh, kw, in_ch, out_ch], rng),
                    bias: vec![T::zero(); out_ch],
                }),
                LayerSpec::Dense { in_dim, out_dim } => Some(LayerParams {
                    weights: glorot_uniform(vec![in_dim, out_dim], rng),
                    bias: vec![T::zero(); out_dim],
                }),
                _ => None,
            })
            .collect();
        Self { arch, params }
    }

    /// Element count of every parameter slice in the fixed flat order
    /// (weights then bias, per parametric layer).
    pub fn param_lens(&self) -> Vec<usize> {
        let mut lens = Vec::new();
        for lp in self.params.iter().flatten() {
            lens.push(lp.weights.len());
            lens.push(lp.bias.len());
        }
        lens
    }

    pub fn param_slices_mut(&mut self) -> Vec<&mut [T]> {
        let mut out = Vec::new();
        for lp in self.params.iter_mut().flatten() {
            out.push(lp.weights.data_mut());
            out.push(lp.bias.as_mut_slice());
        }
        out
    }

    fn forward_impl<R: Rng>(
        &self,
        input: &Tensor<T>,
        mut dropout_rng: Option<&mut R>,
    ) -> Result<(Tensor<T>, Tape<T>)> {
        let mut x = input.clone();
        let mut caches = Vec::with_capacity(self.arch.layers.len());
        for (layer, params) in self.arch.layers.iter().zip(&self.params) {
            x = match *layer {
                LayerSpec::Conv2d { .. } => {
                    let lp = params.as_ref().expect("conv has params");
                    let out = layers::conv2d_forward(&x, &lp.weights, &lp.bias)?;
                    caches.push(Cache::Conv { input: x });
                    out
                }
                LayerSpec::Dense { .. } => {
                    let lp = params.as_ref().expect("dense has params");
                    let out = layers::dense_forward(&x, &lp.weights, &lp.bias)?;
                    caches.push(Cache::Dense { input: x });
                    out
                }
                LayerSpec::Relu => {
                    let out = layers::relu_forward(&x);
                    caches.push(Cache::Relu { input: x });
                    out
                }
                LayerSpec::MaxPool2d { size } => {
                    let in_shape = x.shape().to_vec();
                    let (out, argmax) = layers::maxpool2d_forward(&x, size)?;
                    caches.push(Cache::Pool { argmax, in_shape });
                    out
                }
                LayerSpec::Dropout { rate } => match dropout_rng.as_deref_mut() {
                    Some(rng) => {
                        let (out, mask) = layers::dropout_forward(&x, rate, rng);
                        caches.push(Cache::Dropout { mask: Some(mask) });
                        out
                    }
                    None => {
                        caches.push(Cache::Dropout { mask: None });
                        x
                    }
                },
                LayerSpec::Flatten => {
                    let in_shape = x.shape().to_vec();
                    let out = layers::flatten(&x);
                    caches.push(Cache::Flatten { in_shape });
                    out
                }
            };
        }
        Ok((x, Tape { caches }))
    }

    /// Training-mode forward: dropout active, caches recorded.
    pub fn forward_train<R: Rng>(
        &self,
        input: &Tensor<T>,
        dropout_rng: &mut R,
    ) -> Result<(Tensor<T>, Tape<T>)> {
        self.forward_impl(input, Some(dropout_rng))
    }

    /// Inference-mode forward with caches (dropout is the identity). Used for
    /// input-gradient computation.
    pub fn forward_infer_taped(&self, input: &Tensor<T>) -> Result<(Tensor<T>, Tape<T>)> {
        self.forward_impl::<rand::rngs::ThreadRng>(input, None)
    }

    /// Inference-mode logits.
    pub fn forward_infer(&self, input: &Tensor<T>) -> Result<Tensor<T>> {
        Ok(self.forward_infer_taped(input)?.0)
    }

    /// Inference-mode prediction: (argmax class, softmax probabilities).
    /// Argmax ties break to the lowest index.
    pub fn predict(&self, input: &Tensor<T>) -> Result<(usize, Vec<T>)> {
        let logits = self.forward_infer(input)?;
        let probs = softmax(logits.data());
        let mut best = 0;
        for (i, &p) in probs.iter().enumerate() {
            if p > probs[best] {
                best = i;
            }
        }
        Ok((best, probs))
    }

    /// Backpropagates `grad_logits` through the tape. Returns parameter
    /// gradients and the gradient with respect to the input.
    pub fn backward(&self, tape: &Tape<T>, grad_logits: &Tensor<T>) -> Result<(Gradients<T>, Tensor<T>)> {
        let mut grad = grad_logits.clone();
        let mut per_layer: Vec<Option<(Tensor<T>, Vec<T>)>> = vec![None; self.arch.layers.len()];
        for idx in (0..self.arch.layers.len()).rev() {
            let cache = &tape.caches[idx];
            grad = match (&self.arch.layers[idx], cache) {
                (LayerSpec::Conv2d { .. }, Cache::Conv { input }) => {
                    let lp = self.params[idx].as_ref().expect("conv has params");
                    let (gin, gk, gb) = layers::conv2d_backward(&grad, input, &lp.weights)?;
                    per_layer[idx] = Some((gk, gb));
                    gin
                }
                (LayerSpec::Dense { .. }, Cache::Dense { input }) => {
                    let lp = self.params[idx].as_ref().expect("dense has params");
                    let (gin, gw, gb) = layers::dense_backward(&grad, input, &lp.weights)?;
                    per_layer[idx] = Some((gw, gb));
                    gin
                }
                (LayerSpec::Relu, Cache::Relu { input }) => layers::relu_backward(&grad, input),
                (LayerSpec::MaxPool2d { .. }, Cache::Pool { argmax, in_shape }) => {
                    layers::maxpool2d_backward(&grad, argmax, in_shape)?
                }
                (LayerSpec::Dropout { .. }, Cache::Dropout { mask }) => match mask {
                    Some(m) => layers::dropout_backward(&grad, m),
                    None => grad,
                },
                (LayerSpec::Flatten, Cache::Flatten { in_shape }) => {
                    grad.reshape(in_shape.clone())?
                }
                _ => unreachable!("tape misaligned with architecture"),
            };
        }
        Ok((Gradients { per_layer }, grad))
    }
}
