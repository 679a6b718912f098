//! Trainable tensors, stored as an ordered list of named blocks.
//!
//! Order: input projection (`input.w`, `input.b`), then per layer `t`
//! `ln1.g, ln1.b, wq, wk, wv, wo, ln2.g, ln2.b, ffn.w1, ffn.b1, ffn.w2, ffn.b2`,
//! then `readout.q` (attention readout only), `classifier.w`, `classifier.b`.
//! Weights are `[in, out]` row-major so that `y = x W + b`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::{ModelConfig, Readout};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<S> {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<S>,
}

impl<S: Scalar> Tensor<S> {
    fn zeros(name: String, shape: Vec<usize>) -> Self {
        let len = shape.iter().product();
        Self { name, shape, data: vec![S::zero(); len] }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Slot {
    Ln1G,
    Ln1B,
    Wq,
    Wk,
    Wv,
    Wo,
    Ln2G,
    Ln2B,
    W1,
    B1,
    W2,
    B2,
}

const PER_LAYER: usize = 12;
const SLOT_NAMES: [&str; PER_LAYER] =
    ["ln1.g", "ln1.b", "wq", "wk", "wv", "wo", "ln2.g", "ln2.b", "ffn.w1", "ffn.b1", "ffn.w2", "ffn.b2"];

#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams<S> {
    pub config: ModelConfig,
    pub tensors: Vec<Tensor<S>>,
}

impl<S: Scalar> ModelParams<S> {
    /// Zero-filled parameters with the layout of `config`.
    pub fn zeros(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let (i, d, h, c) = (config.input_dim, config.width, config.hidden(), config.classes);
        let mut tensors = vec![Tensor::zeros("input.w".into(), vec![i, d]), Tensor::zeros("input.b".into(), vec![d])];
        for t in 0..config.layers {
            let shapes = [
                vec![d],
                vec![d],
                vec![d, d],
                vec![d, d],
                vec![d, d],
                vec![d, d],
                vec![d],
                vec![d],
                vec![d, h],
                vec![h],
                vec![h, d],
                vec![d],
            ];
            for (name, shape) in SLOT_NAMES.iter().zip(shapes) {
                tensors.push(Tensor::zeros(format!("layer{t}.{name}"), shape));
            }
        }
        if config.readout == Readout::Attention {
            tensors.push(Tensor::zeros("readout.q".into(), vec![d]));
        }
        tensors.push(Tensor::zeros("classifier.w".into(), vec![d, c]));
        tensors.push(Tensor::zeros("classifier.b".into(), vec![c]));
        Ok(Self { config, tensors })
    }

    /// Seeded initialization: weight matrices uniform in
    /// `±sqrt(6 / (fan_in + fan_out))`, biases zero, layer-norm scale one.
    pub fn init(config: ModelConfig, seed: u64) -> Result<Self> {
        let mut params = Self::zeros(config)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for tensor in &mut params.tensors {
            let name = tensor.name.as_str();
            if name.ends_with(".g") {
                tensor.data.fill(S::one());
            } else if tensor.shape.len() == 2 || name == "readout.q" {
                let (fan_in, fan_out) = match tensor.shape[..] {
                    [a, b] => (a, b),
                    [a] => (a, 1),
                    _ => unreachable!(),
                };
                let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
                for x in &mut tensor.data {
                    *x = S::from_f64(rng.gen_range(-limit..limit));
                }
            }
        }
        Ok(params)
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            config: self.config,
            tensors: self.tensors.iter().map(|t| Tensor::zeros(t.name.clone(), t.shape.clone())).collect(),
        }
    }

    pub fn param_count(&self) -> usize {
        self.tensors.iter().map(|t| t.data.len()).sum()
    }

    pub fn get(&self, name: &str) -> Option<&Tensor<S>> {
        self.tensors.iter().find(|t| t.name == name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor<S>> {
        self.tensors.iter_mut().find(|t| t.name == name)
    }

    pub fn is_finite(&self) -> bool {
        self.tensors.iter().all(|t| t.data.iter().all(|x| x.is_finite()))
    }

    pub fn cast<T: Scalar>(&self) -> ModelParams<T> {
        ModelParams {
            config: self.config,
            tensors: self
                .tensors
                .iter()
                .map(|t| Tensor {
                    name: t.name.clone(),
                    shape: t.shape.clone(),
                    data: t.data.iter().map(|x| T::from_f64(x.as_f64())).collect(),
                })
                .collect(),
        }
    }

    /// `self += scale * other`, block by block.
    pub fn add_scaled(&mut self, other: &Self, scale: S) {
        for (a, b) in self.tensors.iter_mut().zip(&other.tensors) {
            for (x, &y) in a.data.iter_mut().zip(&b.data) {
                *x = *x + scale * y;
            }
        }
    }

    pub fn scale(&mut self, factor: S) {
        for t in &mut self.tensors {
            t.data.iter_mut().for_each(|x| *x = *x * factor);
        }
    }

    pub(crate) fn check_same_layout(&self, other: &Self) -> Result<()> {
        let same = self.tensors.len() == other.tensors.len()
            && self.tensors.iter().zip(&other.tensors).all(|(a, b)| a.name == b.name && a.shape == b.shape);
        if same {
            Ok(())
        } else {
            Err(Error::Shape("parameter layouts differ".into()))
        }
    }

    pub(crate) fn layer_index(&self, layer: usize, slot: Slot) -> usize {
        2 + PER_LAYER * layer + slot as usize
    }

    pub(crate) fn layer(&self, layer: usize, slot: Slot) -> &[S] {
        &self.tensors[self.layer_index(layer, slot)].data
    }

    pub(crate) fn input_w(&self) -> &[S] {
        &self.tensors[0].data
    }

    pub(crate) fn input_b(&self) -> &[S] {
        &self.tensors[1].data
    }

    fn tail(&self) -> usize {
        2 + PER_LAYER * self.config.layers
    }

    pub(crate) fn query_index(&self) -> Option<usize> {
        (self.config.readout == Readout::Attention).then(|| self.tail())
    }

    pub(crate) fn classifier_index(&self) -> usize {
        self.tail() + usize::from(self.config.readout == Readout::Attention)
    }
}
