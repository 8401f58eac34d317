//! Loss network for the perceptual objective.
//!
//! The perceptual loss compares signals in the latent space of a frozen
//! encoder. [`FeatureEncoder`] is the seam: [`ConvFeatureEncoder`] is a
//! fixed-seed strided convolution stack, and features computed elsewhere
//! (e.g. by a pretrained speech model) can be compared directly with
//! [`perceptual_loss_from_features`](super::loss::perceptual_loss_from_features).

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

#[cfg(test)]
use super::conv::real_conv2d_backward_weight;
use super::conv::{real_conv2d, real_conv2d_backward_input, ConvGeometry};
use crate::error::{Error, Result};

/// `channels x length` feature sequence, channel-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureMap {
    pub channels: usize,
    pub length: usize,
    pub data: Vec<f64>,
}

impl FeatureMap {
    pub fn new(channels: usize, length: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != channels * length {
            return Err(Error::Dimension(format!(
                "{} feature values for {channels} x {length}",
                data.len()
            )));
        }
        Ok(Self {
            channels,
            length,
            data,
        })
    }

    pub fn get(&self, c: usize, l: usize) -> f64 {
        self.data[c * self.length + l]
    }
}

pub trait FeatureEncoder: Send + Sync {
    fn encode(&self, signal: &[f64]) -> Result<FeatureMap>;

    /// Vector-Jacobian product: pulls a gradient on the features of
    /// `signal` back onto the signal.
    fn encode_backward(&self, signal: &[f64], grad: &FeatureMap) -> Result<Vec<f64>>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncoderConfig {
    pub layers: usize,
    pub channels: usize,
    pub kernel: usize,
    pub stride: usize,
    /// Weight scale relative to `1/sqrt(fan_in)`.
    pub gain: f64,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self {
            layers: 5,
            channels: 64,
            kernel: 4,
            stride: 2,
            gain: 2.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
struct EncoderLayer {
    in_channels: usize,
    weight: Vec<f64>,
    bias: Vec<f64>,
}

/// Frozen random strided 1-D conv stack with `tanh` activations.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvFeatureEncoder {
    config: EncoderConfig,
    seed: u64,
    layers: Vec<EncoderLayer>,
}

impl ConvFeatureEncoder {
    pub fn new(config: EncoderConfig, seed: u64) -> Result<Self> {
        if config.layers == 0 || config.channels == 0 || config.kernel == 0 || config.stride == 0 {
            return Err(Error::InvalidModel(format!("encoder config {config:?}")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let bias_dist = Normal::new(0.0, 0.1).expect("valid std");
        let layers = (0..config.layers)
            .map(|i| {
                let cin = if i == 0 { 1 } else { config.channels };
                let std = config.gain / ((cin * config.kernel) as f64).sqrt();
                let dist = Normal::new(0.0, std).map_err(|e| Error::InvalidModel(e.to_string()))?;
                Ok(EncoderLayer {
                    in_channels: cin,
                    weight: (0..config.channels * cin * config.kernel)
                        .map(|_| dist.sample(&mut rng))
                        .collect(),
                    bias: (0..config.channels)
                        .map(|_| bias_dist.sample(&mut rng))
                        .collect(),
                })
            })
            .collect::<Result<_>>()?;
        Ok(Self {
            config,
            seed,
            layers,
        })
    }

    pub fn config(&self) -> &EncoderConfig {
        &self.config
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    fn geometry(&self) -> ConvGeometry {
        ConvGeometry {
            kernel: [1, self.config.kernel],
            stride: [1, self.config.stride],
            padding: [0, 0],
        }
    }

    /// Feature length for an input of `n` samples, if long enough.
    pub fn output_length(&self, n: usize) -> Option<usize> {
        let mut len = n;
        for _ in 0..self.config.layers {
            if len < self.config.kernel {
                return None;
            }
            len = (len - self.config.kernel) / self.config.stride + 1;
        }
        Some(len)
    }

    /// Shortest input the encoder accepts.
    pub fn min_input_length(&self) -> usize {
        let mut n = 1;
        for _ in 0..self.config.layers {
            n = (n - 1) * self.config.stride + self.config.kernel;
        }
        n
    }

    /// Activations after every layer, the input first.
    fn activations(&self, signal: &[f64]) -> Result<Vec<(Vec<f64>, [usize; 3])>> {
        if self.output_length(signal.len()).is_none() {
            return Err(Error::Dimension(format!(
                "feature encoder needs at least {} samples, got {}",
                self.min_input_length(),
                signal.len()
            )));
        }
        let geo = self.geometry();
        let mut acts = vec![(signal.to_vec(), [1, 1, signal.len()])];
        for layer in &self.layers {
            let (input, shape) = acts.last().expect("non-empty");
            let (mut out, oshape) =
                real_conv2d(input, *shape, &layer.weight, self.config.channels, geo)?;
            let len = oshape[2];
            for (c, b) in layer.bias.iter().enumerate() {
                for v in &mut out[c * len..(c + 1) * len] {
                    *v = (*v + b).tanh();
                }
            }
            acts.push((out, oshape));
        }
        Ok(acts)
    }

    /// Gradient of `sum(grad * features)` with respect to the encoder's own
    /// weights, used only to test the conv backward paths.
    #[cfg(test)]
    fn weight_gradients(&self, signal: &[f64], grad: &FeatureMap) -> Result<Vec<Vec<f64>>> {
        let acts = self.activations(signal)?;
        let geo = self.geometry();
        let mut g = grad.data.clone();
        let mut out = vec![Vec::new(); self.layers.len()];
        for (i, layer) in self.layers.iter().enumerate().rev() {
            let (a, oshape) = &acts[i + 1];
            for (gv, av) in g.iter_mut().zip(a) {
                *gv *= 1.0 - av * av;
            }
            let (input, ishape) = &acts[i];
            let mut gw = vec![0.0; layer.weight.len()];
            real_conv2d_backward_weight(input, *ishape, &g, *oshape, geo, &mut gw);
            out[i] = gw;
            g = real_conv2d_backward_input(&g, *oshape, &layer.weight, *ishape, geo);
        }
        Ok(out)
    }
}

impl FeatureEncoder for ConvFeatureEncoder {
    fn encode(&self, signal: &[f64]) -> Result<FeatureMap> {
        let mut acts = self.activations(signal)?;
        let (data, shape) = acts.pop().expect("non-empty");
        FeatureMap::new(shape[0], shape[2], data)
    }

    fn encode_backward(&self, signal: &[f64], grad: &FeatureMap) -> Result<Vec<f64>> {
        let acts = self.activations(signal)?;
        let (_, last_shape) = acts.last().expect("non-empty");
        if grad.channels != last_shape[0] || grad.length != last_shape[2] {
            return Err(Error::Dimension(format!(
                "feature gradient {}x{} vs features {}x{}",
                grad.channels, grad.length, last_shape[0], last_shape[2]
            )));
        }
        let geo = self.geometry();
        let mut g = grad.data.clone();
        for (i, layer) in self.layers.iter().enumerate().rev() {
            let (a, oshape) = &acts[i + 1];
            for (gv, av) in g.iter_mut().zip(a) {
                *gv *= 1.0 - av * av;
            }
            let ishape = [layer.in_channels, 1, acts[i].1[2]];
            g = real_conv2d_backward_input(&g, *oshape, &layer.weight, ishape, geo);
        }
        Ok(g)
    }
}
