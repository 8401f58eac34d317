//! Complex U-Net producing a complex ratio mask over a spectrogram.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use realfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::conv::{ComplexConvLayer, ConvGeometry, Direction, LayerParams};
use super::tensor::ComplexTensor;
use crate::error::{Error, Result};
use crate::signal::{istft, AudioClip, ComplexSpectrogram};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MaskMode {
    /// Polar bounding: magnitude `tanh(|m|)`, phase `m / |m|`.
    Bounded,
    Unbounded,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UNetConfig {
    /// Complex channels per encoder level; the depth is its length.
    pub channels: Vec<usize>,
    /// Kernel size as `[frequency, time]`; both odd.
    pub kernel: [usize; 2],
    /// Stride as `[frequency, time]`.
    pub stride: [usize; 2],
    pub leaky_slope: f64,
    pub mask: MaskMode,
    /// Scale the network input to unit RMS magnitude. The mask is still
    /// applied to the unscaled spectrogram.
    pub normalize_input: bool,
}

impl Default for UNetConfig {
    fn default() -> Self {
        Self {
            channels: vec![8, 16, 32],
            kernel: [5, 5],
            stride: [2, 1],
            leaky_slope: 0.1,
            mask: MaskMode::Bounded,
            normalize_input: false,
        }
    }
}

impl UNetConfig {
    pub fn depth(&self) -> usize {
        self.channels.len()
    }

    fn validate(&self) -> Result<ConvGeometry> {
        if self.channels.is_empty() || self.channels.contains(&0) {
            return Err(Error::InvalidModel(format!(
                "channel list {:?} must be non-empty and positive",
                self.channels
            )));
        }
        if !self.leaky_slope.is_finite() {
            return Err(Error::InvalidModel("leaky slope must be finite".into()));
        }
        ConvGeometry::centered(self.kernel, self.stride)
    }

    /// Smallest size `>= n` that survives `depth` stride-`s` halvings and
    /// mirrors back exactly: `(size - 1)` divisible by `s^depth`.
    fn padded(&self, n: usize, axis: usize) -> usize {
        let total = self.stride[axis].pow(self.depth() as u32);
        let m = n.max(1) - 1;
        m.div_ceil(total) * total + 1
    }
}

/// Per-cell complex multiplier, frame-major like [`ComplexSpectrogram`].
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexMask {
    pub frames: usize,
    pub bins: usize,
    pub data: Vec<Complex64>,
}

impl ComplexMask {
    pub fn constant(frames: usize, bins: usize, value: Complex64) -> Self {
        Self {
            frames,
            bins,
            data: vec![value; frames * bins],
        }
    }

    pub fn max_magnitude(&self) -> f64 {
        self.data.iter().map(|c| c.norm()).fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComplexUNet {
    config: UNetConfig,
    seed: u64,
    encoder: Vec<ComplexConvLayer>,
    decoder: Vec<ComplexConvLayer>,
}

/// Intermediate values of one forward pass, kept for backpropagation.
pub(crate) struct ForwardCache {
    enc_in: Vec<ComplexTensor>,
    enc_pre: Vec<ComplexTensor>,
    dec_in: Vec<ComplexTensor>,
    dec_pre: Vec<ComplexTensor>,
    raw: Vec<Complex64>,
    padded: [usize; 3],
}

/// Gradients with the same layout as the model parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub encoder: Vec<LayerParams>,
    pub decoder: Vec<LayerParams>,
}

impl Gradients {
    pub fn slices(&self) -> Vec<&[f64]> {
        self.encoder
            .iter()
            .chain(&self.decoder)
            .flat_map(|l| l.slices())
            .collect()
    }

    pub fn add_assign(&mut self, other: &Self) {
        let dst = self
            .encoder
            .iter_mut()
            .chain(self.decoder.iter_mut())
            .flat_map(|l| l.slices_mut());
        for (d, s) in dst.zip(other.slices()) {
            for (a, b) in d.iter_mut().zip(s) {
                *a += b;
            }
        }
    }

    pub fn scale(&mut self, k: f64) {
        for s in self
            .encoder
            .iter_mut()
            .chain(self.decoder.iter_mut())
            .flat_map(|l| l.slices_mut())
        {
            s.iter_mut().for_each(|v| *v *= k);
        }
    }
}

fn leaky(v: f64, slope: f64) -> f64 {
    if v > 0.0 {
        v
    } else {
        slope * v
    }
}

fn activate(t: &ComplexTensor, slope: f64) -> ComplexTensor {
    let mut out = t.clone();
    out.re.iter_mut().for_each(|v| *v = leaky(*v, slope));
    out.im.iter_mut().for_each(|v| *v = leaky(*v, slope));
    out
}

fn activate_backward(pre: &ComplexTensor, grad: &mut ComplexTensor, slope: f64) {
    for (g, p) in grad.re.iter_mut().zip(&pre.re) {
        if *p <= 0.0 {
            *g *= slope;
        }
    }
    for (g, p) in grad.im.iter_mut().zip(&pre.im) {
        if *p <= 0.0 {
            *g *= slope;
        }
    }
}

/// `tanh(r)/r` and `d/dr (tanh(r)/r) / r` for `r = |m|`.
fn bound_factors(r: f64) -> (f64, f64) {
    if r < 1e-4 {
        let r2 = r * r;
        (1.0 - r2 / 3.0, -2.0 / 3.0 + 8.0 * r2 / 15.0)
    } else {
        let t = r.tanh();
        let sech2 = 1.0 - t * t;
        (t / r, (r * sech2 - t) / (r * r * r))
    }
}

pub(crate) fn bound_mask(m: Complex64) -> Complex64 {
    let (g, _) = bound_factors(m.norm());
    let b = m * g;
    // tanh saturates at 1.0 exactly, but the phase division can round up
    let n = b.norm();
    if n > 1.0 {
        b / n
    } else {
        b
    }
}

/// Gradient through [`bound_mask`] given the upstream gradient `up`
/// (`re`/`im` = partials w.r.t. the bounded mask's parts).
fn bound_mask_backward(m: Complex64, up: Complex64) -> Complex64 {
    let (g, h) = bound_factors(m.norm());
    let dot = up.re * m.re + up.im * m.im;
    Complex64::new(up.re * g + dot * h * m.re, up.im * g + dot * h * m.im)
}

impl ComplexUNet {
    /// Builds a model with complex Gaussian weights drawn from `seed` and
    /// zero biases.
    pub fn new(config: UNetConfig, seed: u64) -> Result<Self> {
        let mut model = Self::zeros(config, seed)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let klen = (model.config.kernel[0] * model.config.kernel[1]) as f64;
        for layer in model.encoder.iter_mut().chain(model.decoder.iter_mut()) {
            let fan_in = layer.in_channels as f64 * klen;
            let normal = Normal::new(0.0, (1.0 / (2.0 * fan_in)).sqrt())
                .map_err(|e| Error::InvalidModel(e.to_string()))?;
            for w in layer
                .params
                .weight_re
                .iter_mut()
                .chain(layer.params.weight_im.iter_mut())
            {
                *w = normal.sample(&mut rng);
            }
        }
        Ok(model)
    }

    /// Random hidden layers with a zero-weight output layer whose real bias
    /// is 1: the raw mask starts at exactly `1 + 0i` everywhere, i.e. the
    /// identity in unbounded mode (`tanh(1)` in bounded mode).
    pub fn new_identity(config: UNetConfig, seed: u64) -> Result<Self> {
        let mut model = Self::new(config, seed)?;
        let last = model.decoder.last_mut().expect("depth >= 1");
        last.params.weight_re.iter_mut().for_each(|v| *v = 0.0);
        last.params.weight_im.iter_mut().for_each(|v| *v = 0.0);
        last.params.bias_re[0] = 1.0;
        Ok(model)
    }

    /// All-zero parameters with the configured layer shapes.
    pub fn zeros(config: UNetConfig, seed: u64) -> Result<Self> {
        let geo = config.validate()?;
        let ch = &config.channels;
        let depth = ch.len();
        let encoder = (0..depth)
            .map(|i| {
                let cin = if i == 0 { 1 } else { ch[i - 1] };
                ComplexConvLayer::zeros(Direction::Down, cin, ch[i], geo)
            })
            .collect();
        let decoder = (0..depth)
            .map(|j| {
                let cin = if j == 0 {
                    ch[depth - 1]
                } else {
                    2 * ch[depth - 1 - j]
                };
                let cout = if j + 1 == depth { 1 } else { ch[depth - 2 - j] };
                ComplexConvLayer::zeros(Direction::Up, cin, cout, geo)
            })
            .collect();
        Ok(Self {
            config,
            seed,
            encoder,
            decoder,
        })
    }

    pub fn config(&self) -> &UNetConfig {
        &self.config
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn encoder(&self) -> &[ComplexConvLayer] {
        &self.encoder
    }

    pub fn decoder(&self) -> &[ComplexConvLayer] {
        &self.decoder
    }

    pub fn decoder_mut(&mut self) -> &mut [ComplexConvLayer] {
        &mut self.decoder
    }

    pub fn encoder_mut(&mut self) -> &mut [ComplexConvLayer] {
        &mut self.encoder
    }

    /// Real parameter count (real and imaginary parts counted separately).
    pub fn parameter_count(&self) -> usize {
        self.encoder
            .iter()
            .chain(&self.decoder)
            .map(|l| l.params.count())
            .sum()
    }

    pub fn parameters(&self) -> Vec<&[f64]> {
        self.encoder
            .iter()
            .chain(&self.decoder)
            .flat_map(|l| l.params.slices())
            .collect()
    }

    pub fn parameters_mut(&mut self) -> Vec<&mut [f64]> {
        self.encoder
            .iter_mut()
            .chain(self.decoder.iter_mut())
            .flat_map(|l| l.params.slices_mut())
            .collect()
    }

    pub fn zero_gradients(&self) -> Gradients {
        Gradients {
            encoder: self
                .encoder
                .iter()
                .map(|l| LayerParams::zeros_like(&l.params))
                .collect(),
            decoder: self
                .decoder
                .iter()
                .map(|l| LayerParams::zeros_like(&l.params))
                .collect(),
        }
    }

    /// Spectrogram -> padded single-channel tensor (height = bins, width = frames).
    fn input_tensor(&self, spec: &ComplexSpectrogram) -> ComplexTensor {
        let (frames, bins) = (spec.frames(), spec.bins());
        let hp = self.config.padded(bins, 0);
        let wp = self.config.padded(frames, 1);
        let mut x = ComplexTensor::zeros([1, hp, wp]);
        let scale = if self.config.normalize_input {
            let power =
                spec.data().iter().map(|c| c.norm_sqr()).sum::<f64>() / spec.data().len() as f64;
            if power > 0.0 {
                1.0 / power.sqrt()
            } else {
                1.0
            }
        } else {
            1.0
        };
        for t in 0..frames {
            for f in 0..bins {
                let c = spec.get(t, f);
                x.re[f * wp + t] = c.re * scale;
                x.im[f * wp + t] = c.im * scale;
            }
        }
        x
    }

    pub(crate) fn forward_cached(&self, spec: &ComplexSpectrogram) -> Result<ForwardCache> {
        let depth = self.config.depth();
        let slope = self.config.leaky_slope;
        let x = self.input_tensor(spec);
        let padded = x.shape();

        let mut enc_in = Vec::with_capacity(depth);
        let mut enc_pre = Vec::with_capacity(depth);
        let mut enc_out: Vec<ComplexTensor> = Vec::with_capacity(depth);
        let mut cur = x;
        for layer in &self.encoder {
            let pre = layer.forward(&cur)?;
            let act = activate(&pre, slope);
            enc_in.push(cur);
            enc_pre.push(pre);
            enc_out.push(act.clone());
            cur = act;
        }

        let mut dec_in = Vec::with_capacity(depth);
        let mut dec_pre = Vec::with_capacity(depth);
        let mut prev: Option<ComplexTensor> = None;
        for (j, layer) in self.decoder.iter().enumerate() {
            let input = match prev.take() {
                None => enc_out[depth - 1].clone(),
                Some(u) => u.concat_channels(&enc_out[depth - 1 - j])?,
            };
            let pre = layer.forward(&input)?;
            let out = if j + 1 < depth {
                activate(&pre, slope)
            } else {
                pre.clone()
            };
            dec_in.push(input);
            dec_pre.push(pre);
            prev = Some(out);
        }
        let last = prev.expect("depth >= 1");
        if last.shape() != padded {
            return Err(Error::InvalidModel(format!(
                "decoder output {:?} does not mirror input {padded:?}",
                last.shape()
            )));
        }
        let (frames, bins) = (spec.frames(), spec.bins());
        let wp = padded[2];
        let mut raw = Vec::with_capacity(frames * bins);
        for t in 0..frames {
            for f in 0..bins {
                raw.push(Complex64::new(last.re[f * wp + t], last.im[f * wp + t]));
            }
        }
        Ok(ForwardCache {
            enc_in,
            enc_pre,
            dec_in,
            dec_pre,
            raw,
            padded,
        })
    }

    pub(crate) fn mask_from_cache(
        &self,
        cache: &ForwardCache,
        frames: usize,
        bins: usize,
    ) -> ComplexMask {
        let data = match self.config.mask {
            MaskMode::Bounded => cache.raw.iter().map(|&m| bound_mask(m)).collect(),
            MaskMode::Unbounded => cache.raw.clone(),
        };
        ComplexMask { frames, bins, data }
    }

    /// Backpropagates a gradient on the (bounded) mask to all parameters.
    pub(crate) fn backward(
        &self,
        cache: &ForwardCache,
        grad_mask: &[Complex64],
        frames: usize,
        bins: usize,
    ) -> Result<Gradients> {
        let depth = self.config.depth();
        let slope = self.config.leaky_slope;
        let mut grads = self.zero_gradients();

        let [_, hp, wp] = cache.padded;
        let mut g = ComplexTensor::zeros([1, hp, wp]);
        for t in 0..frames {
            for f in 0..bins {
                let up = grad_mask[t * bins + f];
                let d = match self.config.mask {
                    MaskMode::Bounded => bound_mask_backward(cache.raw[t * bins + f], up),
                    MaskMode::Unbounded => up,
                };
                g.re[f * wp + t] = d.re;
                g.im[f * wp + t] = d.im;
            }
        }

        let mut enc_grad: Vec<Option<ComplexTensor>> = vec![None; depth];
        let accumulate = |slot: &mut Option<ComplexTensor>, t: ComplexTensor| match slot {
            Some(s) => s.add_assign(&t),
            None => *slot = Some(t),
        };
        for j in (0..depth).rev() {
            if j + 1 < depth {
                activate_backward(&cache.dec_pre[j], &mut g, slope);
            }
            let gin = self.decoder[j].backward(&cache.dec_in[j], &g, &mut grads.decoder[j])?;
            if j == 0 {
                accumulate(&mut enc_grad[depth - 1], gin);
            } else {
                let split = self.decoder[j - 1].out_channels;
                let (g_up, g_skip) = gin.split_channels(split);
                accumulate(&mut enc_grad[depth - 1 - j], g_skip);
                g = g_up;
            }
        }
        for i in (0..depth).rev() {
            let mut gi = enc_grad[i]
                .take()
                .unwrap_or_else(|| ComplexTensor::zeros(cache.enc_pre[i].shape()));
            activate_backward(&cache.enc_pre[i], &mut gi, slope);
            let gin = self.encoder[i].backward(&cache.enc_in[i], &gi, &mut grads.encoder[i])?;
            if i > 0 {
                accumulate(&mut enc_grad[i - 1], gin);
            }
        }
        Ok(grads)
    }
}

/// Runs the network on a spectrogram and returns its mask, cropped back to
/// the spectrogram's shape.
pub fn unet_forward(spec: &ComplexSpectrogram, model: &ComplexUNet) -> Result<ComplexMask> {
    let cache = model.forward_cached(spec)?;
    Ok(model.mask_from_cache(&cache, spec.frames(), spec.bins()))
}

/// Cellwise complex product of spectrogram and mask.
pub fn apply_mask(spec: &ComplexSpectrogram, mask: &ComplexMask) -> Result<ComplexSpectrogram> {
    if mask.frames != spec.frames() || mask.bins != spec.bins() {
        return Err(Error::Dimension(format!(
            "mask {}x{} vs spectrogram {}x{}",
            mask.frames,
            mask.bins,
            spec.frames(),
            spec.bins()
        )));
    }
    spec.with_data(
        spec.data()
            .iter()
            .zip(&mask.data)
            .map(|(s, m)| s * m)
            .collect(),
    )
}

/// Masked resynthesis: `istft(spec * unet(spec))`, cut to `original_length`.
pub fn enhance(
    spec: &ComplexSpectrogram,
    model: &ComplexUNet,
    original_length: usize,
) -> Result<AudioClip> {
    let mask = unet_forward(spec, model)?;
    let y = istft(&apply_mask(spec, &mask)?)?;
    if original_length > y.len() {
        return Err(Error::LengthMismatch {
            expected: original_length,
            actual: y.len(),
        });
    }
    let rate = y.sample_rate();
    let mut samples = y.into_samples();
    samples.truncate(original_length);
    AudioClip::new(samples, rate)
}
