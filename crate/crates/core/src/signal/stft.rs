use std::f64::consts::PI;

use realfft::num_complex::Complex64;
use realfft::RealFftPlanner;
use serde::{Deserialize, Serialize};

use super::AudioClip;
use crate::error::{Error, Result};

/// Analysis/synthesis window shape.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Window {
    /// Periodic Hann.
    Hann,
    /// Square root of the periodic Hann window.
    SqrtHann,
    Rectangular,
}

impl Window {
    pub fn coefficients(self, len: usize) -> Vec<f64> {
        let n = len as f64;
        (0..len)
            .map(|i| {
                let hann = 0.5 - 0.5 * (2.0 * PI * i as f64 / n).cos();
                match self {
                    Window::Hann => hann,
                    Window::SqrtHann => hann.sqrt(),
                    Window::Rectangular => 1.0,
                }
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StftConfig {
    window_length: usize,
    hop_length: usize,
    window: Window,
}

impl Default for StftConfig {
    fn default() -> Self {
        Self {
            window_length: 512,
            hop_length: 128,
            window: Window::Hann,
        }
    }
}

impl StftConfig {
    /// Builds a configuration, rejecting hops at which the squared window
    /// does not overlap-add to a constant.
    pub fn new(window_length: usize, hop_length: usize, window: Window) -> Result<Self> {
        if hop_length == 0 || hop_length > window_length {
            return Err(Error::InvalidStftConfig(format!(
                "hop {hop_length} must satisfy 0 < hop <= window length {window_length}"
            )));
        }
        let cfg = Self {
            window_length,
            hop_length,
            window,
        };
        let sums = cfg.steady_state_power();
        let max = sums.iter().cloned().fold(f64::MIN, f64::max);
        let min = sums.iter().cloned().fold(f64::MAX, f64::min);
        if max <= 0.0 || max - min > 1e-10 * max {
            return Err(Error::InvalidStftConfig(format!(
                "{window:?} window of length {window_length} is not overlap-add constant at hop {hop_length}"
            )));
        }
        Ok(cfg)
    }

    pub fn window_length(&self) -> usize {
        self.window_length
    }

    pub fn hop_length(&self) -> usize {
        self.hop_length
    }

    pub fn window(&self) -> Window {
        self.window
    }

    /// Number of one-sided frequency bins.
    pub fn bins(&self) -> usize {
        self.window_length / 2 + 1
    }

    /// Frames needed to cover `len` samples with a zero-padded tail.
    pub fn frames_for(&self, len: usize) -> usize {
        let excess = len.saturating_sub(self.window_length);
        1 + excess.div_ceil(self.hop_length)
    }

    /// Overlap-added squared window over one hop in steady state.
    fn steady_state_power(&self) -> Vec<f64> {
        let w = self.window.coefficients(self.window_length);
        (0..self.hop_length)
            .map(|n| {
                w.iter()
                    .skip(n)
                    .step_by(self.hop_length)
                    .map(|v| v * v)
                    .sum()
            })
            .collect()
    }
}

/// One-sided complex spectrogram, stored frame-major (`data[t * bins + f]`).
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexSpectrogram {
    frames: usize,
    bins: usize,
    data: Vec<Complex64>,
    config: StftConfig,
    sample_rate: u32,
    original_len: usize,
}

impl ComplexSpectrogram {
    pub fn from_parts(
        data: Vec<Complex64>,
        frames: usize,
        config: StftConfig,
        sample_rate: u32,
        original_len: usize,
    ) -> Result<Self> {
        let bins = config.bins();
        if frames == 0 || data.len() != frames * bins {
            return Err(Error::Dimension(format!(
                "{} coefficients for {frames} frames x {bins} bins",
                data.len()
            )));
        }
        if sample_rate == 0 {
            return Err(Error::Dimension("sample rate must be positive".into()));
        }
        let max_len = (frames - 1) * config.hop_length + config.window_length;
        if original_len > max_len {
            return Err(Error::Dimension(format!(
                "original length {original_len} exceeds the {max_len} samples spanned by {frames} frames"
            )));
        }
        Ok(Self {
            frames,
            bins,
            data,
            config,
            sample_rate,
            original_len,
        })
    }

    pub fn zeros_like(other: &Self) -> Self {
        Self {
            data: vec![Complex64::new(0.0, 0.0); other.data.len()],
            ..other.clone()
        }
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn bins(&self) -> usize {
        self.bins
    }

    pub fn config(&self) -> &StftConfig {
        &self.config
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn original_len(&self) -> usize {
        self.original_len
    }

    pub fn data(&self) -> &[Complex64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [Complex64] {
        &mut self.data
    }

    pub fn frame(&self, t: usize) -> &[Complex64] {
        &self.data[t * self.bins..(t + 1) * self.bins]
    }

    pub fn frame_mut(&mut self, t: usize) -> &mut [Complex64] {
        &mut self.data[t * self.bins..(t + 1) * self.bins]
    }

    pub fn get(&self, t: usize, f: usize) -> Complex64 {
        self.data[t * self.bins + f]
    }

    /// Same geometry, new coefficients.
    pub fn with_data(&self, data: Vec<Complex64>) -> Result<Self> {
        Self::from_parts(
            data,
            self.frames,
            self.config,
            self.sample_rate,
            self.original_len,
        )
    }
}

/// Forward STFT. Frame `t` covers samples `[t*hop, t*hop + window)`; the
/// tail is zero-padded so every sample lands in at least one frame.
pub fn stft(clip: &AudioClip, config: &StftConfig) -> Result<ComplexSpectrogram> {
    if clip.is_empty() {
        return Err(Error::InvalidClip("cannot transform an empty clip".into()));
    }
    let wlen = config.window_length;
    let hop = config.hop_length;
    let window = config.window.coefficients(wlen);
    let frames = config.frames_for(clip.len());
    let bins = config.bins();

    let mut planner = RealFftPlanner::<f64>::new();
    let fft = planner.plan_fft_forward(wlen);
    let mut input = fft.make_input_vec();
    let mut scratch = fft.make_scratch_vec();
    let mut data = Vec::with_capacity(frames * bins);
    let mut out = fft.make_output_vec();
    let samples = clip.samples();
    for t in 0..frames {
        let start = t * hop;
        for (i, slot) in input.iter_mut().enumerate() {
            *slot = samples.get(start + i).copied().unwrap_or(0.0) * window[i];
        }
        fft.process_with_scratch(&mut input, &mut out, &mut scratch)
            .map_err(|e| Error::Dimension(e.to_string()))?;
        data.extend_from_slice(&out);
    }
    ComplexSpectrogram::from_parts(data, frames, *config, clip.sample_rate(), clip.len())
}

/// Per-sample reciprocal of the overlap-added squared window, floored so the
/// sparsely covered edges are not blown up.
fn synthesis_gain(config: &StftConfig, frames: usize, len: usize) -> Vec<f64> {
    let wlen = config.window_length;
    let hop = config.hop_length;
    let window = config.window.coefficients(wlen);
    let mut power = vec![0.0; (frames - 1) * hop + wlen];
    for t in 0..frames {
        for (i, w) in window.iter().enumerate() {
            power[t * hop + i] += w * w;
        }
    }
    let steady = config
        .steady_state_power()
        .into_iter()
        .fold(0.0f64, f64::max);
    let floor = 1e-3 * steady;
    power.truncate(len);
    power.iter().map(|&p| 1.0 / p.max(floor)).collect()
}

/// Inverse STFT by weighted overlap-add, truncated to the original length.
pub fn istft(spec: &ComplexSpectrogram) -> Result<AudioClip> {
    let config = spec.config;
    let wlen = config.window_length;
    let hop = config.hop_length;
    let window = config.window.coefficients(wlen);
    let len = spec.original_len;

    let mut planner = RealFftPlanner::<f64>::new();
    let ifft = planner.plan_fft_inverse(wlen);
    let mut buf = ifft.make_input_vec();
    let mut frame = ifft.make_output_vec();
    let mut scratch = ifft.make_scratch_vec();
    let scale = 1.0 / wlen as f64;
    let mut out = vec![0.0; (spec.frames - 1) * hop + wlen];
    for t in 0..spec.frames {
        buf.copy_from_slice(spec.frame(t));
        buf[0].im = 0.0;
        if wlen.is_multiple_of(2) {
            buf[wlen / 2].im = 0.0;
        }
        ifft.process_with_scratch(&mut buf, &mut frame, &mut scratch)
            .map_err(|e| Error::Dimension(e.to_string()))?;
        for (i, (v, w)) in frame.iter().zip(&window).enumerate() {
            out[t * hop + i] += v * scale * w;
        }
    }
    let gain = synthesis_gain(&config, spec.frames, len);
    out.truncate(len);
    for (o, g) in out.iter_mut().zip(&gain) {
        *o *= g;
    }
    AudioClip::new(out, spec.sample_rate)
}

/// Adjoint of [`istft`]: maps a gradient on the output waveform back to a
/// gradient on the spectrogram, with `re`/`im` holding the partials with
/// respect to the real and imaginary part of each coefficient.
pub fn istft_adjoint(spec: &ComplexSpectrogram, grad: &[f64]) -> Result<Vec<Complex64>> {
    if grad.len() != spec.original_len {
        return Err(Error::LengthMismatch {
            expected: spec.original_len,
            actual: grad.len(),
        });
    }
    let config = spec.config;
    let wlen = config.window_length;
    let hop = config.hop_length;
    let window = config.window.coefficients(wlen);
    let gain = synthesis_gain(&config, spec.frames, grad.len());
    let weighted: Vec<f64> = grad.iter().zip(&gain).map(|(g, k)| g * k).collect();

    let mut planner = RealFftPlanner::<f64>::new();
    let fft = planner.plan_fft_forward(wlen);
    let mut input = fft.make_input_vec();
    let mut out = fft.make_output_vec();
    let mut scratch = fft.make_scratch_vec();
    let scale = 1.0 / wlen as f64;
    let nyquist = wlen.is_multiple_of(2).then_some(wlen / 2);
    let mut result = Vec::with_capacity(spec.data.len());
    for t in 0..spec.frames {
        let start = t * hop;
        for (i, slot) in input.iter_mut().enumerate() {
            *slot = weighted.get(start + i).copied().unwrap_or(0.0) * window[i] * scale;
        }
        fft.process_with_scratch(&mut input, &mut out, &mut scratch)
            .map_err(|e| Error::Dimension(e.to_string()))?;
        for (k, g) in out.iter().enumerate() {
            if k == 0 || Some(k) == nyquist {
                result.push(Complex64::new(g.re, 0.0));
            } else {
                result.push(2.0 * g);
            }
        }
    }
    Ok(result)
}
