//! Short-time objective intelligibility.
//!
//! Follows the reference formulation step by step (Octave-compatible
//! resampler, silent-frame removal on the clean signal, 512-point STFT,
//! one-third-octave envelopes, 30-frame segments, clipping at -15 dB) so
//! scores agree with the widely used Python implementation to rounding.

use std::sync::OnceLock;

use realfft::RealFftPlanner;

use crate::error::{Error, Result};
use crate::signal::AudioClip;

/// Fixed constants of the measure.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StoiConfig {
    pub sample_rate: u32,
    pub frame_length: usize,
    pub fft_length: usize,
    pub bands: usize,
    pub min_frequency: f64,
    pub segment_frames: usize,
    pub beta_db: f64,
    pub dynamic_range_db: f64,
}

pub const STOI: StoiConfig = StoiConfig {
    sample_rate: 10_000,
    frame_length: 256,
    fft_length: 512,
    bands: 15,
    min_frequency: 150.0,
    segment_frames: 30,
    beta_db: -15.0,
    dynamic_range_db: 40.0,
};

const EPS: f64 = f64::EPSILON;

fn gcd(a: u64, b: u64) -> u64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Modified Bessel function of the first kind, order zero.
fn bessel_i0(x: f64) -> f64 {
    let mut sum = 1.0;
    let mut term = 1.0;
    let q = x * x / 4.0;
    for k in 1..500 {
        term *= q / (k * k) as f64;
        sum += term;
        if term < sum * 1e-17 {
            break;
        }
    }
    sum
}

fn sinc(x: f64) -> f64 {
    if x == 0.0 {
        1.0
    } else {
        let px = std::f64::consts::PI * x;
        px.sin() / px
    }
}

/// Octave-style anti-aliasing filter for rational resampling by `up/down`
/// (60 dB rejection Kaiser-windowed sinc, normalised to unit DC gain).
fn resample_filter(up: u64, down: u64) -> Vec<f64> {
    let stopband = 1.0 / (2.0 * up.max(down) as f64);
    let roll_off = stopband / 10.0;
    let rejection_db = 60.0;
    let half = ((rejection_db - 8.0) / (28.714 * roll_off)).ceil() as i64;
    let beta = 0.1102 * (rejection_db - 8.7);
    let len = (2 * half + 1) as usize;
    let denom = bessel_i0(beta);
    let mut h: Vec<f64> = (-half..=half)
        .enumerate()
        .map(|(i, t)| {
            let ideal = 2.0 * up as f64 * stopband * sinc(2.0 * stopband * t as f64);
            let r = 2.0 * i as f64 / (len - 1) as f64 - 1.0;
            let kaiser = bessel_i0(beta * (1.0 - r * r).max(0.0).sqrt()) / denom;
            kaiser * ideal
        })
        .collect();
    let sum: f64 = h.iter().sum();
    h.iter_mut().for_each(|v| *v /= sum);
    h
}

/// Polyphase resampling with zero padding at both ends, output centred on
/// the filter's midpoint.
pub fn resample(x: &[f64], from: u32, to: u32) -> Vec<f64> {
    if from == to {
        return x.to_vec();
    }
    let g = gcd(from as u64, to as u64);
    let (up, down) = (to as u64 / g, from as u64 / g);
    let h = resample_filter(up, down);
    let half = (h.len() - 1) / 2;
    let n_out = (x.len() as u64 * up).div_ceil(down) as usize;
    let (up, down) = (up as usize, down as usize);
    (0..n_out)
        .map(|m| {
            // y[m] = up * sum_n x[n] h[half + m*down - n*up]
            let centre = half + m * down;
            let n_hi = (centre / up).min(x.len().saturating_sub(1));
            let n_lo = centre.saturating_sub(h.len() - 1).div_ceil(up);
            let mut acc = 0.0;
            if !x.is_empty() {
                for n in n_lo..=n_hi {
                    acc += x[n] * h[centre - n * up];
                }
            }
            acc * up as f64
        })
        .collect()
}

/// `hanning(n + 2)[1..n + 1]`, the symmetric Hann window without its zeros.
fn analysis_window(n: usize) -> Vec<f64> {
    (1..=n)
        .map(|i| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / (n + 1) as f64).cos())
        .collect()
}

fn frame_starts(len: usize, frame: usize, hop: usize) -> impl Iterator<Item = usize> {
    (0..len.saturating_sub(frame)).step_by(hop)
}

/// Drops frames whose clean energy is more than `range_db` below the
/// loudest clean frame and overlap-adds the windowed survivors.
fn remove_silent_frames(
    x: &[f64],
    y: &[f64],
    range_db: f64,
    frame: usize,
    hop: usize,
) -> (Vec<f64>, Vec<f64>) {
    let w = analysis_window(frame);
    let starts: Vec<usize> = frame_starts(x.len(), frame, hop).collect();
    let energy: Vec<f64> = starts
        .iter()
        .map(|&s| {
            let e: f64 = (0..frame).map(|i| (w[i] * x[s + i]).powi(2)).sum();
            20.0 * (e.sqrt() + EPS).log10()
        })
        .collect();
    let max = energy.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let kept: Vec<usize> = starts
        .iter()
        .zip(&energy)
        .filter(|(_, &e)| max - range_db - e < 0.0)
        .map(|(&s, _)| s)
        .collect();
    if kept.is_empty() {
        return (Vec::new(), Vec::new());
    }
    let out_len = (kept.len() - 1) * hop + frame;
    let mut xs = vec![0.0; out_len];
    let mut ys = vec![0.0; out_len];
    for (k, &s) in kept.iter().enumerate() {
        for i in 0..frame {
            xs[k * hop + i] += w[i] * x[s + i];
            ys[k * hop + i] += w[i] * y[s + i];
        }
    }
    (xs, ys)
}

/// Squared-magnitude spectra, one row per frame.
fn power_spectra(x: &[f64], frame: usize, nfft: usize, hop: usize) -> Vec<Vec<f64>> {
    let w = analysis_window(frame);
    let mut planner = RealFftPlanner::<f64>::new();
    let fft = planner.plan_fft_forward(nfft);
    let mut input = fft.make_input_vec();
    let mut out = fft.make_output_vec();
    frame_starts(x.len(), frame, hop)
        .map(|s| {
            input.iter_mut().for_each(|v| *v = 0.0);
            for i in 0..frame {
                input[i] = w[i] * x[s + i];
            }
            fft.process(&mut input, &mut out).expect("fft sizes fixed");
            out.iter().map(|c| c.norm_sqr()).collect()
        })
        .collect()
}

/// Bin ranges `[lo, hi)` of the one-third-octave bands.
fn third_octave_bands(cfg: &StoiConfig) -> &'static [(usize, usize)] {
    static BANDS: OnceLock<Vec<(usize, usize)>> = OnceLock::new();
    debug_assert_eq!(*cfg, STOI);
    BANDS.get_or_init(|| {
        let nfft = cfg.fft_length;
        let fs = cfg.sample_rate as f64;
        let f: Vec<f64> = (0..=nfft / 2)
            .map(|i| fs * i as f64 / nfft as f64)
            .collect();
        let nearest = |target: f64| {
            let mut best = 0;
            for (i, &v) in f.iter().enumerate() {
                if (v - target).powi(2) < (f[best] - target).powi(2) {
                    best = i;
                }
            }
            best
        };
        (0..cfg.bands)
            .map(|k| {
                let k = k as f64;
                let lo = cfg.min_frequency * 2f64.powf((2.0 * k - 1.0) / 6.0);
                let hi = cfg.min_frequency * 2f64.powf((2.0 * k + 1.0) / 6.0);
                (nearest(lo), nearest(hi))
            })
            .collect()
    })
}

/// Band envelopes, `bands x frames`.
fn band_envelopes(spectra: &[Vec<f64>], bands: &[(usize, usize)]) -> Vec<Vec<f64>> {
    bands
        .iter()
        .map(|&(lo, hi)| {
            spectra
                .iter()
                .map(|p| p[lo..hi].iter().sum::<f64>().sqrt())
                .collect()
        })
        .collect()
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn centre(v: &mut [f64]) {
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    v.iter_mut().for_each(|x| *x -= mean);
}

/// STOI of `processed` against `clean`.
pub fn stoi(clean: &AudioClip, processed: &AudioClip) -> Result<f64> {
    if clean.sample_rate() != processed.sample_rate() {
        return Err(Error::RateMismatch(
            clean.sample_rate(),
            processed.sample_rate(),
        ));
    }
    if clean.len() != processed.len() {
        return Err(Error::LengthMismatch {
            expected: clean.len(),
            actual: processed.len(),
        });
    }
    if clean.samples().iter().all(|&v| v == 0.0) {
        return Err(Error::Metric("clean signal is silent".into()));
    }
    let cfg = STOI;
    let x = resample(clean.samples(), clean.sample_rate(), cfg.sample_rate);
    let y = resample(
        processed.samples(),
        processed.sample_rate(),
        cfg.sample_rate,
    );
    let hop = cfg.frame_length / 2;
    let (x, y) = remove_silent_frames(&x, &y, cfg.dynamic_range_db, cfg.frame_length, hop);
    let xs = power_spectra(&x, cfg.frame_length, cfg.fft_length, hop);
    let ys = power_spectra(&y, cfg.frame_length, cfg.fft_length, hop);
    let n = cfg.segment_frames;
    if xs.len() < n {
        return Err(Error::Metric(format!(
            "only {} non-silent frames, need at least {n}",
            xs.len()
        )));
    }
    let bands = third_octave_bands(&cfg);
    let xb = band_envelopes(&xs, bands);
    let yb = band_envelopes(&ys, bands);
    let clip = 1.0 + 10f64.powf(-cfg.beta_db / 20.0);

    let segments = xs.len() - n + 1;
    let mut total = 0.0;
    for m in 0..segments {
        for (xr, yr) in xb.iter().zip(&yb) {
            let mut xseg = xr[m..m + n].to_vec();
            let yseg = &yr[m..m + n];
            let alpha = norm(&xseg) / (norm(yseg) + EPS);
            let mut yp: Vec<f64> = yseg
                .iter()
                .zip(&xseg)
                .map(|(&yv, &xv)| (yv * alpha).min(xv * clip))
                .collect();
            centre(&mut yp);
            centre(&mut xseg);
            let (ny, nx) = (norm(&yp) + EPS, norm(&xseg) + EPS);
            total += yp
                .iter()
                .zip(&xseg)
                .map(|(a, b)| (a / ny) * (b / nx))
                .sum::<f64>();
        }
    }
    Ok((total / (segments * cfg.bands) as f64).clamp(-1.0, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn filter_shape() {
        let h = resample_filter(5, 8);
        assert_eq!(h.len(), 581);
        assert!((h.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        // symmetric
        for i in 0..290 {
            assert!((h[i] - h[580 - i]).abs() < 1e-15);
        }
    }

    #[test]
    fn resample_lengths_and_dc() {
        let x = vec![1.0; 1600];
        let y = resample(&x, 16000, 10000);
        assert_eq!(y.len(), 1000);
        // unit DC gain away from the edges
        for v in &y[100..900] {
            assert!((v - 1.0).abs() < 2e-3, "{v}");
        }
        assert_eq!(resample(&[1.0, 2.0], 10000, 10000), vec![1.0, 2.0]);
        assert_eq!(resample(&[0.0; 3], 16000, 10000).len(), 2);
    }

    #[test]
    fn bands_cover_expected_bins() {
        let b = third_octave_bands(&STOI);
        assert_eq!(b.len(), 15);
        // 150 Hz band: edges 133.6 Hz and 168.4 Hz -> bins 7 and 9 at 19.53 Hz spacing
        assert_eq!(b[0], (7, 9));
        assert!(b.windows(2).all(|w| w[0].1 <= w[1].0 + 1));
        assert!(b[14].1 <= 257);
    }

    #[test]
    fn bessel_reference_values() {
        assert!((bessel_i0(0.0) - 1.0).abs() < 1e-15);
        assert!((bessel_i0(1.0) - 1.266_065_877_752_008_4).abs() < 1e-14);
        assert!((bessel_i0(5.0) - 27.239_871_823_604_45).abs() < 1e-11);
    }
}
