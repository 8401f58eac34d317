//! Deterministic speech-like test signals.
//!
//! Voiced syllables are harmonic series with a drifting pitch, shaped by
//! three formant resonances that glide between vowel targets; unvoiced
//! bursts are band-limited noise. Syllables are separated by short pauses,
//! which gives the slow envelope modulation intelligibility metrics respond
//! to.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::signal::AudioClip;

/// Formant targets (Hz) of a few vowels.
const VOWELS: [[f64; 3]; 6] = [
    [730.0, 1090.0, 2440.0],
    [270.0, 2290.0, 3010.0],
    [300.0, 870.0, 2240.0],
    [530.0, 1840.0, 2480.0],
    [570.0, 840.0, 2410.0],
    [660.0, 1720.0, 2410.0],
];

fn formant_gain(f: f64, formants: &[f64; 3]) -> f64 {
    formants
        .iter()
        .map(|&c| {
            let bw = 60.0 + 0.06 * c;
            1.0 / (1.0 + ((f - c) / bw).powi(2))
        })
        .sum::<f64>()
        + 0.02
}

/// `seconds` of speech-like audio at `sample_rate`, peak-normalised to
/// `0.5`. Identical arguments give identical samples.
pub fn speech_like(seconds: f64, sample_rate: u32, seed: u64) -> Result<AudioClip> {
    let fs = sample_rate as f64;
    let n = (seconds * fs).round().max(0.0) as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = vec![0.0; n];
    let base_f0 = rng.gen_range(95.0..210.0);
    let mut pos = (rng.gen_range(0.02..0.12) * fs) as usize;
    let mut phase = 0.0f64;
    while pos < n {
        let voiced = rng.gen_bool(0.8);
        let dur = (rng.gen_range(0.12..0.30) * fs) as usize;
        let end = (pos + dur).min(n);
        let len = (end - pos).max(1) as f64;
        if voiced {
            let from = VOWELS[rng.gen_range(0..VOWELS.len())];
            let to = VOWELS[rng.gen_range(0..VOWELS.len())];
            let f0_start = base_f0 * rng.gen_range(0.85..1.15);
            let f0_end = base_f0 * rng.gen_range(0.85..1.15);
            let amp = rng.gen_range(0.5..1.0);
            for (k, slot) in out[pos..end].iter_mut().enumerate() {
                let u = k as f64 / len;
                let f0 = f0_start + (f0_end - f0_start) * u;
                phase += 2.0 * PI * f0 / fs;
                let formants = [0, 1, 2].map(|i| from[i] + (to[i] - from[i]) * u);
                let mut s = 0.0;
                let mut h = 1;
                while (h as f64) * f0 < (fs / 2.0).min(4000.0) {
                    let f = h as f64 * f0;
                    s += formant_gain(f, &formants) * (h as f64 * phase).sin() / (h as f64).sqrt();
                    h += 1;
                }
                *slot += amp * (PI * u).sin().powf(0.7) * s;
            }
        } else {
            // fricative: first-difference of white noise, i.e. a tilt towards high frequencies
            let amp = rng.gen_range(0.1..0.3);
            let mut last = 0.0;
            for (k, slot) in out[pos..end].iter_mut().enumerate() {
                let u = k as f64 / len;
                let w: f64 = rng.gen_range(-1.0..1.0);
                *slot += amp * (PI * u).sin() * (w - 0.7 * last);
                last = w;
            }
        }
        pos = end + (rng.gen_range(0.03..0.15) * fs) as usize;
    }
    let peak = out.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if peak > 0.0 {
        out.iter_mut().for_each(|v| *v *= 0.5 / peak);
    }
    AudioClip::new(out, sample_rate)
}
