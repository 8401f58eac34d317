//! Capacitor energy model of an energy-harvesting recorder and the
//! intermittency it imposes on captured audio.
//!
//! The storage capacitor charges between the backup threshold `v_off` and
//! the restore threshold `v_on` while the device is off, and drains back to
//! `v_off` while it records. Both phases move the same amount of energy
//! `E = C (v_on^2 - v_off^2) / 2`, at rate `P_source` when charging and
//! `P_load - P_source` when recording.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signal::{AudioClip, StftConfig};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyHarvestConfig {
    /// Farads.
    pub capacitance: f64,
    /// Restore threshold, volts.
    pub v_on: f64,
    /// Backup threshold, volts.
    pub v_off: f64,
    /// Harvested power, watts.
    pub source_power: f64,
    /// Recording consumption, watts.
    pub load_power: f64,
}

impl EnergyHarvestConfig {
    /// The intermittent microphone: 200 uF, 2.8 V / 2.3 V, 5.6 mW recording.
    pub fn microphone(source_power: f64) -> Self {
        Self {
            capacitance: 200e-6,
            v_on: 2.8,
            v_off: 2.3,
            source_power,
            load_power: 5.6e-3,
        }
    }

    pub fn with_source_power(self, source_power: f64) -> Self {
        Self {
            source_power,
            ..self
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.capacitance > 0.0
            && self.v_off > 0.0
            && self.v_on > self.v_off
            && self.source_power >= 0.0
            && self.load_power > 0.0
            && [
                self.capacitance,
                self.v_on,
                self.v_off,
                self.source_power,
                self.load_power,
            ]
            .iter()
            .all(|v| v.is_finite());
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidEnergyConfig(format!("{self:?}")))
        }
    }

    /// Energy moved between the two thresholds, joules.
    pub fn cycle_energy(&self) -> f64 {
        self.capacitance * (self.v_on * self.v_on - self.v_off * self.v_off) / 2.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DutyCycle {
    /// Seconds powered and recording per cycle.
    pub t_on: f64,
    /// Seconds unpowered and charging per cycle.
    pub t_off: f64,
    pub always_on: bool,
}

impl DutyCycle {
    pub fn always_on() -> Self {
        Self {
            t_on: f64::INFINITY,
            t_off: 0.0,
            always_on: true,
        }
    }

    pub fn period(&self) -> f64 {
        self.t_on + self.t_off
    }

    fn validate(&self) -> Result<()> {
        if self.always_on {
            return Ok(());
        }
        if self.t_on > 0.0 && self.t_off > 0.0 && self.period().is_finite() {
            Ok(())
        } else {
            Err(Error::InvalidSchedule(format!(
                "on/off periods must be positive and finite: {self:?}"
            )))
        }
    }
}

/// Solves the energy balance for the on/off periods.
pub fn duty_cycle(config: &EnergyHarvestConfig) -> Result<DutyCycle> {
    config.validate()?;
    if config.source_power == 0.0 {
        return Err(Error::NeverPowersOn);
    }
    if config.source_power >= config.load_power {
        return Ok(DutyCycle::always_on());
    }
    let energy = config.cycle_energy();
    Ok(DutyCycle {
        t_on: energy / (config.load_power - config.source_power),
        t_off: energy / config.source_power,
        always_on: false,
    })
}

/// Half-open run of lost samples, `[start, end)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct NullSegment {
    pub start: usize,
    pub end: usize,
}

impl NullSegment {
    pub fn new(start: usize, end: usize) -> Result<Self> {
        if start >= end {
            return Err(Error::InvalidSchedule(format!(
                "empty or inverted null segment [{start}, {end})"
            )));
        }
        Ok(Self { start, end })
    }

    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.start == self.end
    }

    pub fn contains(&self, idx: usize) -> bool {
        (self.start..self.end).contains(&idx)
    }
}

/// Audio with the unpowered stretches zeroed and listed.
#[derive(Debug, Clone, PartialEq)]
pub struct IntermittentClip {
    clip: AudioClip,
    nulls: Vec<NullSegment>,
}

impl IntermittentClip {
    /// Checks that segments are sorted, separated, in bounds, and that the
    /// clip is exactly zero inside each of them.
    pub fn new(clip: AudioClip, nulls: Vec<NullSegment>) -> Result<Self> {
        check_segments(&nulls, clip.len())?;
        for seg in &nulls {
            if let Some(off) = clip.samples()[seg.start..seg.end]
                .iter()
                .position(|&s| s != 0.0)
            {
                return Err(Error::Integrity(format!(
                    "sample {} inside null segment [{}, {}) is nonzero",
                    seg.start + off,
                    seg.start,
                    seg.end
                )));
            }
        }
        Ok(Self { clip, nulls })
    }

    pub fn clip(&self) -> &AudioClip {
        &self.clip
    }

    pub fn nulls(&self) -> &[NullSegment] {
        &self.nulls
    }

    pub fn len(&self) -> usize {
        self.clip.len()
    }

    pub fn is_empty(&self) -> bool {
        self.clip.is_empty()
    }

    pub fn null_samples(&self) -> usize {
        self.nulls.iter().map(NullSegment::len).sum()
    }

    /// Per-sample flag, true inside a null segment.
    pub fn null_mask(&self) -> Vec<bool> {
        let mut mask = vec![false; self.clip.len()];
        for seg in &self.nulls {
            mask[seg.start..seg.end].fill(true);
        }
        mask
    }
}

pub(crate) fn check_segments(nulls: &[NullSegment], len: usize) -> Result<()> {
    let mut prev_end: Option<usize> = None;
    for seg in nulls {
        if seg.start >= seg.end {
            return Err(Error::InvalidSchedule(format!(
                "empty null segment [{}, {})",
                seg.start, seg.end
            )));
        }
        if seg.end > len {
            return Err(Error::InvalidSchedule(format!(
                "null segment [{}, {}) exceeds clip length {len}",
                seg.start, seg.end
            )));
        }
        if let Some(pe) = prev_end {
            if seg.start <= pe {
                return Err(Error::InvalidSchedule(format!(
                    "null segment [{}, {}) overlaps or touches its predecessor",
                    seg.start, seg.end
                )));
            }
        }
        prev_end = Some(seg.end);
    }
    Ok(())
}

/// Draws a schedule phase uniformly from `[0, period)`.
pub fn seeded_phase(duty: &DutyCycle, seed: u64) -> f64 {
    if duty.always_on {
        return 0.0;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.gen_range(0.0..duty.period())
}

/// Zeros every sample that falls in an off-window of the periodic schedule.
///
/// Sample `n` is recorded iff `(n / fs + phase) mod (t_on + t_off) < t_on`,
/// so `phase` is the position within the cycle at the first sample. When
/// `phase` is `None` it is drawn from `seed`. The schedule is simply cut at
/// the end of the clip.
pub fn apply_intermittency(
    clip: &AudioClip,
    duty: &DutyCycle,
    phase: Option<f64>,
    seed: u64,
) -> Result<IntermittentClip> {
    duty.validate()?;
    if duty.always_on {
        return IntermittentClip::new(clip.clone(), Vec::new());
    }
    let period = duty.period();
    let phase = match phase {
        Some(p) if (0.0..period).contains(&p) => p,
        Some(p) => {
            return Err(Error::InvalidSchedule(format!(
                "phase {p} s outside [0, {period})"
            )))
        }
        None => seeded_phase(duty, seed),
    };

    let fs = clip.sample_rate() as f64;
    let mut samples = clip.samples().to_vec();
    let mut nulls = Vec::new();
    let mut open: Option<usize> = None;
    for (n, s) in samples.iter_mut().enumerate() {
        let pos = (n as f64 / fs + phase).rem_euclid(period);
        let off = pos >= duty.t_on;
        match (off, open) {
            (true, None) => open = Some(n),
            (false, Some(start)) => {
                nulls.push(NullSegment { start, end: n });
                open = None;
            }
            _ => {}
        }
        if off {
            *s = 0.0;
        }
    }
    if let Some(start) = open {
        nulls.push(NullSegment {
            start,
            end: samples.len(),
        });
    }
    IntermittentClip::new(AudioClip::new(samples, clip.sample_rate())?, nulls)
}

/// Half-open range of STFT frame indices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrameRange {
    pub start: usize,
    pub end: usize,
}

impl FrameRange {
    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end <= self.start
    }
}

/// Marks a frame null when strictly more than half of its window samples
/// lie inside null segments, then merges consecutive null frames.
pub fn nulls_to_frame_ranges(
    nulls: &[NullSegment],
    config: &StftConfig,
    total_frames: usize,
) -> Vec<FrameRange> {
    let wlen = config.window_length();
    let hop = config.hop_length();
    let mut ranges: Vec<FrameRange> = Vec::new();
    let mut first = 0usize;
    for t in 0..total_frames {
        let (lo, hi) = (t * hop, t * hop + wlen);
        while first < nulls.len() && nulls[first].end <= lo {
            first += 1;
        }
        let covered: usize = nulls[first..]
            .iter()
            .take_while(|s| s.start < hi)
            .map(|s| s.end.min(hi) - s.start.max(lo))
            .sum();
        if 2 * covered > wlen {
            match ranges.last_mut() {
                Some(r) if r.end == t => r.end = t + 1,
                _ => ranges.push(FrameRange {
                    start: t,
                    end: t + 1,
                }),
            }
        }
    }
    ranges
}
