//! Gap interpolation in the complex spectrogram, and the final waveform
//! combination that keeps recorded samples untouched.

use realfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::energy::{FrameRange, IntermittentClip};
use crate::error::{Error, Result};
use crate::signal::{AudioClip, ComplexSpectrogram};

/// Which frame a gap was anchored to on one side.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Anchor {
    Frame(usize),
    /// The gap touches the start or end of the signal; the anchor is the
    /// zero vector.
    Boundary,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GapRecord {
    pub frames: FrameRange,
    pub left: Anchor,
    pub right: Anchor,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct InterpolationReport {
    pub gaps: Vec<GapRecord>,
}

/// Weight of the right anchor for frame `t` of the gap `[first, last]`.
///
/// The anchors sit at `first - 1` and `last + 1`, so the weight is 0 at the
/// left anchor, 1 at the right one, and rises linearly in between.
pub fn interpolation_ratio(t: usize, first: usize, last: usize) -> f64 {
    // (t - (first - 1)) / ((last + 1) - (first - 1)), kept in unsigned form
    (t + 1 - first) as f64 / (last + 2 - first) as f64
}

fn validate_ranges(ranges: &[FrameRange], frames: usize) -> Result<Vec<FrameRange>> {
    let mut merged: Vec<FrameRange> = Vec::with_capacity(ranges.len());
    for r in ranges {
        if r.start >= r.end {
            return Err(Error::InvalidRanges(format!(
                "empty frame range [{}, {})",
                r.start, r.end
            )));
        }
        if r.end > frames {
            return Err(Error::InvalidRanges(format!(
                "frame range [{}, {}) exceeds {frames} frames",
                r.start, r.end
            )));
        }
        match merged.last_mut() {
            Some(prev) if r.start < prev.end => {
                return Err(Error::InvalidRanges(format!(
                    "frame range [{}, {}) overlaps or precedes [{}, {})",
                    r.start, r.end, prev.start, prev.end
                )))
            }
            // abutting ranges form a single gap
            Some(prev) if r.start == prev.end => prev.end = r.end,
            _ => merged.push(*r),
        }
    }
    Ok(merged)
}

/// Fills each null frame range by linear interpolation between the frames
/// just outside it, real and imaginary parts independently. A gap touching
/// either end of the signal uses the zero vector as that anchor. Frames
/// outside the ranges are copied unchanged.
pub fn interpolate(
    spec: &ComplexSpectrogram,
    null_ranges: &[FrameRange],
) -> Result<(ComplexSpectrogram, InterpolationReport)> {
    let frames = spec.frames();
    let bins = spec.bins();
    let gaps = validate_ranges(null_ranges, frames)?;
    let mut out = spec.clone();
    let zero = vec![Complex64::new(0.0, 0.0); bins];
    let mut report = InterpolationReport::default();

    for gap in gaps {
        let (first, last) = (gap.start, gap.end - 1);
        let left = if first == 0 {
            Anchor::Boundary
        } else {
            Anchor::Frame(first - 1)
        };
        let right = if last + 1 == frames {
            Anchor::Boundary
        } else {
            Anchor::Frame(last + 1)
        };
        let left_vec = match left {
            Anchor::Frame(i) => spec.frame(i).to_vec(),
            Anchor::Boundary => zero.clone(),
        };
        let right_vec = match right {
            Anchor::Frame(i) => spec.frame(i).to_vec(),
            Anchor::Boundary => zero.clone(),
        };
        for t in first..=last {
            let r = interpolation_ratio(t, first, last);
            for ((dst, a), b) in out.frame_mut(t).iter_mut().zip(&left_vec).zip(&right_vec) {
                *dst = a * (1.0 - r) + b * r;
            }
        }
        report.gaps.push(GapRecord {
            frames: gap,
            left,
            right,
        });
    }
    Ok((out, report))
}

/// Takes `enhanced` inside the null segments and `original` everywhere else.
pub fn combine(original: &IntermittentClip, enhanced: &AudioClip) -> Result<AudioClip> {
    if enhanced.len() != original.len() {
        return Err(Error::LengthMismatch {
            expected: original.len(),
            actual: enhanced.len(),
        });
    }
    let src = original.clip();
    if enhanced.sample_rate() != src.sample_rate() {
        return Err(Error::RateMismatch(
            src.sample_rate(),
            enhanced.sample_rate(),
        ));
    }
    let mut out = src.samples().to_vec();
    for seg in original.nulls() {
        out[seg.start..seg.end].copy_from_slice(&enhanced.samples()[seg.start..seg.end]);
    }
    AudioClip::new(out, src.sample_rate())
}
