//! The full recovery chain: STFT, gap interpolation, optional mask
//! enhancement, and combination with the recorded samples.

use crate::energy::{nulls_to_frame_ranges, FrameRange, IntermittentClip};
use crate::error::Result;
use crate::neural::{enhance, ComplexUNet, TrainExample};
use crate::recovery::{combine, interpolate, InterpolationReport};
use crate::signal::{istft, stft, AudioClip, ComplexSpectrogram, StftConfig};

/// Interpolated spectrogram of an intermittent clip and the frame ranges
/// that were filled.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub spec: ComplexSpectrogram,
    pub ranges: Vec<FrameRange>,
    pub report: InterpolationReport,
}

pub fn prepare(clip: &IntermittentClip, config: &StftConfig) -> Result<Prepared> {
    let spec = stft(clip.clip(), config)?;
    let ranges = nulls_to_frame_ranges(clip.nulls(), config, spec.frames());
    let (spec, report) = interpolate(&spec, &ranges)?;
    Ok(Prepared {
        spec,
        ranges,
        report,
    })
}

#[derive(Debug, Clone)]
pub struct Recovery {
    /// Interpolation only, combined with the recorded samples.
    pub interpolated: AudioClip,
    /// Interpolation and enhancement, combined with the recorded samples.
    pub recovered: Option<AudioClip>,
    pub report: InterpolationReport,
}

/// Runs the chain; without a model only the interpolation stage is applied.
pub fn recover(
    clip: &IntermittentClip,
    config: &StftConfig,
    model: Option<&ComplexUNet>,
) -> Result<Recovery> {
    let prepared = prepare(clip, config)?;
    let interpolated = combine(clip, &istft(&prepared.spec)?)?;
    let recovered = match model {
        Some(m) => Some(combine(clip, &enhance(&prepared.spec, m, clip.len())?)?),
        None => None,
    };
    Ok(Recovery {
        interpolated,
        recovered,
        report: prepared.report,
    })
}

/// Training pair for an intermittent clip and its clean source.
pub fn training_example(
    clean: &AudioClip,
    clip: &IntermittentClip,
    config: &StftConfig,
) -> Result<TrainExample> {
    let p = prepare(clip, config)?;
    TrainExample::new(p.spec, p.ranges, clip.clone(), clean.clone())
}
