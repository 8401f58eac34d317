use std::io::ErrorKind;
use std::path::Path;

use hound::{SampleFormat, WavReader, WavSpec, WavWriter};

use super::AudioClip;
use crate::error::{Error, Result};

const I16_SCALE: f64 = 32768.0;

fn map_read_error(path: &Path, err: hound::Error) -> Error {
    match err {
        hound::Error::IoError(e) if e.kind() == ErrorKind::NotFound => {
            Error::MissingFile(path.to_path_buf())
        }
        hound::Error::IoError(e) if e.kind() == ErrorKind::UnexpectedEof => Error::MalformedWav {
            path: path.to_path_buf(),
            msg: "unexpected end of file".into(),
        },
        hound::Error::IoError(e) => Error::io(path, e),
        hound::Error::FormatError(msg) => Error::MalformedWav {
            path: path.to_path_buf(),
            msg: msg.to_string(),
        },
        hound::Error::Unsupported | hound::Error::InvalidSampleFormat | hound::Error::TooWide => {
            Error::UnsupportedEncoding {
                path: path.to_path_buf(),
                msg: err.to_string(),
            }
        }
        hound::Error::UnfinishedSample => Error::MalformedWav {
            path: path.to_path_buf(),
            msg: "truncated sample data".into(),
        },
    }
}

/// Reads a 16-bit PCM or 32-bit float WAV file, averaging channels to mono.
pub fn load_wav(path: impl AsRef<Path>) -> Result<AudioClip> {
    let path = path.as_ref();
    if !path.exists() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    let reader = WavReader::open(path).map_err(|e| map_read_error(path, e))?;
    let spec = reader.spec();
    let channels = spec.channels as usize;
    if channels == 0 {
        return Err(Error::MalformedWav {
            path: path.to_path_buf(),
            msg: "zero channels".into(),
        });
    }

    let interleaved: Vec<f64> = match (spec.sample_format, spec.bits_per_sample) {
        (SampleFormat::Int, 16) => reader
            .into_samples::<i16>()
            .map(|s| s.map(|v| v as f64 / I16_SCALE))
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| map_read_error(path, e))?,
        (SampleFormat::Float, 32) => reader
            .into_samples::<f32>()
            .map(|s| s.map(|v| v as f64))
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| map_read_error(path, e))?,
        (format, bits) => {
            return Err(Error::UnsupportedEncoding {
                path: path.to_path_buf(),
                msg: format!("{bits}-bit {format:?} samples (expected 16-bit PCM or 32-bit float)"),
            })
        }
    };

    let samples = if channels == 1 {
        interleaved
    } else {
        interleaved
            .chunks(channels)
            .map(|frame| frame.iter().sum::<f64>() / channels as f64)
            .collect()
    };
    AudioClip::new(samples, spec.sample_rate).map_err(|e| Error::MalformedWav {
        path: path.to_path_buf(),
        msg: e.to_string(),
    })
}

/// Writes a 16-bit PCM mono WAV file.
///
/// Amplitudes outside [-1, 1] are clipped; the number of clipped samples is
/// returned so callers can warn about it.
pub fn save_wav(clip: &AudioClip, path: impl AsRef<Path>) -> Result<usize> {
    let path = path.as_ref();
    let spec = WavSpec {
        channels: 1,
        sample_rate: clip.sample_rate(),
        bits_per_sample: 16,
        sample_format: SampleFormat::Int,
    };
    let to_io = |e: hound::Error| match e {
        hound::Error::IoError(io) => Error::io(path, io),
        other => Error::io(
            path,
            std::io::Error::other(other.to_string()),
        ),
    };
    let mut writer = WavWriter::create(path, spec).map_err(to_io)?;
    let mut clipped = 0usize;
    for &s in clip.samples() {
        if s.abs() > 1.0 {
            clipped += 1;
        }
        writer.write_sample(quantize(s)).map_err(to_io)?;
    }
    writer.finalize().map_err(to_io)?;
    if clipped > 0 {
        log::warn!("{}: clipped {clipped} samples", path.display());
    }
    Ok(clipped)
}

fn quantize(s: f64) -> i16 {
    (s * I16_SCALE)
        .round()
        .clamp(i16::MIN as f64, i16::MAX as f64) as i16
}
