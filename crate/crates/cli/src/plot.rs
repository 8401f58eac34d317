use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::Args;
use image::{GrayImage, Luma};
use rayon::prelude::*;
use serde::Serialize;

use isr_core::signal::{load_wav, stft, AudioClip, StftConfig};

use crate::config::StftArgs;

/// Lowest level shown, relative to the loudest bin of the clip.
pub const FLOOR_DB: f64 = -80.0;

#[derive(Args, Debug, Serialize)]
pub struct PlotArgs {
    /// WAV files to plot.
    #[arg(required = true)]
    pub wavs: Vec<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub stft: StftArgs,
}

/// Log-magnitude spectrogram in dB relative to its maximum, clamped to
/// [`FLOOR_DB`, 0]. Indexed `[frame][bin]`. An all-zero clip is uniformly
/// at the floor.
pub fn spectrogram_db(clip: &AudioClip, config: &StftConfig) -> Result<Vec<Vec<f64>>> {
    let spec = stft(clip, config)?;
    let peak = spec.data().iter().map(|c| c.norm()).fold(0.0, f64::max);
    Ok((0..spec.frames())
        .map(|t| {
            spec.frame(t)
                .iter()
                .map(|c| {
                    if peak == 0.0 {
                        FLOOR_DB
                    } else {
                        (20.0 * (c.norm() / peak).log10()).clamp(FLOOR_DB, 0.0)
                    }
                })
                .collect()
        })
        .collect())
}

/// Grayscale image, `frames` wide and `bins` tall, low frequencies at the
/// bottom; the floor maps to black and 0 dB to white.
pub fn spectrogram_image(db: &[Vec<f64>]) -> GrayImage {
    let frames = db.len() as u32;
    let bins = db.first().map_or(0, Vec::len) as u32;
    GrayImage::from_fn(frames, bins, |x, y| {
        let v = db[x as usize][(bins - 1 - y) as usize];
        Luma([((v - FLOOR_DB) / -FLOOR_DB * 255.0).round() as u8])
    })
}

fn plot_one(wav: &Path, out: &Path, config: &StftConfig) -> Result<()> {
    let clip = load_wav(wav)?;
    let stem = wav
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "clip".to_owned());

    let mut wave = String::from("time_s,amplitude\n");
    let rate = f64::from(clip.sample_rate());
    for (i, s) in clip.samples().iter().enumerate() {
        let _ = writeln!(wave, "{},{}", i as f64 / rate, s);
    }
    std::fs::write(out.join(format!("{stem}_waveform.csv")), wave)?;

    let db = spectrogram_db(&clip, config)?;
    // one row per frequency bin (ascending), one column per frame
    let bins = db.first().map_or(0, Vec::len);
    let mut matrix = String::new();
    for f in 0..bins {
        let row: Vec<String> = db.iter().map(|frame| format!("{:.3}", frame[f])).collect();
        let _ = writeln!(matrix, "{}", row.join(","));
    }
    std::fs::write(out.join(format!("{stem}_spectrogram.csv")), matrix)?;
    let png = out.join(format!("{stem}_spectrogram.png"));
    spectrogram_image(&db)
        .save(&png)
        .with_context(|| format!("writing {}", png.display()))?;
    Ok(())
}

pub fn run(args: PlotArgs) -> Result<()> {
    let config = args.stft.config()?;
    crate::config::echo(&args.out, "plot", &args)?;
    let results: Vec<(&PathBuf, Result<()>)> = args
        .wavs
        .par_iter()
        .map(|w| (w, plot_one(w, &args.out, &config)))
        .collect();
    let mut failed = 0;
    for (w, r) in &results {
        if let Err(e) = r {
            failed += 1;
            eprintln!("failed: {}: {e:#}", w.display());
        }
    }
    println!(
        "plotted {} of {} clips into {}",
        results.len() - failed,
        results.len(),
        args.out.display()
    );
    if failed > 0 {
        bail!("{failed} clip(s) could not be plotted");
    }
    Ok(())
}
