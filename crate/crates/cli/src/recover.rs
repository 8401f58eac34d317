use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Args, ValueEnum};
use rayon::prelude::*;
use serde::Serialize;

use isr_core::corpus::{load_intermittent, sidecar_path, Manifest, ManifestRecord};
use isr_core::neural::{Checkpoint, ComplexUNet};
use isr_core::pipeline::recover;
use isr_core::signal::{save_wav, StftConfig};

use crate::config::StftArgs;

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Stages {
    /// Spectral interpolation and combination only.
    InterpOnly,
    /// Interpolation, enhancement and combination (needs --model).
    Full,
}

#[derive(Args, Debug, Serialize)]
pub struct RecoverArgs {
    /// Manifest of corrupted clips; each WAV needs its JSON sidecar.
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Model checkpoint (its STFT settings override --window/--hop).
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "full")]
    pub stages: Stages,
    #[command(flatten)]
    pub stft: StftArgs,
}

pub fn run(args: RecoverArgs) -> Result<()> {
    let manifest = Manifest::load(&args.manifest)
        .with_context(|| format!("loading manifest {}", args.manifest.display()))?;
    let (model, stft): (Option<ComplexUNet>, StftConfig) = match (args.stages, &args.model) {
        (Stages::Full, None) => bail!("--stages full needs --model (or use --stages interp-only)"),
        (Stages::Full, Some(path)) => {
            let ck = Checkpoint::load(path)
                .with_context(|| format!("loading checkpoint {}", path.display()))?;
            (Some(ck.model), ck.stft)
        }
        (Stages::InterpOnly, _) => (None, args.stft.config()?),
    };
    crate::config::echo(&args.out, "recover", &args)?;
    let interp_dir = args.out.join("interpolated");
    let rec_dir = args.out.join("recovered");
    std::fs::create_dir_all(&interp_dir)?;
    if model.is_some() {
        std::fs::create_dir_all(&rec_dir)?;
    }

    let process = |rec: &ManifestRecord| -> Result<()> {
        let clip = load_intermittent(&rec.path, &sidecar_path(&rec.path))?;
        let out = recover(&clip, &stft, model.as_ref())?;
        save_wav(
            &out.interpolated,
            interp_dir.join(format!("{}.wav", rec.id)),
        )?;
        if let Some(r) = &out.recovered {
            save_wav(r, rec_dir.join(format!("{}.wav", rec.id)))?;
        }
        Ok(())
    };
    let results: Vec<(String, Result<()>)> = manifest
        .records
        .par_iter()
        .map(|r| (r.id.clone(), process(r)))
        .collect();
    let mut failed = 0;
    for (id, r) in &results {
        if let Err(e) = r {
            failed += 1;
            eprintln!("failed: {id}: {e:#}");
        }
    }
    println!(
        "recovered {} of {} clips into {}",
        results.len() - failed,
        results.len(),
        args.out.display()
    );
    if failed > 0 && failed == results.len() {
        bail!("every clip failed");
    }
    Ok(())
}
