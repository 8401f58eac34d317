use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Args, ValueEnum};
use serde::Serialize;

use isr_core::corpus::{default_plans, generate_corruptions, Manifest};

#[derive(ValueEnum, Debug, Clone, Copy, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum PlanKind {
    /// 13 training source powers, 1.5-5.5 mW without 2, 3, 4, 5.
    Train,
    /// 2, 3, 4 and 5 mW.
    Test,
}

#[derive(Args, Debug, Serialize)]
pub struct CorruptArgs {
    /// CSV manifest of clean clips (id,path,transcript,split).
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value = "train")]
    pub plan: PlanKind,
    /// Override the energy grid (comma-separated milliwatts).
    #[arg(long, value_delimiter = ',')]
    pub powers: Option<Vec<f64>>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

pub fn run(args: CorruptArgs) -> Result<()> {
    let manifest = Manifest::load(&args.manifest)
        .with_context(|| format!("loading manifest {}", args.manifest.display()))?;
    let (train, test) = default_plans(args.seed);
    let mut plan = match args.plan {
        PlanKind::Train => train,
        PlanKind::Test => test,
    };
    if let Some(p) = &args.powers {
        plan.powers_mw = p.clone();
    }
    crate::config::echo(&args.out, "corrupt", &args)?;
    log::info!(
        "corrupting {} clips at {} source powers",
        manifest.len(),
        plan.powers_mw.len()
    );
    let summary = generate_corruptions(&manifest, &plan, &args.out)?;
    for f in &summary.failures {
        match f.power_mw {
            Some(p) => eprintln!("failed: {} at {p} mW: {}", f.id, f.error),
            None => eprintln!("failed: {}: {}", f.id, f.error),
        }
    }
    println!(
        "wrote {} corrupted clips to {} ({} failures)",
        summary.manifest.len(),
        args.out.display(),
        summary.failures.len()
    );
    if summary.manifest.is_empty() && !manifest.is_empty() {
        bail!("no clip could be corrupted");
    }
    Ok(())
}
