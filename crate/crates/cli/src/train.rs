use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, ValueEnum};
use rayon::prelude::*;
use serde::Serialize;

use isr_core::corpus::{load_intermittent, sidecar_path, Manifest, NullSidecar};
use isr_core::neural::{
    Checkpoint, ComplexUNet, ConvFeatureEncoder, EncoderConfig, LossKind, LossRegion, MaskMode,
    TrainConfig, TrainExample, Trainer, UNetConfig,
};
use isr_core::pipeline::training_example;
use isr_core::signal::{load_wav, StftConfig};
use isr_core::Error;

use crate::config::StftArgs;

#[derive(ValueEnum, Debug, Clone, Copy, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum LossArg {
    Mse,
    Perceptual,
}

#[derive(ValueEnum, Debug, Clone, Copy, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum RegionArg {
    /// Loss on the whole network output.
    Full,
    /// Loss after combination with the recorded samples.
    Nulls,
}

#[derive(ValueEnum, Debug, Clone, Copy, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum MaskArg {
    Bounded,
    Unbounded,
}

#[derive(ValueEnum, Debug, Clone, Copy, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum InitArg {
    /// Gaussian weights everywhere.
    Random,
    /// Gaussian hidden layers, output layer emitting a constant 1 + 0i mask.
    Identity,
}

#[derive(Args, Debug, Serialize)]
pub struct TrainArgs {
    /// Manifest of corrupted clips; sidecars point at the clean sources.
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value = "mse")]
    pub loss: LossArg,
    #[arg(long, value_enum, default_value = "full")]
    pub region: RegionArg,
    #[arg(long, default_value_t = 1000)]
    pub steps: u64,
    #[arg(long, default_value_t = 1e-3)]
    pub lr: f64,
    #[arg(long, default_value_t = 4)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Complex channels per U-Net level.
    #[arg(long, value_delimiter = ',', default_value = "8,16,32")]
    pub channels: Vec<usize>,
    /// Kernel size (frequency, time).
    #[arg(long, value_delimiter = ',', default_value = "5,5")]
    pub kernel: Vec<usize>,
    #[arg(long, value_enum, default_value = "bounded")]
    pub mask: MaskArg,
    #[arg(long, value_enum, default_value = "random")]
    pub init: InitArg,
    /// Scale each network input to unit RMS magnitude.
    #[arg(long)]
    pub normalize_input: bool,
    /// Seed of the frozen feature encoder used by the perceptual loss.
    #[arg(long, default_value_t = 0)]
    pub encoder_seed: u64,
    /// Save a checkpoint every N steps (0: only at the end).
    #[arg(long, default_value_t = 100)]
    pub checkpoint_every: u64,
    #[command(flatten)]
    pub stft: StftArgs,
}

fn load_examples(manifest: &Manifest, stft: &StftConfig) -> Result<Vec<TrainExample>> {
    manifest
        .records
        .par_iter()
        .map(|rec| {
            let side_path = sidecar_path(&rec.path);
            let side = NullSidecar::load(&side_path)?;
            let clean_path = if side.clean_path.is_absolute() {
                side.clean_path.clone()
            } else {
                side_path
                    .parent()
                    .unwrap_or(Path::new(""))
                    .join(&side.clean_path)
            };
            let clean = load_wav(&clean_path)?;
            let clip = load_intermittent(&rec.path, &side_path)?;
            training_example(&clean, &clip, stft).with_context(|| format!("preparing {}", rec.id))
        })
        .collect::<Result<Vec<_>>>()
}

pub fn run(args: TrainArgs) -> Result<()> {
    let manifest = Manifest::load(&args.manifest)
        .with_context(|| format!("loading manifest {}", args.manifest.display()))?;
    if manifest.is_empty() {
        bail!("training manifest is empty");
    }
    let stft = args.stft.config()?;
    let [kf, kt] = args.kernel[..] else {
        bail!("--kernel takes two values (frequency,time)");
    };
    let unet = UNetConfig {
        channels: args.channels.clone(),
        kernel: [kf, kt],
        mask: match args.mask {
            MaskArg::Bounded => MaskMode::Bounded,
            MaskArg::Unbounded => MaskMode::Unbounded,
        },
        normalize_input: args.normalize_input,
        ..UNetConfig::default()
    };
    let mut model = match args.init {
        InitArg::Random => ComplexUNet::new(unet, args.seed)?,
        InitArg::Identity => ComplexUNet::new_identity(unet, args.seed)?,
    };
    let config = TrainConfig {
        learning_rate: args.lr,
        steps: args.steps,
        batch_size: args.batch_size,
        seed: args.seed,
        loss: match args.loss {
            LossArg::Mse => LossKind::Mse,
            LossArg::Perceptual => LossKind::Perceptual,
        },
        region: match args.region {
            RegionArg::Full => LossRegion::Full,
            RegionArg::Nulls => LossRegion::Nulls,
        },
    };
    let mut trainer = Trainer::new(config)?;
    crate::config::echo(&args.out, "train", &args)?;
    let examples = load_examples(&manifest, &stft)?;
    let phi = ConvFeatureEncoder::new(EncoderConfig::default(), args.encoder_seed)?;
    log::info!(
        "training {} parameters on {} examples for {} steps",
        model.parameter_count(),
        examples.len(),
        args.steps
    );

    let log_path = args.out.join("loss.log");
    let mut log_file = std::fs::File::create(&log_path)
        .with_context(|| format!("creating {}", log_path.display()))?;
    writeln!(log_file, "step\tloss")?;
    let save = |model: &ComplexUNet, step: u64, loss: Option<f64>, name: &str| -> Result<()> {
        let path = args.out.join(name);
        Checkpoint {
            model: model.clone(),
            stft,
            step,
            loss,
        }
        .save(&path)
        .with_context(|| format!("saving {}", path.display()))
    };

    let mut last_loss = None;
    for step in 0..args.steps {
        let batch = trainer_batch(&examples, args.batch_size, args.seed, step);
        match trainer.train_step(&mut model, &batch, &phi) {
            Ok(loss) => {
                writeln!(log_file, "{step}\t{loss:.9e}")?;
                last_loss = Some(loss);
                if step % 50 == 0 {
                    log::info!("step {step}: loss {loss:.6e}");
                }
                let done = step + 1;
                if args.checkpoint_every > 0 && done % args.checkpoint_every == 0 {
                    save(&model, done, Some(loss), &format!("model_step{done}.ckpt"))?;
                }
            }
            Err(e @ Error::NonFiniteLoss { .. }) => {
                // parameters are only updated after a finite step, so the
                // current model is the last good one
                save(&model, step, last_loss, "model_last_good.ckpt")?;
                return Err(e).context("training aborted; last good model kept");
            }
            Err(e) => return Err(e.into()),
        }
    }
    log_file.flush()?;
    save(&model, args.steps, last_loss, "model.ckpt")?;
    println!(
        "trained {} steps, final loss {}; checkpoint {}",
        args.steps,
        last_loss.map_or("n/a".to_owned(), |l| format!("{l:.6e}")),
        args.out.join("model.ckpt").display()
    );
    Ok(())
}

/// Deterministic batch for `step`: a seeded rotation through the examples.
fn trainer_batch(
    examples: &[TrainExample],
    batch: usize,
    seed: u64,
    step: u64,
) -> Vec<TrainExample> {
    let n = examples.len();
    let bs = batch.min(n);
    let offset = (seed as usize).wrapping_add(step as usize * bs) % n;
    (0..bs)
        .map(|k| examples[(offset + k) % n].clone())
        .collect()
}
