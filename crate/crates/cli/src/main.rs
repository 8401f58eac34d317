mod config;
mod corrupt;
mod evaluate;
mod plot;
mod recover;
mod train;

use std::process::ExitCode;

use clap::{Parser, Subcommand};

#[derive(Parser, Debug)]
#[command(name = "isr", version, about = "Intermittent speech recovery toolkit")]
struct Cli {
    /// Worker threads for per-utterance work (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Simulate energy-harvesting power loss over a manifest of clean clips.
    Corrupt(corrupt::CorruptArgs),
    /// Interpolate (and optionally enhance) corrupted clips.
    Recover(recover::RecoverArgs),
    /// Train the enhancement network on corrupted/clean pairs.
    Train(train::TrainArgs),
    /// Score processed clips against their clean sources.
    Evaluate(evaluate::EvaluateArgs),
    /// Dump waveform and spectrogram data for clips.
    Plot(plot::PlotArgs),
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
        {
            log::warn!("could not size the thread pool: {e}");
        }
    }
    let result = match cli.command {
        Command::Corrupt(a) => corrupt::run(a),
        Command::Recover(a) => recover::run(a),
        Command::Train(a) => train::run(a),
        Command::Evaluate(a) => evaluate::run(a),
        Command::Plot(a) => plot::run(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
