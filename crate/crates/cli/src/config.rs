use std::path::Path;

use anyhow::{Context, Result};
use serde::Serialize;

use isr_core::signal::{StftConfig, Window};

pub const CONFIG_FILE: &str = "run_config.toml";

#[derive(Serialize)]
struct Echo<'a, T: Serialize> {
    command: &'a str,
    version: &'a str,
    #[serde(flatten)]
    args: &'a T,
}

/// Writes the exact parameters of a run next to its outputs.
pub fn echo<T: Serialize>(out_dir: &Path, command: &str, args: &T) -> Result<()> {
    std::fs::create_dir_all(out_dir).with_context(|| format!("creating {}", out_dir.display()))?;
    let text = toml::to_string_pretty(&Echo {
        command,
        version: env!("CARGO_PKG_VERSION"),
        args,
    })
    .context("serialising run configuration")?;
    let path = out_dir.join(CONFIG_FILE);
    std::fs::write(&path, text).with_context(|| format!("writing {}", path.display()))
}

#[derive(clap::Args, Debug, Clone, Serialize)]
pub struct StftArgs {
    /// STFT window length in samples.
    #[arg(long, default_value_t = 512)]
    pub window: usize,
    /// STFT hop in samples.
    #[arg(long, default_value_t = 128)]
    pub hop: usize,
}

impl StftArgs {
    pub fn config(&self) -> Result<StftConfig> {
        StftConfig::new(self.window, self.hop, Window::Hann).context("invalid STFT parameters")
    }
}
