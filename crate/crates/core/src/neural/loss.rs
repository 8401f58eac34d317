use serde::{Deserialize, Serialize};

use super::encoder::{FeatureEncoder, FeatureMap};
use crate::error::{Error, Result};
use crate::signal::AudioClip;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LossKind {
    Mse,
    Perceptual,
}

impl std::str::FromStr for LossKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mse" => Ok(LossKind::Mse),
            "perceptual" | "pl" => Ok(LossKind::Perceptual),
            other => Err(Error::InvalidModel(format!("unknown loss kind {other:?}"))),
        }
    }
}

impl std::fmt::Display for LossKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            LossKind::Mse => "mse",
            LossKind::Perceptual => "perceptual",
        })
    }
}

fn check_lengths(y: &[f64], y_hat: &[f64]) -> Result<()> {
    if y.len() != y_hat.len() {
        return Err(Error::LengthMismatch {
            expected: y.len(),
            actual: y_hat.len(),
        });
    }
    if y.is_empty() {
        return Err(Error::InvalidClip("loss of empty signals".into()));
    }
    Ok(())
}

/// Mean squared sample difference.
pub fn mse_loss(y: &AudioClip, y_hat: &AudioClip) -> Result<f64> {
    mse_with_grad(y.samples(), y_hat.samples()).map(|(l, _)| l)
}

pub(crate) fn mse_with_grad(y: &[f64], y_hat: &[f64]) -> Result<(f64, Vec<f64>)> {
    check_lengths(y, y_hat)?;
    let n = y.len() as f64;
    let loss = y
        .iter()
        .zip(y_hat)
        .map(|(a, b)| (b - a).powi(2))
        .sum::<f64>()
        / n;
    let grad = y
        .iter()
        .zip(y_hat)
        .map(|(a, b)| 2.0 * (b - a) / n)
        .collect();
    Ok((loss, grad))
}

/// Mean absolute difference over all `channels x length` feature cells.
pub fn perceptual_loss_from_features(a: &FeatureMap, b: &FeatureMap) -> Result<f64> {
    if a.channels != b.channels || a.length != b.length {
        return Err(Error::Dimension(format!(
            "features {}x{} vs {}x{}",
            a.channels, a.length, b.channels, b.length
        )));
    }
    if a.data.is_empty() {
        return Err(Error::Dimension("empty feature maps".into()));
    }
    let sum: f64 = a.data.iter().zip(&b.data).map(|(x, y)| (x - y).abs()).sum();
    Ok(sum / a.data.len() as f64)
}

/// Feature-space L1 distance under the frozen encoder `phi`.
pub fn perceptual_loss(y: &AudioClip, y_hat: &AudioClip, phi: &dyn FeatureEncoder) -> Result<f64> {
    check_lengths(y.samples(), y_hat.samples())?;
    perceptual_loss_from_features(&phi.encode(y.samples())?, &phi.encode(y_hat.samples())?)
}

pub(crate) fn perceptual_with_grad(
    y: &[f64],
    y_hat: &[f64],
    phi: &dyn FeatureEncoder,
) -> Result<(f64, Vec<f64>)> {
    check_lengths(y, y_hat)?;
    let fy = phi.encode(y)?;
    let fh = phi.encode(y_hat)?;
    let loss = perceptual_loss_from_features(&fy, &fh)?;
    let n = fh.data.len() as f64;
    let dfeat = fh
        .data
        .iter()
        .zip(&fy.data)
        .map(|(h, c)| {
            let d = h - c;
            if d > 0.0 {
                1.0 / n
            } else if d < 0.0 {
                -1.0 / n
            } else {
                0.0
            }
        })
        .collect();
    let grad = phi.encode_backward(y_hat, &FeatureMap::new(fh.channels, fh.length, dfeat)?)?;
    Ok((loss, grad))
}

pub(crate) fn loss_with_grad(
    kind: LossKind,
    y: &[f64],
    y_hat: &[f64],
    phi: &dyn FeatureEncoder,
) -> Result<(f64, Vec<f64>)> {
    match kind {
        LossKind::Mse => mse_with_grad(y, y_hat),
        LossKind::Perceptual => perceptual_with_grad(y, y_hat, phi),
    }
}
