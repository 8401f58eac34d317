use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use realfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::encoder::FeatureEncoder;
use super::loss::{loss_with_grad, LossKind};
use super::optim::Adam;
use super::unet::{apply_mask, ComplexUNet, Gradients};
use crate::energy::{FrameRange, IntermittentClip};
use crate::error::{Error, Result};
use crate::recovery::combine;
use crate::signal::{istft, istft_adjoint, AudioClip, ComplexSpectrogram};

/// Which waveform the loss is measured on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LossRegion {
    /// The raw network output.
    #[default]
    Full,
    /// The output after indicator combination with the recorded samples,
    /// so only samples inside null segments carry gradient.
    Nulls,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub steps: u64,
    pub batch_size: usize,
    pub seed: u64,
    pub loss: LossKind,
    #[serde(default)]
    pub region: LossRegion,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            steps: 1000,
            batch_size: 4,
            seed: 0,
            loss: LossKind::Mse,
            region: LossRegion::Full,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate.is_finite() && self.learning_rate >= 0.0) {
            return Err(Error::InvalidModel(format!(
                "learning rate {} must be finite and non-negative",
                self.learning_rate
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidModel("batch size must be positive".into()));
        }
        Ok(())
    }
}

/// One training pair: the interpolated spectrogram of an intermittent
/// recording and the clean waveform it should become.
#[derive(Debug, Clone)]
pub struct TrainExample {
    spec: ComplexSpectrogram,
    null_ranges: Vec<FrameRange>,
    intermittent: IntermittentClip,
    clean: AudioClip,
}

impl TrainExample {
    pub fn new(
        spec: ComplexSpectrogram,
        null_ranges: Vec<FrameRange>,
        intermittent: IntermittentClip,
        clean: AudioClip,
    ) -> Result<Self> {
        if spec.original_len() != clean.len() || intermittent.len() != clean.len() {
            return Err(Error::LengthMismatch {
                expected: clean.len(),
                actual: if spec.original_len() != clean.len() {
                    spec.original_len()
                } else {
                    intermittent.len()
                },
            });
        }
        if intermittent.clip().sample_rate() != clean.sample_rate() {
            return Err(Error::RateMismatch(
                clean.sample_rate(),
                intermittent.clip().sample_rate(),
            ));
        }
        Ok(Self {
            spec,
            null_ranges,
            intermittent,
            clean,
        })
    }

    pub fn spec(&self) -> &ComplexSpectrogram {
        &self.spec
    }

    /// Frame ranges that were filled by interpolation.
    pub fn null_ranges(&self) -> &[FrameRange] {
        &self.null_ranges
    }

    pub fn intermittent(&self) -> &IntermittentClip {
        &self.intermittent
    }

    pub fn clean(&self) -> &AudioClip {
        &self.clean
    }
}

/// Loss of one example and the gradient of every parameter.
pub fn loss_and_gradients(
    model: &ComplexUNet,
    example: &TrainExample,
    kind: LossKind,
    region: LossRegion,
    phi: &dyn FeatureEncoder,
) -> Result<(f64, Gradients)> {
    let spec = &example.spec;
    let (frames, bins) = (spec.frames(), spec.bins());
    let cache = model.forward_cached(spec)?;
    let mask = model.mask_from_cache(&cache, frames, bins);
    let y_hat = istft(&apply_mask(spec, &mask)?)?;
    let (loss, mut grad_y) = match region {
        LossRegion::Full => loss_with_grad(kind, example.clean.samples(), y_hat.samples(), phi)?,
        LossRegion::Nulls => {
            let combined = combine(&example.intermittent, &y_hat)?;
            let (loss, mut g) =
                loss_with_grad(kind, example.clean.samples(), combined.samples(), phi)?;
            for (gv, null) in g.iter_mut().zip(example.intermittent.null_mask()) {
                if !null {
                    *gv = 0.0;
                }
            }
            (loss, g)
        }
    };
    if !loss.is_finite() {
        return Err(Error::NonFiniteLoss {
            step: 0,
            detail: format!("loss evaluated to {loss}"),
        });
    }
    grad_y.truncate(spec.original_len());
    let grad_spec = istft_adjoint(spec, &grad_y)?;
    // d(S*M)/dM pulled back: dL/dM = dL/dY * conj(S)
    let grad_mask: Vec<Complex64> = grad_spec
        .iter()
        .zip(spec.data())
        .map(|(g, s)| g * s.conj())
        .collect();
    let grads = model.backward(&cache, &grad_mask, frames, bins)?;
    Ok((loss, grads))
}

/// Owns the optimizer state for one model.
#[derive(Debug, Clone)]
pub struct Trainer {
    config: TrainConfig,
    optimizer: Adam,
    step: u64,
}

impl Trainer {
    pub fn new(config: TrainConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            optimizer: Adam::new(config.learning_rate),
            config,
            step: 0,
        })
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    /// Mean loss and gradient over `batch`, one Adam update; returns the
    /// loss measured before the update.
    pub fn train_step(
        &mut self,
        model: &mut ComplexUNet,
        batch: &[TrainExample],
        phi: &dyn FeatureEncoder,
    ) -> Result<f64> {
        let refs: Vec<&TrainExample> = batch.iter().collect();
        self.step_on(model, &refs, phi)
    }

    fn step_on(
        &mut self,
        model: &mut ComplexUNet,
        batch: &[&TrainExample],
        phi: &dyn FeatureEncoder,
    ) -> Result<f64> {
        if batch.is_empty() {
            return Err(Error::InvalidModel("empty training batch".into()));
        }
        let (kind, region) = (self.config.loss, self.config.region);
        let shared: &ComplexUNet = model;
        let results: Vec<_> = batch
            .par_iter()
            .map(|ex| loss_and_gradients(shared, ex, kind, region, phi))
            .collect();
        let step = self.step;
        let mut total = 0.0;
        let mut grads = model.zero_gradients();
        // summed in batch order so the result does not depend on scheduling
        for r in results {
            let (loss, g) = r.map_err(|e| match e {
                Error::NonFiniteLoss { detail, .. } => Error::NonFiniteLoss { step, detail },
                other => other,
            })?;
            total += loss;
            grads.add_assign(&g);
        }
        let n = batch.len() as f64;
        grads.scale(1.0 / n);
        let loss = total / n;
        if grads
            .slices()
            .iter()
            .any(|s| s.iter().any(|v| !v.is_finite()))
        {
            return Err(Error::NonFiniteLoss {
                step,
                detail: "gradient contains non-finite values".into(),
            });
        }
        self.optimizer
            .update(model.parameters_mut(), &grads.slices());
        self.step += 1;
        Ok(loss)
    }

    /// Runs `config.steps` steps, cycling through `examples` in batches.
    /// `on_step` sees the step index and pre-update loss; returning `false`
    /// stops early.
    pub fn fit(
        &mut self,
        model: &mut ComplexUNet,
        examples: &[TrainExample],
        phi: &dyn FeatureEncoder,
        mut on_step: impl FnMut(u64, f64) -> bool,
    ) -> Result<Vec<f64>> {
        if examples.is_empty() {
            return Err(Error::InvalidModel("no training examples".into()));
        }
        let bs = self.config.batch_size.min(examples.len());
        let mut order: Vec<usize> = (0..examples.len()).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(self.config.seed);
        let mut cursor = examples.len();
        let mut losses = Vec::new();
        for i in 0..self.config.steps {
            if cursor + bs > order.len() {
                order.shuffle(&mut rng);
                cursor = 0;
            }
            let batch: Vec<&TrainExample> = order[cursor..cursor + bs]
                .iter()
                .map(|&k| &examples[k])
                .collect();
            cursor += bs;
            let loss = self.step_on(model, &batch, phi)?;
            losses.push(loss);
            if !on_step(i, loss) {
                break;
            }
        }
        Ok(losses)
    }
}
