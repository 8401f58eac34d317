//! Dataset plumbing: manifests, corruption plans, and the JSON sidecars that
//! record where each corrupted utterance lost power.
//!
//! Layout written by [`generate_corruptions`] into `out_dir`:
//!
//! ```text
//! manifest.csv              id,path,transcript,split (paths relative to out_dir)
//! <id>_<power>mW.wav        16-bit mono, zeros inside null segments
//! <id>_<power>mW.json       NullSidecar for the WAV next to it
//! ```

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::energy::{
    apply_intermittency, duty_cycle, EnergyHarvestConfig, IntermittentClip, NullSegment,
};
use crate::error::{Error, Result};
use crate::signal::{load_wav, save_wav, AudioClip};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestRecord {
    pub id: String,
    pub path: PathBuf,
    /// Path of a transcript file (`id text` per line) covering this utterance.
    #[serde(default, deserialize_with = "empty_as_none")]
    pub transcript: Option<PathBuf>,
    #[serde(default, deserialize_with = "empty_as_none")]
    pub split: Option<String>,
}

fn empty_as_none<'de, D, T>(d: D) -> std::result::Result<Option<T>, D::Error>
where
    D: serde::Deserializer<'de>,
    T: From<String>,
{
    let s: Option<String> = Option::deserialize(d)?;
    Ok(s.filter(|s| !s.trim().is_empty()).map(T::from))
}

/// Utterance list. Relative paths are resolved against the manifest's
/// directory when loading.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Manifest {
    pub records: Vec<ManifestRecord>,
}

impl Manifest {
    pub fn new(records: Vec<ManifestRecord>) -> Result<Self> {
        let mut seen = BTreeSet::new();
        for r in &records {
            if r.id.trim().is_empty() {
                return Err(Error::Manifest("empty utterance id".into()));
            }
            if !seen.insert(r.id.as_str()) {
                return Err(Error::Manifest(format!(
                    "duplicate utterance id {:?}",
                    r.id
                )));
            }
        }
        Ok(Self { records })
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&ManifestRecord> {
        self.records.iter().find(|r| r.id == id)
    }

    /// Reads a manifest and checks that every referenced file exists.
    pub fn load(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Err(Error::MissingFile(path.to_path_buf()));
        }
        let base = path.parent().unwrap_or(Path::new(""));
        let mut reader = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_path(path)
            .map_err(|e| Error::Manifest(format!("{}: {e}", path.display())))?;
        let mut records = Vec::new();
        for row in reader.deserialize::<ManifestRecord>() {
            let mut r = row.map_err(|e| Error::Manifest(format!("{}: {e}", path.display())))?;
            r.path = existing_file(base, &r.path)?;
            r.transcript = r.transcript.map(|t| existing_file(base, &t)).transpose()?;
            records.push(r);
        }
        Self::new(records)
    }

    /// Writes the manifest; paths under `path`'s directory are stored
    /// relative to it.
    pub fn save(&self, path: &Path) -> Result<()> {
        let base = path.parent().unwrap_or(Path::new(""));
        let mut w = csv::Writer::from_path(path).map_err(|e| Error::Manifest(e.to_string()))?;
        w.write_record(["id", "path", "transcript", "split"])
            .map_err(|e| Error::Manifest(e.to_string()))?;
        for r in &self.records {
            let rel = |p: &Path| {
                p.strip_prefix(base)
                    .unwrap_or(p)
                    .to_string_lossy()
                    .into_owned()
            };
            w.write_record([
                r.id.clone(),
                rel(&r.path),
                r.transcript.as_deref().map(rel).unwrap_or_default(),
                r.split.clone().unwrap_or_default(),
            ])
            .map_err(|e| Error::Manifest(e.to_string()))?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

/// Absolute path of `p` (relative to `base`), which must be a file.
fn existing_file(base: &Path, p: &Path) -> Result<PathBuf> {
    let joined = if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    };
    if !joined.is_file() {
        return Err(Error::MissingFile(joined));
    }
    joined.canonicalize().map_err(|e| Error::io(&joined, e))
}

/// Energy grid and device constants for one corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorruptionPlan {
    pub name: String,
    /// Harvested source powers in milliwatts.
    pub powers_mw: Vec<f64>,
    /// Device constants; the source power is replaced per grid value.
    pub device: EnergyHarvestConfig,
    pub seed: u64,
    /// Powers that must not appear in the grid (mismatched train/test).
    #[serde(default)]
    pub excluded_mw: Vec<f64>,
}

impl CorruptionPlan {
    pub fn validate(&self) -> Result<()> {
        if self.powers_mw.is_empty() {
            return Err(Error::InvalidEnergyConfig("empty energy grid".into()));
        }
        for &p in &self.powers_mw {
            if !(p.is_finite() && p > 0.0) {
                return Err(Error::InvalidEnergyConfig(format!(
                    "grid value {p} mW must be positive"
                )));
            }
            if self.excluded_mw.iter().any(|&e| (e - p).abs() < 1e-9) {
                return Err(Error::InvalidEnergyConfig(format!(
                    "grid value {p} mW is excluded from plan {:?}",
                    self.name
                )));
            }
        }
        self.device
            .with_source_power(self.powers_mw[0] / 1000.0)
            .validate()
    }

    pub fn device_at(&self, power_mw: f64) -> EnergyHarvestConfig {
        self.device.with_source_power(power_mw / 1000.0)
    }
}

/// Training grid 1.5-5.5 mW in 0.25 mW steps without the four testing
/// values, and the testing grid 2, 3, 4, 5 mW.
pub fn default_plans(seed: u64) -> (CorruptionPlan, CorruptionPlan) {
    let device = EnergyHarvestConfig::microphone(0.0);
    let test: Vec<f64> = vec![2.0, 3.0, 4.0, 5.0];
    let train: Vec<f64> = (6..=22u32)
        .filter(|k| k % 4 != 0)
        .map(|k| k as f64 / 4.0)
        .collect();
    (
        CorruptionPlan {
            name: "train".into(),
            powers_mw: train,
            device,
            seed,
            excluded_mw: test.clone(),
        },
        CorruptionPlan {
            name: "test".into(),
            powers_mw: test,
            device,
            seed,
            excluded_mw: Vec::new(),
        },
    )
}

/// Null-segment record stored next to each corrupted WAV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NullSidecar {
    pub source_id: String,
    pub clean_path: PathBuf,
    pub sample_rate: u32,
    pub total_samples: usize,
    pub nulls: Vec<NullSegment>,
    pub source_power_mw: f64,
    /// Seconds into the on/off cycle at the first sample.
    pub phase_s: f64,
    pub seed: u64,
}

impl NullSidecar {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => Error::MissingFile(path.to_path_buf()),
            _ => Error::io(path, e),
        })?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }
}

/// Schedule phase seed: first 8 bytes of `sha256("{seed}:{id}:{power_mw:.2}")`
/// read as a little-endian `u64`.
pub fn phase_seed(seed: u64, id: &str, power_mw: f64) -> u64 {
    let digest = Sha256::digest(format!("{seed}:{id}:{power_mw:.2}").as_bytes());
    u64::from_le_bytes(digest[..8].try_into().expect("32-byte digest"))
}

pub fn corrupted_stem(id: &str, power_mw: f64) -> String {
    format!("{id}_{power_mw:.2}mW")
}

/// Sidecar path belonging to a corrupted WAV.
pub fn sidecar_path(wav: &Path) -> PathBuf {
    wav.with_extension("json")
}

#[derive(Debug)]
pub struct CorruptionFailure {
    pub id: String,
    pub power_mw: Option<f64>,
    pub error: Error,
}

#[derive(Debug)]
pub struct CorruptionSummary {
    pub manifest: Manifest,
    pub failures: Vec<CorruptionFailure>,
}

/// Corrupts one clip at one grid value.
pub fn corrupt_clip(
    clean: &AudioClip,
    id: &str,
    plan: &CorruptionPlan,
    power_mw: f64,
) -> Result<(IntermittentClip, f64)> {
    let duty = duty_cycle(&plan.device_at(power_mw))?;
    let phase = crate::energy::seeded_phase(&duty, phase_seed(plan.seed, id, power_mw));
    let clip = apply_intermittency(clean, &duty, Some(phase), 0)?;
    Ok((clip, phase))
}

/// Writes one corrupted WAV and sidecar per (utterance, grid value). Records
/// that fail are reported and skipped; the rest are still written.
pub fn generate_corruptions(
    manifest: &Manifest,
    plan: &CorruptionPlan,
    out_dir: &Path,
) -> Result<CorruptionSummary> {
    plan.validate()?;
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    type Outcome = std::result::Result<ManifestRecord, CorruptionFailure>;
    let results: Vec<Vec<Outcome>> = manifest
        .records
        .par_iter()
        .map(|rec| {
            let clean = match load_wav(&rec.path) {
                Ok(c) => c,
                Err(error) => {
                    return vec![Err(CorruptionFailure {
                        id: rec.id.clone(),
                        power_mw: None,
                        error,
                    })]
                }
            };
            plan.powers_mw
                .iter()
                .map(|&p| {
                    write_one(rec, &clean, plan, p, out_dir).map_err(|error| CorruptionFailure {
                        id: rec.id.clone(),
                        power_mw: Some(p),
                        error,
                    })
                })
                .collect()
        })
        .collect();
    let mut records = Vec::new();
    let mut failures = Vec::new();
    for r in results.into_iter().flatten() {
        match r {
            Ok(rec) => records.push(rec),
            Err(f) => {
                log::error!("corrupting {} failed: {}", f.id, f.error);
                failures.push(f);
            }
        }
    }
    let manifest = Manifest::new(records)?;
    manifest.save(&out_dir.join("manifest.csv"))?;
    Ok(CorruptionSummary { manifest, failures })
}

fn write_one(
    rec: &ManifestRecord,
    clean: &AudioClip,
    plan: &CorruptionPlan,
    power_mw: f64,
    out_dir: &Path,
) -> Result<ManifestRecord> {
    let (clip, phase) = corrupt_clip(clean, &rec.id, plan, power_mw)?;
    let stem = corrupted_stem(&rec.id, power_mw);
    let wav = out_dir.join(format!("{stem}.wav"));
    save_wav(clip.clip(), &wav)?;
    NullSidecar {
        source_id: rec.id.clone(),
        clean_path: rec.path.clone(),
        sample_rate: clean.sample_rate(),
        total_samples: clean.len(),
        nulls: clip.nulls().to_vec(),
        source_power_mw: power_mw,
        phase_s: phase,
        seed: plan.seed,
    }
    .save(&sidecar_path(&wav))?;
    Ok(ManifestRecord {
        id: stem,
        path: wav,
        transcript: rec.transcript.clone(),
        split: rec.split.clone().or_else(|| Some(plan.name.clone())),
    })
}

/// Rebuilds an intermittent clip from a WAV and its sidecar, verifying that
/// the two agree.
pub fn load_intermittent(wav_path: &Path, sidecar: &Path) -> Result<IntermittentClip> {
    let clip = load_wav(wav_path)?;
    let meta = NullSidecar::load(sidecar)?;
    if clip.len() != meta.total_samples || clip.sample_rate() != meta.sample_rate {
        return Err(Error::Integrity(format!(
            "{}: {} samples at {} Hz, sidecar says {} at {} Hz",
            wav_path.display(),
            clip.len(),
            clip.sample_rate(),
            meta.total_samples,
            meta.sample_rate
        )));
    }
    IntermittentClip::new(clip, meta.nulls)
        .map_err(|e| Error::Integrity(format!("{}: {e}", wav_path.display())))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_grids() {
        let (train, test) = default_plans(0);
        assert_eq!(train.powers_mw.len(), 13);
        assert_eq!(test.powers_mw.len(), 4);
        assert_eq!(train.powers_mw[0], 1.5);
        assert_eq!(*train.powers_mw.last().unwrap(), 5.5);
        for p in &test.powers_mw {
            assert!(!train.powers_mw.contains(p));
        }
        train.validate().unwrap();
        test.validate().unwrap();
        assert_eq!(train.device.capacitance, 200e-6);
        assert_eq!(test.device.load_power, 5.6e-3);
    }

    #[test]
    fn excluded_values_rejected() {
        let (mut train, _) = default_plans(0);
        train.powers_mw.push(3.0);
        assert!(train.validate().is_err());
    }

    #[test]
    fn phase_seed_is_stable() {
        assert_eq!(phase_seed(1, "a", 2.0), phase_seed(1, "a", 2.0));
        assert_ne!(phase_seed(1, "a", 2.0), phase_seed(2, "a", 2.0));
        assert_ne!(phase_seed(1, "a", 2.0), phase_seed(1, "a", 3.0));
        assert_eq!(corrupted_stem("p1", 1.75), "p1_1.75mW");
    }

    #[test]
    fn duplicate_ids_rejected() {
        let r = ManifestRecord {
            id: "x".into(),
            path: "x.wav".into(),
            transcript: None,
            split: None,
        };
        assert!(Manifest::new(vec![r.clone(), r]).is_err());
    }
}
