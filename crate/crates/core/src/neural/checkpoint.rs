//! Binary model checkpoints.
//!
//! Layout: 8-byte magic, `u32` format version, `u64` header length, a JSON
//! header, `u64` parameter count, then every parameter as little-endian
//! `f64` in [`ComplexUNet::parameters`] order. Raw bit patterns are stored,
//! so a save/load round trip is bitwise exact.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::unet::{ComplexUNet, UNetConfig};
use crate::error::{Error, Result};
use crate::signal::StftConfig;

const MAGIC: &[u8; 8] = b"ISRMODEL";
const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub unet: UNetConfig,
    pub seed: u64,
    pub stft: StftConfig,
    pub step: u64,
    pub loss: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub model: ComplexUNet,
    pub stft: StftConfig,
    pub step: u64,
    pub loss: Option<f64>,
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let header = serde_json::to_vec(&CheckpointHeader {
            unet: self.model.config().clone(),
            seed: self.model.seed(),
            stft: self.stft,
            step: self.step,
            loss: self.loss,
        })?;
        let params = self.model.parameters();
        let count: usize = params.iter().map(|p| p.len()).sum();
        let mut out = Vec::with_capacity(28 + header.len() + 8 * count);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(header.len() as u64).to_le_bytes());
        out.extend_from_slice(&header);
        out.extend_from_slice(&(count as u64).to_le_bytes());
        for v in params.iter().flat_map(|p| p.iter()) {
            out.extend_from_slice(&v.to_bits().to_le_bytes());
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = bytes;
        let mut magic = [0u8; 8];
        read_exact(&mut r, &mut magic)?;
        if &magic != MAGIC {
            return Err(Error::Checkpoint("not a model checkpoint".into()));
        }
        let version = u32::from_le_bytes(take(&mut r)?);
        if version != VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported checkpoint version {version}"
            )));
        }
        let hlen = u64::from_le_bytes(take(&mut r)?) as usize;
        if hlen > r.len() {
            return Err(Error::Checkpoint("truncated header".into()));
        }
        let header: CheckpointHeader = serde_json::from_slice(&r[..hlen])
            .map_err(|e| Error::Checkpoint(format!("bad header: {e}")))?;
        r = &r[hlen..];
        let count = u64::from_le_bytes(take(&mut r)?) as usize;
        let mut model = ComplexUNet::zeros(header.unet, header.seed)?;
        if count != model.parameter_count() {
            return Err(Error::Checkpoint(format!(
                "{count} stored parameters, configuration needs {}",
                model.parameter_count()
            )));
        }
        if r.len() != 8 * count {
            return Err(Error::Checkpoint(format!(
                "expected {} parameter bytes, found {}",
                8 * count,
                r.len()
            )));
        }
        let mut values = r
            .chunks_exact(8)
            .map(|c| f64::from_bits(u64::from_le_bytes(c.try_into().expect("8 bytes"))));
        for slot in model
            .parameters_mut()
            .into_iter()
            .flat_map(|p| p.iter_mut())
        {
            *slot = values.next().expect("count checked");
        }
        Ok(Self {
            model,
            stft: header.stft,
            step: header.step,
            loss: header.loss,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let bytes = self.to_bytes()?;
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(&bytes).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut bytes = Vec::new();
        std::fs::File::open(path)
            .and_then(|mut f| f.read_to_end(&mut bytes))
            .map_err(|e| match e.kind() {
                std::io::ErrorKind::NotFound => Error::MissingFile(path.to_path_buf()),
                _ => Error::io(path, e),
            })?;
        Self::from_bytes(&bytes)
    }
}

fn read_exact(r: &mut &[u8], buf: &mut [u8]) -> Result<()> {
    r.read_exact(buf)
        .map_err(|_| Error::Checkpoint("truncated checkpoint".into()))
}

fn take<const N: usize>(r: &mut &[u8]) -> Result<[u8; N]> {
    let mut buf = [0u8; N];
    read_exact(r, &mut buf)?;
    Ok(buf)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Checkpoint {
        let mut model = ComplexUNet::new(
            UNetConfig {
                channels: vec![2, 4],
                kernel: [3, 3],
                ..UNetConfig::default()
            },
            11,
        )
        .unwrap();
        // awkward values survive too
        model.parameters_mut()[0][0] = -0.0;
        model.parameters_mut()[0][1] = f64::MIN_POSITIVE / 3.0;
        Checkpoint {
            model,
            stft: StftConfig::default(),
            step: 42,
            loss: Some(0.125),
        }
    }

    #[test]
    fn round_trip_is_bitwise() {
        let ck = sample();
        let back = Checkpoint::from_bytes(&ck.to_bytes().unwrap()).unwrap();
        let bits = |c: &Checkpoint| -> Vec<u64> {
            c.model
                .parameters()
                .iter()
                .flat_map(|p| p.iter().map(|v| v.to_bits()))
                .collect()
        };
        assert_eq!(bits(&ck), bits(&back));
        assert_eq!(back.step, 42);
        assert_eq!(back.stft, ck.stft);
        assert_eq!(back.model.config(), ck.model.config());
        assert_eq!(back.model.seed(), 11);
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        let ck = sample();
        ck.save(&path).unwrap();
        assert_eq!(Checkpoint::load(&path).unwrap(), ck);
        assert!(matches!(
            Checkpoint::load(&dir.path().join("none")),
            Err(Error::MissingFile(_))
        ));
    }

    #[test]
    fn corrupt_inputs_rejected() {
        let bytes = sample().to_bytes().unwrap();
        assert!(Checkpoint::from_bytes(&bytes[..bytes.len() - 1]).is_err());
        assert!(Checkpoint::from_bytes(&bytes[..10]).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(Checkpoint::from_bytes(&bad).is_err());
        let mut v2 = bytes;
        v2[8] = 2;
        assert!(Checkpoint::from_bytes(&v2).is_err());
    }
}
