//! Named-array checkpoint container.
//!
//! Layout of a checkpoint file:
//!
//! 1. the magic line `PAIRVMC-CKPT 1\n`;
//! 2. the manifest length in bytes as a little-endian `u64`;
//! 3. the manifest, UTF-8 JSON;
//! 4. the payload: every array's values as little-endian `f64`, back to back.
//!
//! The manifest lists each array's `name`, `shape` and `offset` (in `f64`
//! elements from the start of the payload), run metadata, the payload length
//! and its SHA-256 digest. Parameter tensors are stored as `param/<name>`;
//! resumable runs also carry `adam/m`, `adam/v`, `walkers/positions` and
//! `walkers/log_prob`.

use std::io::Write;
use std::path::Path;

use pairvmc_core::optim::AdamState;
use pairvmc_core::sampler::WalkerEnsemble;
use pairvmc_core::trainer::TrainerState;
use pairvmc_core::{NetParams, Tensor};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::CliError;

pub const MAGIC: &[u8] = b"PAIRVMC-CKPT 1\n";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Meta {
    pub kind: String,
    /// Iterations completed when the checkpoint was written.
    pub iteration: u64,
    pub adam_t: u64,
    pub walker_seed: u64,
    pub sweep: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct ArrayEntry {
    name: String,
    shape: Vec<usize>,
    offset: usize,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Manifest {
    meta: Meta,
    arrays: Vec<ArrayEntry>,
    payload_len: usize,
    sha256: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub meta: Meta,
    pub arrays: Vec<(String, Tensor)>,
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

impl Checkpoint {
    pub fn array(&self, name: &str) -> Option<&Tensor> {
        self.arrays.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut payload = Vec::new();
        let mut entries = Vec::with_capacity(self.arrays.len());
        let mut offset = 0;
        for (name, t) in &self.arrays {
            entries.push(ArrayEntry {
                name: name.clone(),
                shape: t.shape().to_vec(),
                offset,
            });
            offset += t.len();
            for v in t.data() {
                payload.extend_from_slice(&v.to_le_bytes());
            }
        }
        let manifest = Manifest {
            meta: self.meta.clone(),
            arrays: entries,
            payload_len: payload.len(),
            sha256: hex(&Sha256::digest(&payload)),
        };
        let json = serde_json::to_vec(&manifest).expect("manifest serializes");
        let mut out = Vec::with_capacity(MAGIC.len() + 8 + json.len() + payload.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(json.len() as u64).to_le_bytes());
        out.extend_from_slice(&json);
        out.extend_from_slice(&payload);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, String> {
        let rest = bytes.strip_prefix(MAGIC).ok_or("bad magic line")?;
        if rest.len() < 8 {
            return Err("truncated header".into());
        }
        let (len, rest) = rest.split_at(8);
        let len = u64::from_le_bytes(len.try_into().unwrap());
        let len = usize::try_from(len)
            .ok()
            .filter(|&l| l <= rest.len())
            .ok_or("manifest length exceeds file")?;
        let (json, payload) = rest.split_at(len);
        let manifest: Manifest =
            serde_json::from_slice(json).map_err(|e| format!("manifest: {e}"))?;
        if payload.len() != manifest.payload_len || payload.len() % 8 != 0 {
            return Err(format!(
                "payload is {} bytes, manifest says {}",
                payload.len(),
                manifest.payload_len
            ));
        }
        if hex(&Sha256::digest(payload)) != manifest.sha256 {
            return Err("payload checksum mismatch".into());
        }
        let values: Vec<f64> = payload
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let mut arrays = Vec::with_capacity(manifest.arrays.len());
        for e in manifest.arrays {
            let n: usize = e.shape.iter().product();
            let data = values
                .get(e.offset..e.offset + n)
                .ok_or_else(|| format!("array {} lies outside the payload", e.name))?
                .to_vec();
            let t = Tensor::new(e.shape, data).map_err(|err| err.to_string())?;
            arrays.push((e.name, t));
        }
        Ok(Self {
            meta: manifest.meta,
            arrays,
        })
    }

    /// Writes through a temporary file and a rename, so a crash never leaves
    /// a half-written checkpoint at `path`.
    pub fn save(&self, path: &Path) -> Result<(), CliError> {
        let tmp = path.with_extension("tmp");
        let ctx = || format!("writing checkpoint {}", path.display());
        let mut f = std::fs::File::create(&tmp).map_err(CliError::io(ctx()))?;
        f.write_all(&self.to_bytes()).map_err(CliError::io(ctx()))?;
        f.sync_all().map_err(CliError::io(ctx()))?;
        std::fs::rename(&tmp, path).map_err(CliError::io(ctx()))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let bytes = std::fs::read(path).map_err(|e| CliError::Corrupt {
            path: path.to_path_buf(),
            reason: e.to_string(),
        })?;
        Self::from_bytes(&bytes).map_err(|reason| CliError::Corrupt {
            path: path.to_path_buf(),
            reason,
        })
    }

    /// Snapshot of a training run.
    pub fn from_state(kind: &str, params: &NetParams, state: &TrainerState) -> Self {
        let mut arrays: Vec<(String, Tensor)> = params
            .named_tensors()
            .into_iter()
            .map(|(n, t)| (format!("param/{n}"), t))
            .collect();
        arrays.push(("adam/m".into(), Tensor::vector(state.adam.m.clone())));
        arrays.push(("adam/v".into(), Tensor::vector(state.adam.v.clone())));
        arrays.push(("walkers/positions".into(), state.walkers.positions.clone()));
        arrays.push((
            "walkers/log_prob".into(),
            Tensor::vector(state.walkers.log_prob.clone()),
        ));
        Self {
            meta: Meta {
                kind: kind.into(),
                iteration: state.iteration,
                adam_t: state.adam.t,
                walker_seed: state.walkers.seed,
                sweep: state.walkers.sweep,
            },
            arrays,
        }
    }

    /// Copies the stored parameters into `params`, checking names and
    /// shapes against its layout.
    pub fn restore_params(&self, params: &mut NetParams) -> Result<(), CliError> {
        let named: Vec<(String, Tensor)> = self
            .arrays
            .iter()
            .filter_map(|(n, t)| n.strip_prefix("param/").map(|n| (n.to_string(), t.clone())))
            .collect();
        if named.len() != params.entries().len() {
            return Err(CliError::Shape(format!(
                "checkpoint holds {} parameter tensors, model has {}",
                named.len(),
                params.entries().len()
            )));
        }
        params
            .assign_named(&named)
            .map_err(|e| CliError::Shape(e.to_string()))
    }

    /// Rebuilds the full training state; `params` must already hold the
    /// restored parameters.
    pub fn restore_state(&self, params: &NetParams, dn: usize) -> Result<TrainerState, CliError> {
        let need = |name: &str| {
            self.array(name)
                .ok_or_else(|| CliError::Shape(format!("checkpoint has no '{name}' array")))
        };
        let m = need("adam/m")?;
        let v = need("adam/v")?;
        let pos = need("walkers/positions")?;
        let lp = need("walkers/log_prob")?;
        let p = params.len();
        if m.len() != p || v.len() != p {
            return Err(CliError::Shape(format!(
                "optimizer state has {} entries, model has {p}",
                m.len()
            )));
        }
        if pos.shape().len() != 2 || pos.shape()[1] != dn || lp.len() != pos.shape()[0] {
            return Err(CliError::Shape(format!(
                "walker array {:?} does not fit {dn} coordinates per walker",
                pos.shape()
            )));
        }
        Ok(TrainerState {
            theta: params.data.clone(),
            adam: AdamState {
                m: m.data().to_vec(),
                v: v.data().to_vec(),
                t: self.meta.adam_t,
            },
            walkers: WalkerEnsemble {
                positions: pos.clone(),
                log_prob: lp.data().to_vec(),
                seed: self.meta.walker_seed,
                sweep: self.meta.sweep,
            },
            iteration: self.meta.iteration,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Checkpoint {
        Checkpoint {
            meta: Meta {
                kind: "fermi".into(),
                iteration: 7,
                adam_t: 7,
                walker_seed: 3,
                sweep: 70,
            },
            arrays: vec![
                (
                    "a".into(),
                    Tensor::matrix(2, 2, vec![1.0, -0.0, f64::MIN_POSITIVE, 1e300]).unwrap(),
                ),
                ("b".into(), Tensor::vector(vec![f64::NAN, 0.1])),
            ],
        }
    }

    #[test]
    fn bytes_round_trip_bit_exactly() {
        let c = sample();
        let back = Checkpoint::from_bytes(&c.to_bytes()).unwrap();
        assert_eq!(back.meta, c.meta);
        for ((n1, t1), (n2, t2)) in c.arrays.iter().zip(&back.arrays) {
            assert_eq!(n1, n2);
            assert_eq!(t1.shape(), t2.shape());
            let bits = |t: &Tensor| t.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
            assert_eq!(bits(t1), bits(t2));
        }
    }

    #[test]
    fn payload_is_little_endian_after_the_manifest() {
        let bytes = sample().to_bytes();
        let len =
            u64::from_le_bytes(bytes[MAGIC.len()..MAGIC.len() + 8].try_into().unwrap()) as usize;
        let start = MAGIC.len() + 8 + len;
        assert_eq!(&bytes[start..start + 8], &1.0f64.to_le_bytes());
        assert_eq!(bytes.len() - start, 6 * 8);
    }

    #[test]
    fn corruption_is_detected() {
        let bytes = sample().to_bytes();
        let mut flipped = bytes.clone();
        *flipped.last_mut().unwrap() ^= 1;
        assert!(Checkpoint::from_bytes(&flipped)
            .unwrap_err()
            .contains("checksum"));
        assert!(Checkpoint::from_bytes(&bytes[..bytes.len() - 3]).is_err());
        assert!(Checkpoint::from_bytes(b"not a checkpoint").is_err());
        let mut bad_len = bytes;
        bad_len[MAGIC.len() + 1] ^= 0x40;
        assert!(Checkpoint::from_bytes(&bad_len).is_err());
    }
}
