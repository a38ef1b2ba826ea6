//! Versioned JSON checkpoint. Layout:
//!
//! ```text
//! {
//!   "format": "dgforecast-checkpoint",
//!   "version": 1,
//!   "arch": { "layers": N_L, "hidden": H_L, "lag": δ },
//!   "quantiles": [α, ...],
//!   "normalization": { "min": f64, "max": f64 },
//!   "lstm": [ { "w_x": T, "w_h": T, "w_c": T, "b": T }, ... ],
//!   "head": { "w": T, "b": T }
//! }
//! T = { "shape": [usize, ...], "data": [f64, ...] }   (row-major)
//! ```
//!
//! Floats are written in shortest round-trip form and parsed with correct
//! rounding, so save → load is bit-exact.

use std::path::Path;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{validate_levels, Architecture, ForecasterParams};
use crate::error::{Error, Result};
use crate::numkernel::{DenseParams, LstmLayerParams};
use crate::pipeline::MinMax;

pub const CHECKPOINT_FORMAT: &str = "dgforecast-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub params: ForecasterParams,
    pub quantiles: Vec<f64>,
    pub normalization: MinMax,
}

#[derive(Serialize, Deserialize)]
struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    fn matrix(a: &Array2<f64>) -> Self {
        Self {
            shape: a.shape().to_vec(),
            data: a.iter().copied().collect(),
        }
    }

    fn vector(a: &Array1<f64>) -> Self {
        Self {
            shape: vec![a.len()],
            data: a.to_vec(),
        }
    }

    fn into_matrix(self, name: &str) -> Result<Array2<f64>> {
        let [r, c] = self.shape[..] else {
            return Err(Error::Checkpoint(format!("{name}: expected a 2-d tensor")));
        };
        Array2::from_shape_vec((r, c), self.data)
            .map_err(|e| Error::Checkpoint(format!("{name}: {e}")))
    }

    fn into_vector(self, name: &str) -> Result<Array1<f64>> {
        if self.shape.len() != 1 || self.shape[0] != self.data.len() {
            return Err(Error::Checkpoint(format!("{name}: expected a 1-d tensor")));
        }
        Ok(Array1::from(self.data))
    }
}

#[derive(Serialize, Deserialize)]
struct LstmFile {
    w_x: Tensor,
    w_h: Tensor,
    w_c: Tensor,
    b: Tensor,
}

#[derive(Serialize, Deserialize)]
struct HeadFile {
    w: Tensor,
    b: Tensor,
}

#[derive(Serialize, Deserialize)]
struct CheckpointFile {
    format: String,
    version: u32,
    arch: Architecture,
    quantiles: Vec<f64>,
    normalization: MinMax,
    lstm: Vec<LstmFile>,
    head: HeadFile,
}

impl Checkpoint {
    pub fn to_json(&self) -> Result<String> {
        let p = &self.params;
        let file = CheckpointFile {
            format: CHECKPOINT_FORMAT.to_string(),
            version: CHECKPOINT_VERSION,
            arch: p.arch,
            quantiles: self.quantiles.clone(),
            normalization: self.normalization,
            lstm: p
                .layers
                .iter()
                .map(|l| LstmFile {
                    w_x: Tensor::matrix(&l.w_x),
                    w_h: Tensor::matrix(&l.w_h),
                    w_c: Tensor::matrix(&l.w_c),
                    b: Tensor::vector(&l.b),
                })
                .collect(),
            head: HeadFile {
                w: Tensor::matrix(&p.head.w),
                b: Tensor::vector(&p.head.b),
            },
        };
        let mut s = serde_json::to_string_pretty(&file)?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: CheckpointFile = serde_json::from_str(text)?;
        if file.format != CHECKPOINT_FORMAT {
            return Err(Error::Checkpoint(format!("unknown format {:?}", file.format)));
        }
        if file.version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported version {} (expected {CHECKPOINT_VERSION})",
                file.version
            )));
        }
        validate_levels(&file.quantiles)?;
        let layers = file
            .lstm
            .into_iter()
            .enumerate()
            .map(|(k, l)| {
                Ok(LstmLayerParams {
                    w_x: l.w_x.into_matrix(&format!("lstm[{k}].w_x"))?,
                    w_h: l.w_h.into_matrix(&format!("lstm[{k}].w_h"))?,
                    w_c: l.w_c.into_matrix(&format!("lstm[{k}].w_c"))?,
                    b: l.b.into_vector(&format!("lstm[{k}].b"))?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let params = ForecasterParams {
            arch: file.arch,
            layers,
            head: DenseParams {
                w: file.head.w.into_matrix("head.w")?,
                b: file.head.b.into_vector("head.b")?,
            },
        };
        params
            .validate()
            .map_err(|e| Error::Checkpoint(format!("architecture mismatch: {e}")))?;
        Ok(Self {
            params,
            quantiles: file.quantiles,
            normalization: file.normalization,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    /// SHA-256 of the serialized checkpoint, hex encoded. Used as model id.
    pub fn content_hash(&self) -> Result<String> {
        let digest = Sha256::digest(self.to_json()?.as_bytes());
        Ok(digest.iter().map(|b| format!("{b:02x}")).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn sample() -> Checkpoint {
        let arch = Architecture { layers: 2, hidden: 3, lag: 2 };
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        Checkpoint {
            params: ForecasterParams::init(arch, &mut rng).unwrap(),
            quantiles: vec![0.1, 0.5, 0.9],
            normalization: MinMax { min: 0.0, max: 52.5 },
        }
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let ck = sample();
        let back = Checkpoint::from_json(&ck.to_json().unwrap()).unwrap();
        let a = ck.params.to_flat();
        let b = back.params.to_flat();
        assert!(a.iter().zip(&b).all(|(x, y)| x.to_bits() == y.to_bits()));
        assert_eq!(ck, back);
        assert_eq!(ck.content_hash().unwrap(), back.content_hash().unwrap());
    }

    #[test]
    fn save_and_load_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ck.json");
        let ck = sample();
        ck.save(&path).unwrap();
        assert_eq!(Checkpoint::load(&path).unwrap(), ck);
    }

    #[test]
    fn rejects_wrong_version_and_shape() {
        let ck = sample();
        let text = ck.to_json().unwrap().replace("\"version\": 1", "\"version\": 9");
        assert!(matches!(Checkpoint::from_json(&text), Err(Error::Checkpoint(_))));

        let mut bad = ck.clone();
        bad.params.arch.hidden = 4;
        let text = bad.to_json().unwrap();
        assert!(matches!(Checkpoint::from_json(&text), Err(Error::Checkpoint(_))));
    }
}
