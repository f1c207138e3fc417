//! Binary checkpoints.
//!
//! Layout: the magic line `ROIRANKNET1\n`, a little-endian `u64` header
//! length, a JSON header (config, seed, ROI order, tensor directory), then
//! every tensor as little-endian `f64` in directory order. Running
//! normalization statistics are stored as `<layer>.running_mean` and
//! `<layer>.running_var` after the parameters.

use std::fs;
use std::io::Write;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{build_model, Model, ModelConfig};
use crate::error::{Error, Result};

pub const CHECKPOINT_MAGIC: &[u8] = b"ROIRANKNET1\n";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub config: ModelConfig,
    pub seed: u64,
    /// ROI indices in the order they were fed to the model.
    pub roi_order: Vec<usize>,
    pub tensors: Vec<TensorEntry>,
}

fn stat_names(i: usize) -> (String, String) {
    (format!("encoder.norm{i}.running_mean"), format!("encoder.norm{i}.running_var"))
}

pub fn save_checkpoint(path: &Path, model: &Model, seed: u64, roi_order: &[usize]) -> Result<()> {
    let mut tensors = Vec::new();
    let mut payload: Vec<f64> = Vec::new();
    for p in model.params().iter() {
        tensors.push(TensorEntry {
            name: p.name.clone(),
            shape: p.tensor.shape().to_vec(),
        });
        payload.extend_from_slice(p.tensor.data());
    }
    for (i, stats) in model.norms().iter().enumerate() {
        let (m, v) = stat_names(i);
        tensors.push(TensorEntry { name: m, shape: vec![stats.channels()] });
        payload.extend_from_slice(&stats.mean);
        tensors.push(TensorEntry { name: v, shape: vec![stats.channels()] });
        payload.extend_from_slice(&stats.var);
    }
    let header = CheckpointHeader {
        config: model.config().clone(),
        seed,
        roi_order: roi_order.to_vec(),
        tensors,
    };
    let json = serde_json::to_vec(&header).map_err(|e| Error::Checkpoint(e.to_string()))?;
    let mut bytes = Vec::with_capacity(CHECKPOINT_MAGIC.len() + 8 + json.len() + payload.len() * 8);
    bytes.extend_from_slice(CHECKPOINT_MAGIC);
    bytes.extend_from_slice(&(json.len() as u64).to_le_bytes());
    bytes.extend_from_slice(&json);
    for v in payload {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    let mut f = fs::File::create(path)?;
    f.write_all(&bytes)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<(Model, CheckpointHeader)> {
    let bytes = fs::read(path)?;
    let bad = |msg: &str| Error::Checkpoint(format!("{}: {msg}", path.display()));
    let rest = bytes.strip_prefix(CHECKPOINT_MAGIC).ok_or_else(|| bad("bad magic"))?;
    if rest.len() < 8 {
        return Err(bad("truncated header length"));
    }
    let hlen = u64::from_le_bytes(rest[..8].try_into().expect("8 bytes")) as usize;
    let rest = &rest[8..];
    if rest.len() < hlen {
        return Err(bad("truncated header"));
    }
    let header: CheckpointHeader = serde_json::from_slice(&rest[..hlen]).map_err(|e| bad(&e.to_string()))?;
    let mut values = rest[hlen..]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")));
    if (rest.len() - hlen) % 8 != 0 {
        return Err(bad("payload is not a whole number of f64 values"));
    }
    // Parameter values are overwritten below, so the init seed is irrelevant.
    let mut model = build_model(&header.config, &mut ChaCha8Rng::seed_from_u64(0))?;
    let n_params = model.params().len();
    for (i, entry) in header.tensors.iter().enumerate() {
        let n: usize = entry.shape.iter().product();
        let data: Vec<f64> = values.by_ref().take(n).collect();
        if data.len() != n {
            return Err(bad("payload shorter than directory"));
        }
        if i < n_params {
            let p = model.params_mut().get_mut(i);
            if p.name != entry.name || p.tensor.shape() != entry.shape.as_slice() {
                return Err(bad(&format!("unexpected tensor {}", entry.name)));
            }
            p.tensor.data_mut().copy_from_slice(&data);
        } else {
            let k = (i - n_params) / 2;
            let stats = model.norms_mut().get_mut(k).ok_or_else(|| bad("too many tensors"))?;
            if data.len() != stats.channels() {
                return Err(bad(&format!("bad statistics tensor {}", entry.name)));
            }
            if (i - n_params) % 2 == 0 {
                stats.mean = data;
            } else {
                stats.var = data;
            }
        }
    }
    if header.tensors.len() != n_params + 2 * model.norms().len() {
        return Err(bad("tensor directory does not match the configuration"));
    }
    if values.next().is_some() {
        return Err(bad("trailing payload"));
    }
    Ok((model, header))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Variant;

    #[test]
    fn round_trip_preserves_everything() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        let mut model = build_model(&ModelConfig::new(Variant::Asdrnn), &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
        model.norms_mut()[2].mean[5] = 0.25;
        save_checkpoint(&path, &model, 4, &[3, 1, 2]).unwrap();
        let bytes = fs::read(&path).unwrap();
        assert!(bytes.starts_with(b"ROIRANKNET1"));
        let (loaded, header) = load_checkpoint(&path).unwrap();
        assert_eq!(header.seed, 4);
        assert_eq!(header.roi_order, vec![3, 1, 2]);
        assert_eq!(loaded.params(), model.params());
        assert_eq!(loaded.norms(), model.norms());
    }

    #[test]
    fn rejects_bad_magic_and_truncation() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        fs::write(&path, b"NOTAMODEL").unwrap();
        assert!(matches!(load_checkpoint(&path), Err(Error::Checkpoint(_))));
        let model = build_model(&ModelConfig::sccnn_rnn(), &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
        save_checkpoint(&path, &model, 0, &[0]).unwrap();
        let bytes = fs::read(&path).unwrap();
        fs::write(&path, &bytes[..bytes.len() - 8]).unwrap();
        assert!(load_checkpoint(&path).is_err());
    }
}
