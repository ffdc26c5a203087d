//! Checkpoint directory format: `manifest.json` describing parameter names,
//! shapes and byte offsets, plus `weights.bin` holding little-endian f64 data
//! concatenated in manifest order.

use std::fs;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::ParamSet;
use crate::tensor::Tensor;

pub const MANIFEST_FILE: &str = "manifest.json";
pub const WEIGHTS_FILE: &str = "weights.bin";

#[derive(Serialize, Deserialize, Debug, Clone)]
pub struct ManifestParam {
    pub name: String,
    pub shape: Vec<usize>,
    pub offset_bytes: u64,
    pub numel: usize,
}

#[derive(Serialize, Deserialize, Debug, Clone)]
pub struct Manifest {
    pub dtype: String,
    pub step: u64,
    pub config_hash: String,
    /// Echo of the configuration that produced the parameters.
    pub config: serde_json::Value,
    pub params: Vec<ManifestParam>,
}

pub fn save(
    dir: &Path,
    params: &ParamSet,
    config: serde_json::Value,
    config_hash: &str,
    step: u64,
) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut manifest = Manifest {
        dtype: "f64".to_string(),
        step,
        config_hash: config_hash.to_string(),
        config,
        params: Vec::with_capacity(params.len()),
    };
    let mut offset = 0u64;
    let weights = fs::File::create(dir.join(WEIGHTS_FILE))?;
    let mut writer = BufWriter::new(weights);
    for (_, name, tensor) in params.iter() {
        manifest.params.push(ManifestParam {
            name: name.to_string(),
            shape: tensor.shape().to_vec(),
            offset_bytes: offset,
            numel: tensor.numel(),
        });
        for v in tensor.data() {
            writer.write_all(&v.to_le_bytes())?;
        }
        offset += (tensor.numel() * 8) as u64;
    }
    writer.flush()?;
    let manifest_json = serde_json::to_string_pretty(&manifest)?;
    fs::write(dir.join(MANIFEST_FILE), manifest_json)?;
    Ok(())
}

pub fn load(dir: &Path) -> Result<(ParamSet, Manifest)> {
    let manifest_path = dir.join(MANIFEST_FILE);
    if !manifest_path.exists() {
        return Err(Error::MissingArtifact(format!(
            "checkpoint manifest {}",
            manifest_path.display()
        )));
    }
    let manifest: Manifest = serde_json::from_str(&fs::read_to_string(&manifest_path)?)?;
    if manifest.dtype != "f64" {
        return Err(Error::Checkpoint(format!(
            "unsupported dtype '{}'",
            manifest.dtype
        )));
    }
    let mut bytes = Vec::new();
    fs::File::open(dir.join(WEIGHTS_FILE))?.read_to_end(&mut bytes)?;
    let expected: usize = manifest.params.iter().map(|p| p.numel * 8).sum();
    if bytes.len() != expected {
        return Err(Error::Checkpoint(format!(
            "weights.bin holds {} bytes, manifest expects {}",
            bytes.len(),
            expected
        )));
    }
    let mut params = ParamSet::new();
    for p in &manifest.params {
        let shape_numel: usize = p.shape.iter().product();
        if shape_numel != p.numel {
            return Err(Error::Checkpoint(format!(
                "parameter '{}': shape {:?} disagrees with numel {}",
                p.name, p.shape, p.numel
            )));
        }
        let start = p.offset_bytes as usize;
        let end = start + p.numel * 8;
        if end > bytes.len() {
            return Err(Error::Checkpoint(format!(
                "parameter '{}' extends past end of weights.bin",
                p.name
            )));
        }
        let data: Vec<f64> = bytes[start..end]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
            .collect();
        params.add(&p.name, Tensor::new(p.shape.clone(), data)?)?;
    }
    Ok((params, manifest))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut ps = ParamSet::new();
        ps.add("a.w", Tensor::randn(vec![3, 4], 0.5, &mut rng))
            .unwrap();
        ps.add("b.bias", Tensor::randn(vec![4], 0.5, &mut rng))
            .unwrap();
        let cfg = serde_json::json!({"d": 4});
        save(dir.path(), &ps, cfg, "abc123", 42).unwrap();

        let (loaded, manifest) = load(dir.path()).unwrap();
        assert_eq!(manifest.step, 42);
        assert_eq!(manifest.config_hash, "abc123");
        assert_eq!(loaded.len(), 2);
        for (id, name, t) in ps.iter() {
            let lid = loaded.id_of(name).unwrap();
            assert_eq!(loaded.get(lid).shape(), t.shape());
            assert_eq!(loaded.get(lid).data(), ps.get(id).data());
        }
    }

    #[test]
    fn missing_manifest_is_missing_artifact() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(
            load(dir.path()),
            Err(Error::MissingArtifact(_))
        ));
    }

    #[test]
    fn truncated_weights_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let mut ps = ParamSet::new();
        ps.add("w", Tensor::vector(vec![1.0, 2.0])).unwrap();
        save(dir.path(), &ps, serde_json::json!({}), "h", 0).unwrap();
        let weights = dir.path().join(WEIGHTS_FILE);
        let bytes = std::fs::read(&weights).unwrap();
        std::fs::write(&weights, &bytes[..8]).unwrap();
        assert!(matches!(load(dir.path()), Err(Error::Checkpoint(_))));
    }
}
