//! Generator checkpoints: one JSON header line (magic, training
//! configuration, parameter manifest) followed by every parameter and
//! batch-norm buffer as little-endian `f32` in manifest order.

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::generator::Generator;
use super::layers::Layer;
use super::train::GanConfig;
use super::NeuralError;
use crate::data::{check_magic, read_container, write_container};

pub const CHECKPOINT_MAGIC: &str = "SRGANCK1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Entry {
    name: String,
    shape: Vec<usize>,
}

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    magic: String,
    config: GanConfig,
    channels: usize,
    params: Vec<Entry>,
}

pub fn save_checkpoint(path: impl AsRef<Path>, gen: &mut Generator, cfg: &GanConfig) -> Result<(), NeuralError> {
    let channels = gen.channels;
    let params = gen.params();
    let header = Header {
        magic: CHECKPOINT_MAGIC.into(),
        config: *cfg,
        channels,
        params: params
            .iter()
            .map(|p| Entry {
                name: p.name.clone(),
                shape: p.shape.clone(),
            })
            .collect(),
    };
    let payload = params.iter().flat_map(|p| p.value.iter().map(|&v| v as f32));
    Ok(write_container(path.as_ref(), &header, payload)?)
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<(Generator, GanConfig), NeuralError> {
    let path = path.as_ref();
    let (header, values): (Header, Vec<f32>) = read_container(path, |h: &Header| {
        h.params.iter().map(|e| e.shape.iter().product::<usize>()).sum()
    })?;
    check_magic(path, &header.magic, CHECKPOINT_MAGIC)?;
    let malformed = |reason: String| NeuralError::Checkpoint {
        path: path.to_path_buf(),
        reason,
    };
    let cfg = header.config;
    cfg.validate().map_err(|e| malformed(e.to_string()))?;
    let mut gen = Generator::new(
        header.channels,
        cfg.hidden_features,
        cfg.residual_blocks,
        cfg.factor,
        cfg.kernel,
        cfg.bn_momentum,
        &mut ChaCha8Rng::seed_from_u64(0),
    );
    let mut params = gen.params();
    if params.len() != header.params.len() {
        return Err(malformed(format!(
            "manifest lists {} arrays, configuration implies {}",
            header.params.len(),
            params.len()
        )));
    }
    let mut offset = 0;
    for (p, e) in params.iter_mut().zip(&header.params) {
        if p.name != e.name || p.shape != e.shape {
            return Err(malformed(format!("expected {} {:?}, found {} {:?}", p.name, p.shape, e.name, e.shape)));
        }
        let n = p.len();
        for (dst, src) in p.value.iter_mut().zip(&values[offset..offset + n]) {
            *dst = f64::from(*src);
        }
        offset += n;
    }
    drop(params);
    Ok((gen, cfg))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neural::layers::tests::random_act;

    #[test]
    fn round_trip_preserves_outputs() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("g.ck");
        let cfg = GanConfig {
            hidden_features: 4,
            residual_blocks: 1,
            ..GanConfig::toy(2)
        };
        let mut gen = Generator::new(4, 4, 1, 2, 3, 0.9, &mut ChaCha8Rng::seed_from_u64(5));
        gen.forward(&random_act(2, 4, 2, 1), true);
        for p in gen.params() {
            p.value.iter_mut().for_each(|v| *v = f64::from(*v as f32));
        }
        save_checkpoint(&path, &mut gen, &cfg).unwrap();
        let (mut back, cfg2) = load_checkpoint(&path).unwrap();
        assert_eq!(cfg, cfg2);
        let x = random_act(1, 4, 2, 2);
        assert_eq!(gen.forward(&x, false), back.forward(&x, false));
        let first = std::fs::read(&path).unwrap();
        save_checkpoint(&path, &mut back, &cfg2).unwrap();
        assert_eq!(first, std::fs::read(&path).unwrap());
        let text = String::from_utf8_lossy(&first[..first.iter().position(|&b| b == b'\n').unwrap()]).to_string();
        assert!(text.contains("\"magic\":\"SRGANCK1\"") && text.contains("running_var"));
    }

    #[test]
    fn rejects_mismatched_manifest() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("g.ck");
        let cfg = GanConfig {
            hidden_features: 4,
            residual_blocks: 1,
            ..GanConfig::toy(2)
        };
        let mut gen = Generator::new(4, 4, 2, 2, 3, 0.9, &mut ChaCha8Rng::seed_from_u64(5));
        save_checkpoint(&path, &mut gen, &cfg).unwrap();
        assert!(matches!(load_checkpoint(&path), Err(NeuralError::Checkpoint { .. })));
        std::fs::write(&path, b"{\"magic\":\"HRIRSET1\"}\n").unwrap();
        assert!(load_checkpoint(&path).is_err());
    }
}
