//! Versioned binary checkpoints: magic header then named parameter records
//! `{name, shape, f32 data}`. Write-then-read is bit-exact.

use std::io::{Read, Write};
use std::path::Path;

use crate::params::ParamSet;
use crate::{ModelError, Result};

const MAGIC: &[u8; 4] = b"RDNC";
const VERSION: u16 = 1;

fn err(path: &Path, msg: impl Into<String>) -> ModelError {
    ModelError::Checkpoint { path: path.display().to_string(), msg: msg.into() }
}

pub fn save(params: &ParamSet<f32>, path: &Path) -> Result<()> {
    let mut buf = Vec::new();
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    buf.extend_from_slice(&(params.len() as u32).to_le_bytes());
    for (name, t) in params.iter() {
        buf.extend_from_slice(&(name.len() as u32).to_le_bytes());
        buf.extend_from_slice(name.as_bytes());
        buf.extend_from_slice(&(t.shape().len() as u32).to_le_bytes());
        for &d in t.shape() {
            buf.extend_from_slice(&(d as u64).to_le_bytes());
        }
        for v in t.data() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    let mut f = std::fs::File::create(path)?;
    f.write_all(&buf)?;
    Ok(())
}

/// Restores values into an existing parameter set; every record must match
/// a registered name and shape, and every parameter must be covered.
pub fn load(params: &mut ParamSet<f32>, path: &Path) -> Result<()> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    let mut pos = 0usize;
    let take = |pos: &mut usize, n: usize| -> Result<&[u8]> {
        if *pos + n > bytes.len() {
            return Err(err(path, "truncated"));
        }
        let s = &bytes[*pos..*pos + n];
        *pos += n;
        Ok(s)
    };
    if take(&mut pos, 4)? != MAGIC {
        return Err(err(path, "bad magic"));
    }
    let version = u16::from_le_bytes(take(&mut pos, 2)?.try_into().unwrap());
    if version != VERSION {
        return Err(err(path, format!("unsupported version {version}")));
    }
    let count = u32::from_le_bytes(take(&mut pos, 4)?.try_into().unwrap()) as usize;
    if count != params.len() {
        return Err(err(path, format!("{count} records for {} parameters", params.len())));
    }
    for _ in 0..count {
        let name_len = u32::from_le_bytes(take(&mut pos, 4)?.try_into().unwrap()) as usize;
        let name = String::from_utf8(take(&mut pos, name_len)?.to_vec()).map_err(|e| err(path, e.to_string()))?;
        let rank = u32::from_le_bytes(take(&mut pos, 4)?.try_into().unwrap()) as usize;
        let mut numel = 1usize;
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            let d = u64::from_le_bytes(take(&mut pos, 8)?.try_into().unwrap()) as usize;
            shape.push(d);
            numel *= d;
        }
        let expected = params.by_name(&name).ok_or_else(|| err(path, format!("unknown parameter {name}")))?;
        if expected.shape() != shape.as_slice() {
            return Err(err(path, format!("parameter {name}: shape {shape:?} vs {:?}", expected.shape())));
        }
        let raw = take(&mut pos, 4 * numel)?;
        let values: Vec<f32> = raw.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect();
        params.load_values(&name, values).map_err(|e| err(path, e))?;
    }
    if pos != bytes.len() {
        return Err(err(path, "trailing bytes"));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::{DepthNet, ModelConfig};
    use diffcore::RngSeed;

    fn tiny_net(seed: u64) -> DepthNet<f32> {
        let mut cfg = ModelConfig::with_extents(16, 24, 2);
        cfg.encoder_channels = vec![4, 8];
        cfg.decoder_channels = vec![3, 4];
        cfg.semantic_channels = 6;
        cfg.fusion = crate::FusionConfig { channels: 6, height: 4, width: 6, proj_channels: 4, ffn_hidden: 8 };
        cfg.pose_channels = 4;
        DepthNet::new(cfg, RngSeed(seed)).unwrap()
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let net = tiny_net(1);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        save(&net.params, &path).unwrap();

        let mut other = tiny_net(2);
        let differs = net
            .params
            .iter()
            .zip(other.params.iter())
            .any(|((_, a), (_, b))| a.data().iter().zip(b.data()).any(|(x, y)| x.to_bits() != y.to_bits()));
        assert!(differs, "different seeds should differ before loading");

        load(&mut other.params, &path).unwrap();
        for ((na, a), (nb, b)) in net.params.iter().zip(other.params.iter()) {
            assert_eq!(na, nb);
            assert!(a.data().iter().zip(b.data()).all(|(x, y)| x.to_bits() == y.to_bits()), "{na} differs");
        }

        // Saving the restored set reproduces identical bytes.
        let path2 = dir.path().join("model2.ckpt");
        save(&other.params, &path2).unwrap();
        assert_eq!(std::fs::read(&path).unwrap(), std::fs::read(&path2).unwrap());
    }

    #[test]
    fn shape_and_coverage_mismatches_are_rejected() {
        let net = tiny_net(1);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        save(&net.params, &path).unwrap();

        let mut different_cfg = {
            let mut cfg = ModelConfig::with_extents(16, 24, 2);
            cfg.encoder_channels = vec![5, 8];
            cfg.decoder_channels = vec![3, 4];
            cfg.semantic_channels = 6;
            cfg.fusion = crate::FusionConfig { channels: 6, height: 4, width: 6, proj_channels: 4, ffn_hidden: 8 };
            cfg.pose_channels = 4;
            DepthNet::<f32>::new(cfg, RngSeed(3)).unwrap()
        };
        assert!(load(&mut different_cfg.params, &path).is_err());
    }

    #[test]
    fn frozen_extractor_parameters_are_checkpointed_too() {
        let net = tiny_net(4);
        let frozen: Vec<&str> =
            net.params.iter().filter(|(_, t)| !t.requires_grad()).map(|(n, _)| n).collect();
        assert!(frozen.iter().any(|n| n.starts_with("semantic.")), "extractor must be part of the checkpoint");
    }
}
