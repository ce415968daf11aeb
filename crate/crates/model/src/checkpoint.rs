//! Binary checkpoints: a JSON header followed by little-endian `f32` data.
//!
//! Layout: magic line, `u64` header length, header JSON, parameters,
//! batch-norm buffers.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{ModelError, Result};
use crate::network::{Network, NetworkSpec};

const MAGIC: &[u8] = b"ALCKPT1\n";

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    spec: NetworkSpec,
    num_params: usize,
    num_buffers: usize,
}

fn bad(path: &Path, reason: impl Into<String>) -> ModelError {
    ModelError::Checkpoint {
        path: path.display().to_string(),
        reason: reason.into(),
    }
}

pub fn save_checkpoint(net: &mut Network, path: &Path) -> Result<()> {
    let params = net.flat_params();
    let buffers = net.flat_buffers();
    let header = serde_json::to_vec(&Header {
        spec: net.spec().clone(),
        num_params: params.len(),
        num_buffers: buffers.len(),
    })
    .map_err(|e| bad(path, e.to_string()))?;
    let mut out = Vec::with_capacity(MAGIC.len() + 8 + header.len() + 4 * (params.len() + buffers.len()));
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(header.len() as u64).to_le_bytes());
    out.extend_from_slice(&header);
    for v in params.iter().chain(&buffers) {
        out.extend_from_slice(&v.to_le_bytes());
    }
    let tmp = path.with_extension("tmp");
    let mut f = fs::File::create(&tmp).map_err(|e| ModelError::io(format!("creating {}", tmp.display()), e))?;
    f.write_all(&out)
        .and_then(|_| f.sync_all())
        .map_err(|e| ModelError::io(format!("writing {}", tmp.display()), e))?;
    fs::rename(&tmp, path).map_err(|e| ModelError::io(format!("renaming to {}", path.display()), e))
}

pub fn load_checkpoint(path: &Path) -> Result<Network> {
    let bytes = fs::read(path).map_err(|e| ModelError::io(format!("reading {}", path.display()), e))?;
    let rest = bytes
        .strip_prefix(MAGIC)
        .ok_or_else(|| bad(path, "not a checkpoint file"))?;
    if rest.len() < 8 {
        return Err(bad(path, "truncated header"));
    }
    let hlen = u64::from_le_bytes(rest[..8].try_into().expect("8 bytes")) as usize;
    let rest = &rest[8..];
    if rest.len() < hlen {
        return Err(bad(path, "truncated header"));
    }
    let header: Header = serde_json::from_slice(&rest[..hlen]).map_err(|e| bad(path, e.to_string()))?;
    let data = &rest[hlen..];
    if data.len() != 4 * (header.num_params + header.num_buffers) {
        return Err(bad(path, format!("expected {} data bytes, found {}", 4 * (header.num_params + header.num_buffers), data.len())));
    }
    let floats: Vec<f32> = data
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
        .collect();
    // Parameter values are overwritten below; the seed only fixes shapes.
    let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(0);
    let mut net = Network::new(header.spec, &mut rng)?;
    net.set_flat_params(&floats[..header.num_params])?;
    net.set_flat_buffers(&floats[header.num_params..])?;
    Ok(net)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::layers::Mode;
    use albench_core::config::ArchitectureId;
    use ndarray::Array4;
    use rand::SeedableRng;

    #[test]
    fn round_trip_preserves_outputs() {
        let spec = NetworkSpec {
            architecture: ArchitectureId::SmallCnn,
            num_classes: 3,
            input_shape: (8, 8, 1),
            dropout_rate: 0.2,
            mc_dropout_site: false,
        };
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let mut net = Network::new(spec, &mut rng).unwrap();
        let x = Array4::from_shape_fn((4, 8, 8, 1), |(b, y, x, _)| (b * 64 + y * 8 + x) as f32 / 256.0);
        // Move the running statistics away from their defaults.
        net.forward(x.clone(), Mode::Train, &mut rng);
        net.clear_cache();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.bin");
        save_checkpoint(&mut net, &path).unwrap();
        let mut loaded = load_checkpoint(&path).unwrap();
        assert_eq!(loaded.flat_params(), net.flat_params());
        assert_eq!(loaded.flat_buffers(), net.flat_buffers());
        let a = net.forward(x.clone(), Mode::Eval, &mut rng);
        let b = loaded.forward(x, Mode::Eval, &mut rng);
        assert_eq!(a, b);
    }

    #[test]
    fn garbage_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("junk.bin");
        std::fs::write(&path, b"hello").unwrap();
        assert!(load_checkpoint(&path).is_err());
    }
}
