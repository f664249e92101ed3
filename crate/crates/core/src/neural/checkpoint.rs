//! Checkpoint persistence: a length-prefixed JSON header followed by the
//! raw little-endian f64 parameter block.

use super::net::Architecture;
use super::train::TrainConfig;
use super::NeuralError;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct CheckpointHeader {
    pub architecture: Architecture,
    pub config: TrainConfig,
    pub epoch: usize,
    pub val_loss: f64,
}

pub fn save_checkpoint(
    path: &Path,
    header: &CheckpointHeader,
    params: &[f64],
) -> Result<(), NeuralError> {
    let header_bytes = serde_json::to_vec(header)
        .map_err(|e| NeuralError::Config(format!("header serialization failed: {e}")))?;
    let mut w = BufWriter::new(std::fs::File::create(path)?);
    w.write_all(&(header_bytes.len() as u32).to_le_bytes())?;
    w.write_all(&header_bytes)?;
    for &p in params {
        w.write_all(&p.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<(CheckpointHeader, Vec<f64>), NeuralError> {
    let mut r = BufReader::new(std::fs::File::open(path)?);
    let mut len_bytes = [0u8; 4];
    r.read_exact(&mut len_bytes)?;
    let header_len = u32::from_le_bytes(len_bytes) as usize;
    let mut header_bytes = vec![0u8; header_len];
    r.read_exact(&mut header_bytes)?;
    let header: CheckpointHeader = serde_json::from_slice(&header_bytes)
        .map_err(|e| NeuralError::Config(format!("bad checkpoint header: {e}")))?;
    let mut rest = Vec::new();
    r.read_to_end(&mut rest)?;
    if rest.len() % 8 != 0 {
        return Err(NeuralError::Config(format!(
            "parameter block has {} bytes, not a multiple of 8",
            rest.len()
        )));
    }
    let params = rest
        .chunks_exact(8)
        .map(|b| f64::from_le_bytes(b.try_into().unwrap()))
        .collect();
    Ok((header, params))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neural::loss::LossKind;
    use crate::neural::net::{Architecture, EncoderKind, FusionNet};

    #[test]
    fn checkpoint_roundtrip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        let arch = Architecture {
            encoder: EncoderKind::WaveStats,
            covariate_dim: 2,
            head_dim: 100,
        };
        let net = FusionNet::init(arch.clone(), 77).unwrap();
        let header = CheckpointHeader {
            architecture: arch,
            config: TrainConfig::new(LossKind::LogisticHazard, 77),
            epoch: 42,
            val_loss: 1.2345,
        };
        save_checkpoint(&path, &header, &net.params).unwrap();
        let (loaded_header, loaded_params) = load_checkpoint(&path).unwrap();
        assert_eq!(loaded_header, header);
        assert_eq!(loaded_params.len(), net.params.len());
        for (a, b) in loaded_params.iter().zip(&net.params) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn truncated_checkpoint_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.ckpt");
        std::fs::write(&path, [3u8, 0, 0]).unwrap();
        assert!(load_checkpoint(&path).is_err());
    }
}
