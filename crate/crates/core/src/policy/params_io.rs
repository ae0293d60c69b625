use std::path::Path;

use super::mlp::{MlpShape, PolicyParams};
use super::observation::FEATURE_VERSION;
use crate::error::{PlmError, Result};

const MAGIC: &[u8; 4] = b"PLMW";
const FORMAT_VERSION: u32 = 1;
const HEADER_LEN: usize = 4 + 4 + 3 * 4 + 8 + 8 + 8 + 32 + 4;

/// Provenance stored alongside the weights.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ParamsHeader {
    pub shape: MlpShape,
    pub seed: u64,
    pub iteration: u64,
    pub config_hash: [u8; 32],
    pub feature_version: u32,
}

/// Layout, all little-endian: magic, format version (u32), inputs, hidden,
/// outputs (u32 each), parameter count, seed, iteration (u64 each), config
/// hash (32 bytes), feature version (u32), then the parameters as f64.
pub fn encode_params(header: &ParamsHeader, params: &PolicyParams) -> Result<Vec<u8>> {
    if header.shape != params.shape {
        return Err(PlmError::InvalidArgument("header shape differs from parameter shape".into()));
    }
    let n = params.values.len();
    let mut out = Vec::with_capacity(HEADER_LEN + 8 * n);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    for d in [header.shape.inputs, header.shape.hidden, header.shape.outputs] {
        out.extend_from_slice(&(d as u32).to_le_bytes());
    }
    out.extend_from_slice(&(n as u64).to_le_bytes());
    out.extend_from_slice(&header.seed.to_le_bytes());
    out.extend_from_slice(&header.iteration.to_le_bytes());
    out.extend_from_slice(&header.config_hash);
    out.extend_from_slice(&header.feature_version.to_le_bytes());
    for v in &params.values {
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(out)
}

pub fn decode_params(bytes: &[u8], origin: &Path) -> Result<(ParamsHeader, PolicyParams)> {
    let corrupt = |reason: &str| PlmError::CorruptCheckpoint {
        path: origin.to_path_buf(),
        reason: reason.to_string(),
    };
    if bytes.len() < HEADER_LEN {
        return Err(corrupt("file shorter than the header"));
    }
    if &bytes[..4] != MAGIC {
        return Err(corrupt("bad magic"));
    }
    let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().expect("4 bytes"));
    let u64_at = |o: usize| u64::from_le_bytes(bytes[o..o + 8].try_into().expect("8 bytes"));
    if u32_at(4) != FORMAT_VERSION {
        return Err(corrupt("unsupported format version"));
    }
    let shape = MlpShape {
        inputs: u32_at(8) as usize,
        hidden: u32_at(12) as usize,
        outputs: u32_at(16) as usize,
    };
    let n = u64_at(20) as usize;
    if n != shape.n_params() {
        return Err(corrupt("parameter count does not match the network shape"));
    }
    let seed = u64_at(28);
    let iteration = u64_at(36);
    let mut config_hash = [0u8; 32];
    config_hash.copy_from_slice(&bytes[44..76]);
    let feature_version = u32_at(76);
    if feature_version != FEATURE_VERSION {
        return Err(corrupt("observation feature version differs from this build"));
    }
    let body = &bytes[HEADER_LEN..];
    if body.len() != 8 * n {
        return Err(corrupt("payload length does not match the parameter count"));
    }
    let values = body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    let header = ParamsHeader {
        shape,
        seed,
        iteration,
        config_hash,
        feature_version,
    };
    Ok((header, PolicyParams::from_values(shape, values)?))
}

pub fn save_params(path: &Path, header: &ParamsHeader, params: &PolicyParams) -> Result<()> {
    std::fs::write(path, encode_params(header, params)?)?;
    Ok(())
}

pub fn load_params(path: &Path) -> Result<(ParamsHeader, PolicyParams)> {
    let bytes = std::fs::read(path)?;
    decode_params(&bytes, path)
}
