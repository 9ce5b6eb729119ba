//! Flat binary parameter checkpoints.
//!
//! Layout: `u64` little-endian header length, a JSON header, then the
//! parameters as little-endian `f64`.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::NetSpec;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub spec: NetSpec,
    pub seed: u64,
    pub epoch: usize,
    pub n_params: usize,
}

pub fn write<W: Write>(mut w: W, header: &CheckpointHeader, params: &[f64]) -> Result<()> {
    if header.n_params != params.len() {
        return Err(Error::shape(header.n_params, params.len()));
    }
    let json = serde_json::to_vec(header)?;
    w.write_all(&(json.len() as u64).to_le_bytes())?;
    w.write_all(&json)?;
    for p in params {
        w.write_all(&p.to_le_bytes())?;
    }
    Ok(())
}

pub fn read<R: Read>(mut r: R) -> Result<(CheckpointHeader, Vec<f64>)> {
    let mut len = [0u8; 8];
    r.read_exact(&mut len)?;
    let len = u64::from_le_bytes(len) as usize;
    if len > 1 << 24 {
        return Err(Error::Schema(format!("checkpoint header of {len} bytes")));
    }
    let mut json = vec![0u8; len];
    r.read_exact(&mut json)?;
    let header: CheckpointHeader = serde_json::from_slice(&json)?;
    let mut params = Vec::with_capacity(header.n_params);
    let mut buf = [0u8; 8];
    for _ in 0..header.n_params {
        r.read_exact(&mut buf)?;
        params.push(f64::from_le_bytes(buf));
    }
    Ok((header, params))
}

pub fn save(path: impl AsRef<Path>, header: &CheckpointHeader, params: &[f64]) -> Result<()> {
    let f = std::io::BufWriter::new(std::fs::File::create(path)?);
    write(f, header, params)
}

pub fn load(path: impl AsRef<Path>) -> Result<(CheckpointHeader, Vec<f64>)> {
    read(std::io::BufReader::new(std::fs::File::open(path)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::MlpSpec;

    #[test]
    fn round_trip_is_bit_exact() {
        let header = CheckpointHeader {
            spec: NetSpec::Mlp(MlpSpec::new(2, 1, 3, 1)),
            seed: 7,
            epoch: 12,
            n_params: 3,
        };
        let params = [0.1, -2.5e-300, f64::MIN_POSITIVE];
        let mut buf = Vec::new();
        write(&mut buf, &header, &params).unwrap();
        let (h, p) = read(buf.as_slice()).unwrap();
        assert_eq!(h, header);
        assert_eq!(p.iter().map(|v| v.to_bits()).collect::<Vec<_>>(), params.iter().map(|v| v.to_bits()).collect::<Vec<_>>());
    }

    #[test]
    fn truncated_file_is_error() {
        let header = CheckpointHeader {
            spec: NetSpec::Mlp(MlpSpec::new(1, 1, 1, 1)),
            seed: 0,
            epoch: 0,
            n_params: 2,
        };
        let mut buf = Vec::new();
        write(&mut buf, &header, &[1.0, 2.0]).unwrap();
        buf.truncate(buf.len() - 3);
        assert!(read(buf.as_slice()).is_err());
    }
}
