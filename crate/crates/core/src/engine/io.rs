use std::io::{Read, Write};

use super::ParticleEnsemble;
use crate::error::{FkcError, Result};

pub const BINARY_MAGIC: &[u8; 4] = b"FKC1";

/// One row per particle: `index,x0,..,x{d-1},log_weight`.
pub fn write_csv<W: Write>(ens: &ParticleEnsemble, mut out: W) -> Result<()> {
    let d = ens.dim();
    let mut header = String::from("index");
    for j in 0..d {
        header.push_str(&format!(",x{j}"));
    }
    writeln!(out, "{header},log_weight")?;
    for k in 0..ens.len() {
        let mut line = k.to_string();
        for v in ens.particle(k) {
            line.push_str(&format!(",{v:e}"));
        }
        writeln!(out, "{line},{:e}", ens.log_weights[k])?;
    }
    Ok(())
}

/// Layout, all little-endian: magic `FKC1`, `K: u64`, `d: u64`, `t: f64`, then
/// per particle `d` coordinates and the log-weight as `f64`.
pub fn write_binary<W: Write>(ens: &ParticleEnsemble, mut out: W) -> Result<()> {
    let d = ens.dim();
    out.write_all(BINARY_MAGIC)?;
    out.write_all(&(ens.len() as u64).to_le_bytes())?;
    out.write_all(&(d as u64).to_le_bytes())?;
    out.write_all(&ens.t.to_le_bytes())?;
    let mut buf = Vec::with_capacity(ens.len() * (d + 1) * 8);
    for k in 0..ens.len() {
        for v in ens.particle(k) {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        buf.extend_from_slice(&ens.log_weights[k].to_le_bytes());
    }
    out.write_all(&buf)?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct BinaryDump {
    pub dim: usize,
    pub t: f64,
    /// Row-major `K x d`.
    pub positions: Vec<f64>,
    pub log_weights: Vec<f64>,
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

pub fn read_binary<R: Read>(mut input: R) -> Result<BinaryDump> {
    let mut magic = [0u8; 4];
    input.read_exact(&mut magic)?;
    if &magic != BINARY_MAGIC {
        return Err(FkcError::Format(format!("bad magic {magic:?}")));
    }
    let k = read_u64(&mut input)? as usize;
    let d = read_u64(&mut input)? as usize;
    let t = f64::from_bits(read_u64(&mut input)?);
    let mut body = Vec::new();
    input.read_to_end(&mut body)?;
    let expected = k
        .checked_mul(d + 1)
        .and_then(|n| n.checked_mul(8))
        .ok_or_else(|| FkcError::Format("header sizes overflow".into()))?;
    if body.len() != expected {
        return Err(FkcError::Format(format!(
            "body has {} bytes, header implies {expected}",
            body.len()
        )));
    }
    let vals: Vec<f64> = body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    let mut positions = Vec::with_capacity(k * d);
    let mut log_weights = Vec::with_capacity(k);
    for row in vals.chunks_exact(d + 1) {
        positions.extend_from_slice(&row[..d]);
        log_weights.push(row[d]);
    }
    Ok(BinaryDump {
        dim: d,
        t,
        positions,
        log_weights,
    })
}
