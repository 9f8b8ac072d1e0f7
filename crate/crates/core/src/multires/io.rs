//! Little-endian lattice file format shared by wavefunctions and potentials.
//!
//! ```text
//! offset  size  field
//!      0     4  magic "QWF1"
//!      4     4  u32 version (= 1)
//!      8     1  u8 kind (0 = wavefunction, 1 = potential)
//!      9     3  reserved, zero
//!     12     8  u64 N
//!     20     8  f64 lattice spacing a
//!     28     8  f64 mass m
//!     36     8  f64 V_inf (potential files; +inf = unbounded; 0 otherwise)
//!     44     8  u64 step count
//!     52        (N + 2)^3 f64 values, canonical x-major order, padding included
//! ```

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::lattice::Field3D;
use crate::scalar::Real;

pub const MAGIC: [u8; 4] = *b"QWF1";
pub const VERSION: u32 = 1;
pub const HEADER_LEN: usize = 52;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FileKind {
    Wavefunction = 0,
    Potential = 1,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Header {
    pub kind: FileKind,
    pub n: usize,
    pub a: f64,
    pub m: f64,
    pub v_inf: f64,
    pub step_count: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LatticeFile {
    pub header: Header,
    pub payload: Vec<f64>,
}

pub fn encode_header(h: &Header) -> [u8; HEADER_LEN] {
    let mut out = [0u8; HEADER_LEN];
    out[0..4].copy_from_slice(&MAGIC);
    out[4..8].copy_from_slice(&VERSION.to_le_bytes());
    out[8] = h.kind as u8;
    out[12..20].copy_from_slice(&(h.n as u64).to_le_bytes());
    out[20..28].copy_from_slice(&h.a.to_le_bytes());
    out[28..36].copy_from_slice(&h.m.to_le_bytes());
    out[36..44].copy_from_slice(&h.v_inf.to_le_bytes());
    out[44..52].copy_from_slice(&h.step_count.to_le_bytes());
    out
}

pub fn decode_header(bytes: &[u8]) -> Result<Header> {
    if bytes.len() < HEADER_LEN {
        return Err(Error::Format(format!("truncated header: {} bytes", bytes.len())));
    }
    if bytes[0..4] != MAGIC {
        return Err(Error::Format("bad magic".into()));
    }
    let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
    let u64_at = |o: usize| u64::from_le_bytes(bytes[o..o + 8].try_into().unwrap());
    let f64_at = |o: usize| f64::from_le_bytes(bytes[o..o + 8].try_into().unwrap());
    let version = u32_at(4);
    if version != VERSION {
        return Err(Error::Format(format!("unsupported version {version}")));
    }
    let kind = match bytes[8] {
        0 => FileKind::Wavefunction,
        1 => FileKind::Potential,
        other => return Err(Error::Format(format!("unknown kind tag {other}"))),
    };
    let n = usize::try_from(u64_at(12)).map_err(|_| Error::Format("N too large".into()))?;
    let header = Header { kind, n, a: f64_at(20), m: f64_at(28), v_inf: f64_at(36), step_count: u64_at(44) };
    if !(4..=1 << 16).contains(&n) {
        return Err(Error::Format(format!("implausible N={n}")));
    }
    if !(header.a.is_finite() && header.a > 0.0 && header.m.is_finite() && header.m > 0.0) {
        return Err(Error::Format("lattice spacing and mass must be finite and positive".into()));
    }
    if header.v_inf.is_nan() || header.v_inf == f64::NEG_INFINITY {
        return Err(Error::Format("invalid V_inf".into()));
    }
    Ok(header)
}

pub fn write_file<T: Real>(path: &Path, kind: FileKind, field: &Field3D<T>, v_inf: f64, step_count: u64) -> Result<()> {
    let spec = field.spec();
    let header = Header {
        kind,
        n: spec.n(),
        a: spec.spacing().as_f64(),
        m: spec.mass().as_f64(),
        v_inf: if kind == FileKind::Potential { v_inf } else { 0.0 },
        step_count,
    };
    let mut out = BufWriter::new(File::create(path)?);
    out.write_all(&encode_header(&header))?;
    for v in field.values() {
        out.write_all(&v.as_f64().to_le_bytes())?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_file(path: &Path) -> Result<LatticeFile> {
    let mut bytes = Vec::new();
    File::open(path)?.read_to_end(&mut bytes)?;
    let header = decode_header(&bytes)?;
    let count = (header.n + 2).pow(3);
    let expected = HEADER_LEN + 8 * count;
    if bytes.len() != expected {
        return Err(Error::Format(format!("payload size mismatch: expected {expected} bytes, found {}", bytes.len())));
    }
    let payload: Vec<f64> = bytes[HEADER_LEN..]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    if payload.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!("payload of {}", path.display())));
    }
    Ok(LatticeFile { header, payload })
}
