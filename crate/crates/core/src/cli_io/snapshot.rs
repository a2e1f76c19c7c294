//! Raw little-endian snapshots: `"TMSB"`, version, `n, q, N` (u32), `L, t`
//! (f64), then `f` and `v` row-major per field.

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::grid::{FieldState, GridSpec};

pub const MAGIC: &[u8; 4] = b"TMSB";
pub const FORMAT_VERSION: u32 = 1;
pub const HEADER_LEN: usize = 4 + 4 * 4 + 2 * 8;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SnapshotHeader {
    pub format_version: u32,
    pub n: u32,
    pub q: u32,
    pub points: u32,
    pub half_width: f64,
    pub t: f64,
}

impl SnapshotHeader {
    pub fn payload_len(&self) -> usize {
        2 * self.q as usize * (self.points as usize).pow(self.n) * 8
    }
}

pub fn encode_snapshot(state: &FieldState<f64>) -> Vec<u8> {
    let g = state.grid;
    let mut out = Vec::with_capacity(HEADER_LEN + 16 * state.fields().len());
    out.extend_from_slice(MAGIC);
    for x in [FORMAT_VERSION, g.n() as u32, g.q() as u32, g.points() as u32] {
        out.extend_from_slice(&x.to_le_bytes());
    }
    out.extend_from_slice(&g.half_width().to_le_bytes());
    out.extend_from_slice(&state.t.to_le_bytes());
    for x in state.fields().iter().chain(state.velocities()) {
        out.extend_from_slice(&x.to_le_bytes());
    }
    out
}

pub fn decode_header(bytes: &[u8]) -> Result<SnapshotHeader> {
    if bytes.len() < HEADER_LEN {
        return Err(Error::Snapshot(format!("{} bytes is shorter than the header", bytes.len())));
    }
    if &bytes[..4] != MAGIC {
        return Err(Error::Snapshot("bad magic".into()));
    }
    let u = |k: usize| u32::from_le_bytes(bytes[4 + 4 * k..8 + 4 * k].try_into().expect("4 bytes"));
    let f = |off: usize| f64::from_le_bytes(bytes[off..off + 8].try_into().expect("8 bytes"));
    let h = SnapshotHeader { format_version: u(0), n: u(1), q: u(2), points: u(3), half_width: f(20), t: f(28) };
    if h.format_version != FORMAT_VERSION {
        return Err(Error::Snapshot(format!("unsupported format version {}", h.format_version)));
    }
    Ok(h)
}

pub fn decode_snapshot(bytes: &[u8]) -> Result<FieldState<f64>> {
    let h = decode_header(bytes)?;
    let grid = GridSpec::new(h.n as usize, h.q as usize, h.half_width, h.points as usize)?;
    let payload = &bytes[HEADER_LEN..];
    if payload.len() != h.payload_len() {
        return Err(Error::Snapshot(format!("payload has {} bytes, expected {}", payload.len(), h.payload_len())));
    }
    let vals: Vec<f64> = payload.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect();
    let half = vals.len() / 2;
    FieldState::from_parts(grid, h.t, vals[..half].to_vec(), vals[half..].to_vec())
}

pub fn write_snapshot(path: &Path, state: &FieldState<f64>) -> Result<()> {
    let mut file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    file.write_all(&encode_snapshot(state)).map_err(|e| Error::io(path, e))?;
    file.flush().map_err(|e| Error::io(path, e))
}

pub fn read_snapshot(path: &Path) -> Result<FieldState<f64>> {
    let mut bytes = Vec::new();
    std::fs::File::open(path).and_then(|mut f| f.read_to_end(&mut bytes)).map_err(|e| Error::io(path, e))?;
    decode_snapshot(&bytes)
}
