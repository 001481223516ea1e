//! Field snapshots: a little-endian binary format and a CSV export.
//!
//! Binary layout: `nx: u64, ny: u64, h: f64, origin_x: f64, origin_y: f64,
//! region: u64`, then `nx·ny` displacement values and `nx·ny` velocity values,
//! each row-major (x fastest) as `f64`.

use std::io::{Read, Write};
use std::sync::Arc;

use crate::domain::{DomainSpec, GridSet};
use crate::error::{Error, Result};

use super::{Region, StatePair};

pub fn write_snapshot(state: &StatePair, mut out: impl Write) -> Result<()> {
    let g = &state.grid;
    let mut buf = Vec::with_capacity(48 + 16 * g.len());
    buf.extend_from_slice(&(g.nx as u64).to_le_bytes());
    buf.extend_from_slice(&(g.ny as u64).to_le_bytes());
    buf.extend_from_slice(&g.h.to_le_bytes());
    buf.extend_from_slice(&g.origin[0].to_le_bytes());
    buf.extend_from_slice(&g.origin[1].to_le_bytes());
    buf.extend_from_slice(&state.region.tag().to_le_bytes());
    for x in state.w.iter().chain(&state.v) {
        buf.extend_from_slice(&x.to_le_bytes());
    }
    out.write_all(&buf)?;
    Ok(())
}

/// Reads a snapshot; the lattice masks are rebuilt from `domain` when given.
pub fn read_snapshot(mut input: impl Read, domain: Option<DomainSpec>) -> Result<StatePair> {
    let mut bytes = Vec::new();
    input.read_to_end(&mut bytes)?;
    if bytes.len() < 48 {
        return Err(Error::Format("snapshot header truncated".into()));
    }
    let word = |i: usize| -> [u8; 8] { bytes[8 * i..8 * i + 8].try_into().unwrap() };
    let nx = u64::from_le_bytes(word(0)) as usize;
    let ny = u64::from_le_bytes(word(1)) as usize;
    let h = f64::from_le_bytes(word(2));
    let origin = [f64::from_le_bytes(word(3)), f64::from_le_bytes(word(4))];
    let region = Region::from_tag(u64::from_le_bytes(word(5)))
        .ok_or_else(|| Error::Format("unknown region tag".into()))?;
    let n = nx * ny;
    if bytes.len() != 48 + 16 * n {
        return Err(Error::Format(format!(
            "expected {} bytes for a {nx}x{ny} snapshot, found {}",
            48 + 16 * n,
            bytes.len()
        )));
    }
    let values: Vec<f64> = (0..2 * n).map(|i| f64::from_le_bytes(word(6 + i))).collect();
    let grid = Arc::new(GridSet::new(origin, h, nx, ny, domain));
    StatePair::new(grid, region, values[..n].to_vec(), values[n..].to_vec())
}

/// `x,y,w,v` rows for the nodes of the state's region.
pub fn write_csv(state: &StatePair, mut out: impl Write) -> Result<()> {
    writeln!(out, "x,y,w,v")?;
    for k in state.nodes() {
        let p = state.grid.point(k);
        writeln!(out, "{},{},{},{}", p[0], p[1], state.w[k], state.v[k])?;
    }
    Ok(())
}
