//! Binary transition tables.
//!
//! Layout, little-endian: magic `SYMNET01`, `u32` subsystem id, `u8`
//! convention, `u32` length plus bytes of eta as a decimal string, `u32`
//! state dimension count and `(i64 lo, i64 hi)` per dimension, the same for
//! the label dimensions (neighbour slots first, then inputs), `u64` state
//! and label counts, then one `i64` successor index per (state, label) in
//! row-major order. Out-of-domain entries hold `i64::MIN`.

use std::io::{self, Read, Write};

use serde_json::{json, Value};

use super::{AbstractionError, Convention, SymbolicModel};
use crate::rational::{to_exact_string, Count};

pub const MAGIC: &[u8; 8] = b"SYMNET01";
pub const OUT_OF_DOMAIN_INDEX: i64 = i64::MIN;

#[derive(Debug, Clone, PartialEq)]
pub struct TableHeader {
    pub id: u32,
    pub convention: Convention,
    pub eta: String,
    pub state_ranges: Vec<(i64, i64)>,
    pub label_ranges: Vec<(i64, i64)>,
    pub states: u64,
    pub labels: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TableFile {
    pub header: TableHeader,
    pub successors: Vec<i64>,
}

fn label_ranges(m: &SymbolicModel) -> Vec<(i64, i64)> {
    m.labels
        .neighbors
        .iter()
        .flat_map(|(_, l)| l.ranges.iter().copied())
        .chain(m.labels.input.ranges.iter().copied())
        .collect()
}

fn put_ranges(w: &mut impl Write, r: &[(i64, i64)]) -> io::Result<()> {
    w.write_all(&(r.len() as u32).to_le_bytes())?;
    for &(lo, hi) in r {
        w.write_all(&lo.to_le_bytes())?;
        w.write_all(&hi.to_le_bytes())?;
    }
    Ok(())
}

/// Writes an explicit model; lazy models have no table to write.
pub fn write_table(m: &SymbolicModel, w: &mut impl Write) -> Result<(), AbstractionError> {
    let io = |e: io::Error| AbstractionError::Table(e.to_string());
    let table = m
        .table()
        .ok_or_else(|| AbstractionError::Table("model is not explicit".into()))?;
    w.write_all(MAGIC).map_err(io)?;
    w.write_all(&(m.id as u32).to_le_bytes()).map_err(io)?;
    w.write_all(&[m.convention.code()]).map_err(io)?;
    let eta = to_exact_string(m.eta());
    w.write_all(&(eta.len() as u32).to_le_bytes()).map_err(io)?;
    w.write_all(eta.as_bytes()).map_err(io)?;
    put_ranges(w, &m.state.ranges).map_err(io)?;
    put_ranges(w, &label_ranges(m)).map_err(io)?;
    w.write_all(&m.state_count().unwrap_or(0).to_le_bytes())
        .map_err(io)?;
    w.write_all(&m.label_count().unwrap_or(0).to_le_bytes())
        .map_err(io)?;
    let mut buf = Vec::with_capacity(table.len() * 8);
    for &v in table {
        let x = if v == u32::MAX {
            OUT_OF_DOMAIN_INDEX
        } else {
            v as i64
        };
        buf.extend_from_slice(&x.to_le_bytes());
    }
    w.write_all(&buf).map_err(io)
}

struct Cursor<R> {
    r: R,
}

impl<R: Read> Cursor<R> {
    fn bytes<const N: usize>(&mut self) -> Result<[u8; N], AbstractionError> {
        let mut b = [0u8; N];
        self.r
            .read_exact(&mut b)
            .map_err(|e| AbstractionError::Table(e.to_string()))?;
        Ok(b)
    }

    fn u32(&mut self) -> Result<u32, AbstractionError> {
        Ok(u32::from_le_bytes(self.bytes()?))
    }

    fn u64(&mut self) -> Result<u64, AbstractionError> {
        Ok(u64::from_le_bytes(self.bytes()?))
    }

    fn i64(&mut self) -> Result<i64, AbstractionError> {
        Ok(i64::from_le_bytes(self.bytes()?))
    }

    fn ranges(&mut self) -> Result<Vec<(i64, i64)>, AbstractionError> {
        let n = self.u32()?;
        (0..n).map(|_| Ok((self.i64()?, self.i64()?))).collect()
    }
}

pub fn read_table(r: impl Read) -> Result<TableFile, AbstractionError> {
    let bad = |m: &str| AbstractionError::Table(m.to_string());
    let mut c = Cursor { r };
    if &c.bytes::<8>()? != MAGIC {
        return Err(bad("bad magic"));
    }
    let id = c.u32()?;
    let convention =
        Convention::from_code(c.bytes::<1>()?[0]).ok_or_else(|| bad("bad convention"))?;
    let len = c.u32()? as usize;
    let mut eta = vec![0u8; len];
    c.r.read_exact(&mut eta).map_err(|e| bad(&e.to_string()))?;
    let eta = String::from_utf8(eta).map_err(|_| bad("eta is not utf-8"))?;
    let state_ranges = c.ranges()?;
    let label_ranges = c.ranges()?;
    let states = c.u64()?;
    let labels = c.u64()?;
    let n = states
        .checked_mul(labels)
        .ok_or_else(|| bad("size overflow"))?;
    let successors = (0..n).map(|_| c.i64()).collect::<Result<Vec<_>, _>>()?;
    let mut rest = [0u8; 1];
    if c.r.read(&mut rest).map_err(|e| bad(&e.to_string()))? != 0 {
        return Err(bad("trailing bytes"));
    }
    Ok(TableFile {
        header: TableHeader {
            id,
            convention,
            eta,
            state_ranges,
            label_ranges,
            states,
            labels,
        },
        successors,
    })
}

/// Counts stored next to a table file.
pub fn sidecar(m: &SymbolicModel) -> Value {
    let states = m.state.cardinality();
    let labels = m.labels.cardinality();
    json!({
        "subsystem": m.id,
        "convention": m.convention,
        "eta": to_exact_string(m.eta()),
        "neighbors": m.labels.neighbors.iter().map(|(j, _)| *j).collect::<Vec<_>>(),
        "input_coords": m.labels.input_coords,
        "states": Count::from(&states),
        "labels": Count::from(&labels),
        "tcomplex": Count::from(&(&states * &labels)),
        "scomplex": Count::from(&(&states * &states * &labels)),
        "out_of_domain": m.stats.out_of_domain,
        "near_boundary": m.stats.near_boundary,
    })
}
