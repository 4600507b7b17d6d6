//! Quantized lattices and the symbolic models built on them.

mod complexity;
mod model;
mod table_io;

use std::fmt;

use num::{BigInt, BigRational, BigUint, One, Signed, ToPrimitive};
use serde::Serialize;
use thiserror::Error;

use crate::netspec::{EvalError, Interval};
use crate::rational::to_f64;

pub use complexity::{
    complexity_counts, monolithic_counts, ComplexityJson, ComplexityReport, MonolithicCounts,
    MonolithicJson, SubsystemCounts,
};
pub use model::{
    build_symbolic_model, label_space, BuildStats, LabelSpace, Mode, SymbolicModel,
    DEFAULT_TRANSITION_CAP,
};
pub use table_io::{read_table, sidecar, write_table, TableFile, TableHeader, OUT_OF_DOMAIN_INDEX};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AbstractionError {
    #[error("eta must be positive")]
    NonPositiveEta,
    #[error("lattice is empty in dimension {dim}: eta {eta} is too coarse for [{lo}, {hi}]")]
    EmptyLattice {
        dim: usize,
        eta: String,
        lo: String,
        hi: String,
    },
    #[error("lattice index out of range")]
    IndexRange,
    #[error("explicit model needs {needed} transitions, cap is {cap}")]
    CapExceeded { needed: String, cap: u64 },
    #[error("subsystem {id}: {source}")]
    Eval { id: usize, source: EvalError },
    #[error("no subsystem {0}")]
    UnknownSubsystem(usize),
    #[error("table file: {0}")]
    Table(String),
}

/// How label spaces are formed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Convention {
    /// In-neighbour states and the inputs that occur in the dynamics.
    #[default]
    Restricted,
    /// Every other subsystem's state and the whole declared input box.
    Full,
}

impl Convention {
    pub fn code(self) -> u8 {
        match self {
            Convention::Restricted => 0,
            Convention::Full => 1,
        }
    }

    pub fn from_code(c: u8) -> Option<Self> {
        match c {
            0 => Some(Convention::Restricted),
            1 => Some(Convention::Full),
            _ => None,
        }
    }
}

impl fmt::Display for Convention {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Convention::Restricted => "restricted",
            Convention::Full => "full",
        })
    }
}

/// `eta * Z^n` intersected with a box, as per-dimension index ranges.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Lattice {
    pub eta: BigRational,
    pub ranges: Vec<(i64, i64)>,
}

fn to_i64(x: &BigInt) -> Result<i64, AbstractionError> {
    x.to_i64().ok_or(AbstractionError::IndexRange)
}

pub fn lattice_of_box(bx: &[Interval], eta: &BigRational) -> Result<Lattice, AbstractionError> {
    if !eta.is_positive() {
        return Err(AbstractionError::NonPositiveEta);
    }
    let mut ranges = Vec::with_capacity(bx.len());
    for (dim, iv) in bx.iter().enumerate() {
        let lo = to_i64(&(&iv.lo / eta).ceil().to_integer())?;
        let hi = to_i64(&(&iv.hi / eta).floor().to_integer())?;
        if lo > hi {
            return Err(AbstractionError::EmptyLattice {
                dim,
                eta: eta.to_string(),
                lo: iv.lo.to_string(),
                hi: iv.hi.to_string(),
            });
        }
        ranges.push((lo, hi));
    }
    Ok(Lattice {
        eta: eta.clone(),
        ranges,
    })
}

impl Lattice {
    pub fn dim(&self) -> usize {
        self.ranges.len()
    }

    pub fn eta_f64(&self) -> f64 {
        to_f64(&self.eta)
    }

    pub fn axis_len(&self, d: usize) -> u64 {
        let (lo, hi) = self.ranges[d];
        (hi - lo + 1) as u64
    }

    pub fn cardinality(&self) -> BigUint {
        self.ranges.iter().fold(BigUint::one(), |acc, &(lo, hi)| {
            acc * BigUint::from((hi - lo + 1) as u64)
        })
    }

    /// Cardinality if it fits in a `u64`.
    pub fn len(&self) -> Option<u64> {
        (0..self.dim()).try_fold(1u64, |acc, d| acc.checked_mul(self.axis_len(d)))
    }

    pub fn contains(&self, idx: &[i64]) -> bool {
        idx.len() == self.dim()
            && idx
                .iter()
                .zip(&self.ranges)
                .all(|(&i, &(lo, hi))| lo <= i && i <= hi)
    }

    /// Row-major position of `idx`; the first dimension varies slowest.
    pub fn flatten(&self, idx: &[i64]) -> Option<u64> {
        if !self.contains(idx) {
            return None;
        }
        let mut flat = 0u64;
        for (d, &i) in idx.iter().enumerate() {
            flat = flat * self.axis_len(d) + (i - self.ranges[d].0) as u64;
        }
        Some(flat)
    }

    pub fn unflatten(&self, mut flat: u64) -> Vec<i64> {
        let mut idx = vec![0i64; self.dim()];
        for d in (0..self.dim()).rev() {
            let n = self.axis_len(d);
            idx[d] = self.ranges[d].0 + (flat % n) as i64;
            flat /= n;
        }
        idx
    }

    pub fn values(&self, idx: &[i64]) -> Vec<f64> {
        let eta = self.eta_f64();
        idx.iter().map(|&i| coordinate(i, eta)).collect()
    }

    /// Every point in flat order.
    pub fn points(&self) -> impl Iterator<Item = Vec<i64>> + '_ {
        let n = self.len().unwrap_or(u64::MAX);
        (0..n).map(move |f| self.unflatten(f))
    }
}

/// Real value of a lattice coordinate.
pub fn coordinate(index: i64, eta: f64) -> f64 {
    index as f64 * eta
}

/// Index of `ceil(x / eta)`.
pub fn quantize_index(x: f64, eta: f64) -> i64 {
    (x / eta).ceil() as i64
}

pub fn quantize_point(x: &[f64], eta: &BigRational) -> Vec<i64> {
    let e = to_f64(eta);
    x.iter().map(|&v| quantize_index(v, e)).collect()
}

/// True when `x / eta` lies within `1e-12` of an integer without being one.
pub fn near_boundary(x: f64, eta: f64) -> bool {
    let q = x / eta;
    let gap = (q - q.round()).abs();
    gap != 0.0 && gap <= 1e-12 * q.abs().max(1.0)
}
