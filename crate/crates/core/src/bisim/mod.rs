//! Composition of symbolic models and approximate bisimulation checks.

pub mod bits;
mod check;
mod compose;
mod relation;
mod spot;

use num::BigRational;
use rayon::prelude::*;
use thiserror::Error;

use crate::abstraction::{
    build_symbolic_model, quantize_index, AbstractionError, Mode, SymbolicModel,
};
use crate::netspec::NetworkSpec;

pub use bits::BitMatrix;
pub use check::{
    check_relation, greatest_bisimulation, BisimReport, Counterexample, Greatest, Stats, Witness,
};
pub use compose::{compose, ComponentModel, ComposedSystem};
pub use relation::{Relation, Scale};
pub use spot::{spot_check, SpotFailure, SpotReport};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BisimError {
    #[error(transparent)]
    Abstraction(#[from] AbstractionError),
    #[error("subsystem {id} reads {j} on a lattice that differs from {j}'s state lattice")]
    LatticeMismatch { id: usize, j: usize },
    #[error("systems have different coordinate layouts")]
    Layout,
    #[error("{what} has {needed} entries, cap is {cap}")]
    CapExceeded {
        what: &'static str,
        needed: String,
        cap: u64,
    },
    #[error("refinement factor must be at least 1")]
    Refinement,
    #[error("{0}")]
    Invalid(String),
}

/// A deterministic transition system over flat state and label indices.
pub trait Block: Sync {
    fn state_count(&self) -> Option<u64>;
    fn label_count(&self) -> Option<u64>;
    fn successor(&self, s: u64, l: u64) -> Result<Option<u64>, AbstractionError>;
    /// Lattice indices of every state coordinate, subsystems stacked in order.
    fn state_indices(&self, s: u64) -> Vec<i64>;
    /// Owning subsystem and quantization parameter of each state coordinate.
    fn coordinates(&self) -> Vec<(usize, BigRational)>;
    fn label_indices(&self, l: u64) -> Vec<i64>;
    fn label_values(&self, l: u64) -> Vec<f64>;
    /// Label nearest (by the quantizer) to the given real label values.
    fn quantize_label(&self, values: &[f64]) -> Option<u64>;
}

impl Block for SymbolicModel {
    fn state_count(&self) -> Option<u64> {
        self.state.len()
    }

    fn label_count(&self) -> Option<u64> {
        self.labels.len()
    }

    fn successor(&self, s: u64, l: u64) -> Result<Option<u64>, AbstractionError> {
        SymbolicModel::successor(self, s, l)
    }

    fn state_indices(&self, s: u64) -> Vec<i64> {
        self.state.unflatten(s)
    }

    fn coordinates(&self) -> Vec<(usize, BigRational)> {
        vec![(self.id, self.state.eta.clone()); self.state.dim()]
    }

    fn label_indices(&self, l: u64) -> Vec<i64> {
        let (n, u) = self.labels.decode(l);
        n.into_iter().flatten().chain(u).collect()
    }

    fn label_values(&self, l: u64) -> Vec<f64> {
        let (n, u) = self.labels.decode(l);
        let mut out = Vec::new();
        for ((_, lat), idx) in self.labels.neighbors.iter().zip(&n) {
            out.extend(lat.values(idx));
        }
        out.extend(self.labels.input.values(&u));
        out
    }

    fn quantize_label(&self, values: &[f64]) -> Option<u64> {
        let mut rest = values;
        let mut neighbors = Vec::new();
        for (_, lat) in &self.labels.neighbors {
            let (head, tail) = rest.split_at_checked(lat.dim())?;
            neighbors.push(
                head.iter()
                    .map(|&v| quantize_index(v, lat.eta_f64()))
                    .collect::<Vec<_>>(),
            );
            rest = tail;
        }
        let e = self.labels.input.eta_f64();
        let input: Vec<i64> = rest.iter().map(|&v| quantize_index(v, e)).collect();
        self.labels.encode(&neighbors, &input)
    }
}

/// A block with its transition table and successor sets in memory.
pub struct ExplicitSystem<'a> {
    pub block: &'a dyn Block,
    pub states: usize,
    pub labels: usize,
    succ: Vec<u32>,
    /// Distinct successors per state with one label reaching each.
    post: Vec<Vec<(u32, u32)>>,
}

const NONE: u32 = u32::MAX;

impl<'a> ExplicitSystem<'a> {
    pub fn new(block: &'a dyn Block, cap: u64) -> Result<Self, BisimError> {
        let (Some(n), Some(m)) = (block.state_count(), block.label_count()) else {
            return Err(BisimError::CapExceeded {
                what: "transition table",
                needed: "more than 2^64".into(),
                cap,
            });
        };
        let total = n
            .checked_mul(m)
            .filter(|&t| t <= cap && n < NONE as u64 && m < NONE as u64);
        let Some(total) = total else {
            return Err(BisimError::CapExceeded {
                what: "transition table",
                needed: (n as u128 * m as u128).to_string(),
                cap,
            });
        };
        let mut succ = vec![NONE; total as usize];
        succ.par_chunks_mut(m.max(1) as usize)
            .enumerate()
            .try_for_each(|(s, row)| -> Result<(), AbstractionError> {
                for (l, slot) in row.iter_mut().enumerate() {
                    if let Some(t) = block.successor(s as u64, l as u64)? {
                        *slot = t as u32;
                    }
                }
                Ok(())
            })?;
        let post = succ
            .par_chunks(m.max(1) as usize)
            .map(|row| {
                let mut p: Vec<(u32, u32)> = row
                    .iter()
                    .enumerate()
                    .filter(|(_, &t)| t != NONE)
                    .map(|(l, &t)| (t, l as u32))
                    .collect();
                p.sort_unstable();
                p.dedup_by_key(|e| e.0);
                p
            })
            .collect();
        Ok(ExplicitSystem {
            block,
            states: n as usize,
            labels: m as usize,
            succ,
            post,
        })
    }

    pub fn successor(&self, s: usize, l: usize) -> Option<usize> {
        let t = self.succ[s * self.labels + l];
        (t != NONE).then_some(t as usize)
    }

    pub fn post(&self, s: usize) -> &[(u32, u32)] {
        &self.post[s]
    }

    pub fn transitions(&self) -> u64 {
        self.succ.iter().filter(|&&t| t != NONE).count() as u64
    }
}

/// Models of every subsystem at `eta / factor`.
pub fn reference_models(
    net: &NetworkSpec,
    eta: &[BigRational],
    factor: u32,
    convention: crate::abstraction::Convention,
    mode: Mode,
) -> Result<Vec<SymbolicModel>, BisimError> {
    if factor == 0 {
        return Err(BisimError::Refinement);
    }
    let fine: Vec<BigRational> = eta
        .iter()
        .map(|e| e / BigRational::from_integer(factor.into()))
        .collect();
    (1..=net.len())
        .map(|id| Ok(build_symbolic_model(net, id, &fine, convention, mode)?))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::abstraction::{coordinate, Convention};
    use crate::bundled;
    use crate::rational::{ratio, to_f64};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn reference_lattices_refine() {
        let net = bundled::toy_single();
        let eta = [ratio(1, 40)];
        let coarse = reference_models(&net, &eta, 1, Convention::Restricted, Mode::Lazy).unwrap();
        assert_eq!(coarse[0].state_count(), Some(81));
        assert_eq!(coarse[0].eta(), &eta[0]);
        let fine = reference_models(&net, &eta, 8, Convention::Restricted, Mode::Lazy).unwrap();
        assert_eq!(fine[0].state_count(), Some(641));
        assert_eq!(
            fine[0].state.axis_len(0) - 1,
            8 * (coarse[0].state.axis_len(0) - 1)
        );
        assert!(reference_models(&net, &eta, 0, Convention::Restricted, Mode::Lazy).is_err());
    }

    #[test]
    fn reference_successors_quantize_near_the_abstraction() {
        let net = bundled::toy_pair();
        let eta = [ratio(3, 200), ratio(3, 200)];
        let fine = reference_models(&net, &eta, 4, Convention::Restricted, Mode::Lazy).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for id in 1..=2 {
            let coarse =
                build_symbolic_model(&net, id, &eta, Convention::Restricted, Mode::Lazy).unwrap();
            let f = &fine[id - 1];
            let e = to_f64(&eta[id - 1]);
            for _ in 0..10_000 {
                // a coarse lattice point is also a fine one
                let s = rng.gen_range(coarse.state.ranges[0].0..=coarse.state.ranges[0].1);
                let j = rng.gen_range(
                    coarse.labels.neighbors[0].1.ranges[0].0
                        ..=coarse.labels.neighbors[0].1.ranges[0].1,
                );
                let u = rng
                    .gen_range(coarse.labels.input.ranges[0].0..=coarse.labels.input.ranges[0].1);
                let (a, _) = coarse.successor_point(&[s], &[vec![j]], &[u]).unwrap();
                let (b, _) = f
                    .successor_point(&[4 * s], &[vec![4 * j]], &[4 * u])
                    .unwrap();
                if let (Some(a), Some(b)) = (a, b) {
                    let fine_value = coordinate(b[0], f.state.eta_f64());
                    let requantized = coordinate(quantize_index(fine_value, e), e);
                    assert!((requantized - coordinate(a[0], e)).abs() <= e + 1e-12);
                }
            }
        }
    }

    #[test]
    fn explicit_system_collects_distinct_successors() {
        let net = bundled::toy_single();
        let m = build_symbolic_model(&net, 1, &[ratio(1, 4)], Convention::Restricted, Mode::Lazy)
            .unwrap();
        let x = ExplicitSystem::new(&m, 1000).unwrap();
        assert_eq!((x.states, x.labels), (9, 9));
        for s in 0..9 {
            let mut seen: Vec<usize> = (0..9).filter_map(|l| x.successor(s, l)).collect();
            seen.sort();
            seen.dedup();
            assert_eq!(
                x.post(s).iter().map(|p| p.0 as usize).collect::<Vec<_>>(),
                seen
            );
            for &(t, l) in x.post(s) {
                assert_eq!(x.successor(s, l as usize), Some(t as usize));
            }
        }
        assert!(ExplicitSystem::new(&m, 80).is_err());
        assert_eq!(m.quantize_label(&m.label_values(5)), Some(5));
    }
}
