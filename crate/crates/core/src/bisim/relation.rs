use std::collections::BTreeMap;

use num::integer::Integer;
use num::{BigInt, BigRational, One, Signed, ToPrimitive};
use rayon::prelude::*;

use super::bits::BitMatrix;
use super::{BisimError, ExplicitSystem};
use crate::gains::AggregateCert;

/// Candidate relation between the states of two systems.
#[derive(Debug, Clone, PartialEq)]
pub enum Relation {
    Extensional(BitMatrix),
    /// `sum_i w_i * |x_i - x'_i|_inf <= bound` over subsystems `i`.
    WeightedNorm {
        weights: BTreeMap<usize, BigRational>,
        bound: BigRational,
    },
}

impl Relation {
    /// Lyapunov sublevel set of a component certificate at precision `eps`.
    pub fn lyapunov(cert: &AggregateCert, eps: &BigRational) -> Self {
        Relation::WeightedNorm {
            weights: cert
                .members
                .iter()
                .copied()
                .zip(cert.lambda.entries.iter().cloned())
                .collect(),
            bound: cert.alpha_lower.apply(eps),
        }
    }

    /// `max_i |x_i - x'_i|_inf <= bound` with unit weights on one subsystem.
    pub fn unit_level(id: usize, bound: BigRational) -> Self {
        Relation::WeightedNorm {
            weights: BTreeMap::from([(id, BigRational::one())]),
            bound,
        }
    }

    pub fn inverse(&self) -> Self {
        match self {
            Relation::Extensional(m) => Relation::Extensional(m.transpose()),
            r => r.clone(),
        }
    }

    pub fn materialize(
        &self,
        s1: &ExplicitSystem,
        s2: &ExplicitSystem,
        scale: &Scale,
    ) -> Result<BitMatrix, BisimError> {
        match self {
            Relation::Extensional(m) => {
                if m.rows() != s1.states || m.cols() != s2.states {
                    return Err(BisimError::Invalid(
                        "relation shape does not match the systems".into(),
                    ));
                }
                Ok(m.clone())
            }
            Relation::WeightedNorm { weights, bound } => {
                let o1 = Outputs::new(s1, scale)?;
                let o2 = Outputs::new(s2, scale)?;
                if o1.ids != o2.ids {
                    return Err(BisimError::Layout);
                }
                let wden = weights
                    .values()
                    .fold(BigInt::one(), |acc, w| acc.lcm(w.denom()));
                let wint: Vec<i128> = o1
                    .groups
                    .iter()
                    .map(|(id, _)| {
                        weights.get(id).map_or(Some(0), |w| {
                            (w * BigRational::from_integer(wden.clone()))
                                .to_integer()
                                .to_i128()
                        })
                    })
                    .collect::<Option<_>>()
                    .ok_or_else(|| BisimError::Invalid("weights overflow".into()))?;
                let rhs = (bound * BigRational::from_integer(&scale.denom * &wden))
                    .floor()
                    .to_integer()
                    .to_i128()
                    .ok_or_else(|| BisimError::Invalid("bound overflow".into()))?;
                let rows = (0..s1.states)
                    .into_par_iter()
                    .map(|a| {
                        let mut bits = vec![0u64; s2.states.div_ceil(64)];
                        for b in 0..s2.states {
                            let v: i128 = o1
                                .group_distances(a, &o2, b)
                                .zip(&wint)
                                .map(|(d, w)| d * w)
                                .sum();
                            if v <= rhs {
                                bits[b / 64] |= 1 << (b % 64);
                            }
                        }
                        bits
                    })
                    .collect();
                Ok(BitMatrix::from_rows(s2.states, rows))
            }
        }
    }
}

/// Common denominator making every lattice coordinate and bound an integer.
#[derive(Debug, Clone, PartialEq)]
pub struct Scale {
    pub denom: BigInt,
}

impl Scale {
    pub fn new<'a>(values: impl IntoIterator<Item = &'a BigRational>) -> Self {
        Scale {
            denom: values
                .into_iter()
                .fold(BigInt::one(), |acc, v| acc.lcm(v.denom())),
        }
    }

    pub fn for_systems(s1: &ExplicitSystem, s2: &ExplicitSystem, eps: &BigRational) -> Self {
        let c1 = s1.block.coordinates();
        let c2 = s2.block.coordinates();
        Scale::new(c1.iter().chain(&c2).map(|(_, e)| e).chain([eps]))
    }

    /// `floor(x * denom)`.
    pub fn floor(&self, x: &BigRational) -> Option<i128> {
        (x * BigRational::from_integer(self.denom.clone()))
            .floor()
            .to_integer()
            .to_i128()
    }
}

/// Integer-scaled state coordinates of an explicit system.
pub struct Outputs {
    pub ids: Vec<usize>,
    /// Subsystem id with its coordinate range.
    pub groups: Vec<(usize, std::ops::Range<usize>)>,
    pub values: Vec<Vec<i128>>,
}

impl Outputs {
    pub fn new(s: &ExplicitSystem, scale: &Scale) -> Result<Self, BisimError> {
        let coords = s.block.coordinates();
        let factors: Vec<i128> = coords
            .iter()
            .map(|(_, eta)| {
                let x = eta * BigRational::from_integer(scale.denom.clone());
                if x.is_integer() && x.is_positive() {
                    x.to_integer().to_i128()
                } else {
                    None
                }
            })
            .collect::<Option<_>>()
            .ok_or_else(|| BisimError::Invalid("scale does not cover the lattice".into()))?;
        let mut groups: Vec<(usize, std::ops::Range<usize>)> = Vec::new();
        for (c, (id, _)) in coords.iter().enumerate() {
            match groups.last_mut() {
                Some((g, r)) if g == id => r.end = c + 1,
                _ => groups.push((*id, c..c + 1)),
            }
        }
        let values = (0..s.states)
            .into_par_iter()
            .map(|st| {
                s.block
                    .state_indices(st as u64)
                    .iter()
                    .zip(&factors)
                    .map(|(&i, &f)| i as i128 * f)
                    .collect()
            })
            .collect();
        Ok(Outputs {
            ids: coords.iter().map(|c| c.0).collect(),
            groups,
            values,
        })
    }

    pub fn group_distances<'a>(
        &'a self,
        a: usize,
        other: &'a Outputs,
        b: usize,
    ) -> impl Iterator<Item = i128> + 'a {
        let (x, y) = (&self.values[a], &other.values[b]);
        self.groups
            .iter()
            .map(move |(_, r)| r.clone().map(|c| (x[c] - y[c]).abs()).max().unwrap_or(0))
    }

    /// Infinity-norm distance, the maximum over subsystems.
    pub fn distance(&self, a: usize, other: &Outputs, b: usize) -> i128 {
        self.group_distances(a, other, b).max().unwrap_or(0)
    }
}
