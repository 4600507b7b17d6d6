use num::BigRational;
use rayon::prelude::*;
use serde::Serialize;

use super::bits::{bitset, intersects, BitMatrix};
use super::relation::{Outputs, Relation, Scale};
use super::{BisimError, ExplicitSystem};
use crate::rational::Num;

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Counterexample {
    /// Related states whose outputs are farther apart than the precision.
    Output {
        x1: Vec<i64>,
        x2: Vec<i64>,
        distance: Num,
    },
    /// A transition of the first system with no related answer from the second.
    UnmatchedForward {
        x1: Vec<i64>,
        x2: Vec<i64>,
        label: Vec<i64>,
        successor: Vec<i64>,
    },
    UnmatchedBackward {
        x1: Vec<i64>,
        x2: Vec<i64>,
        label: Vec<i64>,
        successor: Vec<i64>,
    },
    /// A state related to nothing on the other side.
    Uncovered { side: u8, state: Vec<i64> },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Witness {
    Canonical,
    Exhaustive,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct Stats {
    pub pairs: u64,
    pub transitions_checked: u64,
    pub canonical: u64,
    pub exhaustive: u64,
}

impl Stats {
    fn add(&mut self, o: &Stats) {
        self.pairs += o.pairs;
        self.transitions_checked += o.transitions_checked;
        self.canonical += o.canonical;
        self.exhaustive += o.exhaustive;
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BisimReport {
    pub verdict: bool,
    pub counterexample: Option<Counterexample>,
    pub stats: Stats,
    /// Every state of the second system is related to some state of the first.
    pub covers_second: bool,
    pub covers_first: bool,
    pub witness_order: [Witness; 2],
}

fn canonical_map(from: &ExplicitSystem, to: &ExplicitSystem) -> Vec<Option<usize>> {
    (0..from.labels)
        .into_par_iter()
        .map(|l| {
            to.block
                .quantize_label(&from.block.label_values(l as u64))
                .map(|x| x as usize)
        })
        .collect()
}

fn indices(s: &ExplicitSystem, x: usize) -> Vec<i64> {
    s.block.state_indices(x as u64)
}

/// Exhaustively checks that `rel` is an `eps`-approximate bisimulation
/// relating every state on both sides.
pub fn check_relation(
    s1: &ExplicitSystem,
    s2: &ExplicitSystem,
    eps: &BigRational,
    rel: &Relation,
) -> Result<BisimReport, BisimError> {
    let scale = Scale::for_systems(s1, s2, eps);
    let r = rel.materialize(s1, s2, &scale)?;
    let o1 = Outputs::new(s1, &scale)?;
    let o2 = Outputs::new(s2, &scale)?;
    if o1.ids != o2.ids {
        return Err(BisimError::Layout);
    }
    let eps_int = scale
        .floor(eps)
        .ok_or_else(|| BisimError::Invalid("precision overflow".into()))?;
    let c12 = canonical_map(s1, s2);
    let c21 = canonical_map(s2, s1);

    let rows: Vec<(Stats, Option<Counterexample>)> = (0..s1.states)
        .into_par_iter()
        .map(|a| {
            let mut st = Stats::default();
            for b in r.row_ones(a) {
                st.pairs += 1;
                let d = o1.distance(a, &o2, b);
                if d > eps_int {
                    let distance = BigRational::new(d.into(), scale.denom.clone());
                    return (
                        st,
                        Some(Counterexample::Output {
                            x1: indices(s1, a),
                            x2: indices(s2, b),
                            distance: Num::from(&distance),
                        }),
                    );
                }
                for &(t1, l1) in s1.post(a) {
                    st.transitions_checked += 1;
                    let t1 = t1 as usize;
                    let canon = c12[l1 as usize]
                        .and_then(|l2| s2.successor(b, l2))
                        .is_some_and(|t2| r.get(t1, t2));
                    if canon {
                        st.canonical += 1;
                    } else if s2.post(b).iter().any(|&(t2, _)| r.get(t1, t2 as usize)) {
                        st.exhaustive += 1;
                    } else {
                        let cex = Counterexample::UnmatchedForward {
                            x1: indices(s1, a),
                            x2: indices(s2, b),
                            label: s1.block.label_indices(l1 as u64),
                            successor: indices(s1, t1),
                        };
                        return (st, Some(cex));
                    }
                }
                for &(t2, l2) in s2.post(b) {
                    st.transitions_checked += 1;
                    let t2 = t2 as usize;
                    let canon = c21[l2 as usize]
                        .and_then(|l1| s1.successor(a, l1))
                        .is_some_and(|t1| r.get(t1, t2));
                    if canon {
                        st.canonical += 1;
                    } else if s1.post(a).iter().any(|&(t1, _)| r.get(t1 as usize, t2)) {
                        st.exhaustive += 1;
                    } else {
                        let cex = Counterexample::UnmatchedBackward {
                            x1: indices(s1, a),
                            x2: indices(s2, b),
                            label: s2.block.label_indices(l2 as u64),
                            successor: indices(s2, t2),
                        };
                        return (st, Some(cex));
                    }
                }
            }
            (st, None)
        })
        .collect();

    let mut stats = Stats::default();
    let mut counterexample = None;
    for (st, cex) in rows {
        stats.add(&st);
        if counterexample.is_none() {
            counterexample = cex;
        }
    }
    let uncovered_second = r.covers_cols();
    let uncovered_first = (0..s1.states).find(|&a| !r.row_any(a));
    if counterexample.is_none() {
        counterexample = match (uncovered_second, uncovered_first) {
            (Some(b), _) => Some(Counterexample::Uncovered {
                side: 2,
                state: indices(s2, b),
            }),
            (None, Some(a)) => Some(Counterexample::Uncovered {
                side: 1,
                state: indices(s1, a),
            }),
            (None, None) => None,
        };
    }
    Ok(BisimReport {
        verdict: counterexample.is_none(),
        counterexample,
        stats,
        covers_second: uncovered_second.is_none(),
        covers_first: uncovered_first.is_none(),
        witness_order: [Witness::Canonical, Witness::Exhaustive],
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Greatest {
    pub relation: BitMatrix,
    pub iterations: usize,
}

impl Greatest {
    pub fn is_empty(&self) -> bool {
        self.relation.count() == 0
    }

    /// The relation relates every state on both sides.
    pub fn is_total(&self) -> bool {
        self.relation.covers_cols().is_none()
            && (0..self.relation.rows()).all(|a| self.relation.row_any(a))
    }
}

/// Largest `eps`-approximate bisimulation relation, by pair refinement from
/// the output-distance relation.
pub fn greatest_bisimulation(
    s1: &ExplicitSystem,
    s2: &ExplicitSystem,
    eps: &BigRational,
    cap: u64,
) -> Result<Greatest, BisimError> {
    let pairs = s1.states as u64 * s2.states as u64;
    if pairs > cap {
        return Err(BisimError::CapExceeded {
            what: "pair relation",
            needed: pairs.to_string(),
            cap,
        });
    }
    let scale = Scale::for_systems(s1, s2, eps);
    let o1 = Outputs::new(s1, &scale)?;
    let o2 = Outputs::new(s2, &scale)?;
    if o1.ids != o2.ids {
        return Err(BisimError::Layout);
    }
    let eps_int = scale
        .floor(eps)
        .ok_or_else(|| BisimError::Invalid("precision overflow".into()))?;
    let rows0: Vec<Vec<u64>> = (0..s1.states)
        .into_par_iter()
        .map(|a| {
            bitset(
                s2.states,
                (0..s2.states).filter(|&b| o1.distance(a, &o2, b) <= eps_int),
            )
        })
        .collect();
    let mut r = BitMatrix::from_rows(s2.states, rows0);
    let p1: Vec<Vec<u64>> = (0..s1.states)
        .map(|a| bitset(s1.states, s1.post(a).iter().map(|p| p.0 as usize)))
        .collect();
    let p2: Vec<Vec<u64>> = (0..s2.states)
        .map(|b| bitset(s2.states, s2.post(b).iter().map(|p| p.0 as usize)))
        .collect();
    let mut iterations = 0;
    loop {
        iterations += 1;
        let t = r.transpose();
        let rows: Vec<Vec<u64>> = (0..s1.states)
            .into_par_iter()
            .map(|a| {
                let keep = r.row_ones(a).filter(|&b| {
                    s1.post(a)
                        .iter()
                        .all(|&(t1, _)| intersects(r.row(t1 as usize), &p2[b]))
                        && s2
                            .post(b)
                            .iter()
                            .all(|&(t2, _)| intersects(t.row(t2 as usize), &p1[a]))
                });
                bitset(s2.states, keep)
            })
            .collect();
        let next = BitMatrix::from_rows(s2.states, rows);
        if next == r {
            return Ok(Greatest {
                relation: r,
                iterations,
            });
        }
        r = next;
    }
}
