use num::{BigRational, BigUint, ToPrimitive};
use rayon::prelude::*;
use serde::Serialize;

use super::{lattice_of_box, near_boundary, quantize_index, AbstractionError, Convention, Lattice};
use crate::netspec::{NetworkSpec, Subsystem};

pub const DEFAULT_TRANSITION_CAP: u64 = 100_000_000;

const OUT_OF_DOMAIN: u32 = u32::MAX;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Explicit { cap: u64 },
    Lazy,
}

/// Labels of one subsystem: neighbour states followed by its own inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelSpace {
    pub neighbors: Vec<(usize, Lattice)>,
    /// Zero-based input coordinates that form the input part.
    pub input_coords: Vec<usize>,
    pub input: Lattice,
}

impl LabelSpace {
    pub fn cardinality(&self) -> BigUint {
        self.neighbors
            .iter()
            .fold(self.input.cardinality(), |acc, (_, l)| {
                acc * l.cardinality()
            })
    }

    pub fn len(&self) -> Option<u64> {
        self.cardinality().to_u64()
    }

    pub fn decode(&self, mut flat: u64) -> (Vec<Vec<i64>>, Vec<i64>) {
        let n_in = self.input.len().unwrap_or(1);
        let input = self.input.unflatten(flat % n_in);
        flat /= n_in;
        let mut neighbors = vec![Vec::new(); self.neighbors.len()];
        for (slot, (_, lat)) in self.neighbors.iter().enumerate().rev() {
            let n = lat.len().unwrap_or(1);
            neighbors[slot] = lat.unflatten(flat % n);
            flat /= n;
        }
        (neighbors, input)
    }

    pub fn encode(&self, neighbors: &[Vec<i64>], input: &[i64]) -> Option<u64> {
        let mut flat = 0u64;
        for ((_, lat), idx) in self.neighbors.iter().zip(neighbors) {
            flat = flat * lat.len()? + lat.flatten(idx)?;
        }
        Some(flat * self.input.len()? + self.input.flatten(input)?)
    }
}

/// Label space of subsystem `id` when every subsystem `j` uses `eta[j - 1]`.
pub fn label_space(
    net: &NetworkSpec,
    id: usize,
    eta: &[BigRational],
    convention: Convention,
) -> Result<LabelSpace, AbstractionError> {
    if id == 0 || id > net.len() {
        return Err(AbstractionError::UnknownSubsystem(id));
    }
    let sub = net.subsystem(id);
    let neighbor_ids: Vec<usize> = match convention {
        Convention::Restricted => sub.state_deps().into_iter().collect(),
        Convention::Full => (1..=net.len()).filter(|&j| j != id).collect(),
    };
    let neighbors = neighbor_ids
        .into_iter()
        .map(|j| Ok((j, lattice_of_box(&net.subsystem(j).state_box, &eta[j - 1])?)))
        .collect::<Result<Vec<_>, AbstractionError>>()?;
    let input_coords = match convention {
        Convention::Restricted => sub.used_inputs(),
        Convention::Full => (0..sub.input_dim()).collect(),
    };
    let bx: Vec<_> = input_coords
        .iter()
        .map(|&c| sub.input_box[c].clone())
        .collect();
    Ok(LabelSpace {
        neighbors,
        input_coords,
        input: lattice_of_box(&bx, &eta[id - 1])?,
    })
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct BuildStats {
    pub transitions: u64,
    pub out_of_domain: u64,
    pub near_boundary: u64,
}

/// Deterministic quantized abstraction of one subsystem.
#[derive(Debug, Clone)]
pub struct SymbolicModel {
    pub id: usize,
    pub convention: Convention,
    pub state: Lattice,
    pub labels: LabelSpace,
    pub subsystem: Subsystem,
    table: Option<Vec<u32>>,
    pub stats: BuildStats,
}

/// One successor evaluation: the quantized point (or `None` when it leaves
/// the state box) and whether some coordinate sat near a cell boundary.
pub type Step = (Option<Vec<i64>>, bool);

impl SymbolicModel {
    pub fn eta(&self) -> &BigRational {
        &self.state.eta
    }

    pub fn state_count(&self) -> Option<u64> {
        self.state.len()
    }

    pub fn label_count(&self) -> Option<u64> {
        self.labels.len()
    }

    pub fn is_explicit(&self) -> bool {
        self.table.is_some()
    }

    pub fn table(&self) -> Option<&[u32]> {
        self.table.as_deref()
    }

    /// Evaluates `f_i` at lattice points and quantizes the result.
    pub fn successor_point(
        &self,
        state: &[i64],
        neighbors: &[Vec<i64>],
        input: &[i64],
    ) -> Result<Step, AbstractionError> {
        let own = self.state.values(state);
        let nvals: Vec<(usize, Vec<f64>)> = self
            .labels
            .neighbors
            .iter()
            .zip(neighbors)
            .map(|((j, lat), idx)| (*j, lat.values(idx)))
            .collect();
        let mut u = vec![0.0; self.subsystem.input_dim()];
        for (&c, v) in self
            .labels
            .input_coords
            .iter()
            .zip(self.labels.input.values(input))
        {
            u[c] = v;
        }
        let id = self.id;
        let lookup = |j: usize, d: usize| -> f64 {
            if j == id {
                return own[d];
            }
            nvals
                .iter()
                .find(|(k, _)| *k == j)
                .map_or(0.0, |(_, v)| v[d])
        };
        let next = self
            .subsystem
            .eval(lookup, &u)
            .map_err(|source| AbstractionError::Eval { id, source })?;
        let eta = self.state.eta_f64();
        let near = next.iter().any(|&v| near_boundary(v, eta));
        let idx: Vec<i64> = next.iter().map(|&v| quantize_index(v, eta)).collect();
        Ok((self.state.contains(&idx).then_some(idx), near))
    }

    fn compute(&self, s: u64, l: u64) -> Result<(Option<u64>, bool), AbstractionError> {
        let (neighbors, input) = self.labels.decode(l);
        let (next, near) = self.successor_point(&self.state.unflatten(s), &neighbors, &input)?;
        Ok((next.and_then(|p| self.state.flatten(&p)), near))
    }

    /// Successor of flat state `s` under flat label `l`; `None` is out of domain.
    pub fn successor(&self, s: u64, l: u64) -> Result<Option<u64>, AbstractionError> {
        match &self.table {
            Some(t) => {
                let n = self.labels.len().ok_or(AbstractionError::IndexRange)?;
                let v = t[(s * n + l) as usize];
                Ok((v != OUT_OF_DOMAIN).then_some(v as u64))
            }
            None => Ok(self.compute(s, l)?.0),
        }
    }

    fn materialize(&mut self, cap: u64) -> Result<(), AbstractionError> {
        let needed = self.state.cardinality() * self.labels.cardinality();
        let fits = needed.to_u64().filter(|&n| n <= cap);
        let (Some(total), Some(n_states), Some(n_labels)) =
            (fits, self.state.len(), self.labels.len())
        else {
            return Err(AbstractionError::CapExceeded {
                needed: needed.to_string(),
                cap,
            });
        };
        if n_states >= OUT_OF_DOMAIN as u64 {
            return Err(AbstractionError::CapExceeded {
                needed: needed.to_string(),
                cap,
            });
        }
        let mut table = vec![OUT_OF_DOMAIN; total as usize];
        let rows: Vec<Result<(u64, u64), AbstractionError>> = table
            .par_chunks_mut(n_labels.max(1) as usize)
            .enumerate()
            .map(|(s, row)| {
                let (mut ood, mut near) = (0, 0);
                for (l, slot) in row.iter_mut().enumerate() {
                    let (next, nb) = self.compute(s as u64, l as u64)?;
                    match next {
                        Some(t) => *slot = t as u32,
                        None => ood += 1,
                    }
                    near += nb as u64;
                }
                Ok((ood, near))
            })
            .collect();
        let mut stats = BuildStats {
            transitions: total,
            ..Default::default()
        };
        for r in rows {
            let (ood, near) = r?;
            stats.out_of_domain += ood;
            stats.near_boundary += near;
        }
        self.table = Some(table);
        self.stats = stats;
        Ok(())
    }
}

/// Builds `S^eta(Sigma_id)` with every subsystem `j` quantized at `eta[j - 1]`.
pub fn build_symbolic_model(
    net: &NetworkSpec,
    id: usize,
    eta: &[BigRational],
    convention: Convention,
    mode: Mode,
) -> Result<SymbolicModel, AbstractionError> {
    let labels = label_space(net, id, eta, convention)?;
    let sub = net.subsystem(id);
    let mut model = SymbolicModel {
        id,
        convention,
        state: lattice_of_box(&sub.state_box, &eta[id - 1])?,
        labels,
        subsystem: sub.clone(),
        table: None,
        stats: BuildStats::default(),
    };
    if let Mode::Explicit { cap } = mode {
        model.materialize(cap)?;
    }
    Ok(model)
}
