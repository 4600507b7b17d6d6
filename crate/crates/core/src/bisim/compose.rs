use std::collections::BTreeSet;

use num::{BigRational, BigUint, ToPrimitive};

use super::{BisimError, Block};
use crate::abstraction::{
    lattice_of_box, quantize_index, AbstractionError, Lattice, SymbolicModel,
};
use crate::netspec::{Interval, NetworkSpec, Subsystem};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Source {
    Member(usize),
    External(usize),
}

/// Lazy product of symbolic models. Neighbour slots that name a member are
/// fed from the joint state; the others become labels.
#[derive(Debug, Clone)]
pub struct ComposedSystem {
    pub models: Vec<SymbolicModel>,
    pub external: Vec<(usize, Lattice)>,
    sources: Vec<Vec<Source>>,
    state_sizes: Vec<u64>,
    label_sizes: Vec<u64>,
}

pub fn compose(mut models: Vec<SymbolicModel>) -> Result<ComposedSystem, BisimError> {
    models.sort_by_key(|m| m.id);
    let ids: Vec<usize> = models.iter().map(|m| m.id).collect();
    if ids.windows(2).any(|w| w[0] == w[1]) {
        return Err(BisimError::Invalid("a subsystem appears twice".into()));
    }
    let mut external: Vec<(usize, Lattice)> = Vec::new();
    for m in &models {
        for (j, lat) in &m.labels.neighbors {
            match ids.iter().position(|i| i == j) {
                Some(p) => {
                    if *lat != models[p].state {
                        return Err(BisimError::LatticeMismatch { id: m.id, j: *j });
                    }
                }
                None => match external.iter().find(|(k, _)| k == j) {
                    Some((_, l)) if l != lat => {
                        return Err(BisimError::LatticeMismatch { id: m.id, j: *j })
                    }
                    Some(_) => {}
                    None => external.push((*j, lat.clone())),
                },
            }
        }
    }
    external.sort_by_key(|e| e.0);
    let sources = models
        .iter()
        .map(|m| {
            m.labels
                .neighbors
                .iter()
                .map(|(j, _)| match ids.iter().position(|i| i == j) {
                    Some(p) => Source::Member(p),
                    None => Source::External(external.iter().position(|e| e.0 == *j).unwrap()),
                })
                .collect()
        })
        .collect();
    let state_sizes = models
        .iter()
        .map(|m| m.state.len().unwrap_or(u64::MAX))
        .collect();
    let label_sizes = external
        .iter()
        .map(|(_, l)| l.len().unwrap_or(u64::MAX))
        .chain(
            models
                .iter()
                .map(|m| m.labels.input.len().unwrap_or(u64::MAX)),
        )
        .collect();
    Ok(ComposedSystem {
        models,
        external,
        sources,
        state_sizes,
        label_sizes,
    })
}

fn product(cards: impl Iterator<Item = BigUint>) -> Option<u64> {
    cards.fold(BigUint::from(1u32), |a, c| a * c).to_u64()
}

/// Mixed-radix split of `flat` into digits of the given sizes, most
/// significant first.
fn split(mut flat: u64, sizes: &[u64]) -> Vec<u64> {
    let mut out = vec![0; sizes.len()];
    for (k, &n) in sizes.iter().enumerate().rev() {
        out[k] = flat % n;
        flat /= n;
    }
    out
}

fn join(digits: &[u64], sizes: &[u64]) -> u64 {
    digits
        .iter()
        .zip(sizes)
        .fold(0, |acc, (&d, &n)| acc * n + d)
}

impl ComposedSystem {
    pub fn ids(&self) -> Vec<usize> {
        self.models.iter().map(|m| m.id).collect()
    }

    /// One joint step on index vectors; `None` when any member leaves its box.
    pub fn joint_successor(
        &self,
        states: &[Vec<i64>],
        external: &[Vec<i64>],
        inputs: &[Vec<i64>],
    ) -> Result<Option<Vec<Vec<i64>>>, AbstractionError> {
        let mut next = Vec::with_capacity(self.models.len());
        for (p, m) in self.models.iter().enumerate() {
            let neighbors: Vec<Vec<i64>> = self.sources[p]
                .iter()
                .map(|s| match *s {
                    Source::Member(q) => states[q].clone(),
                    Source::External(e) => external[e].clone(),
                })
                .collect();
            let (Some(sf), Some(lf)) = (
                m.state.flatten(&states[p]),
                m.labels.encode(&neighbors, &inputs[p]),
            ) else {
                return Err(AbstractionError::IndexRange);
            };
            match m.successor(sf, lf)? {
                Some(t) => next.push(m.state.unflatten(t)),
                None => return Ok(None),
            }
        }
        Ok(Some(next))
    }

    fn decode_label(&self, l: u64) -> (Vec<Vec<i64>>, Vec<Vec<i64>>) {
        let digits = split(l, &self.label_sizes);
        let ne = self.external.len();
        let external = self
            .external
            .iter()
            .zip(&digits)
            .map(|((_, lat), &d)| lat.unflatten(d))
            .collect();
        let inputs = self
            .models
            .iter()
            .zip(&digits[ne..])
            .map(|(m, &d)| m.labels.input.unflatten(d))
            .collect();
        (external, inputs)
    }
}

impl Block for ComposedSystem {
    fn state_count(&self) -> Option<u64> {
        product(self.models.iter().map(|m| m.state.cardinality()))
    }

    fn label_count(&self) -> Option<u64> {
        product(
            self.external
                .iter()
                .map(|(_, l)| l.cardinality())
                .chain(self.models.iter().map(|m| m.labels.input.cardinality())),
        )
    }

    /// Works on flat digits: member label spaces are laid out over the same
    /// lattices, so each member label is a mixed-radix join of state and
    /// label digits.
    fn successor(&self, s: u64, l: u64) -> Result<Option<u64>, AbstractionError> {
        let sd = split(s, &self.state_sizes);
        let ld = split(l, &self.label_sizes);
        let ne = self.external.len();
        let mut next = Vec::with_capacity(self.models.len());
        for (p, m) in self.models.iter().enumerate() {
            let mut lf = 0u64;
            for src in &self.sources[p] {
                let (d, n) = match *src {
                    Source::Member(q) => (sd[q], self.state_sizes[q]),
                    Source::External(e) => (ld[e], self.label_sizes[e]),
                };
                lf = lf * n + d;
            }
            lf = lf * self.label_sizes[ne + p] + ld[ne + p];
            match m.successor(sd[p], lf)? {
                Some(t) => next.push(t),
                None => return Ok(None),
            }
        }
        Ok(Some(join(&next, &self.state_sizes)))
    }

    fn state_indices(&self, s: u64) -> Vec<i64> {
        split(s, &self.state_sizes)
            .into_iter()
            .zip(&self.models)
            .flat_map(|(d, m)| m.state.unflatten(d))
            .collect()
    }

    fn coordinates(&self) -> Vec<(usize, BigRational)> {
        self.models.iter().flat_map(|m| m.coordinates()).collect()
    }

    fn label_indices(&self, l: u64) -> Vec<i64> {
        let (e, u) = self.decode_label(l);
        e.into_iter().chain(u).flatten().collect()
    }

    fn label_values(&self, l: u64) -> Vec<f64> {
        let (e, u) = self.decode_label(l);
        let mut out = Vec::new();
        for ((_, lat), idx) in self.external.iter().zip(&e) {
            out.extend(lat.values(idx));
        }
        for (m, idx) in self.models.iter().zip(&u) {
            out.extend(m.labels.input.values(idx));
        }
        out
    }

    fn quantize_label(&self, values: &[f64]) -> Option<u64> {
        let lattices = self
            .external
            .iter()
            .map(|(_, l)| l)
            .chain(self.models.iter().map(|m| &m.labels.input));
        let mut rest = values;
        let mut digits = Vec::new();
        for lat in lattices {
            let (head, tail) = rest.split_at_checked(lat.dim())?;
            let idx: Vec<i64> = head
                .iter()
                .map(|&v| quantize_index(v, lat.eta_f64()))
                .collect();
            digits.push(lat.flatten(&idx)?);
            rest = tail;
        }
        rest.is_empty().then(|| join(&digits, &self.label_sizes))
    }
}

/// The abstraction of a whole component built directly on the stacked state
/// `(x_i)_{i in members}` with one parameter, without going through the
/// member models.
#[derive(Debug, Clone)]
pub struct ComponentModel {
    pub ids: Vec<usize>,
    members: Vec<Subsystem>,
    offsets: Vec<usize>,
    pub state: Lattice,
    pub external: Vec<(usize, Lattice)>,
    input_coords: Vec<Vec<usize>>,
    input_offsets: Vec<usize>,
    pub input: Lattice,
}

impl ComponentModel {
    pub fn new(
        net: &NetworkSpec,
        members: &[usize],
        eta: &[BigRational],
    ) -> Result<Self, BisimError> {
        let ids: Vec<usize> = members
            .iter()
            .copied()
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        let Some(&first) = ids.first() else {
            return Err(BisimError::Invalid("empty component".into()));
        };
        let eta_k = &eta[first - 1];
        if ids.iter().any(|&i| &eta[i - 1] != eta_k) {
            return Err(BisimError::Invalid(
                "members must share one parameter".into(),
            ));
        }
        let subs: Vec<Subsystem> = ids.iter().map(|&i| net.subsystem(i).clone()).collect();
        let mut offsets = Vec::new();
        let mut state_box: Vec<Interval> = Vec::new();
        let mut input_box: Vec<Interval> = Vec::new();
        let mut input_coords = Vec::new();
        let mut input_offsets = Vec::new();
        let mut outside = BTreeSet::new();
        for s in &subs {
            offsets.push(state_box.len());
            state_box.extend(s.state_box.iter().cloned());
            input_offsets.push(input_box.len());
            let used = s.used_inputs();
            input_box.extend(used.iter().map(|&c| s.input_box[c].clone()));
            input_coords.push(used);
            outside.extend(s.state_deps().into_iter().filter(|j| !ids.contains(j)));
        }
        let external = outside
            .into_iter()
            .map(|j| Ok((j, lattice_of_box(&net.subsystem(j).state_box, &eta[j - 1])?)))
            .collect::<Result<Vec<_>, AbstractionError>>()?;
        Ok(ComponentModel {
            state: lattice_of_box(&state_box, eta_k)?,
            input: lattice_of_box(&input_box, eta_k)?,
            ids,
            members: subs,
            offsets,
            external,
            input_coords,
            input_offsets,
        })
    }

    fn ext_sizes(&self) -> Vec<u64> {
        self.external
            .iter()
            .map(|(_, l)| l.len().unwrap_or(u64::MAX))
            .chain([self.input.len().unwrap_or(u64::MAX)])
            .collect()
    }

    fn decode_label(&self, l: u64) -> (Vec<Vec<i64>>, Vec<i64>) {
        let digits = split(l, &self.ext_sizes());
        let external = self
            .external
            .iter()
            .zip(&digits)
            .map(|((_, lat), &d)| lat.unflatten(d))
            .collect();
        (external, self.input.unflatten(*digits.last().unwrap()))
    }
}

impl Block for ComponentModel {
    fn state_count(&self) -> Option<u64> {
        self.state.len()
    }

    fn label_count(&self) -> Option<u64> {
        product(
            self.external
                .iter()
                .map(|(_, l)| l.cardinality())
                .chain([self.input.cardinality()]),
        )
    }

    fn successor(&self, s: u64, l: u64) -> Result<Option<u64>, AbstractionError> {
        let x = self.state.values(&self.state.unflatten(s));
        let (ext_idx, u_idx) = self.decode_label(l);
        let ext: Vec<Vec<f64>> = self
            .external
            .iter()
            .zip(&ext_idx)
            .map(|((_, lat), i)| lat.values(i))
            .collect();
        let u_all = self.input.values(&u_idx);
        let eta = self.state.eta_f64();
        let mut next = Vec::with_capacity(x.len());
        for (p, sub) in self.members.iter().enumerate() {
            let lookup = |j: usize, d: usize| -> f64 {
                if let Some(q) = self.ids.iter().position(|&i| i == j) {
                    return x[self.offsets[q] + d];
                }
                self.external
                    .iter()
                    .position(|e| e.0 == j)
                    .map_or(0.0, |e| ext[e][d])
            };
            let mut u = vec![0.0; sub.input_dim()];
            for (k, &c) in self.input_coords[p].iter().enumerate() {
                u[c] = u_all[self.input_offsets[p] + k];
            }
            let f = sub
                .eval(lookup, &u)
                .map_err(|source| AbstractionError::Eval { id: sub.id, source })?;
            next.extend(f.iter().map(|&v| quantize_index(v, eta)));
        }
        Ok(self.state.flatten(&next))
    }

    fn state_indices(&self, s: u64) -> Vec<i64> {
        self.state.unflatten(s)
    }

    fn coordinates(&self) -> Vec<(usize, BigRational)> {
        self.members
            .iter()
            .flat_map(|s| vec![(s.id, self.state.eta.clone()); s.state_dim()])
            .collect()
    }

    fn label_indices(&self, l: u64) -> Vec<i64> {
        let (e, u) = self.decode_label(l);
        e.into_iter().flatten().chain(u).collect()
    }

    fn label_values(&self, l: u64) -> Vec<f64> {
        let (e, u) = self.decode_label(l);
        let mut out = Vec::new();
        for ((_, lat), idx) in self.external.iter().zip(&e) {
            out.extend(lat.values(idx));
        }
        out.extend(self.input.values(&u));
        out
    }

    fn quantize_label(&self, values: &[f64]) -> Option<u64> {
        let mut rest = values;
        let mut digits = Vec::new();
        for lat in self.external.iter().map(|(_, l)| l).chain([&self.input]) {
            let (head, tail) = rest.split_at_checked(lat.dim())?;
            let idx: Vec<i64> = head
                .iter()
                .map(|&v| quantize_index(v, lat.eta_f64()))
                .collect();
            digits.push(lat.flatten(&idx)?);
            rest = tail;
        }
        rest.is_empty().then(|| join(&digits, &self.ext_sizes()))
    }
}
