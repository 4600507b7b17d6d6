//! Dependency graph, strongly connected components and the component DAG.
//!
//! Subsystem ids and component indices are 1-based throughout. An edge
//! `(i, j)` means the dynamics of `j` read the state of `i`.

use std::cmp::Reverse;
use std::collections::{BTreeSet, BinaryHeap};

use crate::netspec::{Interval, NetworkSpec};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DepGraph {
    n: usize,
    edges: BTreeSet<(usize, usize)>,
}

impl DepGraph {
    /// Self-loops are dropped.
    pub fn new(n: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Self {
        let edges = edges
            .into_iter()
            .filter(|&(i, j)| {
                assert!(
                    i >= 1 && i <= n && j >= 1 && j <= n,
                    "edge ({i},{j}) outside 1..={n}"
                );
                i != j
            })
            .collect();
        DepGraph { n, edges }
    }

    pub fn vertex_count(&self) -> usize {
        self.n
    }

    pub fn edges(&self) -> &BTreeSet<(usize, usize)> {
        &self.edges
    }

    fn adjacency(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.n];
        for &(i, j) in &self.edges {
            adj[i - 1].push(j - 1);
        }
        adj
    }
}

pub fn build_dependency_graph(net: &NetworkSpec) -> DepGraph {
    let edges = net
        .subsystems
        .iter()
        .flat_map(|s| s.state_deps().into_iter().map(move |i| (i, s.id)));
    DepGraph::new(net.len(), edges)
}

/// Tarjan's algorithm on a 0-based adjacency list, iterative.
/// Components come out in reverse topological order, members unsorted.
pub fn tarjan(adj: &[Vec<usize>]) -> Vec<Vec<usize>> {
    const UNSEEN: usize = usize::MAX;
    let n = adj.len();
    let mut index = vec![UNSEEN; n];
    let mut low = vec![0; n];
    let mut on_stack = vec![false; n];
    let mut stack = Vec::new();
    let mut out = Vec::new();
    let mut next = 0;
    let mut call: Vec<(usize, usize)> = Vec::new();

    for root in 0..n {
        if index[root] != UNSEEN {
            continue;
        }
        call.push((root, 0));
        while let Some(&mut (v, ref mut edge)) = call.last_mut() {
            if *edge == 0 && index[v] == UNSEEN {
                index[v] = next;
                low[v] = next;
                next += 1;
                stack.push(v);
                on_stack[v] = true;
            }
            if let Some(&w) = adj[v].get(*edge) {
                *edge += 1;
                if index[w] == UNSEEN {
                    call.push((w, 0));
                } else if on_stack[w] {
                    low[v] = low[v].min(index[w]);
                }
                continue;
            }
            call.pop();
            if let Some(&(parent, _)) = call.last() {
                low[parent] = low[parent].min(low[v]);
            }
            if low[v] == index[v] {
                let mut comp = Vec::new();
                loop {
                    let w = stack.pop().unwrap();
                    on_stack[w] = false;
                    comp.push(w);
                    if w == v {
                        break;
                    }
                }
                out.push(comp);
            }
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SccPartition {
    /// `components[k - 1]` holds the sorted member ids of component `k`.
    pub components: Vec<Vec<usize>>,
    /// `component_of[i - 1]` is the component index of subsystem `i`.
    pub component_of: Vec<usize>,
}

impl SccPartition {
    pub fn len(&self) -> usize {
        self.components.len()
    }

    pub fn is_empty(&self) -> bool {
        self.components.is_empty()
    }

    pub fn members(&self, k: usize) -> &[usize] {
        &self.components[k - 1]
    }

    pub fn of(&self, i: usize) -> usize {
        self.component_of[i - 1]
    }
}

/// Maximal components numbered in topological order of the condensation
/// (sources first, leaves last), ties broken by the smallest member id.
pub fn strongly_connected_components(g: &DepGraph) -> SccPartition {
    let mut raw = tarjan(&g.adjacency());
    for c in &mut raw {
        for v in c.iter_mut() {
            *v += 1;
        }
        c.sort_unstable();
    }
    let mut raw_of = vec![0; g.n];
    for (r, c) in raw.iter().enumerate() {
        for &v in c {
            raw_of[v - 1] = r;
        }
    }
    let mut succ: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); raw.len()];
    let mut indeg = vec![0usize; raw.len()];
    for &(i, j) in &g.edges {
        let (a, b) = (raw_of[i - 1], raw_of[j - 1]);
        if a != b && succ[a].insert(b) {
            indeg[b] += 1;
        }
    }
    let mut ready: BinaryHeap<Reverse<(usize, usize)>> = indeg
        .iter()
        .enumerate()
        .filter(|(_, &d)| d == 0)
        .map(|(r, _)| Reverse((raw[r][0], r)))
        .collect();
    let mut components = Vec::with_capacity(raw.len());
    let mut component_of = vec![0; g.n];
    while let Some(Reverse((_, r))) = ready.pop() {
        components.push(raw[r].clone());
        for &v in &raw[r] {
            component_of[v - 1] = components.len();
        }
        for &b in &succ[r] {
            indeg[b] -= 1;
            if indeg[b] == 0 {
                ready.push(Reverse((raw[b][0], b)));
            }
        }
    }
    SccPartition {
        components,
        component_of,
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Condensation {
    n: usize,
    edges: BTreeSet<(usize, usize)>,
}

pub fn condense(g: &DepGraph, p: &SccPartition) -> Condensation {
    let edges = g
        .edges
        .iter()
        .map(|&(i, j)| (p.of(i), p.of(j)))
        .filter(|(k, l)| k != l)
        .collect();
    Condensation { n: p.len(), edges }
}

impl Condensation {
    pub fn vertex_count(&self) -> usize {
        self.n
    }

    pub fn edges(&self) -> &BTreeSet<(usize, usize)> {
        &self.edges
    }

    pub fn all(&self) -> BTreeSet<usize> {
        (1..=self.n).collect()
    }

    pub fn post(&self, k: usize) -> BTreeSet<usize> {
        self.edges
            .iter()
            .filter(|e| e.0 == k)
            .map(|e| e.1)
            .collect()
    }

    pub fn post_inverse(&self, k: usize) -> BTreeSet<usize> {
        self.edges
            .iter()
            .filter(|e| e.1 == k)
            .map(|e| e.0)
            .collect()
    }

    /// Members of `s` with no successor inside `s`.
    pub fn leaves(&self, s: &BTreeSet<usize>) -> BTreeSet<usize> {
        s.iter()
            .copied()
            .filter(|&k| self.post(k).is_disjoint(s))
            .collect()
    }

    /// Adds ordering constraints `(k, l)`, putting `l` into `Post(k)`.
    pub fn with_extra_edges(&self, extra: &[(usize, usize)]) -> Result<Condensation, String> {
        let mut edges = self.edges.clone();
        for &(k, l) in extra {
            if k == 0 || l == 0 || k > self.n || l > self.n || k == l {
                return Err(format!("({k}, {l}) does not join two distinct components"));
            }
            edges.insert((k, l));
        }
        let c = Condensation { n: self.n, edges };
        match c.topological_order() {
            Some(_) => Ok(c),
            None => Err("extra ordering edges create a cycle".into()),
        }
    }

    /// Kahn's algorithm; `None` if a cycle remains.
    pub fn topological_order(&self) -> Option<Vec<usize>> {
        let mut indeg = vec![0usize; self.n + 1];
        for &(_, l) in &self.edges {
            indeg[l] += 1;
        }
        let mut ready: Vec<usize> = (1..=self.n).filter(|&k| indeg[k] == 0).collect();
        let mut order = Vec::new();
        while let Some(k) = ready.pop() {
            order.push(k);
            for l in self.post(k) {
                indeg[l] -= 1;
                if indeg[l] == 0 {
                    ready.push(l);
                }
            }
        }
        (order.len() == self.n).then_some(order)
    }
}

/// The stacked state box Ξ_k and input box Ω_k of a component, in ascending
/// member order.
#[derive(Debug, Clone, PartialEq)]
pub struct ComponentSpaces {
    pub state_box: Vec<Interval>,
    pub input_box: Vec<Interval>,
}

impl ComponentSpaces {
    pub fn state_dim(&self) -> usize {
        self.state_box.len()
    }

    pub fn input_dim(&self) -> usize {
        self.input_box.len()
    }
}

pub fn component_spaces(net: &NetworkSpec, p: &SccPartition, k: usize) -> ComponentSpaces {
    let mut state_box = Vec::new();
    let mut input_box = Vec::new();
    for &i in p.members(k) {
        let s = net.subsystem(i);
        state_box.extend(s.state_box.iter().cloned());
        input_box.extend(s.input_box.iter().cloned());
    }
    ComponentSpaces {
        state_box,
        input_box,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bundled;

    fn set(v: &[usize]) -> BTreeSet<usize> {
        v.iter().copied().collect()
    }

    #[test]
    fn academic_graph() {
        let g = build_dependency_graph(&bundled::academic());
        let expected: BTreeSet<_> = [(1, 2), (2, 3), (3, 2), (4, 5), (5, 3), (5, 4), (5, 6)]
            .into_iter()
            .collect();
        assert_eq!(g.edges(), &expected);
        let p = strongly_connected_components(&g);
        assert_eq!(p.components, vec![vec![1], vec![4, 5], vec![2, 3], vec![6]]);
        let c = condense(&g, &p);
        assert_eq!(c.edges(), &[(1, 3), (2, 3), (2, 4)].into_iter().collect());
        // Scc_3 reads nothing downstream, so both sinks are leaves.
        assert_eq!(c.leaves(&c.all()), set(&[3, 4]));
        assert!(c.post(3).is_empty());
        let walk = c.with_extra_edges(&[(3, 4)]).unwrap();
        assert_eq!(walk.leaves(&walk.all()), set(&[4]));
        assert_eq!(walk.leaves(&set(&[1, 2, 3])), set(&[3]));
        assert_eq!(walk.leaves(&set(&[1, 2])), set(&[1, 2]));
        assert!(c.with_extra_edges(&[(4, 2)]).is_err());
        assert!(c.with_extra_edges(&[(3, 9)]).is_err());
        assert_eq!(c.leaves(&set(&[1, 2])), set(&[1, 2]));
        assert_eq!(c.post_inverse(3), set(&[1, 2]));
        assert_eq!(c.post(2), set(&[3, 4]));
    }

    #[test]
    fn small_graphs() {
        let single = build_dependency_graph(&bundled::toy_single());
        assert!(single.edges().is_empty());

        let two = DepGraph::new(2, [(1, 2), (2, 1)]);
        assert_eq!(two.edges().len(), 2);
        assert_eq!(
            strongly_connected_components(&two).components,
            vec![vec![1, 2]]
        );

        let edgeless = DepGraph::new(3, []);
        let p = strongly_connected_components(&edgeless);
        assert_eq!(p.components, vec![vec![1], vec![2], vec![3]]);

        let cycle = DepGraph::new(3, [(1, 2), (2, 3), (3, 1)]);
        let p = strongly_connected_components(&cycle);
        assert_eq!(p.components, vec![vec![1, 2, 3]]);
        let c = condense(&cycle, &p);
        assert_eq!((c.vertex_count(), c.edges().len()), (1, 0));

        let chain = DepGraph::new(3, [(1, 2), (2, 3)]);
        let p = strongly_connected_components(&chain);
        let c = condense(&chain, &p);
        assert_eq!(c.edges(), &[(1, 2), (2, 3)].into_iter().collect());
        assert_eq!(c.topological_order(), Some(vec![1, 2, 3]));
    }

    #[test]
    fn self_loops_are_not_edges() {
        let g = DepGraph::new(2, [(1, 1), (1, 2)]);
        assert_eq!(g.edges(), &[(1, 2)].into_iter().collect());
    }

    #[test]
    fn component_spaces_stack_members() {
        let net = bundled::academic();
        let p = strongly_connected_components(&build_dependency_graph(&net));
        let sp = component_spaces(&net, &p, 2);
        assert_eq!((sp.state_dim(), sp.input_dim()), (2, 2));
    }

    mod props {
        use super::super::*;
        use proptest::prelude::*;

        fn reach(n: usize, edges: &BTreeSet<(usize, usize)>) -> Vec<Vec<bool>> {
            let mut r = vec![vec![false; n + 1]; n + 1];
            for v in 1..=n {
                r[v][v] = true;
            }
            for &(i, j) in edges {
                r[i][j] = true;
            }
            for k in 1..=n {
                for i in 1..=n {
                    for j in 1..=n {
                        if r[i][k] && r[k][j] {
                            r[i][j] = true;
                        }
                    }
                }
            }
            r
        }

        fn graph() -> impl Strategy<Value = DepGraph> {
            (1usize..=10).prop_flat_map(|n| {
                proptest::collection::vec((1..=n, 1..=n), 0..(n * n))
                    .prop_map(move |e| DepGraph::new(n, e))
            })
        }

        proptest! {
            #[test]
            fn matches_mutual_reachability(g in graph()) {
                let n = g.vertex_count();
                let r = reach(n, g.edges());
                let p = strongly_connected_components(&g);
                let mut seen = BTreeSet::new();
                for comp in &p.components {
                    for &v in comp {
                        prop_assert!(seen.insert(v));
                    }
                }
                prop_assert_eq!(seen.len(), n);
                for i in 1..=n {
                    for j in 1..=n {
                        prop_assert_eq!(p.of(i) == p.of(j), r[i][j] && r[j][i]);
                    }
                }
                let c = condense(&g, &p);
                prop_assert!(c.topological_order().is_some());
                for &(k, l) in c.edges() {
                    prop_assert!(k < l, "numbering is topological");
                }
            }

            #[test]
            fn leaves_have_no_successor_inside(g in graph(), mask in any::<u16>()) {
                let p = strongly_connected_components(&g);
                let c = condense(&g, &p);
                let s: BTreeSet<usize> = (1..=c.vertex_count()).filter(|k| mask >> (k - 1) & 1 == 1).collect();
                let leaves = c.leaves(&s);
                prop_assert!(leaves.is_subset(&s));
                for k in &leaves {
                    prop_assert!(c.post(*k).is_disjoint(&s));
                }
                if !s.is_empty() {
                    prop_assert!(!leaves.is_empty());
                }
                for k in 1..=c.vertex_count() {
                    for l in c.post_inverse(k) {
                        prop_assert!(c.post(l).contains(&k));
                    }
                }
            }
        }
    }
}
