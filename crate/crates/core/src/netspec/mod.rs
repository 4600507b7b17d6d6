//! Network descriptions: subsystems, boxes, dynamics and Lyapunov data.

mod config;
pub mod expr;

use std::collections::{BTreeMap, BTreeSet};

use num::BigRational;

pub use config::{load_network, load_table, validate, ConfigError};
pub use expr::{
    eval_expr, free_variables, parse_expression, EvalError, Expr, ParseError, Var, VarKind,
};

use crate::rational::to_f64;

/// Closed interval with exact endpoints.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Interval {
    pub lo: BigRational,
    pub hi: BigRational,
}

impl Interval {
    pub fn new(lo: BigRational, hi: BigRational) -> Self {
        Interval { lo, hi }
    }

    pub fn contains_f64(&self, x: f64) -> bool {
        to_f64(&self.lo) <= x && x <= to_f64(&self.hi)
    }
}

/// A gain `s -> slope * s`; slope zero means the term is absent.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct LinearGain {
    pub slope: BigRational,
}

impl LinearGain {
    pub fn new(slope: BigRational) -> Self {
        LinearGain { slope }
    }

    pub fn apply(&self, s: &BigRational) -> BigRational {
        &self.slope * s
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LyapunovCert {
    pub lipschitz: BigRational,
    pub alpha_lower: LinearGain,
    pub alpha_upper: LinearGain,
    pub rho: LinearGain,
    pub sigma_self: LinearGain,
    /// `sigma_in[j]` bounds the influence of `x_j`.
    pub sigma_in: BTreeMap<usize, LinearGain>,
}

impl LyapunovCert {
    pub fn sigma_from(&self, j: usize) -> Option<&LinearGain> {
        self.sigma_in.get(&j)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Subsystem {
    pub id: usize,
    pub state_box: Vec<Interval>,
    pub input_box: Vec<Interval>,
    pub dynamics: Vec<Expr>,
    pub dynamics_text: Vec<String>,
    pub cert: LyapunovCert,
    /// Explicit list of state dependencies replacing the syntactic one.
    pub deps: Option<Vec<usize>>,
}

impl Subsystem {
    pub fn state_dim(&self) -> usize {
        self.state_box.len()
    }

    pub fn input_dim(&self) -> usize {
        self.input_box.len()
    }

    fn variables(&self) -> BTreeSet<Var> {
        self.dynamics.iter().flat_map(|e| e.variables()).collect()
    }

    /// Other subsystems whose state this one reads.
    pub fn state_deps(&self) -> BTreeSet<usize> {
        match &self.deps {
            Some(d) => d.iter().copied().filter(|&j| j != self.id).collect(),
            None => self
                .variables()
                .into_iter()
                .filter(|v| v.kind == VarKind::State && v.subsystem != self.id)
                .map(|v| v.subsystem)
                .collect(),
        }
    }

    /// Input coordinates (zero-based) occurring in the dynamics.
    pub fn used_inputs(&self) -> Vec<usize> {
        let used: BTreeSet<usize> = self
            .variables()
            .into_iter()
            .filter(|v| v.kind == VarKind::Input)
            .map(|v| v.coord_index())
            .collect();
        used.into_iter().collect()
    }

    /// Evaluates every coordinate of `f_i`. `state(j, d)` supplies coordinate
    /// `d` of subsystem `j`; states outside the dependency set read as zero.
    pub fn eval<F>(&self, state: F, input: &[f64]) -> Result<Vec<f64>, EvalError>
    where
        F: Fn(usize, usize) -> f64,
    {
        let deps = self.deps.as_ref();
        let lookup = |v: &Var| -> Option<f64> {
            let d = v.coord_index();
            Some(match v.kind {
                VarKind::Input => *input.get(d)?,
                VarKind::State => {
                    let allowed =
                        v.subsystem == self.id || deps.map_or(true, |ds| ds.contains(&v.subsystem));
                    if allowed {
                        state(v.subsystem, d)
                    } else {
                        0.0
                    }
                }
            })
        };
        self.dynamics.iter().map(|e| e.eval_with(&lookup)).collect()
    }
}

/// Aggregate certificate data supplied directly in a config.
#[derive(Debug, Clone, PartialEq)]
pub struct SuppliedCert {
    pub lipschitz: BigRational,
    pub alpha_lower: BigRational,
    pub alpha_upper: BigRational,
    pub rho: BigRational,
    pub sigma_self: BigRational,
}

/// Optional data for the whole-network baseline.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct MonolithicSpec {
    pub lambda: Option<Vec<BigRational>>,
    pub cert: Option<SuppliedCert>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkSpec {
    pub name: String,
    pub description: String,
    /// Ordered by id; `subsystems[i - 1].id == i`.
    pub subsystems: Vec<Subsystem>,
    /// User-supplied lambda vectors keyed by canonical component index.
    pub lambda_overrides: BTreeMap<usize, Vec<BigRational>>,
    pub monolithic: Option<MonolithicSpec>,
    /// Extra `(k, l)` pairs adding component `l` to `Post(k)` during design.
    pub post_extra: Vec<(usize, usize)>,
}

impl NetworkSpec {
    pub fn len(&self) -> usize {
        self.subsystems.len()
    }

    pub fn is_empty(&self) -> bool {
        self.subsystems.is_empty()
    }

    pub fn subsystem(&self, id: usize) -> &Subsystem {
        &self.subsystems[id - 1]
    }
}
