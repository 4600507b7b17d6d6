//! Small-gain analysis per component and the aggregate Lyapunov certificate.

use std::collections::BTreeMap;

use num::{BigRational, One, Signed, Zero};
use serde::Serialize;
use thiserror::Error;

use crate::graph::{tarjan, SccPartition};
use crate::netspec::{LinearGain, NetworkSpec};
use crate::rational::{round_sig, to_f64, truncate_sig, Num};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GainError {
    #[error("subsystem {id}: rho slope must be positive")]
    NonPositiveRho { id: usize },
    #[error("subsystem {id}: alpha_lower slope must be positive")]
    ZeroAlphaLower { id: usize },
    #[error("matrix has a negative or non-finite entry")]
    NotNonnegative,
    #[error("power iteration did not converge within {iterations} iterations")]
    NoConvergence { iterations: usize },
    #[error("component {k}: small-gain condition fails, spectral radius {radius}")]
    SmallGainFails { k: usize, radius: f64 },
    #[error("component {k}: lambda has {got} entries, expected {expected}")]
    LambdaLength {
        k: usize,
        got: usize,
        expected: usize,
    },
    #[error("component {k}: lambda^T (A - C) = [{product}] is not componentwise positive")]
    LambdaRejected { k: usize, product: String },
    #[error("component {k}: I - A^-1 C is singular")]
    Singular { k: usize },
    #[error("component override for {k} does not name a component")]
    UnknownComponent { k: usize },
}

/// `A = diag(a)` and `C` for one component, rows and columns in member order.
#[derive(Debug, Clone, PartialEq)]
pub struct GainMatrices {
    pub members: Vec<usize>,
    pub a: Vec<BigRational>,
    pub c: Vec<Vec<BigRational>>,
}

impl GainMatrices {
    pub fn dim(&self) -> usize {
        self.a.len()
    }

    /// `A^-1 C` in exact arithmetic.
    pub fn normalized(&self) -> Vec<Vec<BigRational>> {
        self.c
            .iter()
            .zip(&self.a)
            .map(|(row, a)| row.iter().map(|c| c / a).collect())
            .collect()
    }

    /// `lambda^T (A - C)`.
    pub fn weighted_margin(&self, lambda: &[BigRational]) -> Vec<BigRational> {
        let n = self.dim();
        (0..n)
            .map(|j| {
                let mut w = &lambda[j] * &self.a[j];
                for i in 0..n {
                    w -= &lambda[i] * &self.c[i][j];
                }
                w
            })
            .collect()
    }
}

pub fn assemble_gain_matrices(
    net: &NetworkSpec,
    members: &[usize],
) -> Result<GainMatrices, GainError> {
    let mut a = Vec::with_capacity(members.len());
    for &i in members {
        let cert = &net.subsystem(i).cert;
        if !cert.rho.slope.is_positive() {
            return Err(GainError::NonPositiveRho { id: i });
        }
        if !cert.alpha_lower.slope.is_positive() {
            return Err(GainError::ZeroAlphaLower { id: i });
        }
        a.push(cert.rho.slope.clone());
    }
    let c = members
        .iter()
        .map(|&i| {
            let cert = &net.subsystem(i).cert;
            members
                .iter()
                .map(|&j| match cert.sigma_from(j) {
                    Some(g) if j != i => &g.slope / &net.subsystem(j).cert.alpha_lower.slope,
                    _ => BigRational::zero(),
                })
                .collect()
        })
        .collect();
    Ok(GainMatrices {
        members: members.to_vec(),
        a,
        c,
    })
}

const GAP: f64 = 1e-13;
const MAX_ITERATIONS: usize = 1_000_000;

/// Spectral radius of a nonnegative square matrix.
///
/// Works per irreducible block of the sparsity pattern; each block of size
/// three or more is handled by power iteration on `B + I` with
/// Collatz-Wielandt bounds.
pub fn spectral_radius(m: &[Vec<f64>]) -> Result<f64, GainError> {
    let n = m.len();
    if m.iter().flatten().any(|v| !v.is_finite() || *v < 0.0) || m.iter().any(|r| r.len() != n) {
        return Err(GainError::NotNonnegative);
    }
    let adj: Vec<Vec<usize>> = (0..n)
        .map(|i| (0..n).filter(|&j| i != j && m[i][j] > 0.0).collect())
        .collect();
    let mut r: f64 = 0.0;
    for block in tarjan(&adj) {
        let sub: Vec<Vec<f64>> = block
            .iter()
            .map(|&i| block.iter().map(|&j| m[i][j]).collect())
            .collect();
        r = r.max(irreducible_radius(&sub)?);
    }
    Ok(r)
}

fn irreducible_radius(m: &[Vec<f64>]) -> Result<f64, GainError> {
    match m.len() {
        1 => return Ok(m[0][0]),
        2 => {
            let (a, b, c, d) = (m[0][0], m[0][1], m[1][0], m[1][1]);
            return Ok(0.5 * (a + d + ((a - d) * (a - d) + 4.0 * b * c).sqrt()));
        }
        _ => {}
    }
    let n = m.len();
    let mut x = vec![1.0; n];
    for _ in 0..MAX_ITERATIONS {
        let y: Vec<f64> = (0..n)
            .map(|i| x[i] + (0..n).map(|j| m[i][j] * x[j]).sum::<f64>())
            .collect();
        let ratios = y.iter().zip(&x).map(|(y, x)| y / x);
        let (lo, hi) = ratios.fold((f64::INFINITY, 0.0f64), |(lo, hi), q| {
            (lo.min(q), hi.max(q))
        });
        if hi - lo <= GAP * hi.max(1.0) {
            return Ok(0.5 * (lo + hi) - 1.0);
        }
        let norm = y.iter().cloned().fold(0.0f64, f64::max);
        x = y.into_iter().map(|v| v / norm).collect();
    }
    Err(GainError::NoConvergence {
        iterations: MAX_ITERATIONS,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SmallGain {
    pub radius: f64,
    pub ok: bool,
    pub warning: Option<String>,
}

pub fn check_small_gain(gm: &GainMatrices) -> Result<SmallGain, GainError> {
    let m: Vec<Vec<f64>> = gm
        .normalized()
        .iter()
        .map(|row| row.iter().map(to_f64).collect())
        .collect();
    let radius = spectral_radius(&m)?;
    if (radius - 1.0).abs() <= 1e-12 {
        return Ok(SmallGain {
            radius,
            ok: false,
            warning: Some(format!(
                "spectral radius {radius} is within 1e-12 of 1; treated as failing"
            )),
        });
    }
    Ok(SmallGain {
        radius,
        ok: radius < 1.0,
        warning: None,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum LambdaSource {
    Computed,
    Supplied,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LambdaVector {
    pub entries: Vec<BigRational>,
    pub source: LambdaSource,
    /// `lambda^T (A - C)`, componentwise positive.
    pub margin: Vec<BigRational>,
}

fn solve(mut m: Vec<Vec<BigRational>>, mut b: Vec<BigRational>) -> Option<Vec<BigRational>> {
    let n = b.len();
    for col in 0..n {
        let pivot = (col..n).find(|&r| !m[r][col].is_zero())?;
        m.swap(col, pivot);
        b.swap(col, pivot);
        for r in 0..n {
            if r != col && !m[r][col].is_zero() {
                let f = &m[r][col] / &m[col][col];
                for c in col..n {
                    let d = &f * &m[col][c];
                    m[r][c] -= d;
                }
                let d = &f * &b[col];
                b[r] -= d;
            }
        }
    }
    Some((0..n).map(|i| &b[i] / &m[i][i]).collect())
}

/// Canonical lambda: `mu^T = 1^T (I - A^-1 C)^-1`, `lambda = A^-1 mu`.
pub fn find_lambda(k: usize, gm: &GainMatrices) -> Result<LambdaVector, GainError> {
    let n = gm.dim();
    let m = gm.normalized();
    let system: Vec<Vec<BigRational>> = (0..n)
        .map(|r| {
            (0..n)
                .map(|c| {
                    let id = if r == c {
                        BigRational::one()
                    } else {
                        BigRational::zero()
                    };
                    id - &m[c][r]
                })
                .collect()
        })
        .collect();
    let mu = solve(system, vec![BigRational::one(); n]).ok_or(GainError::Singular { k })?;
    if mu.iter().any(|v| v < &BigRational::one()) {
        return Err(GainError::SmallGainFails {
            k,
            radius: check_small_gain(gm).map(|s| s.radius).unwrap_or(f64::NAN),
        });
    }
    let entries: Vec<BigRational> = mu.iter().zip(&gm.a).map(|(m, a)| m / a).collect();
    verify_lambda(k, gm, entries, LambdaSource::Computed)
}

pub fn verify_lambda(
    k: usize,
    gm: &GainMatrices,
    entries: Vec<BigRational>,
    source: LambdaSource,
) -> Result<LambdaVector, GainError> {
    if entries.len() != gm.dim() {
        return Err(GainError::LambdaLength {
            k,
            got: entries.len(),
            expected: gm.dim(),
        });
    }
    let margin = gm.weighted_margin(&entries);
    if entries.iter().chain(&margin).any(|v| !v.is_positive()) {
        let product = margin
            .iter()
            .map(|v| to_f64(v).to_string())
            .collect::<Vec<_>>()
            .join(", ");
        return Err(GainError::LambdaRejected { k, product });
    }
    Ok(LambdaVector {
        entries,
        source,
        margin,
    })
}

/// The lambda-weighted certificate of one component.
#[derive(Debug, Clone, PartialEq)]
pub struct AggregateCert {
    pub component: usize,
    pub members: Vec<usize>,
    pub lipschitz: BigRational,
    pub alpha_lower: LinearGain,
    pub alpha_upper: LinearGain,
    /// `min(margin) / max(lambda)`.
    pub rho: LinearGain,
    /// `min_i margin_i / lambda_i`, the largest slope the construction allows.
    pub rho_tight: LinearGain,
    /// `rho` at three significant digits: rounded when that stays below
    /// `rho_tight`, truncated otherwise. Used by the design stage.
    pub rho_published: LinearGain,
    pub sigma_self: LinearGain,
    /// Keyed by predecessor component index; only nonzero gains are stored.
    pub sigma_in: BTreeMap<usize, LinearGain>,
    pub lambda: LambdaVector,
}

impl AggregateCert {
    pub fn sigma_from(&self, j: usize) -> BigRational {
        self.sigma_in
            .get(&j)
            .map_or_else(BigRational::zero, |g| g.slope.clone())
    }
}

pub fn publish_rho(closed: &BigRational, tight: &BigRational) -> BigRational {
    let rounded = round_sig(closed, 3);
    if &rounded <= tight {
        rounded
    } else {
        truncate_sig(closed, 3)
    }
}

pub fn aggregate_certificate(
    net: &NetworkSpec,
    partition: &SccPartition,
    k: usize,
    lambda: LambdaVector,
) -> AggregateCert {
    let members = partition.members(k).to_vec();
    let certs: Vec<_> = members.iter().map(|&i| &net.subsystem(i).cert).collect();
    let l = &lambda.entries;
    let weighted = |f: &dyn Fn(usize) -> BigRational| -> BigRational {
        (0..members.len())
            .map(|n| &l[n] * f(n))
            .fold(BigRational::zero(), |a, b| a + b)
    };
    let lipschitz = weighted(&|n| certs[n].lipschitz.clone());
    let alpha_lower = (0..members.len())
        .map(|n| &l[n] * &certs[n].alpha_lower.slope)
        .min()
        .unwrap();
    let alpha_upper = weighted(&|n| certs[n].alpha_upper.slope.clone());
    let sigma_self = weighted(&|n| certs[n].sigma_self.slope.clone());
    let min_margin = lambda.margin.iter().min().unwrap();
    let max_lambda = l.iter().max().unwrap();
    let rho = min_margin / max_lambda;
    let rho_tight = lambda
        .margin
        .iter()
        .zip(l)
        .map(|(w, l)| w / l)
        .min()
        .unwrap();
    let rho_published = publish_rho(&rho, &rho_tight);

    let mut sigma_in: BTreeMap<usize, BigRational> = BTreeMap::new();
    for (n, cert) in certs.iter().enumerate() {
        for (&j, g) in &cert.sigma_in {
            let source = partition.of(j);
            if source != k && !g.slope.is_zero() {
                *sigma_in.entry(source).or_insert_with(BigRational::zero) += &l[n] * &g.slope;
            }
        }
    }
    AggregateCert {
        component: k,
        members,
        lipschitz,
        alpha_lower: LinearGain::new(alpha_lower),
        alpha_upper: LinearGain::new(alpha_upper),
        rho: LinearGain::new(rho),
        rho_tight: LinearGain::new(rho_tight),
        rho_published: LinearGain::new(rho_published),
        sigma_self: LinearGain::new(sigma_self),
        sigma_in: sigma_in
            .into_iter()
            .map(|(j, s)| (j, LinearGain::new(s)))
            .collect(),
        lambda,
    }
}

/// Everything the gain stage knows about one component.
#[derive(Debug, Clone, PartialEq)]
pub struct ComponentGains {
    pub matrices: GainMatrices,
    pub small_gain: SmallGain,
    pub cert: AggregateCert,
}

/// Runs the gain stage for every component, honouring lambda overrides.
pub fn analyze_components(
    net: &NetworkSpec,
    partition: &SccPartition,
) -> Result<Vec<ComponentGains>, GainError> {
    if let Some(&k) = net.lambda_overrides.keys().find(|&&k| k > partition.len()) {
        return Err(GainError::UnknownComponent { k });
    }
    (1..=partition.len())
        .map(|k| {
            let matrices = assemble_gain_matrices(net, partition.members(k))?;
            let small_gain = check_small_gain(&matrices)?;
            if !small_gain.ok {
                return Err(GainError::SmallGainFails {
                    k,
                    radius: small_gain.radius,
                });
            }
            let lambda = match net.lambda_overrides.get(&k) {
                Some(l) => verify_lambda(k, &matrices, l.clone(), LambdaSource::Supplied)?,
                None => find_lambda(k, &matrices)?,
            };
            let cert = aggregate_certificate(net, partition, k, lambda);
            Ok(ComponentGains {
                matrices,
                small_gain,
                cert,
            })
        })
        .collect()
}

/// Slack of the decrease inequality for the aggregate function
/// `sum_i lambda_i |x_i - x'_i|_inf` over one step of the component dynamics.
/// `x`, `u` are indexed by subsystem id minus one.
pub fn decrease_slack(
    net: &NetworkSpec,
    partition: &SccPartition,
    cert: &AggregateCert,
    rho: &BigRational,
    pair: [(&[Vec<f64>], &[Vec<f64>]); 2],
) -> f64 {
    let [(x, u), (xp, up)] = pair;
    let dist = |a: &[f64], b: &[f64]| {
        a.iter()
            .zip(b)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    };
    let lambda: Vec<f64> = cert.lambda.entries.iter().map(to_f64).collect();
    let mut v_now = 0.0;
    let mut v_next = 0.0;
    let mut input_gap: f64 = 0.0;
    for (n, &i) in cert.members.iter().enumerate() {
        let s = net.subsystem(i);
        let fx = s
            .eval(|j, d| x[j - 1][d], &u[i - 1])
            .expect("finite dynamics");
        let fxp = s
            .eval(|j, d| xp[j - 1][d], &up[i - 1])
            .expect("finite dynamics");
        v_now += lambda[n] * dist(&x[i - 1], &xp[i - 1]);
        v_next += lambda[n] * dist(&fx, &fxp);
        input_gap = input_gap.max(dist(&u[i - 1], &up[i - 1]));
    }
    let mut rhs = v_now - to_f64(rho) * v_now + to_f64(&cert.sigma_self.slope) * input_gap;
    for (&j, g) in &cert.sigma_in {
        let gap = partition
            .members(j)
            .iter()
            .map(|&m| dist(&x[m - 1], &xp[m - 1]))
            .fold(0.0, f64::max);
        rhs += to_f64(&g.slope) * gap;
    }
    rhs - v_next
}

/// Report view of a component's gain data.
#[derive(Debug, Clone, Serialize)]
pub struct CertReport {
    pub component: usize,
    pub members: Vec<usize>,
    pub radius: f64,
    pub radius_squared: f64,
    pub small_gain_ok: bool,
    pub lambda: Vec<Num>,
    pub lambda_source: LambdaSource,
    pub margin: Vec<Num>,
    pub lipschitz: Num,
    pub alpha_lower: Num,
    pub alpha_upper: Num,
    pub rho: Num,
    pub rho_tight: Num,
    pub rho_published: Num,
    pub sigma_self: Num,
    pub sigma_in: BTreeMap<String, Num>,
}

impl From<&ComponentGains> for CertReport {
    fn from(g: &ComponentGains) -> Self {
        let c = &g.cert;
        CertReport {
            component: c.component,
            members: c.members.clone(),
            radius: g.small_gain.radius,
            radius_squared: g.small_gain.radius * g.small_gain.radius,
            small_gain_ok: g.small_gain.ok,
            lambda: c.lambda.entries.iter().map(Num::from).collect(),
            lambda_source: c.lambda.source,
            margin: c.lambda.margin.iter().map(Num::from).collect(),
            lipschitz: Num::from(&c.lipschitz),
            alpha_lower: Num::from(&c.alpha_lower.slope),
            alpha_upper: Num::from(&c.alpha_upper.slope),
            rho: Num::from(&c.rho.slope),
            rho_tight: Num::from(&c.rho_tight.slope),
            rho_published: Num::from(&c.rho_published.slope),
            sigma_self: Num::from(&c.sigma_self.slope),
            sigma_in: c
                .sigma_in
                .iter()
                .map(|(j, g)| (j.to_string(), Num::from(&g.slope)))
                .collect(),
        }
    }
}
