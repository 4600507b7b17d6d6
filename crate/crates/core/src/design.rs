//! Quantization design: per-subsystem inequalities, the compositional
//! peeling over the component DAG, and the monolithic baseline.

use std::collections::{BTreeMap, BTreeSet};

use num::{BigRational, Signed, Zero};
use serde::Serialize;
use thiserror::Error;

use crate::gains::{publish_rho, AggregateCert, ComponentGains};
use crate::graph::{Condensation, SccPartition};
use crate::netspec::{LinearGain, LyapunovCert, NetworkSpec, SuppliedCert};
use crate::rational::{decimal_exponent, pow10, truncate_sig, Num};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DesignError {
    #[error("epsilon must be positive")]
    NonPositiveEpsilon,
    #[error("component {k}: degenerate certificate (zero denominator)")]
    Degenerate { k: usize },
    #[error("component {k}: budget is not positive")]
    EmptyBudget { k: usize },
    #[error("invalid ordering constraint: {0}")]
    Ordering(String),
    #[error("repair of truncated values did not settle")]
    RepairDiverged,
    #[error("monolithic certificate is infeasible: {0}")]
    Infeasible(String),
}

/// Checks the two per-subsystem conditions for a candidate `eta` (indexed by
/// subsystem id minus one).
pub fn check_subsystem_inequalities(
    id: usize,
    cert: &LyapunovCert,
    eps_i: &BigRational,
    eta: &[BigRational],
) -> bool {
    let own = &eta[id - 1];
    let mut lhs = &cert.lipschitz * own + cert.sigma_self.apply(own);
    for (&j, g) in &cert.sigma_in {
        lhs += g.apply(&eta[j - 1]);
    }
    let level = cert.alpha_lower.apply(eps_i);
    lhs <= cert.rho.apply(&level) && cert.alpha_upper.apply(own) <= level
}

/// The equal-value maximal choice: every selected parameter equals
/// `min(alpha_cap, budget / (L + sigma + sum of predecessor slopes))`.
/// Returns the exact value; callers truncate for reporting.
pub fn solve_equal_value(
    lipschitz: &BigRational,
    sigma_self: &LinearGain,
    pred_slopes: &[LinearGain],
    budget: &BigRational,
    alpha_cap: &BigRational,
) -> Option<BigRational> {
    let den = pred_slopes
        .iter()
        .fold(lipschitz + &sigma_self.slope, |acc, g| acc + &g.slope);
    if den.is_zero() {
        return None;
    }
    Some((budget / den).min(alpha_cap.clone()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectionRule {
    /// All chosen parameters equal and maximal.
    #[default]
    EqualValue,
    /// Half of the budget to the component itself, half shared equally by
    /// the predecessor terms.
    BudgetShare,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum LeafOrder {
    #[default]
    Ascending,
    Descending,
}

#[derive(Debug, Clone, Default)]
pub struct DesignOptions {
    pub rule: SelectionRule,
    pub leaf_order: LeafOrder,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum EpsilonSource {
    /// Processed in the first round: the network precision.
    Network,
    /// Minimum of the successors' parameters.
    Successors,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum AuditEvent {
    Round {
        round: usize,
        leaves: Vec<usize>,
    },
    EpsilonSet {
        k: usize,
        value: Num,
        source: EpsilonSource,
    },
    Chosen {
        k: usize,
        own: Num,
        caps: BTreeMap<usize, Num>,
    },
    CapApplied {
        j: usize,
        from: usize,
        cap: Num,
        result: Num,
    },
    Finalized {
        k: usize,
        exact: Num,
        reported: Num,
    },
    Repaired {
        k: usize,
        from: Num,
        to: Num,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComponentPlan {
    pub k: usize,
    pub epsilon: BigRational,
    pub epsilon_source: EpsilonSource,
    /// The line-11 value before any cap.
    pub choice: BigRational,
    /// After `min` with caps from successors.
    pub eta_exact: BigRational,
    /// Three significant digits, rounded down (and repaired if needed).
    pub eta: BigRational,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Recheck {
    pub k: usize,
    pub epsilon: Num,
    pub lhs: Num,
    pub budget: Num,
    pub alpha_lhs: Num,
    pub alpha_rhs: Num,
    pub ok: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuantizationPlan {
    pub epsilon: BigRational,
    pub components: Vec<ComponentPlan>,
    /// `eta_subsystem[i - 1]` is the parameter of subsystem `i`.
    pub eta_subsystem: Vec<BigRational>,
    pub audit: Vec<AuditEvent>,
    pub recheck: Vec<Recheck>,
    pub rule: SelectionRule,
}

impl QuantizationPlan {
    pub fn eta_bar(&self) -> Vec<BigRational> {
        self.components.iter().map(|c| c.eta.clone()).collect()
    }

    pub fn eta_bar_exact(&self) -> Vec<BigRational> {
        self.components
            .iter()
            .map(|c| c.eta_exact.clone())
            .collect()
    }

    pub fn recheck_ok(&self) -> bool {
        self.recheck.iter().all(|r| r.ok)
    }
}

fn budget(cert: &AggregateCert, eps: &BigRational) -> BigRational {
    &cert.rho_published.slope * cert.alpha_lower.apply(eps)
}

fn alpha_cap(cert: &AggregateCert, eps: &BigRational) -> BigRational {
    cert.alpha_lower.apply(eps) / &cert.alpha_upper.slope
}

/// Line-11 selection: returns `(own, per-predecessor caps)`.
fn select(
    k: usize,
    cert: &AggregateCert,
    preds: &BTreeSet<usize>,
    eps: &BigRational,
    rule: SelectionRule,
) -> Result<(BigRational, BTreeMap<usize, BigRational>), DesignError> {
    let b = budget(cert, eps);
    if !b.is_positive() {
        return Err(DesignError::EmptyBudget { k });
    }
    let cap = alpha_cap(cert, eps);
    let slopes: Vec<LinearGain> = preds
        .iter()
        .map(|&j| LinearGain::new(cert.sigma_from(j)))
        .collect();
    match rule {
        SelectionRule::EqualValue => {
            let x = solve_equal_value(&cert.lipschitz, &cert.sigma_self, &slopes, &b, &cap)
                .ok_or(DesignError::Degenerate { k })?;
            Ok((x.clone(), preds.iter().map(|&j| (j, x.clone())).collect()))
        }
        SelectionRule::BudgetShare => {
            let pred_sum = slopes.iter().fold(BigRational::zero(), |a, g| a + &g.slope);
            let own_den = &cert.lipschitz + &cert.sigma_self.slope;
            let half = BigRational::new(1.into(), 2.into());
            let own_share = if pred_sum.is_zero() {
                b.clone()
            } else {
                &b * &half
            };
            let own = if own_den.is_zero() {
                cap.clone()
            } else {
                (own_share / own_den).min(cap.clone())
            };
            let rest = &b - (&cert.lipschitz + &cert.sigma_self.slope) * &own;
            let star = if pred_sum.is_zero() {
                own.clone()
            } else {
                rest / pred_sum
            };
            if !own.is_positive() || !star.is_positive() {
                return Err(DesignError::Degenerate { k });
            }
            Ok((own, preds.iter().map(|&j| (j, star.clone())).collect()))
        }
    }
}

/// Peels the component DAG leaf by leaf and picks one parameter per component.
pub fn design_network_quantization(
    net: &NetworkSpec,
    partition: &SccPartition,
    condensation: &Condensation,
    gains: &[ComponentGains],
    eps: &BigRational,
    options: &DesignOptions,
) -> Result<QuantizationPlan, DesignError> {
    if !eps.is_positive() {
        return Err(DesignError::NonPositiveEpsilon);
    }
    let dag = condensation
        .with_extra_edges(&net.post_extra)
        .map_err(DesignError::Ordering)?;
    let n = dag.vertex_count();
    let certs: Vec<&AggregateCert> = gains.iter().map(|g| &g.cert).collect();
    let mut audit = Vec::new();
    let mut processed = vec![false; n + 1];
    let mut caps: Vec<Option<BigRational>> = vec![None; n + 1];
    let mut plans: Vec<Option<ComponentPlan>> = vec![None; n + 1];
    let mut temp = dag.all();
    let mut round = 0;

    while !temp.is_empty() {
        round += 1;
        let mut leaves: Vec<usize> = dag.leaves(&temp).into_iter().collect();
        if options.leaf_order == LeafOrder::Descending {
            leaves.reverse();
        }
        audit.push(AuditEvent::Round {
            round,
            leaves: leaves.clone(),
        });
        for &k in &leaves {
            if processed[k] {
                continue;
            }
            let post = dag.post(k);
            let (eps_k, source) = if round == 1 || post.is_empty() {
                (eps.clone(), EpsilonSource::Network)
            } else {
                let m = post
                    .iter()
                    .map(|&j| {
                        plans[j]
                            .as_ref()
                            .expect("successors come first")
                            .eta_exact
                            .clone()
                    })
                    .min()
                    .unwrap();
                (m, EpsilonSource::Successors)
            };
            audit.push(AuditEvent::EpsilonSet {
                k,
                value: Num::from(&eps_k),
                source,
            });
            let preds = dag.post_inverse(k);
            let (choice, stars) = select(k, certs[k - 1], &preds, &eps_k, options.rule)?;
            audit.push(AuditEvent::Chosen {
                k,
                own: Num::from(&choice),
                caps: stars.iter().map(|(j, v)| (*j, Num::from(v))).collect(),
            });
            let eta_exact = match &caps[k] {
                Some(c) => c.clone().min(choice.clone()),
                None => choice.clone(),
            };
            for (j, star) in stars {
                let result = match &caps[j] {
                    Some(c) => c.clone().min(star.clone()),
                    None => star.clone(),
                };
                audit.push(AuditEvent::CapApplied {
                    j,
                    from: k,
                    cap: Num::from(&star),
                    result: Num::from(&result),
                });
                caps[j] = Some(result);
            }
            let eta = truncate_sig(&eta_exact, 3);
            audit.push(AuditEvent::Finalized {
                k,
                exact: Num::from(&eta_exact),
                reported: Num::from(&eta),
            });
            plans[k] = Some(ComponentPlan {
                k,
                epsilon: eps_k,
                epsilon_source: source,
                choice,
                eta_exact,
                eta,
            });
            processed[k] = true;
        }
        for k in &leaves {
            temp.remove(k);
        }
    }

    let mut components: Vec<ComponentPlan> = plans.into_iter().flatten().collect();
    let recheck = repair(&dag, &certs, eps, &mut components, &mut audit)?;
    let mut eta_subsystem = vec![BigRational::zero(); net.len()];
    for c in &components {
        for &i in partition.members(c.k) {
            eta_subsystem[i - 1] = c.eta.clone();
        }
    }
    Ok(QuantizationPlan {
        epsilon: eps.clone(),
        components,
        eta_subsystem,
        audit,
        recheck,
        rule: options.rule,
    })
}

/// Both selection inequalities at the reported values. Predecessor terms use
/// the predecessors' final parameters; `eps^k` is recomputed from the
/// reported successor values.
pub fn recheck_plan(
    dag: &Condensation,
    certs: &[&AggregateCert],
    eps: &BigRational,
    components: &[ComponentPlan],
) -> Vec<Recheck> {
    components
        .iter()
        .map(|c| {
            let k = c.k;
            let cert = certs[k - 1];
            let eps_k = match c.epsilon_source {
                EpsilonSource::Network => eps.clone(),
                EpsilonSource::Successors => dag
                    .post(k)
                    .iter()
                    .map(|&j| components[j - 1].eta.clone())
                    .min()
                    .unwrap(),
            };
            let mut lhs = &cert.lipschitz * &c.eta + cert.sigma_self.apply(&c.eta);
            for j in dag.post_inverse(k) {
                lhs += cert.sigma_from(j) * &components[j - 1].eta;
            }
            let b = budget(cert, &eps_k);
            let alpha_lhs = cert.alpha_upper.apply(&c.eta);
            let alpha_rhs = cert.alpha_lower.apply(&eps_k);
            let ok = lhs <= b && alpha_lhs <= alpha_rhs && c.eta.is_positive();
            Recheck {
                k,
                epsilon: Num::from(&eps_k),
                lhs: Num::from(&lhs),
                budget: Num::from(&b),
                alpha_lhs: Num::from(&alpha_lhs),
                alpha_rhs: Num::from(&alpha_rhs),
                ok,
            }
        })
        .collect()
}

/// Lowers a failing component by one unit in its third significant digit
/// until every recheck passes.
fn repair(
    dag: &Condensation,
    certs: &[&AggregateCert],
    eps: &BigRational,
    components: &mut [ComponentPlan],
    audit: &mut Vec<AuditEvent>,
) -> Result<Vec<Recheck>, DesignError> {
    for _ in 0..10_000 {
        let checks = recheck_plan(dag, certs, eps, components);
        let Some(bad) = checks.iter().find(|r| !r.ok) else {
            return Ok(checks);
        };
        let c = &mut components[bad.k - 1];
        let t = step_down(&c.eta).ok_or(DesignError::RepairDiverged)?;
        audit.push(AuditEvent::Repaired {
            k: c.k,
            from: Num::from(&c.eta),
            to: Num::from(&t),
        });
        c.eta = t;
    }
    Err(DesignError::RepairDiverged)
}

/// One unit below `x` in the third significant digit of its truncation.
fn step_down(x: &BigRational) -> Option<BigRational> {
    if !x.is_positive() {
        return None;
    }
    let t = truncate_sig(x, 3);
    let lower = &t - pow10(decimal_exponent(&t) - 2);
    lower.is_positive().then_some(lower)
}

/// The whole-network certificate used by the monolithic baseline.
#[derive(Debug, Clone, PartialEq)]
pub struct MonolithicCert {
    pub lipschitz: BigRational,
    pub alpha_lower: BigRational,
    pub alpha_upper: BigRational,
    pub rho: BigRational,
    /// Largest valid decrease slope for the weights, when built from them.
    pub rho_tight: Option<BigRational>,
    pub sigma_self: BigRational,
}

impl From<&SuppliedCert> for MonolithicCert {
    fn from(c: &SuppliedCert) -> Self {
        MonolithicCert {
            lipschitz: c.lipschitz.clone(),
            alpha_lower: c.alpha_lower.clone(),
            alpha_upper: c.alpha_upper.clone(),
            rho: c.rho.clone(),
            rho_tight: None,
            sigma_self: c.sigma_self.clone(),
        }
    }
}

/// Weighted sum of every member certificate, all couplings internal.
pub fn monolithic_certificate(
    net: &NetworkSpec,
    lambda: &[BigRational],
) -> Result<MonolithicCert, DesignError> {
    if lambda.len() != net.len() || lambda.iter().any(|l| !l.is_positive()) {
        return Err(DesignError::Infeasible(format!(
            "need {} positive weights",
            net.len()
        )));
    }
    let n = net.len();
    let mut margin: Vec<BigRational> = (0..n)
        .map(|j| &lambda[j] * &net.subsystems[j].cert.rho.slope)
        .collect();
    for (i, s) in net.subsystems.iter().enumerate() {
        for (&j, g) in &s.cert.sigma_in {
            margin[j - 1] -= &lambda[i] * &g.slope / &net.subsystem(j).cert.alpha_lower.slope;
        }
    }
    if margin.iter().any(|w| !w.is_positive()) {
        return Err(DesignError::Infeasible(
            "weighted margin is not positive".into(),
        ));
    }
    let sum = |f: &dyn Fn(&LyapunovCert) -> BigRational| -> BigRational {
        net.subsystems
            .iter()
            .zip(lambda)
            .fold(BigRational::zero(), |acc, (s, l)| acc + l * f(&s.cert))
    };
    let rho = margin.iter().min().unwrap() / lambda.iter().max().unwrap();
    let rho_tight = margin.iter().zip(lambda).map(|(w, l)| w / l).min().unwrap();
    Ok(MonolithicCert {
        lipschitz: sum(&|c| c.lipschitz.clone()),
        alpha_lower: net
            .subsystems
            .iter()
            .zip(lambda)
            .map(|(s, l)| l * &s.cert.alpha_lower.slope)
            .min()
            .unwrap(),
        alpha_upper: sum(&|c| c.alpha_upper.slope.clone()),
        rho: publish_rho(&rho, &rho_tight),
        rho_tight: Some(rho_tight),
        sigma_self: sum(&|c| c.sigma_self.slope.clone()),
    })
}

/// Largest single parameter satisfying both conditions for the whole network.
pub fn monolithic_quantization(
    cert: &MonolithicCert,
    eps: &BigRational,
) -> Result<BigRational, DesignError> {
    if !eps.is_positive() {
        return Err(DesignError::NonPositiveEpsilon);
    }
    if !cert.rho.is_positive() || !cert.alpha_lower.is_positive() || !cert.alpha_upper.is_positive()
    {
        return Err(DesignError::Infeasible("slopes must be positive".into()));
    }
    let level = &cert.alpha_lower * eps;
    let cap = &level / &cert.alpha_upper;
    let den = &cert.lipschitz + &cert.sigma_self;
    if den.is_zero() {
        return Ok(cap);
    }
    Ok((&cert.rho * &level / den).min(cap))
}

#[derive(Debug, Clone, Serialize)]
pub struct ComponentPlanReport {
    pub component: usize,
    pub members: Vec<usize>,
    pub epsilon: Num,
    pub epsilon_source: EpsilonSource,
    pub choice: Num,
    pub eta_exact: Num,
    pub eta: Num,
}

#[derive(Debug, Clone, Serialize)]
pub struct PlanReport {
    pub epsilon: Num,
    pub rule: SelectionRule,
    pub eta_bar: Vec<Num>,
    pub eta: Vec<Num>,
    pub components: Vec<ComponentPlanReport>,
    pub recheck_ok: bool,
    pub recheck: Vec<Recheck>,
    pub audit: Vec<AuditEvent>,
}

impl PlanReport {
    pub fn new(plan: &QuantizationPlan, partition: &SccPartition) -> Self {
        PlanReport {
            epsilon: Num::from(&plan.epsilon),
            rule: plan.rule,
            eta_bar: plan.components.iter().map(|c| Num::from(&c.eta)).collect(),
            eta: plan.eta_subsystem.iter().map(Num::from).collect(),
            components: plan
                .components
                .iter()
                .map(|c| ComponentPlanReport {
                    component: c.k,
                    members: partition.members(c.k).to_vec(),
                    epsilon: Num::from(&c.epsilon),
                    epsilon_source: c.epsilon_source,
                    choice: Num::from(&c.choice),
                    eta_exact: Num::from(&c.eta_exact),
                    eta: Num::from(&c.eta),
                })
                .collect(),
            recheck_ok: plan.recheck_ok(),
            recheck: plan.recheck.clone(),
            audit: plan.audit.clone(),
        }
    }
}

/// Replays the audit trail and returns the reported parameter per component.
pub fn replay_audit(audit: &[AuditEvent]) -> BTreeMap<usize, String> {
    let mut out = BTreeMap::new();
    for e in audit {
        match e {
            AuditEvent::Finalized { k, reported, .. } => {
                out.insert(*k, reported.exact.clone());
            }
            AuditEvent::Repaired { k, to, .. } => {
                out.insert(*k, to.exact.clone());
            }
            _ => {}
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bundled;
    use crate::gains::analyze_components;
    use crate::graph::{build_dependency_graph, condense, strongly_connected_components};
    use crate::rational::{from_f64_literal, int, ratio, to_f64};

    fn q(s: &str) -> BigRational {
        crate::rational::parse_rational(s).unwrap()
    }

    fn run(net: &NetworkSpec, eps: &str, options: &DesignOptions) -> QuantizationPlan {
        let g = build_dependency_graph(net);
        let p = strongly_connected_components(&g);
        let c = condense(&g, &p);
        let gains = analyze_components(net, &p).unwrap();
        design_network_quantization(net, &p, &c, &gains, &q(eps), options).unwrap()
    }

    fn toy_cert() -> LyapunovCert {
        bundled::toy_single().subsystem(1).cert.clone()
    }

    #[test]
    fn subsystem_inequalities() {
        let c = toy_cert();
        assert!(check_subsystem_inequalities(
            1,
            &c,
            &q("0.1"),
            &[q("0.025")]
        ));
        assert!(!check_subsystem_inequalities(
            1,
            &c,
            &q("0.1"),
            &[q("0.026")]
        ));
        assert!(!check_subsystem_inequalities(
            1,
            &c,
            &q("0.01"),
            &[q("0.011")]
        ));
    }

    #[test]
    fn equal_value_examples() {
        let one = LinearGain::new(int(1));
        let zero = LinearGain::new(int(0));
        let big = int(1);
        let x = solve_equal_value(&int(2), &zero, &[one.clone()], &q("0.005"), &big).unwrap();
        assert_eq!(x, ratio(5, 3000));
        assert_eq!(truncate_sig(&x, 3), q("1.66e-3"));
        let x = solve_equal_value(
            &int(4),
            &one,
            &[one.clone(), one.clone()],
            &q("1.66e-4"),
            &big,
        )
        .unwrap();
        assert_eq!(truncate_sig(&x, 3), q("2.37e-5"));
        assert!(solve_equal_value(&int(0), &zero, &[], &q("1"), &big).is_none());
        let capped = solve_equal_value(&int(0), &one, &[], &q("100"), &q("1e-4")).unwrap();
        assert_eq!(capped, q("1e-4"));
    }

    #[test]
    fn academic_plan() {
        let net = bundled::academic();
        let plan = run(&net, "0.01", &DesignOptions::default());
        let expected = ["3.96e-6", "9.91e-8", "2.38e-5", "1.66e-3"];
        for (c, e) in plan.components.iter().zip(expected) {
            assert_eq!(c.eta, q(e), "component {}", c.k);
            let rel = (to_f64(&c.eta_exact) - to_f64(&q(e))).abs() / to_f64(&q(e));
            assert!(rel < 0.01);
        }
        assert_eq!(plan.components[3].eta_exact, ratio(1, 600));
        assert_eq!(plan.components[2].eta_exact, ratio(1, 42_000));
        assert_eq!(plan.components[0].eta_exact, ratio(1, 252_000));
        assert!(plan.recheck_ok());
        let eta: Vec<_> = [
            "3.96e-6", "2.38e-5", "2.38e-5", "9.91e-8", "9.91e-8", "1.66e-3",
        ]
        .iter()
        .map(|s| q(s))
        .collect();
        assert_eq!(plan.eta_subsystem, eta);
        assert_eq!(plan.components[3].epsilon_source, EpsilonSource::Network);
        assert_eq!(plan.components[2].epsilon, ratio(1, 600));
        assert_eq!(plan.components[1].epsilon, ratio(1, 42_000));
        assert!(!plan
            .audit
            .iter()
            .any(|e| matches!(e, AuditEvent::Repaired { .. })));
    }

    #[test]
    fn literal_dag_without_walkthrough_edge() {
        let mut net = bundled::academic();
        net.post_extra.clear();
        let plan = run(&net, "0.01", &DesignOptions::default());
        assert_eq!(plan.components[2].epsilon_source, EpsilonSource::Network);
        assert_eq!(plan.components[2].eta_exact, ratio(1, 7000));
        assert!(plan.recheck_ok());
    }

    #[test]
    fn single_component_and_chain() {
        let plan = run(&bundled::toy_single(), "0.1", &DesignOptions::default());
        assert_eq!(plan.components.len(), 1);
        assert_eq!(plan.components[0].epsilon, q("0.1"));
        assert_eq!(plan.components[0].eta, q("0.025"));

        let plan = run(&bundled::toy_chain(), "0.1", &DesignOptions::default());
        assert_eq!(plan.components[1].epsilon, q("0.1"));
        assert_eq!(plan.components[0].epsilon, plan.components[1].eta_exact);
        assert!(plan.recheck_ok());
    }

    #[test]
    fn audit_replays_and_order_is_irrelevant() {
        let net = bundled::academic();
        let a = run(&net, "0.01", &DesignOptions::default());
        let b = run(
            &net,
            "0.01",
            &DesignOptions {
                leaf_order: LeafOrder::Descending,
                ..Default::default()
            },
        );
        assert_eq!(a.eta_bar(), b.eta_bar());
        let replay = replay_audit(&a.audit);
        for c in &a.components {
            assert_eq!(replay[&c.k], Num::from(&c.eta).exact);
        }
    }

    #[test]
    fn budget_share_rule_is_sound() {
        let net = bundled::academic();
        let plan = run(
            &net,
            "0.01",
            &DesignOptions {
                rule: SelectionRule::BudgetShare,
                ..Default::default()
            },
        );
        assert!(plan.recheck_ok());
    }

    #[test]
    fn monolithic_examples() {
        let net = bundled::academic();
        let m = net.monolithic.as_ref().unwrap();
        let supplied = MonolithicCert::from(m.cert.as_ref().unwrap());
        assert_eq!(
            monolithic_quantization(&supplied, &q("0.01")).unwrap(),
            q("1e-6")
        );

        let built = monolithic_certificate(&net, m.lambda.as_ref().unwrap()).unwrap();
        assert_eq!(built.lipschitz, int(60));
        assert_eq!(built.alpha_lower, int(1));
        assert_eq!(built.alpha_upper, int(30));
        assert_eq!(built.sigma_self, int(17));
        assert_eq!(built.rho_tight, Some(ratio(1, 130)));
        assert!(supplied.rho > ratio(1, 130));

        let toy = MonolithicCert {
            lipschitz: int(1),
            alpha_lower: int(1),
            alpha_upper: int(1),
            rho: ratio(1, 2),
            rho_tight: None,
            sigma_self: int(1),
        };
        assert_eq!(
            monolithic_quantization(&toy, &q("0.1")).unwrap(),
            q("0.025")
        );
        let capped = MonolithicCert {
            alpha_upper: int(100),
            rho: int(1),
            lipschitz: int(0),
            sigma_self: ratio(1, 1_000_000),
            ..toy
        };
        assert_eq!(
            monolithic_quantization(&capped, &q("0.01")).unwrap(),
            q("1e-4")
        );
    }

    mod props {
        use super::*;
        use crate::graph::DepGraph;
        use crate::netspec::{Interval, Subsystem};
        use proptest::prelude::*;

        /// Random scalar networks whose couplings keep every cycle small-gain.
        fn network(edges: &[(usize, usize)], n: usize) -> NetworkSpec {
            let g = DepGraph::new(n, edges.iter().copied());
            let subsystems = (1..=n)
                .map(|j| {
                    let reads: Vec<usize> =
                        g.edges().iter().filter(|e| e.1 == j).map(|e| e.0).collect();
                    let mut text = format!("0.5*x{j} + u{j}");
                    for i in &reads {
                        text.push_str(&format!(" + 0.1*x{i}"));
                    }
                    let input = vec![Interval::new(int(-1), int(1))];
                    Subsystem {
                        id: j,
                        state_box: vec![Interval::new(int(-1), int(1))],
                        input_box: input,
                        dynamics: vec![crate::netspec::parse_expression(&text).unwrap()],
                        dynamics_text: vec![text],
                        cert: LyapunovCert {
                            lipschitz: int(1),
                            alpha_lower: LinearGain::new(int(1)),
                            alpha_upper: LinearGain::new(int(1)),
                            rho: LinearGain::new(ratio(1, 2)),
                            sigma_self: LinearGain::new(int(1)),
                            sigma_in: reads
                                .iter()
                                .map(|&i| (i, LinearGain::new(ratio(1, 10))))
                                .collect(),
                        },
                        deps: None,
                    }
                })
                .collect();
            NetworkSpec {
                name: String::new(),
                description: String::new(),
                subsystems,
                lambda_overrides: BTreeMap::new(),
                monolithic: None,
                post_extra: Vec::new(),
            }
        }

        fn arb() -> impl Strategy<Value = NetworkSpec> {
            (1usize..=5).prop_flat_map(|n| {
                proptest::collection::vec((1..=n, 1..=n), 0..(2 * n))
                    .prop_map(move |e| network(&e, n))
            })
        }

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(64))]
            #[test]
            fn plans_are_sound_and_monotone(net in arb(), e1 in 1u32..1000, e2 in 1u32..1000) {
                let (lo, hi) = (e1.min(e2), e1.max(e2));
                let lo_s = format!("{lo}/1000");
                let hi_s = format!("{hi}/1000");
                let a = run(&net, &lo_s, &DesignOptions::default());
                let b = run(&net, &hi_s, &DesignOptions::default());
                prop_assert!(a.recheck_ok() && b.recheck_ok());
                for c in &a.components {
                    prop_assert!(c.epsilon <= q(&lo_s));
                    prop_assert!(c.eta.is_positive());
                }
                for (x, y) in a.components.iter().zip(&b.components) {
                    prop_assert!(x.eta_exact <= y.eta_exact);
                    prop_assert!(x.eta <= y.eta);
                }
                let d = run(&net, &lo_s, &DesignOptions { leaf_order: LeafOrder::Descending, ..Default::default() });
                prop_assert_eq!(a.eta_bar(), d.eta_bar());
            }
        }

        #[test]
        fn literal_f64_inputs() {
            assert_eq!(from_f64_literal(0.01).unwrap(), q("0.01"));
        }
    }
}
