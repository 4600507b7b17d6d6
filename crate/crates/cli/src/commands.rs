use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use num::BigRational;
use rayon::prelude::*;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};
use symnet::abstraction::{
    build_symbolic_model, complexity_counts, monolithic_counts, sidecar, write_table,
    ComplexityJson, Convention, Mode, MonolithicJson, SymbolicModel,
};
use symnet::bisim::{
    check_relation, compose, greatest_bisimulation, spot_check, Block, ComponentModel,
    ExplicitSystem, Relation, Scale,
};
use symnet::bundled;
use symnet::design::{
    design_network_quantization, monolithic_certificate, monolithic_quantization, DesignOptions,
    MonolithicCert, PlanReport, QuantizationPlan, SelectionRule,
};
use symnet::gains::{analyze_components, CertReport, ComponentGains};
use symnet::graph::{
    build_dependency_graph, condense, strongly_connected_components, Condensation, SccPartition,
};
use symnet::netspec::{load_network, NetworkSpec};
use symnet::rational::{parse_rational, Count, Num};

use crate::report::{Halt, Input, Report};

pub type Outcome = Result<(), Halt>;

pub fn parse_positive(text: &str) -> Result<BigRational, String> {
    match parse_rational(text) {
        Some(x) if x > BigRational::from_integer(0.into()) => Ok(x),
        Some(_) => Err(format!("{text} is not positive")),
        None => Err(format!("{text} is not a number")),
    }
}

fn to_value(x: impl serde::Serialize) -> Value {
    serde_json::to_value(x).expect("serializable stage result")
}

pub fn load(report: &mut Report, path: Option<&Path>) -> Result<NetworkSpec, Halt> {
    report.stage("load", |r| {
        let (source, text) = match path {
            Some(p) => (
                p.display().to_string(),
                fs::read_to_string(p).map_err(|e| format!("{}: {e}", p.display()))?,
            ),
            None => (
                "bundled:academic".to_string(),
                bundled::ACADEMIC_TOML.to_string(),
            ),
        };
        r.set_input(Input::new(source, text.as_bytes()));
        let net = load_network(&text).map_err(|e| e.to_string())?;
        let v = json!({ "name": net.name, "subsystems": net.len() });
        Ok::<_, String>((net, v))
    })
}

pub struct Structure {
    pub partition: SccPartition,
    pub condensation: Condensation,
}

pub fn structure(report: &mut Report, net: &NetworkSpec, tag: &str) -> Result<Structure, Halt> {
    let g = report.stage(&format!("graph{tag}"), |_| {
        let g = build_dependency_graph(net);
        let v = json!({
            "vertices": g.vertex_count(),
            "edge_count": g.edges().len(),
            "edges": g.edges(),
        });
        Ok::<_, String>((g, v))
    })?;
    let partition = report.stage(&format!("scc{tag}"), |_| {
        let p = strongly_connected_components(&g);
        let comps: Vec<Value> = (1..=p.len())
            .map(|k| json!({ "component": k, "members": p.members(k) }))
            .collect();
        let v = json!({ "count": p.len(), "components": comps });
        Ok::<_, String>((p, v))
    })?;
    let condensation = report.stage(&format!("condensation{tag}"), |_| {
        let c = condense(&g, &partition);
        let order = c.topological_order().ok_or("condensation is not acyclic")?;
        let v = json!({
            "vertices": c.vertex_count(),
            "edges": c.edges(),
            "topological_order": order,
        });
        Ok::<_, String>((c, v))
    })?;
    Ok(Structure {
        partition,
        condensation,
    })
}

pub fn gains(
    report: &mut Report,
    net: &NetworkSpec,
    s: &Structure,
    tag: &str,
) -> Result<Vec<ComponentGains>, Halt> {
    report.stage(&format!("gains{tag}"), |r| {
        let gains = analyze_components(net, &s.partition).map_err(|e| e.to_string())?;
        for g in &gains {
            if let Some(w) = &g.small_gain.warning {
                r.warn("small_gain", format!("component {}: {w}", g.cert.component));
            }
        }
        let v = to_value(gains.iter().map(CertReport::from).collect::<Vec<_>>());
        Ok::<_, String>((gains, v))
    })
}

pub fn design(
    report: &mut Report,
    net: &NetworkSpec,
    s: &Structure,
    gains: &[ComponentGains],
    eps: &BigRational,
    rule: SelectionRule,
    tag: &str,
) -> Result<QuantizationPlan, Halt> {
    if !net.post_extra.is_empty() {
        report.warn(
            "ordering_edges",
            format!(
                "design adds ordering edges {:?} to the component graph",
                net.post_extra
            ),
        );
    }
    let opts = DesignOptions {
        rule,
        ..Default::default()
    };
    let plan = report.stage(&format!("design{tag}"), |_| {
        let plan =
            design_network_quantization(net, &s.partition, &s.condensation, gains, eps, &opts)
                .map_err(|e| e.to_string())?;
        let v = to_value(PlanReport::new(&plan, &s.partition));
        Ok::<_, String>((plan, v))
    })?;
    if !plan.recheck_ok() {
        report.fail(
            &format!("design{tag}"),
            Value::Null,
            "recheck at reported values fails".into(),
        );
        return Err(Halt);
    }
    Ok(plan)
}

fn cert_json(c: &MonolithicCert) -> Value {
    json!({
        "lipschitz": Num::from(&c.lipschitz),
        "alpha_lower": Num::from(&c.alpha_lower),
        "alpha_upper": Num::from(&c.alpha_upper),
        "rho": Num::from(&c.rho),
        "rho_tight": c.rho_tight.as_ref().map(Num::from),
        "sigma_self": Num::from(&c.sigma_self),
    })
}

/// Monolithic baseline parameter, when the network carries the data.
fn monolithic(
    report: &mut Report,
    net: &NetworkSpec,
    eps: &BigRational,
) -> Result<Option<BigRational>, Halt> {
    let Some(spec) = &net.monolithic else {
        return Ok(None);
    };
    report.stage("monolithic", |r| {
        let from_lambda = match &spec.lambda {
            Some(l) => Some(monolithic_certificate(net, l).map_err(|e| e.to_string())?),
            None => None,
        };
        let supplied = spec.cert.as_ref().map(MonolithicCert::from);
        if let (Some(s), Some(tight)) = (
            &supplied,
            from_lambda.as_ref().and_then(|c| c.rho_tight.as_ref()),
        ) {
            if &s.rho > tight {
                r.warn(
                    "monolithic_rho",
                    format!(
                        "supplied decrease slope {} exceeds {} allowed by the supplied weights",
                        Num::from(&s.rho),
                        Num::from(tight)
                    ),
                );
            }
        }
        let mut v = json!({});
        let mut eta = None;
        for (key, cert) in [("from_lambda", &from_lambda), ("supplied", &supplied)] {
            if let Some(c) = cert {
                let e = monolithic_quantization(c, eps).map_err(|e| e.to_string())?;
                v[key] = json!({ "cert": cert_json(c), "eta": Num::from(&e) });
                eta = Some(e);
            }
        }
        Ok::<_, String>((eta, v))
    })
}

pub fn analyze(report: &mut Report, network: Option<&Path>) -> Outcome {
    let net = load(report, network)?;
    let s = structure(report, &net, "")?;
    gains(report, &net, &s, "")?;
    Ok(())
}

pub fn design_cmd(
    report: &mut Report,
    network: Option<&Path>,
    eps: &BigRational,
    rule: SelectionRule,
) -> Outcome {
    let net = load(report, network)?;
    let s = structure(report, &net, "")?;
    let g = gains(report, &net, &s, "")?;
    design(report, &net, &s, &g, eps, rule, "")?;
    monolithic(report, &net, eps)?;
    Ok(())
}

fn convention_warning(report: &mut Report, convention: Convention) {
    let message = match convention {
        Convention::Restricted => {
            "labels range over in-neighbour states and the inputs that appear in the dynamics; \
             the full definition ranges over every other subsystem and every declared input"
        }
        Convention::Full => "labels range over every other subsystem and every declared input",
    };
    report.warn("label_convention", format!("{convention}: {message}"));
}

pub fn complexity(
    report: &mut Report,
    network: Option<&Path>,
    eps: &BigRational,
    convention: Convention,
    monolithic_eta: Option<&BigRational>,
) -> Outcome {
    let net = load(report, network)?;
    let s = structure(report, &net, "")?;
    let g = gains(report, &net, &s, "")?;
    let plan = design(report, &net, &s, &g, eps, SelectionRule::EqualValue, "")?;
    convention_warning(report, convention);
    let counts = report.stage("complexity", |_| {
        let c =
            complexity_counts(&net, &plan.eta_subsystem, convention).map_err(|e| e.to_string())?;
        let v = to_value(ComplexityJson::from(&c));
        Ok::<_, String>((c, v))
    })?;
    if convention == Convention::Restricted {
        report.warn(
            "tcomplex_deviation",
            format!(
                "total tcomplex is {} ({}); published totals use a different label accounting and are not reproduced",
                Count::from(&counts.total_tcomplex).sci,
                counts.total_tcomplex
            ),
        );
    }
    let eta_star = monolithic(report, &net, eps)?;
    if let Some(h) = monolithic_eta.cloned().or(eta_star) {
        report.stage("monolithic_complexity", |_| {
            let m = monolithic_counts(&net, &h).map_err(|e| e.to_string())?;
            let mut v = to_value(MonolithicJson::from(&m));
            v["eta"] = to_value(Num::from(&h));
            Ok::<_, String>(((), v))
        })?;
    }
    Ok(())
}

pub struct BuildArgs<'a> {
    pub eps: &'a BigRational,
    pub explicit: bool,
    pub subsystem: Option<usize>,
    pub out: Option<&'a Path>,
    pub convention: Convention,
    pub cap: u64,
}

fn model_json(m: &SymbolicModel) -> Value {
    json!({
        "id": m.id,
        "eta": Num::from(m.eta()),
        "states": Count::from(&m.state.cardinality()),
        "labels": Count::from(&m.labels.cardinality()),
        "explicit": m.is_explicit(),
        "stats": m.is_explicit().then_some(&m.stats),
    })
}

fn write_model(m: &SymbolicModel, dir: &Path) -> Result<Value, String> {
    let table = dir.join(format!("subsystem-{}.tbl", m.id));
    let meta = dir.join(format!("subsystem-{}.json", m.id));
    let mut bytes = Vec::new();
    write_table(m, &mut bytes).map_err(|e| e.to_string())?;
    fs::write(&table, &bytes).map_err(|e| format!("{}: {e}", table.display()))?;
    let f = fs::File::create(&meta).map_err(|e| format!("{}: {e}", meta.display()))?;
    serde_json::to_writer_pretty(BufWriter::new(f), &sidecar(m)).map_err(|e| e.to_string())?;
    Ok(json!({
        "table": table.display().to_string(),
        "sidecar": meta.display().to_string(),
        "sha256": format!("{:x}", Sha256::digest(&bytes)),
        "bytes": bytes.len(),
    }))
}

pub fn build(report: &mut Report, network: Option<&Path>, a: &BuildArgs) -> Outcome {
    let net = load(report, network)?;
    let s = structure(report, &net, "")?;
    let g = gains(report, &net, &s, "")?;
    let plan = design(report, &net, &s, &g, a.eps, SelectionRule::EqualValue, "")?;
    convention_warning(report, a.convention);
    let ids: Vec<usize> = match a.subsystem {
        Some(i) if i == 0 || i > net.len() => {
            report.fail("build", Value::Null, format!("no subsystem {i}"));
            return Err(Halt);
        }
        Some(i) => vec![i],
        None => (1..=net.len()).collect(),
    };
    if a.out.is_some() && !a.explicit {
        report.fail("build", Value::Null, "--out needs --explicit".into());
        return Err(Halt);
    }
    let mode = if a.explicit {
        Mode::Explicit { cap: a.cap }
    } else {
        Mode::Lazy
    };
    report.stage("build", |r| {
        if let Some(dir) = a.out {
            fs::create_dir_all(dir).map_err(|e| format!("{}: {e}", dir.display()))?;
        }
        let mut out = Vec::new();
        for &id in &ids {
            let m = build_symbolic_model(&net, id, &plan.eta_subsystem, a.convention, mode)
                .map_err(|e| e.to_string())?;
            if m.stats.near_boundary > 0 {
                r.warn(
                    "near_boundary",
                    format!(
                        "subsystem {id}: {} successors within 1e-12 of a cell boundary",
                        m.stats.near_boundary
                    ),
                );
            }
            let mut v = model_json(&m);
            if let Some(dir) = a.out {
                v["files"] = write_model(&m, dir)?;
            }
            out.push(v);
        }
        Ok::<_, String>(((), Value::Array(out)))
    })
}

/// Member abstractions and their composition for one component. Members
/// whose tables fit under `cap` are materialized.
fn composed(
    net: &NetworkSpec,
    members: &[usize],
    eta: &[BigRational],
    cap: u64,
) -> Result<symnet::bisim::ComposedSystem, String> {
    let models = members
        .iter()
        .map(|&i| {
            let lazy = build_symbolic_model(net, i, eta, Convention::Restricted, Mode::Lazy)?;
            match (lazy.state_count(), lazy.label_count()) {
                (Some(n), Some(m)) if n.saturating_mul(m) <= cap => build_symbolic_model(
                    net,
                    i,
                    eta,
                    Convention::Restricted,
                    Mode::Explicit { cap },
                ),
                _ => Ok(lazy),
            }
        })
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| e.to_string())?;
    compose(models).map_err(|e| e.to_string())
}

fn opt_count(x: Option<u64>) -> Value {
    x.map_or(Value::Null, Value::from)
}

/// Largest number of joint transitions compared against the direct model.
const IDENTITY_PAIRS: u64 = 10_000_000;

pub fn compose_cmd(
    report: &mut Report,
    network: Option<&Path>,
    eps: &BigRational,
    component: Option<usize>,
    identity_limit: u64,
) -> Outcome {
    let net = load(report, network)?;
    let s = structure(report, &net, "")?;
    let g = gains(report, &net, &s, "")?;
    let plan = design(report, &net, &s, &g, eps, SelectionRule::EqualValue, "")?;
    let ks: Vec<usize> = match component {
        Some(k) if k == 0 || k > s.partition.len() => {
            report.fail("compose", Value::Null, format!("no component {k}"));
            return Err(Halt);
        }
        Some(k) => vec![k],
        None => (1..=s.partition.len()).collect(),
    };
    let mut mismatch = None;
    report.stage("compose", |r| {
        let mut out = Vec::new();
        for &k in &ks {
            let members = s.partition.members(k);
            let c = composed(&net, members, &plan.eta_subsystem, 0)?;
            let (n, m) = (c.state_count(), c.label_count());
            let mut v = json!({
                "component": k,
                "members": members,
                "external": c.external.iter().map(|e| e.0).collect::<Vec<_>>(),
                "states": opt_count(n),
                "labels": opt_count(m),
                "identity": null,
            });
            if let (Some(n), Some(m)) = (n, m) {
                if n <= identity_limit && n.saturating_mul(m) <= IDENTITY_PAIRS {
                    let direct = ComponentModel::new(&net, members, &plan.eta_subsystem)
                        .map_err(|e| e.to_string())?;
                    let bad = (0..n).into_par_iter().find_map_first(|st| {
                        (0..m).find_map(|l| match (c.successor(st, l), direct.successor(st, l)) {
                            (Ok(a), Ok(b)) if a == b => None,
                            (a, b) => Some(json!({
                                "state": c.state_indices(st),
                                "label": c.label_indices(l),
                                "composed": format!("{a:?}"),
                                "direct": format!("{b:?}"),
                            })),
                        })
                    });
                    v["identity"] =
                        json!({ "pairs": n * m, "agree": bad.is_none(), "first_mismatch": bad });
                    if bad.is_some() && mismatch.is_none() {
                        mismatch = Some(k);
                    }
                } else {
                    r.warn(
                        "identity_skipped",
                        format!("component {k}: too large for the identity check"),
                    );
                }
            }
            out.push(v);
        }
        Ok::<_, String>(((), Value::Array(out)))
    })?;
    if let Some(k) = mismatch {
        report.fail(
            "compose",
            Value::Null,
            format!("component {k}: composition differs from the direct model"),
        );
        return Err(Halt);
    }
    Ok(())
}

pub struct VerifyArgs<'a> {
    pub toy: bool,
    pub eps: Option<&'a BigRational>,
    pub refine: Option<u32>,
    pub cap: u64,
    pub greatest_cap: u64,
    pub samples: u64,
    pub seed: u64,
}

/// Exhaustive check of the component relation against a refined reference.
fn check_component(
    net: &NetworkSpec,
    s: &Structure,
    g: &ComponentGains,
    plan: &QuantizationPlan,
    refine: u32,
    a: &VerifyArgs,
) -> Result<(bool, Value), String> {
    let k = g.cert.component;
    let members = s.partition.members(k);
    let eps = &plan.components[k - 1].epsilon;
    let abs = composed(net, members, &plan.eta_subsystem, a.cap)?;
    let fine_eta: Vec<BigRational> = plan
        .eta_subsystem
        .iter()
        .map(|e| e / BigRational::from_integer(refine.into()))
        .collect();
    let fine = composed(net, members, &fine_eta, a.cap)?;
    let s1 = ExplicitSystem::new(&fine, a.cap).map_err(|e| e.to_string())?;
    let s2 = ExplicitSystem::new(&abs, a.cap).map_err(|e| e.to_string())?;
    let rel = Relation::lyapunov(&g.cert, eps);
    let r = check_relation(&s1, &s2, eps, &rel).map_err(|e| e.to_string())?;
    let pairs = s1.states as u64 * s2.states as u64;
    let greatest = if pairs <= a.greatest_cap {
        let gb = greatest_bisimulation(&s1, &s2, eps, a.greatest_cap).map_err(|e| e.to_string())?;
        let m = rel
            .materialize(&s1, &s2, &Scale::for_systems(&s1, &s2, eps))
            .map_err(|e| e.to_string())?;
        json!({
            "nonempty": !gb.is_empty(),
            "total": gb.is_total(),
            "contains_candidate": m.is_subset_of(&gb.relation),
            "pairs": gb.relation.count(),
            "iterations": gb.iterations,
        })
    } else {
        Value::Null
    };
    let v = json!({
        "component": k,
        "members": members,
        "epsilon": Num::from(eps),
        "refine": refine,
        "reference": { "states": s1.states, "labels": s1.labels },
        "abstraction": { "states": s2.states, "labels": s2.labels },
        "verdict": r.verdict,
        "covers_reference": r.covers_first,
        "covers_abstraction": r.covers_second,
        "counterexample": r.counterexample,
        "stats": r.stats,
        "witness_order": r.witness_order,
        "greatest": greatest,
    });
    Ok((r.verdict, v))
}

/// Largest of the reference table size and the relation size, used to
/// decide whether an exhaustive check is affordable.
fn check_size(
    net: &NetworkSpec,
    members: &[usize],
    eta: &[BigRational],
    refine: u32,
) -> Option<u64> {
    let fine: Vec<BigRational> = eta
        .iter()
        .map(|e| e / BigRational::from_integer(refine.into()))
        .collect();
    let f = composed(net, members, &fine, 0).ok()?;
    let c = composed(net, members, eta, 0).ok()?;
    let table = f.state_count()?.checked_mul(f.label_count()?)?;
    let pairs = f.state_count()?.checked_mul(c.state_count()?)?;
    Some(table.max(pairs))
}

fn verify_network(
    report: &mut Report,
    net: &NetworkSpec,
    eps: &BigRational,
    refine: u32,
    a: &VerifyArgs,
    tag: &str,
) -> Outcome {
    let s = structure(report, net, tag)?;
    let g = gains(report, net, &s, tag)?;
    let plan = design(report, net, &s, &g, eps, SelectionRule::EqualValue, tag)?;
    let name = format!("bisim{tag}");
    let mut failed = None;
    report.stage(&name, |r| {
        let mut out = Vec::new();
        for cg in &g {
            let k = cg.cert.component;
            match check_size(net, s.partition.members(k), &plan.eta_subsystem, refine) {
                Some(n) if n <= a.cap => {
                    let (ok, v) = check_component(net, &s, cg, &plan, refine, a)?;
                    if !ok && failed.is_none() {
                        failed = Some(k);
                    }
                    out.push(v);
                }
                _ if a.toy => {
                    return Err(format!(
                        "component {k}: refined reference or relation exceeds the cap of {} entries",
                        a.cap
                    ));
                }
                _ => {
                    r.warn(
                        "exhaustive_skipped",
                        format!("component {k}: refined reference or relation exceeds {} entries; exhaustive check skipped", a.cap),
                    );
                    out.push(json!({ "component": k, "members": s.partition.members(k), "verdict": null }));
                }
            }
        }
        Ok::<_, String>(((), Value::Array(out)))
    })?;
    if let Some(k) = failed {
        report.fail(
            &name,
            Value::Null,
            format!("component {k}: relation is not an approximate bisimulation"),
        );
        return Err(Halt);
    }
    if !a.toy {
        let spot = report.stage(&format!("spot{tag}"), |_| {
            let sr = spot_check(net, &s.partition, &g, &plan, a.samples, a.seed)
                .map_err(|e| e.to_string())?;
            let v = to_value(&sr);
            Ok::<_, String>((sr, v))
        })?;
        if !spot.verdict {
            report.fail(
                &format!("spot{tag}"),
                Value::Null,
                format!("{} sampled pairs violate the relation", spot.failures),
            );
            return Err(Halt);
        }
    }
    Ok(())
}

pub fn verify(report: &mut Report, network: Option<&Path>, a: &VerifyArgs) -> Outcome {
    report.warn(
        "label_matching",
        "transitions are matched by the quantized label first, then by exhaustive search over all labels",
    );
    if a.toy {
        let texts = [bundled::TOY_SINGLE_TOML, bundled::TOY_PAIR_LOCAL_TOML];
        report.set_input(Input::new(
            "bundled:toy-single+toy-pair-local",
            texts.concat().as_bytes(),
        ));
        let eps = a
            .eps
            .cloned()
            .unwrap_or_else(|| parse_rational("0.1").unwrap());
        for (net, refine) in [(bundled::toy_single(), 8), (bundled::toy_pair_local(), 2)] {
            let tag = format!("[{}]", net.name);
            verify_network(report, &net, &eps, a.refine.unwrap_or(refine), a, &tag)?;
        }
        return Ok(());
    }
    let net = load(report, network)?;
    let Some(eps) = a.eps else {
        report.fail(
            "verify",
            Value::Null,
            "--epsilon is required with --network".into(),
        );
        return Err(Halt);
    };
    verify_network(report, &net, eps, a.refine.unwrap_or(2), a, "")
}

pub fn example(report: &mut Report, out: &PathBuf) -> Outcome {
    let text = bundled::ACADEMIC_TOML;
    report.set_input(Input::new("bundled:academic", text.as_bytes()));
    report.stage("example", |_| {
        fs::write(out, text).map_err(|e| format!("{}: {e}", out.display()))?;
        let v = json!({ "path": out.display().to_string(), "bytes": text.len() });
        Ok::<_, String>(((), v))
    })
}
