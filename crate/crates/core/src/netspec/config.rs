//! TOML loader for network descriptions.

use std::collections::BTreeMap;

use num::{BigRational, Signed, Zero};
use thiserror::Error;
use toml::{Table, Value};

use super::expr::{parse_expression, ParseError, Var, VarKind};
use super::{
    Interval, LinearGain, LyapunovCert, MonolithicSpec, NetworkSpec, Subsystem, SuppliedCert,
};
use crate::rational::{from_f64_literal, parse_rational};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("malformed document: {0}")]
    Syntax(String),
    #[error("schema violation at `{path}`: {msg}")]
    Schema { path: String, msg: String },
    #[error("subsystem {id}, field `{field}`: {msg}")]
    Invariant {
        id: usize,
        field: String,
        msg: String,
    },
    #[error("subsystem {id}, dynamics[{index}]: {source}")]
    Expression {
        id: usize,
        index: usize,
        source: ParseError,
    },
}

fn schema<T>(path: impl Into<String>, msg: impl Into<String>) -> Result<T, ConfigError> {
    Err(ConfigError::Schema {
        path: path.into(),
        msg: msg.into(),
    })
}

fn invariant<T>(id: usize, field: &str, msg: impl Into<String>) -> Result<T, ConfigError> {
    Err(ConfigError::Invariant {
        id,
        field: field.into(),
        msg: msg.into(),
    })
}

/// Reads a number given as a TOML integer, float or string (`"3/13"`).
pub(crate) fn number(value: &Value, path: &str) -> Result<BigRational, ConfigError> {
    let parsed = match value {
        Value::Integer(i) => Some(BigRational::from_integer((*i).into())),
        Value::Float(f) => from_f64_literal(*f),
        Value::String(s) => parse_rational(s),
        _ => return schema(path, "expected a number"),
    };
    match parsed {
        Some(v) => Ok(v),
        None => schema(path, "not a finite number"),
    }
}

fn table<'a>(value: &'a Value, path: &str) -> Result<&'a Table, ConfigError> {
    match value {
        Value::Table(t) => Ok(t),
        _ => schema(path, "expected a table"),
    }
}

fn array<'a>(value: &'a Value, path: &str) -> Result<&'a Vec<Value>, ConfigError> {
    match value {
        Value::Array(a) => Ok(a),
        _ => schema(path, "expected an array"),
    }
}

fn index(value: &Value, path: &str) -> Result<usize, ConfigError> {
    match value {
        Value::Integer(i) if *i >= 1 => Ok(*i as usize),
        _ => schema(path, "expected a positive integer"),
    }
}

fn key_index(key: &str, path: &str) -> Result<usize, ConfigError> {
    match key.parse::<usize>() {
        Ok(k) if k >= 1 => Ok(k),
        _ => schema(format!("{path}.{key}"), "keys must be positive integers"),
    }
}

fn check_keys(t: &Table, allowed: &[&str], path: &str) -> Result<(), ConfigError> {
    for k in t.keys() {
        if !allowed.contains(&k.as_str()) {
            return schema(format!("{path}.{k}"), "unknown key");
        }
    }
    Ok(())
}

fn required<'a>(t: &'a Table, key: &str, path: &str) -> Result<&'a Value, ConfigError> {
    match t.get(key) {
        Some(v) => Ok(v),
        None => schema(format!("{path}.{key}"), "missing"),
    }
}

fn boxes(value: &Value, path: &str) -> Result<Vec<Interval>, ConfigError> {
    let mut out = Vec::new();
    for (d, iv) in array(value, path)?.iter().enumerate() {
        let p = format!("{path}[{d}]");
        let pair = array(iv, &p)?;
        if pair.len() != 2 {
            return schema(p, "an interval is [lo, hi]");
        }
        out.push(Interval {
            lo: number(&pair[0], &p)?,
            hi: number(&pair[1], &p)?,
        });
    }
    Ok(out)
}

fn gain(t: &Table, key: &str, path: &str) -> Result<LinearGain, ConfigError> {
    Ok(LinearGain::new(number(
        required(t, key, path)?,
        &format!("{path}.{key}"),
    )?))
}

fn cert(t: &Table, path: &str) -> Result<LyapunovCert, ConfigError> {
    check_keys(
        t,
        &[
            "lipschitz",
            "alpha_lower",
            "alpha_upper",
            "rho",
            "sigma_self",
            "sigma_in",
        ],
        path,
    )?;
    let mut sigma_in = BTreeMap::new();
    if let Some(v) = t.get("sigma_in") {
        let p = format!("{path}.sigma_in");
        for (k, g) in table(v, &p)? {
            let j = key_index(k, &p)?;
            sigma_in.insert(j, LinearGain::new(number(g, &format!("{p}.{k}"))?));
        }
    }
    Ok(LyapunovCert {
        lipschitz: number(
            required(t, "lipschitz", path)?,
            &format!("{path}.lipschitz"),
        )?,
        alpha_lower: gain(t, "alpha_lower", path)?,
        alpha_upper: gain(t, "alpha_upper", path)?,
        rho: gain(t, "rho", path)?,
        sigma_self: gain(t, "sigma_self", path)?,
        sigma_in,
    })
}

fn subsystem(value: &Value, pos: usize) -> Result<Subsystem, ConfigError> {
    let path = format!("subsystem[{pos}]");
    let t = table(value, &path)?;
    check_keys(
        t,
        &["id", "state_box", "input_box", "dynamics", "cert", "deps"],
        &path,
    )?;
    let id = index(required(t, "id", &path)?, &format!("{path}.id"))?;
    let state_box = boxes(
        required(t, "state_box", &path)?,
        &format!("{path}.state_box"),
    )?;
    let input_box = match t.get("input_box") {
        Some(v) => boxes(v, &format!("{path}.input_box"))?,
        None => Vec::new(),
    };
    let mut dynamics_text = Vec::new();
    let dp = format!("{path}.dynamics");
    for (d, e) in array(required(t, "dynamics", &path)?, &dp)?
        .iter()
        .enumerate()
    {
        match e {
            Value::String(s) => dynamics_text.push(s.clone()),
            _ => return schema(format!("{dp}[{d}]"), "expected an expression string"),
        }
    }
    let mut dynamics = Vec::new();
    for (index, text) in dynamics_text.iter().enumerate() {
        dynamics.push(
            parse_expression(text).map_err(|source| ConfigError::Expression {
                id,
                index,
                source,
            })?,
        );
    }
    let cp = format!("{path}.cert");
    let cert = cert(table(required(t, "cert", &path)?, &cp)?, &cp)?;
    let deps = match t.get("deps") {
        Some(v) => {
            let p = format!("{path}.deps");
            let dt = table(v, &p)?;
            check_keys(dt, &["states"], &p)?;
            let sp = format!("{p}.states");
            let mut states = Vec::new();
            for (n, s) in array(required(dt, "states", &p)?, &sp)?.iter().enumerate() {
                states.push(index(s, &format!("{sp}[{n}]"))?);
            }
            states.sort_unstable();
            states.dedup();
            Some(states)
        }
        None => None,
    };
    Ok(Subsystem {
        id,
        state_box,
        input_box,
        dynamics,
        dynamics_text,
        cert,
        deps,
    })
}

fn rational_list(value: &Value, path: &str) -> Result<Vec<BigRational>, ConfigError> {
    array(value, path)?
        .iter()
        .enumerate()
        .map(|(n, v)| number(v, &format!("{path}[{n}]")))
        .collect()
}

fn monolithic(value: &Value) -> Result<MonolithicSpec, ConfigError> {
    let t = table(value, "monolithic")?;
    check_keys(t, &["lambda", "cert"], "monolithic")?;
    let lambda = match t.get("lambda") {
        Some(v) => Some(rational_list(v, "monolithic.lambda")?),
        None => None,
    };
    let cert = match t.get("cert") {
        Some(v) => {
            let p = "monolithic.cert";
            let c = table(v, p)?;
            check_keys(
                c,
                &[
                    "lipschitz",
                    "alpha_lower",
                    "alpha_upper",
                    "rho",
                    "sigma_self",
                ],
                p,
            )?;
            let get = |k: &str| -> Result<BigRational, ConfigError> {
                number(required(c, k, p)?, &format!("{p}.{k}"))
            };
            Some(SuppliedCert {
                lipschitz: get("lipschitz")?,
                alpha_lower: get("alpha_lower")?,
                alpha_upper: get("alpha_upper")?,
                rho: get("rho")?,
                sigma_self: get("sigma_self")?,
            })
        }
        None => None,
    };
    Ok(MonolithicSpec { lambda, cert })
}

/// Parses and fully validates a network document.
pub fn load_network(document: &str) -> Result<NetworkSpec, ConfigError> {
    let root: Table = document
        .parse()
        .map_err(|e: toml::de::Error| ConfigError::Syntax(e.message().to_string()))?;
    load_table(&root)
}

pub fn load_table(root: &Table) -> Result<NetworkSpec, ConfigError> {
    check_keys(
        root,
        &[
            "network",
            "subsystem",
            "scc_overrides",
            "monolithic",
            "design",
        ],
        "",
    )?;
    let (name, description) = match root.get("network") {
        Some(v) => {
            let t = table(v, "network")?;
            check_keys(t, &["name", "description"], "network")?;
            let text = |k: &str| -> Result<String, ConfigError> {
                match t.get(k) {
                    None => Ok(String::new()),
                    Some(Value::String(s)) => Ok(s.clone()),
                    Some(_) => schema(format!("network.{k}"), "expected a string"),
                }
            };
            (text("name")?, text("description")?)
        }
        None => (String::new(), String::new()),
    };
    let subs = array(required(root, "subsystem", "")?, "subsystem")?;
    let mut subsystems = subs
        .iter()
        .enumerate()
        .map(|(n, v)| subsystem(v, n))
        .collect::<Result<Vec<_>, _>>()?;
    subsystems.sort_by_key(|s| s.id);

    let mut lambda_overrides = BTreeMap::new();
    if let Some(v) = root.get("scc_overrides") {
        let t = table(v, "scc_overrides")?;
        check_keys(t, &["lambda"], "scc_overrides")?;
        if let Some(l) = t.get("lambda") {
            let p = "scc_overrides.lambda";
            for (k, list) in table(l, p)? {
                let scc = key_index(k, p)?;
                lambda_overrides.insert(scc, rational_list(list, &format!("{p}.{k}"))?);
            }
        }
    }
    let monolithic = root.get("monolithic").map(monolithic).transpose()?;
    let mut post_extra = Vec::new();
    if let Some(v) = root.get("design") {
        let t = table(v, "design")?;
        check_keys(t, &["post_extra"], "design")?;
        if let Some(list) = t.get("post_extra") {
            let p = "design.post_extra";
            for (n, pair) in array(list, p)?.iter().enumerate() {
                let pp = format!("{p}[{n}]");
                let pair = array(pair, &pp)?;
                if pair.len() != 2 {
                    return schema(pp, "expected [k, l]");
                }
                post_extra.push((index(&pair[0], &pp)?, index(&pair[1], &pp)?));
            }
        }
    }

    let net = NetworkSpec {
        name,
        description,
        subsystems,
        lambda_overrides,
        monolithic,
        post_extra,
    };
    validate(&net)?;
    Ok(net)
}

/// Checks every structural invariant of a network description.
pub fn validate(net: &NetworkSpec) -> Result<(), ConfigError> {
    let n = net.subsystems.len();
    if n == 0 {
        return schema("subsystem", "a network needs at least one subsystem");
    }
    for (pos, s) in net.subsystems.iter().enumerate() {
        if s.id != pos + 1 {
            return invariant(
                s.id,
                "id",
                format!("ids must be exactly 1..{n} without gaps or repeats"),
            );
        }
    }
    for s in &net.subsystems {
        let id = s.id;
        if s.state_box.is_empty() {
            return invariant(id, "state_box", "at least one dimension required");
        }
        for (field, b) in [("state_box", &s.state_box), ("input_box", &s.input_box)] {
            for (d, iv) in b.iter().enumerate() {
                if iv.lo >= iv.hi {
                    return invariant(id, field, format!("interval {d} needs lo < hi"));
                }
            }
        }
        if s.dynamics.len() != s.state_box.len() {
            return invariant(
                id,
                "dynamics",
                format!(
                    "{} expressions for a {}-dimensional state",
                    s.dynamics.len(),
                    s.state_box.len()
                ),
            );
        }
        for e in &s.dynamics {
            for v in e.variables() {
                check_variable(net, s, &v)?;
            }
        }
        let c = &s.cert;
        if c.lipschitz.is_negative() {
            return invariant(id, "cert.lipschitz", "must be nonnegative");
        }
        for (field, g) in [
            ("cert.alpha_lower", &c.alpha_lower),
            ("cert.alpha_upper", &c.alpha_upper),
            ("cert.rho", &c.rho),
            ("cert.sigma_self", &c.sigma_self),
        ] {
            if g.slope.is_negative() {
                return invariant(id, field, "slopes are nonnegative");
            }
        }
        if !c.alpha_lower.slope.is_positive() {
            return invariant(id, "cert.alpha_lower", "slope must be positive");
        }
        if c.alpha_lower.slope > c.alpha_upper.slope {
            return invariant(
                id,
                "cert.alpha_upper",
                "alpha_lower slope exceeds alpha_upper slope",
            );
        }
        if !c.rho.slope.is_positive() || c.rho.slope > BigRational::from_integer(1.into()) {
            return invariant(id, "cert.rho", "slope must lie in (0, 1]");
        }
        for (j, g) in &c.sigma_in {
            if *j == id {
                return invariant(id, "cert.sigma_in", "no entry for the subsystem itself");
            }
            if *j > n {
                return invariant(
                    id,
                    "cert.sigma_in",
                    format!("references unknown subsystem {j}"),
                );
            }
            if g.slope.is_negative() {
                return invariant(id, "cert.sigma_in", format!("negative slope for {j}"));
            }
        }
        if let Some(deps) = &s.deps {
            for j in deps {
                if *j == id || *j > n {
                    return invariant(id, "deps.states", format!("invalid subsystem {j}"));
                }
            }
        }
    }
    if let Some(m) = &net.monolithic {
        if let Some(l) = &m.lambda {
            if l.len() != n || l.iter().any(|x| !x.is_positive()) {
                return schema("monolithic.lambda", format!("needs {n} positive entries"));
            }
        }
        if let Some(c) = &m.cert {
            if [&c.lipschitz, &c.alpha_upper, &c.sigma_self]
                .iter()
                .any(|x| x.is_negative())
                || !c.alpha_lower.is_positive()
                || !c.rho.is_positive()
            {
                return schema("monolithic.cert", "invalid slopes");
            }
        }
    }
    for (k, l) in &net.lambda_overrides {
        if l.is_empty() || l.iter().any(|x| !x.is_positive()) {
            return schema(
                format!("scc_overrides.lambda.{k}"),
                "entries must be positive",
            );
        }
    }
    Ok(())
}

fn check_variable(net: &NetworkSpec, owner: &Subsystem, v: &Var) -> Result<(), ConfigError> {
    let bad = |msg: String| invariant(owner.id, "dynamics", msg);
    let dim = match v.kind {
        VarKind::State => match net.subsystems.get(v.subsystem.wrapping_sub(1)) {
            Some(s) => s.state_box.len(),
            None => return bad(format!("`{v}` names no declared subsystem")),
        },
        VarKind::Input => {
            if v.subsystem != owner.id {
                return bad(format!("`{v}` is not an input of this subsystem"));
            }
            owner.input_box.len()
        }
    };
    match v.coord {
        None if dim == 1 => Ok(()),
        None => bad(format!("`{v}` needs a coordinate suffix (dimension {dim})")),
        Some(c) if c <= dim => Ok(()),
        Some(_) => bad(format!("`{v}` exceeds dimension {dim}")),
    }
}

impl LinearGain {
    pub fn is_absent(&self) -> bool {
        self.slope.is_zero()
    }
}
