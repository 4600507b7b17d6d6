use proptest::prelude::*;
use symnet::bundled;
use symnet::netspec::{load_network, load_table};
use toml::{Table, Value};

fn academic() -> Table {
    bundled::ACADEMIC_TOML.parse().unwrap()
}

fn sub(t: &mut Table, i: usize) -> &mut Table {
    t["subsystem"].as_array_mut().unwrap()[i]
        .as_table_mut()
        .unwrap()
}

fn cert(t: &mut Table, i: usize) -> &mut Table {
    sub(t, i)["cert"].as_table_mut().unwrap()
}

fn boxes(v: &[(f64, f64)]) -> Value {
    Value::Array(
        v.iter()
            .map(|&(a, b)| Value::Array(vec![a.into(), b.into()]))
            .collect(),
    )
}

/// One invariant-breaking edit to subsystem `i`.
fn corrupt(t: &mut Table, i: usize, kind: usize, x: f64) {
    let n = 6;
    let id = i as i64 + 1;
    match kind {
        0 => {
            sub(t, i).insert("id".into(), ((id % n) + 1).into());
        }
        1 => {
            sub(t, i).insert("id".into(), 0.into());
        }
        2 => {
            sub(t, i).insert("state_box".into(), boxes(&[(x, x)]));
        }
        3 => {
            sub(t, i).insert("state_box".into(), boxes(&[(x, x - 1.0)]));
        }
        4 => {
            sub(t, i).insert("input_box".into(), boxes(&[(x + 1.0, x)]));
        }
        5 => {
            sub(t, i).insert("state_box".into(), Value::Array(vec![]));
        }
        6 => {
            sub(t, i).insert(
                "dynamics".into(),
                Value::Array(vec!["x1".into(), "x1".into()]),
            );
        }
        7 => {
            sub(t, i).insert(
                "dynamics".into(),
                Value::Array(vec![format!("x{}", n + 1).into()]),
            );
        }
        8 => {
            sub(t, i).insert(
                "dynamics".into(),
                Value::Array(vec![format!("u{}", (id % n) + 1).into()]),
            );
        }
        9 => {
            sub(t, i).insert(
                "dynamics".into(),
                Value::Array(vec![format!("x{id}_2").into()]),
            );
        }
        10 => {
            sub(t, i).insert("dynamics".into(), Value::Array(vec!["x1 +".into()]));
        }
        11 => {
            cert(t, i).insert("lipschitz".into(), (-x - 0.1).into());
        }
        12 => {
            cert(t, i).insert("alpha_lower".into(), 0.into());
        }
        13 => {
            cert(t, i).insert("alpha_lower".into(), (-x - 0.1).into());
        }
        14 => {
            cert(t, i).insert("alpha_upper".into(), 0.5.into());
        }
        15 => {
            cert(t, i).insert("rho".into(), 0.into());
        }
        16 => {
            cert(t, i).insert("rho".into(), (1.0 + x + 0.1).into());
        }
        17 => {
            cert(t, i).insert("sigma_self".into(), (-x - 0.1).into());
        }
        18 => {
            let mut m = Table::new();
            m.insert(id.to_string(), 0.5.into());
            cert(t, i).insert("sigma_in".into(), Value::Table(m));
        }
        19 => {
            let mut m = Table::new();
            m.insert((n + 1).to_string(), 0.5.into());
            cert(t, i).insert("sigma_in".into(), Value::Table(m));
        }
        20 => {
            let mut m = Table::new();
            m.insert(((id % n) + 1).to_string(), (-x - 0.1).into());
            cert(t, i).insert("sigma_in".into(), Value::Table(m));
        }
        21 => {
            sub(t, i).insert("unknown_field".into(), 1.into());
        }
        22 => {
            sub(t, i).insert("state_box".into(), "[-1, 1]".into());
        }
        23 => {
            sub(t, i).remove("dynamics");
        }
        24 => {
            cert(t, i).remove("rho");
        }
        25 => {
            cert(t, i).insert("rho".into(), "half".into());
        }
        _ => unreachable!(),
    }
}

#[test]
fn bundled_networks_load() {
    for doc in [
        bundled::ACADEMIC_TOML,
        bundled::TOY_SINGLE_TOML,
        bundled::TOY_PAIR_TOML,
        bundled::TOY_PAIR_LOCAL_TOML,
        bundled::TOY_CHAIN_TOML,
    ] {
        load_network(doc).unwrap();
    }
    assert_eq!(load_table(&academic()).unwrap().subsystems.len(), 6);
}

#[test]
fn minimal_network_has_one_subsystem() {
    let doc = r#"
        [[subsystem]]
        id = 1
        state_box = [[-1, 1]]
        input_box = [[-1, 1]]
        dynamics = ["0.5*x1 + u1"]
        [subsystem.cert]
        lipschitz = 1
        alpha_lower = 1
        alpha_upper = 1
        rho = 0.5
        sigma_self = 1
    "#;
    assert_eq!(load_network(doc).unwrap().subsystems.len(), 1);
}

#[test]
fn empty_network_is_rejected() {
    assert!(load_network("subsystem = []").is_err());
    assert!(load_network("").is_err());
}

proptest! {
    #[test]
    fn single_field_corruptions_are_rejected(i in 0usize..6, kind in 0usize..26, x in 0.0f64..2.0) {
        let mut t = academic();
        corrupt(&mut t, i, kind, x);
        prop_assert!(load_table(&t).is_err(), "subsystem {} kind {} accepted", i + 1, kind);
    }
}

#[test]
fn every_corruption_kind_is_rejected_somewhere() {
    for i in 0..6 {
        for kind in 0..26 {
            let mut t = academic();
            corrupt(&mut t, i, kind, 0.5);
            assert!(load_table(&t).is_err(), "subsystem {} kind {kind}", i + 1);
        }
    }
}
