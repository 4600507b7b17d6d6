use num::{BigRational, BigUint, Zero};
use serde::Serialize;

use super::{label_space, lattice_of_box, AbstractionError, Convention};
use crate::netspec::NetworkSpec;
use crate::rational::Count;

#[derive(Debug, Clone, PartialEq)]
pub struct SubsystemCounts {
    pub id: usize,
    pub states: BigUint,
    pub labels: BigUint,
    /// `states^2 * labels`.
    pub scomplex: BigUint,
    /// `states * labels`.
    pub tcomplex: BigUint,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComplexityReport {
    pub convention: Convention,
    pub subsystems: Vec<SubsystemCounts>,
    pub total_scomplex: BigUint,
    pub total_tcomplex: BigUint,
}

pub fn complexity_counts(
    net: &NetworkSpec,
    eta: &[BigRational],
    convention: Convention,
) -> Result<ComplexityReport, AbstractionError> {
    let mut subsystems = Vec::with_capacity(net.len());
    for s in &net.subsystems {
        let states = lattice_of_box(&s.state_box, &eta[s.id - 1])?.cardinality();
        let labels = label_space(net, s.id, eta, convention)?.cardinality();
        let tcomplex = &states * &labels;
        subsystems.push(SubsystemCounts {
            id: s.id,
            scomplex: &states * &tcomplex,
            tcomplex,
            states,
            labels,
        });
    }
    let total_scomplex = subsystems
        .iter()
        .fold(BigUint::zero(), |a, c| a + &c.scomplex);
    let total_tcomplex = subsystems
        .iter()
        .fold(BigUint::zero(), |a, c| a + &c.tcomplex);
    Ok(ComplexityReport {
        convention,
        subsystems,
        total_scomplex,
        total_tcomplex,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct MonolithicCounts {
    pub states: BigUint,
    pub inputs: BigUint,
    pub scomplex: BigUint,
    pub tcomplex: BigUint,
}

/// Whole-network model on one lattice: every state and every declared input.
pub fn monolithic_counts(
    net: &NetworkSpec,
    eta: &BigRational,
) -> Result<MonolithicCounts, AbstractionError> {
    let mut states = BigUint::from(1u32);
    let mut inputs = BigUint::from(1u32);
    for s in &net.subsystems {
        states *= lattice_of_box(&s.state_box, eta)?.cardinality();
        inputs *= lattice_of_box(&s.input_box, eta)?.cardinality();
    }
    let tcomplex = &states * &inputs;
    Ok(MonolithicCounts {
        scomplex: &states * &tcomplex,
        tcomplex,
        states,
        inputs,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct SubsystemCountsReport {
    pub id: usize,
    pub states: Count,
    pub labels: Count,
    pub scomplex: Count,
    pub tcomplex: Count,
}

#[derive(Debug, Clone, Serialize)]
pub struct ComplexityJson {
    pub convention: Convention,
    pub subsystems: Vec<SubsystemCountsReport>,
    pub total_scomplex: Count,
    pub total_tcomplex: Count,
}

impl From<&ComplexityReport> for ComplexityJson {
    fn from(r: &ComplexityReport) -> Self {
        ComplexityJson {
            convention: r.convention,
            subsystems: r
                .subsystems
                .iter()
                .map(|c| SubsystemCountsReport {
                    id: c.id,
                    states: Count::from(&c.states),
                    labels: Count::from(&c.labels),
                    scomplex: Count::from(&c.scomplex),
                    tcomplex: Count::from(&c.tcomplex),
                })
                .collect(),
            total_scomplex: Count::from(&r.total_scomplex),
            total_tcomplex: Count::from(&r.total_tcomplex),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct MonolithicJson {
    pub states: Count,
    pub inputs: Count,
    pub scomplex: Count,
    pub tcomplex: Count,
}

impl From<&MonolithicCounts> for MonolithicJson {
    fn from(m: &MonolithicCounts) -> Self {
        MonolithicJson {
            states: Count::from(&m.states),
            inputs: Count::from(&m.inputs),
            scomplex: Count::from(&m.scomplex),
            tcomplex: Count::from(&m.tcomplex),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::abstraction::{build_symbolic_model, Mode};
    use crate::bundled;
    use crate::rational::{log10_biguint, parse_rational, ratio, sci_biguint};
    use num::BigUint;

    fn q(s: &str) -> BigRational {
        parse_rational(s).unwrap()
    }

    fn academic_eta() -> Vec<BigRational> {
        [
            "3.96e-6", "2.38e-5", "2.38e-5", "9.91e-8", "9.91e-8", "1.66e-3",
        ]
        .iter()
        .map(|s| q(s))
        .collect()
    }

    #[test]
    fn academic_restricted_counts() {
        let r = complexity_counts(
            &bundled::academic(),
            &academic_eta(),
            Convention::Restricted,
        )
        .unwrap();
        let states: [u64; 6] = [505_051, 84_033, 84_033, 20_181_635, 20_181_635, 1205];
        for (c, n) in r.subsystems.iter().zip(&states) {
            assert_eq!(c.states, BigUint::from(*n));
        }
        // independent products of axis counts
        let [x1, x2, x3, x4, x5, x6] = states.map(BigUint::from);
        let labels = [
            x1.clone(),
            &x1 * &x3,
            &x2 * &x5 * &x3,
            x5.clone(),
            &x4 * &x5,
            x5.clone(),
        ];
        let xs = [&x1, &x2, &x3, &x4, &x5, &x6];
        let mut s_total = BigUint::zero();
        let mut t_total = BigUint::zero();
        for ((c, lab), x) in r.subsystems.iter().zip(&labels).zip(xs) {
            assert_eq!(&c.labels, lab, "subsystem {}", c.id);
            s_total += x.clone() * x * lab;
            t_total += x * lab;
        }
        assert_eq!(r.total_scomplex, s_total);
        assert_eq!(r.total_tcomplex, t_total);
        assert_eq!(sci_biguint(&r.total_scomplex, 3), "1.66e29");
        assert_eq!(sci_biguint(&r.total_tcomplex, 3), "2.01e22");
    }

    #[test]
    fn full_convention_is_larger() {
        let net = bundled::academic();
        let r = complexity_counts(&net, &academic_eta(), Convention::Restricted).unwrap();
        let f = complexity_counts(&net, &academic_eta(), Convention::Full).unwrap();
        assert!(f.total_tcomplex > r.total_tcomplex);
        for (a, b) in r.subsystems.iter().zip(&f.subsystems) {
            assert!(b.labels >= a.labels);
        }
    }

    #[test]
    fn monolithic_counts_at_one_micro() {
        let m = monolithic_counts(&bundled::academic(), &q("1e-6")).unwrap();
        let axis = BigUint::from(2_000_001u32);
        assert_eq!(m.scomplex, axis.pow(18));
        assert_eq!(m.tcomplex, axis.pow(12));
        assert_eq!(sci_biguint(&m.scomplex, 3), "2.62e113");
        let t = 10f64.powf(log10_biguint(&m.tcomplex));
        assert!((t / 4.11e75 - 1.0).abs() < 0.01);
    }

    #[test]
    fn toy_counts_match_the_table() {
        let net = bundled::toy_single();
        let r = complexity_counts(&net, &[ratio(1, 4)], Convention::Restricted).unwrap();
        assert_eq!(r.total_scomplex, BigUint::from(729u32));
        assert_eq!(r.total_tcomplex, BigUint::from(81u32));
        let m = build_symbolic_model(
            &net,
            1,
            &[ratio(1, 4)],
            Convention::Restricted,
            Mode::Explicit { cap: 1000 },
        )
        .unwrap();
        let rows = m.table().unwrap().len() as u64;
        assert_eq!(BigUint::from(rows), r.total_tcomplex);
        assert_eq!(
            BigUint::from(rows * m.state_count().unwrap()),
            r.total_scomplex
        );

        let pair = bundled::toy_pair();
        let eta = [ratio(1, 20), ratio(1, 40)];
        for conv in [Convention::Restricted, Convention::Full] {
            let r = complexity_counts(&pair, &eta, conv).unwrap();
            for c in &r.subsystems {
                let m = build_symbolic_model(
                    &pair,
                    c.id,
                    &eta,
                    conv,
                    Mode::Explicit { cap: 1_000_000 },
                )
                .unwrap();
                assert_eq!(BigUint::from(m.table().unwrap().len() as u64), c.tcomplex);
            }
        }
    }
}
