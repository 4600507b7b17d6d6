//! Randomized checks between continuous points and their quantized partners.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::abstraction::{coordinate, quantize_index, AbstractionError};
use crate::design::QuantizationPlan;
use crate::gains::ComponentGains;
use crate::graph::SccPartition;
use crate::netspec::{Interval, NetworkSpec};
use crate::rational::to_f64;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpotFailure {
    pub component: usize,
    pub x: Vec<Vec<f64>>,
    pub u: Vec<Vec<f64>>,
    pub level: f64,
    pub bound: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpotReport {
    pub samples: u64,
    /// Samples whose continuous successor left the state boxes.
    pub skipped: u64,
    pub canonical: u64,
    pub fallback: u64,
    /// Samples where every candidate abstract successor was out of domain.
    pub blocked: u64,
    pub failures: u64,
    /// Largest observed `V / bound` over related successor pairs.
    pub worst_ratio: f64,
    pub first_failure: Option<SpotFailure>,
    pub verdict: bool,
}

fn index_range(eta: f64, iv: &Interval) -> (i64, i64) {
    (
        (to_f64(&iv.lo) / eta).ceil() as i64,
        (to_f64(&iv.hi) / eta).floor() as i64,
    )
}

fn clamp_index(x: f64, eta: f64, iv: &Interval) -> i64 {
    let (lo, hi) = index_range(eta, iv);
    quantize_index(x, eta).clamp(lo, hi)
}

fn sample_box(rng: &mut ChaCha8Rng, bx: &[Interval]) -> Vec<f64> {
    bx.iter()
        .map(|iv| rng.gen_range(to_f64(&iv.lo)..=to_f64(&iv.hi)))
        .collect()
}

struct Levels<'a> {
    gains: &'a [ComponentGains],
    partition: &'a SccPartition,
    bounds: Vec<f64>,
}

impl Levels<'_> {
    /// `(component, level, bound)` of the worst component for a pair of points.
    fn worst(&self, a: &[Vec<f64>], b: &[Vec<f64>]) -> (usize, f64, f64) {
        let mut worst = (0, 0.0, 1.0);
        for (k, g) in self.gains.iter().enumerate() {
            let level: f64 = self
                .partition
                .members(k + 1)
                .iter()
                .zip(&g.cert.lambda.entries)
                .map(|(&i, l)| {
                    let d = a[i - 1]
                        .iter()
                        .zip(&b[i - 1])
                        .map(|(p, q)| (p - q).abs())
                        .fold(0.0, f64::max);
                    to_f64(l) * d
                })
                .sum();
            if level / self.bounds[k] > worst.1 / worst.2 {
                worst = (k + 1, level, self.bounds[k]);
            }
        }
        worst
    }
}

/// Pairs random points with their quantizations and checks one step of the
/// component-wise Lyapunov relation, using the quantized input first and
/// its lattice neighbours as fallback.
pub fn spot_check(
    net: &NetworkSpec,
    partition: &SccPartition,
    gains: &[ComponentGains],
    plan: &QuantizationPlan,
    samples: u64,
    seed: u64,
) -> Result<SpotReport, AbstractionError> {
    let eta: Vec<f64> = plan.eta_subsystem.iter().map(to_f64).collect();
    let levels = Levels {
        gains,
        partition,
        bounds: gains
            .iter()
            .zip(&plan.components)
            .map(|(g, c)| to_f64(&g.cert.alpha_lower.apply(&c.epsilon)) * (1.0 + 1e-12))
            .collect(),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = SpotReport {
        samples,
        skipped: 0,
        canonical: 0,
        fallback: 0,
        blocked: 0,
        failures: 0,
        worst_ratio: 0.0,
        first_failure: None,
        verdict: true,
    };
    let used: Vec<Vec<usize>> = net.subsystems.iter().map(|s| s.used_inputs()).collect();
    let step = |x: &[Vec<f64>], u: &[Vec<f64>]| -> Result<Vec<Vec<f64>>, AbstractionError> {
        net.subsystems
            .iter()
            .map(|s| {
                s.eval(|j, d| x[j - 1][d], &u[s.id - 1])
                    .map_err(|source| AbstractionError::Eval { id: s.id, source })
            })
            .collect()
    };
    let in_boxes = |x: &[Vec<f64>]| {
        net.subsystems.iter().all(|s| {
            s.state_box
                .iter()
                .zip(&x[s.id - 1])
                .all(|(iv, &v)| iv.contains_f64(v))
        })
    };
    let quantize_state = |x: &[Vec<f64>]| -> Vec<Vec<f64>> {
        net.subsystems
            .iter()
            .map(|s| {
                let e = eta[s.id - 1];
                s.state_box
                    .iter()
                    .zip(&x[s.id - 1])
                    .map(|(iv, &v)| coordinate(clamp_index(v, e, iv), e))
                    .collect()
            })
            .collect()
    };

    let quantize_successor = |x: &[Vec<f64>]| -> Option<Vec<Vec<f64>>> {
        net.subsystems
            .iter()
            .map(|s| {
                let e = eta[s.id - 1];
                s.state_box
                    .iter()
                    .zip(&x[s.id - 1])
                    .map(|(iv, &v)| {
                        let i = quantize_index(v, e);
                        (i == clamp_index(v, e, iv)).then(|| coordinate(i, e))
                    })
                    .collect()
            })
            .collect()
    };

    for _ in 0..samples {
        let x: Vec<Vec<f64>> = net
            .subsystems
            .iter()
            .map(|s| sample_box(&mut rng, &s.state_box))
            .collect();
        let u: Vec<Vec<f64>> = net
            .subsystems
            .iter()
            .map(|s| sample_box(&mut rng, &s.input_box))
            .collect();
        let xq = quantize_state(&x);
        let next = step(&x, &u)?;
        if !in_boxes(&next) {
            report.skipped += 1;
            continue;
        }
        // canonical input indices, then all offsets in {-1, 0, 1} per used coordinate
        let base: Vec<Vec<i64>> = net
            .subsystems
            .iter()
            .map(|s| {
                let e = eta[s.id - 1];
                used[s.id - 1]
                    .iter()
                    .map(|&c| clamp_index(u[s.id - 1][c], e, &s.input_box[c]))
                    .collect()
            })
            .collect();
        let slots: Vec<(usize, usize)> = used
            .iter()
            .enumerate()
            .flat_map(|(i, cs)| (0..cs.len()).map(move |k| (i, k)))
            .collect();
        let combos = 3u64.pow(slots.len() as u32);
        let mut best: Option<(usize, f64, f64)> = None;
        let mut matched = None;
        for c in 0..combos {
            let mut idx = base.clone();
            let mut code = c;
            let mut valid = true;
            for &(i, k) in &slots {
                let off = [0i64, -1, 1][(code % 3) as usize];
                code /= 3;
                idx[i][k] += off;
                let (lo, hi) = index_range(eta[i], &net.subsystems[i].input_box[used[i][k]]);
                valid &= (lo..=hi).contains(&idx[i][k]);
            }
            if !valid {
                continue;
            }
            let uq: Vec<Vec<f64>> = net
                .subsystems
                .iter()
                .map(|s| {
                    let mut v = vec![0.0; s.input_dim()];
                    for (k, &c) in used[s.id - 1].iter().enumerate() {
                        v[c] = coordinate(idx[s.id - 1][k], eta[s.id - 1]);
                    }
                    v
                })
                .collect();
            let fq = step(&xq, &uq)?;
            let Some(nq) = quantize_successor(&fq) else {
                continue;
            };
            let w = levels.worst(&next, &nq);
            if best.map_or(true, |b| w.1 / w.2 < b.1 / b.2) {
                best = Some(w);
            }
            if w.1 <= w.2 {
                matched = Some(c == 0);
                break;
            }
        }
        if let Some(b) = best {
            report.worst_ratio = report.worst_ratio.max(b.1 / b.2);
        }
        match matched {
            Some(true) => report.canonical += 1,
            Some(false) => report.fallback += 1,
            None if best.is_none() => report.blocked += 1,
            None => {
                report.failures += 1;
                report.verdict = false;
                if report.first_failure.is_none() {
                    let (component, level, bound) = best.unwrap();
                    report.first_failure = Some(SpotFailure {
                        component,
                        x,
                        u,
                        level,
                        bound,
                    });
                }
            }
        }
    }
    Ok(report)
}
