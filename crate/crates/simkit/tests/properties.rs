use std::collections::BTreeMap;

use rla_core::audit::run_bayesian_audit;
use rla_core::environment::{make_environment, EnvKind};
use rla_core::seeds::{rng, Purpose};
use rla_core::stattest::KaplanMarkovConfig;
use rla_simkit::generate::{gen_election_and_cvrs, Fidelity};
use rla_simkit::model::{ApproachKind, DiscrepancyStream, ErrorModel};
use rla_simkit::table::{run_cell, trial};

/// Exact law of one stream draw, written out per approach.
fn law(m: &ErrorModel, approach: ApproachKind) -> BTreeMap<i64, f64> {
    let (mr, pc, pa) = (m.marginal_rate, m.p_cvr, m.p_audit);
    let mut p: Vec<(f64, f64)> = vec![(1.0, m.o1), (-1.0, m.u1), (2.0, m.o2), (-2.0, m.u2)];
    match approach {
        ApproachKind::Baseline => {
            p.push((1.0, mr * pc * (1.0 - pa)));
            p.push((-1.0, mr * (1.0 - pc) * pa));
        }
        ApproachKind::Bayesian => {
            p.push((pc - 1.0, mr * pa));
            p.push((pc, mr * (1.0 - pa)));
        }
        ApproachKind::Conservative => p.push((-1.0, mr * pa)),
    }
    let mut out = BTreeMap::new();
    for (v, q) in p {
        *out.entry(key(v)).or_insert(0.0) += q;
    }
    let rest: f64 = 1.0 - out.values().sum::<f64>();
    *out.entry(0).or_insert(0.0) += rest;
    out
}

fn key(v: f64) -> i64 {
    (v * 1000.0).round() as i64
}

#[test]
fn stream_frequencies_follow_the_model() {
    let mut m = ErrorModel::published(0.01, 0.5).with_probabilities(0.3, 0.6);
    // larger rates so every category is well populated
    m.marginal_rate = 0.05;
    m.o2 = 0.002;
    m.u2 = 0.002;
    let n = 1_000_000;
    for approach in ApproachKind::ALL {
        let expected = law(&m, approach);
        let mut counts: BTreeMap<i64, u64> = BTreeMap::new();
        let stream = DiscrepancyStream::new(m, approach, rng(17, 0, Purpose::Stream)).unwrap();
        for v in stream.take(n) {
            *counts.entry(key(v)).or_insert(0) += 1;
        }
        for k in counts.keys() {
            assert!(expected.contains_key(k), "{approach}: unexpected value {k}");
        }
        for (k, &p) in &expected {
            let freq = counts.get(k).copied().unwrap_or(0) as f64 / n as f64;
            let se = (p * (1.0 - p) / n as f64).sqrt();
            assert!((freq - p).abs() <= 4.0 * se, "{approach}: value {k} freq {freq} vs {p}");
        }
    }
}

/// Kolmogorov-Smirnov distance between two samples.
fn ks(a: &mut [u64], b: &mut [u64]) -> f64 {
    a.sort_unstable();
    b.sort_unstable();
    let (mut i, mut j, mut d) = (0, 0, 0.0_f64);
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] == x {
            i += 1;
        }
        while j < b.len() && b[j] == x {
            j += 1;
        }
        d = d.max((i as f64 / a.len() as f64 - j as f64 / b.len() as f64).abs());
    }
    d
}

#[test]
fn full_audits_match_the_stream_model() {
    let mut model = ErrorModel::published(0.01, 0.5);
    model.size = 10_000;
    let config = KaplanMarkovConfig::default();
    let n = 2000;
    let case = gen_election_and_cvrs(&model, ApproachKind::Bayesian, &Fidelity::Model, 3).unwrap();
    let cvr = case.cvr.into_bayesian().unwrap();
    let mut game: Vec<u64> = (0..n)
        .map(|i| {
            let mut env = make_environment(&EnvKind::Honest, &case.election).unwrap();
            run_bayesian_audit(&case.election, &cvr, env.as_mut(), config, 1000 + i).unwrap().draws
        })
        .collect();
    let mut stream: Vec<u64> = (0..n).map(|i| trial(&model, ApproachKind::Bayesian, &config, 9, i).unwrap().0).collect();
    let d = ks(&mut game, &mut stream);
    // two-sample critical value at the .01 level
    let critical = 1.628 * (2.0 / n as f64).sqrt();
    assert!(d < critical, "KS distance {d} vs {critical}");
}

#[test]
fn mean_draws_fall_as_the_margin_grows() {
    let config = KaplanMarkovConfig::default();
    for approach in ApproachKind::ALL {
        let means: Vec<f64> = [0.01, 0.015, 0.02, 0.03, 0.05]
            .iter()
            .map(|&mu| run_cell(&ErrorModel::published(mu, 0.5), approach, &config, 1000, 21).unwrap().mean)
            .collect();
        assert!(means.windows(2).all(|w| w[1] < w[0]), "{approach}: {means:?}");
    }
}
