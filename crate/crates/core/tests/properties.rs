use std::collections::BTreeMap;

use proptest::prelude::*;
use rla_core::cvr::{
    bayesian_validity, consistency_class, conservative_validity, contradictory, BayesianCvr, BayesianRow,
    ConservativeCvr, ConservativeRow, ConsistencyClass, Validity,
};
use rla_core::discrepancy::{cvr_discrepancy_bayesian, cvr_discrepancy_conservative};
use rla_core::election::{
    Ballot, CandidateSet, Election, Interpretation, InterpretationDistribution, InterpretationSet,
};

const SLACK: f64 = 1e-9;

fn candidates(n: usize) -> CandidateSet {
    CandidateSet::new(["A", "B", "C"].into_iter().take(n)).unwrap()
}

fn distribution(entries: &[(u64, u32)]) -> InterpretationDistribution {
    let mut merged = BTreeMap::new();
    for &(mask, w) in entries {
        *merged.entry(mask).or_insert(0u32) += w;
    }
    let total: u32 = merged.values().sum();
    InterpretationDistribution::new(
        merged.into_iter().map(|(m, w)| (Interpretation::from_mask(m), f64::from(w) / f64::from(total))),
    )
    .unwrap()
}

fn set(masks: &[u64]) -> InterpretationSet {
    InterpretationSet::new(masks.iter().map(|&m| Interpretation::from_mask(m))).unwrap()
}

fn dist_entries(n: usize) -> impl Strategy<Value = Vec<(u64, u32)>> {
    prop::collection::vec((0u64..(1 << n), 1u32..=4), 1..=3)
}

fn mask_sets(n: usize) -> impl Strategy<Value = Vec<u64>> {
    prop::collection::vec(0u64..(1 << n), 1..=3)
}

/// Width, per-ballot truth, and per-row CVR replacements (None keeps the
/// truth; the flag renames the row to an id no ballot carries).
fn bayesian_case() -> impl Strategy<Value = (usize, Vec<Vec<(u64, u32)>>, Vec<(Option<Vec<(u64, u32)>>, bool)>)> {
    (2usize..=3).prop_flat_map(|n| {
        (1usize..=8).prop_flat_map(move |s| {
            (
                Just(n),
                prop::collection::vec(dist_entries(n), s),
                prop::collection::vec((prop::option::of(dist_entries(n)), prop::bool::weighted(0.15)), s),
            )
        })
    })
}

/// Mostly single-interpretation ballots, so that a conservative winner
/// usually exists; CVR edits lean toward one candidate so that they often
/// declare someone else.
fn conservative_case() -> impl Strategy<Value = (usize, Vec<Vec<u64>>, Vec<(Option<Vec<u64>>, bool)>)> {
    (2usize..=3).prop_flat_map(|n| {
        let ballot = prop_oneof![
            3 => (0..n).prop_map(|c| vec![1u64 << c]),
            1 => mask_sets(n),
        ];
        let edit = prop_oneof![
            2 => Just(None),
            2 => Just(Some(vec![1u64])),
            1 => mask_sets(n).prop_map(Some),
        ];
        (1usize..=8).prop_flat_map(move |s| {
            (
                Just(n),
                prop::collection::vec(ballot.clone(), s),
                prop::collection::vec((edit.clone(), prop::bool::weighted(0.15)), s),
            )
        })
    })
}

fn row_id(i: usize, renamed: bool) -> String {
    if renamed {
        format!("x{i}")
    } else {
        i.to_string()
    }
}

/// Every combination of one interpretation per ballot.
fn realizations(election: &Election) -> Vec<Vec<Interpretation>> {
    let mut out = vec![Vec::new()];
    for b in election.ballots() {
        out = out
            .into_iter()
            .flat_map(|prefix| {
                b.possible_interpretations().iter().map(move |i| {
                    let mut p = prefix.clone();
                    p.push(i);
                    p
                })
            })
            .collect();
    }
    out
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 400, max_global_rejects: 100_000, ..ProptestConfig::default() })]

    #[test]
    fn bayesian_discrepancy_bounds_margins((n, truth, edits) in bayesian_case()) {
        let cs = candidates(n);
        let ballots: Vec<_> = truth.iter().enumerate()
            .map(|(i, d)| Ballot::bayesian(i.to_string(), distribution(d)))
            .collect();
        let election = Election::new(cs.clone(), ballots).unwrap();
        let rows: Vec<_> = edits.iter().enumerate().map(|(i, (edit, renamed))| BayesianRow {
            id: row_id(i, *renamed),
            prediction: edit.as_ref().map_or_else(|| distribution(&truth[i]), |d| distribution(d)),
        }).collect();
        let cvr = BayesianCvr::new(cs, rows).unwrap();
        let declared = cvr.declared_outcome().unwrap();
        prop_assume!(bayesian_validity(&cvr, &election).unwrap() == Validity::Invalid);
        let mu_e = election.bayesian_outcome().unwrap().margin;
        let d = cvr_discrepancy_bayesian(&cvr, &election).unwrap();
        let s = election.size() as f64;
        prop_assert!(d >= (declared.margin + mu_e) * s - SLACK, "D={d} μcvr={} μE={mu_e}", declared.margin);
    }

    #[test]
    fn conservative_discrepancy_bounds_margins((n, truth, edits) in conservative_case()) {
        let cs = candidates(n);
        let ballots: Vec<_> = truth.iter().enumerate()
            .map(|(i, m)| Ballot::conservative(i.to_string(), set(m)))
            .collect();
        let election = Election::new(cs.clone(), ballots).unwrap();
        let rows: Vec<_> = edits.iter().enumerate().map(|(i, (edit, renamed))| ConservativeRow {
            id: row_id(i, *renamed),
            interpretations: set(edit.as_ref().unwrap_or(&truth[i])),
        }).collect();
        let cvr = ConservativeCvr::new(cs, rows).unwrap();
        prop_assume!(conservative_validity(&cvr, &election).unwrap() == Validity::Invalid);
        let mu_e = election.conservative_outcome().unwrap().margin;
        let mu_cvr = cvr.declared_outcome().margin;
        let d = cvr_discrepancy_conservative(&cvr, &election).unwrap();
        let s = election.size() as f64;
        prop_assert!(d >= (mu_cvr + mu_e) * s - SLACK, "D+={d} μcvr={mu_cvr} μE={mu_e}");
    }

    /// A conservative winner wins every realization of the ballots, and a
    /// conservative loser loses every one.
    #[test]
    fn conservative_outcome_holds_for_every_realization((n, truth, _) in conservative_case()) {
        let cs = candidates(n);
        let ballots: Vec<_> = truth.iter().enumerate()
            .map(|(i, m)| Ballot::conservative(i.to_string(), set(m)))
            .collect();
        let election = Election::new(cs.clone(), ballots).unwrap();
        let outcome = election.conservative_outcome().unwrap();
        for real in realizations(&election) {
            let tally: Vec<u32> = cs.ids()
                .map(|c| real.iter().map(|i| u32::from(i.vote(c))).sum())
                .collect();
            if let Some(w) = outcome.winner {
                for a in cs.ids().filter(|&a| a != w) {
                    prop_assert!(tally[w.0] > tally[a.0]);
                }
            }
            for l in &outcome.losers {
                prop_assert!(cs.ids().any(|a| tally[a.0] > tally[l.0]));
            }
        }
    }

    #[test]
    fn canonical_cvr_is_consistent_and_agrees((n, truth, edits) in conservative_case()) {
        let cs = candidates(n);
        let ballots: Vec<_> = truth.iter().enumerate()
            .map(|(i, m)| Ballot::conservative(i.to_string(), set(m)))
            .collect();
        let election = Election::new(cs.clone(), ballots).unwrap();
        let canon = ConservativeCvr::canonical(&election).unwrap();
        prop_assert_eq!(consistency_class(&canon, &election).unwrap(), ConsistencyClass::Canonical);
        prop_assert_eq!(canon.declared_outcome(), election.conservative_outcome().unwrap());

        // widening rows keeps consistency
        let wider: Vec<_> = canon.rows().iter().zip(&edits).map(|(r, (edit, _))| ConservativeRow {
            id: r.id.clone(),
            interpretations: edit.as_ref().map_or(r.interpretations.clone(), |m| r.interpretations.union(&set(m))),
        }).collect();
        let wider = ConservativeCvr::new(cs.clone(), wider).unwrap();
        prop_assert!(matches!(
            consistency_class(&wider, &election).unwrap(),
            ConsistencyClass::Canonical | ConsistencyClass::Consistent
        ));

        // contradiction is symmetric, and distinct declared winners contradict
        let other: Vec<_> = edits.iter().enumerate().map(|(i, (edit, _))| ConservativeRow {
            id: i.to_string(),
            interpretations: set(edit.as_ref().unwrap_or(&truth[i])),
        }).collect();
        let other = ConservativeCvr::new(cs, other).unwrap();
        let c = contradictory(&canon, &other).unwrap();
        prop_assert_eq!(c, contradictory(&other, &canon).unwrap());
        if let (Some(a), Some(b)) = (canon.declared_outcome().winner, other.declared_outcome().winner) {
            if a != b {
                prop_assert!(c);
            }
        }
    }

    #[test]
    fn copying_truth_declares_the_true_outcome((n, truth, _) in bayesian_case()) {
        let cs = candidates(n);
        let ballots: Vec<_> = truth.iter().enumerate()
            .map(|(i, d)| Ballot::bayesian(i.to_string(), distribution(d)))
            .collect();
        let election = Election::new(cs, ballots).unwrap();
        let cvr = BayesianCvr::from_election(&election).unwrap();
        prop_assert_eq!(cvr.declared_outcome().unwrap(), election.bayesian_outcome().unwrap());
        let v = bayesian_validity(&cvr, &election).unwrap();
        prop_assert!(v != Validity::Invalid);
    }

    /// Doubling every ballot leaves margins unchanged.
    #[test]
    fn margins_are_scale_free((n, truth, _) in bayesian_case()) {
        let cs = candidates(n);
        let once: Vec<_> = truth.iter().enumerate()
            .map(|(i, d)| Ballot::bayesian(i.to_string(), distribution(d)))
            .collect();
        let twice: Vec<_> = once.iter().cloned()
            .chain(once.iter().map(|b| Ballot::bayesian(format!("{}'", b.id), b.distribution().unwrap().clone())))
            .collect();
        let e1 = Election::new(cs.clone(), once).unwrap();
        let e2 = Election::new(cs.clone(), twice).unwrap();
        let (o1, o2) = (e1.bayesian_outcome().unwrap(), e2.bayesian_outcome().unwrap());
        prop_assert_eq!(o1.winner, o2.winner);
        prop_assert!((o1.margin - o2.margin).abs() < SLACK);
        for a in cs.ids() {
            for b in cs.ids() {
                let m1 = e1.bayesian_margin(a, b).unwrap();
                prop_assert!((m1 - e2.bayesian_margin(a, b).unwrap()).abs() < SLACK);
                prop_assert!((m1 + e1.bayesian_margin(b, a).unwrap()).abs() < SLACK);
            }
        }
    }
}
