//! Random small elections and perturbed CVRs for checking that an invalid
//! CVR's total discrepancy is at least `(μ_cvr + μ_E)·S`.

use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rla_core::cvr::{bayesian_validity, conservative_validity, BayesianCvr, BayesianRow, ConservativeCvr, ConservativeRow, Validity};
use rla_core::discrepancy::{cvr_discrepancy_bayesian, cvr_discrepancy_conservative};
use rla_core::election::{Ballot, CandidateSet, Election, Interpretation, InterpretationDistribution, InterpretationSet};

use crate::error::Result;

pub const MAX_SIZE: usize = 8;
pub const MAX_CANDIDATES: usize = 3;
pub const SLACK: f64 = 1e-9;

/// Both sides of the inequality for one invalid CVR.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LemmaCheck {
    pub discrepancy: f64,
    pub bound: f64,
}

impl LemmaCheck {
    pub fn holds(&self) -> bool {
        self.discrepancy >= self.bound - SLACK
    }
}

fn candidates(n: usize) -> CandidateSet {
    CandidateSet::new(["A", "B", "C"].into_iter().take(n)).expect("static names")
}

/// Readings bias toward single votes so contests are decisive often enough.
fn reading(rng: &mut ChaCha8Rng, n: usize) -> Interpretation {
    if rng.random_bool(0.75) {
        Interpretation::vote_for(rla_core::election::CandidateId(rng.random_range(0..n)))
    } else {
        Interpretation::from_mask(rng.random_range(0..1u64 << n))
    }
}

/// Weights are small integers so probabilities are short exact ratios.
fn distribution(rng: &mut ChaCha8Rng, n: usize) -> InterpretationDistribution {
    let k = rng.random_range(1..=3);
    let mut entries: Vec<(Interpretation, u32)> = Vec::new();
    for _ in 0..k {
        let i = reading(rng, n);
        let w = rng.random_range(1..=4);
        match entries.iter_mut().find(|(j, _)| *j == i) {
            Some(e) => e.1 += w,
            None => entries.push((i, w)),
        }
    }
    let total: u32 = entries.iter().map(|e| e.1).sum();
    InterpretationDistribution::new(entries.into_iter().map(|(i, w)| (i, f64::from(w) / f64::from(total))))
        .expect("normalized weights")
}

fn interpretation_set(rng: &mut ChaCha8Rng, n: usize) -> InterpretationSet {
    let k = if rng.random_bool(0.6) { 1 } else { rng.random_range(2..=3) };
    InterpretationSet::new((0..k).map(|_| reading(rng, n))).expect("non-empty")
}

/// Ballot ids, occasionally repeating the previous ballot's id.
fn ballot_ids(rng: &mut ChaCha8Rng, s: usize) -> Vec<String> {
    let mut ids: Vec<String> = Vec::with_capacity(s);
    for i in 0..s {
        match ids.last() {
            Some(prev) if rng.random_range(0..10) == 0 => ids.push(prev.clone()),
            _ => ids.push(i.to_string()),
        }
    }
    ids
}

/// Distinct CVR row ids: the ballot ids, sometimes shuffled, with a few
/// replaced by ids no ballot carries.
fn row_ids(rng: &mut ChaCha8Rng, ballot_ids: &[String]) -> Vec<String> {
    let mut ids = ballot_ids.to_vec();
    if rng.random_bool(0.3) {
        ids.shuffle(rng);
    }
    let mut seen = HashSet::new();
    ids.iter()
        .enumerate()
        .map(|(i, id)| {
            if seen.insert(id.clone()) && rng.random_range(0..10) != 0 {
                id.clone()
            } else {
                format!("x{i}")
            }
        })
        .collect()
}

/// A random Bayesian election and a perturbation of its truthful CVR.
/// CVR ids are distinct, as the inequality requires; ballot ids need not be.
pub fn random_bayesian_case(rng: &mut ChaCha8Rng) -> Result<(Election, BayesianCvr)> {
    let n = rng.random_range(2..=MAX_CANDIDATES);
    let s = rng.random_range(1..=MAX_SIZE);
    let cs = candidates(n);
    let ids = ballot_ids(rng, s);
    let ballots: Vec<Ballot> = ids.iter().map(|id| Ballot::bayesian(id.clone(), distribution(rng, n))).collect();
    let rows = row_ids(rng, &ids)
        .into_iter()
        .zip(&ballots)
        .map(|(id, b)| BayesianRow {
            id,
            prediction: if rng.random_bool(0.5) {
                distribution(rng, n)
            } else {
                b.distribution().expect("bayesian ballot").clone()
            },
        })
        .collect();
    let election = Election::new(cs.clone(), ballots)?;
    Ok((election, BayesianCvr::new(cs, rows)?))
}

pub fn random_conservative_case(rng: &mut ChaCha8Rng) -> Result<(Election, ConservativeCvr)> {
    let n = rng.random_range(2..=MAX_CANDIDATES);
    let s = rng.random_range(1..=MAX_SIZE);
    let cs = candidates(n);
    let ids = ballot_ids(rng, s);
    let ballots: Vec<Ballot> = ids.iter().map(|id| Ballot::conservative(id.clone(), interpretation_set(rng, n))).collect();
    let rows = row_ids(rng, &ids)
        .into_iter()
        .zip(&ballots)
        .map(|(id, b)| ConservativeRow {
            id,
            interpretations: if rng.random_bool(0.5) {
                interpretation_set(rng, n)
            } else {
                b.possible_interpretations().clone()
            },
        })
        .collect();
    let election = Election::new(cs.clone(), ballots)?;
    Ok((election, ConservativeCvr::new(cs, rows)?))
}

/// `None` unless the CVR is invalid for the election.
pub fn check_bayesian(election: &Election, cvr: &BayesianCvr) -> Result<Option<LemmaCheck>> {
    if bayesian_validity(cvr, election)? != Validity::Invalid {
        return Ok(None);
    }
    let mu_cvr = cvr.declared_outcome()?.margin;
    let mu_e = election.bayesian_outcome()?.margin;
    Ok(Some(LemmaCheck {
        discrepancy: cvr_discrepancy_bayesian(cvr, election)?,
        bound: (mu_cvr + mu_e) * election.size() as f64,
    }))
}

pub fn check_conservative(election: &Election, cvr: &ConservativeCvr) -> Result<Option<LemmaCheck>> {
    if conservative_validity(cvr, election)? != Validity::Invalid {
        return Ok(None);
    }
    let mu_cvr = cvr.declared_outcome().margin;
    let mu_e = election.conservative_outcome()?.margin;
    Ok(Some(LemmaCheck {
        discrepancy: cvr_discrepancy_conservative(cvr, election)?,
        bound: (mu_cvr + mu_e) * election.size() as f64,
    }))
}

/// Checked invalid cases found and violations among them.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct LemmaSweep {
    pub generated: usize,
    pub invalid: usize,
    pub violations: usize,
}

/// Generates cases until `invalid` of them are invalid CVRs (or
/// `max_generated` cases were drawn) and counts bound violations.
pub fn sweep(conservative: bool, invalid: usize, max_generated: usize, rng: &mut ChaCha8Rng) -> Result<LemmaSweep> {
    let mut out = LemmaSweep::default();
    while out.invalid < invalid && out.generated < max_generated {
        out.generated += 1;
        let check = if conservative {
            let (e, cvr) = random_conservative_case(rng)?;
            check_conservative(&e, &cvr)?
        } else {
            let (e, cvr) = random_bayesian_case(rng)?;
            check_bayesian(&e, &cvr)?
        };
        if let Some(c) = check {
            out.invalid += 1;
            out.violations += usize::from(!c.holds());
        }
    }
    Ok(out)
}
