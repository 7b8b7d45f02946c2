//! Invalid CVRs with a chosen declared margin, and seeded estimates of how
//! often a comparison audit still certifies them.
//!
//! Bayesian elections are exact ties, so any CVR declaring a winner is
//! invalid and the discrepancy bound is as tight as it gets. Conservative
//! elections are won by the loser `L` by two ballots.

use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use rla_core::audit::{play_comparison, ComparisonAuditor, PreparedCvr, Verdict};
use rla_core::cvr::{BayesianCvr, BayesianRow, ConservativeCvr, ConservativeRow};
use rla_core::election::{Ballot, Election, Interpretation, InterpretationDistribution, InterpretationSet};
use rla_core::environment::{make_environment, EnvKind};
use rla_core::seeds::{self, Purpose};
use rla_core::stattest::KaplanMarkovConfig;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::generate::{ballot_id, two_candidates, LOSER, WINNER};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Construction {
    /// Loser rows relabeled as winner votes.
    Flip,
    /// Blank rows claimed as winner votes.
    BlankClaim,
    /// Marginal rows overstated: predicted certain winner votes (Bayesian)
    /// or narrowed to the winner reading (conservative), topped up with
    /// flips where needed.
    Marginal,
}

impl Construction {
    pub const ALL: [Construction; 3] = [Construction::Flip, Construction::BlankClaim, Construction::Marginal];
}

/// Ballot row kinds the scenarios are built from.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Row {
    W,
    L,
    Blank,
    /// Either a winner vote or blank.
    Marginal,
}

fn vote(row: Row) -> Interpretation {
    match row {
        Row::W => Interpretation::vote_for(WINNER),
        Row::L => Interpretation::vote_for(LOSER),
        Row::Blank | Row::Marginal => Interpretation::from_mask(0),
    }
}

fn layout(counts: &[(Row, usize)]) -> Vec<Row> {
    counts.iter().flat_map(|&(r, n)| std::iter::repeat_n(r, n)).collect()
}

fn whole(x: f64, what: &str) -> Result<usize> {
    let r = x.round();
    if (x - r).abs() > 1e-6 || r < 0.0 {
        return Err(Error::Infeasible(format!("{what} = {x} is not a whole number of ballots")));
    }
    Ok(r as usize)
}

/// Row counts of the truth and the CVR's relabelings: `(truth, cvr)`.
fn plan(construction: Construction, conservative: bool, margin: f64, size: usize) -> Result<(Vec<Row>, Vec<Row>)> {
    let s = size as f64;
    let ms = margin * s;
    // the conservative truth starts two ballots behind for the declared winner
    let deficit = if conservative { 2.0 } else { 0.0 };
    let half = |x: usize| x / 2;
    let (truth, edits): (Vec<(Row, usize)>, Vec<(Row, Row, usize)>) = match construction {
        Construction::Flip => {
            let w = half(size - 2 * (size / 10)) - if conservative { 1 } else { 0 };
            let l = w + deficit as usize;
            let f = whole((ms + deficit) / 2.0, "flips")?;
            (vec![(Row::W, w), (Row::L, l), (Row::Blank, size - w - l)], vec![(Row::L, Row::W, f)])
        }
        Construction::BlankClaim => {
            let w = size * 35 / 100;
            let l = w + deficit as usize;
            let c = whole(ms + deficit, "claims")?;
            (vec![(Row::W, w), (Row::L, l), (Row::Blank, size - w - l)], vec![(Row::Blank, Row::W, c)])
        }
        Construction::Marginal if !conservative => {
            // expected winner votes 0.2S + 0.4S/2 tie the 0.4S loser votes
            let (w, m) = (size / 5, 2 * size / 5);
            let k = whole(2.0 * ms, "overstated marginals")?;
            (vec![(Row::W, w), (Row::Marginal, m), (Row::L, size - w - m)], vec![(Row::Marginal, Row::W, k)])
        }
        Construction::Marginal => {
            // narrowing all marginals makes the CVR claim a tie; flips add the rest
            let (w, m) = (size / 5, size / 5);
            let l = w + m + 2;
            let f = whole((ms + 2.0) / 2.0, "flips")?;
            (
                vec![(Row::W, w), (Row::Marginal, m), (Row::L, l), (Row::Blank, size - w - m - l)],
                vec![(Row::Marginal, Row::W, m), (Row::L, Row::W, f)],
            )
        }
    };
    let truth = layout(&truth);
    if truth.len() != size {
        return Err(Error::Infeasible(format!("size {size} is too small for these scenarios")));
    }
    let mut cvr = truth.clone();
    for (from, to, n) in edits {
        let mut left = n;
        for r in cvr.iter_mut().filter(|r| **r == from) {
            if left == 0 {
                break;
            }
            *r = to;
            left -= 1;
        }
        if left > 0 {
            return Err(Error::Infeasible(format!("margin {margin} needs more {from:?} rows than size {size} has")));
        }
    }
    Ok((truth, cvr))
}

/// Rows are shuffled together so the relabeled rows are spread out.
fn shuffled(truth: Vec<Row>, cvr: Vec<Row>, seed: u64) -> Vec<(Row, Row)> {
    let mut pairs: Vec<(Row, Row)> = truth.into_iter().zip(cvr).collect();
    pairs.shuffle(&mut seeds::rng(seed, 0, Purpose::Generate));
    pairs
}

fn marginal_dist() -> InterpretationDistribution {
    InterpretationDistribution::new([(vote(Row::W), 0.5), (vote(Row::Blank), 0.5)]).expect("valid distribution")
}

fn marginal_set() -> InterpretationSet {
    InterpretationSet::new([vote(Row::W), vote(Row::Blank)]).expect("non-empty")
}

/// A tied Bayesian election and an invalid CVR declaring `W` by `margin`.
pub fn bayesian_scenario(construction: Construction, margin: f64, size: usize, seed: u64) -> Result<(Election, BayesianCvr)> {
    let (truth, cvr) = plan(construction, false, margin, size)?;
    let pairs = shuffled(truth, cvr, seed);
    let dist = |r: Row| match r {
        Row::Marginal => marginal_dist(),
        r => InterpretationDistribution::point(vote(r)),
    };
    let ballots = pairs.iter().enumerate().map(|(i, &(t, _))| Ballot::bayesian(ballot_id(i), dist(t))).collect();
    let rows = pairs
        .iter()
        .enumerate()
        .map(|(i, &(_, c))| BayesianRow {
            id: ballot_id(i),
            prediction: dist(c),
        })
        .collect();
    Ok((Election::new(two_candidates(), ballots)?, BayesianCvr::new(two_candidates(), rows)?))
}

/// A conservative election won by `L` and an invalid CVR declaring `W` by
/// conservative margin `margin`.
pub fn conservative_scenario(
    construction: Construction,
    margin: f64,
    size: usize,
    seed: u64,
) -> Result<(Election, ConservativeCvr)> {
    let (truth, cvr) = plan(construction, true, margin, size)?;
    let pairs = shuffled(truth, cvr, seed);
    let set = |r: Row| match r {
        Row::Marginal => marginal_set(),
        r => InterpretationSet::singleton(vote(r)),
    };
    let ballots = pairs.iter().enumerate().map(|(i, &(t, _))| Ballot::conservative(ballot_id(i), set(t))).collect();
    let rows = pairs
        .iter()
        .enumerate()
        .map(|(i, &(_, c))| ConservativeRow {
            id: ballot_id(i),
            interpretations: set(c),
        })
        .collect();
    Ok((Election::new(two_candidates(), ballots)?, ConservativeCvr::new(two_candidates(), rows)?))
}

/// Environments that try to get the invalid CVR certified.
pub fn adversaries() -> Vec<EnvKind> {
    vec![
        EnvKind::WorstCase { favor: Some(WINNER) },
        EnvKind::SelectiveSuppress { favor: Some(WINNER) },
        EnvKind::Mislabel { rate: 0.2 },
    ]
}

/// Count of certified audits among seeded trials.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CertificationRate {
    pub trials: usize,
    pub consistent: usize,
}

impl CertificationRate {
    pub fn rate(&self) -> f64 {
        self.consistent as f64 / self.trials as f64
    }

    /// Standard error of a rate of exactly `alpha` over this many trials.
    pub fn standard_error_at(&self, alpha: f64) -> f64 {
        (alpha * (1.0 - alpha) / self.trials as f64).sqrt()
    }
}

/// Audits `cvr` against `election` in `trials` seeded runs. Trial `i` uses
/// the audit seed drawn from `(seed, i)`.
pub fn certification_rate(
    election: &Election,
    prepared: Arc<PreparedCvr>,
    env: &EnvKind,
    config: KaplanMarkovConfig,
    trials: usize,
    seed: u64,
) -> Result<CertificationRate> {
    let outcomes: Vec<bool> = (0..trials as u64)
        .into_par_iter()
        .map(|i| -> Result<bool> {
            let audit_seed: u64 = seeds::rng(seed, i, Purpose::Test).random();
            let mut environment = make_environment(env, election)?;
            let auditor = ComparisonAuditor::new(prepared.clone(), election.size(), config, audit_seed)?;
            let transcript = play_comparison(auditor, election, environment.as_mut(), audit_seed)?;
            Ok(transcript.verdict == Some(Verdict::Consistent))
        })
        .collect::<Result<_>>()?;
    Ok(CertificationRate {
        trials,
        consistent: outcomes.iter().filter(|&&c| c).count(),
    })
}
