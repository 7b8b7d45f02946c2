//! Competitive audits: several advocates each submit a conservative CVR and
//! the judge decides between them with a constant number of ballot pulls per
//! contradictory pair, independent of the margin.

use std::collections::{BTreeSet, HashSet};

use rand::seq::IndexedRandom;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::audit::ResponseRecord;
use crate::cvr::{outcomes_contradict, ConservativeCvr, DeclaredOutcome, SCHEMA_VERSION};
use crate::election::{CandidateSet, Election, Interpretation};
use crate::environment::{EnvResponse, Environment, RequestContext};
use crate::error::{Error, Result};
use crate::seeds::{self, Purpose};

/// Identifier sets on which an ordered CVR pair `(A, B)` disagrees.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct DisagreementAnalysis {
    /// Ids in `A` but not in `B`.
    pub omission: Vec<String>,
    /// Ids in both whose declared interpretation sets are disjoint.
    pub conflict: Vec<String>,
    /// `omission ∪ conflict`, in `A`'s row order.
    pub disagree: Vec<String>,
}

/// Ids are listed once each, in `cvr_a`'s row order. For a repeated id the
/// first row carrying it is the one compared.
pub fn disagreement(cvr_a: &ConservativeCvr, cvr_b: &ConservativeCvr) -> Result<DisagreementAnalysis> {
    if cvr_a.candidates() != cvr_b.candidates() {
        return Err(Error::CandidateMismatch);
    }
    let mut out = DisagreementAnalysis::default();
    let mut seen = HashSet::new();
    for (i, row) in cvr_a.rows().iter().enumerate() {
        if cvr_a.row_of(&row.id) != Some(i) || !seen.insert(row.id.as_str()) {
            continue;
        }
        match cvr_b.row_of(&row.id) {
            None => {
                out.omission.push(row.id.clone());
                out.disagree.push(row.id.clone());
            }
            Some(j) if row.interpretations.is_disjoint(&cvr_b.row(j).interpretations) => {
                out.conflict.push(row.id.clone());
                out.disagree.push(row.id.clone());
            }
            Some(_) => {}
        }
    }
    Ok(out)
}

/// One disqualification vote against `cvr`: a delivered interpretation that
/// the CVR does not declare for `id` (or an id the CVR lacks). A missing
/// ballot never counts against a CVR.
pub fn disqual(id: &str, realized: Option<Interpretation>, cvr: &ConservativeCvr) -> u8 {
    let Some(interp) = realized else {
        return 0;
    };
    match cvr.row_of(id) {
        None => 1,
        Some(r) => u8::from(!cvr.row(r).interpretations.contains(interp)),
    }
}

// ---------------------------------------------------------------------------
// Binomial tails and the imperfect-advocacy bounds

fn ln_binomial_pmf(t: u64, k: u64, ln_p: f64, ln_q: f64) -> f64 {
    let mut ln_c = 0.0;
    for i in 0..k {
        ln_c += ((t - i) as f64).ln() - ((i + 1) as f64).ln();
    }
    ln_c + k as f64 * ln_p + (t - k) as f64 * ln_q
}

fn upper_tail(gamma: f64, t: u64, from: u64) -> f64 {
    if from > t {
        return 0.0;
    }
    if gamma <= 0.0 {
        return if from == 0 { 1.0 } else { 0.0 };
    }
    if gamma >= 1.0 {
        return 1.0;
    }
    let (ln_p, ln_q) = (gamma.ln(), (-gamma).ln_1p());
    let terms: Vec<f64> = (from..=t).map(|k| ln_binomial_pmf(t, k, ln_p, ln_q)).collect();
    let top = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = terms.iter().map(|x| (x - top).exp()).sum();
    (top + sum.ln()).exp().min(1.0)
}

/// `P[X ≥ t/2]` for `X ~ Binomial(t, γ)`.
pub fn binomial_tail(gamma: f64, t: u64) -> f64 {
    upper_tail(gamma, t, t.div_ceil(2))
}

/// `P[X > t/2]`, the event the judge actually acts on.
pub fn binomial_tail_strict(gamma: f64, t: u64) -> f64 {
    upper_tail(gamma, t, t / 2 + 1)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdvocacyBounds {
    /// Upper bound on the chance that a nearly consistent winning CVR fails
    /// to carry the audit against an honest environment.
    pub completeness_failure: f64,
    /// Upper bound on the chance that a loser is output when a nearly
    /// canonical CVR is submitted, for any environment.
    pub soundness_failure: f64,
    pub rate: f64,
}

/// Both bounds equal `2(k-1)·P[Bin(t, 2ε/μ*) ≥ t/2]`, clamped to `[0, 1]`,
/// and require `μ* > 4ε`.
pub fn advocacy_bounds(k: u64, t: u64, epsilon: f64, mu_star: f64) -> Result<AdvocacyBounds> {
    if k == 0 || t == 0 {
        return Err(Error::InvalidBound("k and t must be positive".into()));
    }
    if !(0.0..=1.0).contains(&epsilon) {
        return Err(Error::InvalidBound(format!("epsilon {epsilon} outside [0,1]")));
    }
    if !(mu_star > 4.0 * epsilon && mu_star <= 1.0) {
        return Err(Error::InvalidBound(format!(
            "margin {mu_star} must exceed 4·epsilon = {} and be at most 1",
            4.0 * epsilon
        )));
    }
    let rate = 2.0 * epsilon / mu_star;
    let b = (2.0 * (k - 1) as f64 * binomial_tail(rate, t)).clamp(0.0, 1.0);
    Ok(AdvocacyBounds {
        completeness_failure: b,
        soundness_failure: b,
        rate,
    })
}

// ---------------------------------------------------------------------------
// The judge

#[derive(Clone, Debug)]
pub struct LabeledCvr {
    pub label: String,
    pub cvr: ConservativeCvr,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairTally {
    pub accuser: String,
    pub accused: String,
    pub disagree_size: usize,
    pub draws: u64,
    pub votes: u64,
    pub disqualified: bool,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum InconclusiveReason {
    DuplicateLabelsAnnounced,
    ContradictionsRemain,
    NoDeclaredWinner,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "result")]
pub enum CompetitiveOutcome {
    Winner { candidate: String },
    Inconclusive { reason: InconclusiveReason },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct JudgeRequest {
    /// Zero-based position across the whole audit.
    pub index: u64,
    pub accuser: String,
    pub accused: String,
    pub id: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct JudgeEntry {
    pub index: u64,
    pub accuser: String,
    pub accused: String,
    pub requested_id: String,
    pub response: ResponseRecord,
    pub vote: u8,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CompetitiveVerdict {
    pub schema_version: String,
    pub t: u64,
    pub seed: u64,
    pub election_size: usize,
    pub labels: Vec<String>,
    pub dropped_wrong_size: Vec<String>,
    pub tallies: Vec<PairTally>,
    pub disqualified: Vec<String>,
    pub requests: u64,
    pub entries: Vec<JudgeEntry>,
    pub outcome: Option<CompetitiveOutcome>,
}

impl CompetitiveVerdict {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("verdict serializes");
        s.push('\n');
        s
    }

    pub fn winner(&self) -> Option<&str> {
        match &self.outcome {
            Some(CompetitiveOutcome::Winner { candidate }) => Some(candidate),
            _ => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct JudgeConfig {
    pub t: u64,
    pub seed: u64,
}

struct PairWork {
    accuser: usize,
    accused: usize,
    disagree: Vec<String>,
    tally: usize,
}

/// The competitive auditor as a step machine.
pub struct Judge {
    config: JudgeConfig,
    candidates: CandidateSet,
    cvrs: Vec<LabeledCvr>,
    outcomes: Vec<DeclaredOutcome>,
    /// CVRs of the right size, by position in `cvrs`.
    remaining: Vec<usize>,
    queue: std::collections::VecDeque<PairWork>,
    current: Option<PairWork>,
    disqualified: BTreeSet<usize>,
    rng: ChaCha8Rng,
    pending: Option<JudgeRequest>,
    verdict: CompetitiveVerdict,
}

impl Judge {
    /// CVRs are considered in label order; labels must be distinct.
    pub fn new(config: JudgeConfig, candidates: CandidateSet, size: usize, mut cvrs: Vec<LabeledCvr>) -> Result<Self> {
        if config.t == 0 {
            return Err(Error::InvalidTestConfig("t must be positive".into()));
        }
        cvrs.sort_by(|a, b| a.label.cmp(&b.label));
        if let Some(w) = cvrs.windows(2).find(|w| w[0].label == w[1].label) {
            return Err(Error::DuplicateCvrLabel(w[0].label.clone()));
        }
        if cvrs.iter().any(|c| *c.cvr.candidates() != candidates) {
            return Err(Error::CandidateMismatch);
        }
        let outcomes: Vec<DeclaredOutcome> = cvrs.iter().map(|c| c.cvr.declared_outcome()).collect();
        let labels = cvrs.iter().map(|c| c.label.clone()).collect();
        let mut judge = Self {
            config,
            candidates,
            outcomes,
            remaining: Vec::new(),
            queue: Default::default(),
            current: None,
            disqualified: BTreeSet::new(),
            rng: seeds::rng(config.seed, 0, Purpose::Judge),
            pending: None,
            verdict: CompetitiveVerdict {
                schema_version: SCHEMA_VERSION.into(),
                t: config.t,
                seed: config.seed,
                election_size: size,
                labels,
                dropped_wrong_size: Vec::new(),
                tallies: Vec::new(),
                disqualified: Vec::new(),
                requests: 0,
                entries: Vec::new(),
                outcome: None,
            },
            cvrs,
        };
        if judge.cvrs.iter().any(|c| c.cvr.duplicate_labels_announced) {
            judge.verdict.outcome = Some(CompetitiveOutcome::Inconclusive {
                reason: InconclusiveReason::DuplicateLabelsAnnounced,
            });
            return Ok(judge);
        }
        for (i, c) in judge.cvrs.iter().enumerate() {
            if c.cvr.size() == size {
                judge.remaining.push(i);
            } else {
                judge.verdict.dropped_wrong_size.push(c.label.clone());
            }
        }
        for &a in &judge.remaining {
            for &b in &judge.remaining {
                if a == b || !outcomes_contradict(&judge.outcomes[a], &judge.outcomes[b]) {
                    continue;
                }
                let (ca, cb) = (&judge.cvrs[a].cvr, &judge.cvrs[b].cvr);
                let disagree = disagreement(ca, cb)?.disagree;
                if disagree.is_empty() && !ca.has_repeated_identifiers() && !cb.has_repeated_identifiers() {
                    return Err(Error::Invariant(format!(
                        "contradictory CVRs {:?} and {:?} of equal size share every claim",
                        judge.cvrs[a].label, judge.cvrs[b].label
                    )));
                }
                judge.verdict.tallies.push(PairTally {
                    accuser: judge.cvrs[a].label.clone(),
                    accused: judge.cvrs[b].label.clone(),
                    disagree_size: disagree.len(),
                    draws: 0,
                    votes: 0,
                    disqualified: false,
                });
                judge.queue.push_back(PairWork {
                    accuser: a,
                    accused: b,
                    disagree,
                    tally: judge.verdict.tallies.len() - 1,
                });
            }
        }
        judge.advance();
        Ok(judge)
    }

    /// Upper bound on requests for `k` CVRs.
    pub fn budget(&self) -> u64 {
        let k = self.cvrs.len() as u64;
        self.config.t * k * k.saturating_sub(1)
    }

    /// Moves to the next request, closing finished pairs and, once the pair
    /// queue is empty, the audit itself.
    fn advance(&mut self) {
        loop {
            if let Some(work) = &self.current {
                let tally = &self.verdict.tallies[work.tally];
                if tally.draws < self.config.t && !work.disagree.is_empty() {
                    let id = work.disagree.choose(&mut self.rng).expect("non-empty").clone();
                    self.pending = Some(JudgeRequest {
                        index: self.verdict.requests,
                        accuser: self.cvrs[work.accuser].label.clone(),
                        accused: self.cvrs[work.accused].label.clone(),
                        id,
                    });
                    return;
                }
                // strict majority of the t draws
                if 2 * tally.votes > self.config.t {
                    self.verdict.tallies[work.tally].disqualified = true;
                    self.disqualified.insert(work.accused);
                }
                self.current = None;
            }
            match self.queue.pop_front() {
                Some(next) => self.current = Some(next),
                None => break,
            }
        }
        self.pending = None;
        self.conclude();
    }

    fn conclude(&mut self) {
        self.verdict.disqualified = self
            .disqualified
            .iter()
            .map(|&i| self.cvrs[i].label.clone())
            .collect();
        let survivors: Vec<usize> = self
            .remaining
            .iter()
            .copied()
            .filter(|i| !self.disqualified.contains(i))
            .collect();
        let contradiction = survivors.iter().any(|&a| {
            survivors
                .iter()
                .any(|&b| a != b && outcomes_contradict(&self.outcomes[a], &self.outcomes[b]))
        });
        let winners: BTreeSet<_> = survivors.iter().filter_map(|&i| self.outcomes[i].winner).collect();
        self.verdict.outcome = Some(if contradiction {
            CompetitiveOutcome::Inconclusive {
                reason: InconclusiveReason::ContradictionsRemain,
            }
        } else if winners.is_empty() {
            CompetitiveOutcome::Inconclusive {
                reason: InconclusiveReason::NoDeclaredWinner,
            }
        } else {
            // distinct declared winners always contradict each other
            assert_eq!(winners.len(), 1, "uncontradicted survivors disagree on the winner");
            let w = *winners.iter().next().expect("one winner");
            CompetitiveOutcome::Winner {
                candidate: self.candidates.name(w).to_string(),
            }
        });
    }

    pub fn pending(&self) -> Option<&JudgeRequest> {
        self.pending.as_ref()
    }

    /// Claim of the CVR the pending request can disqualify.
    pub fn pending_context(&self) -> Option<RequestContext<'_>> {
        let work = self.current.as_ref()?;
        let req = self.pending.as_ref()?;
        let cvr = &self.cvrs[work.accused].cvr;
        Some(RequestContext::Competitive {
            accused_winner: self.outcomes[work.accused].winner,
            accused_set: cvr.row_of(&req.id).map(|r| &cvr.row(r).interpretations),
        })
    }

    pub fn verdict(&self) -> &CompetitiveVerdict {
        &self.verdict
    }

    pub fn into_verdict(self) -> CompetitiveVerdict {
        self.verdict
    }

    pub fn is_concluded(&self) -> bool {
        self.verdict.outcome.is_some()
    }

    pub fn candidates(&self) -> &CandidateSet {
        &self.candidates
    }

    /// Records the answer to the pending request. `found_id` differing
    /// from the requested id counts as no ballot.
    pub fn submit(&mut self, found_id: Option<&str>, interpretation: Option<Interpretation>) -> Result<()> {
        let width = self.candidates.len();
        if let Some(i) = interpretation {
            if !i.fits(width) {
                return Err(Error::BadInterpretation {
                    bits: format!("{:#b}", i.mask()),
                    width,
                });
            }
        }
        let req = self.pending.take().ok_or(Error::Concluded)?;
        let work = self.current.as_ref().expect("pending request belongs to a pair");
        let matched = match found_id {
            Some(f) => f == req.id,
            None => interpretation.is_some(),
        };
        let realized = if matched { interpretation } else { None };
        let vote = disqual(&req.id, realized, &self.cvrs[work.accused].cvr);
        let bits = |i: Interpretation| i.to_bit_string(width);
        let response = match (found_id, interpretation) {
            (Some(f), i) if f != req.id => ResponseRecord::WrongId {
                found_id: f.to_string(),
                interpretation: i.map(bits),
            },
            (_, Some(i)) => ResponseRecord::Interpretation {
                interpretation: bits(i),
            },
            (_, None) => ResponseRecord::NoBallot,
        };
        let tally = &mut self.verdict.tallies[work.tally];
        tally.draws += 1;
        tally.votes += u64::from(vote);
        self.verdict.entries.push(JudgeEntry {
            index: req.index,
            accuser: req.accuser,
            accused: req.accused,
            requested_id: req.id,
            response,
            vote,
        });
        self.verdict.requests += 1;
        debug_assert!(self.verdict.requests <= self.budget());
        self.advance();
        Ok(())
    }
}

/// Plays the competitive game against `env` on `election`.
pub fn run_judge(
    config: JudgeConfig,
    election: &Election,
    cvrs: Vec<LabeledCvr>,
    env: &mut dyn Environment,
) -> Result<CompetitiveVerdict> {
    let mut judge = Judge::new(config, election.candidates().clone(), election.size(), cvrs)?;
    let mut env_rng = seeds::rng(config.seed, 0, Purpose::Environment);
    let mut truth_rng = seeds::rng(config.seed, 0, Purpose::Truth);
    while let Some(req) = judge.pending().cloned() {
        let ctx = judge.pending_context().expect("pending request has context");
        match env.respond(&req.id, ctx, election, &mut env_rng) {
            EnvResponse::NoBallot => judge.submit(None, None)?,
            EnvResponse::Ballot {
                index,
                interpretation,
            } => {
                let ballot = election.ballot(index);
                let interp = match interpretation {
                    Some(i) if ballot.possible_interpretations().contains(i) => i,
                    Some(_) => {
                        return Err(Error::Invariant(format!(
                            "environment reported an impossible interpretation for ballot {}",
                            ballot.id
                        )))
                    }
                    None => match ballot.distribution() {
                        Some(d) => d.sample(&mut truth_rng),
                        None => *ballot
                            .possible_interpretations()
                            .as_slice()
                            .choose(&mut truth_rng)
                            .expect("non-empty"),
                    },
                };
                judge.submit(Some(&ballot.id), Some(interp))?;
            }
        }
    }
    let budget = judge.budget();
    let verdict = judge.into_verdict();
    assert!(verdict.requests <= budget, "request budget exceeded");
    Ok(verdict)
}
