//! Ballot-comparison auditing.
//!
//! [`ComparisonAuditor`] is the auditor as a step machine: it issues one
//! ballot request at a time, turns each answer into a discrepancy sample,
//! and feeds the sample to the sequential test. The in-process game runners
//! ([`run_bayesian_audit`], [`run_conservative_audit`]) and the HTTP service
//! both drive this same machine, so their transcripts agree.

use std::sync::Arc;

use rand::seq::IndexedRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cvr::{BayesianCvr, ConservativeCvr, CvrMode, SCHEMA_VERSION};
use crate::discrepancy::{in_sigma, RowTerms};
use crate::election::{Ballot, CandidateId, CandidateSet, Election, Interpretation};
use crate::environment::{EnvResponse, Environment, RequestContext};
use crate::error::{Error, Result};
use crate::seeds::{self, Purpose};
use crate::stattest::{AdaptiveAuditTest, Decision, KaplanMarkov, KaplanMarkovConfig, KaplanMarkovRun, TestRun};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Consistent,
    Inconclusive,
}

/// Why an audit ended before drawing any ballot.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "reason")]
pub enum GuardFailure {
    RepeatedIdentifiers,
    SizeMismatch { election: usize, cvr: usize },
    NoDeclaredWinner,
}

/// A CVR reduced to what the auditor needs: row ids, per-row margin terms,
/// and the declared winner and margin. Built once and shared across runs.
#[derive(Clone, Debug)]
pub struct PreparedCvr {
    pub mode: CvrMode,
    pub candidates: CandidateSet,
    pub row_ids: Vec<String>,
    pub terms: Vec<RowTerms>,
    pub winner: Option<CandidateId>,
    /// δ: the declared margin in the CVR's own convention.
    pub margin: f64,
    pub repeated_identifiers: bool,
}

impl PreparedCvr {
    pub fn bayesian(cvr: &BayesianCvr) -> Result<Self> {
        let outcome = cvr.declared_outcome().ok();
        let winner = outcome.as_ref().and_then(|o| o.winner);
        let width = cvr.candidates().len();
        let terms = match winner {
            Some(w) => cvr
                .rows()
                .iter()
                .map(|r| RowTerms::bayesian(&r.prediction, w, width))
                .collect::<Result<Vec<_>>>()?,
            None => Vec::new(),
        };
        Ok(Self {
            mode: CvrMode::Bayesian,
            candidates: cvr.candidates().clone(),
            row_ids: cvr.rows().iter().map(|r| r.id.clone()).collect(),
            terms,
            winner,
            margin: outcome.map_or(0.0, |o| o.margin),
            repeated_identifiers: cvr.has_repeated_identifiers(),
        })
    }

    pub fn conservative(cvr: &ConservativeCvr) -> Result<Self> {
        let outcome = cvr.declared_outcome();
        let width = cvr.candidates().len();
        let terms = match outcome.winner {
            Some(w) => cvr
                .rows()
                .iter()
                .map(|r| RowTerms::conservative(&r.interpretations, w, width))
                .collect::<Result<Vec<_>>>()?,
            None => Vec::new(),
        };
        Ok(Self {
            mode: CvrMode::Conservative,
            candidates: cvr.candidates().clone(),
            row_ids: cvr.rows().iter().map(|r| r.id.clone()).collect(),
            terms,
            winner: outcome.winner,
            margin: outcome.margin,
            repeated_identifiers: cvr.has_repeated_identifiers(),
        })
    }

    pub fn size(&self) -> usize {
        self.row_ids.len()
    }

    fn guard(&self, election_size: usize) -> Option<GuardFailure> {
        if self.repeated_identifiers {
            Some(GuardFailure::RepeatedIdentifiers)
        } else if self.size() != election_size {
            Some(GuardFailure::SizeMismatch {
                election: election_size,
                cvr: self.size(),
            })
        } else if self.winner.is_none() {
            Some(GuardFailure::NoDeclaredWinner)
        } else {
            None
        }
    }
}

/// The audit board's answer to one ballot request.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum BoardResponse {
    Interpretation(Interpretation),
    NoBallot,
    /// The retrieved ballot carries a different identifier.
    WrongId {
        found_id: String,
        interpretation: Option<Interpretation>,
    },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BallotRequest {
    /// Zero-based position of this request in the audit.
    pub index: u64,
    pub row: usize,
    pub id: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum ResponseRecord {
    Interpretation {
        interpretation: String,
    },
    NoBallot,
    WrongId {
        found_id: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        interpretation: Option<String>,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TranscriptEntry {
    /// One-based draw number.
    pub iteration: u64,
    pub row: usize,
    pub requested_id: String,
    pub response: ResponseRecord,
    pub discrepancy: f64,
    /// Test statistic after this draw; saturates at `f64::MAX`.
    pub risk: f64,
    pub log_risk: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AuditTranscript {
    pub schema_version: String,
    pub mode: CvrMode,
    pub seed: u64,
    pub test: KaplanMarkovConfig,
    pub candidates: Vec<String>,
    pub election_size: usize,
    pub cvr_size: usize,
    pub declared_winner: Option<String>,
    pub declared_margin: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub guard: Option<GuardFailure>,
    pub entries: Vec<TranscriptEntry>,
    pub draws: u64,
    pub risk: f64,
    pub verdict: Option<Verdict>,
}

impl AuditTranscript {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("transcript serializes");
        s.push('\n');
        s
    }

    pub fn discrepancies(&self) -> Vec<f64> {
        self.entries.iter().map(|e| e.discrepancy).collect()
    }
}

fn saturate(log_risk: f64) -> f64 {
    log_risk.exp().min(f64::MAX)
}

/// Comparison auditor as a step machine.
pub struct ComparisonAuditor {
    prepared: Arc<PreparedCvr>,
    run: Option<KaplanMarkovRun>,
    rows_rng: ChaCha8Rng,
    pending: Option<BallotRequest>,
    transcript: AuditTranscript,
}

impl ComparisonAuditor {
    /// Runs the entry checks and, if they pass, draws the first request.
    /// `config.max_draws` defaults to the election size.
    pub fn new(
        prepared: Arc<PreparedCvr>,
        election_size: usize,
        config: KaplanMarkovConfig,
        seed: u64,
    ) -> Result<Self> {
        let mut config = config;
        if config.max_draws.is_none() && election_size > 0 {
            config.max_draws = Some(election_size as u64);
        }
        config.validate()?;
        let guard = prepared.guard(election_size);
        let transcript = AuditTranscript {
            schema_version: SCHEMA_VERSION.into(),
            mode: prepared.mode,
            seed,
            test: config,
            candidates: prepared.candidates.names().to_vec(),
            election_size,
            cvr_size: prepared.size(),
            declared_winner: prepared.winner.map(|w| prepared.candidates.name(w).to_string()),
            declared_margin: prepared.margin,
            guard: guard.clone(),
            entries: Vec::new(),
            draws: 0,
            risk: 1.0,
            verdict: guard.as_ref().map(|_| Verdict::Inconclusive),
        };
        let run = match guard {
            Some(_) => None,
            None => Some(KaplanMarkov::new(config)?.start(prepared.margin)?),
        };
        let mut auditor = Self {
            prepared,
            run,
            rows_rng: seeds::rng(seed, 0, Purpose::Rows),
            pending: None,
            transcript,
        };
        auditor.draw_request();
        Ok(auditor)
    }

    pub fn bayesian(cvr: &BayesianCvr, election_size: usize, config: KaplanMarkovConfig, seed: u64) -> Result<Self> {
        Self::new(Arc::new(PreparedCvr::bayesian(cvr)?), election_size, config, seed)
    }

    pub fn conservative(
        cvr: &ConservativeCvr,
        election_size: usize,
        config: KaplanMarkovConfig,
        seed: u64,
    ) -> Result<Self> {
        Self::new(Arc::new(PreparedCvr::conservative(cvr)?), election_size, config, seed)
    }

    fn draw_request(&mut self) {
        if self.transcript.verdict.is_some() {
            self.pending = None;
            return;
        }
        let row = self.rows_rng.random_range(0..self.prepared.size());
        self.pending = Some(BallotRequest {
            index: self.transcript.draws,
            row,
            id: self.prepared.row_ids[row].clone(),
        });
    }

    pub fn prepared(&self) -> &PreparedCvr {
        &self.prepared
    }

    pub fn pending(&self) -> Option<&BallotRequest> {
        self.pending.as_ref()
    }

    pub fn row_terms(&self, row: usize) -> &RowTerms {
        &self.prepared.terms[row]
    }

    pub fn verdict(&self) -> Option<Verdict> {
        self.transcript.verdict
    }

    pub fn transcript(&self) -> &AuditTranscript {
        &self.transcript
    }

    pub fn into_transcript(self) -> AuditTranscript {
        self.transcript
    }

    /// Applies the board's answer to the outstanding request.
    pub fn submit(&mut self, response: BoardResponse) -> Result<Option<Verdict>> {
        let width = self.prepared.candidates.len();
        let Some(req) = self.pending.take() else {
            return Err(Error::Concluded);
        };
        let check = |i: &Interpretation| -> Result<()> {
            if i.fits(width) {
                Ok(())
            } else {
                Err(Error::BadInterpretation {
                    bits: format!("{:#b}", i.mask()),
                    width,
                })
            }
        };
        let bits = |i: Interpretation| i.to_bit_string(width);
        let terms = &self.prepared.terms[req.row];
        let (value, record) = match &response {
            BoardResponse::Interpretation(i) => {
                if let Err(e) = check(i) {
                    self.pending = Some(req);
                    return Err(e);
                }
                (
                    terms.discrepancy(Some(*i)),
                    ResponseRecord::Interpretation {
                        interpretation: bits(*i),
                    },
                )
            }
            BoardResponse::NoBallot => (terms.missing(), ResponseRecord::NoBallot),
            BoardResponse::WrongId {
                found_id,
                interpretation,
            } => {
                if let Some(Err(e)) = interpretation.as_ref().map(check) {
                    self.pending = Some(req);
                    return Err(e);
                }
                if *found_id == req.id {
                    self.pending = Some(req);
                    return Err(Error::Parse("wrong_id response names the requested id".into()));
                }
                (
                    terms.missing(),
                    ResponseRecord::WrongId {
                        found_id: found_id.clone(),
                        interpretation: interpretation.map(bits),
                    },
                )
            }
        };
        debug_assert!(in_sigma(value));
        let run = self.run.as_mut().expect("running audit has a test");
        let decision = run.push(value)?;
        let log_risk = run.log_risk();
        self.transcript.draws += 1;
        self.transcript.risk = saturate(log_risk);
        self.transcript.entries.push(TranscriptEntry {
            iteration: self.transcript.draws,
            row: req.row,
            requested_id: req.id,
            response: record,
            discrepancy: value,
            risk: saturate(log_risk),
            log_risk,
        });
        if let Decision::Stop { reject } = decision {
            self.transcript.verdict = Some(if reject {
                Verdict::Consistent
            } else {
                Verdict::Inconclusive
            });
        }
        self.draw_request();
        Ok(self.transcript.verdict)
    }
}

/// Reported interpretation of a delivered ballot when the environment has
/// not chosen one: the ballot's truth distribution if it has one, otherwise
/// a uniform pick from its possible interpretations.
fn realize(ballot: &Ballot, rng: &mut ChaCha8Rng) -> Interpretation {
    match ballot.distribution() {
        Some(d) => d.sample(rng),
        None => *ballot
            .possible_interpretations()
            .as_slice()
            .choose(rng)
            .expect("interpretation sets are non-empty"),
    }
}

/// Plays the comparison game between an auditor and an environment.
pub fn play_comparison(
    mut auditor: ComparisonAuditor,
    election: &Election,
    env: &mut dyn Environment,
    seed: u64,
) -> Result<AuditTranscript> {
    let chooses = auditor.prepared().mode == CvrMode::Conservative;
    let mut env_rng = seeds::rng(seed, 0, Purpose::Environment);
    let mut truth_rng = seeds::rng(seed, 0, Purpose::Truth);
    while let Some(req) = auditor.pending().cloned() {
        let ctx = RequestContext::Comparison {
            terms: auditor.row_terms(req.row),
            chooses_interpretation: chooses,
        };
        let response = match env.respond(&req.id, ctx, election, &mut env_rng) {
            EnvResponse::NoBallot => BoardResponse::NoBallot,
            EnvResponse::Ballot {
                index,
                interpretation,
            } => {
                let ballot = election.ballot(index);
                let interp = if chooses {
                    match interpretation {
                        Some(i) if ballot.possible_interpretations().contains(i) => i,
                        Some(_) => {
                            return Err(Error::Invariant(format!(
                                "environment reported an impossible interpretation for ballot {}",
                                ballot.id
                            )))
                        }
                        None => realize(ballot, &mut truth_rng),
                    }
                } else {
                    // the board reads a fresh draw from the truth
                    ballot.distribution().ok_or(Error::ModeMismatch)?.sample(&mut truth_rng)
                };
                if ballot.id == req.id {
                    BoardResponse::Interpretation(interp)
                } else {
                    BoardResponse::WrongId {
                        found_id: ballot.id.clone(),
                        interpretation: Some(interp),
                    }
                }
            }
        };
        auditor.submit(response)?;
    }
    Ok(auditor.into_transcript())
}

/// Bayesian comparison audit of `cvr` against `election`.
pub fn run_bayesian_audit(
    election: &Election,
    cvr: &BayesianCvr,
    env: &mut dyn Environment,
    config: KaplanMarkovConfig,
    seed: u64,
) -> Result<AuditTranscript> {
    if cvr.candidates() != election.candidates() {
        return Err(Error::CandidateMismatch);
    }
    let auditor = ComparisonAuditor::bayesian(cvr, election.size(), config, seed)?;
    play_comparison(auditor, election, env, seed)
}

/// Conservative comparison audit; the environment picks the reported
/// interpretation from each delivered ballot's possible set.
pub fn run_conservative_audit(
    election: &Election,
    cvr: &ConservativeCvr,
    env: &mut dyn Environment,
    config: KaplanMarkovConfig,
    seed: u64,
) -> Result<AuditTranscript> {
    if cvr.candidates() != election.candidates() {
        return Err(Error::CandidateMismatch);
    }
    let auditor = ComparisonAuditor::conservative(cvr, election.size(), config, seed)?;
    play_comparison(auditor, election, env, seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cvr::{BayesianRow, ConservativeRow};
    use crate::election::{InterpretationDistribution, InterpretationSet};
    use crate::environment::make_environment;

    const A: CandidateId = CandidateId(0);
    const B: CandidateId = CandidateId(1);

    /// Unambiguous election: `a` votes for A, the rest for B.
    fn plurality(a: usize, b: usize) -> Election {
        let cs = CandidateSet::new(["A", "B"]).unwrap();
        let ballots = (0..a + b)
            .map(|i| Ballot::certain(format!("b{i}"), Interpretation::vote_for(if i < a { A } else { B })))
            .collect();
        Election::new(cs, ballots).unwrap()
    }

    fn env(kind: &str, e: &Election) -> Box<dyn Environment> {
        make_environment(&kind.parse().unwrap(), e).unwrap()
    }

    #[test]
    fn honest_canonical_sixty_forty() {
        let e = plurality(60, 40);
        let cvr = BayesianCvr::from_election(&e).unwrap();
        let t = run_bayesian_audit(&e, &cvr, env("honest", &e).as_mut(), KaplanMarkovConfig::default(), 7).unwrap();
        assert_eq!(t.verdict, Some(Verdict::Consistent));
        assert!((t.declared_margin - 0.2).abs() < 1e-12);
        assert_eq!(t.draws, 32);
        assert!(t.entries.iter().all(|x| x.discrepancy == 0.0));
        assert!(t.risk <= 0.05);
    }

    #[test]
    fn guard_failures_conclude_immediately() {
        let e = plurality(6, 4);
        let cvr = BayesianCvr::from_election(&plurality(6, 5)).unwrap();
        let t = run_bayesian_audit(&e, &cvr, env("honest", &e).as_mut(), KaplanMarkovConfig::default(), 1).unwrap();
        assert_eq!(t.verdict, Some(Verdict::Inconclusive));
        assert_eq!(t.draws, 0);
        assert_eq!(t.guard, Some(GuardFailure::SizeMismatch { election: 10, cvr: 11 }));

        let tie = BayesianCvr::from_election(&plurality(5, 5)).unwrap();
        let e = plurality(5, 5);
        let t = run_bayesian_audit(&e, &tie, env("honest", &e).as_mut(), KaplanMarkovConfig::default(), 1).unwrap();
        assert_eq!(t.guard, Some(GuardFailure::NoDeclaredWinner));
        assert_eq!(t.draws, 0);

        let mut rows = BayesianCvr::from_election(&e).unwrap().rows().to_vec();
        rows[1].id = rows[0].id.clone();
        let rep = BayesianCvr::new(e.candidates().clone(), rows).unwrap();
        let t = run_bayesian_audit(&e, &rep, env("honest", &e).as_mut(), KaplanMarkovConfig::default(), 1).unwrap();
        assert_eq!(t.guard, Some(GuardFailure::RepeatedIdentifiers));
    }

    #[test]
    fn no_ballot_environment_is_inconclusive() {
        let e = plurality(600, 400);
        let cvr = BayesianCvr::from_election(&e).unwrap();
        let t = run_bayesian_audit(&e, &cvr, env("no-ballot", &e).as_mut(), KaplanMarkovConfig::default(), 3).unwrap();
        assert_eq!(t.verdict, Some(Verdict::Inconclusive));
        assert_eq!(t.draws, 1000);
        // rows declaring the winner score 2, rows declaring the loser 0
        assert!(t
            .entries
            .iter()
            .all(|x| x.discrepancy == if x.row < 600 { 2.0 } else { 0.0 }));
    }

    #[test]
    fn mislabels_count_as_missing() {
        let e = plurality(60, 40);
        let cvr = BayesianCvr::from_election(&e).unwrap();
        let t = run_bayesian_audit(&e, &cvr, env("mislabel:1", &e).as_mut(), KaplanMarkovConfig::default(), 3).unwrap();
        assert!(t
            .entries
            .iter()
            .all(|x| matches!(x.response, ResponseRecord::WrongId { .. })
                && x.discrepancy == if x.row < 60 { 2.0 } else { 0.0 }));
    }

    #[test]
    fn transcripts_replay_from_seed() {
        let cs = CandidateSet::new(["A", "B"]).unwrap();
        let half = InterpretationDistribution::new([
            (Interpretation::vote_for(A), 0.5),
            (Interpretation::UNDERVOTE, 0.5),
        ])
        .unwrap();
        let ballots: Vec<Ballot> = (0..200)
            .map(|i| match i % 4 {
                0 => Ballot::bayesian(i.to_string(), half.clone()),
                1 | 2 => Ballot::certain(i.to_string(), Interpretation::vote_for(A)),
                _ => Ballot::certain(i.to_string(), Interpretation::vote_for(B)),
            })
            .collect();
        let e = Election::new(cs, ballots).unwrap();
        let cvr = BayesianCvr::from_election(&e).unwrap();
        let run = |seed| {
            run_bayesian_audit(&e, &cvr, env("suppress:0.05", &e).as_mut(), KaplanMarkovConfig::default(), seed)
                .unwrap()
        };
        assert_eq!(run(11).to_json(), run(11).to_json());
        assert_ne!(run(11).to_json(), run(12).to_json());
    }

    #[test]
    fn conservative_worst_case_reads() {
        // 60 certain A, 20 marginal {A, blank} declared as blank, 20 certain B
        let cs = CandidateSet::new(["A", "B"]).unwrap();
        let va = Interpretation::vote_for(A);
        let vb = Interpretation::vote_for(B);
        let marginal = InterpretationSet::new([va, Interpretation::UNDERVOTE]).unwrap();
        let mut ballots = Vec::new();
        let mut rows = Vec::new();
        for i in 0..100 {
            let (truth, claim) = match i {
                0..60 => (InterpretationSet::singleton(va), InterpretationSet::singleton(va)),
                60..80 => (marginal.clone(), InterpretationSet::singleton(Interpretation::UNDERVOTE)),
                _ => (InterpretationSet::singleton(vb), InterpretationSet::singleton(vb)),
            };
            ballots.push(Ballot::conservative(i.to_string(), truth));
            rows.push(ConservativeRow { id: i.to_string(), interpretations: claim });
        }
        let e = Election::new(cs.clone(), ballots).unwrap();
        let cvr = ConservativeCvr::new(cs, rows).unwrap();
        let t = run_conservative_audit(
            &e,
            &cvr,
            env("worst-case", &e).as_mut(),
            KaplanMarkovConfig::default(),
            5,
        )
        .unwrap();
        for x in &t.entries {
            let expected = if (60..80).contains(&x.row) { -1.0 } else { 0.0 };
            assert_eq!(x.discrepancy, expected);
        }
        assert_eq!(t.verdict, Some(Verdict::Consistent));
    }

    #[test]
    fn submit_rejects_bad_input_and_late_answers() {
        let e = plurality(6, 4);
        let cvr = BayesianCvr::from_election(&e).unwrap();
        let mut a = ComparisonAuditor::bayesian(&cvr, 10, KaplanMarkovConfig::default(), 0).unwrap();
        let req = a.pending().cloned().unwrap();
        assert!(a.submit(BoardResponse::Interpretation(Interpretation::from_mask(0b100))).is_err());
        assert_eq!(a.pending(), Some(&req));
        assert!(a
            .submit(BoardResponse::WrongId { found_id: req.id.clone(), interpretation: None })
            .is_err());
        while a.verdict().is_none() {
            a.submit(BoardResponse::NoBallot).unwrap();
        }
        assert!(a.submit(BoardResponse::NoBallot).is_err());
    }

    #[test]
    fn sample_mean_dominates_declared_margin_for_invalid_cvr() {
        // truth: B wins 52/48; CVR swaps enough rows to declare A by .04
        let e = plurality(48, 52);
        let mut rows: Vec<BayesianRow> = BayesianCvr::from_election(&e).unwrap().rows().to_vec();
        for r in rows.iter_mut().skip(48).take(4) {
            r.prediction = InterpretationDistribution::point(Interpretation::vote_for(A));
        }
        let cvr = BayesianCvr::new(e.candidates().clone(), rows).unwrap();
        let margin = cvr.declared_outcome().unwrap().margin;
        assert!((margin - 0.04).abs() < 1e-12);
        let mut a = ComparisonAuditor::bayesian(&cvr, 100, KaplanMarkovConfig::default(), 0).unwrap();
        let mut rng = seeds::rng(1, 0, Purpose::Truth);
        let prepared = a.prepared().clone();
        let n = 100_000;
        let mut sum = 0.0;
        let mut sq = 0.0;
        for _ in 0..n {
            let row = rng.random_range(0..100);
            let truth = e.ballot(row).distribution().unwrap().sample(&mut rng);
            let d = prepared.terms[row].discrepancy(Some(truth));
            sum += d;
            sq += d * d;
        }
        let mean = sum / n as f64;
        let se = ((sq / n as f64 - mean * mean) / n as f64).sqrt();
        assert!(mean >= margin - 3.0 * se, "{mean} vs {margin}");
        // and the auditor itself accepts the first request as usual
        assert!(a.submit(BoardResponse::NoBallot).is_ok());
    }
}
