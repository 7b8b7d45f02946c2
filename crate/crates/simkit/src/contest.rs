//! Scenarios for competitive audits: random elections with one truthful
//! advocate among arbitrary rivals, and a fixed two-advocate election where
//! the truthful advocate makes a few mistakes.

use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rla_core::competitive::{run_judge, CompetitiveVerdict, JudgeConfig, LabeledCvr};
use rla_core::cvr::{ConservativeCvr, ConservativeRow};
use rla_core::election::{Ballot, CandidateId, CandidateSet, Election, Interpretation, InterpretationSet};
use rla_core::environment::{make_environment, EnvKind};

use crate::error::{Error, Result};
use crate::generate::{ballot_id, two_candidates, LOSER, WINNER};

/// An election, the advocates' CVRs, and which of them is truthful.
#[derive(Clone, Debug)]
pub struct ContestCase {
    pub election: Election,
    pub cvrs: Vec<LabeledCvr>,
    pub truthful: String,
}

impl ContestCase {
    pub fn run(&self, env: &EnvKind, t: u64, seed: u64) -> Result<CompetitiveVerdict> {
        let mut env = make_environment(env, &self.election)?;
        Ok(run_judge(JudgeConfig { t, seed }, &self.election, self.cvrs.clone(), env.as_mut())?)
    }

    /// Whether the verdict names a candidate that loses the election under
    /// every reading of its ballots.
    pub fn names_loser(&self, verdict: &CompetitiveVerdict) -> Result<bool> {
        let losers = self.election.conservative_outcome()?.losers;
        Ok(verdict.winner().is_some_and(|w| {
            self.election.candidates().id(w).is_ok_and(|c| losers.contains(&c))
        }))
    }
}

fn candidates(n: usize) -> CandidateSet {
    CandidateSet::new(["A", "B", "C"].into_iter().take(n)).expect("static names")
}

fn random_set(rng: &mut ChaCha8Rng, n: usize) -> InterpretationSet {
    let single = |rng: &mut ChaCha8Rng| Interpretation::vote_for(CandidateId(rng.random_range(0..n)));
    match rng.random_range(0..20) {
        0..=13 => InterpretationSet::singleton(single(rng)),
        14..=16 => InterpretationSet::singleton(Interpretation::UNDERVOTE),
        17 | 18 => InterpretationSet::new([single(rng), Interpretation::UNDERVOTE]).expect("non-empty"),
        _ => InterpretationSet::new([single(rng), single(rng)]).expect("non-empty"),
    }
}

/// A uniquely labeled conservative election with 2 or 3 candidates and at
/// least one conservative loser; with `need_winner`, also a winner.
fn random_election(rng: &mut ChaCha8Rng, need_winner: bool) -> Result<Election> {
    loop {
        let n = rng.random_range(2..=3);
        let s = rng.random_range(8..=40);
        let ballots = (0..s).map(|i| Ballot::conservative(ballot_id(i), random_set(rng, n))).collect();
        let e = Election::new(candidates(n), ballots)?;
        let o = e.conservative_outcome()?;
        if !o.losers.is_empty() && (!need_winner || o.winner.is_some()) {
            return Ok(e);
        }
    }
}

fn rebuild(cvr: &ConservativeCvr, rows: Vec<ConservativeRow>) -> Result<ConservativeCvr> {
    Ok(ConservativeCvr::new(cvr.candidates().clone(), rows)?)
}

/// Widens random rows of the canonical CVR while it still declares the
/// election's winner.
fn widened(election: &Election, rng: &mut ChaCha8Rng) -> Result<ConservativeCvr> {
    let winner = election.conservative_outcome()?.winner;
    let mut cvr = ConservativeCvr::canonical(election)?;
    let n = election.candidates().len();
    for r in 0..cvr.size() {
        if !rng.random_bool(0.3) {
            continue;
        }
        let mut rows = cvr.rows().to_vec();
        let extra = Interpretation::from_mask(rng.random_range(0..1u64 << n));
        rows[r].interpretations = rows[r].interpretations.union(&InterpretationSet::singleton(extra));
        let next = rebuild(&cvr, rows)?;
        if next.declared_outcome().winner == winner {
            cvr = next;
        }
    }
    Ok(cvr)
}

/// A rival CVR of a random kind, usually pushing `target`.
fn rival(base: &ConservativeCvr, target: CandidateId, rng: &mut ChaCha8Rng) -> Result<ConservativeCvr> {
    let n = base.candidates().len();
    let s = base.size();
    let vote = InterpretationSet::singleton(Interpretation::vote_for(target));
    let mut rows = base.rows().to_vec();
    match rng.random_range(0..6) {
        // rewrite enough rows to make `target` the declared winner
        0 | 1 => {
            let mut order: Vec<usize> = (0..s).collect();
            order.shuffle(rng);
            for r in order {
                let trial = rebuild(base, rows.clone())?;
                if trial.declared_outcome().winner == Some(target) && rng.random_bool(0.5) {
                    break;
                }
                rows[r].interpretations = vote.clone();
            }
        }
        // an arbitrary CVR
        2 => {
            for row in &mut rows {
                row.interpretations = random_set(rng, n);
            }
        }
        // unknown identifiers claimed for `target`
        3 => {
            for (i, row) in rows.iter_mut().enumerate() {
                if rng.random_bool(0.5) {
                    *row = ConservativeRow {
                        id: format!("fake{i}"),
                        interpretations: vote.clone(),
                    };
                }
            }
        }
        // a repeated identifier
        4 if s > 1 => {
            rows[1].id = rows[0].id.clone();
            rows[1].interpretations = vote.clone();
        }
        // the wrong size
        _ => {
            rows.pop();
            if rows.is_empty() {
                rows.push(ConservativeRow { id: "fake".into(), interpretations: vote });
            }
        }
    }
    rebuild(base, rows)
}

/// Labels in random order so the truthful CVR's position varies.
fn label(cvrs: Vec<ConservativeCvr>, rng: &mut ChaCha8Rng) -> Vec<LabeledCvr> {
    let mut slots: Vec<usize> = (0..cvrs.len()).collect();
    slots.shuffle(rng);
    cvrs.into_iter()
        .zip(slots)
        .map(|(cvr, slot)| LabeledCvr {
            label: format!("advocate-{slot}"),
            cvr,
        })
        .collect()
}

fn assemble(election: Election, truthful: ConservativeCvr, rivals: Vec<ConservativeCvr>, rng: &mut ChaCha8Rng) -> ContestCase {
    let mut all = vec![truthful];
    all.extend(rivals);
    let cvrs = label(all, rng);
    let truthful = cvrs[0].label.clone();
    ContestCase { election, cvrs, truthful }
}

/// A random election with a winner, a consistent CVR declaring it, and
/// `k − 1` rivals.
pub fn completeness_case(k: usize, rng: &mut ChaCha8Rng) -> Result<ContestCase> {
    if k == 0 {
        return Err(Error::Usage("at least one advocate is needed".into()));
    }
    let election = random_election(rng, true)?;
    let winner = election.conservative_outcome()?.winner.expect("election has a winner");
    let truthful = widened(&election, rng)?;
    let others: Vec<CandidateId> = election.candidates().ids().filter(|&c| c != winner).collect();
    let rivals = (1..k)
        .map(|_| rival(&truthful, *others.choose(rng).expect("two or more candidates"), rng))
        .collect::<Result<_>>()?;
    Ok(assemble(election, truthful, rivals, rng))
}

/// A random election with a loser, its canonical CVR, and `k − 1` rivals
/// pushing losers.
pub fn soundness_case(k: usize, rng: &mut ChaCha8Rng) -> Result<ContestCase> {
    if k == 0 {
        return Err(Error::Usage("at least one advocate is needed".into()));
    }
    let election = random_election(rng, false)?;
    let losers: Vec<CandidateId> = election.conservative_outcome()?.losers.into_iter().collect();
    let truthful = ConservativeCvr::canonical(&election)?;
    let rivals = (1..k)
        .map(|_| rival(&truthful, *losers.choose(rng).expect("election has a loser"), rng))
        .collect::<Result<_>>()?;
    Ok(assemble(election, truthful, rivals, rng))
}

/// Parameters of the fixed imperfect-advocacy election.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ImperfectSetup {
    pub size: usize,
    /// Rows where the truthful advocate claims `W` for an `L` ballot.
    pub mistakes: usize,
    /// Winner votes among the ballots.
    pub true_winner_votes: usize,
    /// Rows the rival rewrites from `W` to `L`, mistakes included.
    pub rival_flips: usize,
}

impl ImperfectSetup {
    /// `S = 1000`, `ε = .01`, `μ_* = .08`; the rival disagrees on 41 rows,
    /// one more than the fewest a contradicting rival can manage.
    pub const PUBLISHED: ImperfectSetup = ImperfectSetup {
        size: 1000,
        mistakes: 10,
        true_winner_votes: 530,
        rival_flips: 41,
    };

    pub fn epsilon(&self) -> f64 {
        self.mistakes as f64 / self.size as f64
    }

    pub fn declared_margin(&self) -> f64 {
        let w = self.true_winner_votes + self.mistakes;
        (2.0 * w as f64 - self.size as f64) / self.size as f64
    }
}

/// Two advocates over two candidates. The truthful one is exact except on
/// `mistakes` loser ballots it claims for `W`; the rival moves
/// `rival_flips` of its `W` rows, mistakes first, to `L`.
pub fn imperfect_case(setup: ImperfectSetup, rng: &mut ChaCha8Rng) -> Result<ContestCase> {
    let ImperfectSetup {
        size,
        mistakes,
        true_winner_votes,
        rival_flips,
    } = setup;
    if true_winner_votes + mistakes > size || rival_flips < mistakes || rival_flips > true_winner_votes + mistakes {
        return Err(Error::Infeasible(format!("{setup:?} does not describe an election")));
    }
    let w = Interpretation::vote_for(WINNER);
    let l = Interpretation::vote_for(LOSER);
    // (truth, truthful claim, rival claim) per ballot
    let mut rows: Vec<(Interpretation, Interpretation, Interpretation)> = Vec::with_capacity(size);
    rows.extend(std::iter::repeat_n((l, w, l), mistakes));
    rows.extend(std::iter::repeat_n((w, w, l), rival_flips - mistakes));
    rows.extend(std::iter::repeat_n((w, w, w), true_winner_votes - (rival_flips - mistakes)));
    rows.extend(std::iter::repeat_n((l, l, l), size - rows.len()));
    rows.shuffle(rng);
    let ballots = rows
        .iter()
        .enumerate()
        .map(|(i, r)| Ballot::conservative(ballot_id(i), InterpretationSet::singleton(r.0)))
        .collect();
    let claims = |pick: fn(&(Interpretation, Interpretation, Interpretation)) -> Interpretation| {
        let rows = rows
            .iter()
            .enumerate()
            .map(|(i, r)| ConservativeRow {
                id: ballot_id(i),
                interpretations: InterpretationSet::singleton(pick(r)),
            })
            .collect();
        ConservativeCvr::new(two_candidates(), rows)
    };
    let truthful = claims(|r| r.1)?;
    let rival = claims(|r| r.2)?;
    Ok(ContestCase {
        election: Election::new(two_candidates(), ballots)?,
        cvrs: vec![
            LabeledCvr { label: "advocate-star".into(), cvr: truthful },
            LabeledCvr { label: "advocate-rival".into(), cvr: rival },
        ],
        truthful: "advocate-star".into(),
    })
}

/// Environments that try to keep a loser in the running.
pub fn soundness_adversaries(election: &Election) -> Result<Vec<EnvKind>> {
    let losers = election.conservative_outcome()?.losers;
    let favor = losers.into_iter().next();
    Ok(vec![
        EnvKind::NoBallot,
        EnvKind::SelectiveSuppress { favor },
        EnvKind::WorstCase { favor },
    ])
}

#[cfg(test)]
mod tests {
    use super::*;
    use rla_core::competitive::disagreement;
    use rla_core::cvr::{consistency_class, ConsistencyClass};
    use rla_core::seeds::{rng, Purpose};

    #[test]
    fn completeness_cases_have_a_consistent_truthful_cvr() {
        let mut r = rng(4, 0, Purpose::Generate);
        for k in 1..=4 {
            for _ in 0..25 {
                let case = completeness_case(k, &mut r).unwrap();
                assert_eq!(case.cvrs.len(), k);
                let star = case.cvrs.iter().find(|c| c.label == case.truthful).unwrap();
                let class = consistency_class(&star.cvr, &case.election).unwrap();
                assert!(matches!(class, ConsistencyClass::Canonical | ConsistencyClass::Consistent), "{class:?}");
                assert_eq!(star.cvr.declared_outcome().winner, case.election.conservative_outcome().unwrap().winner);
                let v = case.run(&EnvKind::Honest, 3, 9).unwrap();
                assert!(v.requests <= 3 * (k * (k - 1)) as u64);
            }
        }
    }

    #[test]
    fn imperfect_case_matches_its_parameters() {
        let setup = ImperfectSetup::PUBLISHED;
        assert!((setup.epsilon() - 0.01).abs() < 1e-12);
        assert!((setup.declared_margin() - 0.08).abs() < 1e-12);
        let case = imperfect_case(setup, &mut rng(1, 0, Purpose::Generate)).unwrap();
        let (star, rival) = (&case.cvrs[0].cvr, &case.cvrs[1].cvr);
        assert!((star.declared_outcome().margin - 0.08).abs() < 1e-12);
        assert_eq!(rival.declared_outcome().winner, Some(LOSER));
        assert_eq!(disagreement(star, rival).unwrap().disagree.len(), 41);
        assert_eq!(case.election.conservative_outcome().unwrap().winner, Some(WINNER));
    }
}
