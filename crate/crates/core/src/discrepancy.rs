//! Per-ballot and whole-CVR discrepancy in both conventions.
//!
//! Discrepancy measures how far a CVR row overstates the declared winner's
//! advantage relative to a ballot. A missing ballot (`None` here) is scored
//! as if it were a vote for every rival.

use serde::{Deserialize, Serialize};

use crate::cvr::{BayesianCvr, ConservativeCvr};
use crate::election::{Ballot, CandidateId, Election, Interpretation, InterpretationDistribution, InterpretationSet};
use crate::error::{Error, Result};

/// Lower end of the sample space.
pub const SIGMA_MIN: f64 = -2.0;
/// Upper end of the sample space.
pub const SIGMA_MAX: f64 = 2.0;

pub fn in_sigma(x: f64) -> bool {
    (SIGMA_MIN..=SIGMA_MAX).contains(&x)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "id")]
pub enum SampleSource {
    Matched(String),
    Missing(String),
}

/// One comparison-experiment outcome.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiscrepancySample {
    pub value: f64,
    pub source: SampleSource,
}

impl DiscrepancySample {
    pub fn new(value: f64, source: SampleSource) -> Result<Self> {
        if !in_sigma(value) {
            return Err(Error::SampleOutOfRange(value));
        }
        Ok(Self { value, source })
    }
}

/// Per-rival margin terms of one CVR row: for each `A != W`, the advantage
/// the row claims for `W` over `A`.
///
/// Bayesian rows claim `P(W) - P(A)` in expectation; conservative rows claim
/// the worst case `min P(W) - max P(A)`. A comparison draw is then
/// `max_A (m_A - (I(W) - I(A)))` against a delivered interpretation `I`,
/// or `max_A m_A + 1` when no matching ballot is delivered.
#[derive(Clone, Debug, PartialEq)]
pub struct RowTerms {
    pub winner: CandidateId,
    pub rivals: Vec<(CandidateId, f64)>,
}

impl RowTerms {
    pub fn bayesian(prediction: &InterpretationDistribution, winner: CandidateId, width: usize) -> Result<Self> {
        check_width(winner, width)?;
        let pw = prediction.expected_vote(winner);
        Ok(Self {
            winner,
            rivals: rivals(winner, width)
                .map(|a| (a, pw - prediction.expected_vote(a)))
                .collect(),
        })
    }

    pub fn conservative(set: &InterpretationSet, winner: CandidateId, width: usize) -> Result<Self> {
        check_width(winner, width)?;
        let pw = f64::from(set.min_vote(winner));
        Ok(Self {
            winner,
            rivals: rivals(winner, width)
                .map(|a| (a, pw - f64::from(set.max_vote(a))))
                .collect(),
        })
    }

    /// Discrepancy against a delivered interpretation, or the missing-ballot
    /// value when `response` is `None`.
    pub fn discrepancy(&self, response: Option<Interpretation>) -> f64 {
        match response {
            Some(i) => self
                .rivals
                .iter()
                .map(|&(a, m)| m - (i.votes(self.winner) - i.votes(a)))
                .fold(f64::NEG_INFINITY, f64::max),
            None => self.missing(),
        }
    }

    pub fn missing(&self) -> f64 {
        self.rivals
            .iter()
            .map(|&(_, m)| m)
            .fold(f64::NEG_INFINITY, f64::max)
            + 1.0
    }
}

fn check_width(winner: CandidateId, width: usize) -> Result<()> {
    if width < 2 {
        return Err(Error::SingleCandidate);
    }
    if winner.0 >= width {
        return Err(Error::CandidateOutOfRange(winner.0));
    }
    Ok(())
}

fn rivals(winner: CandidateId, width: usize) -> impl Iterator<Item = CandidateId> {
    (0..width).map(CandidateId).filter(move |&a| a != winner)
}

/// Bayesian discrepancy of a predicted distribution against a ballot's
/// ground truth (`None` for no ballot).
pub fn bayesian_discrepancy(
    prediction: &InterpretationDistribution,
    ballot: Option<&Ballot>,
    winner: CandidateId,
    width: usize,
) -> Result<f64> {
    let terms = RowTerms::bayesian(prediction, winner, width)?;
    let Some(b) = ballot else {
        return Ok(terms.missing());
    };
    let tw = b.expected_vote(winner)?;
    let mut worst = f64::NEG_INFINITY;
    for &(a, m) in &terms.rivals {
        worst = worst.max(m - (tw - b.expected_vote(a)?));
    }
    Ok(worst)
}

/// D_cvr: the sum over rows of the least discrepancy against any ballot
/// carrying the row's identifier (missing-ballot value if there is none).
pub fn cvr_discrepancy_bayesian(cvr: &BayesianCvr, election: &Election) -> Result<f64> {
    let winner = cvr.declared_outcome()?.winner.ok_or(Error::NoDeclaredWinner)?;
    let width = cvr.candidates().len();
    let mut total = 0.0;
    for row in cvr.rows() {
        let matches = election.ballots_with_id(&row.id);
        let d = if matches.is_empty() {
            bayesian_discrepancy(&row.prediction, None, winner, width)?
        } else {
            let mut best = f64::INFINITY;
            for &i in matches {
                best = best.min(bayesian_discrepancy(&row.prediction, Some(election.ballot(i)), winner, width)?);
            }
            best
        };
        total += d;
    }
    Ok(total)
}

/// Conservative discrepancy of one declared interpretation against a
/// ballot's most favorable limits for the winner and least favorable for
/// each rival.
pub fn conservative_discrepancy(
    interp: Interpretation,
    ballot: Option<&Ballot>,
    winner: CandidateId,
    width: usize,
) -> Result<f64> {
    check_width(winner, width)?;
    let claim = |a: CandidateId| interp.votes(winner) - interp.votes(a);
    let Some(b) = ballot else {
        return Ok(rivals(winner, width).map(claim).fold(f64::NEG_INFINITY, f64::max) + 1.0);
    };
    let (_, w_hi) = b.conservative_limits(winner);
    Ok(rivals(winner, width)
        .map(|a| {
            let (a_lo, _) = b.conservative_limits(a);
            claim(a) - (f64::from(w_hi) - f64::from(a_lo))
        })
        .fold(f64::NEG_INFINITY, f64::max))
}

/// Least conservative discrepancy of a row: minimum over the row's declared
/// interpretations and over every ballot with the row's identifier. The
/// missing-ballot value is used only when no ballot carries the identifier.
pub fn conservative_row_discrepancy(
    set: &InterpretationSet,
    id: &str,
    election: &Election,
    winner: CandidateId,
) -> Result<f64> {
    let width = election.candidates().len();
    let matches = election.ballots_with_id(id);
    let mut best = f64::INFINITY;
    for interp in set.iter() {
        if matches.is_empty() {
            best = best.min(conservative_discrepancy(interp, None, winner, width)?);
        }
        for &i in matches {
            best = best.min(conservative_discrepancy(interp, Some(election.ballot(i)), winner, width)?);
        }
    }
    Ok(best)
}

/// D⁺_cvr, the sum of per-row conservative discrepancies.
pub fn cvr_discrepancy_conservative(cvr: &ConservativeCvr, election: &Election) -> Result<f64> {
    let winner = cvr.declared_outcome().winner.ok_or(Error::NoDeclaredWinner)?;
    cvr.rows()
        .iter()
        .map(|r| conservative_row_discrepancy(&r.interpretations, &r.id, election, winner))
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cvr::{BayesianRow, ConservativeRow};
    use crate::election::CandidateSet;
    use proptest::prelude::*;

    const W: CandidateId = CandidateId(0);
    const L: CandidateId = CandidateId(1);

    fn vw() -> Interpretation {
        Interpretation::vote_for(W)
    }
    fn vl() -> Interpretation {
        Interpretation::vote_for(L)
    }
    fn point(i: Interpretation) -> InterpretationDistribution {
        InterpretationDistribution::point(i)
    }

    #[test]
    fn bayesian_examples() {
        let agree = bayesian_discrepancy(&point(vw()), Some(&Ballot::certain("1", vw())), W, 2).unwrap();
        assert_eq!(agree, 0.0);
        let loser = bayesian_discrepancy(&point(vw()), Some(&Ballot::certain("1", vl())), W, 2).unwrap();
        assert_eq!(loser, 2.0);
        let missing = bayesian_discrepancy(&point(vw()), None, W, 2).unwrap();
        assert_eq!(missing, 2.0);
        assert_eq!(
            bayesian_discrepancy(&point(vw()), None, W, 1),
            Err(Error::SingleCandidate)
        );
    }

    #[test]
    fn marginal_half_prediction() {
        let pred = InterpretationDistribution::new([(vw(), 0.5), (Interpretation::UNDERVOTE, 0.5)]).unwrap();
        let terms = RowTerms::bayesian(&pred, W, 2).unwrap();
        assert_eq!(terms.discrepancy(Some(Interpretation::UNDERVOTE)), 0.5);
        assert_eq!(terms.discrepancy(Some(vw())), -0.5);
        // same thing through the ballot-level definition
        let d = bayesian_discrepancy(&pred, Some(&Ballot::certain("1", vw())), W, 2).unwrap();
        assert_eq!(d, -0.5);
    }

    #[test]
    fn conservative_examples() {
        let env = InterpretationSet::new([vw(), Interpretation::UNDERVOTE]).unwrap();
        let marginal = Ballot::conservative("1", env.clone());
        assert_eq!(conservative_discrepancy(vw(), Some(&marginal), W, 2).unwrap(), 0.0);
        let blank = Ballot::conservative("1", InterpretationSet::singleton(Interpretation::UNDERVOTE));
        assert_eq!(conservative_discrepancy(vw(), Some(&blank), W, 2).unwrap(), 1.0);
        // a row read conservatively as undervote, board reads a vote for W
        let terms = RowTerms::conservative(&env, W, 2).unwrap();
        assert_eq!(terms.discrepancy(Some(vw())), -1.0);
        assert_eq!(terms.discrepancy(Some(Interpretation::UNDERVOTE)), 0.0);
        assert_eq!(conservative_discrepancy(vw(), None, W, 2).unwrap(), 2.0);
    }

    fn election(ballots: Vec<Ballot>) -> Election {
        Election::new(CandidateSet::new(["A", "B"]).unwrap(), ballots).unwrap()
    }

    #[test]
    fn cvr_totals() {
        let e = election(vec![
            Ballot::certain("1", vw()),
            Ballot::certain("2", vw()),
            Ballot::certain("3", vl()),
        ]);
        let canon = BayesianCvr::from_election(&e).unwrap();
        assert_eq!(cvr_discrepancy_bayesian(&canon, &e).unwrap(), 0.0);

        let mut rows = canon.rows().to_vec();
        rows[1].id = "missing".into();
        let cvr = BayesianCvr::new(e.candidates().clone(), rows).unwrap();
        assert_eq!(cvr_discrepancy_bayesian(&cvr, &e).unwrap(), 2.0);

        let tie = BayesianCvr::new(
            e.candidates().clone(),
            vec![
                BayesianRow { id: "1".into(), prediction: point(vw()) },
                BayesianRow { id: "3".into(), prediction: point(vl()) },
            ],
        )
        .unwrap();
        assert_eq!(cvr_discrepancy_bayesian(&tie, &e), Err(Error::NoDeclaredWinner));

        let cons = ConservativeCvr::canonical(&e.to_conservative()).unwrap();
        assert_eq!(cvr_discrepancy_conservative(&cons, &e).unwrap(), 0.0);
        let mut rows = cons.rows().to_vec();
        rows[2].interpretations = InterpretationSet::singleton(vw());
        let cvr = ConservativeCvr::new(e.candidates().clone(), rows).unwrap();
        assert_eq!(cvr_discrepancy_conservative(&cvr, &e).unwrap(), 2.0);
    }

    #[test]
    fn duplicate_ids_take_the_minimum() {
        let e = election(vec![
            Ballot::certain("1", vl()),
            Ballot::certain("1", vw()),
        ]);
        let cvr = BayesianCvr::new(
            e.candidates().clone(),
            vec![BayesianRow { id: "1".into(), prediction: point(vw()) }],
        )
        .unwrap();
        assert_eq!(cvr_discrepancy_bayesian(&cvr, &e).unwrap(), 0.0);
        let cvr = ConservativeCvr::new(
            e.candidates().clone(),
            vec![ConservativeRow { id: "1".into(), interpretations: InterpretationSet::singleton(vw()) }],
        )
        .unwrap();
        assert_eq!(cvr_discrepancy_conservative(&cvr, &e).unwrap(), 0.0);
    }

    fn arb_interp(width: usize) -> impl Strategy<Value = Interpretation> {
        (0u64..(1 << width)).prop_map(Interpretation::from_mask)
    }

    fn arb_set(width: usize) -> impl Strategy<Value = InterpretationSet> {
        prop::collection::vec(arb_interp(width), 1..4).prop_map(|v| InterpretationSet::new(v).unwrap())
    }

    fn arb_dist(width: usize) -> impl Strategy<Value = InterpretationDistribution> {
        prop::collection::vec((arb_interp(width), 1u32..5), 1..4).prop_map(|v| {
            let mut merged: std::collections::BTreeMap<Interpretation, u32> = Default::default();
            for (i, w) in v {
                *merged.entry(i).or_default() += w;
            }
            let total: u32 = merged.values().sum();
            InterpretationDistribution::new(merged.into_iter().map(|(i, w)| (i, f64::from(w) / f64::from(total))))
                .unwrap()
        })
    }

    proptest! {
        #[test]
        fn bayesian_bounds(pred in arb_dist(3), truth in arb_dist(3), w in 0usize..3) {
            let b = Ballot::bayesian("x", truth);
            let d = bayesian_discrepancy(&pred, Some(&b), CandidateId(w), 3).unwrap();
            prop_assert!(in_sigma(d));
            let m = bayesian_discrepancy(&pred, None, CandidateId(w), 3).unwrap();
            prop_assert!(m > -1.0 - 1e-12 && m <= 2.0);
        }

        #[test]
        fn conservative_bounds(interp in arb_interp(3), set in arb_set(3), w in 0usize..3) {
            let b = Ballot::conservative("x", set);
            let d = conservative_discrepancy(interp, Some(&b), CandidateId(w), 3).unwrap();
            prop_assert!(in_sigma(d));
            let m = conservative_discrepancy(interp, None, CandidateId(w), 3).unwrap();
            prop_assert!(m > -1.0 && m <= 2.0);
        }

        #[test]
        fn enlarging_a_row_never_increases_its_discrepancy(
            row in arb_set(3), extra in arb_set(3), truth in arb_set(3), w in 0usize..3,
        ) {
            let e = Election::new(
                CandidateSet::new(["A", "B", "C"]).unwrap(),
                vec![Ballot::conservative("x", truth)],
            ).unwrap();
            let small = conservative_row_discrepancy(&row, "x", &e, CandidateId(w)).unwrap();
            let big = conservative_row_discrepancy(&row.union(&extra), "x", &e, CandidateId(w)).unwrap();
            prop_assert!(big <= small);
        }

        #[test]
        fn point_masses_give_classical_values(p in arb_interp(2), t in arb_interp(2)) {
            let d = bayesian_discrepancy(&point(p), Some(&Ballot::certain("x", t)), W, 2).unwrap();
            prop_assert!([-2.0, -1.0, 0.0, 1.0, 2.0].contains(&d));
            let classical = (p.votes(W) - p.votes(L)) - (t.votes(W) - t.votes(L));
            prop_assert_eq!(d, classical);
        }

        #[test]
        fn row_terms_match_ballot_definition(pred in arb_dist(3), t in arb_interp(3), w in 0usize..3) {
            let terms = RowTerms::bayesian(&pred, CandidateId(w), 3).unwrap();
            let via_ballot = bayesian_discrepancy(&pred, Some(&Ballot::certain("x", t)), CandidateId(w), 3).unwrap();
            prop_assert!((terms.discrepancy(Some(t)) - via_ballot).abs() < 1e-12);
        }
    }
}
