//! Concrete two-candidate elections realizing the error model, with CVRs of
//! a chosen fidelity.
//!
//! Category counts are fixed fractions of `S` rather than random, so a
//! uniform draw from the generated CVR has exactly the stream's law.

use rand::seq::SliceRandom;
use rla_core::cvr::{BayesianCvr, BayesianRow, ConservativeCvr, ConservativeRow, Cvr};
use rla_core::election::{
    Ballot, CandidateId, CandidateSet, Election, Interpretation, InterpretationDistribution, InterpretationSet,
};
use rla_core::seeds::{self, Purpose};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ApproachKind, ErrorModel};

pub const LOSER: CandidateId = CandidateId(0);
pub const WINNER: CandidateId = CandidateId(1);

pub fn two_candidates() -> CandidateSet {
    CandidateSet::new(["L", "W"]).expect("static names")
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Fidelity {
    /// The error model's own CVR in the approach's convention.
    Model,
    /// The canonical conservative CVR.
    Canonical,
    /// Canonical except on `⌊ε·S⌋` rows, which list a reading the ballot
    /// cannot have.
    Consistent { epsilon: f64 },
    /// A conservative CVR that declares `target` the winner.
    Adversarial { target: String },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Category {
    Winner,
    Loser,
    Blank,
    O1,
    U1,
    O2,
    U2,
    Marginal,
}

#[derive(Clone, Debug)]
pub struct GeneratedCase {
    pub election: Election,
    pub cvr: Cvr,
}

fn count(rate: f64, size: usize, what: &str) -> Result<usize> {
    let x = rate * size as f64;
    let r = x.round();
    if (x - r).abs() > 1e-6 {
        return Err(Error::Infeasible(format!("{what}·S = {x} is not a whole number of ballots")));
    }
    Ok(r as usize)
}

fn categories(model: &ErrorModel) -> Result<Vec<Category>> {
    model.validate()?;
    let s = model.size;
    let n_m = count(model.marginal_rate, s, "m")?;
    let (n_o1, n_u1) = (count(model.o1, s, "o1")?, count(model.u1, s, "u1")?);
    let (n_o2, n_u2) = (count(model.o2, s, "o2")?, count(model.u2, s, "u2")?);
    let lead = count(model.margin, s, "margin")? as i64;
    let regular = (s - n_m - n_o1 - n_u1 - n_o2 - n_u2) as i64;
    // unambiguous rows supply whatever lead the error rows do not
    let gap = lead - n_o1 as i64 - n_o2 as i64 + n_u2 as i64;
    let blanks = (regular - gap).rem_euclid(2);
    let n_w = (regular - blanks + gap) / 2;
    let n_l = regular - blanks - n_w;
    if n_w < 0 || n_l < 0 {
        return Err(Error::Infeasible(format!(
            "margin {} cannot be realized with {regular} unambiguous ballots",
            model.margin
        )));
    }
    let mut out = Vec::with_capacity(s);
    for (c, n) in [
        (Category::Winner, n_w as usize),
        (Category::Loser, n_l as usize),
        (Category::Blank, blanks as usize),
        (Category::O1, n_o1),
        (Category::U1, n_u1),
        (Category::O2, n_o2),
        (Category::U2, n_u2),
        (Category::Marginal, n_m),
    ] {
        out.extend(std::iter::repeat_n(c, n));
    }
    Ok(out)
}

fn truth(c: Category, p_audit: f64) -> InterpretationDistribution {
    let w = Interpretation::vote_for(WINNER);
    let point = InterpretationDistribution::point;
    match c {
        Category::Winner | Category::U1 | Category::U2 => point(w),
        Category::Loser | Category::O2 => point(Interpretation::vote_for(LOSER)),
        Category::Blank | Category::O1 => point(Interpretation::UNDERVOTE),
        Category::Marginal => InterpretationDistribution::new([(w, p_audit), (Interpretation::UNDERVOTE, 1.0 - p_audit)])
            .expect("two-point distribution"),
    }
}

/// Reading the model's CVR records for an unambiguous or error row.
fn recorded(c: Category) -> Interpretation {
    match c {
        Category::Winner | Category::O1 | Category::O2 => Interpretation::vote_for(WINNER),
        Category::Loser | Category::U2 => Interpretation::vote_for(LOSER),
        Category::Blank | Category::U1 => Interpretation::UNDERVOTE,
        Category::Marginal => unreachable!("marginal rows depend on the approach"),
    }
}

pub fn ballot_id(i: usize) -> String {
    format!("{i:06}")
}

pub fn gen_election_and_cvrs(model: &ErrorModel, approach: ApproachKind, fidelity: &Fidelity, seed: u64) -> Result<GeneratedCase> {
    let mut cats = categories(model)?;
    let mut rng = seeds::rng(seed, 0, Purpose::Generate);
    cats.shuffle(&mut rng);
    let cs = two_candidates();
    let ballots: Vec<Ballot> = cats
        .iter()
        .enumerate()
        .map(|(i, &c)| Ballot::bayesian(ballot_id(i), truth(c, model.p_audit)))
        .collect();
    let election = Election::new(cs.clone(), ballots)?;
    let w = Interpretation::vote_for(WINNER);

    let cvr = match fidelity {
        Fidelity::Model => {
            let n_m = cats.iter().filter(|&&c| c == Category::Marginal).count();
            // baseline rows read as winner votes, as near p_cvr as whole rows allow
            let baseline_w = (model.p_cvr * n_m as f64).round() as usize;
            let mut marginal_seen = 0;
            match approach {
                ApproachKind::Baseline | ApproachKind::Bayesian => {
                    let rows = cats
                        .iter()
                        .enumerate()
                        .map(|(i, &c)| {
                            let prediction = match c {
                                Category::Marginal if approach == ApproachKind::Bayesian => {
                                    InterpretationDistribution::new([
                                        (w, model.p_cvr),
                                        (Interpretation::UNDERVOTE, 1.0 - model.p_cvr),
                                    ])?
                                }
                                Category::Marginal => {
                                    marginal_seen += 1;
                                    let reads_w = marginal_seen <= baseline_w;
                                    InterpretationDistribution::point(if reads_w { w } else { Interpretation::UNDERVOTE })
                                }
                                other => InterpretationDistribution::point(recorded(other)),
                            };
                            Ok(BayesianRow {
                                id: ballot_id(i),
                                prediction,
                            })
                        })
                        .collect::<rla_core::Result<Vec<_>>>()?;
                    Cvr::Bayesian(BayesianCvr::new(cs, rows)?)
                }
                ApproachKind::Conservative => {
                    let rows = cats
                        .iter()
                        .enumerate()
                        .map(|(i, &c)| ConservativeRow {
                            id: ballot_id(i),
                            interpretations: match c {
                                Category::Marginal => InterpretationSet::new([w, Interpretation::UNDERVOTE])
                                    .expect("two readings"),
                                other => InterpretationSet::singleton(recorded(other)),
                            },
                        })
                        .collect();
                    Cvr::Conservative(ConservativeCvr::new(cs, rows)?)
                }
            }
        }
        Fidelity::Canonical => Cvr::Conservative(ConservativeCvr::canonical(&election)?),
        Fidelity::Consistent { epsilon } => {
            if !(0.0..=1.0).contains(epsilon) {
                return Err(Error::Infeasible(format!("epsilon {epsilon} outside [0, 1]")));
            }
            let bad = (epsilon * election.size() as f64).floor() as usize;
            let mut rows = ConservativeCvr::canonical(&election)?.rows().to_vec();
            let mut order: Vec<usize> = (0..rows.len()).collect();
            order.shuffle(&mut rng);
            for &r in order.iter().take(bad) {
                rows[r].interpretations = InterpretationSet::singleton(impossible_reading(election.ballot(r)));
            }
            Cvr::Conservative(ConservativeCvr::new(cs, rows)?)
        }
        Fidelity::Adversarial { target } => {
            let target = cs.id(target)?;
            let claim = InterpretationSet::singleton(Interpretation::vote_for(target));
            let mut cvr = ConservativeCvr::canonical(&election)?;
            let mut order: Vec<usize> = (0..cvr.size()).collect();
            order.shuffle(&mut rng);
            let mut rows = cvr.rows().to_vec();
            for &r in &order {
                if cvr.declared_outcome().winner == Some(target) {
                    break;
                }
                if rows[r].interpretations != claim {
                    rows[r].interpretations = claim.clone();
                    cvr = ConservativeCvr::new(cs.clone(), rows.clone())?;
                }
            }
            if cvr.declared_outcome().winner != Some(target) {
                return Err(Error::Infeasible("target cannot be made the declared winner".into()));
            }
            Cvr::Conservative(cvr)
        }
    };
    Ok(GeneratedCase { election, cvr })
}

/// A single reading outside the ballot's possible set, preferring a
/// winner vote.
pub fn impossible_reading(ballot: &Ballot) -> Interpretation {
    let t = ballot.possible_interpretations();
    [
        Interpretation::vote_for(WINNER),
        Interpretation::vote_for(LOSER),
        Interpretation::UNDERVOTE,
        Interpretation::with_marks([LOSER, WINNER]),
    ]
    .into_iter()
    .find(|&i| !t.contains(i))
    .expect("a ballot has at most three readings here")
}

#[cfg(test)]
mod tests {
    use super::*;
    use rla_core::cvr::{conservative_validity, consistency_class, consistency_report, ConsistencyClass, Validity};
    use rla_core::discrepancy::RowTerms;

    fn small() -> ErrorModel {
        ErrorModel { size: 10_000, ..ErrorModel::published(0.01, 0.5) }
    }

    #[test]
    fn model_cvr_has_declared_margin_and_row_law() {
        let m = ErrorModel::published(0.01, 0.5);
        for approach in ApproachKind::ALL {
            let case = gen_election_and_cvrs(&m, approach, &Fidelity::Model, 4).unwrap();
            let (margin, terms): (f64, Vec<RowTerms>) = match &case.cvr {
                Cvr::Bayesian(c) => {
                    let o = c.declared_outcome().unwrap();
                    assert_eq!(o.winner, Some(WINNER));
                    (o.margin, c.rows().iter().map(|r| RowTerms::bayesian(&r.prediction, WINNER, 2).unwrap()).collect())
                }
                Cvr::Conservative(c) => {
                    let o = c.declared_outcome();
                    assert_eq!(o.winner, Some(WINNER));
                    (o.margin, c.rows().iter().map(|r| RowTerms::conservative(&r.interpretations, WINNER, 2).unwrap()).collect())
                }
            };
            assert!((margin - m.declared_margin(approach)).abs() < 1e-9, "{approach}: {margin}");
            // expected discrepancy per row matches the stream's mean
            let mean: f64 = terms
                .iter()
                .zip(case.election.ballots())
                .map(|(t, b)| {
                    let d = b.distribution().unwrap();
                    d.entries().iter().map(|&(i, p)| p * t.discrepancy(Some(i))).sum::<f64>()
                })
                .sum::<f64>()
                / m.size as f64;
            let expected = m.o1 - m.u1 + 2.0 * (m.o2 - m.u2)
                + m.marginal_rate
                    * match approach {
                        ApproachKind::Conservative => -m.p_audit,
                        _ => m.p_cvr - m.p_audit,
                    };
            assert!((mean - expected).abs() < 1e-12, "{approach}: {mean} vs {expected}");
        }
    }

    #[test]
    fn marginal_count_is_exact() {
        let case = gen_election_and_cvrs(&ErrorModel::published(0.01, 0.5), ApproachKind::Bayesian, &Fidelity::Model, 0).unwrap();
        let marginal = case.election.ballots().iter().filter(|b| !b.distribution().unwrap().is_point_mass()).count();
        assert_eq!(marginal, 500);
    }

    #[test]
    fn fidelities() {
        let m = small();
        let canon = gen_election_and_cvrs(&m, ApproachKind::Conservative, &Fidelity::Canonical, 1).unwrap();
        let c = canon.cvr.clone().into_conservative().unwrap();
        assert_eq!(consistency_class(&c, &canon.election).unwrap(), ConsistencyClass::Canonical);

        let eps = gen_election_and_cvrs(&m, ApproachKind::Conservative, &Fidelity::Consistent { epsilon: 0.01 }, 1).unwrap();
        let c = eps.cvr.into_conservative().unwrap();
        assert_eq!(consistency_report(&c, &eps.election).unwrap().inconsistent_rows, 100);

        let adv = gen_election_and_cvrs(&m, ApproachKind::Conservative, &Fidelity::Adversarial { target: "L".into() }, 1).unwrap();
        let c = adv.cvr.into_conservative().unwrap();
        assert_eq!(c.declared_outcome().winner, Some(LOSER));
        let truth = adv.election.to_conservative();
        assert_eq!(truth.conservative_outcome().unwrap().winner, Some(WINNER));
        assert_eq!(conservative_validity(&c, &truth).unwrap(), Validity::Invalid);

        assert!(gen_election_and_cvrs(&m, ApproachKind::Conservative, &Fidelity::Consistent { epsilon: 1.5 }, 1).is_err());
        let odd = ErrorModel { size: 333, ..m };
        assert!(matches!(gen_election_and_cvrs(&odd, ApproachKind::Baseline, &Fidelity::Model, 0), Err(Error::Infeasible(_))));
    }
}
