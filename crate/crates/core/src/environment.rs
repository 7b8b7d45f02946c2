//! Environments: the untrusted party that answers ballot requests.
//!
//! An environment sees the requested identifier plus whatever the auditor's
//! request makes public (the row's margin terms for comparison audits, the
//! accused CVR's claim for competitive audits) and answers with one of the
//! election's ballots or with nothing. In the conservative games it may also
//! pick which of the ballot's possible interpretations the board reports.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::discrepancy::RowTerms;
use crate::election::{CandidateId, Election, Interpretation, InterpretationSet};
use crate::error::{Error, Result};

/// Public facts about a request that an adversary may exploit.
#[derive(Clone, Copy, Debug)]
pub enum RequestContext<'a> {
    Comparison {
        /// Margin terms of the sampled CVR row.
        terms: &'a RowTerms,
        /// Whether the reported interpretation is the environment's to pick
        /// (conservative game) or is drawn from the ballot's truth (Bayesian).
        chooses_interpretation: bool,
    },
    Competitive {
        /// Winner declared by the CVR that the sampled ballot can disqualify.
        accused_winner: Option<CandidateId>,
        /// The accused CVR's interpretation set for the requested id, if any.
        accused_set: Option<&'a InterpretationSet>,
    },
}

/// What the environment hands back.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EnvResponse {
    NoBallot,
    /// A ballot of the election by index. `interpretation` is the one the
    /// environment wants reported; `None` lets the ground truth decide, and
    /// the Bayesian game ignores it.
    Ballot {
        index: usize,
        interpretation: Option<Interpretation>,
    },
}

pub trait Environment: Send {
    fn respond(
        &mut self,
        requested_id: &str,
        ctx: RequestContext<'_>,
        election: &Election,
        rng: &mut ChaCha8Rng,
    ) -> EnvResponse;
}

/// Built-in environment families.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum EnvKind {
    /// Always returns the first ballot carrying the requested id.
    Honest,
    /// Refuses each request independently with probability `rate`.
    SuppressRate { rate: f64 },
    /// Refuses requests for the listed ids.
    SuppressIds { ids: BTreeSet<String> },
    /// With probability `rate` hands back a different ballot.
    Mislabel { rate: f64 },
    /// Steers every answer toward the outcome `favor` wants: in comparison
    /// audits it minimizes the realized discrepancy; in competitive audits
    /// it shields CVRs declaring `favor` and disqualifies the rest.
    WorstCase {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        favor: Option<CandidateId>,
    },
    /// Maximizes the realized discrepancy (an unlucky but harmless board).
    Pessimistic,
    /// Hides exactly the ballots that would hurt `favor`'s case.
    SelectiveSuppress {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        favor: Option<CandidateId>,
    },
    /// Never returns a ballot.
    NoBallot,
}

impl fmt::Display for EnvKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let favor = |f: &mut fmt::Formatter<'_>, name: &str, c: &Option<CandidateId>| match c {
            Some(c) => write!(f, "{name}:{}", c.0),
            None => write!(f, "{name}"),
        };
        match self {
            EnvKind::Honest => write!(f, "honest"),
            EnvKind::SuppressRate { rate } => write!(f, "suppress:{rate}"),
            EnvKind::SuppressIds { ids } => {
                write!(f, "suppress-ids:{}", ids.iter().cloned().collect::<Vec<_>>().join(","))
            }
            EnvKind::Mislabel { rate } => write!(f, "mislabel:{rate}"),
            EnvKind::WorstCase { favor: c } => favor(f, "worst-case", c),
            EnvKind::Pessimistic => write!(f, "pessimistic"),
            EnvKind::SelectiveSuppress { favor: c } => favor(f, "selective-suppress", c),
            EnvKind::NoBallot => write!(f, "no-ballot"),
        }
    }
}

impl FromStr for EnvKind {
    type Err = Error;

    /// `honest`, `suppress:RATE`, `suppress-ids:ID,ID`, `mislabel:RATE`,
    /// `worst-case[:CANDIDATE_INDEX]`, `pessimistic`,
    /// `selective-suppress[:CANDIDATE_INDEX]`, `no-ballot`.
    fn from_str(s: &str) -> Result<Self> {
        let unknown = || Error::UnknownEnvironment(s.to_string());
        let (name, arg) = match s.split_once(':') {
            Some((n, a)) => (n, Some(a)),
            None => (s, None),
        };
        let rate = |a: Option<&str>| -> Result<f64> {
            let r: f64 = a.ok_or_else(unknown)?.parse().map_err(|_| unknown())?;
            if (0.0..=1.0).contains(&r) {
                Ok(r)
            } else {
                Err(unknown())
            }
        };
        let favor = |a: Option<&str>| -> Result<Option<CandidateId>> {
            a.map(|x| x.parse().map(CandidateId).map_err(|_| unknown()))
                .transpose()
        };
        Ok(match name {
            "honest" if arg.is_none() => EnvKind::Honest,
            "suppress" => EnvKind::SuppressRate { rate: rate(arg)? },
            "suppress-ids" => EnvKind::SuppressIds {
                ids: arg
                    .ok_or_else(unknown)?
                    .split(',')
                    .filter(|x| !x.is_empty())
                    .map(String::from)
                    .collect(),
            },
            "mislabel" => EnvKind::Mislabel { rate: rate(arg)? },
            "worst-case" => EnvKind::WorstCase { favor: favor(arg)? },
            "pessimistic" if arg.is_none() => EnvKind::Pessimistic,
            "selective-suppress" => EnvKind::SelectiveSuppress { favor: favor(arg)? },
            "no-ballot" if arg.is_none() => EnvKind::NoBallot,
            _ => return Err(unknown()),
        })
    }
}

/// Environments are stateless apart from their randomness, which the
/// harness supplies, so one value per run is all that is needed.
pub fn make_environment(kind: &EnvKind, election: &Election) -> Result<Box<dyn Environment>> {
    if let EnvKind::WorstCase { favor: Some(c) } | EnvKind::SelectiveSuppress { favor: Some(c) } = kind {
        election.candidates().check(*c)?;
    }
    Ok(Box::new(Builtin { kind: kind.clone() }))
}

struct Builtin {
    kind: EnvKind,
}

fn honest(requested_id: &str, election: &Election) -> EnvResponse {
    match election.ballots_with_id(requested_id).first() {
        Some(&index) => EnvResponse::Ballot {
            index,
            interpretation: None,
        },
        None => EnvResponse::NoBallot,
    }
}

/// Candidates for a reported interpretation of ballot `index`.
fn choices(election: &Election, index: usize) -> &InterpretationSet {
    election.ballot(index).possible_interpretations()
}

/// Best (ballot, interpretation) among those with the matching id. When the
/// truth decides the interpretation, a ballot scores its expected
/// discrepancy and the choice only selects among duplicates.
fn extreme(
    requested_id: &str,
    election: &Election,
    terms: &RowTerms,
    chooses_interpretation: bool,
    minimize: bool,
) -> EnvResponse {
    let sign = if minimize { 1.0 } else { -1.0 };
    let mut best: Option<(f64, usize, Option<Interpretation>)> = None;
    let mut consider = |score: f64, index: usize, interp: Option<Interpretation>| {
        if best.is_none_or(|(s, _, _)| sign * score < s) {
            best = Some((sign * score, index, interp));
        }
    };
    for &index in election.ballots_with_id(requested_id) {
        let ballot = election.ballot(index);
        match ballot.distribution() {
            Some(dist) if !chooses_interpretation => {
                let expected = dist
                    .entries()
                    .iter()
                    .map(|&(i, p)| p * terms.discrepancy(Some(i)))
                    .sum();
                consider(expected, index, None);
            }
            _ => {
                for interp in choices(election, index).iter() {
                    consider(terms.discrepancy(Some(interp)), index, Some(interp));
                }
            }
        }
    }
    match best {
        Some((_, index, interpretation)) => EnvResponse::Ballot {
            index,
            interpretation,
        },
        None => EnvResponse::NoBallot,
    }
}

/// The ballot answer that best serves `favor`, plus whether every possible
/// answer would hurt a CVR `favor` wants kept.
fn competitive_choice(
    requested_id: &str,
    election: &Election,
    favor: Option<CandidateId>,
    accused_winner: Option<CandidateId>,
    accused_set: Option<&InterpretationSet>,
) -> (Option<(usize, Interpretation)>, bool) {
    // With no favorite, shield everyone: the most disruptive strategy is to
    // keep every contradiction alive.
    let protect = match favor {
        None => true,
        Some(f) => accused_winner == Some(f),
    };
    let mut shielding = None;
    let mut damaging = None;
    for &index in election.ballots_with_id(requested_id) {
        for interp in choices(election, index).iter() {
            let inside = accused_set.is_some_and(|s| s.contains(interp));
            if inside && shielding.is_none() {
                shielding = Some((index, interp));
            }
            if !inside && damaging.is_none() {
                damaging = Some((index, interp));
            }
        }
    }
    let pick = if protect { shielding } else { damaging.or(shielding) };
    // a delivered ballot can only hurt a protected CVR when no shielding
    // interpretation exists
    let harmful = protect && shielding.is_none() && damaging.is_some();
    (pick, harmful)
}

impl Environment for Builtin {
    fn respond(
        &mut self,
        requested_id: &str,
        ctx: RequestContext<'_>,
        election: &Election,
        rng: &mut ChaCha8Rng,
    ) -> EnvResponse {
        match &self.kind {
            EnvKind::Honest => honest(requested_id, election),
            EnvKind::SuppressRate { rate } => {
                if rng.random::<f64>() < *rate {
                    EnvResponse::NoBallot
                } else {
                    honest(requested_id, election)
                }
            }
            EnvKind::SuppressIds { ids } => {
                if ids.contains(requested_id) {
                    EnvResponse::NoBallot
                } else {
                    honest(requested_id, election)
                }
            }
            EnvKind::Mislabel { rate } => {
                let matching = election.ballots_with_id(requested_id).len();
                if matching < election.size() && rng.random::<f64>() < *rate {
                    // uniform over ballots with another id, by rejection
                    loop {
                        let index = rng.random_range(0..election.size());
                        if election.ballot(index).id != requested_id {
                            break EnvResponse::Ballot {
                                index,
                                interpretation: None,
                            };
                        }
                    }
                } else {
                    honest(requested_id, election)
                }
            }
            EnvKind::NoBallot => EnvResponse::NoBallot,
            EnvKind::Pessimistic => match ctx {
                RequestContext::Comparison {
                    terms,
                    chooses_interpretation,
                } => extreme(requested_id, election, terms, chooses_interpretation, false),
                RequestContext::Competitive { .. } => honest(requested_id, election),
            },
            EnvKind::WorstCase { favor } => match ctx {
                RequestContext::Comparison {
                    terms,
                    chooses_interpretation,
                } => extreme(requested_id, election, terms, chooses_interpretation, true),
                RequestContext::Competitive {
                    accused_winner,
                    accused_set,
                } => {
                    let (pick, _) =
                        competitive_choice(requested_id, election, *favor, accused_winner, accused_set);
                    match pick {
                        Some((index, interp)) => EnvResponse::Ballot {
                            index,
                            interpretation: Some(interp),
                        },
                        None => EnvResponse::NoBallot,
                    }
                }
            },
            EnvKind::SelectiveSuppress { favor } => match ctx {
                RequestContext::Comparison { terms, .. } => {
                    // hide ballots that cannot avoid overstating the winner's
                    // claim by a full vote
                    match extreme(requested_id, election, terms, true, true) {
                        EnvResponse::Ballot {
                            interpretation: Some(i),
                            ..
                        } if terms.discrepancy(Some(i)) >= 1.0 => EnvResponse::NoBallot,
                        _ => honest(requested_id, election),
                    }
                }
                RequestContext::Competitive {
                    accused_winner,
                    accused_set,
                } => {
                    let (_, harmful) =
                        competitive_choice(requested_id, election, *favor, accused_winner, accused_set);
                    if harmful {
                        EnvResponse::NoBallot
                    } else {
                        honest(requested_id, election)
                    }
                }
            },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::election::{Ballot, CandidateSet};
    use rand::SeedableRng;

    fn election() -> Election {
        let cs = CandidateSet::new(["L", "W"]).unwrap();
        let w = Interpretation::vote_for(CandidateId(1));
        let marginal = InterpretationSet::new([w, Interpretation::UNDERVOTE]).unwrap();
        Election::new(
            cs,
            vec![
                Ballot::certain("a", w),
                Ballot::conservative("b", marginal),
            ],
        )
        .unwrap()
    }

    fn rng() -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(0)
    }

    #[test]
    fn parse_round_trip() {
        for s in [
            "honest",
            "suppress:0.25",
            "suppress-ids:1,2",
            "mislabel:0.1",
            "worst-case",
            "worst-case:1",
            "pessimistic",
            "selective-suppress:0",
            "no-ballot",
        ] {
            let k: EnvKind = s.parse().unwrap();
            assert_eq!(k.to_string(), s);
        }
        for bad in ["", "sometimes", "suppress", "suppress:2", "honest:1", "worst-case:x"] {
            assert!(matches!(bad.parse::<EnvKind>(), Err(Error::UnknownEnvironment(_))), "{bad}");
        }
    }

    #[test]
    fn honest_and_suppress_ids() {
        let e = election();
        let terms = RowTerms {
            winner: CandidateId(1),
            rivals: vec![(CandidateId(0), 1.0)],
        };
        let ctx = RequestContext::Comparison { terms: &terms, chooses_interpretation: true };
        let mut env = make_environment(&EnvKind::Honest, &e).unwrap();
        assert_eq!(
            env.respond("b", ctx, &e, &mut rng()),
            EnvResponse::Ballot { index: 1, interpretation: None }
        );
        assert_eq!(env.respond("zz", ctx, &e, &mut rng()), EnvResponse::NoBallot);
        let mut env = make_environment(&"suppress-ids:a".parse().unwrap(), &e).unwrap();
        assert_eq!(env.respond("a", ctx, &e, &mut rng()), EnvResponse::NoBallot);
        assert_eq!(
            env.respond("b", ctx, &e, &mut rng()),
            EnvResponse::Ballot { index: 1, interpretation: None }
        );
    }

    #[test]
    fn worst_case_reads_marginal_as_winner_vote() {
        let e = election();
        // the row declares the marginal ballot an undervote
        let terms = RowTerms::conservative(
            &InterpretationSet::singleton(Interpretation::UNDERVOTE),
            CandidateId(1),
            2,
        )
        .unwrap();
        let ctx = RequestContext::Comparison { terms: &terms, chooses_interpretation: true };
        let mut env = make_environment(&EnvKind::WorstCase { favor: None }, &e).unwrap();
        let r = env.respond("b", ctx, &e, &mut rng());
        let w = Interpretation::vote_for(CandidateId(1));
        assert_eq!(r, EnvResponse::Ballot { index: 1, interpretation: Some(w) });
        assert_eq!(terms.discrepancy(Some(w)), -1.0);
        let mut env = make_environment(&EnvKind::Pessimistic, &e).unwrap();
        let r = env.respond("b", ctx, &e, &mut rng());
        assert_eq!(
            r,
            EnvResponse::Ballot { index: 1, interpretation: Some(Interpretation::UNDERVOTE) }
        );
    }

    #[test]
    fn competitive_shielding() {
        let e = election();
        let l = CandidateId(0);
        let w = CandidateId(1);
        let claim_w = InterpretationSet::singleton(Interpretation::vote_for(w));
        let claim_blank = InterpretationSet::singleton(Interpretation::UNDERVOTE);
        let mut env = make_environment(&EnvKind::WorstCase { favor: Some(l) }, &e).unwrap();
        // accused declares W (not favored): disqualify if possible
        let ctx = RequestContext::Competitive { accused_winner: Some(w), accused_set: Some(&claim_w) };
        assert_eq!(
            env.respond("b", ctx, &e, &mut rng()),
            EnvResponse::Ballot { index: 1, interpretation: Some(Interpretation::UNDERVOTE) }
        );
        // accused declares L (favored): report something inside its claim
        let ctx = RequestContext::Competitive { accused_winner: Some(l), accused_set: Some(&claim_blank) };
        assert_eq!(
            env.respond("b", ctx, &e, &mut rng()),
            EnvResponse::Ballot { index: 1, interpretation: Some(Interpretation::UNDERVOTE) }
        );
        // ballot "a" is a certain W vote: it cannot shield a blank claim, so hide it
        let mut env = make_environment(&EnvKind::SelectiveSuppress { favor: Some(l) }, &e).unwrap();
        assert_eq!(env.respond("a", ctx, &e, &mut rng()), EnvResponse::NoBallot);
    }

    #[test]
    fn suppress_rate_is_roughly_right() {
        let e = election();
        let terms = RowTerms { winner: CandidateId(1), rivals: vec![(CandidateId(0), 1.0)] };
        let ctx = RequestContext::Comparison { terms: &terms, chooses_interpretation: true };
        let mut env = make_environment(&EnvKind::SuppressRate { rate: 0.3 }, &e).unwrap();
        let mut r = rng();
        let n = 20_000;
        let refused = (0..n)
            .filter(|_| env.respond("a", ctx, &e, &mut r) == EnvResponse::NoBallot)
            .count();
        assert!((refused as f64 / n as f64 - 0.3).abs() < 0.02);
    }

    #[test]
    fn favor_must_be_a_candidate() {
        let e = election();
        assert!(make_environment(&EnvKind::WorstCase { favor: Some(CandidateId(9)) }, &e).is_err());
    }
}
