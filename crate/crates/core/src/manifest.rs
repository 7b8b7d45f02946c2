//! File formats for ground-truth elections and ballot manifests.
//!
//! An election file lists every ballot with either its interpretation
//! distribution (`dist`) or its set of possible interpretations (`interps`).
//! A ballot manifest carries only the trusted size.

use serde::{Deserialize, Serialize};

use crate::cvr::{DistEntryDoc, SCHEMA_VERSION};
use crate::election::{Ballot, CandidateSet, Election, Interpretation, InterpretationDistribution, InterpretationSet};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
enum BallotMode {
    Bayesian,
    Conservative,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct BallotDoc {
    id: String,
    mode: BallotMode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    dist: Option<Vec<DistEntryDoc>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    interps: Option<Vec<String>>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ElectionDoc {
    schema_version: String,
    candidates: Vec<String>,
    #[serde(rename = "S")]
    size: usize,
    ballots: Vec<BallotDoc>,
}

fn check_version(v: &str) -> Result<()> {
    if v == SCHEMA_VERSION {
        Ok(())
    } else {
        Err(Error::Parse(format!("unsupported schema_version {v:?}")))
    }
}

pub fn election_from_json(text: &str) -> Result<Election> {
    let doc: ElectionDoc = serde_json::from_str(text)?;
    check_version(&doc.schema_version)?;
    if doc.size != doc.ballots.len() {
        return Err(Error::Parse(format!(
            "S = {} but {} ballots listed",
            doc.size,
            doc.ballots.len()
        )));
    }
    let candidates = CandidateSet::from_ordered(doc.candidates)?;
    let width = candidates.len();
    let ballots = doc
        .ballots
        .into_iter()
        .map(|b| match (b.mode, b.dist, b.interps) {
            (BallotMode::Bayesian, Some(dist), None) => {
                let entries = dist
                    .iter()
                    .map(|e| {
                        let p: f64 = e
                            .p
                            .trim()
                            .parse()
                            .map_err(|_| Error::Parse(format!("bad probability {:?}", e.p)))?;
                        Ok((Interpretation::parse(&e.interp, width)?, p))
                    })
                    .collect::<Result<Vec<_>>>()?;
                Ok(Ballot::bayesian(b.id, InterpretationDistribution::new(entries)?))
            }
            (BallotMode::Conservative, None, Some(interps)) => {
                let set = interps
                    .iter()
                    .map(|s| Interpretation::parse(s, width))
                    .collect::<Result<Vec<_>>>()?;
                Ok(Ballot::conservative(b.id, InterpretationSet::new(set)?))
            }
            (BallotMode::Bayesian, ..) => Err(Error::Parse(format!("ballot {:?} needs `dist` only", b.id))),
            (BallotMode::Conservative, ..) => Err(Error::Parse(format!("ballot {:?} needs `interps` only", b.id))),
        })
        .collect::<Result<Vec<_>>>()?;
    Election::new(candidates, ballots)
}

/// Pretty JSON with a trailing newline.
pub fn election_to_json(election: &Election) -> String {
    let width = election.candidates().len();
    let doc = ElectionDoc {
        schema_version: SCHEMA_VERSION.into(),
        candidates: election.candidates().names().to_vec(),
        size: election.size(),
        ballots: election
            .ballots()
            .iter()
            .map(|b| match b.distribution() {
                Some(d) => BallotDoc {
                    id: b.id.clone(),
                    mode: BallotMode::Bayesian,
                    dist: Some(
                        d.entries()
                            .iter()
                            .map(|(i, p)| DistEntryDoc {
                                interp: i.to_bit_string(width),
                                p: format!("{p}"),
                            })
                            .collect(),
                    ),
                    interps: None,
                },
                None => BallotDoc {
                    id: b.id.clone(),
                    mode: BallotMode::Conservative,
                    dist: None,
                    interps: Some(
                        b.possible_interpretations()
                            .iter()
                            .map(|i| i.to_bit_string(width))
                            .collect(),
                    ),
                },
            })
            .collect(),
    };
    let mut out = serde_json::to_string_pretty(&doc).expect("election serializes");
    out.push('\n');
    out
}

/// The trusted ballot count an audit compares a CVR's size against.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BallotManifest {
    pub schema_version: String,
    #[serde(rename = "S")]
    pub size: usize,
}

impl BallotManifest {
    pub fn new(size: usize) -> Self {
        Self {
            schema_version: SCHEMA_VERSION.into(),
            size,
        }
    }

    pub fn validate(&self) -> Result<()> {
        check_version(&self.schema_version)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = r#"{
  "schema_version": "1",
  "candidates": ["Bugs", "Daffy"],
  "S": 3,
  "ballots": [
    {"id": "a", "mode": "bayesian", "dist": [{"interp": "10", "p": "0.72"}, {"interp": "00", "p": "0.28"}]},
    {"id": "b", "mode": "conservative", "interps": ["01", "00"]},
    {"id": "c", "mode": "bayesian", "dist": [{"interp": "01", "p": "1"}]}
  ]
}"#;

    #[test]
    fn round_trip() {
        let e = election_from_json(SAMPLE).unwrap();
        assert_eq!(e.size(), 3);
        assert!(!e.is_bayesian());
        assert_eq!(e.ballot(1).possible_interpretations().len(), 2);
        let text = election_to_json(&e);
        let again = election_from_json(&text).unwrap();
        assert_eq!(again.ballots(), e.ballots());
        assert_eq!(election_to_json(&again), text);
    }

    #[test]
    fn rejects_bad_documents() {
        let wrong_size = SAMPLE.replace("\"S\": 3", "\"S\": 4");
        assert!(matches!(election_from_json(&wrong_size), Err(Error::Parse(_))));
        let wrong_field = SAMPLE.replace("\"mode\": \"conservative\"", "\"mode\": \"bayesian\"");
        assert!(election_from_json(&wrong_field).is_err());
        let unsorted = SAMPLE.replace("[\"Bugs\", \"Daffy\"]", "[\"Daffy\", \"Bugs\"]");
        assert!(matches!(election_from_json(&unsorted), Err(Error::CandidatesNotSorted(..))));
        let version = SAMPLE.replace("\"1\"", "\"2\"");
        assert!(election_from_json(&version).is_err());
    }

    #[test]
    fn manifest_json() {
        let m: BallotManifest = serde_json::from_str(r#"{"schema_version":"1","S":10}"#).unwrap();
        assert_eq!(m, BallotManifest::new(10));
        m.validate().unwrap();
    }
}
