//! Cast-vote-record tables in the Bayesian (per-row distribution) and
//! conservative (per-row interpretation set) conventions.
//!
//! A CVR of the wrong size or with repeated identifiers is representable on
//! purpose: auditors are the ones that reject such tables, and they must see
//! them as submitted.

use std::collections::{HashMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::election::{
    CandidateId, CandidateSet, Election, Interpretation, InterpretationDistribution,
    InterpretationSet,
};
use crate::error::{Error, Result};
use crate::tally::{self, Outcome};

pub const SCHEMA_VERSION: &str = "1";

/// Winner, declared margin, and losers according to a CVR.
pub type DeclaredOutcome = Outcome;

#[derive(Clone, Debug, PartialEq)]
pub struct BayesianRow {
    pub id: String,
    pub prediction: InterpretationDistribution,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConservativeRow {
    pub id: String,
    pub interpretations: InterpretationSet,
}

impl ConservativeRow {
    /// (least, most) favorable vote for `c` over the row's declared set.
    pub fn limits(&self, c: CandidateId) -> (u8, u8) {
        (
            self.interpretations.min_vote(c),
            self.interpretations.max_vote(c),
        )
    }
}

/// Maps each identifier to its first row; also reports whether any repeats.
fn index_ids<'a>(ids: impl Iterator<Item = &'a str>) -> (HashMap<String, usize>, bool) {
    let mut map = HashMap::new();
    let mut repeated = false;
    for (i, id) in ids.enumerate() {
        if map.contains_key(id) {
            repeated = true;
        } else {
            map.insert(id.to_string(), i);
        }
    }
    (map, repeated)
}

/// Bayesian CVR: one predicted interpretation distribution per row.
#[derive(Clone, Debug)]
pub struct BayesianCvr {
    candidates: CandidateSet,
    rows: Vec<BayesianRow>,
    first_row: HashMap<String, usize>,
    repeated: bool,
}

impl BayesianCvr {
    pub fn new(candidates: CandidateSet, rows: Vec<BayesianRow>) -> Result<Self> {
        let width = candidates.len();
        for r in &rows {
            if !r.prediction.support().fits(width) {
                return Err(Error::BadInterpretation {
                    bits: format!("row {}", r.id),
                    width,
                });
            }
        }
        let (first_row, repeated) = index_ids(rows.iter().map(|r| r.id.as_str()));
        Ok(Self {
            candidates,
            rows,
            first_row,
            repeated,
        })
    }

    /// CVR whose rows copy each ballot's ground-truth distribution.
    pub fn from_election(election: &Election) -> Result<Self> {
        let rows = election
            .ballots()
            .iter()
            .map(|b| {
                b.distribution()
                    .map(|d| BayesianRow {
                        id: b.id.clone(),
                        prediction: d.clone(),
                    })
                    .ok_or(Error::ModeMismatch)
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(election.candidates().clone(), rows)
    }

    pub fn candidates(&self) -> &CandidateSet {
        &self.candidates
    }

    pub fn rows(&self) -> &[BayesianRow] {
        &self.rows
    }

    pub fn row(&self, r: usize) -> &BayesianRow {
        &self.rows[r]
    }

    /// S_cvr, the number of rows.
    pub fn size(&self) -> usize {
        self.rows.len()
    }

    pub fn has_repeated_identifiers(&self) -> bool {
        self.repeated
    }

    pub fn row_of(&self, id: &str) -> Option<usize> {
        self.first_row.get(id).copied()
    }

    pub fn identifiers(&self) -> HashSet<&str> {
        self.rows.iter().map(|r| r.id.as_str()).collect()
    }

    /// cvr(A): the sum of predicted expected votes for `c`.
    pub fn total(&self, c: CandidateId) -> f64 {
        self.rows.iter().map(|r| r.prediction.expected_vote(c)).sum()
    }

    pub fn totals(&self) -> Vec<f64> {
        self.candidates.ids().map(|c| self.total(c)).collect()
    }

    pub fn declared_outcome(&self) -> Result<DeclaredOutcome> {
        if self.rows.is_empty() {
            return Err(Error::Degenerate);
        }
        Ok(tally::expected_outcome(&self.totals(), self.size()))
    }
}

/// Conservative CVR: one declared interpretation set per row.
#[derive(Clone, Debug)]
pub struct ConservativeCvr {
    candidates: CandidateSet,
    rows: Vec<ConservativeRow>,
    first_row: HashMap<String, usize>,
    repeated: bool,
    /// The submitting advocate announced that ballot labels repeat.
    pub duplicate_labels_announced: bool,
}

impl ConservativeCvr {
    pub fn new(candidates: CandidateSet, rows: Vec<ConservativeRow>) -> Result<Self> {
        let width = candidates.len();
        for r in &rows {
            if !r.interpretations.fits(width) {
                return Err(Error::BadInterpretation {
                    bits: format!("row {}", r.id),
                    width,
                });
            }
        }
        let (first_row, repeated) = index_ids(rows.iter().map(|r| r.id.as_str()));
        Ok(Self {
            candidates,
            rows,
            first_row,
            repeated,
            duplicate_labels_announced: false,
        })
    }

    /// The canonical CVR: each ballot's possible interpretations, in ballot order.
    pub fn canonical(election: &Election) -> Result<Self> {
        let rows = election
            .ballots()
            .iter()
            .map(|b| ConservativeRow {
                id: b.id.clone(),
                interpretations: b.possible_interpretations().clone(),
            })
            .collect();
        Self::new(election.candidates().clone(), rows)
    }

    /// Replaces each distribution by its support.
    pub fn from_bayesian(cvr: &BayesianCvr) -> Result<Self> {
        let rows = cvr
            .rows()
            .iter()
            .map(|r| ConservativeRow {
                id: r.id.clone(),
                interpretations: r.prediction.support(),
            })
            .collect();
        Self::new(cvr.candidates().clone(), rows)
    }

    pub fn with_duplicate_labels_announced(mut self, announced: bool) -> Self {
        self.duplicate_labels_announced = announced;
        self
    }

    pub fn candidates(&self) -> &CandidateSet {
        &self.candidates
    }

    pub fn rows(&self) -> &[ConservativeRow] {
        &self.rows
    }

    pub fn row(&self, r: usize) -> &ConservativeRow {
        &self.rows[r]
    }

    pub fn size(&self) -> usize {
        self.rows.len()
    }

    pub fn has_repeated_identifiers(&self) -> bool {
        self.repeated
    }

    /// First row carrying `id`.
    pub fn row_of(&self, id: &str) -> Option<usize> {
        self.first_row.get(id).copied()
    }

    pub fn contains_id(&self, id: &str) -> bool {
        self.first_row.contains_key(id)
    }

    pub fn identifiers(&self) -> HashSet<&str> {
        self.rows.iter().map(|r| r.id.as_str()).collect()
    }

    /// (cvr◔(c), cvr◕(c)).
    pub fn totals(&self, c: CandidateId) -> (u64, u64) {
        self.rows.iter().fold((0, 0), |(lo, hi), r| {
            let (l, h) = r.limits(c);
            (lo + u64::from(l), hi + u64::from(h))
        })
    }

    pub fn declared_outcome(&self) -> DeclaredOutcome {
        let (lo, hi): (Vec<f64>, Vec<f64>) = self
            .candidates
            .ids()
            .map(|c| {
                let (l, h) = self.totals(c);
                (l as f64, h as f64)
            })
            .unzip();
        tally::limits_outcome(&lo, &hi, self.size())
    }
}

/// True iff some candidate is a declared winner of one CVR and a declared
/// loser of the other.
pub fn contradictory(c1: &ConservativeCvr, c2: &ConservativeCvr) -> Result<bool> {
    if c1.candidates() != c2.candidates() {
        return Err(Error::CandidateMismatch);
    }
    Ok(outcomes_contradict(&c1.declared_outcome(), &c2.declared_outcome()))
}

pub fn outcomes_contradict(o1: &DeclaredOutcome, o2: &DeclaredOutcome) -> bool {
    let beats = |a: &Outcome, b: &Outcome| a.winner.is_some_and(|w| b.is_loser(w));
    beats(o1, o2) || beats(o2, o1)
}

/// How a conservative CVR relates to a uniquely labeled election.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "class")]
pub enum ConsistencyClass {
    Canonical,
    Consistent,
    /// Right size, but `bad_ids` identifiers have no ballot whose possible
    /// interpretations the row covers. The CVR is (1 - bad_ids/S)-consistent.
    Inconsistent { bad_ids: usize },
    WrongSize,
}

/// Row-level consistency counts; see [`consistency_class`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConsistencyReport {
    pub size_matches: bool,
    /// Rows with no matching ballot whose set the row covers.
    pub inconsistent_rows: usize,
    /// Rows with no matching ballot whose set equals the row's.
    pub non_canonical_rows: usize,
}

pub fn consistency_report(cvr: &ConservativeCvr, election: &Election) -> Result<ConsistencyReport> {
    if !election.is_uniquely_labeled() {
        return Err(Error::NotUniquelyLabeled);
    }
    if cvr.candidates() != election.candidates() {
        return Err(Error::CandidateMismatch);
    }
    let mut seen = HashSet::new();
    let mut inconsistent_rows = 0;
    let mut non_canonical_rows = 0;
    for row in cvr.rows() {
        // a repeated row cannot be matched to a second ballot
        let fresh = seen.insert(row.id.as_str());
        let ballot = election
            .ballots_with_id(&row.id)
            .first()
            .map(|&i| election.ballot(i).possible_interpretations());
        match ballot {
            Some(t) if fresh => {
                if !t.is_subset(&row.interpretations) {
                    inconsistent_rows += 1;
                }
                if *t != row.interpretations {
                    non_canonical_rows += 1;
                }
            }
            _ => {
                inconsistent_rows += 1;
                non_canonical_rows += 1;
            }
        }
    }
    Ok(ConsistencyReport {
        size_matches: cvr.size() == election.size(),
        inconsistent_rows,
        non_canonical_rows,
    })
}

pub fn consistency_class(cvr: &ConservativeCvr, election: &Election) -> Result<ConsistencyClass> {
    let r = consistency_report(cvr, election)?;
    Ok(if !r.size_matches {
        ConsistencyClass::WrongSize
    } else if r.non_canonical_rows == 0 {
        ConsistencyClass::Canonical
    } else if r.inconsistent_rows == 0 {
        ConsistencyClass::Consistent
    } else {
        ConsistencyClass::Inconsistent {
            bad_ids: r.inconsistent_rows,
        }
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Validity {
    Valid,
    Invalid,
    /// The CVR declares no winner, so it is neither valid nor invalid.
    Neither,
}

fn validity_of(truth: &Outcome, declared: &Outcome) -> Validity {
    match (declared.winner, truth.winner) {
        (None, _) => Validity::Neither,
        (Some(d), Some(w)) if d == w => Validity::Valid,
        _ => Validity::Invalid,
    }
}

pub fn bayesian_validity(cvr: &BayesianCvr, election: &Election) -> Result<Validity> {
    if cvr.candidates() != election.candidates() {
        return Err(Error::CandidateMismatch);
    }
    let declared = cvr.declared_outcome()?;
    Ok(validity_of(&election.bayesian_outcome()?, &declared))
}

/// Conservative validity is only meaningful when the election itself has a
/// conservative winner; against an indeterminate election a CVR that
/// declares a winner is reported as [`Validity::Neither`].
pub fn conservative_validity(cvr: &ConservativeCvr, election: &Election) -> Result<Validity> {
    if cvr.candidates() != election.candidates() {
        return Err(Error::CandidateMismatch);
    }
    let truth = election.conservative_outcome()?;
    if truth.winner.is_none() {
        return Ok(Validity::Neither);
    }
    Ok(validity_of(&truth, &cvr.declared_outcome()))
}

// ---------------------------------------------------------------------------
// Serialization

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CvrMode {
    Bayesian,
    Conservative,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CvrDoc {
    schema_version: String,
    mode: CvrMode,
    candidates: Vec<String>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    duplicate_labels_announced: bool,
    rows: Vec<RowDoc>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RowDoc {
    id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    dist: Option<Vec<DistEntryDoc>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    interps: Option<Vec<String>>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub(crate) struct DistEntryDoc {
    pub(crate) interp: String,
    pub(crate) p: String,
}

/// A CVR of either convention, as read from a file.
#[derive(Clone, Debug)]
pub enum Cvr {
    Bayesian(BayesianCvr),
    Conservative(ConservativeCvr),
}

impl Cvr {
    pub fn mode(&self) -> CvrMode {
        match self {
            Cvr::Bayesian(_) => CvrMode::Bayesian,
            Cvr::Conservative(_) => CvrMode::Conservative,
        }
    }

    pub fn candidates(&self) -> &CandidateSet {
        match self {
            Cvr::Bayesian(c) => c.candidates(),
            Cvr::Conservative(c) => c.candidates(),
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: CvrDoc = serde_json::from_str(text)?;
        if doc.schema_version != SCHEMA_VERSION {
            return Err(Error::Parse(format!(
                "unsupported schema_version {:?}",
                doc.schema_version
            )));
        }
        let candidates = CandidateSet::from_ordered(doc.candidates)?;
        let width = candidates.len();
        match doc.mode {
            CvrMode::Bayesian => {
                if doc.duplicate_labels_announced {
                    return Err(Error::Parse(
                        "duplicate_labels_announced applies to conservative CVRs".into(),
                    ));
                }
                let rows = doc
                    .rows
                    .into_iter()
                    .map(|r| {
                        let dist = match (r.dist, r.interps) {
                            (Some(d), None) => d,
                            _ => return Err(Error::Parse(format!("row {:?} needs `dist` only", r.id))),
                        };
                        let entries = dist
                            .iter()
                            .map(|e| {
                                let p: f64 = e.p.trim().parse().map_err(|_| {
                                    Error::Parse(format!("bad probability {:?}", e.p))
                                })?;
                                Ok((Interpretation::parse(&e.interp, width)?, p))
                            })
                            .collect::<Result<Vec<_>>>()?;
                        Ok(BayesianRow {
                            id: r.id,
                            prediction: InterpretationDistribution::new(entries)?,
                        })
                    })
                    .collect::<Result<Vec<_>>>()?;
                Ok(Cvr::Bayesian(BayesianCvr::new(candidates, rows)?))
            }
            CvrMode::Conservative => {
                let rows = doc
                    .rows
                    .into_iter()
                    .map(|r| {
                        let interps = match (r.dist, r.interps) {
                            (None, Some(i)) => i,
                            _ => return Err(Error::Parse(format!("row {:?} needs `interps` only", r.id))),
                        };
                        let set = interps
                            .iter()
                            .map(|s| Interpretation::parse(s, width))
                            .collect::<Result<Vec<_>>>()?;
                        Ok(ConservativeRow {
                            id: r.id,
                            interpretations: InterpretationSet::new(set)?,
                        })
                    })
                    .collect::<Result<Vec<_>>>()?;
                Ok(Cvr::Conservative(
                    ConservativeCvr::new(candidates, rows)?
                        .with_duplicate_labels_announced(doc.duplicate_labels_announced),
                ))
            }
        }
    }

    /// Canonical pretty JSON with a trailing newline. Probabilities use the
    /// shortest decimal that round-trips.
    pub fn to_json(&self) -> String {
        let width = self.candidates().len();
        let doc = match self {
            Cvr::Bayesian(c) => CvrDoc {
                schema_version: SCHEMA_VERSION.into(),
                mode: CvrMode::Bayesian,
                candidates: c.candidates().names().to_vec(),
                duplicate_labels_announced: false,
                rows: c
                    .rows()
                    .iter()
                    .map(|r| RowDoc {
                        id: r.id.clone(),
                        dist: Some(
                            r.prediction
                                .entries()
                                .iter()
                                .map(|(i, p)| DistEntryDoc {
                                    interp: i.to_bit_string(width),
                                    p: format!("{p}"),
                                })
                                .collect(),
                        ),
                        interps: None,
                    })
                    .collect(),
            },
            Cvr::Conservative(c) => CvrDoc {
                schema_version: SCHEMA_VERSION.into(),
                mode: CvrMode::Conservative,
                candidates: c.candidates().names().to_vec(),
                duplicate_labels_announced: c.duplicate_labels_announced,
                rows: c
                    .rows()
                    .iter()
                    .map(|r| RowDoc {
                        id: r.id.clone(),
                        dist: None,
                        interps: Some(
                            r.interpretations
                                .iter()
                                .map(|i| i.to_bit_string(width))
                                .collect(),
                        ),
                    })
                    .collect(),
            },
        };
        let mut out = serde_json::to_string_pretty(&doc).expect("CVR serializes");
        out.push('\n');
        out
    }

    pub fn into_bayesian(self) -> Result<BayesianCvr> {
        match self {
            Cvr::Bayesian(c) => Ok(c),
            Cvr::Conservative(_) => Err(Error::ModeMismatch),
        }
    }

    pub fn into_conservative(self) -> Result<ConservativeCvr> {
        match self {
            Cvr::Conservative(c) => Ok(c),
            Cvr::Bayesian(_) => Err(Error::ModeMismatch),
        }
    }
}

/// Header of the flat one-column-per-candidate export.
const NO_VOTE_COLUMN: &str = "No Vote";

/// Reads the flat tabular form: an `id` column, one column per candidate
/// holding the row's expected vote for that candidate, and optionally a
/// `No Vote` column. Each row becomes a distribution over single-candidate
/// votes plus an undervote carrying the remaining mass, so overvotes and
/// undervotes are not distinguished.
pub fn read_flat_bayesian_csv<R: std::io::Read>(reader: R) -> Result<BayesianCvr> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    if headers.get(0) != Some("id") {
        return Err(Error::Parse("first column must be `id`".into()));
    }
    let mut no_vote_col = None;
    let mut names = Vec::new();
    for (i, h) in headers.iter().enumerate().skip(1) {
        if h == NO_VOTE_COLUMN {
            no_vote_col = Some(i);
        } else {
            names.push((i, h.to_string()));
        }
    }
    let candidates = CandidateSet::new(names.iter().map(|(_, n)| n.clone()))?;
    let mut rows = Vec::new();
    for record in rdr.records() {
        let record = record?;
        let cell = |i: usize| -> Result<f64> {
            let raw = record.get(i).unwrap_or("");
            if raw.is_empty() {
                return Ok(0.0);
            }
            raw.parse()
                .map_err(|_| Error::Parse(format!("bad probability {raw:?}")))
        };
        let mut entries = Vec::with_capacity(names.len() + 1);
        let mut mass = 0.0;
        for (col, name) in &names {
            let p = cell(*col)?;
            mass += p;
            entries.push((Interpretation::vote_for(candidates.id(name)?), p));
        }
        let residual = 1.0 - mass;
        if let Some(col) = no_vote_col {
            let nv = cell(col)?;
            if (nv - residual).abs() > 1e-6 {
                return Err(Error::NotNormalized(mass + nv));
            }
        }
        if residual < -crate::election::PROBABILITY_TOLERANCE {
            return Err(Error::NotNormalized(mass));
        }
        entries.push((Interpretation::UNDERVOTE, residual.max(0.0)));
        rows.push(BayesianRow {
            id: record.get(0).unwrap_or("").to_string(),
            prediction: InterpretationDistribution::new(entries)?,
        });
    }
    BayesianCvr::new(candidates, rows)
}
