//! Audit sessions as pure state machines: a session is fully determined by
//! its creation request and the ordered list of board responses, which is
//! what makes the append-only log sufficient for recovery.

use std::sync::Arc;

use rla_core::audit::{BoardResponse, ComparisonAuditor, PreparedCvr, Verdict};
use rla_core::competitive::{CompetitiveOutcome, Judge, JudgeConfig, LabeledCvr, PairTally};
use rla_core::cvr::{ConservativeCvr, Cvr, CvrMode, SCHEMA_VERSION};
use rla_core::election::Interpretation;
use rla_core::manifest::BallotManifest;
use rla_core::stattest::KaplanMarkovConfig;
use serde::{Deserialize, Serialize};

use crate::error::{ServiceError, ServiceResult};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SessionMode {
    Bayesian,
    Conservative,
    Competitive,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LabeledCvrDoc {
    pub label: String,
    pub cvr: serde_json::Value,
}

/// Body of `POST /sessions`. The seed is filled in at creation when absent,
/// and the stored request always carries it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CreateSession {
    pub schema_version: String,
    pub mode: SessionMode,
    pub manifest: BallotManifest,
    /// The CVR for comparison sessions, in the CVR file schema.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cvr: Option<serde_json::Value>,
    /// The advocates' CVRs for competitive sessions.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cvrs: Option<Vec<LabeledCvrDoc>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub test: Option<KaplanMarkovConfig>,
    /// Draws per contradictory pair in competitive sessions.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

pub const DEFAULT_T: u64 = 15;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResponseKind {
    Interpretation,
    NoBallot,
    WrongId,
}

/// Body of `POST /sessions/{id}/responses`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SubmitResponse {
    pub request_index: u64,
    pub kind: ResponseKind,
    /// One `0`/`1` per candidate, in candidate order.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub interpretation: Option<String>,
    /// The identifier found on a wrong ballot.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub found_id: Option<String>,
}

/// A response checked against the session, ready to apply.
#[derive(Clone, Debug)]
enum Checked {
    Interpretation(Interpretation),
    NoBallot,
    WrongId {
        found_id: String,
        interpretation: Option<Interpretation>,
    },
}

/// Whether a submission changed the session.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Submission {
    Applied,
    /// An exact repeat of an already-applied response.
    Duplicate,
}

enum Engine {
    Comparison(ComparisonAuditor),
    Competitive(Judge),
}

pub struct Session {
    id: String,
    request: CreateSession,
    engine: Engine,
    responses: Vec<SubmitResponse>,
}

fn parse_cvr(value: &serde_json::Value) -> ServiceResult<Cvr> {
    Ok(Cvr::from_json(&value.to_string())?)
}

fn conservative(cvr: Cvr) -> ServiceResult<ConservativeCvr> {
    Ok(match cvr {
        Cvr::Conservative(c) => c,
        Cvr::Bayesian(b) => ConservativeCvr::from_bayesian(&b)?,
    })
}

impl Session {
    /// Builds a session from a creation request whose seed is set.
    pub fn create(id: String, request: CreateSession) -> ServiceResult<Self> {
        if request.schema_version != SCHEMA_VERSION {
            return Err(ServiceError::BadRequest(format!(
                "unsupported schema_version {:?}",
                request.schema_version
            )));
        }
        request.manifest.validate()?;
        let seed = request
            .seed
            .ok_or_else(|| ServiceError::Internal("session created without a seed".into()))?;
        let size = request.manifest.size;
        let engine = match request.mode {
            SessionMode::Bayesian | SessionMode::Conservative => {
                if request.cvrs.is_some() || request.t.is_some() {
                    return Err(ServiceError::BadRequest("comparison sessions take `cvr`, not `cvrs` or `t`".into()));
                }
                let cvr = parse_cvr(request.cvr.as_ref().ok_or_else(|| ServiceError::BadRequest("missing `cvr`".into()))?)?;
                let prepared = if request.mode == SessionMode::Bayesian {
                    PreparedCvr::bayesian(&cvr.into_bayesian()?)?
                } else {
                    PreparedCvr::conservative(&conservative(cvr)?)?
                };
                let config = request.test.unwrap_or_default();
                Engine::Comparison(ComparisonAuditor::new(Arc::new(prepared), size, config, seed)?)
            }
            SessionMode::Competitive => {
                if request.cvr.is_some() || request.test.is_some() {
                    return Err(ServiceError::BadRequest("competitive sessions take `cvrs` and `t`".into()));
                }
                let docs = request.cvrs.as_deref().unwrap_or_default();
                if docs.is_empty() {
                    return Err(ServiceError::BadRequest("competitive sessions need at least one CVR".into()));
                }
                let cvrs = docs
                    .iter()
                    .map(|d| -> ServiceResult<LabeledCvr> {
                        Ok(LabeledCvr {
                            label: d.label.clone(),
                            cvr: conservative(parse_cvr(&d.cvr)?)?,
                        })
                    })
                    .collect::<ServiceResult<Vec<_>>>()?;
                let candidates = cvrs[0].cvr.candidates().clone();
                let config = JudgeConfig {
                    t: request.t.unwrap_or(DEFAULT_T),
                    seed,
                };
                Engine::Competitive(Judge::new(config, candidates, size, cvrs)?)
            }
        };
        Ok(Self {
            id,
            request,
            engine,
            responses: Vec::new(),
        })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn request(&self) -> &CreateSession {
        &self.request
    }

    pub fn is_concluded(&self) -> bool {
        match &self.engine {
            Engine::Comparison(a) => a.verdict().is_some(),
            Engine::Competitive(j) => j.is_concluded(),
        }
    }

    fn width(&self) -> usize {
        match &self.engine {
            Engine::Comparison(a) => a.prepared().candidates.len(),
            Engine::Competitive(j) => j.candidates().len(),
        }
    }

    fn pending_id(&self) -> Option<&str> {
        match &self.engine {
            Engine::Comparison(a) => a.pending().map(|r| r.id.as_str()),
            Engine::Competitive(j) => j.pending().map(|r| r.id.as_str()),
        }
    }

    /// Index the next response must carry.
    pub fn next_index(&self) -> u64 {
        self.responses.len() as u64
    }

    fn check(&self, r: &SubmitResponse) -> ServiceResult<Checked> {
        let width = self.width();
        let parse = |bits: &Option<String>| -> ServiceResult<Option<Interpretation>> {
            bits.as_deref()
                .map(|b| Interpretation::parse(b, width).map_err(|e| ServiceError::BadRequest(e.to_string())))
                .transpose()
        };
        let interpretation = parse(&r.interpretation)?;
        match r.kind {
            ResponseKind::Interpretation => {
                if r.found_id.is_some() {
                    return Err(ServiceError::BadRequest("`found_id` belongs to wrong_id responses".into()));
                }
                interpretation
                    .map(Checked::Interpretation)
                    .ok_or_else(|| ServiceError::BadRequest("missing `interpretation`".into()))
            }
            ResponseKind::NoBallot => {
                if interpretation.is_some() || r.found_id.is_some() {
                    return Err(ServiceError::BadRequest("no_ballot responses carry no ballot data".into()));
                }
                Ok(Checked::NoBallot)
            }
            ResponseKind::WrongId => {
                let found_id = r
                    .found_id
                    .clone()
                    .ok_or_else(|| ServiceError::BadRequest("missing `found_id`".into()))?;
                if Some(found_id.as_str()) == self.pending_id() {
                    return Err(ServiceError::BadRequest("`found_id` is the requested identifier".into()));
                }
                Ok(Checked::WrongId {
                    found_id,
                    interpretation,
                })
            }
        }
    }

    /// Decides what a submission would do without changing anything, so
    /// the caller can log it before [`Session::apply`].
    pub fn admit(&self, r: &SubmitResponse) -> ServiceResult<Submission> {
        let next = self.next_index();
        if r.request_index < next {
            return if self.responses[r.request_index as usize] == *r {
                Ok(Submission::Duplicate)
            } else {
                Err(ServiceError::Conflict(format!(
                    "request {} was already answered differently",
                    r.request_index
                )))
            };
        }
        if self.is_concluded() {
            return Err(ServiceError::Conflict("the session has concluded".into()));
        }
        if r.request_index > next {
            return Err(ServiceError::Conflict(format!(
                "request {} is not outstanding; the next is {next}",
                r.request_index
            )));
        }
        self.check(r)?;
        Ok(Submission::Applied)
    }

    /// Admits and applies a response.
    pub fn apply(&mut self, r: SubmitResponse) -> ServiceResult<Submission> {
        if self.admit(&r)? == Submission::Duplicate {
            return Ok(Submission::Duplicate);
        }
        let checked = self.check(&r)?;
        match &mut self.engine {
            Engine::Comparison(a) => {
                let response = match checked {
                    Checked::Interpretation(i) => BoardResponse::Interpretation(i),
                    Checked::NoBallot => BoardResponse::NoBallot,
                    Checked::WrongId {
                        found_id,
                        interpretation,
                    } => BoardResponse::WrongId {
                        found_id,
                        interpretation,
                    },
                };
                a.submit(response)?;
            }
            Engine::Competitive(j) => {
                let requested = j.pending().map(|p| p.id.clone()).expect("admitted while pending");
                match checked {
                    Checked::Interpretation(i) => j.submit(Some(&requested), Some(i))?,
                    Checked::NoBallot => j.submit(None, None)?,
                    Checked::WrongId {
                        found_id,
                        interpretation,
                    } => j.submit(Some(&found_id), interpretation)?,
                }
            }
        }
        self.responses.push(r);
        Ok(Submission::Applied)
    }

    /// The export document: the comparison transcript or the competitive
    /// verdict, in the same schema the command line writes.
    pub fn transcript_json(&self) -> String {
        match &self.engine {
            Engine::Comparison(a) => a.transcript().to_json(),
            Engine::Competitive(j) => j.verdict().to_json(),
        }
    }

    pub fn view(&self) -> SessionView {
        let seed = self.request.seed.unwrap_or_default();
        let base = |state, draws| SessionView {
            schema_version: SCHEMA_VERSION.into(),
            id: self.id.clone(),
            mode: self.request.mode,
            seed,
            election_size: self.request.manifest.size,
            state,
            draws,
            comparison: None,
            competitive: None,
        };
        match &self.engine {
            Engine::Comparison(a) => {
                let t = a.transcript();
                let state = match (a.pending(), t.verdict) {
                    (Some(p), _) => SessionState::AwaitingBallot {
                        request: RequestView {
                            index: p.index,
                            id: p.id.clone(),
                            accuser: None,
                            accused: None,
                        },
                    },
                    (None, v) => SessionState::Concluded {
                        verdict: Some(v.unwrap_or(Verdict::Inconclusive)),
                        outcome: None,
                    },
                };
                let mut view = base(state, t.draws);
                view.comparison = Some(ComparisonView {
                    candidates: t.candidates.clone(),
                    cvr_mode: t.mode,
                    test: t.test,
                    declared_winner: t.declared_winner.clone(),
                    declared_margin: t.declared_margin,
                    guard: t.guard.as_ref().map(|g| serde_json::to_value(g).expect("guard serializes")),
                    risk: t.risk,
                    risk_trajectory: t.entries.iter().map(|e| e.risk).collect(),
                });
                view
            }
            Engine::Competitive(j) => {
                let v = j.verdict();
                let state = match (j.pending(), &v.outcome) {
                    (Some(p), _) => SessionState::AwaitingBallot {
                        request: RequestView {
                            index: p.index,
                            id: p.id.clone(),
                            accuser: Some(p.accuser.clone()),
                            accused: Some(p.accused.clone()),
                        },
                    },
                    (None, outcome) => SessionState::Concluded {
                        verdict: None,
                        outcome: outcome.clone(),
                    },
                };
                let mut view = base(state, v.requests);
                view.competitive = Some(CompetitiveView {
                    candidates: j.candidates().names().to_vec(),
                    t: v.t,
                    budget: j.budget(),
                    labels: v.labels.clone(),
                    dropped_wrong_size: v.dropped_wrong_size.clone(),
                    tallies: v.tallies.clone(),
                    disqualified: v.disqualified.clone(),
                });
                view
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RequestView {
    /// The `request_index` the answer must carry.
    pub index: u64,
    pub id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub accuser: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub accused: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "status")]
pub enum SessionState {
    AwaitingBallot {
        request: RequestView,
    },
    Concluded {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        verdict: Option<Verdict>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        outcome: Option<CompetitiveOutcome>,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparisonView {
    pub candidates: Vec<String>,
    pub cvr_mode: CvrMode,
    pub test: KaplanMarkovConfig,
    pub declared_winner: Option<String>,
    pub declared_margin: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub guard: Option<serde_json::Value>,
    pub risk: f64,
    /// Risk after each draw.
    pub risk_trajectory: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CompetitiveView {
    pub candidates: Vec<String>,
    pub t: u64,
    /// Most requests the session can make.
    pub budget: u64,
    pub labels: Vec<String>,
    pub dropped_wrong_size: Vec<String>,
    pub tallies: Vec<PairTally>,
    pub disqualified: Vec<String>,
}

/// Body of `GET /sessions/{id}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SessionView {
    pub schema_version: String,
    pub id: String,
    pub mode: SessionMode,
    /// Row-selection seed, disclosed so the pull sequence can be replayed.
    pub seed: u64,
    pub election_size: usize,
    pub state: SessionState,
    /// Responses applied so far.
    pub draws: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub comparison: Option<ComparisonView>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub competitive: Option<CompetitiveView>,
}
