//! The two-candidate error model behind the sample-size tables, and the
//! per-draw discrepancy stream it induces for each CVR convention.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// How the tabulation treats marginal ballots.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ApproachKind {
    /// Each marginal row is recorded as a vote for the winner or a blank.
    Baseline,
    /// Each marginal row carries its predicted probability of a winner vote.
    Bayesian,
    /// Marginal rows list both readings and add nothing to the margin.
    Conservative,
}

impl ApproachKind {
    /// Column order of the published tables.
    pub const ALL: [ApproachKind; 3] = [
        ApproachKind::Baseline,
        ApproachKind::Conservative,
        ApproachKind::Bayesian,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ApproachKind::Baseline => "baseline",
            ApproachKind::Bayesian => "bayesian",
            ApproachKind::Conservative => "conservative",
        }
    }
}

impl fmt::Display for ApproachKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ApproachKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "baseline" => Ok(ApproachKind::Baseline),
            "bayesian" => Ok(ApproachKind::Bayesian),
            "conservative" => Ok(ApproachKind::Conservative),
            other => Err(Error::Usage(format!("unknown approach {other:?}"))),
        }
    }
}

/// Error rates are fractions of all ballots. `margin` is the winner's
/// diluted margin on unambiguous ballots, before marginal ballots are
/// credited.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorModel {
    pub margin: f64,
    pub marginal_rate: f64,
    pub o1: f64,
    pub u1: f64,
    pub o2: f64,
    pub u2: f64,
    /// Chance the CVR reads a marginal ballot as a winner vote.
    pub p_cvr: f64,
    /// Chance the audit board does.
    pub p_audit: f64,
    pub size: usize,
}

impl ErrorModel {
    /// The published simulation settings at margin `margin` and equal
    /// marginal-reading probabilities `p_m`.
    pub fn published(margin: f64, p_m: f64) -> Self {
        Self {
            margin,
            marginal_rate: 0.005,
            o1: 0.001,
            u1: 0.001,
            o2: 0.0001,
            u2: 0.0001,
            p_cvr: p_m,
            p_audit: p_m,
            size: 100_000,
        }
    }

    pub fn with_probabilities(mut self, p_cvr: f64, p_audit: f64) -> Self {
        self.p_cvr = p_cvr;
        self.p_audit = p_audit;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let rates = [
            ("marginal_rate", self.marginal_rate),
            ("o1", self.o1),
            ("u1", self.u1),
            ("o2", self.o2),
            ("u2", self.u2),
            ("p_cvr", self.p_cvr),
            ("p_audit", self.p_audit),
        ];
        for (name, r) in rates {
            if !(0.0..=1.0).contains(&r) {
                return Err(Error::InvalidModel(format!("{name} = {r} is outside [0, 1]")));
            }
        }
        let total = self.marginal_rate + self.o1 + self.u1 + self.o2 + self.u2;
        if total > 1.0 + 1e-12 {
            return Err(Error::InvalidModel(format!("error and marginal rates sum to {total}")));
        }
        if !(self.margin > 0.0 && self.margin <= 1.0) {
            return Err(Error::InvalidModel(format!("margin {} must lie in (0, 1]", self.margin)));
        }
        if self.size == 0 {
            return Err(Error::InvalidModel("size must be positive".into()));
        }
        Ok(())
    }

    /// Margin the CVR declares under `approach`: marginal ballots add
    /// `p_cvr` winner votes apiece except in the conservative convention.
    pub fn declared_margin(&self, approach: ApproachKind) -> f64 {
        match approach {
            ApproachKind::Baseline | ApproachKind::Bayesian => self.margin + self.p_cvr * self.marginal_rate,
            ApproachKind::Conservative => self.margin,
        }
    }
}

/// Discrepancy of one marginal draw, given whether the CVR and the board
/// read it as a winner vote.
pub fn marginal_discrepancy(approach: ApproachKind, p_cvr: f64, cvr_reads_winner: bool, board_reads_winner: bool) -> f64 {
    let board = f64::from(u8::from(board_reads_winner));
    match approach {
        ApproachKind::Baseline => f64::from(u8::from(cvr_reads_winner)) - board,
        ApproachKind::Bayesian => p_cvr - board,
        ApproachKind::Conservative => -board,
    }
}

/// Per-draw discrepancy values under the error model.
///
/// Every draw consumes the same random numbers whatever the approach, so
/// streams for different approaches built from one generator seed are
/// coupled draw by draw.
pub struct DiscrepancyStream {
    model: ErrorModel,
    approach: ApproachKind,
    rng: ChaCha8Rng,
}

impl DiscrepancyStream {
    pub fn new(model: ErrorModel, approach: ApproachKind, rng: ChaCha8Rng) -> Result<Self> {
        model.validate()?;
        Ok(Self { model, approach, rng })
    }

    pub fn next_value(&mut self) -> f64 {
        let m = &self.model;
        let u: f64 = self.rng.random();
        let cvr_u: f64 = self.rng.random();
        let board_u: f64 = self.rng.random();
        let mut edge = m.marginal_rate;
        if u < edge {
            return marginal_discrepancy(self.approach, m.p_cvr, cvr_u < m.p_cvr, board_u < m.p_audit);
        }
        for (rate, value) in [(m.o1, 1.0), (m.u1, -1.0), (m.o2, 2.0), (m.u2, -2.0)] {
            edge += rate;
            if u < edge {
                return value;
            }
        }
        0.0
    }
}

impl Iterator for DiscrepancyStream {
    type Item = f64;

    fn next(&mut self) -> Option<f64> {
        Some(self.next_value())
    }
}
