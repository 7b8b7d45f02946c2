//! Winner, loser, and margin rules shared by elections and CVRs.
//!
//! Both conventions reduce to comparing per-candidate totals: Bayesian
//! outcomes compare expected totals, conservative outcomes compare each
//! candidate's least favorable total against every rival's most favorable
//! total.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::election::CandidateId;

/// Vote-count differences at or below this are treated as ties.
///
/// Totals are short sums of probabilities, so a genuine tie can surface as
/// a difference of a few ulps.
pub const TIE_TOLERANCE: f64 = 1e-9;

/// Winner (if any), margin, and losers derived from a set of totals.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Outcome {
    pub winner: Option<CandidateId>,
    /// Diluted margin of the winner; zero when there is no winner.
    pub margin: f64,
    pub losers: BTreeSet<CandidateId>,
}

impl Outcome {
    pub fn indeterminate(&self) -> bool {
        self.winner.is_none()
    }

    pub fn is_loser(&self, c: CandidateId) -> bool {
        self.losers.contains(&c)
    }
}

/// Outcome from expected totals: the winner strictly beats every rival.
pub fn expected_outcome(totals: &[f64], size: usize) -> Outcome {
    limits_outcome(totals, totals, size)
}

/// Outcome from (least favorable, most favorable) totals.
///
/// `W` wins when `low[W] > high[A]` for all `A != W`; `L` loses when
/// `high[L] < low[A]` for some `A`.
pub fn limits_outcome(low: &[f64], high: &[f64], size: usize) -> Outcome {
    debug_assert_eq!(low.len(), high.len());
    let n = low.len();
    let mut winner = None;
    let mut margin = 0.0;
    for w in 0..n {
        let min_gap = (0..n)
            .filter(|&a| a != w)
            .map(|a| low[w] - high[a])
            .fold(f64::INFINITY, f64::min);
        if n > 1 && min_gap > TIE_TOLERANCE {
            winner = Some(CandidateId(w));
            margin = if size == 0 { 0.0 } else { min_gap / size as f64 };
            break;
        }
    }
    let losers = (0..n)
        .filter(|&l| (0..n).any(|a| a != l && low[a] - high[l] > TIE_TOLERANCE))
        .map(CandidateId)
        .collect();
    Outcome {
        winner,
        margin,
        losers,
    }
}
