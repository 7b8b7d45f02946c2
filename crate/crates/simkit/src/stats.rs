use serde::{Deserialize, Serialize};

/// Summary of per-trial draw counts.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialStats {
    pub trials: usize,
    pub seed: u64,
    pub mean: f64,
    /// Sample standard deviation (n − 1 denominator).
    pub stdev: f64,
    pub median: u64,
    pub p95: u64,
    /// Trials that ended by rejecting, i.e. with a Consistent verdict.
    pub rejections: usize,
}

/// Nearest-rank percentile: the `ceil(q·n)`-th smallest value.
pub fn nearest_rank(sorted: &[u64], q: f64) -> u64 {
    assert!(!sorted.is_empty(), "percentile of an empty sample");
    let rank = ((q * sorted.len() as f64).ceil() as usize).clamp(1, sorted.len());
    sorted[rank - 1]
}

impl TrialStats {
    pub fn from_draws(draws: &[u64], rejections: usize, seed: u64) -> Self {
        let n = draws.len();
        assert!(n > 0, "no trials");
        let mean = draws.iter().map(|&d| d as f64).sum::<f64>() / n as f64;
        let stdev = if n > 1 {
            let ss: f64 = draws.iter().map(|&d| (d as f64 - mean).powi(2)).sum();
            (ss / (n - 1) as f64).sqrt()
        } else {
            0.0
        };
        let mut sorted = draws.to_vec();
        sorted.sort_unstable();
        Self {
            trials: n,
            seed,
            mean,
            stdev,
            median: nearest_rank(&sorted, 0.5),
            p95: nearest_rank(&sorted, 0.95),
            rejections,
        }
    }
}
