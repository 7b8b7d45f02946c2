//! Adaptive audit tests and the Kaplan-Markov instance.
//!
//! A test is parameterized by the declared margin `δ` and consumes a stream
//! of discrepancy samples in `[-2, 2]`. It decides when to stop and, at the
//! stopping point, whether to reject the hypothesis that the stream is
//! δ-dominating (which the auditor reports as `Consistent`).

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::discrepancy::in_sigma;
use crate::error::{Error, Result};
use crate::seeds::{self, Purpose};

/// What a test says after consuming one more sample.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Decision {
    Continue,
    Stop { reject: bool },
}

/// One in-progress run of a test.
pub trait TestRun {
    fn push(&mut self, sample: f64) -> Result<Decision>;
    fn draws(&self) -> u64;
    /// Natural log of the current test statistic, if the test has one.
    fn log_statistic(&self) -> f64;
    fn decision(&self) -> Option<Decision>;
}

/// Stopping time plus rejection criterion.
pub trait AdaptiveAuditTest {
    type Run: TestRun;

    fn start(&self, delta: f64) -> Result<Self::Run>;

    /// Whether the test stops exactly at the end of `observed`.
    fn stop(&self, delta: f64, observed: &[f64]) -> Result<bool> {
        Ok(matches!(self.replay(delta, observed)?, Some(n) if n == observed.len()))
    }

    /// Rejection at the end of `observed`; only meaningful at a stopping prefix.
    fn reject(&self, delta: f64, observed: &[f64]) -> Result<bool> {
        let mut run = self.start(delta)?;
        let mut last = Decision::Continue;
        for &d in observed {
            last = run.push(d)?;
        }
        Ok(matches!(last, Decision::Stop { reject: true }))
    }

    /// Length of the shortest stopping prefix of `observed`, if any.
    fn replay(&self, delta: f64, observed: &[f64]) -> Result<Option<usize>> {
        let mut run = self.start(delta)?;
        for (i, &d) in observed.iter().enumerate() {
            if let Decision::Stop { .. } = run.push(d)? {
                return Ok(Some(i + 1));
            }
        }
        Ok(None)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KaplanMarkovConfig {
    /// Inflation parameter, > 1.
    pub gamma: f64,
    /// Risk limit in (0, 1).
    pub alpha: f64,
    /// Stop without rejecting after this many draws. Auditors fill in the
    /// election size when this is absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_draws: Option<u64>,
}

impl Default for KaplanMarkovConfig {
    fn default() -> Self {
        Self {
            gamma: 1.1,
            alpha: 0.05,
            max_draws: None,
        }
    }
}

impl KaplanMarkovConfig {
    pub fn new(gamma: f64, alpha: f64, max_draws: Option<u64>) -> Result<Self> {
        let c = Self {
            gamma,
            alpha,
            max_draws,
        };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gamma.is_finite() && self.gamma > 1.0) {
            return Err(Error::InvalidTestConfig(format!("gamma must exceed 1, got {}", self.gamma)));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::InvalidTestConfig(format!("alpha must lie in (0,1), got {}", self.alpha)));
        }
        if self.max_draws == Some(0) {
            return Err(Error::InvalidTestConfig("max_draws must be positive".into()));
        }
        Ok(())
    }

    pub fn with_max_draws(mut self, max_draws: u64) -> Self {
        self.max_draws = Some(max_draws);
        self
    }
}

fn check_delta(delta: f64) -> Result<()> {
    if delta > 0.0 && delta <= 2.0 {
        Ok(())
    } else {
        Err(Error::InvalidTestConfig(format!("delta must lie in (0,2], got {delta}")))
    }
}

/// Log of one factor `(1 - δ/2γ) / (1 - D/2γ)`.
fn log_factor(log_numerator: f64, gamma: f64, d: f64) -> f64 {
    log_numerator - (-d / (2.0 * gamma)).ln_1p()
}

/// Kaplan-Markov risk of a finished sample sequence.
pub fn km_risk(config: &KaplanMarkovConfig, delta: f64, samples: &[f64]) -> Result<f64> {
    config.validate()?;
    check_delta(delta)?;
    let ln_num = (-delta / (2.0 * config.gamma)).ln_1p();
    let mut acc = 0.0;
    for &d in samples {
        if !in_sigma(d) {
            return Err(Error::SampleOutOfRange(d));
        }
        acc += log_factor(ln_num, config.gamma, d);
    }
    Ok(acc.exp())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KaplanMarkov {
    pub config: KaplanMarkovConfig,
}

impl KaplanMarkov {
    pub fn new(config: KaplanMarkovConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self { config })
    }
}

#[derive(Clone, Debug)]
pub struct KaplanMarkovRun {
    gamma: f64,
    ln_num: f64,
    ln_alpha: f64,
    max_draws: Option<u64>,
    log_risk: f64,
    draws: u64,
    decision: Option<Decision>,
}

impl KaplanMarkovRun {
    pub fn risk(&self) -> f64 {
        self.log_risk.exp()
    }

    pub fn log_risk(&self) -> f64 {
        self.log_risk
    }
}

impl TestRun for KaplanMarkovRun {
    fn push(&mut self, d: f64) -> Result<Decision> {
        if let Some(done) = self.decision {
            return Err(Error::InvalidTestConfig(format!("test already stopped ({done:?})")));
        }
        if !in_sigma(d) {
            return Err(Error::SampleOutOfRange(d));
        }
        self.log_risk += log_factor(self.ln_num, self.gamma, d);
        self.draws += 1;
        let decision = if self.log_risk <= self.ln_alpha {
            Decision::Stop { reject: true }
        } else if self.max_draws.is_some_and(|m| self.draws >= m) {
            Decision::Stop { reject: false }
        } else {
            Decision::Continue
        };
        if decision != Decision::Continue {
            self.decision = Some(decision);
        }
        Ok(decision)
    }

    fn draws(&self) -> u64 {
        self.draws
    }

    fn log_statistic(&self) -> f64 {
        self.log_risk
    }

    fn decision(&self) -> Option<Decision> {
        self.decision
    }
}

impl AdaptiveAuditTest for KaplanMarkov {
    type Run = KaplanMarkovRun;

    fn start(&self, delta: f64) -> Result<KaplanMarkovRun> {
        check_delta(delta)?;
        Ok(KaplanMarkovRun {
            gamma: self.config.gamma,
            ln_num: (-delta / (2.0 * self.config.gamma)).ln_1p(),
            ln_alpha: self.config.alpha.ln(),
            max_draws: self.config.max_draws,
            log_risk: 0.0,
            draws: 0,
            decision: None,
        })
    }
}

/// Per-draw risk values recorded while a test runs.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RiskTrajectory {
    pub risk: Vec<f64>,
    pub decision: Option<Decision>,
}

impl RiskTrajectory {
    pub fn draws(&self) -> usize {
        self.risk.len()
    }

    pub fn last(&self) -> f64 {
        self.risk.last().copied().unwrap_or(1.0)
    }
}

// ---------------------------------------------------------------------------
// δ-dominating sample sources

/// Source of samples whose conditional mean given the past is at least `δ`.
pub trait DominatingStream {
    fn next_sample<R: Rng + ?Sized>(&mut self, history: &[f64], rng: &mut R) -> f64;
}

/// Every sample equals δ.
pub struct ConstantStream(pub f64);

impl DominatingStream for ConstantStream {
    fn next_sample<R: Rng + ?Sized>(&mut self, _: &[f64], _: &mut R) -> f64 {
        self.0
    }
}

/// Two-point law on `{-2, +2}` with the given mean.
pub struct SplitStream {
    pub mean: f64,
}

impl DominatingStream for SplitStream {
    fn next_sample<R: Rng + ?Sized>(&mut self, _: &[f64], rng: &mut R) -> f64 {
        let p_high = (2.0 + self.mean) / 4.0;
        if rng.random::<f64>() < p_high {
            2.0
        } else {
            -2.0
        }
    }
}

/// Adaptive two-point law with conditional mean exactly δ. After a low
/// sample it bets on a long run of `-2`s balanced by rare `+2`s; after a
/// high sample it switches to a tight law around δ. The aim is to exploit
/// any history dependence in the test.
pub struct AdaptiveStream {
    pub delta: f64,
}

impl DominatingStream for AdaptiveStream {
    fn next_sample<R: Rng + ?Sized>(&mut self, history: &[f64], rng: &mut R) -> f64 {
        let low = -2.0;
        let high = match history.last() {
            Some(&d) if d < self.delta => 2.0,
            _ => (self.delta + 0.25).min(2.0),
        };
        // p·high + (1-p)·low = δ
        let p_high = (self.delta - low) / (high - low);
        if rng.random::<f64>() < p_high {
            high
        } else {
            low
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RiskEstimate {
    pub trials: u64,
    pub rejections: u64,
}

impl RiskEstimate {
    pub fn rate(&self) -> f64 {
        self.rejections as f64 / self.trials as f64
    }

    /// Binomial standard error at the observed rate.
    pub fn standard_error(&self) -> f64 {
        let p = self.rate();
        (p * (1.0 - p) / self.trials as f64).sqrt()
    }
}

/// Fraction of trials on which `test` rejects a stream from `make_stream`.
/// The test must have a finite `max_draws` so every trial terminates.
pub fn test_risk_estimate<S, F>(
    test: &KaplanMarkov,
    delta: f64,
    mut make_stream: F,
    trials: u64,
    seed: u64,
) -> Result<RiskEstimate>
where
    S: DominatingStream,
    F: FnMut() -> S,
{
    if test.config.max_draws.is_none() {
        return Err(Error::InvalidTestConfig("risk estimation needs max_draws".into()));
    }
    let mut rejections = 0;
    let mut history = Vec::new();
    for trial in 0..trials {
        let mut rng = seeds::rng(seed, trial, Purpose::Test);
        let mut stream = make_stream();
        let mut run = test.start(delta)?;
        history.clear();
        loop {
            let d = stream.next_sample(&history, &mut rng);
            history.push(d);
            if let Decision::Stop { reject } = run.push(d)? {
                rejections += u64::from(reject);
                break;
            }
        }
    }
    Ok(RiskEstimate { trials, rejections })
}
