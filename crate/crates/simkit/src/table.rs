//! Monte Carlo sample-size tables.
//!
//! Each cell runs independent audits of a discrepancy stream until the
//! Kaplan-Markov test stops. Trial `i` of every cell uses the generator
//! keyed by `(seed, i)`, so approaches are compared on common random
//! numbers and results do not depend on scheduling.

use rayon::prelude::*;
use rla_core::seeds::{self, Purpose};
use rla_core::stattest::{AdaptiveAuditTest, Decision, KaplanMarkov, KaplanMarkovConfig, TestRun};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ApproachKind, DiscrepancyStream, ErrorModel};
use crate::stats::TrialStats;

/// Draws until the test stops for one trial, and whether it rejected.
/// `max_draws` defaults to the model's election size.
pub fn trial(model: &ErrorModel, approach: ApproachKind, config: &KaplanMarkovConfig, seed: u64, index: u64) -> Result<(u64, bool)> {
    let config = match config.max_draws {
        Some(_) => *config,
        None => config.with_max_draws(model.size as u64),
    };
    let mut run = KaplanMarkov::new(config)?.start(model.declared_margin(approach))?;
    let mut stream = DiscrepancyStream::new(*model, approach, seeds::rng(seed, index, Purpose::Stream))?;
    loop {
        if let Decision::Stop { reject } = run.push(stream.next_value())? {
            return Ok((run.draws(), reject));
        }
    }
}

pub fn run_cell(model: &ErrorModel, approach: ApproachKind, config: &KaplanMarkovConfig, trials: usize, seed: u64) -> Result<TrialStats> {
    if trials == 0 {
        return Err(Error::Usage("trials must be at least 1".into()));
    }
    model.validate()?;
    let results: Vec<(u64, bool)> = (0..trials as u64)
        .into_par_iter()
        .map(|i| trial(model, approach, config, seed, i))
        .collect::<Result<_>>()?;
    let draws: Vec<u64> = results.iter().map(|r| r.0).collect();
    let rejections = results.iter().filter(|r| r.1).count();
    Ok(TrialStats::from_draws(&draws, rejections, seed))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum TableId {
    /// Draws across margins at `p_m = .5`.
    One,
    /// Draws across `p_m` at `μ = .01`.
    Two,
    /// 95th percentiles across `p_cvr` and `p_audit − p_cvr`.
    Three,
}

impl TableId {
    pub fn parse(n: u8) -> Result<Self> {
        match n {
            1 => Ok(TableId::One),
            2 => Ok(TableId::Two),
            3 => Ok(TableId::Three),
            _ => Err(Error::Usage(format!("no table {n}; choose 1, 2 or 3"))),
        }
    }

    pub fn number(self) -> u8 {
        match self {
            TableId::One => 1,
            TableId::Two => 2,
            TableId::Three => 3,
        }
    }

    /// Offsets `p_audit − p_cvr`, in tenths, in column order.
    pub const OFFSETS: [i32; 5] = [4, 2, 0, -2, -4];

    /// Row keys in tenths (or hundredths of margin for table 1), in row order.
    fn rows(self) -> Vec<i32> {
        match self {
            TableId::One => vec![1, 2, 3],
            TableId::Two | TableId::Three => (0..=10).rev().collect(),
        }
    }

    fn offsets(self) -> &'static [i32] {
        match self {
            TableId::Three => &Self::OFFSETS,
            _ => &[0],
        }
    }

    fn model(self, row: i32, offset: i32) -> Option<ErrorModel> {
        let tenth = |k: i32| f64::from(k) / 10.0;
        match self {
            TableId::One => Some(ErrorModel::published(f64::from(row) / 100.0, 0.5)),
            TableId::Two => Some(ErrorModel::published(0.01, tenth(row))),
            TableId::Three => {
                let audit = row + offset;
                (0..=10)
                    .contains(&audit)
                    .then(|| ErrorModel::published(0.01, 0.5).with_probabilities(tenth(row), tenth(audit)))
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    /// Row key: margin (table 1), `p_m` (table 2), or `p_cvr` (table 3).
    pub row: f64,
    /// `p_audit − p_cvr`; zero outside table 3.
    pub offset: f64,
    pub approach: ApproachKind,
    pub model: ErrorModel,
    pub stats: TrialStats,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TableResult {
    pub table: TableId,
    pub seed: u64,
    pub trials: usize,
    pub config: KaplanMarkovConfig,
    pub cells: Vec<Cell>,
}

/// Runs every populated cell of `table`. `rows` restricts to the given row
/// keys (margins for table 1, probabilities otherwise).
pub fn run_table(table: TableId, trials: usize, config: &KaplanMarkovConfig, seed: u64, rows: Option<&[f64]>) -> Result<TableResult> {
    config.validate()?;
    let scale = if table == TableId::One { 100.0 } else { 10.0 };
    if let Some(keep) = rows {
        let known: Vec<f64> = table.rows().iter().map(|&r| f64::from(r) / scale).collect();
        if let Some(bad) = keep.iter().find(|k| !known.iter().any(|r| (*k - r).abs() < 1e-9)) {
            return Err(Error::Usage(format!("table {} has no row {bad}; rows are {known:?}", table.number())));
        }
    }
    let mut cells = Vec::new();
    for row in table.rows() {
        let key = f64::from(row) / scale;
        if let Some(keep) = rows {
            if !keep.iter().any(|k| (k - key).abs() < 1e-9) {
                continue;
            }
        }
        for &offset in table.offsets() {
            let Some(model) = table.model(row, offset) else {
                continue;
            };
            for approach in ApproachKind::ALL {
                cells.push(Cell {
                    row: key,
                    offset: f64::from(offset) / 10.0,
                    approach,
                    model,
                    stats: run_cell(&model, approach, config, trials, seed)?,
                });
            }
        }
    }
    Ok(TableResult {
        table,
        seed,
        trials,
        config: *config,
        cells,
    })
}

/// Implementation choices the table numbers depend on, recorded in the CSV
/// metadata row.
pub const DECISIONS: &[&str] = &[
    "max_draws=S",
    "percentile=nearest-rank",
    "declared_margin=mu+p_cvr*m (baseline, bayesian); mu (conservative)",
    "marginal_reading=independent per draw",
    "random_numbers=common across approaches",
];

impl TableResult {
    pub fn cell(&self, row: f64, offset: f64, approach: ApproachKind) -> Option<&Cell> {
        self.cells
            .iter()
            .find(|c| (c.row - row).abs() < 1e-9 && (c.offset - offset).abs() < 1e-9 && c.approach == approach)
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::WriterBuilder::new().flexible(true).from_writer(Vec::new());
        let mut meta = vec![
            format!("# table={}", self.table.number()),
            format!("seed={}", self.seed),
            format!("trials={}", self.trials),
            format!("gamma={}", self.config.gamma),
            format!("alpha={}", self.config.alpha),
        ];
        if let Some(m) = self.config.max_draws {
            meta.push(format!("max_draws_override={m}"));
        }
        meta.extend(DECISIONS.iter().map(|d| d.to_string()));
        w.write_record(&meta)?;

        let mut rows: Vec<f64> = Vec::new();
        for c in &self.cells {
            if !rows.iter().any(|r| (r - c.row).abs() < 1e-9) {
                rows.push(c.row);
            }
        }
        match self.table {
            TableId::One | TableId::Two => {
                let key = if self.table == TableId::One { "mu" } else { "p_m" };
                let mut header = vec![key.to_string()];
                for a in ApproachKind::ALL {
                    for stat in ["mean", "stdev", "median", "p95"] {
                        header.push(format!("{a}_{stat}"));
                    }
                }
                w.write_record(&header)?;
                for &r in &rows {
                    let mut rec = vec![format!("{r}")];
                    for a in ApproachKind::ALL {
                        match self.cell(r, 0.0, a) {
                            Some(c) => rec.extend([
                                format!("{:.1}", c.stats.mean),
                                format!("{:.1}", c.stats.stdev),
                                c.stats.median.to_string(),
                                c.stats.p95.to_string(),
                            ]),
                            None => rec.extend(std::iter::repeat_n(String::new(), 4)),
                        }
                    }
                    w.write_record(&rec)?;
                }
            }
            TableId::Three => {
                let mut header = vec!["p_cvr".to_string()];
                for &o in &TableId::OFFSETS {
                    for a in ApproachKind::ALL {
                        header.push(format!("offset{:+}_{a}_p95", f64::from(o) / 10.0));
                    }
                }
                w.write_record(&header)?;
                for &r in &rows {
                    let mut rec = vec![format!("{r}")];
                    for &o in &TableId::OFFSETS {
                        for a in ApproachKind::ALL {
                            rec.push(
                                self.cell(r, f64::from(o) / 10.0, a)
                                    .map(|c| c.stats.p95.to_string())
                                    .unwrap_or_default(),
                            );
                        }
                    }
                    w.write_record(&rec)?;
                }
            }
        }
        let bytes = w.into_inner().map_err(|e| Error::Usage(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }
}
