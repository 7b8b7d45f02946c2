//! Comparison and competitive audits for elections where ballots carry
//! marginal marks.

pub mod audit;
pub mod competitive;
pub mod cvr;
pub mod discrepancy;
pub mod election;
pub mod environment;
pub mod error;
pub mod manifest;
pub mod seeds;
pub mod stattest;
pub mod tally;

pub use error::{Error, Result};
