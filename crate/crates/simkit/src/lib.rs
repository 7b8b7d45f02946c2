//! Simulation and scenario tooling on top of `rla-core`: sample-size
//! tables, synthetic elections and CVRs, and the `rla` command line.

pub mod cli;
pub mod contest;
pub mod error;
pub mod generate;
pub mod lemma;
pub mod model;
pub mod soundness;
pub mod stats;
pub mod table;

pub use error::{Error, Result};
