//! Instruction-quality measurement from teaching transcripts.
//!
//! The crate is organised around the flow of an experiment:
//!
//! * [`corpus`] ingests JSONL transcripts, formats model inputs and splits data.
//! * [`annotate`] turns rater scores into labels and measures rater agreement.
//! * [`lexical`] compares n-gram usage between rating groups with log-odds z-scores.
//! * [`scorer`] holds the class-weighted linear baseline and the scorer protocol.
//! * [`twostage`] selects relevant sentences before scoring.
//! * [`metrics`] computes macro-F1, Spearman and run summaries.
//! * [`synth`] generates corpora with planted signals for verification.
//! * [`harness`] runs the full repeated-seed protocol and writes report tables.

pub mod annotate;
pub mod corpus;
pub mod harness;
pub mod lexical;
pub mod metrics;
pub mod scorer;
pub mod stats;
pub mod synth;
pub mod twostage;

mod error;

pub use error::{Error, Result};
