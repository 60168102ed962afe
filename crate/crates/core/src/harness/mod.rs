//! Repeated-seed experiments over technique combinations, dev-based model
//! selection and report tables.

mod config;
mod export;
mod report;
mod run;

use thiserror::Error;

use crate::corpus::CorpusError;

pub use config::{ExperimentConfig, Setting, SplitConfig, Stage2TrainInput, Technique, TechniqueFlag, TwoStageOptions};
pub use export::{
    export_instruction_samples, instruction_prompt, instruction_samples, ExportSummary, InstructionRecord,
};
pub use report::{read_report, render_table, report_tables, write_metrics_csv, write_report, TableStyle};
pub use run::{
    check_selection, run_experiment, run_experiment_on, BaselineRecord, CellRecord, Fold, MetricRow, MetricsReport,
    Selection,
};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid experiment config: {0}")]
    Config(String),
    #[error("config file {path}: {message}")]
    ConfigFile { path: String, message: String },
    #[error("variable {0:?} is not annotated in the corpus")]
    UnknownVariable(String),
    #[error("variable {variable:?}: {message}")]
    Fold { variable: String, message: String },
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error("{path}: {message}")]
    Io { path: String, message: String },
    #[error("report has no variables")]
    EmptyReport,
    #[error("selection check failed: {0}")]
    Selection(String),
}
