//! Text scorers: tf·idf features, the class-weighted loss, a multinomial
//! linear baseline and the protocol external scorers plug into.

mod external;
mod features;
mod linear;
mod loss;

use thiserror::Error;

pub use external::{read_requests, read_responses, write_requests, ExternalScorer, ScoreRequest, ScoreResponse};
pub use features::{FeatureVocab, SparseVector, VocabConfig};
pub use linear::{loss_and_gradient, Gradient, Hyper, LinearScorer, LinearTrainer, Params};
pub use loss::{weighted_ce, ClassWeights, PROB_FLOOR};

#[derive(Debug, Error)]
pub enum ScorerError {
    #[error("class {class} has no training examples; use unweighted training instead")]
    ZeroClassCount { class: usize },
    #[error("class weights need at least one class")]
    NoClasses,
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("cannot fit on an empty training set")]
    EmptyInput,
    #[error("training diverged: non-finite loss at epoch {epoch}")]
    Diverged { epoch: usize },
    #[error("label {label} outside 0..{classes}")]
    BadLabel { label: usize, classes: usize },
    #[error("i/o error on {path}: {message}")]
    Io { path: String, message: String },
    #[error("bad model artifact: {0}")]
    Format(String),
    #[error("external scorer: {0}")]
    External(String),
}

/// Anything that maps texts to probability rows over a fixed class set.
pub trait Scorer: Send + Sync {
    fn num_classes(&self) -> usize;

    fn predict_proba(&self, texts: &[&str]) -> Result<Vec<Vec<f64>>, ScorerError>;

    /// Argmax of each row; ties go to the lower class.
    fn predict(&self, texts: &[&str]) -> Result<Vec<usize>, ScorerError> {
        Ok(self.predict_proba(texts)?.iter().map(|row| argmax(row)).collect())
    }
}

/// Builds a scorer from labelled texts.
pub trait ScorerFactory: Send + Sync {
    fn fit(
        &self,
        texts: &[&str],
        labels: &[usize],
        num_classes: usize,
        weights: &ClassWeights,
    ) -> Result<Box<dyn Scorer>, ScorerError>;

    /// Short name used in reports.
    fn name(&self) -> &str;
}

/// Index of the largest entry, first one on ties.
pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}
