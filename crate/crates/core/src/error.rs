use thiserror::Error;

use crate::annotate::AnnotateError;
use crate::corpus::CorpusError;
use crate::harness::HarnessError;
use crate::lexical::LexicalError;
use crate::metrics::MetricsError;
use crate::scorer::ScorerError;
use crate::synth::SynthError;
use crate::twostage::TwoStageError;

/// Any error raised by the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Annotate(#[from] AnnotateError),
    #[error(transparent)]
    Lexical(#[from] LexicalError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Scorer(#[from] ScorerError),
    #[error(transparent)]
    TwoStage(#[from] TwoStageError),
    #[error(transparent)]
    Synth(#[from] SynthError),
    #[error(transparent)]
    Harness(#[from] HarnessError),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
