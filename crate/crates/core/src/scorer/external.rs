//! File exchange with out-of-process scorers.
//!
//! The toolkit writes `{"id", "text"}` JSONL requests; the external scorer
//! answers with `{"id", "proba": [...]}` JSONL, one row per request.

use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Scorer, ScorerError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScoreRequest {
    pub id: String,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScoreResponse {
    pub id: String,
    pub proba: Vec<f64>,
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> ScorerError {
    ScorerError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    }
}

pub fn write_requests(path: impl AsRef<Path>, requests: &[ScoreRequest]) -> Result<(), ScorerError> {
    let path = path.as_ref();
    let mut out = String::new();
    for r in requests {
        out.push_str(&serde_json::to_string(r).expect("request serializes"));
        out.push('\n');
    }
    std::fs::write(path, out).map_err(|e| io_err(path, e))
}

fn read_jsonl<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>, ScorerError> {
    let raw = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    raw.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l)
                .map_err(|e| ScorerError::External(format!("{} line {}: {e}", path.display(), i + 1)))
        })
        .collect()
}

pub fn read_requests(path: impl AsRef<Path>) -> Result<Vec<ScoreRequest>, ScorerError> {
    read_jsonl(path.as_ref())
}

pub fn read_responses(path: impl AsRef<Path>) -> Result<Vec<ScoreResponse>, ScorerError> {
    read_jsonl(path.as_ref())
}

/// Probabilities produced elsewhere, looked up by request text.
#[derive(Debug, Clone)]
pub struct ExternalScorer {
    num_classes: usize,
    by_id: HashMap<String, Vec<f64>>,
    by_text: HashMap<String, Vec<f64>>,
}

impl ExternalScorer {
    /// Pairs each request with its response; every request needs a valid
    /// probability row of length `num_classes`.
    pub fn new(
        requests: &[ScoreRequest],
        responses: &[ScoreResponse],
        num_classes: usize,
    ) -> Result<Self, ScorerError> {
        let mut by_id = HashMap::new();
        for r in responses {
            if r.proba.len() != num_classes {
                return Err(ScorerError::External(format!(
                    "response {:?} has {} probabilities, expected {num_classes}",
                    r.id,
                    r.proba.len()
                )));
            }
            let total: f64 = r.proba.iter().sum();
            if r.proba.iter().any(|p| !p.is_finite() || *p < 0.0) || (total - 1.0).abs() > 1e-6 {
                return Err(ScorerError::External(format!(
                    "response {:?} is not a probability vector: {:?}",
                    r.id, r.proba
                )));
            }
            if by_id.insert(r.id.clone(), r.proba.clone()).is_some() {
                return Err(ScorerError::External(format!("duplicate response id {:?}", r.id)));
            }
        }
        let mut by_text = HashMap::new();
        for req in requests {
            let proba = by_id
                .get(&req.id)
                .ok_or_else(|| ScorerError::External(format!("no response for request {:?}", req.id)))?;
            by_text.entry(req.text.clone()).or_insert_with(|| proba.clone());
        }
        Ok(Self {
            num_classes,
            by_id,
            by_text,
        })
    }

    pub fn proba_for_id(&self, id: &str) -> Option<&[f64]> {
        self.by_id.get(id).map(Vec::as_slice)
    }
}

impl Scorer for ExternalScorer {
    fn num_classes(&self) -> usize {
        self.num_classes
    }

    fn predict_proba(&self, texts: &[&str]) -> Result<Vec<Vec<f64>>, ScorerError> {
        texts
            .iter()
            .map(|t| {
                self.by_text
                    .get(*t)
                    .cloned()
                    .ok_or_else(|| ScorerError::External(format!("text was not part of the request file: {t:?}")))
            })
            .collect()
    }
}
