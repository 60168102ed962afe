use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{candidate_sentences, RelevanceModel, TwoStageError};
use crate::corpus::{InputFormat, SentenceRef, Unit};

/// One line of an external relevance file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExternalRelevance {
    pub session_id: String,
    pub variable: String,
    pub relevant: Vec<SentenceRef>,
}

/// Relevant sentences per unit id. Units without an entry select nothing.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SpanMap {
    pub spans: BTreeMap<String, Vec<SentenceRef>>,
}

impl SpanMap {
    /// Gold spans of `variable` for every unit that has them.
    pub fn from_gold<U: Unit>(units: &[U], variable: &str) -> Self {
        let spans = units
            .iter()
            .filter_map(|u| {
                let refs = u.annotations().get(variable)?.relevance.clone()?;
                Some((u.unit_id(), refs))
            })
            .collect();
        Self { spans }
    }

    /// Ids in the map that are not among `known`.
    pub fn unknown_ids<'a>(&self, known: impl IntoIterator<Item = &'a str>) -> Vec<String> {
        let known: BTreeSet<&str> = known.into_iter().collect();
        self.spans
            .keys()
            .filter(|id| !known.contains(id.as_str()))
            .cloned()
            .collect()
    }
}

/// Source of per-sentence relevance decisions.
#[derive(Debug, Clone)]
pub enum RelevanceProvider {
    /// A trained sentence classifier.
    Model(RelevanceModel),
    /// Precomputed spans, e.g. loaded from an external extraction file.
    Spans(SpanMap),
    /// The unit's own gold relevance annotations for the named variable.
    Gold(String),
    /// Every candidate sentence.
    All,
}

impl RelevanceProvider {
    /// Selected sentences of `unit`, sorted and deduplicated. Only
    /// [`RelevanceProvider::Model`] and [`RelevanceProvider::All`] depend on
    /// `format`, through the candidate sentence set.
    pub fn select<U: Unit + ?Sized>(&self, unit: &U, format: InputFormat) -> Result<Vec<SentenceRef>, TwoStageError> {
        let mut refs = match self {
            Self::Model(model) => {
                let candidates = candidate_sentences(unit, format);
                let texts: Vec<&str> = candidates.iter().map(|(_, s)| s.as_str()).collect();
                let keep = model.predict(&texts)?;
                candidates
                    .into_iter()
                    .zip(keep)
                    .filter_map(|((r, _), k)| k.then_some(r))
                    .collect()
            }
            Self::Spans(map) => map.spans.get(&unit.unit_id()).cloned().unwrap_or_default(),
            Self::Gold(variable) => unit
                .annotations()
                .get(variable)
                .and_then(|a| a.relevance.clone())
                .unwrap_or_default(),
            Self::All => candidate_sentences(unit, format).into_iter().map(|(r, _)| r).collect(),
        };
        refs.sort();
        refs.dedup();
        Ok(refs)
    }
}

fn file_err(path: &Path, message: impl std::fmt::Display) -> TwoStageError {
    TwoStageError::File {
        path: path.display().to_string(),
        message: message.to_string(),
    }
}

/// Reads a JSONL relevance file and keeps the records for `variable`.
/// Repeated records for one session are merged.
pub fn load_external_relevance(path: impl AsRef<Path>, variable: &str) -> Result<RelevanceProvider, TwoStageError> {
    let path = path.as_ref();
    let raw = std::fs::read_to_string(path).map_err(|e| file_err(path, e))?;
    let mut map = SpanMap::default();
    for (i, line) in raw.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let record: ExternalRelevance =
            serde_json::from_str(line).map_err(|e| file_err(path, format!("line {}: {e}", i + 1)))?;
        if record.variable == variable {
            map.spans.entry(record.session_id).or_default().extend(record.relevant);
        }
    }
    for refs in map.spans.values_mut() {
        refs.sort();
        refs.dedup();
    }
    Ok(RelevanceProvider::Spans(map))
}

pub fn write_external_relevance(path: impl AsRef<Path>, records: &[ExternalRelevance]) -> Result<(), TwoStageError> {
    let path = path.as_ref();
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(r).expect("record serializes"));
        out.push('\n');
    }
    std::fs::write(path, out).map_err(|e| file_err(path, e))
}
