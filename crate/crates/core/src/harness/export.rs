use std::path::Path;

use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::annotate::unit_label;
use crate::corpus::{format_teacher_only, Corpus, SplitAssignment, SplitRole};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InstructionRecord {
    pub id: String,
    pub split: String,
    pub prompt: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ExportSummary {
    pub records: usize,
    /// Records whose teacher transcript is empty.
    pub empty_transcripts: usize,
}

/// `Transcript: <text> Rating: <label>`, or ending at `Rating:` without a label.
pub fn instruction_prompt(transcript: &str, rating: Option<u8>) -> String {
    match rating {
        Some(r) => format!("Transcript: {transcript} Rating: {r}"),
        None => format!("Transcript: {transcript} Rating:"),
    }
}

/// One record per labelled unit in `split`, in corpus order. Training
/// records carry the rating; dev and test prompts stop at `Rating:`.
pub fn instruction_samples(
    corpus: &Corpus,
    variable: &str,
    split: &SplitAssignment,
) -> (Vec<InstructionRecord>, ExportSummary) {
    let roles = split.roles();
    let mut summary = ExportSummary::default();
    let records = corpus
        .sessions
        .iter()
        .filter_map(|s| {
            let label = unit_label(s, variable)?;
            let role = *roles.get(s.session_id.as_str())?;
            let transcript = format_teacher_only(s);
            summary.records += 1;
            if transcript.is_empty() {
                summary.empty_transcripts += 1;
            }
            let rating = (role == SplitRole::Train).then_some(label.value());
            Some(InstructionRecord {
                id: s.session_id.clone(),
                split: role.as_str().to_string(),
                prompt: instruction_prompt(&transcript, rating),
            })
        })
        .collect();
    (records, summary)
}

pub fn export_instruction_samples(
    corpus: &Corpus,
    variable: &str,
    split: &SplitAssignment,
    path: impl AsRef<Path>,
) -> Result<ExportSummary, HarnessError> {
    if !corpus.variables().iter().any(|v| v == variable) {
        return Err(HarnessError::UnknownVariable(variable.to_string()));
    }
    let (records, summary) = instruction_samples(corpus, variable, split);
    crate::corpus::write_jsonl(path, &records)?;
    Ok(summary)
}
