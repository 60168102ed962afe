use serde::{Deserialize, Serialize};

use super::Unit;

/// How a unit's utterances are rendered into model input text.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InputFormat {
    #[default]
    TeacherOnly,
    TranscriptStyle,
}

/// Teacher utterances joined in order with single spaces; students are dropped.
pub fn format_teacher_only<U: Unit + ?Sized>(unit: &U) -> String {
    unit.utterances()
        .iter()
        .filter(|u| u.speaker.is_teacher())
        .map(|u| u.text.trim())
        .collect::<Vec<_>>()
        .join(" ")
}

/// One `<speaker>: <utterance>` line per utterance.
pub fn format_transcript_style<U: Unit + ?Sized>(unit: &U) -> String {
    unit.utterances()
        .iter()
        .map(|u| format!("{}: {}", u.speaker, u.text.trim()))
        .collect::<Vec<_>>()
        .join("\n")
}

pub fn format_unit<U: Unit + ?Sized>(unit: &U, format: InputFormat) -> String {
    match format {
        InputFormat::TeacherOnly => format_teacher_only(unit),
        InputFormat::TranscriptStyle => format_transcript_style(unit),
    }
}
