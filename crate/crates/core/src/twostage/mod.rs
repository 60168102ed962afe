//! Two-stage scoring: pick the relevant sentences of a unit, then score only
//! their concatenation.

mod provider;
mod relevance;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{format_unit, InputFormat, SentenceRef, Unit};
use crate::metrics::MetricsError;
use crate::scorer::{argmax, Scorer, ScorerError};

pub use provider::{load_external_relevance, write_external_relevance, ExternalRelevance, RelevanceProvider, SpanMap};
pub use relevance::{
    evaluate_relevance, fit_relevance, relevance_examples, write_relevance_csv, RelevanceModel, RelevanceOptions,
    RelevanceReport,
};

#[derive(Debug, Error)]
pub enum TwoStageError {
    #[error("no unit carries relevance annotations for variable {0:?}")]
    NoAnnotatedUnits(String),
    #[error("session {session:?}: sentence reference {span} is out of range")]
    OutOfRange { session: String, span: SentenceRef },
    #[error(transparent)]
    Scorer(#[from] ScorerError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error("relevance file {path}: {message}")]
    File { path: String, message: String },
}

/// What to score when no sentence is selected.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EmptyPolicy {
    /// Score the empty string.
    #[default]
    EmptyInput,
    /// Score the whole formatted unit instead.
    FullText,
    /// Predict the lowest class with certainty.
    PredictLowest,
}

/// Candidate sentences of a unit under `format`: teacher utterances only for
/// teacher-only input, every utterance otherwise.
pub fn candidate_sentences<U: Unit + ?Sized>(unit: &U, format: InputFormat) -> Vec<(SentenceRef, String)> {
    unit.utterances()
        .iter()
        .enumerate()
        .filter(|(_, u)| format == InputFormat::TranscriptStyle || u.speaker.is_teacher())
        .flat_map(|(ui, u)| {
            u.sentences()
                .into_iter()
                .enumerate()
                .map(move |(si, s)| (SentenceRef::new(ui, si), s))
        })
        .collect()
}

/// Joins the selected sentences in their original order. Teacher-only input
/// joins them with spaces; transcript-style input keeps one
/// `<speaker>: <sentences>` line per utterance that has a selected sentence.
/// Selections outside the candidate utterances for `format` are skipped.
pub fn assemble_relevant<U: Unit + ?Sized>(
    unit: &U,
    selected: &[SentenceRef],
    format: InputFormat,
) -> Result<String, TwoStageError> {
    let utterances = unit.utterances();
    let split: Vec<Vec<String>> = utterances.iter().map(|u| u.sentences()).collect();
    for r in selected {
        let valid = split.get(r.utterance_index).is_some_and(|s| r.sentence_index < s.len());
        if !valid {
            return Err(TwoStageError::OutOfRange {
                session: unit.unit_id(),
                span: *r,
            });
        }
    }
    let mut refs = selected.to_vec();
    refs.sort();
    refs.dedup();

    let mut lines: Vec<String> = Vec::new();
    let mut i = 0;
    while i < refs.len() {
        let ui = refs[i].utterance_index;
        let mut parts = Vec::new();
        while i < refs.len() && refs[i].utterance_index == ui {
            parts.push(split[ui][refs[i].sentence_index].as_str());
            i += 1;
        }
        let speaker = &utterances[ui].speaker;
        match format {
            InputFormat::TeacherOnly if speaker.is_teacher() => lines.push(parts.join(" ")),
            InputFormat::TeacherOnly => {}
            InputFormat::TranscriptStyle => lines.push(format!("{speaker}: {}", parts.join(" "))),
        }
    }
    Ok(match format {
        InputFormat::TeacherOnly => lines.join(" "),
        InputFormat::TranscriptStyle => lines.join("\n"),
    })
}

/// A relevance provider composed with a stage-2 scorer.
pub struct TwoStagePipeline<'a> {
    pub relevance: &'a RelevanceProvider,
    pub scorer: &'a dyn Scorer,
    pub empty_policy: EmptyPolicy,
    pub format: InputFormat,
}

/// Stage-2 input for one unit, after the empty policy.
enum Stage2Input {
    Text(String),
    Lowest,
}

impl TwoStagePipeline<'_> {
    fn stage2_input<U: Unit + ?Sized>(&self, unit: &U) -> Result<Stage2Input, TwoStageError> {
        let selected = self.relevance.select(unit, self.format)?;
        let text = assemble_relevant(unit, &selected, self.format)?;
        if !text.is_empty() {
            return Ok(Stage2Input::Text(text));
        }
        Ok(match self.empty_policy {
            EmptyPolicy::EmptyInput => Stage2Input::Text(String::new()),
            EmptyPolicy::FullText => Stage2Input::Text(format_unit(unit, self.format)),
            EmptyPolicy::PredictLowest => Stage2Input::Lowest,
        })
    }

    /// Text the stage-2 scorer sees for `unit` (`None` under predict-lowest).
    pub fn stage2_text<U: Unit + ?Sized>(&self, unit: &U) -> Result<Option<String>, TwoStageError> {
        Ok(match self.stage2_input(unit)? {
            Stage2Input::Text(t) => Some(t),
            Stage2Input::Lowest => None,
        })
    }

    pub fn predict<U: Unit + ?Sized>(&self, unit: &U) -> Result<(usize, Vec<f64>), TwoStageError> {
        let mut out = self.predict_refs(&[unit])?;
        Ok(out.pop().expect("one prediction per unit"))
    }

    /// Label and probability row per unit; the scorer is called once.
    pub fn predict_many<U: Unit>(&self, units: &[U]) -> Result<Vec<(usize, Vec<f64>)>, TwoStageError> {
        let refs: Vec<&U> = units.iter().collect();
        self.predict_refs(&refs)
    }

    fn predict_refs<U: Unit + ?Sized>(&self, units: &[&U]) -> Result<Vec<(usize, Vec<f64>)>, TwoStageError> {
        let inputs = units
            .iter()
            .map(|u| self.stage2_input(*u))
            .collect::<Result<Vec<_>, _>>()?;
        let texts: Vec<&str> = inputs
            .iter()
            .filter_map(|i| match i {
                Stage2Input::Text(t) => Some(t.as_str()),
                Stage2Input::Lowest => None,
            })
            .collect();
        let mut rows = self.scorer.predict_proba(&texts)?.into_iter();
        let c = self.scorer.num_classes();
        Ok(inputs
            .iter()
            .map(|i| {
                let row = match i {
                    Stage2Input::Text(_) => rows.next().expect("one row per text"),
                    Stage2Input::Lowest => {
                        let mut row = vec![0.0; c];
                        row[0] = 1.0;
                        row
                    }
                };
                (argmax(&row), row)
            })
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{AnnotationSet, Session, Source, Utterance};
    use crate::scorer::{ClassWeights, Hyper, LinearScorer};

    fn unit() -> Session {
        Session::new(
            "u",
            Source::Classroom,
            vec![
                Utterance::teacher("A. B."),
                Utterance::student(Some("K"), "Why?"),
                Utterance::teacher("C."),
            ],
        )
        .annotate(
            "v",
            AnnotationSet::new(vec![2]).with_relevance(vec![SentenceRef::new(0, 0), SentenceRef::new(2, 0)]),
        )
    }

    #[test]
    fn assembly_keeps_order() {
        let u = unit();
        let picked = [SentenceRef::new(2, 0), SentenceRef::new(0, 0)];
        assert_eq!(
            assemble_relevant(&u, &picked, InputFormat::TeacherOnly).unwrap(),
            "A. C."
        );
        assert_eq!(assemble_relevant(&u, &[], InputFormat::TeacherOnly).unwrap(), "");
        let with_student = [SentenceRef::new(0, 1), SentenceRef::new(1, 0)];
        assert_eq!(
            assemble_relevant(&u, &with_student, InputFormat::TeacherOnly).unwrap(),
            "B."
        );
        assert_eq!(
            assemble_relevant(&u, &with_student, InputFormat::TranscriptStyle).unwrap(),
            "teacher: B.\nstudent K: Why?"
        );
    }

    #[test]
    fn assembly_rejects_out_of_range() {
        let err = assemble_relevant(&unit(), &[SentenceRef::new(0, 5)], InputFormat::TeacherOnly).unwrap_err();
        assert!(err.to_string().contains("[0, 5]"));
    }

    #[test]
    fn candidates_follow_format() {
        assert_eq!(candidate_sentences(&unit(), InputFormat::TeacherOnly).len(), 3);
        assert_eq!(candidate_sentences(&unit(), InputFormat::TranscriptStyle).len(), 4);
    }

    fn scorer() -> LinearScorer {
        let texts = ["alpha beta", "alpha gamma", "delta beta", "delta gamma"];
        LinearScorer::fit(&texts, &[0, 0, 1, 1], 3, &ClassWeights::uniform(3), &Hyper::default()).unwrap()
    }

    #[test]
    fn empty_policies() {
        let u = unit();
        let none = RelevanceProvider::Spans(SpanMap::default());
        let s = scorer();
        let pipeline = |empty_policy| TwoStagePipeline {
            relevance: &none,
            scorer: &s,
            empty_policy,
            format: InputFormat::TeacherOnly,
        };
        assert_eq!(
            pipeline(EmptyPolicy::EmptyInput).stage2_text(&u).unwrap(),
            Some(String::new())
        );
        assert_eq!(
            pipeline(EmptyPolicy::FullText).stage2_text(&u).unwrap(),
            Some("A. B. C.".into())
        );
        assert_eq!(
            pipeline(EmptyPolicy::PredictLowest).predict(&u).unwrap(),
            (0, vec![1.0, 0.0, 0.0])
        );
    }

    #[test]
    fn gold_provider_equals_direct_scoring() {
        let u = unit();
        let s = scorer();
        let gold = RelevanceProvider::Gold("v".into());
        let pipeline = TwoStagePipeline {
            relevance: &gold,
            scorer: &s,
            empty_policy: EmptyPolicy::EmptyInput,
            format: InputFormat::TeacherOnly,
        };
        let (label, row) = pipeline.predict(&u).unwrap();
        assert_eq!(row, s.proba_one("A. C."));
        assert_eq!(label, argmax(&row));
    }

    #[test]
    fn all_provider_with_full_text_matches_single_stage() {
        let u = unit();
        let s = scorer();
        let all = RelevanceProvider::All;
        let pipeline = TwoStagePipeline {
            relevance: &all,
            scorer: &s,
            empty_policy: EmptyPolicy::FullText,
            format: InputFormat::TeacherOnly,
        };
        assert_eq!(
            pipeline.predict(&u).unwrap().1,
            s.proba_one(&format_unit(&u, InputFormat::TeacherOnly))
        );
    }
}
