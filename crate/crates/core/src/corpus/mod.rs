//! Transcript data model, ingestion, input formatting, segmentation and splitting.

mod format;
mod io;
mod segment;
mod sentence;
mod split;

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

pub use format::{format_teacher_only, format_transcript_style, format_unit, InputFormat};
pub use io::{ingest_corpus, ingest_str, write_corpus, write_jsonl};
pub use segment::{segment_session, SegmentPolicy};
pub use sentence::sentence_split;
pub use split::{split_dataset, SplitAssignment, SplitRatios, SplitRole};

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("corpus rejected, {} malformed line(s):\n{}", .0.len(), render_diagnostics(.0))]
    Schema(Vec<LineDiagnostic>),
    #[error("invalid record: {0}")]
    InvalidRecord(String),
    #[error("segmentation precondition failed: {0}")]
    Segmentation(String),
    #[error("invalid split request: {0}")]
    Split(String),
}

/// One rejected line of a corpus file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LineDiagnostic {
    /// 1-based line number.
    pub line: usize,
    pub message: String,
}

fn render_diagnostics(diags: &[LineDiagnostic]) -> String {
    diags
        .iter()
        .map(|d| format!("  line {}: {}", d.line, d.message))
        .collect::<Vec<_>>()
        .join("\n")
}

/// Who spoke an utterance.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Speaker {
    Teacher,
    /// A single student, optionally carrying an anonymized id.
    Student(Option<String>),
    MultipleStudents,
}

impl Speaker {
    pub fn is_teacher(&self) -> bool {
        matches!(self, Speaker::Teacher)
    }
}

impl fmt::Display for Speaker {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Speaker::Teacher => f.write_str("teacher"),
            Speaker::Student(Some(id)) => write!(f, "student {id}"),
            Speaker::Student(None) => f.write_str("student"),
            Speaker::MultipleStudents => f.write_str("multiple students"),
        }
    }
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum SpeakerRepr {
    Tag(String),
    Student(StudentRepr),
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct StudentRepr {
    student: String,
}

impl Serialize for Speaker {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let repr = match self {
            Speaker::Teacher => SpeakerRepr::Tag("teacher".into()),
            Speaker::Student(None) => SpeakerRepr::Tag("student".into()),
            Speaker::Student(Some(id)) => SpeakerRepr::Student(StudentRepr { student: id.clone() }),
            Speaker::MultipleStudents => SpeakerRepr::Tag("multiple_students".into()),
        };
        repr.serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for Speaker {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        match SpeakerRepr::deserialize(deserializer)? {
            SpeakerRepr::Tag(tag) => match tag.as_str() {
                "teacher" => Ok(Speaker::Teacher),
                "student" => Ok(Speaker::Student(None)),
                "multiple_students" => Ok(Speaker::MultipleStudents),
                other => Err(serde::de::Error::custom(format!(
                    "unknown speaker {other:?}, expected teacher, student, {{\"student\": id}} or multiple_students"
                ))),
            },
            SpeakerRepr::Student(s) => Ok(Speaker::Student(Some(s.student))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Utterance {
    pub speaker: Speaker,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_start: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_end: Option<f64>,
}

impl Utterance {
    pub fn new(speaker: Speaker, text: impl Into<String>) -> Self {
        Self {
            speaker,
            text: text.into(),
            t_start: None,
            t_end: None,
        }
    }

    pub fn teacher(text: impl Into<String>) -> Self {
        Self::new(Speaker::Teacher, text)
    }

    pub fn student(id: Option<&str>, text: impl Into<String>) -> Self {
        Self::new(Speaker::Student(id.map(str::to_owned)), text)
    }

    pub fn with_times(mut self, t_start: f64, t_end: f64) -> Self {
        self.t_start = Some(t_start);
        self.t_end = Some(t_end);
        self
    }

    pub fn sentences(&self) -> Vec<String> {
        sentence_split(&self.text)
    }

    fn validate(&self) -> Result<(), String> {
        if self.text.trim().is_empty() {
            return Err("utterance text is empty".into());
        }
        if let (Some(start), Some(end)) = (self.t_start, self.t_end) {
            if end.is_nan() || start.is_nan() || end < start {
                return Err(format!("t_end {end} precedes t_start {start}"));
            }
        }
        Ok(())
    }
}

/// Position of a sentence inside a unit: utterance index, then sentence index
/// within that utterance's [`sentence_split`] output.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(from = "(usize, usize)", into = "(usize, usize)")]
pub struct SentenceRef {
    pub utterance_index: usize,
    pub sentence_index: usize,
}

impl SentenceRef {
    pub fn new(utterance_index: usize, sentence_index: usize) -> Self {
        Self {
            utterance_index,
            sentence_index,
        }
    }
}

impl From<(usize, usize)> for SentenceRef {
    fn from((u, s): (usize, usize)) -> Self {
        Self::new(u, s)
    }
}

impl From<SentenceRef> for (usize, usize) {
    fn from(r: SentenceRef) -> Self {
        (r.utterance_index, r.sentence_index)
    }
}

impl fmt::Display for SentenceRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}, {}]", self.utterance_index, self.sentence_index)
    }
}

/// Per-variable annotations of one unit.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnnotationSet {
    /// One rating per rater, each in 1..=3.
    pub ratings: Vec<u8>,
    /// Evidence sentences selected by raters, when collected.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub relevance: Option<Vec<SentenceRef>>,
}

impl AnnotationSet {
    pub fn new(ratings: Vec<u8>) -> Self {
        Self {
            ratings,
            relevance: None,
        }
    }

    pub fn with_relevance(mut self, refs: Vec<SentenceRef>) -> Self {
        self.relevance = Some(refs);
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Source {
    Simulation,
    Classroom,
}

impl fmt::Display for Source {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Source::Simulation => "simulation",
            Source::Classroom => "classroom",
        })
    }
}

/// One rated transcript: a simulation session or a classroom segment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Session {
    pub session_id: String,
    pub source: Source,
    pub utterances: Vec<Utterance>,
    pub annotations: BTreeMap<String, AnnotationSet>,
}

impl Session {
    pub fn new(session_id: impl Into<String>, source: Source, utterances: Vec<Utterance>) -> Self {
        Self {
            session_id: session_id.into(),
            source,
            utterances,
            annotations: BTreeMap::new(),
        }
    }

    pub fn annotate(mut self, variable: impl Into<String>, set: AnnotationSet) -> Self {
        self.annotations.insert(variable.into(), set);
        self
    }

    /// Sentence segmentation of every utterance, in order.
    pub fn sentences(&self) -> Vec<Vec<String>> {
        self.utterances.iter().map(Utterance::sentences).collect()
    }

    /// Checks record-level invariants, returning the first violation.
    pub fn validate(&self) -> Result<(), String> {
        if self.session_id.is_empty() {
            return Err("session_id is empty".into());
        }
        for (i, utt) in self.utterances.iter().enumerate() {
            utt.validate().map_err(|e| format!("utterance {i}: {e}"))?;
        }
        let sentence_counts: Vec<usize> = self.sentences().iter().map(Vec::len).collect();
        for (variable, set) in &self.annotations {
            if set.ratings.is_empty() {
                return Err(format!("variable {variable:?} has no ratings"));
            }
            if let Some(bad) = set.ratings.iter().find(|r| !(1..=3).contains(*r)) {
                return Err(format!("variable {variable:?} has rating {bad} outside 1..=3"));
            }
            for r in set.relevance.iter().flatten() {
                let ok = sentence_counts
                    .get(r.utterance_index)
                    .is_some_and(|&n| r.sentence_index < n);
                if !ok {
                    return Err(format!("variable {variable:?} has dangling sentence reference {r}"));
                }
            }
        }
        Ok(())
    }
}

/// A contiguous slice of a session to which one set of ratings applies.
#[derive(Debug, Clone, PartialEq)]
pub struct Segment {
    pub parent_session_id: String,
    pub segment_index: usize,
    /// Offset of the first utterance within the parent session.
    pub utterance_offset: usize,
    pub utterances: Vec<Utterance>,
    pub annotations: BTreeMap<String, AnnotationSet>,
}

impl Segment {
    /// Identifier used when a segment is scored as a standalone unit.
    pub fn unit_id(&self) -> String {
        format!("{}#{}", self.parent_session_id, self.segment_index)
    }

    pub fn into_session(self, source: Source) -> Session {
        Session {
            session_id: self.unit_id(),
            source,
            utterances: self.utterances,
            annotations: self.annotations,
        }
    }
}

/// Anything that can be formatted and scored: sessions and segments.
pub trait Unit {
    fn unit_id(&self) -> String;
    fn utterances(&self) -> &[Utterance];
    fn annotations(&self) -> &BTreeMap<String, AnnotationSet>;
}

impl Unit for Session {
    fn unit_id(&self) -> String {
        self.session_id.clone()
    }
    fn utterances(&self) -> &[Utterance] {
        &self.utterances
    }
    fn annotations(&self) -> &BTreeMap<String, AnnotationSet> {
        &self.annotations
    }
}

impl<T: Unit + ?Sized> Unit for &T {
    fn unit_id(&self) -> String {
        (**self).unit_id()
    }
    fn utterances(&self) -> &[Utterance] {
        (**self).utterances()
    }
    fn annotations(&self) -> &BTreeMap<String, AnnotationSet> {
        (**self).annotations()
    }
}

impl Unit for Segment {
    fn unit_id(&self) -> String {
        Segment::unit_id(self)
    }
    fn utterances(&self) -> &[Utterance] {
        &self.utterances
    }
    fn annotations(&self) -> &BTreeMap<String, AnnotationSet> {
        &self.annotations
    }
}

/// An ordered collection of sessions with unique ids.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Corpus {
    pub sessions: Vec<Session>,
}

impl Corpus {
    pub fn new(sessions: Vec<Session>) -> Result<Self, CorpusError> {
        let mut seen = std::collections::HashSet::new();
        for s in &sessions {
            s.validate()
                .map_err(|e| CorpusError::InvalidRecord(format!("{}: {e}", s.session_id)))?;
            if !seen.insert(s.session_id.as_str()) {
                return Err(CorpusError::InvalidRecord(format!(
                    "duplicate session_id {:?}",
                    s.session_id
                )));
            }
        }
        Ok(Self { sessions })
    }

    pub fn len(&self) -> usize {
        self.sessions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sessions.is_empty()
    }

    pub fn ids(&self) -> Vec<String> {
        self.sessions.iter().map(|s| s.session_id.clone()).collect()
    }

    pub fn get(&self, session_id: &str) -> Option<&Session> {
        self.sessions.iter().find(|s| s.session_id == session_id)
    }

    /// Variables annotated on at least one session, sorted.
    pub fn variables(&self) -> Vec<String> {
        let mut names: Vec<String> = self
            .sessions
            .iter()
            .flat_map(|s| s.annotations.keys().cloned())
            .collect();
        names.sort();
        names.dedup();
        names
    }

    /// Replaces every session with its segments under `policy`. Segment ids are
    /// `<session_id>#<segment_index>`.
    pub fn segmented(&self, policy: SegmentPolicy) -> Result<Corpus, CorpusError> {
        let mut sessions = Vec::new();
        for s in &self.sessions {
            for seg in segment_session(s, policy)? {
                sessions.push(seg.into_session(s.source));
            }
        }
        Corpus::new(sessions)
    }
}
