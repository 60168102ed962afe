//! Synthetic corpora with planted rating signals.
//!
//! Each session gets a true rating per variable drawn from `class_fractions`.
//! A few planted sentences per variable carry signal tokens specific to that
//! variable and rating; they are recorded as the variable's relevance
//! annotation. The rest of the session is distractor sentences drawn from a
//! shared neutral vocabulary that never contains signal tokens.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{
    write_corpus, AnnotationSet, Corpus, CorpusError, SentenceRef, Session, Source, Speaker, Utterance,
};

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid synth config: {0}")]
    Config(String),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error("cannot read config {path}: {message}")]
    ConfigFile { path: String, message: String },
}

const NEUTRAL_WORDS: [&str; 60] = [
    "the", "we", "look", "at", "number", "this", "problem", "so", "now", "next", "here", "okay", "then", "is", "a",
    "and", "to", "it", "of", "that", "what", "see", "line", "side", "page", "table", "picture", "group", "first",
    "second", "part", "answer", "write", "down", "box", "count", "again", "each", "one", "two", "three", "four",
    "five", "more", "less", "same", "big", "small", "left", "right", "top", "bottom", "paper", "board", "class",
    "today", "story", "word", "time", "show",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub n_sessions: usize,
    /// Probability of each rating, Low first; two entries use Low and Mid only.
    pub class_fractions: Vec<f64>,
    pub variables: Vec<String>,
    /// Inclusive range of sentences per session.
    pub sentences_per_session: (usize, usize),
    /// Target share of distractor sentences in a session, in [0, 1).
    pub distractor_fraction: f64,
    /// Inclusive bounds on planted sentences per variable and session.
    pub relevant_per_session: (usize, usize),
    /// Inclusive range of words per sentence.
    pub words_per_sentence: (usize, usize),
    pub signal_tokens_per_class: usize,
    /// Signal tokens placed in each planted sentence.
    pub signal_per_sentence: usize,
    /// Probability that a planted signal token is replaced by a neutral word.
    pub signal_corruption: f64,
    pub neutral_vocab_size: usize,
    pub rater_count: usize,
    pub rater_noise: f64,
    pub source: Source,
    /// Share of utterances spoken by students (classroom only). Student
    /// utterances contain only distractor sentences.
    pub student_fraction: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n_sessions: 200,
            class_fractions: vec![0.5, 0.3, 0.2],
            variables: vec!["objective".into()],
            sentences_per_session: (8, 12),
            distractor_fraction: 0.7,
            relevant_per_session: (1, 4),
            words_per_sentence: (5, 9),
            signal_tokens_per_class: 3,
            signal_per_sentence: 1,
            signal_corruption: 0.0,
            neutral_vocab_size: 50,
            rater_count: 1,
            rater_noise: 0.0,
            source: Source::Simulation,
            student_fraction: 0.0,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn from_json_file(path: impl AsRef<Path>) -> Result<Self, SynthError> {
        let path = path.as_ref();
        let raw = std::fs::read_to_string(path).map_err(|e| SynthError::ConfigFile {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        serde_json::from_str(&raw).map_err(|e| SynthError::ConfigFile {
            path: path.display().to_string(),
            message: e.to_string(),
        })
    }

    pub fn num_classes(&self) -> usize {
        self.class_fractions.len()
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: String| Err(SynthError::Config(m));
        let c = self.class_fractions.len();
        if !(2..=3).contains(&c) {
            return bad(format!("class_fractions needs 2 or 3 entries, got {c}"));
        }
        if self.class_fractions.iter().any(|f| !(0.0..=1.0).contains(f)) {
            return bad("class_fractions must lie in [0, 1]".into());
        }
        let sum: f64 = self.class_fractions.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return bad(format!("class_fractions must sum to 1, got {sum}"));
        }
        if !(0.0..1.0).contains(&self.distractor_fraction) {
            return bad("distractor_fraction must be in [0, 1)".into());
        }
        for (name, v) in [
            ("signal_corruption", self.signal_corruption),
            ("rater_noise", self.rater_noise),
            ("student_fraction", self.student_fraction),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return bad(format!("{name} must be in [0, 1]"));
            }
        }
        for (name, (lo, hi)) in [
            ("sentences_per_session", self.sentences_per_session),
            ("relevant_per_session", self.relevant_per_session),
            ("words_per_sentence", self.words_per_sentence),
        ] {
            if lo > hi {
                return bad(format!("{name} range is empty: ({lo}, {hi})"));
            }
        }
        if self.sentences_per_session.1 == 0 {
            return bad("sessions need at least one sentence".into());
        }
        if self.words_per_sentence.0 == 0 {
            return bad("sentences need at least one word".into());
        }
        if self.neutral_vocab_size == 0 || self.neutral_vocab_size > NEUTRAL_WORDS.len() {
            return bad(format!("neutral_vocab_size must be in 1..={}", NEUTRAL_WORDS.len()));
        }
        if self.rater_count == 0 {
            return bad("rater_count must be at least 1".into());
        }
        if self.variables.is_empty() {
            return bad("at least one variable is required".into());
        }
        let mut names = self.variables.clone();
        names.sort();
        names.dedup();
        if names.len() != self.variables.len() {
            return bad("variable names must be unique".into());
        }
        Ok(())
    }

    pub fn neutral_vocab(&self) -> &'static [&'static str] {
        &NEUTRAL_WORDS[..self.neutral_vocab_size]
    }

    /// Signal tokens of variable `var_index` and class `class`. They contain a
    /// digit, so they never collide with the neutral vocabulary.
    pub fn signal_tokens(&self, var_index: usize, class: usize) -> Vec<String> {
        (0..self.signal_tokens_per_class)
            .map(|k| format!("sig{var_index}c{class}t{k}"))
            .collect()
    }
}

struct Planted {
    text: String,
    /// Variable index for planted sentences, `None` for distractors.
    variable: Option<usize>,
}

fn sentence<R: Rng>(rng: &mut R, config: &SynthConfig, signal: &[String]) -> String {
    let (lo, hi) = config.words_per_sentence;
    let neutral = config.neutral_vocab();
    let mut words: Vec<String> = (0..rng.gen_range(lo..=hi))
        .map(|_| neutral.choose(rng).expect("non-empty vocab").to_string())
        .collect();
    if !signal.is_empty() {
        for _ in 0..config.signal_per_sentence {
            let token = if rng.gen_bool(config.signal_corruption) {
                neutral.choose(rng).expect("non-empty vocab").to_string()
            } else {
                signal.choose(rng).expect("non-empty signal").clone()
            };
            let at = rng.gen_range(0..=words.len());
            words.insert(at, token);
        }
    }
    let mut text = words.join(" ");
    if let Some(first) = text.get_mut(0..1) {
        first.make_ascii_uppercase();
    }
    text.push('.');
    text
}

fn draw_class<R: Rng>(rng: &mut R, fractions: &[f64]) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for (i, f) in fractions.iter().enumerate() {
        acc += f;
        if u < acc {
            return i;
        }
    }
    fractions.len() - 1
}

fn rater_rating<R: Rng>(rng: &mut R, truth: u8, noise: f64, max: u8) -> u8 {
    if !rng.gen_bool(noise) {
        return truth;
    }
    let mut neighbours = Vec::with_capacity(2);
    if truth > 1 {
        neighbours.push(truth - 1);
    }
    if truth < max {
        neighbours.push(truth + 1);
    }
    *neighbours.choose(rng).unwrap_or(&truth)
}

fn generate_session<R: Rng>(rng: &mut R, config: &SynthConfig, index: usize) -> Session {
    let classes: Vec<usize> = config
        .variables
        .iter()
        .map(|_| draw_class(rng, &config.class_fractions))
        .collect();

    let (s_lo, s_hi) = config.sentences_per_session;
    let total = rng.gen_range(s_lo..=s_hi);
    let (r_lo, r_hi) = config.relevant_per_session;
    let mut sentences: Vec<Planted> = Vec::new();
    for (v, &class) in classes.iter().enumerate() {
        let target = (total as f64 * (1.0 - config.distractor_fraction)).round() as usize;
        let count = target.clamp(r_lo, r_hi);
        let signal = config.signal_tokens(v, class);
        for _ in 0..count {
            sentences.push(Planted {
                text: sentence(rng, config, &signal),
                variable: Some(v),
            });
        }
    }
    let distractors = total.saturating_sub(sentences.len());
    for _ in 0..distractors {
        sentences.push(Planted {
            text: sentence(rng, config, &[]),
            variable: None,
        });
    }
    sentences.shuffle(rng);

    // group consecutive sentences into utterances of 1-3 sentences
    let mut utterances = Vec::new();
    let mut refs: Vec<Vec<SentenceRef>> = vec![Vec::new(); config.variables.len()];
    let classroom = config.source == Source::Classroom;
    let mut clock = 0.0;
    let mut i = 0;
    while i < sentences.len() {
        let take = rng.gen_range(1..=3).min(sentences.len() - i);
        let chunk = &sentences[i..i + take];
        let has_planted = chunk.iter().any(|s| s.variable.is_some());
        let speaker = if classroom && !has_planted && rng.gen_bool(config.student_fraction) {
            match rng.gen_range(0..4) {
                0 => Speaker::MultipleStudents,
                1 => Speaker::Student(None),
                k => Speaker::Student(Some(format!("S{k}"))),
            }
        } else {
            Speaker::Teacher
        };
        let utt_index = utterances.len();
        for (sent_index, s) in chunk.iter().enumerate() {
            if let Some(v) = s.variable {
                refs[v].push(SentenceRef::new(utt_index, sent_index));
            }
        }
        let text = chunk.iter().map(|s| s.text.as_str()).collect::<Vec<_>>().join(" ");
        let mut utt = Utterance::new(speaker, text);
        if classroom {
            let duration = 2.0 * take as f64 + rng.gen_range(0..4) as f64;
            utt = utt.with_times(clock, clock + duration);
            clock += duration + 1.0;
        }
        utterances.push(utt);
        i += take;
    }

    let max_rating = config.num_classes() as u8;
    let mut session = Session::new(format!("syn-{index:05}"), config.source, utterances);
    for (v, name) in config.variables.iter().enumerate() {
        let truth = classes[v] as u8 + 1;
        let ratings = (0..config.rater_count)
            .map(|_| rater_rating(rng, truth, config.rater_noise, max_rating))
            .collect();
        session = session.annotate(
            name.clone(),
            AnnotationSet::new(ratings).with_relevance(refs[v].clone()),
        );
    }
    session
}

/// Planted truth for every session and variable, as zero-based class indices.
pub fn planted_classes(corpus: &Corpus, config: &SynthConfig) -> Vec<Vec<Option<usize>>> {
    corpus
        .sessions
        .iter()
        .map(|s| {
            config
                .variables
                .iter()
                .enumerate()
                .map(|(v, name)| {
                    let refs = s.annotations.get(name)?.relevance.as_ref()?;
                    let sentences = s.sentences();
                    (0..config.num_classes()).find(|&c| {
                        let tokens = config.signal_tokens(v, c);
                        refs.iter().any(|r| {
                            let text = &sentences[r.utterance_index][r.sentence_index];
                            tokens.iter().any(|t| {
                                text.split(|ch: char| !ch.is_alphanumeric())
                                    .any(|w| w.eq_ignore_ascii_case(t))
                            })
                        })
                    })
                })
                .collect()
        })
        .collect()
}

/// Generates a corpus; the same config always yields the same corpus.
pub fn generate(config: &SynthConfig) -> Result<Corpus, SynthError> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let sessions = (0..config.n_sessions)
        .map(|i| generate_session(&mut rng, config, i))
        .collect();
    Ok(Corpus::new(sessions)?)
}

/// Writes the corpus as JSONL.
pub fn emit(corpus: &Corpus, path: impl AsRef<Path>) -> Result<(), SynthError> {
    Ok(write_corpus(corpus, path)?)
}
