//! Tokenization, n-gram counting and informative-Dirichlet log-odds ratios.
//!
//! For an n-gram `w` with counts `y_a`, `y_b` in corpora of sizes `n_a`, `n_b`,
//! the prior is `α_w = prior_scale · (y_a + y_b)` and `α₀ = Σ α_w`:
//!
//! ```text
//! δ_w = ln[(y_a+α_w)/(n_a+α₀−y_a−α_w)] − ln[(y_b+α_w)/(n_b+α₀−y_b−α_w)]
//! σ²_w = 1/(y_a+α_w) + 1/(y_b+α_w)
//! z_w = δ_w / σ_w
//! ```
//!
//! An n-gram is flagged significant when `|z| > 1.96`.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::annotate::{to_binary, unit_label, BinaryLabel};
use crate::corpus::{format_teacher_only, Corpus, Session};

pub const Z_CRITICAL: f64 = 1.96;
pub const DEFAULT_PRIOR_SCALE: f64 = 0.01;

#[derive(Debug, Error)]
pub enum LexicalError {
    #[error("n-gram order must be 1, 2 or 3, got {0}")]
    BadOrder(usize),
    #[error("prior_scale must be positive, got {0}")]
    BadPrior(f64),
    #[error("both n-gram tables are empty")]
    EmptyVocabulary,
    #[error("n-gram tables have different orders ({0} vs {1})")]
    OrderMismatch(usize, usize),
    #[error("rating group {0} has no units for variable {1:?}")]
    EmptyGroup(&'static str, String),
    #[error("variable {0:?} is not annotated on any unit")]
    UnknownVariable(String),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

fn is_connector(c: char) -> bool {
    matches!(c, '\'' | '\u{2019}' | '-' | '.')
}

/// Lowercased word tokens. Apostrophes, hyphens and periods survive only
/// between two alphanumeric characters; every other non-alphanumeric
/// character separates tokens.
pub fn tokenize(text: &str) -> Vec<String> {
    let chars: Vec<char> = text.chars().collect();
    let mut tokens = Vec::new();
    let mut current = String::new();
    for (i, &c) in chars.iter().enumerate() {
        if c.is_alphanumeric() {
            current.extend(c.to_lowercase().filter(|l| l.is_alphanumeric()));
            continue;
        }
        let joins = is_connector(c)
            && i > 0
            && chars[i - 1].is_alphanumeric()
            && chars.get(i + 1).is_some_and(|n| n.is_alphanumeric());
        if joins {
            current.push(c);
        } else if !current.is_empty() {
            tokens.push(std::mem::take(&mut current));
        }
    }
    if !current.is_empty() {
        tokens.push(current);
    }
    tokens
}

/// n-grams of one token sequence, space-joined.
pub fn ngrams(tokens: &[String], n: usize) -> impl Iterator<Item = String> + '_ {
    tokens.windows(n.max(1)).filter(move |_| n > 0).map(|w| w.join(" "))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NgramTable {
    pub n: usize,
    pub counts: BTreeMap<String, u64>,
    pub total: u64,
}

impl NgramTable {
    pub fn empty(n: usize) -> Self {
        Self {
            n,
            counts: BTreeMap::new(),
            total: 0,
        }
    }

    pub fn count(&self, ngram: &str) -> u64 {
        self.counts.get(ngram).copied().unwrap_or(0)
    }
}

/// Sliding-window counts within each text; windows never cross texts.
pub fn count_ngrams<S: AsRef<str>>(texts: &[S], n: usize) -> Result<NgramTable, LexicalError> {
    if !(1..=3).contains(&n) {
        return Err(LexicalError::BadOrder(n));
    }
    let mut table = NgramTable::empty(n);
    for text in texts {
        let tokens = tokenize(text.as_ref());
        for gram in ngrams(&tokens, n) {
            *table.counts.entry(gram).or_default() += 1;
            table.total += 1;
        }
    }
    Ok(table)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LexicalScore {
    pub ngram: String,
    pub n: usize,
    pub count_a: u64,
    pub count_b: u64,
    pub delta: f64,
    pub z: f64,
    pub significant: bool,
}

/// Log-odds ratio and its standard deviation for one n-gram, given explicit
/// prior pseudo-counts.
pub fn log_odds_delta_sigma(y_a: f64, n_a: f64, y_b: f64, n_b: f64, alpha_w: f64, alpha_0: f64) -> (f64, f64) {
    let odds = |y: f64, n: f64| ((y + alpha_w) / (n + alpha_0 - y - alpha_w)).ln();
    let delta = odds(y_a, n_a) - odds(y_b, n_b);
    let sigma = (1.0 / (y_a + alpha_w) + 1.0 / (y_b + alpha_w)).sqrt();
    (delta, sigma)
}

/// Scores every n-gram in either table; positive z leans towards `table_a`.
/// Results are sorted by z descending, ties by n-gram.
pub fn log_odds_z(
    table_a: &NgramTable,
    table_b: &NgramTable,
    prior_scale: f64,
) -> Result<Vec<LexicalScore>, LexicalError> {
    if !prior_scale.is_finite() || prior_scale <= 0.0 {
        return Err(LexicalError::BadPrior(prior_scale));
    }
    if table_a.n != table_b.n {
        return Err(LexicalError::OrderMismatch(table_a.n, table_b.n));
    }
    let vocab: BTreeSet<&String> = table_a.counts.keys().chain(table_b.counts.keys()).collect();
    if vocab.is_empty() {
        return Err(LexicalError::EmptyVocabulary);
    }
    let pooled = |w: &str| (table_a.count(w) + table_b.count(w)) as f64;
    let alpha_0: f64 = vocab.iter().map(|w| prior_scale * pooled(w)).sum();
    let (n_a, n_b) = (table_a.total as f64, table_b.total as f64);

    let mut scores: Vec<LexicalScore> = vocab
        .into_iter()
        .map(|w| {
            let (y_a, y_b) = (table_a.count(w), table_b.count(w));
            let alpha_w = prior_scale * pooled(w);
            let (delta, sigma) = log_odds_delta_sigma(y_a as f64, n_a, y_b as f64, n_b, alpha_w, alpha_0);
            let z = delta / sigma;
            LexicalScore {
                ngram: w.clone(),
                n: table_a.n,
                count_a: y_a,
                count_b: y_b,
                delta,
                z,
                significant: z.abs() > Z_CRITICAL,
            }
        })
        .collect();
    sort_by_z_desc(&mut scores);
    Ok(scores)
}

fn sort_by_z_desc(scores: &mut [LexicalScore]) {
    scores.sort_by(|a, b| b.z.total_cmp(&a.z).then_with(|| a.ngram.cmp(&b.ngram)));
}

/// Texts used for lexical analysis of one unit: its annotated evidence
/// sentences when present, else the whole teacher text.
pub fn analysis_texts(session: &Session, variable: &str) -> Vec<String> {
    let refs = session.annotations.get(variable).and_then(|set| set.relevance.as_ref());
    match refs {
        Some(refs) => {
            let sentences = session.sentences();
            let mut refs = refs.clone();
            refs.sort();
            refs.dedup();
            refs.iter()
                .filter_map(|r| sentences.get(r.utterance_index)?.get(r.sentence_index).cloned())
                .collect()
        }
        None => vec![format_teacher_only(session)],
    }
}

/// The two ranked lists of a mid/high versus low comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatingLexicon {
    /// Highest z first: n-grams associated with mid and high ratings.
    pub mid_high: Vec<LexicalScore>,
    /// Lowest z first: n-grams associated with low ratings.
    pub low: Vec<LexicalScore>,
    /// Every scored n-gram, z descending.
    pub all: Vec<LexicalScore>,
}

/// Compares n-gram usage of mid/high-rated units against low-rated units.
pub fn top_ngrams_by_rating(
    corpus: &Corpus,
    variable: &str,
    n: usize,
    k: usize,
    prior_scale: f64,
) -> Result<RatingLexicon, LexicalError> {
    let mut pos_texts = Vec::new();
    let mut neg_texts = Vec::new();
    let mut annotated = 0;
    for session in &corpus.sessions {
        let Some(label) = unit_label(session, variable) else {
            continue;
        };
        annotated += 1;
        let texts = analysis_texts(session, variable);
        match to_binary(label) {
            BinaryLabel::Pos => pos_texts.extend(texts),
            BinaryLabel::Neg => neg_texts.extend(texts),
        }
    }
    if annotated == 0 {
        return Err(LexicalError::UnknownVariable(variable.to_owned()));
    }
    if pos_texts.is_empty() {
        return Err(LexicalError::EmptyGroup("mid/high", variable.to_owned()));
    }
    if neg_texts.is_empty() {
        return Err(LexicalError::EmptyGroup("low", variable.to_owned()));
    }
    let a = count_ngrams(&pos_texts, n)?;
    let b = count_ngrams(&neg_texts, n)?;
    let all = log_odds_z(&a, &b, prior_scale)?;
    let mid_high = all.iter().take(k).cloned().collect();
    let low = all.iter().rev().take(k).cloned().collect();
    Ok(RatingLexicon { mid_high, low, all })
}

/// Writes `ngram,n,count_a,count_b,delta,z,significant`, z descending.
pub fn write_scores_csv<W: Write>(scores: &[LexicalScore], out: W) -> Result<(), LexicalError> {
    let mut sorted = scores.to_vec();
    sort_by_z_desc(&mut sorted);
    let mut wtr = csv::Writer::from_writer(out);
    wtr.write_record(["ngram", "n", "count_a", "count_b", "delta", "z", "significant"])?;
    for s in &sorted {
        wtr.write_record([
            s.ngram.clone(),
            s.n.to_string(),
            s.count_a.to_string(),
            s.count_b.to_string(),
            format!("{:.6}", s.delta),
            format!("{:.6}", s.z),
            s.significant.to_string(),
        ])?;
    }
    wtr.flush().map_err(|e| LexicalError::Csv(e.into()))?;
    Ok(())
}
