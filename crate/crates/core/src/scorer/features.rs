use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::lexical::{ngrams, tokenize};

/// Sorted `(column, value)` pairs.
pub type SparseVector = Vec<(usize, f64)>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct VocabConfig {
    pub ngram_min: usize,
    pub ngram_max: usize,
    /// Minimum number of training documents an n-gram must occur in.
    pub min_df: usize,
}

impl Default for VocabConfig {
    fn default() -> Self {
        Self {
            ngram_min: 1,
            ngram_max: 2,
            min_df: 2,
        }
    }
}

/// n-gram columns with smoothed idf weights, built from training texts only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(from = "VocabRepr", into = "VocabRepr")]
pub struct FeatureVocab {
    pub config: VocabConfig,
    terms: Vec<String>,
    idf: Vec<f64>,
    index: HashMap<String, usize>,
}

#[derive(Serialize, Deserialize)]
struct VocabRepr {
    config: VocabConfig,
    terms: Vec<String>,
    idf: Vec<f64>,
}

impl From<VocabRepr> for FeatureVocab {
    fn from(r: VocabRepr) -> Self {
        let index = r.terms.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
        Self {
            config: r.config,
            terms: r.terms,
            idf: r.idf,
            index,
        }
    }
}

impl From<FeatureVocab> for VocabRepr {
    fn from(v: FeatureVocab) -> Self {
        Self {
            config: v.config,
            terms: v.terms,
            idf: v.idf,
        }
    }
}

fn doc_ngrams(text: &str, config: &VocabConfig) -> Vec<String> {
    let tokens = tokenize(text);
    (config.ngram_min.max(1)..=config.ngram_max)
        .flat_map(|n| ngrams(&tokens, n).collect::<Vec<_>>())
        .collect()
}

impl FeatureVocab {
    /// Columns are the n-grams reaching `min_df`, in lexicographic order, with
    /// `idf = ln((1 + N) / (1 + df)) + 1`.
    pub fn build<S: AsRef<str>>(texts: &[S], config: VocabConfig) -> Self {
        let mut df: BTreeMap<String, usize> = BTreeMap::new();
        for text in texts {
            let unique: BTreeSet<String> = doc_ngrams(text.as_ref(), &config).into_iter().collect();
            for gram in unique {
                *df.entry(gram).or_default() += 1;
            }
        }
        let n_docs = texts.len() as f64;
        let (terms, idf): (Vec<String>, Vec<f64>) = df
            .into_iter()
            .filter(|(_, d)| *d >= config.min_df)
            .map(|(term, d)| {
                let idf = ((1.0 + n_docs) / (1.0 + d as f64)).ln() + 1.0;
                (term, idf)
            })
            .unzip();
        VocabRepr { config, terms, idf }.into()
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn column(&self, ngram: &str) -> Option<usize> {
        self.index.get(ngram).copied()
    }

    pub fn term(&self, column: usize) -> &str {
        &self.terms[column]
    }

    /// L2-normalized tf·idf vector; n-grams outside the vocabulary are ignored.
    pub fn featurize(&self, text: &str) -> SparseVector {
        let mut tf: BTreeMap<usize, f64> = BTreeMap::new();
        for gram in doc_ngrams(text, &self.config) {
            if let Some(&col) = self.index.get(&gram) {
                *tf.entry(col).or_default() += 1.0;
            }
        }
        let mut vec: SparseVector = tf
            .into_iter()
            .map(|(col, count)| (col, count * self.idf[col]))
            .collect();
        let norm = vec.iter().map(|(_, v)| v * v).sum::<f64>().sqrt();
        if norm > 0.0 {
            for (_, v) in &mut vec {
                *v /= norm;
            }
        }
        vec
    }
}
