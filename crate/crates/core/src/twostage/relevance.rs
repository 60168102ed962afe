use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{candidate_sentences, TwoStageError};
use crate::corpus::{InputFormat, Unit};
use crate::metrics::{macro_f1, majority_class};
use crate::scorer::{ClassWeights, Hyper, LinearScorer, Scorer};

const BINARY: [usize; 2] = [0, 1];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RelevanceOptions {
    /// Inverse-frequency class weights for the relevant/irrelevant task.
    pub weighted: bool,
    pub hyper: Hyper,
    pub format: InputFormat,
}

impl Default for RelevanceOptions {
    fn default() -> Self {
        Self {
            weighted: true,
            hyper: Hyper::default(),
            format: InputFormat::TeacherOnly,
        }
    }
}

/// Sentence classifier over {irrelevant, relevant}.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RelevanceModel {
    /// Training data held a single class.
    Constant(bool),
    Linear(Box<LinearScorer>),
}

impl RelevanceModel {
    pub fn predict(&self, sentences: &[&str]) -> Result<Vec<bool>, TwoStageError> {
        if sentences.is_empty() {
            return Ok(Vec::new());
        }
        Ok(match self {
            Self::Constant(v) => vec![*v; sentences.len()],
            Self::Linear(m) => m.predict(sentences)?.into_iter().map(|l| l == 1).collect(),
        })
    }
}

/// (sentence, is-relevant) pairs from the units that carry relevance
/// annotations for `variable`, plus the number of such units.
pub fn relevance_examples<U: Unit>(
    units: &[U],
    variable: &str,
    format: InputFormat,
) -> (Vec<String>, Vec<usize>, usize) {
    let mut texts = Vec::new();
    let mut labels = Vec::new();
    let mut annotated = 0;
    for unit in units {
        let Some(refs) = unit.annotations().get(variable).and_then(|a| a.relevance.as_ref()) else {
            continue;
        };
        annotated += 1;
        for (r, s) in candidate_sentences(unit, format) {
            labels.push(usize::from(refs.contains(&r)));
            texts.push(s);
        }
    }
    (texts, labels, annotated)
}

pub fn fit_relevance<U: Unit>(
    units: &[U],
    variable: &str,
    options: &RelevanceOptions,
) -> Result<RelevanceModel, TwoStageError> {
    let (texts, labels, annotated) = relevance_examples(units, variable, options.format);
    if annotated == 0 {
        return Err(TwoStageError::NoAnnotatedUnits(variable.to_string()));
    }
    let positives = labels.iter().filter(|&&l| l == 1).count();
    if positives == 0 || positives == labels.len() {
        return Ok(RelevanceModel::Constant(positives > 0));
    }
    let weights = if options.weighted {
        ClassWeights::from_labels(&labels, 2)?
    } else {
        ClassWeights::uniform(2)
    };
    Ok(RelevanceModel::Linear(Box::new(LinearScorer::fit(
        &texts,
        &labels,
        2,
        &weights,
        &options.hyper,
    )?)))
}

/// Stage-1 quality on held-out units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelevanceReport {
    pub variable: String,
    pub avg_relevant_per_session: f64,
    pub majority_f1: f64,
    pub macro_f1: f64,
    pub positive_f1: f64,
    pub sentences: usize,
}

/// Scores `model` on the annotated sentences of `eval`. The majority
/// baseline predicts the most frequent label of `train` for every sentence.
pub fn evaluate_relevance<U: Unit>(
    model: &RelevanceModel,
    train: &[U],
    eval: &[U],
    variable: &str,
    format: InputFormat,
) -> Result<RelevanceReport, TwoStageError> {
    let (_, train_labels, _) = relevance_examples(train, variable, format);
    let (texts, golds, annotated) = relevance_examples(eval, variable, format);
    if annotated == 0 {
        return Err(TwoStageError::NoAnnotatedUnits(variable.to_string()));
    }
    let refs: Vec<&str> = texts.iter().map(String::as_str).collect();
    let preds: Vec<usize> = model.predict(&refs)?.into_iter().map(usize::from).collect();
    let result = macro_f1(&preds, &golds, &BINARY)?;
    let majority = majority_class(&train_labels).unwrap_or(0);
    let baseline = macro_f1(&vec![majority; golds.len()], &golds, &BINARY)?;
    let relevant = golds.iter().filter(|&&g| g == 1).count();
    Ok(RelevanceReport {
        variable: variable.to_string(),
        avg_relevant_per_session: relevant as f64 / annotated as f64,
        majority_f1: baseline.macro_f1,
        macro_f1: result.macro_f1,
        positive_f1: result.class_f1(1).unwrap_or(0.0),
        sentences: golds.len(),
    })
}

pub fn write_relevance_csv(path: impl AsRef<Path>, reports: &[RelevanceReport]) -> Result<(), TwoStageError> {
    let path = path.as_ref();
    let err = |e: csv::Error| TwoStageError::File {
        path: path.display().to_string(),
        message: e.to_string(),
    };
    let mut w = csv::Writer::from_path(path).map_err(err)?;
    w.write_record([
        "variable",
        "avg_relevant_per_session",
        "majority_f1",
        "macro_f1",
        "positive_f1",
    ])
    .map_err(err)?;
    for r in reports {
        w.write_record([
            r.variable.clone(),
            format!("{:.2}", r.avg_relevant_per_session),
            format!("{:.4}", r.majority_f1),
            format!("{:.4}", r.macro_f1),
            format!("{:.4}", r.positive_f1),
        ])
        .map_err(err)?;
    }
    w.flush().map_err(|e| err(e.into()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{AnnotationSet, SentenceRef, Session, Source, Utterance};
    use crate::synth::{generate, SynthConfig};

    // Every relevant sentence carries the same marker token.
    fn planted(n: usize, seed: u64) -> Vec<Session> {
        let config = SynthConfig {
            n_sessions: n,
            seed,
            class_fractions: vec![1.0, 0.0, 0.0],
            signal_tokens_per_class: 1,
            ..SynthConfig::default()
        };
        generate(&config).unwrap().sessions
    }

    #[test]
    fn planted_markers_are_recovered() {
        let train = planted(120, 1);
        let test = planted(60, 2);
        let model = fit_relevance(&train, "objective", &RelevanceOptions::default()).unwrap();
        let report = evaluate_relevance(&model, &train, &test, "objective", InputFormat::TeacherOnly).unwrap();
        assert!(report.positive_f1 >= 0.95, "{report:?}");
        assert!(report.macro_f1 > report.majority_f1);
    }

    #[test]
    fn weighting_helps_the_sparse_positive_class() {
        let train = planted(120, 1);
        let test = planted(60, 2);
        let f1 = |weighted| {
            let options = RelevanceOptions {
                weighted,
                ..RelevanceOptions::default()
            };
            let model = fit_relevance(&train, "objective", &options).unwrap();
            evaluate_relevance(&model, &train, &test, "objective", InputFormat::TeacherOnly)
                .unwrap()
                .positive_f1
        };
        assert!(f1(true) > f1(false));
    }

    fn marked(refs: Vec<SentenceRef>) -> Session {
        Session::new("a", Source::Simulation, vec![Utterance::teacher("One here. Two here.")])
            .annotate("v", AnnotationSet::new(vec![2]).with_relevance(refs))
    }

    #[test]
    fn all_relevant_degenerates() {
        let units = vec![marked(vec![SentenceRef::new(0, 0), SentenceRef::new(0, 1)])];
        let model = fit_relevance(&units, "v", &RelevanceOptions::default()).unwrap();
        assert_eq!(model, RelevanceModel::Constant(true));
        let report = evaluate_relevance(&model, &units, &units, "v", InputFormat::TeacherOnly).unwrap();
        assert_eq!(report.positive_f1, 1.0);
        assert_eq!(report.avg_relevant_per_session, 2.0);
    }

    #[test]
    fn no_relevant_sentences_is_trainable() {
        let units = vec![marked(vec![])];
        let model = fit_relevance(&units, "v", &RelevanceOptions::default()).unwrap();
        assert_eq!(model, RelevanceModel::Constant(false));
        let report = evaluate_relevance(&model, &units, &units, "v", InputFormat::TeacherOnly).unwrap();
        assert_eq!(report.positive_f1, 0.0);
    }

    #[test]
    fn unannotated_units_are_ignored() {
        let bare = Session::new("b", Source::Simulation, vec![Utterance::teacher("Only text.")])
            .annotate("v", AnnotationSet::new(vec![1]));
        let (texts, _, annotated) = relevance_examples(&[bare.clone(), marked(vec![])], "v", InputFormat::TeacherOnly);
        assert_eq!((texts.len(), annotated), (2, 1));
        assert!(matches!(
            fit_relevance(&[bare], "v", &RelevanceOptions::default()),
            Err(TwoStageError::NoAnnotatedUnits(_))
        ));
    }

    #[test]
    fn report_csv() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("rel.csv");
        let r = RelevanceReport {
            variable: "v".into(),
            avg_relevant_per_session: 0.7,
            majority_f1: 0.5,
            macro_f1: 0.75,
            positive_f1: 0.6,
            sentences: 10,
        };
        write_relevance_csv(&path, &[r]).unwrap();
        assert_eq!(
            std::fs::read_to_string(&path).unwrap(),
            "variable,avg_relevant_per_session,majority_f1,macro_f1,positive_f1\nv,0.70,0.5000,0.7500,0.6000\n"
        );
    }
}
