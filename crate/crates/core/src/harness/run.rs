use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{ExperimentConfig, Setting, Stage2TrainInput, Technique};
use super::HarnessError;
use crate::annotate::{unit_label, RatingLabel};
use crate::corpus::{format_unit, ingest_corpus, split_dataset, Corpus, Session, SplitRole, Unit};
use crate::metrics::{macro_f1, majority_baseline, summarize_runs, EvalResult, RunSummary};
use crate::scorer::{ClassWeights, Hyper, LinearScorer, Scorer, ScorerError};
use crate::twostage::{
    assemble_relevant, evaluate_relevance, fit_relevance, EmptyPolicy, RelevanceOptions, RelevanceProvider,
    RelevanceReport, TwoStagePipeline,
};

/// Train/dev/test units of one variable with their aggregated labels.
#[derive(Debug, Clone)]
pub struct Fold<'a> {
    pub train: Vec<&'a Session>,
    pub dev: Vec<&'a Session>,
    pub test: Vec<&'a Session>,
    pub train_labels: Vec<RatingLabel>,
    pub dev_labels: Vec<RatingLabel>,
    pub test_labels: Vec<RatingLabel>,
}

impl<'a> Fold<'a> {
    /// Splits the units labelled for `variable`; unlabelled units are left out.
    pub fn build(
        corpus: &'a Corpus,
        variable: &str,
        config: &ExperimentConfig,
        repeat_seed: u64,
    ) -> Result<Self, HarnessError> {
        let labelled: Vec<(&Session, RatingLabel)> = corpus
            .sessions
            .iter()
            .filter_map(|s| unit_label(s, variable).map(|l| (s, l)))
            .collect();
        let ids: Vec<String> = labelled.iter().map(|(s, _)| s.session_id.clone()).collect();
        let seed = if config.split.resplit_each_repeat {
            config.split.seed.wrapping_add(repeat_seed)
        } else {
            config.split.seed
        };
        let assignment = split_dataset(&ids, config.split.ratios, seed).map_err(|e| HarnessError::Fold {
            variable: variable.to_string(),
            message: e.to_string(),
        })?;
        let roles = assignment.roles();
        let mut fold = Fold {
            train: Vec::new(),
            dev: Vec::new(),
            test: Vec::new(),
            train_labels: Vec::new(),
            dev_labels: Vec::new(),
            test_labels: Vec::new(),
        };
        for (s, l) in labelled {
            let (units, labels) = match roles[s.session_id.as_str()] {
                SplitRole::Train => (&mut fold.train, &mut fold.train_labels),
                SplitRole::Dev => (&mut fold.dev, &mut fold.dev_labels),
                SplitRole::Test => (&mut fold.test, &mut fold.test_labels),
            };
            units.push(s);
            labels.push(l);
        }
        Ok(fold)
    }
}

fn indices(labels: &[RatingLabel], setting: Setting) -> Vec<usize> {
    labels.iter().map(|&l| setting.class_index(l)).collect()
}

/// Majority-class scores on dev and test for one (variable, setting, repeat).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineRecord {
    pub variable: String,
    pub setting: Setting,
    pub seed: u64,
    pub dev: EvalResult,
    pub test: EvalResult,
}

/// Outcome of one (variable, setting, technique, seed) cell. A failed cell
/// carries the error text and no scores.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellRecord {
    pub variable: String,
    pub setting: Setting,
    pub technique: String,
    pub seed: u64,
    pub dev: Option<EvalResult>,
    pub test: Option<EvalResult>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub relevance: Option<RelevanceReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// Predictions of a trained cell model on a list of units.
struct CellModel {
    scorer: LinearScorer,
    relevance: Option<RelevanceProvider>,
}

impl CellModel {
    fn predict(&self, units: &[&Session], config: &ExperimentConfig) -> Result<Vec<usize>, crate::Error> {
        Ok(match &self.relevance {
            None => {
                let texts: Vec<String> = units.iter().map(|u| format_unit(*u, config.input_format)).collect();
                let refs: Vec<&str> = texts.iter().map(String::as_str).collect();
                self.scorer.predict(&refs)?
            }
            Some(provider) => {
                let pipeline = TwoStagePipeline {
                    relevance: provider,
                    scorer: &self.scorer,
                    empty_policy: config.two_stage.empty_policy,
                    format: config.input_format,
                };
                pipeline.predict_many(units)?.into_iter().map(|(l, _)| l).collect()
            }
        })
    }
}

fn fit_scorer(
    texts: &[String],
    labels: &[usize],
    setting: Setting,
    weighted: bool,
    hyper: &Hyper,
) -> Result<LinearScorer, ScorerError> {
    let c = setting.num_classes();
    let weights = if weighted {
        ClassWeights::from_labels(labels, c)?
    } else {
        ClassWeights::uniform(c)
    };
    LinearScorer::fit(texts, labels, c, &weights, hyper)
}

/// Trains one cell's model. Two-stage cells also return the stage-1 report
/// on dev when dev carries relevance annotations.
fn train_cell(
    config: &ExperimentConfig,
    fold: &Fold<'_>,
    variable: &str,
    setting: Setting,
    technique: Technique,
    hyper: &Hyper,
) -> Result<(CellModel, Option<RelevanceReport>), crate::Error> {
    let labels = indices(&fold.train_labels, setting);
    let format = config.input_format;
    if !technique.two_stage {
        let texts: Vec<String> = fold.train.iter().map(|u| format_unit(*u, format)).collect();
        let scorer = fit_scorer(&texts, &labels, setting, technique.weighted, hyper)?;
        return Ok((
            CellModel {
                scorer,
                relevance: None,
            },
            None,
        ));
    }

    let options = RelevanceOptions {
        weighted: config.two_stage.relevance_weighted,
        hyper: *hyper,
        format,
    };
    let model = fit_relevance(&fold.train, variable, &options)?;
    let report = evaluate_relevance(&model, &fold.train, &fold.dev, variable, format).ok();
    let predicted = RelevanceProvider::Model(model);
    let gold = RelevanceProvider::Gold(variable.to_string());

    let mut texts = Vec::new();
    let mut kept = Vec::new();
    for (unit, &label) in fold.train.iter().zip(&labels) {
        let has_gold = unit.annotations().get(variable).is_some_and(|a| a.relevance.is_some());
        let provider = match config.two_stage.stage2_train_input {
            Stage2TrainInput::Gold if has_gold => &gold,
            _ => &predicted,
        };
        let selected = provider.select(*unit, format)?;
        let mut text = assemble_relevant(*unit, &selected, format)?;
        if text.is_empty() {
            match config.two_stage.empty_policy {
                EmptyPolicy::EmptyInput => {}
                EmptyPolicy::FullText => text = format_unit(*unit, format),
                EmptyPolicy::PredictLowest => continue,
            }
        }
        texts.push(text);
        kept.push(label);
    }
    let scorer = fit_scorer(&texts, &kept, setting, technique.weighted, hyper)?;
    Ok((
        CellModel {
            scorer,
            relevance: Some(predicted),
        },
        report,
    ))
}

fn run_cell(
    config: &ExperimentConfig,
    fold: &Fold<'_>,
    variable: &str,
    setting: Setting,
    technique: Technique,
    seed: u64,
) -> CellRecord {
    let mut record = CellRecord {
        variable: variable.to_string(),
        setting,
        technique: technique.name().to_string(),
        seed,
        dev: None,
        test: None,
        relevance: None,
        error: None,
    };
    let hyper = Hyper { seed, ..config.hyper };
    let classes = setting.classes();
    let outcome = (|| -> Result<_, crate::Error> {
        let (model, relevance) = train_cell(config, fold, variable, setting, technique, &hyper)?;
        let dev = macro_f1(
            &model.predict(&fold.dev, config)?,
            &indices(&fold.dev_labels, setting),
            &classes,
        )?;
        let test = macro_f1(
            &model.predict(&fold.test, config)?,
            &indices(&fold.test_labels, setting),
            &classes,
        )?;
        Ok((dev, test, relevance))
    })();
    match outcome {
        Ok((dev, test, relevance)) => {
            record.dev = Some(dev);
            record.test = Some(test);
            record.relevance = relevance;
        }
        Err(e) => record.error = Some(e.to_string()),
    }
    record
}

/// Mean and spread of one metric over the repeats of a configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub variable: String,
    pub setting: Setting,
    pub technique: String,
    /// `scorer` or `majority`.
    pub model: String,
    pub split: String,
    pub metric: String,
    pub mean: f64,
    pub std: f64,
    pub n_runs: usize,
    pub selected: bool,
}

/// Best technique on dev for one (variable, setting); `None` when every
/// technique had a failed cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Selection {
    pub variable: String,
    pub setting: Setting,
    pub technique: Option<String>,
    pub dev_macro_f1: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub variables: Vec<String>,
    pub settings: Vec<Setting>,
    pub techniques: Vec<String>,
    pub seeds: Vec<u64>,
    pub rows: Vec<MetricRow>,
    pub selected: Vec<Selection>,
    pub baselines: Vec<BaselineRecord>,
    pub cells: Vec<CellRecord>,
}

impl MetricsReport {
    pub fn row(
        &self,
        variable: &str,
        setting: Setting,
        technique: &str,
        split: &str,
        metric: &str,
    ) -> Option<&MetricRow> {
        self.rows.iter().find(|r| {
            r.variable == variable
                && r.setting == setting
                && r.technique == technique
                && r.split == split
                && r.metric == metric
        })
    }

    pub fn selection(&self, variable: &str, setting: Setting) -> Option<&Selection> {
        self.selected
            .iter()
            .find(|s| s.variable == variable && s.setting == setting)
    }

    pub fn failed_cells(&self) -> impl Iterator<Item = &CellRecord> {
        self.cells.iter().filter(|c| c.error.is_some())
    }

    /// Test summary of `technique` over its successful cells.
    pub fn test_summary(&self, variable: &str, setting: Setting, technique: &str) -> Option<RunSummary> {
        let results: Vec<EvalResult> = self
            .cells
            .iter()
            .filter(|c| c.variable == variable && c.setting == setting && c.technique == technique)
            .filter_map(|c| c.test.clone())
            .collect();
        summarize_runs(&results).ok()
    }
}

const BASELINE_TECHNIQUE: &str = "-";

type BaselinePick = fn(&BaselineRecord) -> EvalResult;

fn summary_rows(
    out: &mut Vec<MetricRow>,
    key: (&str, Setting, &str, &str),
    split: &str,
    summary: &RunSummary,
    selected: bool,
) {
    let (variable, setting, technique, model) = key;
    let mut push = |metric: String, mean: f64, std: f64, n_runs: usize| {
        out.push(MetricRow {
            variable: variable.to_string(),
            setting,
            technique: technique.to_string(),
            model: model.to_string(),
            split: split.to_string(),
            metric,
            mean,
            std,
            n_runs,
            selected,
        })
    };
    push(
        "macro_f1".into(),
        summary.macro_f1.mean,
        summary.macro_f1.std,
        summary.runs,
    );
    if let Some(s) = summary.spearman {
        push("spearman".into(), s.mean, s.std, s.n);
    }
    for (class, ms) in summary.classes.iter().zip(&summary.per_class_f1) {
        push(format!("f1_class_{class}"), ms.mean, ms.std, ms.n);
    }
}

/// Picks the technique with the highest mean dev macro-F1 among those whose
/// cells all succeeded. Ties go to fewer techniques, then to the name.
fn select(cells: &[&CellRecord], techniques: &[Technique], seeds: usize) -> Option<(Technique, f64)> {
    techniques
        .iter()
        .filter_map(|t| {
            let devs: Vec<f64> = cells
                .iter()
                .filter(|c| c.technique == t.name())
                .filter_map(|c| c.dev.as_ref().map(|d| d.macro_f1))
                .collect();
            (devs.len() == seeds).then(|| (*t, devs.iter().sum::<f64>() / seeds as f64))
        })
        .fold(None, |best: Option<(Technique, f64)>, (t, score)| match best {
            Some((b, s)) if s > score || (s == score && (b.size(), b.name()) <= (t.size(), t.name())) => best,
            _ => Some((t, score)),
        })
}

/// Loads the configured corpus (segmenting it if asked) and runs the experiment.
pub fn run_experiment(config: &ExperimentConfig) -> Result<MetricsReport, HarnessError> {
    config.validate()?;
    let corpus = ingest_corpus(&config.corpus, config.schema)?;
    let corpus = match config.segmentation {
        Some(policy) => corpus.segmented(policy)?,
        None => corpus,
    };
    run_experiment_on(config, &corpus)
}

/// Runs every (variable, setting, technique, seed) cell on `corpus`.
/// `config.corpus` and `config.segmentation` are ignored.
pub fn run_experiment_on(config: &ExperimentConfig, corpus: &Corpus) -> Result<MetricsReport, HarnessError> {
    config.validate()?;
    let known = corpus.variables();
    let variables = if config.variables.is_empty() {
        known.clone()
    } else {
        config.variables.clone()
    };
    if variables.is_empty() {
        return Err(HarnessError::Config("corpus has no annotated variables".into()));
    }
    if let Some(v) = variables.iter().find(|v| !known.contains(v)) {
        return Err(HarnessError::UnknownVariable(v.clone()));
    }
    let seeds = config.seeds();
    let techniques = config.technique_set();

    let mut folds: BTreeMap<(&str, u64), Fold<'_>> = BTreeMap::new();
    for v in &variables {
        for &seed in &seeds {
            folds.insert((v.as_str(), seed), Fold::build(corpus, v, config, seed)?);
        }
    }

    let mut baselines = Vec::new();
    for v in &variables {
        for &setting in &config.settings {
            for &seed in &seeds {
                let fold = &folds[&(v.as_str(), seed)];
                let classes = setting.classes();
                let train = indices(&fold.train_labels, setting);
                let fail = |e: crate::metrics::MetricsError| HarnessError::Fold {
                    variable: v.clone(),
                    message: e.to_string(),
                };
                baselines.push(BaselineRecord {
                    variable: v.clone(),
                    setting,
                    seed,
                    dev: majority_baseline(&train, &indices(&fold.dev_labels, setting), &classes).map_err(fail)?,
                    test: majority_baseline(&train, &indices(&fold.test_labels, setting), &classes).map_err(fail)?,
                });
            }
        }
    }

    let mut specs: Vec<(&str, Setting, Technique, u64)> = Vec::new();
    for v in &variables {
        for &s in &config.settings {
            for &t in &techniques {
                for &seed in &seeds {
                    specs.push((v.as_str(), s, t, seed));
                }
            }
        }
    }
    let work = || -> Vec<CellRecord> {
        specs
            .par_iter()
            .map(|&(v, s, t, seed)| run_cell(config, &folds[&(v, seed)], v, s, t, seed))
            .collect()
    };
    let cells = match config.jobs {
        Some(jobs) => rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build()
            .map_err(|e| HarnessError::Config(e.to_string()))?
            .install(work),
        None => work(),
    };

    let mut rows = Vec::new();
    let mut selected = Vec::new();
    for v in &variables {
        for &setting in &config.settings {
            let here: Vec<&CellRecord> = cells
                .iter()
                .filter(|c| &c.variable == v && c.setting == setting)
                .collect();
            let choice = select(&here, &techniques, seeds.len());
            let base: Vec<&BaselineRecord> = baselines
                .iter()
                .filter(|b| &b.variable == v && b.setting == setting)
                .collect();
            let picks: [(&str, BaselinePick); 2] = [("dev", |b| b.dev.clone()), ("test", |b| b.test.clone())];
            for (split, pick) in picks {
                let results: Vec<EvalResult> = base.iter().map(|b| pick(b)).collect();
                let summary = summarize_runs(&results).expect("one baseline per seed");
                summary_rows(
                    &mut rows,
                    (v, setting, BASELINE_TECHNIQUE, "majority"),
                    split,
                    &summary,
                    false,
                );
            }
            for t in &techniques {
                let is_selected = choice.is_some_and(|(c, _)| c == *t);
                for split in ["dev", "test"] {
                    let results: Vec<EvalResult> = here
                        .iter()
                        .filter(|c| c.technique == t.name())
                        .filter_map(|c| if split == "dev" { c.dev.clone() } else { c.test.clone() })
                        .collect();
                    if let Ok(summary) = summarize_runs(&results) {
                        summary_rows(
                            &mut rows,
                            (v, setting, t.name(), "scorer"),
                            split,
                            &summary,
                            is_selected,
                        );
                    }
                }
            }
            selected.push(Selection {
                variable: v.clone(),
                setting,
                technique: choice.map(|(t, _)| t.name().to_string()),
                dev_macro_f1: choice.map(|(_, s)| s),
            });
        }
    }

    let report = MetricsReport {
        variables,
        settings: config.settings.clone(),
        techniques: techniques.iter().map(|t| t.name().to_string()).collect(),
        seeds,
        rows,
        selected,
        baselines,
        cells,
    };
    check_selection(&report)?;
    Ok(report)
}

/// The selected technique's dev macro-F1 is at least that of every other
/// technique evaluated on all seeds.
pub fn check_selection(report: &MetricsReport) -> Result<(), HarnessError> {
    for s in &report.selected {
        let Some(best) = s.dev_macro_f1 else { continue };
        for row in report.rows.iter().filter(|r| {
            r.variable == s.variable
                && r.setting == s.setting
                && r.model == "scorer"
                && r.split == "dev"
                && r.metric == "macro_f1"
                && r.n_runs == report.seeds.len()
        }) {
            if row.mean > best {
                return Err(HarnessError::Selection(format!(
                    "{} / {}: selected {:?} at {best} but {} reached {}",
                    s.variable, s.setting, s.technique, row.technique, row.mean
                )));
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::EvalResult;

    fn cell(technique: &str, dev: Option<f64>) -> CellRecord {
        let eval = |f| EvalResult {
            macro_f1: f,
            spearman: None,
            per_class_f1: vec![f, f],
            classes: vec![0, 1],
            n: 4,
        };
        CellRecord {
            variable: "v".into(),
            setting: Setting::Binary,
            technique: technique.into(),
            seed: 0,
            dev: dev.map(eval),
            test: dev.map(eval),
            relevance: None,
            error: dev.is_none().then(|| "boom".to_string()),
        }
    }

    #[test]
    fn selection_prefers_dev_then_fewer_then_name() {
        let all = Technique::powerset(&[
            super::super::TechniqueFlag::Weighted,
            super::super::TechniqueFlag::TwoStage,
        ]);
        let cells = [
            cell("normal", Some(0.5)),
            cell("weighted", Some(0.7)),
            cell("two_stage", Some(0.7)),
            cell("two_stage+weighted", Some(0.7)),
        ];
        let refs: Vec<&CellRecord> = cells.iter().collect();
        assert_eq!(select(&refs, &all, 1).unwrap().0.name(), "two_stage");

        let cells = [
            cell("normal", Some(0.5)),
            cell("weighted", None),
            cell("two_stage+weighted", Some(0.9)),
        ];
        let refs: Vec<&CellRecord> = cells.iter().collect();
        assert_eq!(select(&refs, &all, 1).unwrap().0.name(), "two_stage+weighted");

        let cells = [cell("normal", None)];
        let refs: Vec<&CellRecord> = cells.iter().collect();
        assert!(select(&refs, &all, 1).is_none());
    }
}
