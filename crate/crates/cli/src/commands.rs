use std::path::{Path, PathBuf};

use anyhow::{Context, Result};

use tqa_core::annotate::{
    agreement_reports, label_distribution, read_pairs_csv, write_agreement_csv, AgreementReport, RaterMatrix,
    UndefinedPairs,
};
use tqa_core::corpus::{
    format_unit, ingest_corpus, split_dataset, write_corpus, Corpus, InputFormat, SegmentPolicy, Session, Unit,
};
use tqa_core::harness::{
    export_instruction_samples, read_report, render_table, report_tables, run_experiment, write_report,
    ExperimentConfig, Fold, Setting, TableStyle,
};
use tqa_core::lexical::{top_ngrams_by_rating, write_scores_csv};
use tqa_core::metrics::{macro_f1, majority_baseline, EvalResult};
use tqa_core::scorer::{
    read_responses, write_requests, ClassWeights, ExternalScorer, LinearScorer, ScoreRequest, Scorer,
};
use tqa_core::synth::{emit, generate, SynthConfig};
use tqa_core::twostage::{
    evaluate_relevance, fit_relevance, load_external_relevance, write_external_relevance, write_relevance_csv,
    ExternalRelevance, RelevanceOptions, RelevanceProvider, TwoStagePipeline,
};

use crate::args::*;
use crate::usage;

pub fn run(cli: Cli) -> Result<()> {
    let ctx = Globals {
        config: cli.config,
        seed: cli.seed,
        out: cli.out,
        jobs: cli.jobs,
    };
    match cli.command {
        Command::Ingest(a) => ingest(&ctx, a),
        Command::Stats(a) => stats(&ctx, a),
        Command::Agreement(a) => agreement(&ctx, a),
        Command::Lexical(a) => lexical(&ctx, a),
        Command::Synth(a) => synth(&ctx, a),
        Command::Train(a) => train(&ctx, a),
        Command::Eval(a) => eval(&ctx, a),
        Command::Twostage(a) => twostage(&ctx, a),
        Command::Experiment => experiment(&ctx),
        Command::Report(a) => report(&ctx, a),
        Command::ExportLlm(a) => export_llm(&ctx, a),
    }
}

/// Global flags shared by every subcommand.
struct Globals {
    config: Option<PathBuf>,
    seed: Option<u64>,
    out: Option<PathBuf>,
    jobs: Option<usize>,
}

/// Writes to stdout; a closed pipe (`tqa ... | head`) ends output quietly.
fn stdout(body: &str) -> Result<()> {
    use std::io::Write;
    let mut out = std::io::stdout().lock();
    match out.write_all(body.as_bytes()).and_then(|()| out.flush()) {
        Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => Ok(()),
        r => r.context("writing to stdout"),
    }
}

impl Globals {
    /// Writes `body` to `<out>/<name>`, or to stdout without `--out`.
    fn deliver(&self, name: &str, body: &str) -> Result<()> {
        match &self.out {
            Some(dir) => {
                std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
                let path = dir.join(name);
                std::fs::write(&path, body).with_context(|| format!("writing {}", path.display()))?;
                eprintln!("wrote {}", path.display());
            }
            None => stdout(body)?,
        }
        Ok(())
    }

    fn output_path(&self, explicit: Option<PathBuf>, default_name: &str) -> Result<PathBuf> {
        if let Some(p) = explicit {
            return Ok(p);
        }
        let dir = self.out.as_ref().ok_or_else(|| {
            usage(format!(
                "an output path or --out is required (default file {default_name})"
            ))
        })?;
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        Ok(dir.join(default_name))
    }

    fn experiment_config(&self) -> Result<ExperimentConfig> {
        let mut config = match &self.config {
            Some(path) => ExperimentConfig::from_json_file(path)?,
            None => ExperimentConfig::default(),
        };
        if let Some(seed) = self.seed {
            config.split.seed = seed;
        }
        if let Some(jobs) = self.jobs {
            config.jobs = Some(jobs);
        }
        config.validate()?;
        Ok(config)
    }

    fn split_seed(&self) -> Result<u64> {
        Ok(self.experiment_config()?.split.seed)
    }
}

fn load(args: &CorpusArgs) -> Result<Corpus> {
    Ok(ingest_corpus(&args.input, args.schema.into())?)
}

fn csv_text(rows: Vec<Vec<String>>) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for row in rows {
        w.write_record(row)?;
    }
    Ok(String::from_utf8(w.into_inner()?)?)
}

fn ingest(ctx: &Globals, a: IngestArgs) -> Result<()> {
    let mut corpus = load(&a.corpus)?;
    let policy = match (a.segment_seconds, a.segment_utterances) {
        (Some(s), _) => Some(SegmentPolicy::ByTime(s)),
        (_, Some(n)) => Some(SegmentPolicy::ByUtteranceCount(n)),
        _ => None,
    };
    if let Some(policy) = policy {
        corpus = corpus.segmented(policy)?;
    }
    let config = ctx.experiment_config()?;
    let split = split_dataset(&corpus.ids(), config.split.ratios, config.split.seed)?;
    stdout(&format!(
        "{} units, variables: {}; split train {} / dev {} / test {} (seed {})\n",
        corpus.len(),
        corpus.variables().join(", "),
        split.train.len(),
        split.dev.len(),
        split.test.len(),
        split.seed
    ))?;
    if let Some(dir) = &ctx.out {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        write_corpus(&corpus, dir.join("corpus.jsonl"))?;
        let body = serde_json::to_string_pretty(&split)? + "\n";
        std::fs::write(dir.join("split.json"), body).with_context(|| format!("writing {}", dir.display()))?;
        eprintln!("wrote {}", dir.display());
    }
    Ok(())
}

fn stats(ctx: &Globals, a: CorpusArgs) -> Result<()> {
    let corpus = load(&a)?;
    let mut rows = vec![[
        "variable",
        "n",
        "low",
        "mid",
        "high",
        "low_frac",
        "mid_frac",
        "high_frac",
        "neg",
        "pos",
    ]
    .map(String::from)
    .to_vec()];
    for v in corpus.variables() {
        let d = label_distribution(&corpus, &v)?;
        let f = d.fractions();
        let b = d.binary_counts();
        let mut row = vec![v.clone(), d.total.to_string()];
        row.extend(d.counts.iter().map(|c| c.to_string()));
        row.extend(f.iter().map(|x| format!("{x:.4}")));
        row.extend(b.iter().map(|c| c.to_string()));
        rows.push(row);
    }
    ctx.deliver("stats.csv", &csv_text(rows)?)
}

enum AgreementInput {
    Ratings,
    Pairs,
    Corpus,
}

fn agreement_input(path: &Path) -> Result<AgreementInput> {
    if path.extension().is_some_and(|e| e == "jsonl") {
        return Ok(AgreementInput::Corpus);
    }
    let raw = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let header = raw.lines().next().unwrap_or_default();
    let cols: Vec<&str> = header.split(',').map(str::trim).collect();
    if cols.contains(&"rater_a") {
        Ok(AgreementInput::Pairs)
    } else if cols.contains(&"rater_id") {
        Ok(AgreementInput::Ratings)
    } else {
        anyhow::bail!("{}: unrecognised header {header:?}", path.display())
    }
}

fn agreement(ctx: &Globals, a: AgreementArgs) -> Result<()> {
    let undefined: UndefinedPairs = a.undefined.into();
    let open = || std::fs::File::open(&a.input).with_context(|| format!("reading {}", a.input.display()));
    let reports: Vec<AgreementReport> = match agreement_input(&a.input)? {
        AgreementInput::Pairs => read_pairs_csv(open()?)?
            .into_iter()
            .map(|(v, pairs)| AgreementReport::from_pairs(&v, pairs, undefined))
            .collect(),
        AgreementInput::Ratings => agreement_reports(&RaterMatrix::from_csv(open()?)?, undefined)?,
        AgreementInput::Corpus => {
            let corpus = ingest_corpus(&a.input, a.schema.into())?;
            agreement_reports(&RaterMatrix::from_corpus(&corpus)?, undefined)?
        }
    };
    let mut body = Vec::new();
    write_agreement_csv(&reports, &mut body)?;
    ctx.deliver("agreement.csv", &String::from_utf8(body)?)
}

fn lexical(ctx: &Globals, a: LexicalArgs) -> Result<()> {
    let corpus = load(&a.corpus)?;
    let k = a.top.unwrap_or(usize::MAX);
    let lexicon = top_ngrams_by_rating(&corpus, &a.variable, a.n, k, a.prior_scale)?;
    let scores = match a.top {
        Some(_) => {
            let mut s = lexicon.mid_high.clone();
            s.extend(lexicon.low.iter().filter(|x| !lexicon.mid_high.contains(x)).cloned());
            s
        }
        None => lexicon.all,
    };
    let mut body = Vec::new();
    write_scores_csv(&scores, &mut body)?;
    ctx.deliver(
        &format!("lexical_{}_n{}.csv", a.variable, a.n),
        &String::from_utf8(body)?,
    )
}

fn synth(ctx: &Globals, a: SynthArgs) -> Result<()> {
    let mut config = match &ctx.config {
        Some(path) => SynthConfig::from_json_file(path)?,
        None => SynthConfig::default(),
    };
    if let Some(seed) = ctx.seed {
        config.seed = seed;
    }
    if let Some(n) = a.sessions {
        config.n_sessions = n;
    }
    let path = ctx.output_path(a.output, "corpus.jsonl")?;
    let corpus = generate(&config)?;
    emit(&corpus, &path)?;
    eprintln!("wrote {} sessions to {}", corpus.len(), path.display());
    Ok(())
}

/// Config, corpus and input format shared by the model subcommands.
struct Task {
    config: ExperimentConfig,
    corpus: Corpus,
    format: InputFormat,
}

fn task(ctx: &Globals, a: &TaskArgs) -> Result<Task> {
    let config = ctx.experiment_config()?;
    let corpus = load(&a.corpus)?;
    let format = a.format.map_or(config.input_format, Into::into);
    Ok(Task { config, corpus, format })
}

fn fold<'a>(t: &'a Task, variable: &str) -> Result<Fold<'a>> {
    if !t.corpus.variables().iter().any(|v| v == variable) {
        anyhow::bail!("variable {variable:?} is not annotated in the corpus");
    }
    Ok(Fold::build(&t.corpus, variable, &t.config, 0)?)
}

fn texts(units: &[&Session], format: InputFormat) -> Vec<String> {
    units.iter().map(|s| format_unit(*s, format)).collect()
}

fn class_weights(labels: &[usize], setting: Setting, weighted: bool) -> Result<ClassWeights> {
    Ok(if weighted {
        ClassWeights::from_labels(labels, setting.num_classes())?
    } else {
        ClassWeights::uniform(setting.num_classes())
    })
}

fn train(ctx: &Globals, a: TrainArgs) -> Result<()> {
    let t = task(ctx, &a.task)?;
    let fold = fold(&t, &a.task.variable)?;
    let setting: Setting = a.setting.into();
    let labels: Vec<usize> = fold.train_labels.iter().map(|&l| setting.class_index(l)).collect();
    let weights = class_weights(&labels, setting, a.weighted)?;
    let model = LinearScorer::fit(
        &texts(&fold.train, t.format),
        &labels,
        setting.num_classes(),
        &weights,
        &t.config.hyper,
    )?;
    let path = ctx.output_path(a.model, "model.json")?;
    model.save(&path)?;
    eprintln!("trained on {} units; saved {}", labels.len(), path.display());
    Ok(())
}

fn split_part<'f, 'a>(
    fold: &'f Fold<'a>,
    split: SplitArg,
) -> (&'f [&'a Session], &'f [tqa_core::annotate::RatingLabel]) {
    match split {
        SplitArg::Train => (&fold.train, &fold.train_labels),
        SplitArg::Dev => (&fold.dev, &fold.dev_labels),
        SplitArg::Test => (&fold.test, &fold.test_labels),
    }
}

fn split_name(split: SplitArg) -> &'static str {
    match split {
        SplitArg::Train => "train",
        SplitArg::Dev => "dev",
        SplitArg::Test => "test",
    }
}

fn result_rows(variable: &str, setting: Setting, split: &str, results: &[(&str, EvalResult)]) -> Result<String> {
    let mut rows = vec![["variable", "setting", "split", "model", "n", "macro_f1", "spearman"]
        .map(String::from)
        .to_vec()];
    for (model, r) in results {
        rows.push(vec![
            variable.to_string(),
            setting.as_str().to_string(),
            split.to_string(),
            model.to_string(),
            r.n.to_string(),
            format!("{:.4}", r.macro_f1),
            r.spearman.map_or("-".to_string(), |s| format!("{s:.4}")),
        ]);
    }
    csv_text(rows)
}

fn eval(ctx: &Globals, a: EvalArgs) -> Result<()> {
    let t = task(ctx, &a.task)?;
    let fold = fold(&t, &a.task.variable)?;
    let (units, labels) = split_part(&fold, a.split);
    let inputs = texts(units, t.format);
    let requests: Vec<ScoreRequest> = units
        .iter()
        .zip(&inputs)
        .map(|(s, text)| ScoreRequest {
            id: s.unit_id(),
            text: text.clone(),
        })
        .collect();
    if let Some(path) = a.write_requests {
        write_requests(&path, &requests)?;
        eprintln!("wrote {} requests to {}", requests.len(), path.display());
        return Ok(());
    }
    let (scorer, name, setting): (Box<dyn Scorer>, &str, Setting) = match (a.model, a.external) {
        (Some(path), None) => {
            let model = LinearScorer::load(&path)?;
            let setting = if model.num_classes() == 2 {
                Setting::Binary
            } else {
                Setting::ThreeWay
            };
            (Box::new(model), "linear", setting)
        }
        (None, Some(path)) => {
            let setting: Setting = a.setting.into();
            let responses = read_responses(&path)?;
            (
                Box::new(ExternalScorer::new(&requests, &responses, setting.num_classes())?),
                "external",
                setting,
            )
        }
        _ => return Err(usage("eval needs one of --model, --external or --write-requests")),
    };
    let golds: Vec<usize> = labels.iter().map(|&l| setting.class_index(l)).collect();
    let train_golds: Vec<usize> = fold.train_labels.iter().map(|&l| setting.class_index(l)).collect();
    let refs: Vec<&str> = inputs.iter().map(String::as_str).collect();
    let preds = scorer.predict(&refs)?;
    let classes = setting.classes();
    let results = [
        (name, macro_f1(&preds, &golds, &classes)?),
        ("majority", majority_baseline(&train_golds, &golds, &classes)?),
    ];
    ctx.deliver(
        "eval.csv",
        &result_rows(&a.task.variable, setting, split_name(a.split), &results)?,
    )
}

fn has_relevance(s: &Session, variable: &str) -> bool {
    s.annotations.get(variable).is_some_and(|a| a.relevance.is_some())
}

fn twostage(ctx: &Globals, a: TwoStageArgs) -> Result<()> {
    let t = task(ctx, &a.task)?;
    let variable = a.task.variable.as_str();
    let fold = fold(&t, variable)?;
    let setting: Setting = a.setting.into();

    let mut relevance_reports = Vec::new();
    let provider = if let Some(path) = &a.relevance {
        let provider = load_external_relevance(path, variable)?;
        if let RelevanceProvider::Spans(map) = &provider {
            let unknown = map.unknown_ids(t.corpus.sessions.iter().map(|s| s.session_id.as_str()));
            if !unknown.is_empty() {
                eprintln!(
                    "warning: {} relevance record(s) name units absent from the corpus: {}",
                    unknown.len(),
                    unknown.join(", ")
                );
            }
        }
        provider
    } else if a.gold {
        RelevanceProvider::Gold(variable.to_string())
    } else {
        let options = RelevanceOptions {
            hyper: t.config.hyper,
            format: t.format,
            ..RelevanceOptions::default()
        };
        let model = fit_relevance(&fold.train, variable, &options)?;
        if fold.test.iter().any(|s| has_relevance(s, variable)) {
            relevance_reports.push(evaluate_relevance(&model, &fold.train, &fold.test, variable, t.format)?);
        }
        RelevanceProvider::Model(model)
    };

    if let Some(path) = &a.write_relevance {
        let mut records = Vec::new();
        for s in fold.train.iter().chain(&fold.dev).chain(&fold.test) {
            records.push(ExternalRelevance {
                session_id: s.unit_id(),
                variable: variable.to_string(),
                relevant: provider.select(*s, t.format)?,
            });
        }
        write_external_relevance(path, &records)?;
        eprintln!("wrote relevance for {} units to {}", records.len(), path.display());
    }

    // Stage 2 learns from gold evidence where it exists.
    let gold = RelevanceProvider::Gold(variable.to_string());
    let pipeline = |relevance| TwoStagePipeline {
        relevance,
        scorer: &NoScorer,
        empty_policy: a.empty_policy.into(),
        format: t.format,
    };
    let mut train_texts = Vec::new();
    let mut train_labels = Vec::new();
    for (s, &l) in fold.train.iter().zip(&fold.train_labels) {
        let source = if has_relevance(s, variable) { &gold } else { &provider };
        if let Some(text) = pipeline(source).stage2_text(*s)? {
            train_texts.push(text);
            train_labels.push(setting.class_index(l));
        }
    }
    if train_texts.is_empty() {
        anyhow::bail!("no training input left for the rating scorer");
    }
    let weights = class_weights(&train_labels, setting, a.weighted)?;
    let scorer = LinearScorer::fit(
        &train_texts,
        &train_labels,
        setting.num_classes(),
        &weights,
        &t.config.hyper,
    )?;
    let staged = TwoStagePipeline {
        scorer: &scorer,
        ..pipeline(&provider)
    };
    let preds: Vec<usize> = staged.predict_many(&fold.test)?.into_iter().map(|(p, _)| p).collect();
    let golds: Vec<usize> = fold.test_labels.iter().map(|&l| setting.class_index(l)).collect();
    let train_golds: Vec<usize> = fold.train_labels.iter().map(|&l| setting.class_index(l)).collect();
    let classes = setting.classes();
    let results = [
        ("two_stage", macro_f1(&preds, &golds, &classes)?),
        ("majority", majority_baseline(&train_golds, &golds, &classes)?),
    ];
    if let (Some(dir), false) = (&ctx.out, relevance_reports.is_empty()) {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        write_relevance_csv(dir.join("relevance.csv"), &relevance_reports)?;
    }
    for r in &relevance_reports {
        eprintln!(
            "relevance: {:.2} relevant sentences per unit, macro-F1 {:.4} (majority {:.4}), relevant-class F1 {:.4}",
            r.avg_relevant_per_session, r.macro_f1, r.majority_f1, r.positive_f1
        );
    }
    ctx.deliver("twostage.csv", &result_rows(variable, setting, "test", &results)?)
}

/// Placeholder scorer for building stage-2 inputs before the scorer exists.
struct NoScorer;

impl Scorer for NoScorer {
    fn num_classes(&self) -> usize {
        1
    }

    fn predict_proba(&self, _texts: &[&str]) -> Result<Vec<Vec<f64>>, tqa_core::scorer::ScorerError> {
        unreachable!("only stage-2 text assembly is used")
    }
}

fn experiment(ctx: &Globals) -> Result<()> {
    if ctx.config.is_none() {
        return Err(usage("experiment requires --config <path>"));
    }
    let out = ctx
        .out
        .clone()
        .ok_or_else(|| usage("experiment requires --out <dir>"))?;
    let config = ctx.experiment_config()?;
    let report = run_experiment(&config)?;
    write_report(&report, &out)?;
    let failed = report.failed_cells().count();
    if failed > 0 {
        eprintln!("warning: {failed} cell(s) failed; see report.json");
    }
    for &setting in &report.settings {
        stdout(&format!(
            "{setting}\n{}\n",
            render_table(&report, setting, TableStyle::Markdown)?
        ))?;
    }
    eprintln!("wrote report to {}", out.display());
    Ok(())
}

fn report(ctx: &Globals, a: ReportArgs) -> Result<()> {
    let report = read_report(&a.input)?;
    if let Some(dir) = &ctx.out {
        report_tables(&report, dir)?;
        eprintln!("wrote tables to {}", dir.join("tables").display());
    }
    let style: TableStyle = a.style.into();
    for &setting in &report.settings {
        stdout(&format!("{setting}\n{}\n", render_table(&report, setting, style)?))?;
    }
    Ok(())
}

fn export_llm(ctx: &Globals, a: ExportArgs) -> Result<()> {
    let corpus = load(&a.corpus)?;
    let config = ctx.experiment_config()?;
    let split = split_dataset(&corpus.ids(), config.split.ratios, ctx.split_seed()?)?;
    let path = ctx.output_path(a.output.clone(), &format!("{}_instructions.jsonl", a.variable))?;
    let summary = export_instruction_samples(&corpus, &a.variable, &split, &path)?;
    if summary.empty_transcripts > 0 {
        eprintln!(
            "warning: {} record(s) have an empty teacher transcript",
            summary.empty_transcripts
        );
    }
    eprintln!("wrote {} records to {}", summary.records, path.display());
    Ok(())
}
