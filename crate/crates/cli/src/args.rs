use std::path::PathBuf;

use clap::{Args, CommandFactory, Parser, Subcommand, ValueEnum};

use tqa_core::annotate::UndefinedPairs;
use tqa_core::corpus::{InputFormat, Source};
use tqa_core::harness::{Setting, TableStyle};
use tqa_core::twostage::EmptyPolicy;

#[derive(Debug, Parser)]
#[command(
    name = "tqa",
    version,
    about = "Instruction-quality measurement from teaching transcripts"
)]
pub struct Cli {
    /// JSON config: an experiment config, or a generator config for `synth`.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Seed for splits and generation; overrides the config.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Worker threads for experiments.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

pub fn usage_text() -> String {
    Cli::command().render_usage().to_string()
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Validate a corpus, optionally segment it, and write it with a split.
    Ingest(IngestArgs),
    /// Label distributions per variable.
    Stats(CorpusArgs),
    /// Pairwise rater Spearman correlations and their size-weighted mean.
    Agreement(AgreementArgs),
    /// Log-odds z-scores of n-grams, mid/high against low ratings.
    Lexical(LexicalArgs),
    /// Generate a synthetic corpus with planted signals.
    Synth(SynthArgs),
    /// Train the linear scorer on the training split.
    Train(TrainArgs),
    /// Evaluate a saved or external scorer on one split.
    Eval(EvalArgs),
    /// Relevance selection followed by scoring.
    Twostage(TwoStageArgs),
    /// Run the repeated-seed protocol and write a report directory.
    Experiment,
    /// Render report tables from a saved report.
    Report(ReportArgs),
    /// Write instruction-format prompts for language-model tuning.
    #[command(name = "export-llm")]
    ExportLlm(ExportArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum SchemaArg {
    Simulation,
    Classroom,
}

impl From<SchemaArg> for Source {
    fn from(s: SchemaArg) -> Self {
        match s {
            SchemaArg::Simulation => Source::Simulation,
            SchemaArg::Classroom => Source::Classroom,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum SettingArg {
    ThreeWay,
    Binary,
}

impl From<SettingArg> for Setting {
    fn from(s: SettingArg) -> Self {
        match s {
            SettingArg::ThreeWay => Setting::ThreeWay,
            SettingArg::Binary => Setting::Binary,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum FormatArg {
    TeacherOnly,
    TranscriptStyle,
}

impl From<FormatArg> for InputFormat {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::TeacherOnly => InputFormat::TeacherOnly,
            FormatArg::TranscriptStyle => InputFormat::TranscriptStyle,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum UndefinedArg {
    Exclude,
    AsZero,
}

impl From<UndefinedArg> for UndefinedPairs {
    fn from(u: UndefinedArg) -> Self {
        match u {
            UndefinedArg::Exclude => UndefinedPairs::Exclude,
            UndefinedArg::AsZero => UndefinedPairs::AsZero,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum EmptyArg {
    EmptyInput,
    FullText,
    PredictLowest,
}

impl From<EmptyArg> for EmptyPolicy {
    fn from(e: EmptyArg) -> Self {
        match e {
            EmptyArg::EmptyInput => EmptyPolicy::EmptyInput,
            EmptyArg::FullText => EmptyPolicy::FullText,
            EmptyArg::PredictLowest => EmptyPolicy::PredictLowest,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SplitArg {
    Train,
    Dev,
    Test,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum StyleArg {
    Csv,
    Markdown,
}

impl From<StyleArg> for TableStyle {
    fn from(s: StyleArg) -> Self {
        match s {
            StyleArg::Csv => TableStyle::Csv,
            StyleArg::Markdown => TableStyle::Markdown,
        }
    }
}

#[derive(Debug, Args)]
pub struct CorpusArgs {
    /// Corpus JSONL.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, value_enum, default_value = "simulation")]
    pub schema: SchemaArg,
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    #[command(flatten)]
    pub corpus: CorpusArgs,
    /// Cut sessions into windows of this many seconds.
    #[arg(long, conflicts_with = "segment_utterances")]
    pub segment_seconds: Option<f64>,
    /// Cut sessions into chunks of this many utterances.
    #[arg(long)]
    pub segment_utterances: Option<usize>,
}

#[derive(Debug, Args)]
pub struct AgreementArgs {
    /// Ratings CSV (`variable,rater_id,session_id,rating`), pairwise CSV
    /// (`variable,rater_a,rater_b,n,rho`) or corpus JSONL.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, value_enum, default_value = "simulation")]
    pub schema: SchemaArg,
    /// Treatment of rater pairs whose correlation is undefined.
    #[arg(long, value_enum, default_value = "exclude")]
    pub undefined: UndefinedArg,
}

#[derive(Debug, Args)]
pub struct LexicalArgs {
    #[command(flatten)]
    pub corpus: CorpusArgs,
    #[arg(long)]
    pub variable: String,
    /// N-gram order.
    #[arg(long, default_value_t = 1)]
    pub n: usize,
    /// Keep only the k strongest n-grams on each side.
    #[arg(long)]
    pub top: Option<usize>,
    #[arg(long, default_value_t = tqa_core::lexical::DEFAULT_PRIOR_SCALE)]
    pub prior_scale: f64,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Number of sessions; overrides the config.
    #[arg(long)]
    pub sessions: Option<usize>,
    /// Output JSONL; defaults to `<out>/corpus.jsonl`.
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TaskArgs {
    #[command(flatten)]
    pub corpus: CorpusArgs,
    #[arg(long)]
    pub variable: String,
    /// Input format; overrides the config.
    #[arg(long, value_enum)]
    pub format: Option<FormatArg>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub task: TaskArgs,
    #[arg(long, value_enum, default_value = "three-way")]
    pub setting: SettingArg,
    /// Inverse-frequency class weights.
    #[arg(long)]
    pub weighted: bool,
    /// Where to save the model; defaults to `<out>/model.json`.
    #[arg(long)]
    pub model: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub task: TaskArgs,
    /// Saved linear model.
    #[arg(long, conflicts_with_all = ["external", "write_requests"])]
    pub model: Option<PathBuf>,
    /// Responses of an external scorer for the split's requests.
    #[arg(long, conflicts_with = "write_requests")]
    pub external: Option<PathBuf>,
    /// Write scoring requests for the split and stop.
    #[arg(long)]
    pub write_requests: Option<PathBuf>,
    /// Setting of external responses; saved models carry their own.
    #[arg(long, value_enum, default_value = "three-way")]
    pub setting: SettingArg,
    #[arg(long, value_enum, default_value = "test")]
    pub split: SplitArg,
}

#[derive(Debug, Args)]
pub struct TwoStageArgs {
    #[command(flatten)]
    pub task: TaskArgs,
    #[arg(long, value_enum, default_value = "three-way")]
    pub setting: SettingArg,
    /// Externally extracted relevant sentences (JSONL).
    #[arg(long, conflicts_with = "gold")]
    pub relevance: Option<PathBuf>,
    /// Use the gold relevance annotations instead of a trained selector.
    #[arg(long)]
    pub gold: bool,
    #[arg(long, value_enum, default_value = "empty-input")]
    pub empty_policy: EmptyArg,
    /// Inverse-frequency class weights for the rating scorer.
    #[arg(long)]
    pub weighted: bool,
    /// Write the selector's choices for every labelled unit (JSONL).
    #[arg(long)]
    pub write_relevance: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// `report.json` of an experiment.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, value_enum, default_value = "markdown")]
    pub style: StyleArg,
}

#[derive(Debug, Args)]
pub struct ExportArgs {
    #[command(flatten)]
    pub corpus: CorpusArgs,
    #[arg(long)]
    pub variable: String,
    /// Output JSONL; defaults to `<out>/<variable>_instructions.jsonl`.
    #[arg(long)]
    pub output: Option<PathBuf>,
}
