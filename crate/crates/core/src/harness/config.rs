use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::annotate::{to_binary, RatingLabel};
use crate::corpus::{InputFormat, SegmentPolicy, Source, SplitRatios};
use crate::scorer::Hyper;
use crate::twostage::EmptyPolicy;

/// Label space of an experiment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Setting {
    /// Low / Mid / High.
    ThreeWay,
    /// Low against Mid and High together.
    Binary,
}

impl Setting {
    pub const ALL: [Setting; 2] = [Setting::ThreeWay, Setting::Binary];

    pub fn num_classes(self) -> usize {
        match self {
            Self::ThreeWay => 3,
            Self::Binary => 2,
        }
    }

    pub fn classes(self) -> Vec<usize> {
        (0..self.num_classes()).collect()
    }

    pub fn class_index(self, label: RatingLabel) -> usize {
        match self {
            Self::ThreeWay => label.index(),
            Self::Binary => to_binary(label).index(),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Self::ThreeWay => "three_way",
            Self::Binary => "binary",
        }
    }
}

impl fmt::Display for Setting {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TechniqueFlag {
    Weighted,
    TwoStage,
}

/// One combination of techniques; the empty combination is the plain scorer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct Technique {
    pub weighted: bool,
    pub two_stage: bool,
}

impl Technique {
    pub fn size(self) -> usize {
        usize::from(self.weighted) + usize::from(self.two_stage)
    }

    pub fn name(self) -> &'static str {
        match (self.two_stage, self.weighted) {
            (false, false) => "normal",
            (false, true) => "weighted",
            (true, false) => "two_stage",
            (true, true) => "two_stage+weighted",
        }
    }

    pub fn parse(name: &str) -> Option<Self> {
        let all = [(false, false), (false, true), (true, false), (true, true)];
        all.into_iter()
            .map(|(two_stage, weighted)| Self { weighted, two_stage })
            .find(|t| t.name() == name)
    }

    /// Every subset of `flags`, ordered by size and then name.
    pub fn powerset(flags: &[TechniqueFlag]) -> Vec<Self> {
        let weighted = flags.contains(&TechniqueFlag::Weighted);
        let two_stage = flags.contains(&TechniqueFlag::TwoStage);
        let mut out: Vec<Self> = [false, true]
            .into_iter()
            .filter(|w| weighted || !w)
            .flat_map(|w| {
                [false, true]
                    .into_iter()
                    .filter(|t| two_stage || !t)
                    .map(move |t| Self {
                        weighted: w,
                        two_stage: t,
                    })
            })
            .collect();
        out.sort_by_key(|t| (t.size(), t.name()));
        out
    }
}

impl fmt::Display for Technique {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// What the stage-2 scorer is trained on in two-stage cells.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage2TrainInput {
    /// Gold evidence where annotated, stage-1 predictions elsewhere.
    #[default]
    Gold,
    /// Stage-1 predictions everywhere.
    Predicted,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TwoStageOptions {
    pub empty_policy: EmptyPolicy,
    pub stage2_train_input: Stage2TrainInput,
    pub relevance_weighted: bool,
}

impl Default for TwoStageOptions {
    fn default() -> Self {
        Self {
            empty_policy: EmptyPolicy::default(),
            stage2_train_input: Stage2TrainInput::default(),
            relevance_weighted: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitConfig {
    pub ratios: SplitRatios,
    pub seed: u64,
    /// Draw a fresh split per repeat (split seed + repeat seed) instead of
    /// reusing one split for every repeat.
    pub resplit_each_repeat: bool,
}

fn default_settings() -> Vec<Setting> {
    Setting::ALL.to_vec()
}

fn default_techniques() -> Vec<TechniqueFlag> {
    vec![TechniqueFlag::Weighted, TechniqueFlag::TwoStage]
}

fn default_repeats() -> usize {
    5
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Corpus JSONL; resolved against the config file's directory when relative.
    #[serde(default)]
    pub corpus: PathBuf,
    #[serde(default = "default_schema")]
    pub schema: Source,
    /// Variables to evaluate; empty means every annotated variable.
    #[serde(default)]
    pub variables: Vec<String>,
    #[serde(default = "default_settings")]
    pub settings: Vec<Setting>,
    #[serde(default)]
    pub input_format: InputFormat,
    /// Flags whose every combination is evaluated.
    #[serde(default = "default_techniques")]
    pub techniques: Vec<TechniqueFlag>,
    #[serde(default = "default_repeats")]
    pub repeats: usize,
    /// One seed per repeat; defaults to `0..repeats`.
    #[serde(default)]
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub split: SplitConfig,
    #[serde(default)]
    pub hyper: Hyper,
    #[serde(default)]
    pub two_stage: TwoStageOptions,
    #[serde(default)]
    pub segmentation: Option<SegmentPolicy>,
    /// Worker threads; `None` uses every core.
    #[serde(default)]
    pub jobs: Option<usize>,
}

fn default_schema() -> Source {
    Source::Simulation
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            corpus: PathBuf::new(),
            schema: default_schema(),
            variables: Vec::new(),
            settings: default_settings(),
            input_format: InputFormat::default(),
            techniques: default_techniques(),
            repeats: default_repeats(),
            seeds: Vec::new(),
            split: SplitConfig::default(),
            hyper: Hyper::default(),
            two_stage: TwoStageOptions::default(),
            segmentation: None,
            jobs: None,
        }
    }
}

impl ExperimentConfig {
    pub fn from_json_file(path: impl AsRef<Path>) -> Result<Self, HarnessError> {
        let path = path.as_ref();
        let err = |message: String| HarnessError::ConfigFile {
            path: path.display().to_string(),
            message,
        };
        let raw = std::fs::read_to_string(path).map_err(|e| err(e.to_string()))?;
        let mut config: Self = serde_json::from_str(&raw).map_err(|e| err(e.to_string()))?;
        if config.corpus.is_relative() && !config.corpus.as_os_str().is_empty() {
            if let Some(dir) = path.parent() {
                config.corpus = dir.join(&config.corpus);
            }
        }
        config.validate()?;
        Ok(config)
    }

    /// Repeat seeds, filling in `0..repeats` when none are listed.
    pub fn seeds(&self) -> Vec<u64> {
        if self.seeds.is_empty() {
            (0..self.repeats as u64).collect()
        } else {
            self.seeds.clone()
        }
    }

    pub fn technique_set(&self) -> Vec<Technique> {
        Technique::powerset(&self.techniques)
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |m: String| Err(HarnessError::Config(m));
        if self.repeats == 0 {
            return bad("repeats must be at least 1".into());
        }
        if !self.seeds.is_empty() && self.seeds.len() != self.repeats {
            return bad(format!(
                "{} seeds listed for {} repeats",
                self.seeds.len(),
                self.repeats
            ));
        }
        let mut seeds = self.seeds();
        seeds.sort_unstable();
        seeds.dedup();
        if seeds.len() != self.repeats {
            return bad("seeds must be distinct".into());
        }
        if self.settings.is_empty() {
            return bad("at least one setting is required".into());
        }
        if self.jobs == Some(0) {
            return bad("jobs must be at least 1".into());
        }
        Ok(())
    }
}
