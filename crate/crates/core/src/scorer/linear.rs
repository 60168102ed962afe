use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::features::{FeatureVocab, SparseVector, VocabConfig};
use super::loss::{ClassWeights, PROB_FLOOR};
use super::{Scorer, ScorerError, ScorerFactory};

const ARTIFACT_FORMAT: &str = "tqa-linear-scorer";
const ARTIFACT_VERSION: u32 = 1;
const INIT_SCALE: f64 = 1e-2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Hyper {
    pub learning_rate: f64,
    pub epochs: usize,
    pub l2: f64,
    pub seed: u64,
    pub vocab: VocabConfig,
}

impl Default for Hyper {
    fn default() -> Self {
        Self {
            learning_rate: 0.5,
            epochs: 200,
            l2: 1e-4,
            seed: 0,
            vocab: VocabConfig::default(),
        }
    }
}

/// Weight matrix (row-major, one row per class) and bias vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Params {
    pub num_classes: usize,
    pub dim: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Params {
    pub fn zeros(num_classes: usize, dim: usize) -> Self {
        Self {
            num_classes,
            dim,
            weights: vec![0.0; num_classes * dim],
            bias: vec![0.0; num_classes],
        }
    }

    fn seeded(num_classes: usize, dim: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut p = Self::zeros(num_classes, dim);
        for w in &mut p.weights {
            *w = rng.gen_range(-1.0..1.0) * INIT_SCALE;
        }
        p
    }

    pub fn logits(&self, x: &SparseVector) -> Vec<f64> {
        (0..self.num_classes)
            .map(|j| {
                let row = &self.weights[j * self.dim..(j + 1) * self.dim];
                self.bias[j] + x.iter().map(|&(col, v)| row[col] * v).sum::<f64>()
            })
            .collect()
    }

    pub fn proba(&self, x: &SparseVector) -> Vec<f64> {
        softmax(&self.logits(x))
    }
}

fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gradient {
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

/// Mean class-weighted cross-entropy plus `l2/2 · ‖W‖²`, and its gradient.
///
/// The gradient ignores the probability floor, which only matters once a
/// gold-class probability drops below 1e-12.
pub fn loss_and_gradient(
    params: &Params,
    xs: &[SparseVector],
    labels: &[usize],
    class_weights: &ClassWeights,
    l2: f64,
) -> (f64, Gradient) {
    let c = params.num_classes;
    let n = xs.len() as f64;
    let w = class_weights.as_slice();
    let mut grad = Gradient {
        weights: vec![0.0; params.weights.len()],
        bias: vec![0.0; c],
    };
    let mut data_loss = 0.0;
    for (x, &gold) in xs.iter().zip(labels) {
        let p = params.proba(x);
        data_loss += -w[gold] * p[gold].clamp(PROB_FLOOR, 1.0).ln();
        for (j, &pj) in p.iter().enumerate() {
            let indicator = if j == gold { 1.0 } else { 0.0 };
            let dz = w[gold] * (pj - indicator) / n;
            grad.bias[j] += dz;
            let row = &mut grad.weights[j * params.dim..(j + 1) * params.dim];
            for &(col, v) in x {
                row[col] += dz * v;
            }
        }
    }
    let mut penalty = 0.0;
    for (g, &wv) in grad.weights.iter_mut().zip(&params.weights) {
        *g += l2 * wv;
        penalty += wv * wv;
    }
    (data_loss / n + 0.5 * l2 * penalty, grad)
}

/// Multinomial logistic regression over tf·idf n-gram features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearScorer {
    format: String,
    version: u32,
    pub vocab: FeatureVocab,
    pub params: Params,
    pub class_weights: ClassWeights,
    pub hyper: Hyper,
}

impl LinearScorer {
    /// Full-batch gradient descent for `hyper.epochs` steps. Returns the model
    /// and the loss recorded before each step plus the final loss.
    pub fn fit_with_history<S: AsRef<str>>(
        texts: &[S],
        labels: &[usize],
        num_classes: usize,
        class_weights: &ClassWeights,
        hyper: &Hyper,
    ) -> Result<(Self, Vec<f64>), ScorerError> {
        if texts.is_empty() {
            return Err(ScorerError::EmptyInput);
        }
        if texts.len() != labels.len() {
            return Err(ScorerError::Dimension(format!(
                "{} texts but {} labels",
                texts.len(),
                labels.len()
            )));
        }
        if class_weights.len() != num_classes {
            return Err(ScorerError::Dimension(format!(
                "{} class weights for {num_classes} classes",
                class_weights.len()
            )));
        }
        if let Some(&label) = labels.iter().find(|&&l| l >= num_classes) {
            return Err(ScorerError::BadLabel {
                label,
                classes: num_classes,
            });
        }

        let vocab = FeatureVocab::build(texts, hyper.vocab);
        let xs: Vec<SparseVector> = texts.iter().map(|t| vocab.featurize(t.as_ref())).collect();
        let mut params = Params::seeded(num_classes, vocab.len(), hyper.seed);
        let mut history = Vec::with_capacity(hyper.epochs + 1);

        for epoch in 0..=hyper.epochs {
            let (loss, grad) = loss_and_gradient(&params, &xs, labels, class_weights, hyper.l2);
            if !loss.is_finite() {
                return Err(ScorerError::Diverged { epoch });
            }
            history.push(loss);
            if epoch == hyper.epochs {
                break;
            }
            for (p, g) in params.weights.iter_mut().zip(&grad.weights) {
                *p -= hyper.learning_rate * g;
            }
            for (p, g) in params.bias.iter_mut().zip(&grad.bias) {
                *p -= hyper.learning_rate * g;
            }
        }

        Ok((
            Self {
                format: ARTIFACT_FORMAT.into(),
                version: ARTIFACT_VERSION,
                vocab,
                params,
                class_weights: class_weights.clone(),
                hyper: *hyper,
            },
            history,
        ))
    }

    pub fn fit<S: AsRef<str>>(
        texts: &[S],
        labels: &[usize],
        num_classes: usize,
        class_weights: &ClassWeights,
        hyper: &Hyper,
    ) -> Result<Self, ScorerError> {
        Self::fit_with_history(texts, labels, num_classes, class_weights, hyper).map(|(m, _)| m)
    }

    /// A model whose parameters are all zero: it predicts the uniform distribution.
    pub fn zeroed(vocab: FeatureVocab, num_classes: usize) -> Self {
        let dim = vocab.len();
        Self {
            format: ARTIFACT_FORMAT.into(),
            version: ARTIFACT_VERSION,
            vocab,
            params: Params::zeros(num_classes, dim),
            class_weights: ClassWeights::uniform(num_classes),
            hyper: Hyper::default(),
        }
    }

    pub fn proba_one(&self, text: &str) -> Vec<f64> {
        self.params.proba(&self.vocab.featurize(text))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("model serializes")
    }

    pub fn from_json(raw: &str) -> Result<Self, ScorerError> {
        let model: Self = serde_json::from_str(raw).map_err(|e| ScorerError::Format(e.to_string()))?;
        if model.format != ARTIFACT_FORMAT || model.version != ARTIFACT_VERSION {
            return Err(ScorerError::Format(format!(
                "expected {ARTIFACT_FORMAT} v{ARTIFACT_VERSION}, found {} v{}",
                model.format, model.version
            )));
        }
        let p = &model.params;
        if p.weights.len() != p.num_classes * p.dim || p.bias.len() != p.num_classes || p.dim != model.vocab.len() {
            return Err(ScorerError::Format(
                "parameter shapes do not match the vocabulary".into(),
            ));
        }
        Ok(model)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), ScorerError> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()).map_err(|e| ScorerError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ScorerError> {
        let path = path.as_ref();
        let raw = std::fs::read_to_string(path).map_err(|e| ScorerError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        Self::from_json(&raw)
    }
}

impl Scorer for LinearScorer {
    fn num_classes(&self) -> usize {
        self.params.num_classes
    }

    fn predict_proba(&self, texts: &[&str]) -> Result<Vec<Vec<f64>>, ScorerError> {
        Ok(texts.iter().map(|t| self.proba_one(t)).collect())
    }
}

/// Fits [`LinearScorer`]s with fixed hyperparameters.
#[derive(Debug, Clone, Default)]
pub struct LinearTrainer {
    pub hyper: Hyper,
}

impl ScorerFactory for LinearTrainer {
    fn fit(
        &self,
        texts: &[&str],
        labels: &[usize],
        num_classes: usize,
        weights: &ClassWeights,
    ) -> Result<Box<dyn Scorer>, ScorerError> {
        Ok(Box::new(LinearScorer::fit(
            texts,
            labels,
            num_classes,
            weights,
            &self.hyper,
        )?))
    }

    fn name(&self) -> &str {
        "linear"
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn separable() -> (Vec<String>, Vec<usize>) {
        let mut texts = Vec::new();
        let mut labels = Vec::new();
        for i in 0..10 {
            texts.push(format!("apple banana cherry {}", ["apple", "banana"][i % 2]));
            labels.push(0);
            texts.push(format!("xray yankee zulu {}", ["xray", "zulu"][i % 2]));
            labels.push(1);
        }
        (texts, labels)
    }

    #[test]
    fn separable_toy_set_is_learned() {
        let (texts, labels) = separable();
        let model = LinearScorer::fit(&texts, &labels, 2, &ClassWeights::uniform(2), &Hyper::default()).unwrap();
        let refs: Vec<&str> = texts.iter().map(String::as_str).collect();
        assert_eq!(model.predict(&refs).unwrap(), labels);
    }

    #[test]
    fn loss_never_increases_at_defaults() {
        let (texts, labels) = separable();
        let w = ClassWeights::from_counts(&[10, 10]).unwrap();
        let (_, history) = LinearScorer::fit_with_history(&texts, &labels, 2, &w, &Hyper::default()).unwrap();
        assert_eq!(history.len(), 201);
        assert!(history.windows(2).all(|p| p[1] <= p[0]));
    }

    #[test]
    fn unit_weights_match_unweighted_trajectory() {
        let (texts, labels) = separable();
        let a = LinearScorer::fit(
            &texts,
            &labels,
            2,
            &ClassWeights::from_counts(&[10, 10]).unwrap(),
            &Hyper::default(),
        )
        .unwrap();
        let b = LinearScorer::fit(&texts, &labels, 2, &ClassWeights::uniform(2), &Hyper::default()).unwrap();
        assert_eq!(a.params, b.params);
    }

    #[test]
    fn zero_model_is_uniform() {
        let (texts, _) = separable();
        let model = LinearScorer::zeroed(FeatureVocab::build(&texts, VocabConfig::default()), 3);
        for row in model.predict_proba(&["apple zulu", ""]).unwrap() {
            assert!(row.iter().all(|p| (p - 1.0 / 3.0).abs() < 1e-15));
        }
    }

    #[test]
    fn bias_shift_leaves_predictions_unchanged() {
        let (texts, labels) = separable();
        let model = LinearScorer::fit(&texts, &labels, 2, &ClassWeights::uniform(2), &Hyper::default()).unwrap();
        let mut shifted = model.clone();
        for b in &mut shifted.params.bias {
            *b += 3.7;
        }
        let refs: Vec<&str> = texts.iter().map(String::as_str).collect();
        assert_eq!(model.predict(&refs).unwrap(), shifted.predict(&refs).unwrap());
    }

    #[test]
    fn rejects_bad_inputs() {
        let w = ClassWeights::uniform(2);
        let h = Hyper::default();
        assert!(matches!(
            LinearScorer::fit::<&str>(&[], &[], 2, &w, &h),
            Err(ScorerError::EmptyInput)
        ));
        assert!(LinearScorer::fit(&["a"], &[0, 1], 2, &w, &h).is_err());
        assert!(LinearScorer::fit(&["a"], &[2], 2, &w, &h).is_err());
    }

    #[test]
    fn divergence_names_the_epoch() {
        let (texts, labels) = separable();
        let h = Hyper {
            learning_rate: 1e300,
            ..Hyper::default()
        };
        match LinearScorer::fit(&texts, &labels, 2, &ClassWeights::uniform(2), &h) {
            Err(ScorerError::Diverged { epoch }) => assert!(epoch >= 1),
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn artifact_version_is_checked() {
        let (texts, labels) = separable();
        let model = LinearScorer::fit(&texts, &labels, 2, &ClassWeights::uniform(2), &Hyper::default()).unwrap();
        let raw = model.to_json().replace("\"version\":1", "\"version\":9");
        assert!(LinearScorer::from_json(&raw).is_err());
    }
}
