use serde::{Deserialize, Serialize};

use super::ScorerError;

/// Probabilities are clamped to at least this before taking the log.
pub const PROB_FLOOR: f64 = 1e-12;

/// Per-class loss weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassWeights(Vec<f64>);

impl ClassWeights {
    /// Inverse class frequency: `w_j = N / (c · N_j)`.
    pub fn from_counts(counts: &[usize]) -> Result<Self, ScorerError> {
        if counts.is_empty() {
            return Err(ScorerError::NoClasses);
        }
        if let Some(class) = counts.iter().position(|&n| n == 0) {
            return Err(ScorerError::ZeroClassCount { class });
        }
        let total: usize = counts.iter().sum();
        let c = counts.len() as f64;
        Ok(Self(counts.iter().map(|&n| total as f64 / (c * n as f64)).collect()))
    }

    pub fn from_labels(labels: &[usize], num_classes: usize) -> Result<Self, ScorerError> {
        let mut counts = vec![0usize; num_classes];
        for &l in labels {
            *counts.get_mut(l).ok_or(ScorerError::BadLabel {
                label: l,
                classes: num_classes,
            })? += 1;
        }
        Self::from_counts(&counts)
    }

    pub fn uniform(num_classes: usize) -> Self {
        Self(vec![1.0; num_classes])
    }

    pub fn new(weights: Vec<f64>) -> Result<Self, ScorerError> {
        if weights.is_empty() {
            return Err(ScorerError::NoClasses);
        }
        if weights.iter().any(|w| !(w.is_finite() && *w > 0.0)) {
            return Err(ScorerError::Dimension(format!(
                "class weights must be finite and positive, got {weights:?}"
            )));
        }
        Ok(Self(weights))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn scaled(&self, k: f64) -> Self {
        Self(self.0.iter().map(|w| w * k).collect())
    }
}

/// `−Σ_j w_j · y_j · ln(max(p_j, ε))`
pub fn weighted_ce(y: &[f64], p: &[f64], w: &ClassWeights) -> Result<f64, ScorerError> {
    if y.len() != p.len() || y.len() != w.len() {
        return Err(ScorerError::Dimension(format!(
            "y has {}, p has {}, weights have {} entries",
            y.len(),
            p.len(),
            w.len()
        )));
    }
    Ok(y.iter()
        .zip(p)
        .zip(w.as_slice())
        .map(|((&yj, &pj), &wj)| {
            if yj == 0.0 {
                0.0
            } else {
                -wj * yj * pj.clamp(PROB_FLOOR, 1.0).ln()
            }
        })
        .sum())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn close(a: &[f64], b: &[f64]) -> bool {
        a.iter().zip(b).all(|(x, y)| (x - y).abs() < 1e-4)
    }

    #[test]
    fn inverse_frequency() {
        assert_eq!(ClassWeights::from_counts(&[50, 50]).unwrap().as_slice(), &[1.0, 1.0]);
        assert!(close(
            ClassWeights::from_counts(&[80, 20]).unwrap().as_slice(),
            &[0.625, 2.5]
        ));
        assert!(close(
            ClassWeights::from_counts(&[60, 30, 10]).unwrap().as_slice(),
            &[0.5556, 1.1111, 3.3333]
        ));
        assert!(matches!(
            ClassWeights::from_counts(&[5, 0]),
            Err(ScorerError::ZeroClassCount { class: 1 })
        ));
        assert!(ClassWeights::from_labels(&[0, 0, 3], 2).is_err());
    }

    #[test]
    fn loss_values() {
        let uniform = ClassWeights::uniform(2);
        assert_eq!(weighted_ce(&[1.0, 0.0], &[1.0, 0.0], &uniform).unwrap(), 0.0);
        let l = weighted_ce(&[0.0, 1.0], &[0.5, 0.5], &uniform).unwrap();
        assert!((l - std::f64::consts::LN_2).abs() < 1e-12);
        let w = ClassWeights::new(vec![0.625, 2.5]).unwrap();
        let l = weighted_ce(&[0.0, 1.0], &[0.2, 0.8], &w).unwrap();
        assert!((l - 2.5 * -(0.8f64.ln())).abs() < 1e-12);
        assert!((l - 0.5579).abs() < 1e-4);
        assert!(weighted_ce(&[1.0], &[1.0, 0.0], &uniform).is_err());
    }

    #[test]
    fn zero_probability_is_clamped() {
        let l = weighted_ce(&[1.0, 0.0], &[0.0, 1.0], &ClassWeights::uniform(2)).unwrap();
        assert!((l - -(PROB_FLOOR.ln())).abs() < 1e-9);
    }

    proptest! {
        #[test]
        fn non_negative_and_linear_in_weights(
            raw in prop::collection::vec(0.001f64..1.0, 3),
            gold in 0usize..3,
            w in prop::collection::vec(0.1f64..5.0, 3),
            k in 0.1f64..10.0,
        ) {
            let total: f64 = raw.iter().sum();
            let p: Vec<f64> = raw.iter().map(|x| x / total).collect();
            let mut y = vec![0.0; 3];
            y[gold] = 1.0;
            let weights = ClassWeights::new(w).unwrap();
            let l = weighted_ce(&y, &p, &weights).unwrap();
            prop_assert!(l >= 0.0);
            let lk = weighted_ce(&y, &p, &weights.scaled(k)).unwrap();
            prop_assert!((lk - k * l).abs() <= 1e-12 * (1.0 + lk.abs()));
            let standard = -p[gold].ln();
            prop_assert_eq!(weighted_ce(&y, &p, &ClassWeights::uniform(3)).unwrap(), standard);
        }
    }
}
