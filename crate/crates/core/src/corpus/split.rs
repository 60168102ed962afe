use std::collections::{HashMap, HashSet};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::CorpusError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitRatios {
    pub train: f64,
    pub dev: f64,
    pub test: f64,
}

impl Default for SplitRatios {
    fn default() -> Self {
        Self {
            train: 0.6,
            dev: 0.2,
            test: 0.2,
        }
    }
}

impl SplitRatios {
    fn validate(&self) -> Result<(), CorpusError> {
        let parts = [self.train, self.dev, self.test];
        if parts.iter().any(|r| !r.is_finite() || *r <= 0.0) {
            return Err(CorpusError::Split(format!("ratios must be positive, got {parts:?}")));
        }
        let sum: f64 = parts.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(CorpusError::Split(format!("ratios must sum to 1, got {sum}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitRole {
    Train,
    Dev,
    Test,
}

impl SplitRole {
    pub fn as_str(&self) -> &'static str {
        match self {
            SplitRole::Train => "train",
            SplitRole::Dev => "dev",
            SplitRole::Test => "test",
        }
    }
}

/// A seeded train/dev/test partition of unit ids. Each part keeps the
/// original id order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitAssignment {
    pub train: Vec<String>,
    pub dev: Vec<String>,
    pub test: Vec<String>,
    pub seed: u64,
    pub ratios: SplitRatios,
}

impl SplitAssignment {
    pub fn role_of(&self, id: &str) -> Option<SplitRole> {
        if self.train.iter().any(|x| x == id) {
            Some(SplitRole::Train)
        } else if self.dev.iter().any(|x| x == id) {
            Some(SplitRole::Dev)
        } else if self.test.iter().any(|x| x == id) {
            Some(SplitRole::Test)
        } else {
            None
        }
    }

    pub fn roles(&self) -> HashMap<&str, SplitRole> {
        let mut map = HashMap::new();
        for (ids, role) in [
            (&self.train, SplitRole::Train),
            (&self.dev, SplitRole::Dev),
            (&self.test, SplitRole::Test),
        ] {
            for id in ids {
                map.insert(id.as_str(), role);
            }
        }
        map
    }

    pub fn part(&self, role: SplitRole) -> &[String] {
        match role {
            SplitRole::Train => &self.train,
            SplitRole::Dev => &self.dev,
            SplitRole::Test => &self.test,
        }
    }
}

/// Shuffles `ids` with a seeded generator and cuts at `floor(n·train)` and
/// `floor(n·(train+dev))`.
pub fn split_dataset(ids: &[String], ratios: SplitRatios, seed: u64) -> Result<SplitAssignment, CorpusError> {
    ratios.validate()?;
    if ids.is_empty() {
        return Err(CorpusError::Split("id list is empty".into()));
    }
    let mut seen = HashSet::new();
    if let Some(dup) = ids.iter().find(|id| !seen.insert(id.as_str())) {
        return Err(CorpusError::Split(format!("duplicate id {dup:?}")));
    }

    let n = ids.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));

    // the small offset keeps exact products such as 1135 * 0.6 from flooring down
    let cut1 = ((n as f64 * ratios.train) + 1e-9).floor() as usize;
    let cut2 = ((n as f64 * (ratios.train + ratios.dev)) + 1e-9).floor() as usize;
    let cut2 = cut2.clamp(cut1, n);

    let collect = |range: &[usize]| {
        let mut idx = range.to_vec();
        idx.sort_unstable();
        idx.into_iter().map(|i| ids[i].clone()).collect::<Vec<_>>()
    };
    Ok(SplitAssignment {
        train: collect(&order[..cut1]),
        dev: collect(&order[cut1..cut2]),
        test: collect(&order[cut2..]),
        seed,
        ratios,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ids(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("id{i}")).collect()
    }

    fn sizes(s: &SplitAssignment) -> (usize, usize, usize) {
        (s.train.len(), s.dev.len(), s.test.len())
    }

    #[test]
    fn size_arithmetic() {
        let r = SplitRatios::default();
        assert_eq!(sizes(&split_dataset(&ids(10), r, 7).unwrap()), (6, 2, 2));
        assert_eq!(sizes(&split_dataset(&ids(1135), r, 7).unwrap()), (681, 227, 227));
    }

    #[test]
    fn deterministic_per_seed() {
        let r = SplitRatios::default();
        assert_eq!(
            split_dataset(&ids(10), r, 7).unwrap(),
            split_dataset(&ids(10), r, 7).unwrap()
        );
    }

    #[test]
    fn seeds_differ() {
        let r = SplitRatios::default();
        let base = split_dataset(&ids(5), r, 0).unwrap();
        let differing = (1..=100)
            .filter(|&seed| split_dataset(&ids(5), r, seed).unwrap().train != base.train)
            .count();
        assert!(differing >= 1);
    }

    #[test]
    fn rejects_bad_inputs() {
        let r = SplitRatios::default();
        assert!(split_dataset(&[], r, 0).is_err());
        let bad = SplitRatios {
            train: 0.5,
            dev: 0.2,
            test: 0.2,
        };
        assert!(split_dataset(&ids(3), bad, 0).is_err());
        let neg = SplitRatios {
            train: 1.2,
            dev: -0.1,
            test: -0.1,
        };
        assert!(split_dataset(&ids(3), neg, 0).is_err());
        assert!(split_dataset(&["a".into(), "a".into()], r, 0).is_err());
    }

    proptest! {
        #[test]
        fn partition_is_disjoint_and_exhaustive(n in 1usize..200, seed in any::<u64>()) {
            let all = ids(n);
            let s = split_dataset(&all, SplitRatios::default(), seed).unwrap();
            let mut joined: Vec<String> = s.train.iter().chain(&s.dev).chain(&s.test).cloned().collect();
            prop_assert_eq!(joined.len(), n);
            joined.sort();
            let mut expected = all.clone();
            expected.sort();
            prop_assert_eq!(joined, expected);
        }
    }
}
