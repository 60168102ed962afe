//! Rating aggregation, binary grouping, label distributions and rater agreement.

use std::collections::BTreeMap;
use std::fmt;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Corpus, Unit};
use crate::stats;

#[derive(Debug, Error)]
pub enum AnnotateError {
    #[error("cannot aggregate an empty rating list")]
    EmptyRatings,
    #[error("rating {0} outside 1..=3")]
    RatingOutOfRange(i64),
    #[error("variable {0:?} is not annotated on any unit")]
    UnknownVariable(String),
    #[error("unknown rater {rater:?} for variable {variable:?}")]
    UnknownRater { variable: String, rater: String },
    #[error("rater {rater:?} rated session {session:?} twice for variable {variable:?}")]
    DuplicateRating {
        variable: String,
        rater: String,
        session: String,
    },
    #[error("no rater pair with a defined correlation for variable {0:?}")]
    NoDefinedPairs(String),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("malformed agreement input: {0}")]
    Malformed(String),
}

/// Three-point rating of one observation variable.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(into = "u8", try_from = "u8")]
pub enum RatingLabel {
    Low = 1,
    Mid = 2,
    High = 3,
}

impl RatingLabel {
    pub const ALL: [RatingLabel; 3] = [RatingLabel::Low, RatingLabel::Mid, RatingLabel::High];

    pub fn value(self) -> u8 {
        self as u8
    }

    /// Zero-based class index.
    pub fn index(self) -> usize {
        self as usize - 1
    }

    pub fn from_value(value: i64) -> Result<Self, AnnotateError> {
        match value {
            1 => Ok(RatingLabel::Low),
            2 => Ok(RatingLabel::Mid),
            3 => Ok(RatingLabel::High),
            other => Err(AnnotateError::RatingOutOfRange(other)),
        }
    }

    pub fn from_index(index: usize) -> Option<Self> {
        Self::ALL.get(index).copied()
    }
}

impl From<RatingLabel> for u8 {
    fn from(l: RatingLabel) -> u8 {
        l.value()
    }
}

impl TryFrom<u8> for RatingLabel {
    type Error = AnnotateError;
    fn try_from(v: u8) -> Result<Self, Self::Error> {
        Self::from_value(v as i64)
    }
}

impl fmt::Display for RatingLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RatingLabel::Low => "low",
            RatingLabel::Mid => "mid",
            RatingLabel::High => "high",
        })
    }
}

/// Low against mid-or-high.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BinaryLabel {
    Neg,
    Pos,
}

impl BinaryLabel {
    pub fn index(self) -> usize {
        self as usize
    }
}

pub fn to_binary(label: RatingLabel) -> BinaryLabel {
    match label {
        RatingLabel::Low => BinaryLabel::Neg,
        RatingLabel::Mid | RatingLabel::High => BinaryLabel::Pos,
    }
}

/// Mean rating rounded half away from zero.
pub fn aggregate_ratings(ratings: &[u8]) -> Result<RatingLabel, AnnotateError> {
    if ratings.is_empty() {
        return Err(AnnotateError::EmptyRatings);
    }
    if let Some(&bad) = ratings.iter().find(|r| !(1..=3).contains(*r)) {
        return Err(AnnotateError::RatingOutOfRange(bad as i64));
    }
    let sum: u64 = ratings.iter().map(|&r| r as u64).sum();
    let n = ratings.len() as u64;
    // round(sum / n) with halves going up, in integers
    let rounded = (2 * sum + n) / (2 * n);
    RatingLabel::from_value(rounded as i64)
}

/// Aggregated label of `unit` for `variable`, if annotated.
pub fn unit_label<U: Unit + ?Sized>(unit: &U, variable: &str) -> Option<RatingLabel> {
    unit.annotations()
        .get(variable)
        .and_then(|set| aggregate_ratings(&set.ratings).ok())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelDistribution {
    pub variable: String,
    /// Counts for Low, Mid, High.
    pub counts: [usize; 3],
    pub total: usize,
}

impl LabelDistribution {
    pub fn fractions(&self) -> [f64; 3] {
        self.counts.map(|c| c as f64 / self.total as f64)
    }

    pub fn count(&self, label: RatingLabel) -> usize {
        self.counts[label.index()]
    }

    /// Counts after grouping into Neg (low) and Pos (mid + high).
    pub fn binary_counts(&self) -> [usize; 2] {
        [self.counts[0], self.counts[1] + self.counts[2]]
    }
}

pub fn label_distribution(corpus: &Corpus, variable: &str) -> Result<LabelDistribution, AnnotateError> {
    let mut counts = [0usize; 3];
    for session in &corpus.sessions {
        if let Some(set) = session.annotations.get(variable) {
            counts[aggregate_ratings(&set.ratings)?.index()] += 1;
        }
    }
    let total = counts.iter().sum();
    if total == 0 {
        return Err(AnnotateError::UnknownVariable(variable.to_owned()));
    }
    Ok(LabelDistribution {
        variable: variable.to_owned(),
        counts,
        total,
    })
}

/// Per-variable ratings keyed by rater, then session.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RaterMatrix {
    variables: BTreeMap<String, BTreeMap<String, BTreeMap<String, RatingLabel>>>,
}

#[derive(Debug, Deserialize)]
struct RatingRow {
    variable: String,
    rater_id: String,
    session_id: String,
    rating: i64,
}

impl RaterMatrix {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(
        &mut self,
        variable: &str,
        rater: &str,
        session: &str,
        rating: RatingLabel,
    ) -> Result<(), AnnotateError> {
        let slot = self
            .variables
            .entry(variable.to_owned())
            .or_default()
            .entry(rater.to_owned())
            .or_default();
        if slot.insert(session.to_owned(), rating).is_some() {
            return Err(AnnotateError::DuplicateRating {
                variable: variable.to_owned(),
                rater: rater.to_owned(),
                session: session.to_owned(),
            });
        }
        Ok(())
    }

    /// Reads `variable,rater_id,session_id,rating` CSV.
    pub fn from_csv<R: Read>(reader: R) -> Result<Self, AnnotateError> {
        let mut matrix = Self::new();
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        for row in rdr.deserialize() {
            let row: RatingRow = row?;
            let label = RatingLabel::from_value(row.rating)?;
            matrix.insert(&row.variable, &row.rater_id, &row.session_id, label)?;
        }
        Ok(matrix)
    }

    /// Treats the position of each rating in a session's list as the rater id
    /// (`r0`, `r1`, ...).
    pub fn from_corpus(corpus: &Corpus) -> Result<Self, AnnotateError> {
        let mut matrix = Self::new();
        for s in &corpus.sessions {
            for (variable, set) in &s.annotations {
                for (i, &r) in set.ratings.iter().enumerate() {
                    let label = RatingLabel::from_value(r as i64)?;
                    matrix.insert(variable, &format!("r{i}"), &s.session_id, label)?;
                }
            }
        }
        Ok(matrix)
    }

    pub fn variables(&self) -> impl Iterator<Item = &str> {
        self.variables.keys().map(String::as_str)
    }

    pub fn raters(&self, variable: &str) -> Vec<&str> {
        self.variables
            .get(variable)
            .map(|m| m.keys().map(String::as_str).collect())
            .unwrap_or_default()
    }

    fn ratings_of(&self, variable: &str, rater: &str) -> Result<&BTreeMap<String, RatingLabel>, AnnotateError> {
        let by_rater = self
            .variables
            .get(variable)
            .ok_or_else(|| AnnotateError::UnknownVariable(variable.to_owned()))?;
        by_rater.get(rater).ok_or_else(|| AnnotateError::UnknownRater {
            variable: variable.to_owned(),
            rater: rater.to_owned(),
        })
    }
}

/// Spearman correlation between two raters on the sessions both rated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairAgreement {
    pub rater_a: String,
    pub rater_b: String,
    pub n: usize,
    /// `None` when either rater gives a single rating value on the overlap.
    pub rho: Option<f64>,
}

pub fn pairwise_spearman(
    matrix: &RaterMatrix,
    rater_a: &str,
    rater_b: &str,
    variable: &str,
) -> Result<PairAgreement, AnnotateError> {
    let a = matrix.ratings_of(variable, rater_a)?;
    let b = matrix.ratings_of(variable, rater_b)?;
    let (xs, ys): (Vec<f64>, Vec<f64>) = a
        .iter()
        .filter_map(|(session, ra)| b.get(session).map(|rb| (ra.value() as f64, rb.value() as f64)))
        .unzip();
    Ok(PairAgreement {
        rater_a: rater_a.to_owned(),
        rater_b: rater_b.to_owned(),
        n: xs.len(),
        rho: stats::spearman(&xs, &ys),
    })
}

/// Every rater pair (a < b) with at least one shared session.
pub fn all_pairs(matrix: &RaterMatrix, variable: &str) -> Result<Vec<PairAgreement>, AnnotateError> {
    let raters = matrix.raters(variable);
    if raters.is_empty() {
        return Err(AnnotateError::UnknownVariable(variable.to_owned()));
    }
    let mut pairs = Vec::new();
    for (i, a) in raters.iter().enumerate() {
        for b in &raters[i + 1..] {
            let pair = pairwise_spearman(matrix, a, b, variable)?;
            if pair.n > 0 {
                pairs.push(pair);
            }
        }
    }
    Ok(pairs)
}

/// How pairs with an undefined correlation enter the weighted mean.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UndefinedPairs {
    /// Dropped from numerator and denominator.
    #[default]
    Exclude,
    /// Counted as ρ = 0 with their full sample size.
    AsZero,
}

/// Sample-size weighted mean of pairwise correlations.
pub fn weighted_mean_rho(pairs: &[PairAgreement], undefined: UndefinedPairs) -> Option<f64> {
    let mut num = 0.0;
    let mut den = 0.0;
    let mut defined = 0;
    for p in pairs {
        match (p.rho, undefined) {
            (Some(rho), _) => {
                num += p.n as f64 * rho;
                den += p.n as f64;
                defined += 1;
            }
            (None, UndefinedPairs::AsZero) => den += p.n as f64,
            (None, UndefinedPairs::Exclude) => {}
        }
    }
    (defined > 0 && den > 0.0).then(|| num / den)
}

/// Agreement of all rater pairs for `variable`, weighted by overlap size.
pub fn weighted_agreement(
    matrix: &RaterMatrix,
    variable: &str,
    undefined: UndefinedPairs,
) -> Result<f64, AnnotateError> {
    let pairs = all_pairs(matrix, variable)?;
    weighted_mean_rho(&pairs, undefined).ok_or_else(|| AnnotateError::NoDefinedPairs(variable.to_owned()))
}

/// Pairwise results and the weighted summary for one variable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgreementReport {
    pub variable: String,
    pub pairs: Vec<PairAgreement>,
    pub weighted_rho: Option<f64>,
}

impl AgreementReport {
    pub fn from_pairs(variable: &str, pairs: Vec<PairAgreement>, undefined: UndefinedPairs) -> Self {
        let weighted_rho = weighted_mean_rho(&pairs, undefined);
        Self {
            variable: variable.to_owned(),
            pairs,
            weighted_rho,
        }
    }
}

pub fn agreement_reports(
    matrix: &RaterMatrix,
    undefined: UndefinedPairs,
) -> Result<Vec<AgreementReport>, AnnotateError> {
    matrix
        .variables()
        .map(|v| Ok(AgreementReport::from_pairs(v, all_pairs(matrix, v)?, undefined)))
        .collect()
}

fn fmt_rho(rho: Option<f64>) -> String {
    rho.map_or_else(|| "-".to_owned(), |r| format!("{r:.4}"))
}

/// Writes `variable,rater_a,rater_b,n,rho` rows, then one `*,*` summary row per
/// variable carrying the total overlap and the weighted correlation.
pub fn write_agreement_csv<W: Write>(reports: &[AgreementReport], out: W) -> Result<(), AnnotateError> {
    let mut wtr = csv::Writer::from_writer(out);
    wtr.write_record(["variable", "rater_a", "rater_b", "n", "rho"])?;
    for report in reports {
        for p in &report.pairs {
            wtr.write_record([
                &report.variable,
                &p.rater_a,
                &p.rater_b,
                &p.n.to_string(),
                &fmt_rho(p.rho),
            ])?;
        }
        let total: usize = report.pairs.iter().map(|p| p.n).sum();
        wtr.write_record([
            &report.variable,
            "*",
            "*",
            &total.to_string(),
            &fmt_rho(report.weighted_rho),
        ])?;
    }
    wtr.flush().map_err(|e| AnnotateError::Csv(e.into()))?;
    Ok(())
}

/// Reads precomputed pairwise correlations in the agreement CSV layout.
/// Summary rows (`*`) are skipped; `-` or an empty cell marks an undefined ρ.
pub fn read_pairs_csv<R: Read>(reader: R) -> Result<BTreeMap<String, Vec<PairAgreement>>, AnnotateError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let mut out: BTreeMap<String, Vec<PairAgreement>> = BTreeMap::new();
    for record in rdr.records() {
        let record = record?;
        if record.len() != 5 {
            return Err(AnnotateError::Malformed(format!(
                "expected 5 columns, got {}",
                record.len()
            )));
        }
        if &record[1] == "*" {
            continue;
        }
        let n = record[3]
            .parse::<usize>()
            .map_err(|e| AnnotateError::Malformed(format!("bad n {:?}: {e}", &record[3])))?;
        let rho = match &record[4] {
            "-" | "" => None,
            s => Some(
                s.parse::<f64>()
                    .map_err(|e| AnnotateError::Malformed(format!("bad rho {s:?}: {e}")))?,
            ),
        };
        out.entry(record[0].to_owned()).or_default().push(PairAgreement {
            rater_a: record[1].to_owned(),
            rater_b: record[2].to_owned(),
            n,
            rho,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn aggregation_rounds_halves_up() {
        assert_eq!(aggregate_ratings(&[1]).unwrap(), RatingLabel::Low);
        assert_eq!(aggregate_ratings(&[1, 2]).unwrap(), RatingLabel::Mid);
        assert_eq!(aggregate_ratings(&[2, 3, 3]).unwrap(), RatingLabel::High);
        assert_eq!(aggregate_ratings(&[2, 3]).unwrap(), RatingLabel::High);
        assert_eq!(aggregate_ratings(&[1, 1, 2]).unwrap(), RatingLabel::Low);
        assert!(matches!(aggregate_ratings(&[]), Err(AnnotateError::EmptyRatings)));
        assert!(aggregate_ratings(&[4]).is_err());
    }

    #[test]
    fn binary_grouping() {
        assert_eq!(to_binary(RatingLabel::Low), BinaryLabel::Neg);
        assert_eq!(to_binary(RatingLabel::Mid), BinaryLabel::Pos);
        assert_eq!(to_binary(RatingLabel::High), BinaryLabel::Pos);
    }

    fn matrix(a: &[u8], b: &[u8]) -> RaterMatrix {
        let mut m = RaterMatrix::new();
        for (i, &r) in a.iter().enumerate() {
            m.insert("v", "a", &format!("s{i}"), RatingLabel::from_value(r as i64).unwrap())
                .unwrap();
        }
        for (i, &r) in b.iter().enumerate() {
            m.insert("v", "b", &format!("s{i}"), RatingLabel::from_value(r as i64).unwrap())
                .unwrap();
        }
        m
    }

    #[test]
    fn identical_raters_agree_fully() {
        let m = matrix(&[1, 2, 3, 2, 1], &[1, 2, 3, 2, 1]);
        let p = pairwise_spearman(&m, "a", "b", "v").unwrap();
        assert_eq!((p.rho, p.n), (Some(1.0), 5));
    }

    #[test]
    fn constant_rater_is_undefined() {
        let m = matrix(&[1, 2, 3], &[2, 2, 2]);
        assert_eq!(pairwise_spearman(&m, "a", "b", "v").unwrap().rho, None);
        assert!(matches!(
            weighted_agreement(&m, "v", UndefinedPairs::Exclude),
            Err(AnnotateError::NoDefinedPairs(_))
        ));
    }

    #[test]
    fn tied_ranks_case() {
        // ranks a: [1, 2, 3.5, 3.5], b: [1.5, 1.5, 3, 4]; centred cross sum 4,
        // both sums of squares 4.5
        let m = matrix(&[1, 2, 3, 3], &[1, 1, 2, 3]);
        let rho = pairwise_spearman(&m, "a", "b", "v").unwrap().rho.unwrap();
        assert!((rho - 4.0 / 4.5).abs() < 1e-12);
    }

    #[test]
    fn unknown_rater() {
        let m = matrix(&[1, 2], &[1, 2]);
        assert!(matches!(
            pairwise_spearman(&m, "a", "zz", "v"),
            Err(AnnotateError::UnknownRater { .. })
        ));
    }

    #[test]
    fn duplicate_rating_rejected() {
        let mut m = RaterMatrix::new();
        m.insert("v", "a", "s", RatingLabel::Low).unwrap();
        assert!(m.insert("v", "a", "s", RatingLabel::Mid).is_err());
    }

    fn pair(n: usize, rho: Option<f64>) -> PairAgreement {
        PairAgreement {
            rater_a: "a".into(),
            rater_b: "b".into(),
            n,
            rho,
        }
    }

    #[test]
    fn weighted_mean_by_sample_size() {
        let pairs = [pair(10, Some(0.5)), pair(30, Some(0.9))];
        assert!((weighted_mean_rho(&pairs, UndefinedPairs::Exclude).unwrap() - 0.8).abs() < 1e-12);
        assert_eq!(
            weighted_mean_rho(&[pair(7, Some(0.3))], UndefinedPairs::Exclude),
            Some(0.3)
        );
    }

    #[test]
    fn undefined_pair_conventions() {
        let pairs = [pair(10, Some(0.5)), pair(10, None)];
        assert_eq!(weighted_mean_rho(&pairs, UndefinedPairs::Exclude), Some(0.5));
        assert_eq!(weighted_mean_rho(&pairs, UndefinedPairs::AsZero), Some(0.25));
        assert_eq!(weighted_mean_rho(&[pair(10, None)], UndefinedPairs::AsZero), None);
    }

    #[test]
    fn csv_round_trip() {
        let raw = "variable,rater_id,session_id,rating\nv,a,s1,1\nv,a,s2,3\nv,b,s1,1\nv,b,s2,2\n";
        let m = RaterMatrix::from_csv(raw.as_bytes()).unwrap();
        let reports = agreement_reports(&m, UndefinedPairs::Exclude).unwrap();
        let mut buf = Vec::new();
        write_agreement_csv(&reports, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text, "variable,rater_a,rater_b,n,rho\nv,a,b,2,1.0000\nv,*,*,2,1.0000\n");
        let back = read_pairs_csv(text.as_bytes()).unwrap();
        assert_eq!(
            back["v"],
            vec![PairAgreement {
                rater_a: "a".into(),
                rater_b: "b".into(),
                n: 2,
                rho: Some(1.0)
            }]
        );
    }

    #[test]
    fn csv_rejects_bad_rating() {
        let raw = "variable,rater_id,session_id,rating\nv,a,s1,5\n";
        assert!(RaterMatrix::from_csv(raw.as_bytes()).is_err());
    }

    proptest! {
        #[test]
        fn aggregate_within_input_range(ratings in prop::collection::vec(1u8..=3, 1..12)) {
            let label = aggregate_ratings(&ratings).unwrap().value();
            prop_assert!(label >= *ratings.iter().min().unwrap());
            prop_assert!(label <= *ratings.iter().max().unwrap());
        }

        #[test]
        fn spearman_symmetric(a in prop::collection::vec(1u8..=3, 2..15), b in prop::collection::vec(1u8..=3, 2..15)) {
            let m = matrix(&a, &b);
            let ab = pairwise_spearman(&m, "a", "b", "v").unwrap();
            let ba = pairwise_spearman(&m, "b", "a", "v").unwrap();
            prop_assert_eq!(ab.n, ba.n);
            prop_assert_eq!(ab.rho, ba.rho);
        }

        #[test]
        fn weighted_mean_within_defined_range(
            pairs in prop::collection::vec((1usize..100, prop::option::of(-1.0f64..1.0)), 1..30)
        ) {
            let pairs: Vec<PairAgreement> = pairs.into_iter().map(|(n, r)| pair(n, r)).collect();
            let defined: Vec<f64> = pairs.iter().filter_map(|p| p.rho).collect();
            match weighted_mean_rho(&pairs, UndefinedPairs::Exclude) {
                Some(w) => {
                    let lo = defined.iter().cloned().fold(f64::INFINITY, f64::min);
                    let hi = defined.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                    prop_assert!(w >= lo - 1e-12 && w <= hi + 1e-12);
                }
                None => prop_assert!(defined.is_empty()),
            }
        }
    }

    #[test]
    fn binary_monotone() {
        for a in RatingLabel::ALL {
            for b in RatingLabel::ALL {
                if a <= b {
                    assert!(to_binary(a) <= to_binary(b));
                }
            }
        }
    }
}
