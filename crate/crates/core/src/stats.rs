//! Human-evaluation arithmetic and inter-rater reliability.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::Scalar;

/// Tolerance on checklist weight sums.
pub const CHECKLIST_WEIGHT_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error, PartialEq)]
pub enum StatsError {
    #[error("rating {0} outside 1..=5")]
    RatingOutOfRange(i64),
    #[error("no ratings")]
    Empty,
    #[error("unknown checklist component {0:?}")]
    UnknownComponent(String),
    #[error("invalid checklist: {0}")]
    InvalidChecklist(String),
    #[error("confusion matrix must be square and non-empty")]
    NotSquare,
    #[error("statistic undefined: {0}")]
    Degenerate(&'static str),
    #[error("need at least two units with two or more ratings")]
    InsufficientData,
    #[error("series lengths differ: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("series has zero variance")]
    ZeroVariance,
}

impl StatsError {
    pub fn code(&self) -> &'static str {
        match self {
            StatsError::RatingOutOfRange(_) => "RATING_OUT_OF_RANGE",
            StatsError::Empty => "EMPTY",
            StatsError::UnknownComponent(_) => "UNKNOWN_COMPONENT",
            StatsError::InvalidChecklist(_) => "INVALID_CHECKLIST",
            StatsError::NotSquare => "NOT_SQUARE",
            StatsError::Degenerate(_) => "DEGENERATE",
            StatsError::InsufficientData => "INSUFFICIENT_DATA",
            StatsError::LengthMismatch(..) => "LENGTH_MISMATCH",
            StatsError::ZeroVariance => "ZERO_VARIANCE",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RatingRecord {
    pub item_id: String,
    pub rater_id: String,
    pub rating: u8,
}

impl RatingRecord {
    pub fn new(item_id: impl Into<String>, rater_id: impl Into<String>, rating: u8) -> Result<Self, StatsError> {
        check_rating(i64::from(rating))?;
        Ok(Self { item_id: item_id.into(), rater_id: rater_id.into(), rating })
    }
}

fn check_rating(r: i64) -> Result<u8, StatsError> {
    if (1..=5).contains(&r) {
        Ok(r as u8)
    } else {
        Err(StatsError::RatingOutOfRange(r))
    }
}

/// `(rating - 1) / 4 * 100` on the 5-point scale.
pub fn rating_to_percent<T: Scalar>(rating: i64) -> Result<T, StatsError> {
    let r = check_rating(rating)?;
    Ok(T::from_count(u64::from(r - 1)) / T::lit(4.0) * T::lit(100.0))
}

/// Mean percentage over the raters of one item.
pub fn item_relevance<T: Scalar>(records: &[RatingRecord]) -> Result<T, StatsError> {
    if records.is_empty() {
        return Err(StatsError::Empty);
    }
    let sum = records
        .iter()
        .map(|r| rating_to_percent::<T>(i64::from(r.rating)))
        .sum::<Result<T, _>>()?;
    Ok(sum / T::from_count(records.len() as u64))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChecklistComponent {
    pub name: String,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChecklistSpec {
    pub components: Vec<ChecklistComponent>,
}

/// The seven research-summary components, in checklist order.
pub const DEFAULT_COMPONENTS: [&str; 7] = [
    "executive summary",
    "company background",
    "market analysis",
    "competitors",
    "finance",
    "strategy",
    "supporting data",
];

impl ChecklistSpec {
    pub fn new(components: Vec<ChecklistComponent>) -> Result<Self, StatsError> {
        if components.is_empty() {
            return Err(StatsError::InvalidChecklist("no components".into()));
        }
        let mut names = BTreeSet::new();
        for c in &components {
            if !(c.weight > 0.0 && c.weight.is_finite()) {
                return Err(StatsError::InvalidChecklist(format!("weight of {:?} must be positive", c.name)));
            }
            if !names.insert(c.name.as_str()) {
                return Err(StatsError::InvalidChecklist(format!("duplicate component {:?}", c.name)));
            }
        }
        let sum: f64 = components.iter().map(|c| c.weight).sum();
        if (sum - 1.0).abs() > CHECKLIST_WEIGHT_TOLERANCE {
            return Err(StatsError::InvalidChecklist(format!("weights sum to {sum}")));
        }
        Ok(Self { components })
    }

    pub fn equal_weights<S: AsRef<str>>(names: &[S]) -> Result<Self, StatsError> {
        let w = 1.0 / names.len().max(1) as f64;
        Self::new(names.iter().map(|n| ChecklistComponent { name: n.as_ref().to_owned(), weight: w }).collect())
    }
}

impl Default for ChecklistSpec {
    fn default() -> Self {
        Self::equal_weights(&DEFAULT_COMPONENTS).expect("default checklist is valid")
    }
}

/// `100 * sum of weights of present components`.
pub fn completeness_score<T: Scalar, S: AsRef<str>>(present: &[S], spec: &ChecklistSpec) -> Result<T, StatsError> {
    let mut chosen = BTreeSet::new();
    for name in present {
        let name = name.as_ref();
        if !spec.components.iter().any(|c| c.name == name) {
            return Err(StatsError::UnknownComponent(name.to_owned()));
        }
        chosen.insert(name);
    }
    let weight: f64 = spec.components.iter().filter(|c| chosen.contains(c.name.as_str())).map(|c| c.weight).sum();
    Ok(T::lit(100.0) * T::lit(weight))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Statistic {
    CohenKappa,
    KrippendorffAlpha,
    PearsonR,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DistanceMetric {
    Nominal,
    Interval,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AgreementResult<T> {
    pub statistic: Statistic,
    pub value: T,
    /// Distance metric for alpha.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub metric: Option<DistanceMetric>,
}

/// Cohen's kappa from a square confusion matrix of co-counts between two raters.
///
/// Evaluated as `(N·trace − Σ r_i c_i) / (N² − Σ r_i c_i)` in integers, so
/// the only rounding is the final division.
pub fn cohen_kappa<T: Scalar>(confusion: &[Vec<u64>]) -> Result<AgreementResult<T>, StatsError> {
    let k = confusion.len();
    if k == 0 || confusion.iter().any(|row| row.len() != k) {
        return Err(StatsError::NotSquare);
    }
    let total: u128 = confusion.iter().flatten().map(|&c| u128::from(c)).sum();
    if total == 0 {
        return Err(StatsError::Degenerate("empty confusion matrix"));
    }
    let trace: u128 = (0..k).map(|i| u128::from(confusion[i][i])).sum();
    let chance: u128 = (0..k)
        .map(|i| {
            let row: u128 = confusion[i].iter().map(|&c| u128::from(c)).sum();
            let col: u128 = confusion.iter().map(|r| u128::from(r[i])).sum();
            row * col
        })
        .sum();
    let denom = total * total - chance;
    if denom == 0 {
        return Err(StatsError::Degenerate("expected agreement is 1"));
    }
    let numer = (total * trace) as i128 - chance as i128;
    let value = T::from_i128(numer).expect("fits") / T::from_u128(denom).expect("fits");
    Ok(AgreementResult { statistic: Statistic::CohenKappa, value, metric: None })
}

/// Krippendorff's alpha over rating records, grouped by item.
pub fn krippendorff_alpha<T: Scalar>(records: &[RatingRecord], metric: DistanceMetric) -> Result<AgreementResult<T>, StatsError> {
    let mut units: BTreeMap<&str, Vec<T>> = BTreeMap::new();
    for r in records {
        check_rating(i64::from(r.rating))?;
        units.entry(r.item_id.as_str()).or_default().push(T::from_count(u64::from(r.rating)));
    }
    let units: Vec<Vec<T>> = units.into_values().collect();
    krippendorff_alpha_units(&units, metric)
}

/// Krippendorff's alpha from per-unit value lists via the coincidence matrix.
///
/// Units with fewer than two values are not pairable and are dropped.
pub fn krippendorff_alpha_units<T: Scalar>(units: &[Vec<T>], metric: DistanceMetric) -> Result<AgreementResult<T>, StatsError> {
    let pairable: Vec<&Vec<T>> = units.iter().filter(|u| u.len() >= 2).collect();
    if pairable.len() < 2 {
        return Err(StatsError::InsufficientData);
    }

    let mut values: Vec<T> = pairable.iter().flat_map(|u| u.iter().copied()).collect();
    values.sort_by(|a, b| a.partial_cmp(b).expect("ratings are finite"));
    values.dedup();
    let index = |v: T| values.iter().position(|x| *x == v).expect("value indexed");

    let c = values.len();
    let mut coincidence = vec![vec![T::zero(); c]; c];
    for unit in &pairable {
        let weight = T::one() / T::from_count(unit.len() as u64 - 1);
        for (i, a) in unit.iter().enumerate() {
            for (j, b) in unit.iter().enumerate() {
                if i != j {
                    coincidence[index(*a)][index(*b)] = coincidence[index(*a)][index(*b)] + weight;
                }
            }
        }
    }
    let marginals: Vec<T> = coincidence.iter().map(|row| row.iter().copied().sum()).collect();
    let n: T = marginals.iter().copied().sum();

    let delta = |a: usize, b: usize| -> T {
        match metric {
            DistanceMetric::Nominal => {
                if a == b {
                    T::zero()
                } else {
                    T::one()
                }
            }
            DistanceMetric::Interval => (values[a] - values[b]).powi(2),
        }
    };

    let mut observed = T::zero();
    let mut expected = T::zero();
    for a in 0..c {
        for b in 0..c {
            let d = delta(a, b);
            observed = observed + coincidence[a][b] * d;
            expected = expected + marginals[a] * marginals[b] * d;
        }
    }
    let d_o = observed / n;
    let d_e = expected / (n * (n - T::one()));
    if d_e <= T::zero() {
        return Err(StatsError::Degenerate("no disagreement is possible: all values identical"));
    }
    Ok(AgreementResult { statistic: Statistic::KrippendorffAlpha, value: T::one() - d_o / d_e, metric: Some(metric) })
}

/// Pearson product-moment correlation.
pub fn pearson_r<T: Scalar>(x: &[T], y: &[T]) -> Result<AgreementResult<T>, StatsError> {
    if x.len() != y.len() {
        return Err(StatsError::LengthMismatch(x.len(), y.len()));
    }
    if x.len() < 2 {
        return Err(StatsError::InsufficientData);
    }
    let n = T::from_count(x.len() as u64);
    let mx = x.iter().copied().sum::<T>() / n;
    let my = y.iter().copied().sum::<T>() / n;
    let (mut sxy, mut sxx, mut syy) = (T::zero(), T::zero(), T::zero());
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (*a - mx, *b - my);
        sxy = sxy + dx * dy;
        sxx = sxx + dx * dx;
        syy = syy + dy * dy;
    }
    if sxx <= T::zero() || syy <= T::zero() {
        return Err(StatsError::ZeroVariance);
    }
    let r = (sxy / (sxx.sqrt() * syy.sqrt())).max(-T::one()).min(T::one());
    Ok(AgreementResult { statistic: Statistic::PearsonR, value: r, metric: None })
}
