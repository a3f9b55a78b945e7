use serde::{Deserialize, Serialize};

use super::{tokenize, MetricError};
use crate::Scalar;

/// Recall-weighted beta used throughout the evaluation suite.
pub const DEFAULT_BETA: f64 = 1.2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RougeResult<T> {
    pub precision: T,
    pub recall: T,
    pub f_measure: T,
    pub beta: T,
    pub lcs: usize,
}

/// Length of the longest common subsequence, two-row dynamic program.
pub fn lcs_len<S: PartialEq>(a: &[S], b: &[S]) -> usize {
    if a.is_empty() || b.is_empty() {
        return 0;
    }
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = if x == y { prev[j] + 1 } else { prev[j + 1].max(cur[j]) };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// ROUGE-L with F = (1+β²)·R·P / (R + β²·P).
///
/// An empty candidate scores zero; an empty reference is an error.
pub fn rouge_l<T: Scalar, S: PartialEq>(candidate: &[S], reference: &[S], beta: T) -> Result<RougeResult<T>, MetricError> {
    if !(beta > T::zero() && beta.is_finite()) {
        return Err(MetricError::InvalidBeta);
    }
    if reference.is_empty() {
        return Err(MetricError::EmptyReference);
    }
    if candidate.is_empty() {
        return Ok(RougeResult { precision: T::zero(), recall: T::zero(), f_measure: T::zero(), beta, lcs: 0 });
    }
    let lcs = lcs_len(candidate, reference);
    let l = T::from_count(lcs as u64);
    let precision = l / T::from_count(candidate.len() as u64);
    let recall = l / T::from_count(reference.len() as u64);
    let b2 = beta * beta;
    let denom = recall + b2 * precision;
    let f_measure = if denom > T::zero() { (T::one() + b2) * recall * precision / denom } else { T::zero() };
    Ok(RougeResult { precision, recall, f_measure, beta, lcs })
}

/// Tokenizes both texts with the reference tokenizer, then scores.
pub fn rouge_l_text<T: Scalar>(candidate: &str, reference: &str, beta: T) -> Result<RougeResult<T>, MetricError> {
    rouge_l(tokenize(candidate).as_slice(), tokenize(reference).as_slice(), beta)
}
