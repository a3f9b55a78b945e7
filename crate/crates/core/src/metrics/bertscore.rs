use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::{MetricError, TokenSeq};
use crate::Scalar;

/// Tokens with their injected embeddings and idf weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddedSeq<T> {
    pub tokens: Vec<String>,
    pub vectors: Vec<Vec<T>>,
    pub idf: Vec<T>,
}

impl<T: Scalar> EmbeddedSeq<T> {
    pub fn new(tokens: Vec<String>, vectors: Vec<Vec<T>>, idf: Vec<T>) -> Result<Self, MetricError> {
        let seq = Self { tokens, vectors, idf };
        seq.validate()?;
        Ok(seq)
    }

    /// Equal idf weight of one for every token.
    pub fn uniform(tokens: Vec<String>, vectors: Vec<Vec<T>>) -> Result<Self, MetricError> {
        let idf = vec![T::one(); vectors.len()];
        Self::new(tokens, vectors, idf)
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.vectors.first().map_or(0, Vec::len)
    }

    pub fn validate(&self) -> Result<(), MetricError> {
        let (n, v, w) = (self.tokens.len(), self.vectors.len(), self.idf.len());
        if n != v || n != w {
            return Err(MetricError::LengthMismatch { tokens: n, vectors: v, idf: w });
        }
        if n == 0 {
            return Err(MetricError::EmptySequence);
        }
        let dim = self.dim();
        if dim == 0 {
            return Err(MetricError::DimensionMismatch(0, 1));
        }
        if let Some(bad) = self.vectors.iter().find(|vec| vec.len() != dim) {
            return Err(MetricError::DimensionMismatch(dim, bad.len()));
        }
        if let Some(i) = self.idf.iter().position(|w| !(w.is_finite() && *w >= T::zero())) {
            return Err(MetricError::InvalidIdf(i));
        }
        Ok(())
    }

    fn unit_vectors(&self) -> Result<Vec<Vec<T>>, MetricError> {
        self.vectors
            .iter()
            .enumerate()
            .map(|(i, v)| {
                let norm = v.iter().map(|x| *x * *x).sum::<T>().sqrt();
                if norm > T::zero() && norm.is_finite() {
                    Ok(v.iter().map(|x| *x / norm).collect())
                } else {
                    Err(MetricError::ZeroNorm(i))
                }
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RescaledTriple<T> {
    pub precision: T,
    pub recall: T,
    pub f1: T,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BertScoreResult<T> {
    pub precision: T,
    pub recall: T,
    pub f1: T,
    pub baseline: T,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rescaled: Option<RescaledTriple<T>>,
}

/// Greedy max-cosine matching with idf-weighted averaging.
///
/// Precision averages, over candidate tokens, the best cosine to any reference
/// token; recall does the same over reference tokens.
pub fn bert_score<T: Scalar>(candidate: &EmbeddedSeq<T>, reference: &EmbeddedSeq<T>) -> Result<BertScoreResult<T>, MetricError> {
    candidate.validate()?;
    reference.validate()?;
    if candidate.dim() != reference.dim() {
        return Err(MetricError::DimensionMismatch(candidate.dim(), reference.dim()));
    }
    let cu = candidate.unit_vectors()?;
    let ru = reference.unit_vectors()?;

    let mut row_best = vec![T::neg_infinity(); cu.len()];
    let mut col_best = vec![T::neg_infinity(); ru.len()];
    for (i, c) in cu.iter().enumerate() {
        for (j, r) in ru.iter().enumerate() {
            let sim: T = c.iter().zip(r).map(|(a, b)| *a * *b).sum();
            row_best[i] = row_best[i].max(sim);
            col_best[j] = col_best[j].max(sim);
        }
    }

    let precision = weighted_mean(&row_best, &candidate.idf)?;
    let recall = weighted_mean(&col_best, &reference.idf)?;
    Ok(BertScoreResult { precision, recall, f1: harmonic(precision, recall), baseline: T::zero(), rescaled: None })
}

/// Scores and then rescales P, R and F1 against baseline `b`.
pub fn bert_score_rescaled<T: Scalar>(candidate: &EmbeddedSeq<T>, reference: &EmbeddedSeq<T>, baseline: T) -> Result<BertScoreResult<T>, MetricError> {
    let mut raw = bert_score(candidate, reference)?;
    raw.rescaled = Some(RescaledTriple {
        precision: rescale_baseline(raw.precision, baseline)?,
        recall: rescale_baseline(raw.recall, baseline)?,
        f1: rescale_baseline(raw.f1, baseline)?,
    });
    raw.baseline = baseline;
    Ok(raw)
}

/// `(score - b) / (1 - b)`.
pub fn rescale_baseline<T: Scalar>(score: T, baseline: T) -> Result<T, MetricError> {
    if !baseline.is_finite() || baseline >= T::one() {
        return Err(MetricError::BaselineOutOfRange);
    }
    Ok((score - baseline) / (T::one() - baseline))
}

fn weighted_mean<T: Scalar>(values: &[T], weights: &[T]) -> Result<T, MetricError> {
    let mass: T = weights.iter().copied().sum();
    if mass <= T::zero() {
        return Err(MetricError::ZeroWeight);
    }
    Ok(values.iter().zip(weights).map(|(v, w)| *v * *w).sum::<T>() / mass)
}

fn harmonic<T: Scalar>(p: T, r: T) -> T {
    let s = p + r;
    if s > T::zero() {
        T::lit(2.0) * p * r / s
    } else {
        T::zero()
    }
}

/// Inverse document frequencies `ln((N+1)/(df+1))` over a reference corpus.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct IdfTable {
    pub documents: u64,
    pub df: BTreeMap<String, u64>,
}

impl IdfTable {
    pub fn from_corpus<'a, I: IntoIterator<Item = &'a TokenSeq>>(corpus: I) -> Self {
        let mut table = IdfTable::default();
        for doc in corpus {
            table.documents += 1;
            let unique: BTreeSet<&String> = doc.0.iter().collect();
            for tok in unique {
                *table.df.entry(tok.clone()).or_default() += 1;
            }
        }
        table
    }

    pub fn weight<T: Scalar>(&self, token: &str) -> T {
        let df = self.df.get(token).copied().unwrap_or(0);
        (T::from_count(self.documents + 1) / T::from_count(df + 1)).ln()
    }

    pub fn weights<T: Scalar>(&self, tokens: &[String]) -> Vec<T> {
        tokens.iter().map(|t| self.weight(t)).collect()
    }
}
