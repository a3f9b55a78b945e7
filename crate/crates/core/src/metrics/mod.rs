//! Text-generation metrics and engagement KPIs.

mod bertscore;
mod claims;
mod kpi;
mod rouge;
mod tokenize;

use thiserror::Error;

pub use bertscore::{bert_score, bert_score_rescaled, rescale_baseline, BertScoreResult, EmbeddedSeq, IdfTable, RescaledTriple};
pub use claims::{extract_claims, factual_accuracy, ClaimExtractor, ClaimLabel, ClaimVerdict, FactualAccuracy, RuleBasedExtractor};
pub use kpi::{kpi_rates, KpiReport};
pub use rouge::{lcs_len, rouge_l, rouge_l_text, RougeResult, DEFAULT_BETA};
pub use tokenize::{tokenize, TokenSeq};

#[derive(Debug, Error, PartialEq)]
pub enum MetricError {
    #[error("reference sequence is empty")]
    EmptyReference,
    #[error("beta must be positive and finite")]
    InvalidBeta,
    #[error("embedded sequence is empty")]
    EmptySequence,
    #[error("embedding dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("token {0} has a zero-norm embedding")]
    ZeroNorm(usize),
    #[error("idf weights sum to zero")]
    ZeroWeight,
    #[error("{tokens} tokens but {vectors} vectors and {idf} idf weights")]
    LengthMismatch { tokens: usize, vectors: usize, idf: usize },
    #[error("idf weight at {0} is negative or not finite")]
    InvalidIdf(usize),
    #[error("baseline must be below 1")]
    BaselineOutOfRange,
    #[error("no delivered messages")]
    NoDeliveries,
}

impl MetricError {
    pub fn code(&self) -> &'static str {
        match self {
            MetricError::EmptyReference => "EMPTY_REFERENCE",
            MetricError::InvalidBeta => "INVALID_BETA",
            MetricError::EmptySequence => "EMPTY_SEQUENCE",
            MetricError::DimensionMismatch(..) => "DIMENSION_MISMATCH",
            MetricError::ZeroNorm(_) => "ZERO_NORM",
            MetricError::ZeroWeight => "ZERO_WEIGHT",
            MetricError::LengthMismatch { .. } => "LENGTH_MISMATCH",
            MetricError::InvalidIdf(_) => "INVALID_IDF",
            MetricError::BaselineOutOfRange => "BASELINE_OUT_OF_RANGE",
            MetricError::NoDeliveries => "NO_DELIVERIES",
        }
    }
}
