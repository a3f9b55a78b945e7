//! Core vocabulary and pure computations for the outreach lab.
//!
//! Everything in this crate is I/O free: campaign and message types, arm
//! assignment, token-cost accounting, the text metrics used to score
//! generated research and outreach, inter-rater statistics, and the LoRA
//! parameter/merge arithmetic. Numeric routines are generic over
//! [`Scalar`] (`f32` or `f64`); currency uses exact decimals.

pub mod catalog;
pub mod domain;
pub mod ids;
pub mod lora;
pub mod metrics;
pub mod scalar;
pub mod stats;
pub mod time;
pub mod usage;

pub use ids::{ArmId, CampaignId, CandidateId, JobId, LeadId, MessageId};
pub use scalar::Scalar;
pub use time::Timestamp;

/// Currency amounts, exact decimal.
pub type Money = rust_decimal::Decimal;

/// `f64` instantiations used by the service and CLI.
pub type RougeScore = metrics::RougeResult<f64>;
pub type BertScore = metrics::BertScoreResult<f64>;
pub type Embedded = metrics::EmbeddedSeq<f64>;
pub type Agreement = stats::AgreementResult<f64>;
pub type Factual = metrics::FactualAccuracy<f64>;
pub type Merge = lora::MergeInput<f64>;
