//! Command-line tools and HTTP service for the outreach lab.

pub mod error;
pub mod fixtures;
pub mod metrics;
pub mod report;
pub mod server;
pub mod simulate;
