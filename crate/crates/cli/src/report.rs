//! Comparison reports over fixture tables, with every number labeled by origin.

use std::fmt;
use std::path::Path;

use rust_decimal::prelude::ToPrimitive;
use rust_decimal::Decimal;
use serde::{Deserialize, Serialize};

use crate::error::{parse_json, read_file, CliError};
use crate::fixtures::{render_table, Fixture, FixtureError};
use crate::simulate::AggregateReport;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Provenance {
    #[serde(rename = "computed")]
    Computed,
    #[serde(rename = "paper-fixture")]
    PaperFixture,
}

impl Provenance {
    /// Arithmetic over two labeled inputs keeps a fixture label only when both inputs carry it.
    pub fn combine(self, other: Provenance) -> Provenance {
        if self == Provenance::PaperFixture && other == Provenance::PaperFixture {
            Provenance::PaperFixture
        } else {
            Provenance::Computed
        }
    }
}

impl fmt::Display for Provenance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Provenance::Computed => "computed",
            Provenance::PaperFixture => "paper-fixture",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Labeled<T> {
    pub value: T,
    pub provenance: Provenance,
}

impl<T> Labeled<T> {
    pub fn fixture(value: T) -> Self {
        Self { value, provenance: Provenance::PaperFixture }
    }

    pub fn computed(value: T) -> Self {
        Self { value, provenance: Provenance::Computed }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RatioKind {
    /// baseline cost / model cost: how many times cheaper the model is.
    CostRatio,
    /// 100 · model / baseline.
    Retention,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatioLine {
    pub kind: RatioKind,
    pub column: String,
    pub model: String,
    pub baseline: String,
    pub numerator: Labeled<Decimal>,
    pub denominator: Labeled<Decimal>,
    pub value: Labeled<f64>,
}

impl RatioLine {
    fn new(kind: RatioKind, column: &str, model: &str, baseline: &str, numerator: Labeled<Decimal>, denominator: Labeled<Decimal>) -> Option<Self> {
        if denominator.value.is_zero() {
            return None;
        }
        let q = numerator.value / denominator.value;
        let q = match kind {
            RatioKind::CostRatio => q,
            RatioKind::Retention => q * Decimal::ONE_HUNDRED,
        };
        Some(Self {
            kind,
            column: column.to_owned(),
            model: model.to_owned(),
            baseline: baseline.to_owned(),
            numerator,
            denominator,
            value: Labeled { value: q.to_f64()?, provenance: numerator.provenance.combine(denominator.provenance) },
        })
    }

    pub fn render(&self) -> String {
        match self.kind {
            RatioKind::CostRatio => format!(
                "{} {} / {}: {} [{}] / {} [{}] = {:.2}x [{}]",
                self.column,
                self.baseline,
                self.model,
                self.numerator.value,
                self.numerator.provenance,
                self.denominator.value,
                self.denominator.provenance,
                self.value.value,
                self.value.provenance
            ),
            RatioKind::Retention => format!(
                "{} {} vs {}: {} [{}] / {} [{}] = {:.2}% [{}]",
                self.column,
                self.model,
                self.baseline,
                self.numerator.value,
                self.numerator.provenance,
                self.denominator.value,
                self.denominator.provenance,
                self.value.value,
                self.value.provenance
            ),
        }
    }
}

/// A fixture table plus its ratio analysis against one baseline row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixtureReport {
    /// Label for every cell of `fixture`.
    pub values: Provenance,
    pub fixture: Fixture,
    pub baseline: String,
    pub ratios: Vec<RatioLine>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub computed_ratios: Vec<RatioLine>,
}

fn is_cost(column: &str) -> bool {
    column.contains("cost")
}

/// Cost columns compare baseline/model; every other numeric column compares model/baseline.
pub fn analyze(fixture: &Fixture, baseline: &str) -> Result<Vec<RatioLine>, FixtureError> {
    fixture.row(baseline)?;
    let mut out = Vec::new();
    for column in fixture.numeric_columns() {
        let base = Labeled::fixture(fixture.number(baseline, column)?);
        for model in fixture.models().filter(|m| *m != baseline) {
            let v = Labeled::fixture(fixture.number(model, column)?);
            let line = if is_cost(column) {
                RatioLine::new(RatioKind::CostRatio, column, model, baseline, base, v)
            } else {
                RatioLine::new(RatioKind::Retention, column, model, baseline, v, base)
            };
            out.extend(line);
        }
    }
    Ok(out)
}

/// Fixture baseline cost against each simulated arm's cost per lead.
pub fn analyze_computed(fixture: &Fixture, baseline: &str, computed: &AggregateReport) -> Result<Vec<RatioLine>, FixtureError> {
    let Some(column) = fixture.numeric_columns().into_iter().find(|c| is_cost(c)) else {
        return Ok(Vec::new());
    };
    let base = Labeled::fixture(fixture.number(baseline, column)?);
    let mut out = Vec::new();
    for (arm, outcome) in &computed.arms {
        let Some(cost) = outcome.cost_per_lead else { continue };
        let model = format!("arm {arm} ({})", outcome.backend_name);
        out.extend(RatioLine::new(RatioKind::CostRatio, column, &model, baseline, base, Labeled::computed(cost)));
    }
    Ok(out)
}

pub fn build_report(fixture: Fixture, baseline: Option<&str>, computed: Option<&AggregateReport>) -> Result<FixtureReport, FixtureError> {
    let baseline = match baseline {
        Some(b) => b.to_owned(),
        None => fixture.models().next().ok_or_else(|| FixtureError::Malformed("table has no rows".into()))?.to_owned(),
    };
    let ratios = analyze(&fixture, &baseline)?;
    let computed_ratios = match computed {
        Some(c) => analyze_computed(&fixture, &baseline, c)?,
        None => Vec::new(),
    };
    Ok(FixtureReport { values: Provenance::PaperFixture, fixture, baseline, ratios, computed_ratios })
}

pub fn render_report(r: &FixtureReport) -> String {
    let mut out = render_table(&r.fixture);
    out.push_str(&format!("\nAll table values: {}\n", r.values));
    out.push_str(&format!("\n## Ratios against {}\n\n", r.baseline));
    for line in &r.ratios {
        out.push_str(&line.render());
        out.push('\n');
    }
    if !r.computed_ratios.is_empty() {
        out.push_str("\n## Simulated cost per lead against the table baseline\n\n");
        for line in &r.computed_ratios {
            out.push_str(&line.render());
            out.push('\n');
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, clap::ValueEnum)]
pub enum ReportFormat {
    #[default]
    Text,
    Json,
}

pub fn cmd_report(fixtures: &Path, baseline: Option<&str>, computed: Option<&Path>, format: ReportFormat) -> Result<String, CliError> {
    let text = read_file(fixtures)?;
    let fixture = Fixture::from_json(&text).map_err(|e| CliError::config(format!("{}: {e}", fixtures.display())))?;
    let computed: Option<AggregateReport> = computed.map(parse_json).transpose()?;
    let report = build_report(fixture, baseline, computed.as_ref()).map_err(|e| CliError::config(e.to_string()))?;
    Ok(match format {
        ReportFormat::Text => render_report(&report),
        ReportFormat::Json => serde_json::to_string_pretty(&report).expect("report serializes") + "\n",
    })
}
