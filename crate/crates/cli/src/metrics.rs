//! `metrics` subcommands: read inputs from files, emit one JSON result object.

use std::path::{Path, PathBuf};

use minilab_core::domain::SourceDocument;
use minilab_core::metrics::{bert_score, bert_score_rescaled, extract_claims, factual_accuracy, rouge_l_text, ClaimVerdict, EmbeddedSeq, FactualAccuracy};
use minilab_core::stats::{
    cohen_kappa, completeness_score, item_relevance, krippendorff_alpha, pearson_r, ChecklistSpec, DistanceMetric, RatingRecord,
};
use minilab_core::Timestamp;
use serde::{Deserialize, Serialize};

use crate::error::{parse_json, read_file, CliError};
use crate::report::Provenance;

/// Envelope for every metric result.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricOutput<T> {
    pub metric: String,
    pub provenance: Provenance,
    pub result: T,
}

impl<T: Serialize> MetricOutput<T> {
    fn new(metric: &str, result: T) -> Self {
        Self { metric: metric.to_owned(), provenance: Provenance::Computed, result }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("metric output serializes") + "\n"
    }
}

/// One token of an embedding fixture file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingRecord {
    pub token: String,
    #[serde(default = "one")]
    pub idf: f64,
    pub vector: Vec<f64>,
}

fn one() -> f64 {
    1.0
}

pub fn load_embeddings(path: &Path) -> Result<EmbeddedSeq<f64>, CliError> {
    let records: Vec<EmbeddingRecord> = parse_json(path)?;
    let (mut tokens, mut vectors, mut idf) = (Vec::new(), Vec::new(), Vec::new());
    for r in records {
        tokens.push(r.token);
        vectors.push(r.vector);
        idf.push(r.idf);
    }
    EmbeddedSeq::new(tokens, vectors, idf).map_err(|e| CliError::config(format!("{}: {} {e}", path.display(), e.code())))
}

fn csv_reader(path: &Path) -> Result<csv::Reader<std::fs::File>, CliError> {
    csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_path(path)
        .map_err(|e| CliError::config(format!("cannot read {}: {e}", path.display())))
}

/// `item_id,rater_id,rating` per line.
pub fn load_ratings(path: &Path) -> Result<Vec<RatingRecord>, CliError> {
    let mut out = Vec::new();
    for (line, row) in csv_reader(path)?.deserialize::<(String, String, i64)>().enumerate() {
        let (item, rater, rating) = row.map_err(|e| CliError::config(format!("{} line {}: {e}", path.display(), line + 1)))?;
        let rating = u8::try_from(rating).unwrap_or(0);
        out.push(RatingRecord::new(item, rater, rating).map_err(|e| CliError::config(format!("{} line {}: {e}", path.display(), line + 1)))?);
    }
    Ok(out)
}

/// `x,y` per line.
pub fn load_pairs(path: &Path) -> Result<(Vec<f64>, Vec<f64>), CliError> {
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for (line, row) in csv_reader(path)?.deserialize::<(f64, f64)>().enumerate() {
        let (x, y) = row.map_err(|e| CliError::config(format!("{} line {}: {e}", path.display(), line + 1)))?;
        xs.push(x);
        ys.push(y);
    }
    Ok((xs, ys))
}

fn runtime(code: &str, e: impl std::fmt::Display) -> CliError {
    CliError::runtime(format!("{code}: {e}"))
}

pub fn rouge(candidate: &Path, reference: &Path, beta: f64) -> Result<String, CliError> {
    let c = read_file(candidate)?;
    let r = read_file(reference)?;
    let res = rouge_l_text(&c, &r, beta).map_err(|e| runtime(e.code(), &e))?;
    Ok(MetricOutput::new("rouge_l", res).to_json())
}

pub fn bertscore(candidate: &Path, reference: &Path, baseline: Option<f64>) -> Result<String, CliError> {
    let c = load_embeddings(candidate)?;
    let r = load_embeddings(reference)?;
    let res = match baseline {
        Some(b) => bert_score_rescaled(&c, &r, b),
        None => bert_score(&c, &r),
    }
    .map_err(|e| runtime(e.code(), &e))?;
    Ok(MetricOutput::new("bert_score", res).to_json())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactualReport {
    pub claims: Vec<ClaimVerdict>,
    pub accuracy: FactualAccuracy<f64>,
}

pub fn factual(output: &Path, sources: &[PathBuf]) -> Result<String, CliError> {
    let text = read_file(output)?;
    let mut docs = Vec::new();
    for p in sources {
        let body = read_file(p)?;
        let abs = std::path::absolute(p).map_err(|e| CliError::config(format!("{}: {e}", p.display())))?;
        let url = url_for(&abs).ok_or_else(|| CliError::config(format!("{}: not a valid file path", p.display())))?;
        docs.push(SourceDocument { url, fetched_at: Timestamp::EPOCH, text: body });
    }
    let claims = extract_claims(&text, &docs);
    let accuracy = factual_accuracy(&claims);
    Ok(MetricOutput::new("factual_accuracy", FactualReport { claims, accuracy }).to_json())
}

fn url_for(path: &Path) -> Option<url::Url> {
    url::Url::from_file_path(path).ok()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum AlphaMetric {
    Nominal,
    Interval,
}

impl From<AlphaMetric> for DistanceMetric {
    fn from(m: AlphaMetric) -> Self {
        match m {
            AlphaMetric::Nominal => DistanceMetric::Nominal,
            AlphaMetric::Interval => DistanceMetric::Interval,
        }
    }
}

pub fn kappa(matrix: &Path) -> Result<String, CliError> {
    let m: Vec<Vec<u64>> = parse_json(matrix)?;
    let res = cohen_kappa::<f64>(&m).map_err(|e| runtime(e.code(), &e))?;
    Ok(MetricOutput::new("cohen_kappa", res).to_json())
}

pub fn alpha(ratings: &Path, metric: AlphaMetric) -> Result<String, CliError> {
    let records = load_ratings(ratings)?;
    let res = krippendorff_alpha::<f64>(&records, metric.into()).map_err(|e| runtime(e.code(), &e))?;
    Ok(MetricOutput::new("krippendorff_alpha", res).to_json())
}

pub fn pearson(pairs: &Path) -> Result<String, CliError> {
    let (x, y) = load_pairs(pairs)?;
    let res = pearson_r::<f64>(&x, &y).map_err(|e| runtime(e.code(), &e))?;
    Ok(MetricOutput::new("pearson_r", res).to_json())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItemRelevance {
    pub item_id: String,
    pub raters: usize,
    pub relevance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelevanceReport {
    pub items: Vec<ItemRelevance>,
    pub mean: f64,
}

pub fn relevance(ratings: &Path) -> Result<String, CliError> {
    let records = load_ratings(ratings)?;
    let mut by_item: std::collections::BTreeMap<&str, Vec<RatingRecord>> = Default::default();
    for r in &records {
        by_item.entry(r.item_id.as_str()).or_default().push(r.clone());
    }
    if by_item.is_empty() {
        return Err(runtime("EMPTY", "no ratings"));
    }
    let mut items = Vec::new();
    for (item, rs) in &by_item {
        let relevance = item_relevance::<f64>(rs).map_err(|e| runtime(e.code(), &e))?;
        items.push(ItemRelevance { item_id: (*item).to_owned(), raters: rs.len(), relevance });
    }
    let mean = items.iter().map(|i| i.relevance).sum::<f64>() / items.len() as f64;
    Ok(MetricOutput::new("item_relevance", RelevanceReport { items, mean }).to_json())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletenessReport {
    pub present: Vec<String>,
    pub score: f64,
}

pub fn completeness(present: &[String], checklist: Option<&Path>) -> Result<String, CliError> {
    let spec = match checklist {
        Some(p) => {
            let spec: ChecklistSpec = parse_json(p)?;
            ChecklistSpec::new(spec.components).map_err(|e| CliError::config(format!("{}: {e}", p.display())))?
        }
        None => ChecklistSpec::default(),
    };
    let score = completeness_score::<f64, _>(present, &spec).map_err(|e| runtime(e.code(), &e))?;
    Ok(MetricOutput::new("completeness", CompletenessReport { present: present.to_vec(), score }).to_json())
}
