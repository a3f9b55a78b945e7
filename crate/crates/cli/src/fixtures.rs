//! Published result tables shipped as data, kept as the exact strings printed.

use std::collections::{BTreeMap, BTreeSet};
use std::str::FromStr;

use rust_decimal::Decimal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const TABLE1: &str = include_str!("../data/table1.json");
pub const TABLE2: &str = include_str!("../data/table2.json");
pub const TABLE3: &str = include_str!("../data/table3.json");

#[derive(Debug, Error, PartialEq)]
pub enum FixtureError {
    #[error("malformed fixture: {0}")]
    Malformed(String),
    #[error("no row for model {0:?}")]
    UnknownModel(String),
    #[error("no column {0:?}")]
    UnknownColumn(String),
    #[error("cell {model}/{column} is not numeric: {value:?}")]
    NotNumeric { model: String, column: String, value: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FixtureRow {
    pub group: String,
    #[serde(flatten)]
    pub cells: BTreeMap<String, String>,
}

/// One table: ordered columns (the first names the model) and grouped rows.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fixture {
    pub table: String,
    pub title: String,
    pub columns: Vec<String>,
    pub rows: Vec<FixtureRow>,
}

fn clean(what: &str, s: &str) -> Result<(), FixtureError> {
    if s.contains('|') || s.contains('\n') || s.contains('\r') || s.trim() != s {
        return Err(FixtureError::Malformed(format!("{what} {s:?} has a pipe, line break or surrounding space")));
    }
    Ok(())
}

impl Fixture {
    pub fn from_json(s: &str) -> Result<Self, FixtureError> {
        let f: Fixture = serde_json::from_str(s).map_err(|e| FixtureError::Malformed(e.to_string()))?;
        f.validate()?;
        Ok(f)
    }

    pub fn bundled(name: &str) -> Option<Self> {
        let text = match name {
            "table1" => TABLE1,
            "table2" => TABLE2,
            "table3" => TABLE3,
            _ => return None,
        };
        Some(Self::from_json(text).expect("bundled fixture is valid"))
    }

    pub fn validate(&self) -> Result<(), FixtureError> {
        if self.table.is_empty() || self.table.contains(':') || self.table.contains(char::is_whitespace) {
            return Err(FixtureError::Malformed(format!("table name {:?}", self.table)));
        }
        clean("title", &self.title)?;
        if self.columns.first().map(String::as_str) != Some("model") {
            return Err(FixtureError::Malformed("first column must be model".into()));
        }
        if self.columns.iter().any(|c| c == "group") {
            return Err(FixtureError::Malformed("group is reserved".into()));
        }
        let wanted: BTreeSet<&str> = self.columns.iter().map(String::as_str).collect();
        if wanted.len() != self.columns.len() {
            return Err(FixtureError::Malformed("duplicate column".into()));
        }
        for c in &self.columns {
            if c.is_empty() {
                return Err(FixtureError::Malformed("empty column name".into()));
            }
            clean("column", c)?;
        }
        let mut models = BTreeSet::new();
        for row in &self.rows {
            if row.group.is_empty() {
                return Err(FixtureError::Malformed("empty group".into()));
            }
            clean("group", &row.group)?;
            let have: BTreeSet<&str> = row.cells.keys().map(String::as_str).collect();
            if have != wanted {
                return Err(FixtureError::Malformed(format!("row columns {have:?} differ from {wanted:?}")));
            }
            for v in row.cells.values() {
                clean("cell", v)?;
            }
            let model = &row.cells["model"];
            if model.is_empty() || model.starts_with("**") {
                return Err(FixtureError::Malformed(format!("model name {model:?}")));
            }
            if !models.insert(model.as_str()) {
                return Err(FixtureError::Malformed(format!("model {model:?} listed twice")));
            }
        }
        Ok(())
    }

    pub fn row(&self, model: &str) -> Result<&FixtureRow, FixtureError> {
        self.rows.iter().find(|r| r.cells["model"] == model).ok_or_else(|| FixtureError::UnknownModel(model.into()))
    }

    /// The cell exactly as printed.
    pub fn value(&self, model: &str, column: &str) -> Result<&str, FixtureError> {
        let row = self.row(model)?;
        row.cells.get(column).map(String::as_str).ok_or_else(|| FixtureError::UnknownColumn(column.into()))
    }

    /// The cell as a decimal, ignoring a leading currency sign.
    pub fn number(&self, model: &str, column: &str) -> Result<Decimal, FixtureError> {
        let raw = self.value(model, column)?;
        parse_number(raw).ok_or_else(|| FixtureError::NotNumeric { model: model.into(), column: column.into(), value: raw.into() })
    }

    /// Columns whose every cell is numeric.
    pub fn numeric_columns(&self) -> Vec<&str> {
        self.columns
            .iter()
            .skip(1)
            .filter(|c| !self.rows.is_empty() && self.rows.iter().all(|r| parse_number(&r.cells[*c]).is_some()))
            .map(String::as_str)
            .collect()
    }

    pub fn models(&self) -> impl Iterator<Item = &str> {
        self.rows.iter().map(|r| r.cells["model"].as_str())
    }
}

pub fn parse_number(raw: &str) -> Option<Decimal> {
    Decimal::from_str(raw.strip_prefix('$').unwrap_or(raw)).ok()
}

/// Renders a fixture as a pipe table with group header rows.
pub fn render_table(f: &Fixture) -> String {
    let mut lines: Vec<Vec<String>> = Vec::new();
    let mut group: Option<&str> = None;
    for row in &f.rows {
        if group != Some(row.group.as_str()) {
            let mut header = vec![format!("**{}**", row.group)];
            header.resize(f.columns.len(), String::new());
            lines.push(header);
            group = Some(&row.group);
        }
        lines.push(f.columns.iter().map(|c| row.cells[c].clone()).collect());
    }
    let mut widths: Vec<usize> = f.columns.iter().map(|c| c.chars().count().max(3)).collect();
    for l in &lines {
        for (w, cell) in widths.iter_mut().zip(l) {
            *w = (*w).max(cell.chars().count());
        }
    }
    let fmt_line = |cells: &[String]| {
        let padded: Vec<String> = cells.iter().zip(&widths).map(|(c, w)| format!("{c:<w$}")).collect();
        format!("| {} |", padded.join(" | "))
    };

    let mut out = format!("# {}: {}\n\n", f.table, f.title);
    out.push_str(&fmt_line(&f.columns));
    out.push('\n');
    let rule: Vec<String> = widths.iter().map(|w| "-".repeat(*w)).collect();
    out.push_str(&format!("|-{}-|\n", rule.join("-|-")));
    for l in &lines {
        out.push_str(&fmt_line(l));
        out.push('\n');
    }
    out
}

/// Inverse of [`render_table`]; anything after the table body is ignored.
pub fn parse_table(text: &str) -> Result<Fixture, FixtureError> {
    let bad = |m: &str| FixtureError::Malformed(m.to_owned());
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let heading = lines.next().ok_or_else(|| bad("empty table"))?;
    let (table, title) = heading.strip_prefix("# ").and_then(|h| h.split_once(": ")).ok_or_else(|| bad("missing heading"))?;
    let split = |l: &str| -> Result<Vec<String>, FixtureError> {
        let inner = l.trim().strip_prefix('|').and_then(|l| l.strip_suffix('|')).ok_or_else(|| bad("row is not pipe delimited"))?;
        Ok(inner.split('|').map(|c| c.trim().to_owned()).collect())
    };
    let columns = split(lines.next().ok_or_else(|| bad("missing header"))?)?;
    lines.next().ok_or_else(|| bad("missing rule"))?;

    let mut rows = Vec::new();
    let mut group: Option<String> = None;
    for l in lines.take_while(|l| l.trim_start().starts_with('|')) {
        let cells = split(l)?;
        if cells.len() != columns.len() {
            return Err(bad("row width differs from header"));
        }
        let first = &cells[0];
        if first.len() > 4 && first.starts_with("**") && first.ends_with("**") && cells[1..].iter().all(String::is_empty) {
            group = Some(first[2..first.len() - 2].to_owned());
            continue;
        }
        let group = group.clone().ok_or_else(|| bad("row before any group"))?;
        rows.push(FixtureRow { group, cells: columns.iter().cloned().zip(cells).collect() });
    }
    let f = Fixture { table: table.to_owned(), title: title.to_owned(), columns, rows };
    f.validate()?;
    Ok(f)
}
