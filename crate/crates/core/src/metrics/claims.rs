//! Claim extraction and factual accuracy.
//!
//! The built-in extractor is rule based: numbers, dates and capitalized
//! multi-word spans are claims. A claim is supported when its folded tokens
//! appear contiguously in a source, contradicted when a source puts a
//! different number right after the same anchor word, and unverifiable
//! otherwise.

use serde::{Deserialize, Serialize};

use crate::domain::SourceDocument;
use crate::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClaimLabel {
    Supported,
    Contradicted,
    Unverifiable,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClaimVerdict {
    pub claim: String,
    pub label: ClaimLabel,
    /// URL of the source that decided the verdict.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_ref: Option<String>,
}

/// Accuracy percentage, or not applicable when no claim was verifiable.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum FactualAccuracy<T> {
    Score(T),
    NotApplicable,
}

impl<T: Copy> FactualAccuracy<T> {
    pub fn score(&self) -> Option<T> {
        match self {
            FactualAccuracy::Score(s) => Some(*s),
            FactualAccuracy::NotApplicable => None,
        }
    }
}

/// `100 * supported / (supported + contradicted)`; unverifiable claims are excluded.
pub fn factual_accuracy<T: Scalar>(claims: &[ClaimVerdict]) -> FactualAccuracy<T> {
    let supported = claims.iter().filter(|c| c.label == ClaimLabel::Supported).count() as u64;
    let contradicted = claims.iter().filter(|c| c.label == ClaimLabel::Contradicted).count() as u64;
    let verifiable = supported + contradicted;
    if verifiable == 0 {
        return FactualAccuracy::NotApplicable;
    }
    FactualAccuracy::Score(T::lit(100.0) * T::from_count(supported) / T::from_count(verifiable))
}

pub trait ClaimExtractor {
    fn extract(&self, output: &str, sources: &[SourceDocument]) -> Vec<ClaimVerdict>;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct RuleBasedExtractor;

pub fn extract_claims(output: &str, sources: &[SourceDocument]) -> Vec<ClaimVerdict> {
    RuleBasedExtractor.extract(output, sources)
}

const MONTHS: [&str; 21] = [
    "january", "february", "march", "april", "may", "june", "july", "august", "september", "october",
    "november", "december", "jan", "feb", "mar", "apr", "jun", "jul", "aug", "sep", "sept",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum ClaimKind {
    Numeric,
    Entity,
}

struct Word<'a> {
    raw: &'a str,
    folded: String,
    capitalized: bool,
    ends_sentence: bool,
}

impl Word<'_> {
    fn has_digit(&self) -> bool {
        self.folded.chars().any(|c| c.is_ascii_digit())
    }

    fn is_month(&self) -> bool {
        self.capitalized && MONTHS.contains(&self.folded.as_str())
    }
}

struct Claim {
    kind: ClaimKind,
    text: String,
    folded: Vec<String>,
    anchor: Option<String>,
}

/// Lowercase alphanumerics; a dot survives only between two digits.
fn fold(word: &str) -> String {
    let chars: Vec<char> = word.chars().collect();
    let mut out = String::with_capacity(word.len());
    for (i, &c) in chars.iter().enumerate() {
        if c.is_alphanumeric() {
            out.extend(c.to_lowercase());
        } else if c == '.'
            && i > 0
            && chars[i - 1].is_ascii_digit()
            && chars.get(i + 1).is_some_and(|n| n.is_ascii_digit())
        {
            out.push('.');
        }
    }
    out
}

fn words(text: &str) -> Vec<Word<'_>> {
    text.split_whitespace()
        .map(|raw| {
            let folded = fold(raw);
            let capitalized = raw.chars().find(|c| c.is_alphanumeric()).is_some_and(char::is_uppercase);
            let ends_sentence = raw.trim_end_matches(['"', '\'', ')']).ends_with(['.', '!', '?']);
            Word { raw, folded, capitalized, ends_sentence }
        })
        .filter(|w| !w.folded.is_empty())
        .collect()
}

fn folded_tokens(text: &str) -> Vec<String> {
    text.split_whitespace().map(fold).filter(|t| !t.is_empty()).collect()
}

fn claim_text(ws: &[Word<'_>]) -> String {
    let joined = ws.iter().map(|w| w.raw).collect::<Vec<_>>().join(" ");
    joined
        .trim_start_matches(['(', '"', '\''])
        .trim_end_matches(['.', ',', ';', ':', '!', '?', ')', '"', '\''])
        .to_owned()
}

fn find_claims(output: &str) -> Vec<Claim> {
    let ws = words(output);
    let anchor_before = |start: usize| {
        ws[..start].iter().rev().find(|w| !w.has_digit()).map(|w| w.folded.clone())
    };
    let mut claims = Vec::new();
    let mut i = 0;
    while i < ws.len() {
        let w = &ws[i];
        if w.is_month() && ws.get(i + 1).is_some_and(Word::has_digit) {
            let mut end = i + 2;
            if !ws[i + 1].ends_sentence && ws.get(end).is_some_and(Word::has_digit) {
                end += 1;
            }
            let span = &ws[i..end];
            claims.push(Claim {
                kind: ClaimKind::Numeric,
                text: claim_text(span),
                folded: span.iter().map(|w| w.folded.clone()).collect(),
                anchor: anchor_before(i),
            });
            i = end;
        } else if w.has_digit() {
            claims.push(Claim {
                kind: ClaimKind::Numeric,
                text: claim_text(&ws[i..=i]),
                folded: vec![w.folded.clone()],
                anchor: anchor_before(i),
            });
            i += 1;
        } else if w.capitalized && !w.is_month() {
            let mut end = i + 1;
            let mut closed = w.ends_sentence;
            while !closed && end < ws.len() && ws[end].capitalized && !ws[end].has_digit() && !ws[end].is_month() {
                closed = ws[end].ends_sentence;
                end += 1;
            }
            if end - i >= 2 {
                let span = &ws[i..end];
                claims.push(Claim {
                    kind: ClaimKind::Entity,
                    text: claim_text(span),
                    folded: span.iter().map(|w| w.folded.clone()).collect(),
                    anchor: None,
                });
            }
            i = end;
        } else {
            i += 1;
        }
    }
    claims
}

fn contains_run(haystack: &[String], needle: &[String]) -> bool {
    !needle.is_empty() && haystack.windows(needle.len()).any(|w| w == needle)
}

fn contradicts(source: &[String], claim: &Claim) -> bool {
    let Some(anchor) = &claim.anchor else { return false };
    let n = claim.folded.len();
    source.iter().enumerate().any(|(p, tok)| {
        if tok != anchor {
            return false;
        }
        match source.get(p + 1..p + 1 + n) {
            Some(next) => next != claim.folded.as_slice() && next.iter().any(|t| t.chars().any(|c| c.is_ascii_digit())),
            None => false,
        }
    })
}

impl ClaimExtractor for RuleBasedExtractor {
    fn extract(&self, output: &str, sources: &[SourceDocument]) -> Vec<ClaimVerdict> {
        let folded_sources: Vec<(String, Vec<String>)> =
            sources.iter().map(|s| (s.url.to_string(), folded_tokens(&s.text))).collect();

        find_claims(output)
            .into_iter()
            .map(|claim| {
                if let Some((url, _)) = folded_sources.iter().find(|(_, toks)| contains_run(toks, &claim.folded)) {
                    return ClaimVerdict { claim: claim.text, label: ClaimLabel::Supported, source_ref: Some(url.clone()) };
                }
                if claim.kind == ClaimKind::Numeric {
                    if let Some((url, _)) = folded_sources.iter().find(|(_, toks)| contradicts(toks, &claim)) {
                        return ClaimVerdict {
                            claim: claim.text,
                            label: ClaimLabel::Contradicted,
                            source_ref: Some(url.clone()),
                        };
                    }
                }
                ClaimVerdict { claim: claim.text, label: ClaimLabel::Unverifiable, source_ref: None }
            })
            .collect()
    }
}
