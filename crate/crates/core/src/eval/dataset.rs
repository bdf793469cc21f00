//! JSONL benchmark loaders. Bad lines are collected, never dropped silently.

use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::model::Judgment;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledPair {
    pub id: String,
    pub source: String,
    pub response: String,
    pub label: Judgment,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredPair {
    pub id: String,
    pub score: f64,
    pub max_score: f64,
}

impl ScoredPair {
    pub fn label(&self) -> Result<Judgment, DataError> {
        binarize_consistency(self.score, self.max_score)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetFormat {
    HaluevalPair,
    FactccSentence,
    Scored,
}

impl FromStr for DatasetFormat {
    type Err = DataError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "halueval_pair" => Ok(Self::HaluevalPair),
            "factcc_sentence" => Ok(Self::FactccSentence),
            "scored" => Ok(Self::Scored),
            other => Err(DataError::UnknownFormat(other.to_string())),
        }
    }
}

impl fmt::Display for DatasetFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::HaluevalPair => "halueval_pair",
            Self::FactccSentence => "factcc_sentence",
            Self::Scored => "scored",
        })
    }
}

#[derive(Debug, Error)]
pub enum DataError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("unknown dataset format {0:?}")]
    UnknownFormat(String),
    #[error("score {score} exceeds maximum {max}")]
    ScoreAboveMax { score: f64, max: f64 },
    #[error("invalid score {0}")]
    InvalidScore(f64),
    #[error("score file header must be {{\"orientation\":\"consistency\",\"max\":<number>}}: {0}")]
    BadHeader(String),
}

/// One unusable input line (1-based).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LoadIssue {
    pub line: usize,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoadReport<T> {
    pub items: Vec<T>,
    pub errors: Vec<LoadIssue>,
}

impl<T> Default for LoadReport<T> {
    fn default() -> Self {
        Self {
            items: Vec::new(),
            errors: Vec::new(),
        }
    }
}

impl<T> LoadReport<T> {
    pub fn is_clean(&self) -> bool {
        self.errors.is_empty()
    }
}

/// Only a maximal consistency score counts as grounded.
pub fn binarize_consistency(score: f64, max_score: f64) -> Result<Judgment, DataError> {
    if !score.is_finite() || score < 0.0 {
        return Err(DataError::InvalidScore(score));
    }
    if !max_score.is_finite() || max_score <= 0.0 {
        return Err(DataError::InvalidScore(max_score));
    }
    if score > max_score {
        return Err(DataError::ScoreAboveMax {
            score,
            max: max_score,
        });
    }
    Ok(if score == max_score {
        Judgment::NonHallucination
    } else {
        Judgment::Hallucination
    })
}

fn read(path: &Path) -> Result<String, DataError> {
    fs::read_to_string(path).map_err(|source| DataError::Io {
        path: path.display().to_string(),
        source,
    })
}

fn nonblank_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty())
}

fn str_field<'a>(v: &'a Value, names: &[&str]) -> Result<&'a str, String> {
    names
        .iter()
        .find_map(|n| v.get(*n).and_then(Value::as_str))
        .ok_or_else(|| format!("missing string field {:?}", names[0]))
}

fn id_of(v: &Value, line: usize) -> String {
    match v.get("id") {
        Some(Value::String(s)) => s.clone(),
        Some(Value::Number(n)) => n.to_string(),
        _ => format!("line-{line}"),
    }
}

fn halueval_line(v: &Value, line: usize) -> Result<Vec<LabeledPair>, String> {
    let id = id_of(v, line);
    let source = str_field(v, &["source", "knowledge", "document"])?;
    let right = str_field(v, &["right_response", "right_answer", "right_summary"])?;
    let wrong = str_field(
        v,
        &[
            "hallucinated_response",
            "hallucinated_answer",
            "hallucinated_summary",
        ],
    )?;
    Ok(vec![
        LabeledPair {
            id: format!("{id}-right"),
            source: source.into(),
            response: right.into(),
            label: Judgment::NonHallucination,
        },
        LabeledPair {
            id: format!("{id}-hallucinated"),
            source: source.into(),
            response: wrong.into(),
            label: Judgment::Hallucination,
        },
    ])
}

fn factcc_line(v: &Value, line: usize) -> Result<LabeledPair, String> {
    let source = str_field(v, &["source", "text"])?;
    let claim = str_field(v, &["response", "claim"])?;
    let label = match str_field(v, &["label"])? {
        "CORRECT" | "correct" | "non_hallucination" => Judgment::NonHallucination,
        "INCORRECT" | "incorrect" | "hallucination" => Judgment::Hallucination,
        other => return Err(format!("unknown label {other:?}")),
    };
    Ok(LabeledPair {
        id: id_of(v, line),
        source: source.into(),
        response: claim.into(),
        label,
    })
}

/// Reads `{"orientation":"consistency","max":M}` and returns `M`.
pub fn parse_score_header(v: &Value) -> Result<f64, DataError> {
    let orientation = v.get("orientation").and_then(Value::as_str);
    let max = v.get("max").and_then(Value::as_f64);
    match (orientation, max) {
        (Some("consistency"), Some(m)) if m > 0.0 && m.is_finite() => Ok(m),
        _ => Err(DataError::BadHeader(v.to_string())),
    }
}

fn is_header(v: &Value) -> bool {
    v.get("orientation").is_some()
}

fn scored_line(v: &Value, line: usize, header_max: Option<f64>) -> Result<LabeledPair, String> {
    let source = str_field(v, &["source"])?;
    let response = str_field(v, &["response"])?;
    let score = v
        .get("score")
        .and_then(Value::as_f64)
        .ok_or("missing numeric field \"score\"")?;
    let max = v
        .get("max_score")
        .and_then(Value::as_f64)
        .or(header_max)
        .ok_or("no \"max_score\" and no header")?;
    let label = binarize_consistency(score, max).map_err(|e| e.to_string())?;
    Ok(LabeledPair {
        id: id_of(v, line),
        source: source.into(),
        response: response.into(),
        label,
    })
}

pub fn parse_dataset(text: &str, format: DatasetFormat) -> LoadReport<LabeledPair> {
    let mut report = LoadReport::default();
    let mut header_max = None;
    for (line, raw) in nonblank_lines(text) {
        let v: Value = match serde_json::from_str(raw) {
            Ok(v) => v,
            Err(e) => {
                report.errors.push(LoadIssue {
                    line,
                    message: format!("invalid JSON: {e}"),
                });
                continue;
            }
        };
        let parsed = match format {
            DatasetFormat::HaluevalPair => halueval_line(&v, line),
            DatasetFormat::FactccSentence => factcc_line(&v, line).map(|p| vec![p]),
            DatasetFormat::Scored if is_header(&v) => match parse_score_header(&v) {
                Ok(m) => {
                    header_max = Some(m);
                    Ok(Vec::new())
                }
                Err(e) => Err(e.to_string()),
            },
            DatasetFormat::Scored => scored_line(&v, line, header_max).map(|p| vec![p]),
        };
        match parsed {
            Ok(pairs) => report.items.extend(pairs),
            Err(message) => report.errors.push(LoadIssue { line, message }),
        }
    }
    report
}

pub fn load_dataset(
    path: impl AsRef<Path>,
    format: DatasetFormat,
) -> Result<LoadReport<LabeledPair>, DataError> {
    Ok(parse_dataset(&read(path.as_ref())?, format))
}

/// Score file: a header line, then `{"id","score"}` lines. Scores are
/// returned as given; divide by `max` for the sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreFile {
    pub max: f64,
    pub scores: LoadReport<ScoredPair>,
}

pub fn parse_scores(text: &str) -> Result<ScoreFile, DataError> {
    let mut lines = nonblank_lines(text);
    let (_, first) = lines
        .next()
        .ok_or_else(|| DataError::BadHeader("empty file".into()))?;
    let header: Value =
        serde_json::from_str(first).map_err(|e| DataError::BadHeader(e.to_string()))?;
    let max = parse_score_header(&header)?;
    let mut scores = LoadReport::default();
    for (line, raw) in lines {
        let parsed = serde_json::from_str::<Value>(raw)
            .map_err(|e| format!("invalid JSON: {e}"))
            .and_then(|v| {
                let score = v
                    .get("score")
                    .and_then(Value::as_f64)
                    .ok_or("missing numeric field \"score\"")?;
                if !(0.0..=max).contains(&score) {
                    return Err(format!("score {score} outside [0, {max}]"));
                }
                Ok(ScoredPair {
                    id: id_of(&v, line),
                    score,
                    max_score: max,
                })
            });
        match parsed {
            Ok(p) => scores.items.push(p),
            Err(message) => scores.errors.push(LoadIssue { line, message }),
        }
    }
    Ok(ScoreFile { max, scores })
}

pub fn load_scores(path: impl AsRef<Path>) -> Result<ScoreFile, DataError> {
    parse_scores(&read(path.as_ref())?)
}

/// Gold labels: `{"id","label"}` with `label` a judgment string.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GoldLabel {
    pub id: String,
    pub label: Judgment,
}

pub fn parse_gold(text: &str) -> LoadReport<GoldLabel> {
    let mut report = LoadReport::default();
    for (line, raw) in nonblank_lines(text) {
        match serde_json::from_str::<GoldLabel>(raw) {
            Ok(g) => report.items.push(g),
            Err(e) => report.errors.push(LoadIssue {
                line,
                message: e.to_string(),
            }),
        }
    }
    report
}

pub fn load_gold(path: impl AsRef<Path>) -> Result<LoadReport<GoldLabel>, DataError> {
    Ok(parse_gold(&read(path.as_ref())?))
}
