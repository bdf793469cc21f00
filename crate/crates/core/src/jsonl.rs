//! Line formats read and written by the command-line tool.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::eval::{LoadIssue, LoadReport};
use crate::model::{
    DetectionRecord, DetectionReport, Diagnostic, Edit, Hypothesis, Judgment, RefinedResponse,
};

/// `{"id","source","response"}`
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputRecord {
    pub id: String,
    pub source: String,
    pub response: String,
}

/// One detection report per line.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReportLine {
    pub id: String,
    #[serde(rename = "final")]
    pub final_judgments: BTreeMap<usize, Judgment>,
    pub records: Vec<DetectionRecord>,
    #[serde(default)]
    pub diagnostics: Vec<Diagnostic>,
    #[serde(default)]
    pub hypotheses: Vec<Hypothesis>,
    #[serde(default)]
    pub sentence_records: Vec<DetectionRecord>,
}

impl ReportLine {
    pub fn from_report(id: &str, report: &DetectionReport) -> Self {
        Self {
            id: id.to_string(),
            final_judgments: report.final_judgments.clone(),
            records: report.records.clone(),
            diagnostics: report.diagnostics.clone(),
            hypotheses: report.hypotheses.clone(),
            sentence_records: report.sentence_records.clone(),
        }
    }

    pub fn into_report(self) -> DetectionReport {
        DetectionReport {
            source_id: self.id.clone(),
            response_id: self.id,
            hypotheses: self.hypotheses,
            records: self.records,
            sentence_records: self.sentence_records,
            final_judgments: self.final_judgments,
            diagnostics: self.diagnostics,
        }
    }
}

/// `{"id","refined","edits","all_removed"}`
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RefinedLine {
    pub id: String,
    pub refined: String,
    pub edits: Vec<Edit>,
    pub all_removed: bool,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub unexpected_changes: Vec<usize>,
}

impl RefinedLine {
    pub fn new(id: &str, r: RefinedResponse) -> Self {
        Self {
            id: id.to_string(),
            refined: r.text,
            edits: r.edits,
            all_removed: r.all_removed,
            unexpected_changes: r.unexpected_changes,
        }
    }
}

/// `{"id","reference"}`
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReferenceLine {
    pub id: String,
    pub reference: String,
}

/// Parses every non-blank line, collecting failures by line number.
pub fn parse_lines<T: DeserializeOwned>(text: &str) -> LoadReport<T> {
    let mut out = LoadReport::default();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str(line) {
            Ok(v) => out.items.push(v),
            Err(e) => out.errors.push(LoadIssue {
                line: i + 1,
                message: e.to_string(),
            }),
        }
    }
    out
}

pub fn read_lines<T: DeserializeOwned>(path: impl AsRef<Path>) -> io::Result<LoadReport<T>> {
    Ok(parse_lines(&std::fs::read_to_string(path)?))
}

/// Writes one JSON value per line, flushing after each.
pub struct LineWriter {
    out: BufWriter<File>,
}

impl LineWriter {
    pub fn create(path: impl AsRef<Path>) -> io::Result<Self> {
        Ok(Self {
            out: BufWriter::new(File::create(path)?),
        })
    }

    pub fn write<T: Serialize>(&mut self, value: &T) -> io::Result<()> {
        serde_json::to_writer(&mut self.out, value)?;
        self.out.write_all(b"\n")?;
        self.out.flush()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn report_line_round_trip() {
        let mut report = DetectionReport::empty("a", "a");
        report.final_judgments.insert(0, Judgment::Hallucination);
        report.final_judgments.insert(1, Judgment::NonHallucination);
        let line = ReportLine::from_report("a", &report);
        let json = serde_json::to_string(&line).unwrap();
        assert!(json.starts_with(
            r#"{"id":"a","final":{"0":"hallucination","1":"non_hallucination"},"records":[]"#
        ));
        let back: ReportLine = serde_json::from_str(&json).unwrap();
        assert_eq!(back.into_report(), report);
    }

    #[test]
    fn bad_lines_are_reported() {
        let r: LoadReport<InputRecord> =
            parse_lines("{\"id\":\"1\",\"source\":\"s\",\"response\":\"r\"}\n\n{\"id\":\"2\",\"response\":\"r\"}\n");
        assert_eq!(r.items.len(), 1);
        assert_eq!(r.errors[0].line, 3);
    }

    #[test]
    fn writer_appends_lines() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("o.jsonl");
        let mut w = LineWriter::create(&p).unwrap();
        w.write(&ReferenceLine {
            id: "x".into(),
            reference: "y".into(),
        })
        .unwrap();
        w.write(&ReferenceLine {
            id: "z".into(),
            reference: "w".into(),
        })
        .unwrap();
        let back: LoadReport<ReferenceLine> = read_lines(&p).unwrap();
        assert_eq!(back.items.len(), 2);
    }
}
