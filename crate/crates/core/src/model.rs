//! Domain values shared by every stage: source and response texts, selected
//! hypotheses, NLI labels, judgments, detection records and reports, and the
//! refined output of the post-editor.
//!
//! All offsets are counted in Unicode scalar values (`char`s), never bytes.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ModelError {
    #[error("source text `{0}` is empty")]
    EmptySource(String),
    #[error("final_judgment called with no records")]
    EmptyRecords,
    #[error("records mix hypothesis indices {0} and {1}")]
    MixedHypotheses(usize, usize),
    #[error("span {start}..{end} is out of bounds for text of {len} chars")]
    SpanOutOfBounds {
        start: usize,
        end: usize,
        len: usize,
    },
    #[error("entity surface `{surface}` does not match text `{found}` at its offsets")]
    SurfaceMismatch { surface: String, found: String },
}

/// Half-open character range `[start, end)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Span {
    pub start: usize,
    pub end: usize,
}

impl Span {
    pub fn new(start: usize, end: usize) -> Self {
        Self { start, end }
    }

    pub fn len(&self) -> usize {
        self.end.saturating_sub(self.start)
    }

    pub fn is_empty(&self) -> bool {
        self.end <= self.start
    }

    /// True when the two ranges share at least one character. Touching
    /// ranges (`a.end == b.start`) do not overlap.
    pub fn overlaps(&self, other: &Span) -> bool {
        self.start < other.end && other.start < self.end
    }
}

/// Number of chars in `text`.
pub fn char_len(text: &str) -> usize {
    text.chars().count()
}

/// Substring of `text` covering the char range `span`, or `None` when the
/// range does not fit.
pub fn char_slice(text: &str, span: Span) -> Option<&str> {
    if span.start > span.end {
        return None;
    }
    let mut boundaries = text
        .char_indices()
        .map(|(b, _)| b)
        .chain(std::iter::once(text.len()));
    let start = boundaries.nth(span.start)?;
    let end = if span.end == span.start {
        start
    } else {
        boundaries.nth(span.end - span.start - 1)?
    };
    Some(&text[start..end])
}

/// Converts a byte offset (on a char boundary) into a char offset.
pub(crate) fn byte_to_char(text: &str, byte: usize) -> usize {
    text[..byte].chars().count()
}

/// The premise every hypothesis is judged against.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SourceText {
    pub id: String,
    pub text: String,
}

impl SourceText {
    pub fn new(id: impl Into<String>, text: impl Into<String>) -> Result<Self, ModelError> {
        let id = id.into();
        let text = text.into();
        if text.trim().is_empty() {
            return Err(ModelError::EmptySource(id));
        }
        Ok(Self { id, text })
    }
}

/// A generated response together with its sentence segmentation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawResponse {
    pub id: String,
    pub text: String,
    pub sentences: Vec<Span>,
}

impl RawResponse {
    /// Segments `text` with `splitter`.
    pub fn new(
        id: impl Into<String>,
        text: impl Into<String>,
        splitter: &crate::selector::SentenceSplitter,
    ) -> Self {
        let text = text.into();
        let sentences = splitter.split(&text);
        Self {
            id: id.into(),
            text,
            sentences,
        }
    }

    pub fn sentence(&self, i: usize) -> Option<&str> {
        self.sentences
            .get(i)
            .and_then(|s| char_slice(&self.text, *s))
    }

    pub fn sentence_texts(&self) -> Vec<&str> {
        (0..self.sentences.len())
            .filter_map(|i| self.sentence(i))
            .collect()
    }
}

/// One response sentence considered for detection.
///
/// `index` is dense over the selected hypotheses (`0..n`). Purged sentences
/// are numbered after them (`n..`) in response order so that every sentence
/// has a stable key in [`DetectionReport::final_judgments`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Hypothesis {
    pub index: usize,
    /// Position of the originating sentence in the response.
    pub sentence: usize,
    pub response_span: Span,
    pub text: String,
    pub selected: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub skip_reason: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NliLabel {
    Entailment,
    Contradiction,
    Neutral,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Judgment {
    Hallucination,
    NonHallucination,
}

impl Judgment {
    pub fn is_hallucination(self) -> bool {
        self == Judgment::Hallucination
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Judgment::Hallucination => "hallucination",
            Judgment::NonHallucination => "non_hallucination",
        }
    }
}

impl fmt::Display for Judgment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Contradiction and neutral both mean the premise does not support the
/// hypothesis, so only entailment is grounded.
pub fn judgment_from_nli(label: NliLabel) -> Judgment {
    match label {
        NliLabel::Entailment => Judgment::NonHallucination,
        NliLabel::Contradiction | NliLabel::Neutral => Judgment::Hallucination,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DetectionLevel {
    Sentence,
    Entity,
}

/// A recognized entity mention inside a hypothesis.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct EntitySpan {
    pub category: String,
    pub surface: String,
    pub start: usize,
    pub end: usize,
}

impl EntitySpan {
    pub fn span(&self) -> Span {
        Span::new(self.start, self.end)
    }

    /// Checks the offsets against `text` and that they cover `surface`.
    pub fn validate(&self, text: &str) -> Result<(), ModelError> {
        let len = char_len(text);
        if self.start >= self.end || self.end > len {
            return Err(ModelError::SpanOutOfBounds {
                start: self.start,
                end: self.end,
                len,
            });
        }
        let found = char_slice(text, self.span()).unwrap_or_default();
        if found != self.surface {
            return Err(ModelError::SurfaceMismatch {
                surface: self.surface.clone(),
                found: found.to_string(),
            });
        }
        Ok(())
    }
}

/// A hypothesis rendered with exactly one entity wrapped as `[ surface ]`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaggedHypothesis {
    pub base: usize,
    pub entity: EntitySpan,
    pub rendered: String,
}

/// One `(hypothesis, reason, judgment)` triple.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DetectionRecord {
    pub hypothesis_index: usize,
    pub level: DetectionLevel,
    /// Hypothesis text as judged; the tagged rendering for entity records.
    pub hypothesis: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub entity: Option<EntitySpan>,
    /// `None` only for sentences that bypassed detection.
    pub reason: Option<String>,
    pub judgment: Judgment,
}

impl DetectionRecord {
    /// Record for a hypothesis that did not meet the selection requirements.
    pub fn bypassed(hyp: &Hypothesis) -> Self {
        Self {
            hypothesis_index: hyp.index,
            level: DetectionLevel::Sentence,
            hypothesis: hyp.text.clone(),
            entity: None,
            reason: None,
            judgment: Judgment::NonHallucination,
        }
    }

    /// Ordering key: hypothesis, then sentence before entity, then entity offsets.
    pub(crate) fn sort_key(&self) -> (usize, DetectionLevel, usize, usize) {
        let (s, e) = self
            .entity
            .as_ref()
            .map(|e| (e.start, e.end))
            .unwrap_or((0, 0));
        (self.hypothesis_index, self.level, s, e)
    }
}

/// Merges every judgment made for one hypothesis: it is grounded only when
/// all records vote so.
pub fn final_judgment(records: &[DetectionRecord]) -> Result<Judgment, ModelError> {
    let first = records.first().ok_or(ModelError::EmptyRecords)?;
    let mut out = Judgment::NonHallucination;
    for r in records {
        if r.hypothesis_index != first.hypothesis_index {
            return Err(ModelError::MixedHypotheses(
                first.hypothesis_index,
                r.hypothesis_index,
            ));
        }
        if r.judgment.is_hallucination() {
            out = Judgment::Hallucination;
        }
    }
    Ok(out)
}

/// Non-fatal events recorded while judging one (source, response) pair.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Diagnostic {
    /// The first completion could not be parsed; a fresh one was requested.
    ParseRetry {
        level: DetectionLevel,
        hypotheses: Vec<usize>,
        error: String,
    },
    /// Both attempts failed to parse; the hypotheses fell back to the
    /// conservative non-hallucination default.
    ParseFailure {
        level: DetectionLevel,
        hypotheses: Vec<usize>,
        error: String,
    },
}

/// Merged detection output for one (source, response) pair.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DetectionReport {
    pub source_id: String,
    pub response_id: String,
    /// Every sentence of the response, selected first.
    pub hypotheses: Vec<Hypothesis>,
    /// The merged set: sentence-level hallucination records, all entity-level
    /// records, and one null-reason record per bypassed sentence.
    pub records: Vec<DetectionRecord>,
    /// Every sentence-level judgment made, including non-hallucinations.
    pub sentence_records: Vec<DetectionRecord>,
    #[serde(rename = "final")]
    pub final_judgments: BTreeMap<usize, Judgment>,
    #[serde(default)]
    pub diagnostics: Vec<Diagnostic>,
}

impl DetectionReport {
    pub fn empty(source_id: impl Into<String>, response_id: impl Into<String>) -> Self {
        Self {
            source_id: source_id.into(),
            response_id: response_id.into(),
            hypotheses: Vec::new(),
            records: Vec::new(),
            sentence_records: Vec::new(),
            final_judgments: BTreeMap::new(),
            diagnostics: Vec::new(),
        }
    }

    pub fn has_hallucination(&self) -> bool {
        self.final_judgments.values().any(|j| j.is_hallucination())
    }

    /// Overall label for the response: hallucination if any sentence is.
    pub fn response_judgment(&self) -> Judgment {
        if self.has_hallucination() {
            Judgment::Hallucination
        } else {
            Judgment::NonHallucination
        }
    }

    pub fn hallucinated_indices(&self) -> Vec<usize> {
        self.final_judgments
            .iter()
            .filter(|(_, j)| j.is_hallucination())
            .map(|(i, _)| *i)
            .collect()
    }

    /// Reasons backing a hallucination verdict: the single sentence-level
    /// reason, or every entity-level reason that voted hallucination.
    pub fn reasons(&self, index: usize) -> Vec<&str> {
        self.records
            .iter()
            .filter(|r| r.hypothesis_index == index && r.judgment.is_hallucination())
            .filter_map(|r| r.reason.as_deref())
            .collect()
    }

    pub fn hypothesis(&self, index: usize) -> Option<&Hypothesis> {
        self.hypotheses.iter().find(|h| h.index == index)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EditAction {
    Kept,
    Rewritten,
    Removed,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Edit {
    pub index: usize,
    pub action: EditAction,
    pub new_text: Option<String>,
}

/// Post-edited response plus a ledger over the selected sentences.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RefinedResponse {
    pub text: String,
    pub edits: Vec<Edit>,
    pub all_removed: bool,
    /// Sentences judged grounded that the rewrite did not reproduce exactly.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub unexpected_changes: Vec<usize>,
}

/// Sampling parameters sent with every completion request.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenerationParams {
    pub temperature: f64,
    pub top_p: f64,
    pub max_tokens: u32,
    pub frequency_penalty: f64,
    pub presence_penalty: f64,
}

impl Default for GenerationParams {
    fn default() -> Self {
        Self {
            temperature: 0.0,
            top_p: 0.6,
            max_tokens: 4096,
            frequency_penalty: 0.0,
            presence_penalty: 0.0,
        }
    }
}

impl GenerationParams {
    /// Returns the name of the first invalid field.
    pub fn validate(&self) -> Result<(), (&'static str, String)> {
        if !(self.temperature >= 0.0) {
            return Err((
                "temperature",
                format!("must be >= 0, got {}", self.temperature),
            ));
        }
        if !(self.top_p > 0.0 && self.top_p <= 1.0) {
            return Err(("top_p", format!("must be in (0, 1], got {}", self.top_p)));
        }
        if self.max_tokens == 0 {
            return Err(("max_tokens", "must be > 0".to_string()));
        }
        Ok(())
    }
}
