//! Deterministic rule-and-gazetteer recognizer.
//!
//! Numbers, currencies, durations and date ranges come from fixed patterns;
//! every other category comes from gazetteer files (`<Category>.txt`, one
//! surface form per line).

use std::collections::BTreeMap;
use std::fs;
use std::io;
use std::path::Path;
use std::sync::LazyLock;

use regex::Regex;

use super::{resolve_overlaps, EntityCategorySet, NerError, NerProvider};
use crate::model::{byte_to_char, EntitySpan};

const MONTH: &str = r"(?:January|February|March|April|May|June|July|August|September|October|November|December|Jan|Feb|Mar|Apr|Jun|Jul|Aug|Sep|Sept|Oct|Nov|Dec)";

static RULES: LazyLock<Vec<(&'static str, Regex)>> = LazyLock::new(|| {
    let date = format!(r"(?:{MONTH}\.?\s+(?:\d{{1,2}}(?:st|nd|rd|th)?,?\s+)?)?\d{{4}}");
    let rules = [
        ("Quantity-Number", r"\b\d+(?:[.,]\d+)*\b".to_string()),
        (
            "Quantity-Currency",
            r"[$€£¥]\s?\d+(?:[.,]\d+)*(?:\s?(?:million|billion|trillion|[mbk])\b)?".to_string(),
        ),
        (
            "Quantity-Currency",
            r"\b\d+(?:[.,]\d+)*\s(?:dollars|euros|pounds|yen|USD|EUR|GBP)\b".to_string(),
        ),
        (
            "DateTime-Duration",
            r"(?i)\b\d+(?:[.,]\d+)?\s+(?:seconds?|minutes?|hours?|days?|weeks?|months?|years?|decades?|centuries|century)\b"
                .to_string(),
        ),
        (
            "DateTime-DateRange",
            format!(r"\b(?:[Ff]rom\s+{date}\s+(?:to|until|through)\s+{date}|[Bb]etween\s+{date}\s+and\s+{date}|\d{{4}}\s?[-\u{{2013}}]\s?\d{{4}})\b"),
        ),
    ];
    rules
        .into_iter()
        .map(|(c, p)| (c, Regex::new(&p).expect("static pattern")))
        .collect()
});

#[derive(Debug, Clone, Default)]
pub struct OfflineNer {
    /// category -> surface forms, longest first
    gazetteers: BTreeMap<String, Vec<String>>,
}

impl OfflineNer {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_gazetteer<I, S>(mut self, category: &str, surfaces: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let entry = self.gazetteers.entry(category.to_string()).or_default();
        entry.extend(
            surfaces
                .into_iter()
                .map(Into::into)
                .filter(|s: &String| !s.trim().is_empty()),
        );
        entry.sort_by(|a, b| b.chars().count().cmp(&a.chars().count()).then(a.cmp(b)));
        entry.dedup();
        self
    }

    /// Loads every file in `dir`; the file stem names the category.
    pub fn from_gazetteer_dir(dir: impl AsRef<Path>) -> io::Result<Self> {
        let mut ner = Self::new();
        let mut paths: Vec<_> = fs::read_dir(dir)?
            .filter_map(Result::ok)
            .map(|e| e.path())
            .filter(|p| p.is_file())
            .collect();
        paths.sort();
        for path in paths {
            let Some(category) = path
                .file_stem()
                .and_then(|s| s.to_str())
                .map(str::to_string)
            else {
                continue;
            };
            let body = fs::read_to_string(&path)?;
            let surfaces: Vec<String> = body
                .lines()
                .map(str::trim)
                .filter(|l| !l.is_empty() && !l.starts_with('#'))
                .map(str::to_string)
                .collect();
            ner = ner.with_gazetteer(&category, surfaces);
        }
        Ok(ner)
    }

    pub fn gazetteer_categories(&self) -> impl Iterator<Item = &str> {
        self.gazetteers.keys().map(String::as_str)
    }

    fn candidates(&self, text: &str, categories: &EntityCategorySet) -> Vec<EntitySpan> {
        let mut out = Vec::new();
        let mut push = |category: &str, start: usize, end: usize| {
            if let Some(accepted) = categories.accept(category) {
                out.push(EntitySpan {
                    category: accepted.to_string(),
                    surface: text[start..end].to_string(),
                    start: byte_to_char(text, start),
                    end: byte_to_char(text, end),
                });
            }
        };
        for (category, re) in RULES.iter() {
            for m in re.find_iter(text) {
                push(category, m.start(), m.end());
            }
        }
        for (category, surfaces) in &self.gazetteers {
            for surface in surfaces {
                for (start, _) in text.match_indices(surface.as_str()) {
                    let end = start + surface.len();
                    let before_ok = text[..start]
                        .chars()
                        .next_back()
                        .is_none_or(|c| !c.is_alphanumeric());
                    let after_ok = text[end..]
                        .chars()
                        .next()
                        .is_none_or(|c| !c.is_alphanumeric());
                    if before_ok && after_ok {
                        push(category, start, end);
                    }
                }
            }
        }
        out
    }
}

impl NerProvider for OfflineNer {
    fn recognize(
        &self,
        text: &str,
        categories: &EntityCategorySet,
    ) -> Result<Vec<EntitySpan>, NerError> {
        Ok(resolve_overlaps(&self.candidates(text, categories)))
    }
}

/// Rule-only recognition (no gazetteers).
pub fn offline_recognize(text: &str, categories: &EntityCategorySet) -> Vec<EntitySpan> {
    resolve_overlaps(&OfflineNer::new().candidates(text, categories))
}
