//! Entity recognition for entity-level detection: a provider abstraction,
//! the category filter, and overlap resolution.

pub mod offline;
pub mod remote;

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::EntitySpan;

pub use offline::OfflineNer;
pub use remote::RemoteNer;

/// The categories used for every detection and mitigation run by default.
pub const DEFAULT_CATEGORIES: [&str; 9] = [
    "Person",
    "PersonType",
    "Location",
    "Event",
    "Skill",
    "DateTime-DateRange",
    "DateTime-Duration",
    "Quantity-Number",
    "Quantity-Currency",
];

/// Category names a provider may return (Text Analytics general NER).
pub const TAXONOMY: &[&str] = &[
    "Person",
    "PersonType",
    "Location",
    "Location-Geographical",
    "Location-GPE",
    "Location-Structure",
    "Organization",
    "Organization-Medical",
    "Organization-Stock",
    "Organization-Sports",
    "Event",
    "Event-Cultural",
    "Event-Natural",
    "Event-Sports",
    "Product",
    "Product-ComputingProducts",
    "Skill",
    "Address",
    "PhoneNumber",
    "Email",
    "URL",
    "IP",
    "DateTime",
    "DateTime-Date",
    "DateTime-Time",
    "DateTime-DateRange",
    "DateTime-TimeRange",
    "DateTime-Duration",
    "DateTime-Set",
    "Quantity",
    "Quantity-Number",
    "Quantity-Percentage",
    "Quantity-Ordinal",
    "Quantity-Age",
    "Quantity-Currency",
    "Quantity-Dimension",
    "Quantity-Temperature",
];

#[derive(Debug, Error, PartialEq, Eq)]
pub enum NerError {
    #[error("entity recognition needs non-empty text")]
    EmptyText,
    #[error("category set is empty")]
    EmptyCategories,
    #[error("unsupported entity category `{0}`")]
    UnknownCategory(String),
    #[error("NER transport failure: {0}")]
    Transport(String),
    #[error("malformed NER payload: {0}")]
    Malformed(String),
    #[error("NER configuration: {0}")]
    Config(String),
}

impl NerError {
    pub fn is_transient(&self) -> bool {
        matches!(self, NerError::Transport(_))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<String>", into = "Vec<String>")]
pub struct EntityCategorySet {
    categories: BTreeSet<String>,
}

impl Default for EntityCategorySet {
    fn default() -> Self {
        Self {
            categories: DEFAULT_CATEGORIES.iter().map(|c| c.to_string()).collect(),
        }
    }
}

impl TryFrom<Vec<String>> for EntityCategorySet {
    type Error = NerError;

    fn try_from(value: Vec<String>) -> Result<Self, Self::Error> {
        Self::new(value)
    }
}

impl From<EntityCategorySet> for Vec<String> {
    fn from(value: EntityCategorySet) -> Self {
        value.categories.into_iter().collect()
    }
}

impl EntityCategorySet {
    pub fn new<I, S>(categories: I) -> Result<Self, NerError>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let categories: BTreeSet<String> = categories.into_iter().map(Into::into).collect();
        if categories.is_empty() {
            return Err(NerError::EmptyCategories);
        }
        if let Some(bad) = categories.iter().find(|c| !TAXONOMY.contains(&c.as_str())) {
            return Err(NerError::UnknownCategory(bad.clone()));
        }
        Ok(Self { categories })
    }

    pub fn contains(&self, category: &str) -> bool {
        self.categories.contains(category)
    }

    pub fn iter(&self) -> impl Iterator<Item = &str> {
        self.categories.iter().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.categories.len()
    }

    pub fn is_empty(&self) -> bool {
        self.categories.is_empty()
    }

    /// Name under which a provider category is accepted: the full
    /// `Category-Subcategory` when requested, else its parent when requested.
    pub fn accept(&self, category: &str) -> Option<&str> {
        if let Some(c) = self.categories.get(category) {
            return Some(c);
        }
        let parent = category.split_once('-').map(|(p, _)| p)?;
        self.categories.get(parent).map(String::as_str)
    }
}

/// Given text and a category set, returns entity mentions in that text.
pub trait NerProvider: Send + Sync {
    fn recognize(
        &self,
        text: &str,
        categories: &EntityCategorySet,
    ) -> Result<Vec<EntitySpan>, NerError>;
}

impl<F> NerProvider for F
where
    F: Fn(&str, &EntityCategorySet) -> Result<Vec<EntitySpan>, NerError> + Send + Sync,
{
    fn recognize(
        &self,
        text: &str,
        categories: &EntityCategorySet,
    ) -> Result<Vec<EntitySpan>, NerError> {
        self(text, categories)
    }
}

impl<P: NerProvider + ?Sized> NerProvider for std::sync::Arc<P> {
    fn recognize(
        &self,
        text: &str,
        categories: &EntityCategorySet,
    ) -> Result<Vec<EntitySpan>, NerError> {
        (**self).recognize(text, categories)
    }
}

/// Runs `provider` and normalizes its output: spans are checked against
/// `text`, filtered to `categories`, sorted by start offset, and exact
/// duplicates are dropped.
pub fn recognize(
    provider: &dyn NerProvider,
    text: &str,
    categories: &EntityCategorySet,
) -> Result<Vec<EntitySpan>, NerError> {
    if text.trim().is_empty() {
        return Err(NerError::EmptyText);
    }
    let mut spans = Vec::new();
    for mut span in provider.recognize(text, categories)? {
        span.validate(text)
            .map_err(|e| NerError::Malformed(e.to_string()))?;
        if let Some(accepted) = categories.accept(&span.category) {
            span.category = accepted.to_string();
            spans.push(span);
        }
    }
    sort_spans(&mut spans);
    spans.dedup();
    Ok(spans)
}

/// Start ascending, longer first, then category.
fn sort_spans(spans: &mut [EntitySpan]) {
    spans.sort_by(|a, b| {
        a.start
            .cmp(&b.start)
            .then(b.end.cmp(&a.end))
            .then(a.category.cmp(&b.category))
            .then(a.surface.cmp(&b.surface))
    });
}

/// Reduces overlapping mentions: the longer span wins, and between equal
/// lengths the earlier start wins. Output is sorted and non-overlapping.
pub fn resolve_overlaps(spans: &[EntitySpan]) -> Vec<EntitySpan> {
    let mut by_priority: Vec<&EntitySpan> = spans.iter().collect();
    by_priority.sort_by(|a, b| {
        b.span()
            .len()
            .cmp(&a.span().len())
            .then(a.start.cmp(&b.start))
            .then(a.category.cmp(&b.category))
    });
    let mut kept: Vec<EntitySpan> = Vec::new();
    for s in by_priority {
        if kept.iter().all(|k| !k.span().overlaps(&s.span())) {
            kept.push(s.clone());
        }
    }
    kept.sort_by_key(|s| s.start);
    kept
}
