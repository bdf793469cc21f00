//! Entity-level judging: each grounded hypothesis is re-judged once per
//! recognized entity, with that entity bracket-tagged so the model checks
//! only that detail.

use crate::inference::CompletionClient;
use crate::model::{
    char_slice, DetectionLevel, EntitySpan, Hypothesis, ModelError, SourceText, TaggedHypothesis,
};
use crate::sentence::{judge, JudgeError, JudgeItem, JudgeOptions, LevelOutcome};

const OPEN: &str = "[ ";
const CLOSE: &str = " ]";

/// Wraps `span` in `hyp.text` as `[ surface ]`.
pub fn tag_entity(hyp: &Hypothesis, span: &EntitySpan) -> Result<TaggedHypothesis, ModelError> {
    span.validate(&hyp.text)?;
    let len = hyp.text.chars().count();
    let before = char_slice(&hyp.text, crate::model::Span::new(0, span.start)).unwrap_or_default();
    let after = char_slice(&hyp.text, crate::model::Span::new(span.end, len)).unwrap_or_default();
    Ok(TaggedHypothesis {
        base: hyp.index,
        entity: span.clone(),
        rendered: format!("{before}{OPEN}{}{CLOSE}{after}", span.surface),
    })
}

/// Removes the tag wrapper, giving back the hypothesis text.
pub fn untag(tagged: &TaggedHypothesis) -> String {
    let chars: Vec<char> = tagged.rendered.chars().collect();
    let open = tagged.entity.start;
    let inner_end = open + OPEN.len() + tagged.entity.span().len();
    let mut out: String = chars[..open].iter().collect();
    out.extend(&chars[open + OPEN.len()..inner_end]);
    out.extend(&chars[inner_end + CLOSE.len()..]);
    out
}

/// One tagged variant per entity mention, in input order.
pub fn expand_hypothesis(
    hyp: &Hypothesis,
    entities: &[EntitySpan],
) -> Result<Vec<TaggedHypothesis>, ModelError> {
    entities.iter().map(|e| tag_entity(hyp, e)).collect()
}

/// Judges each tagged variant; one entity-level record per variant.
pub fn detect_entities(
    source: &SourceText,
    tagged: &[TaggedHypothesis],
    client: &CompletionClient,
    opts: &JudgeOptions<'_>,
) -> Result<LevelOutcome, JudgeError> {
    if tagged.is_empty() {
        return Ok(LevelOutcome::default());
    }
    let items: Vec<JudgeItem> = tagged
        .iter()
        .map(|t| JudgeItem {
            hypothesis_index: t.base,
            text: t.rendered.clone(),
            entity: Some(t.entity.clone()),
        })
        .collect();
    judge(source, &items, DetectionLevel::Entity, client, opts)
}
