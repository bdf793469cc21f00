//! Post-editing: flagged sentences and their reasons become rewrite
//! instructions, and the edit ledger is recovered by aligning sentences.

use std::collections::HashSet;

use thiserror::Error;

use crate::inference::template::{
    bindings, PromptTemplate, TemplateError, RAW_RESPONSE, REWRITE_INSTRUCTIONS, SOURCE_TEXT,
};
use crate::inference::{CompletionClient, Message, ProviderError};
use crate::model::{
    DetectionReport, Edit, EditAction, Hypothesis, RawResponse, RefinedResponse, SourceText,
};
use crate::selector::{select_hypotheses, SelectorConfig, SentenceSplitter};

#[derive(Debug, Error)]
pub enum MitigationError {
    #[error("rewrite instructions are empty")]
    EmptyInstructions,
    #[error(transparent)]
    Template(#[from] TemplateError),
    /// The original response is carried so callers can fall back to it.
    #[error("rewrite request failed: {source}")]
    Provider {
        #[source]
        source: ProviderError,
        original: String,
    },
}

impl MitigationError {
    pub fn original(&self) -> Option<&str> {
        match self {
            Self::Provider { original, .. } => Some(original),
            _ => None,
        }
    }
}

/// One numbered block per hallucinated hypothesis:
///
/// ```text
/// 1. <sentence>
/// - reason: <reason>
/// ```
pub fn build_rewrite_instructions(report: &DetectionReport, response: &RawResponse) -> String {
    let mut blocks = Vec::new();
    for index in report.hallucinated_indices() {
        let sentence = match report.hypothesis(index) {
            Some(h) => h.text.trim().to_string(),
            None => response
                .sentence(index)
                .unwrap_or_default()
                .trim()
                .to_string(),
        };
        let mut block = format!("{}. {sentence}", blocks.len() + 1);
        for reason in report.reasons(index) {
            block.push_str("\n- reason: ");
            block.push_str(reason.trim());
        }
        blocks.push(block);
    }
    blocks.join("\n")
}

pub fn build_mitigation_prompt(
    template: &PromptTemplate,
    source: &SourceText,
    response: &RawResponse,
    instructions: &str,
) -> Result<Vec<Message>, MitigationError> {
    if instructions.trim().is_empty() {
        return Err(MitigationError::EmptyInstructions);
    }
    Ok(template.render(&bindings([
        (SOURCE_TEXT, source.text.as_str()),
        (RAW_RESPONSE, response.text.as_str()),
        (REWRITE_INSTRUCTIONS, instructions),
    ]))?)
}

/// Strips one leading `Answer:` line and surrounding whitespace. The flag
/// is set when nothing is left.
pub fn parse_refined(text: &str) -> (String, bool) {
    let trimmed = text.trim_start();
    let body = match trimmed.strip_prefix("Answer:") {
        Some(rest) => rest,
        None => trimmed,
    };
    let refined = body.trim().to_string();
    let empty = refined.is_empty();
    (refined, empty)
}

/// Aligns the selected sentences of `original` with those of `refined`.
///
/// Sentences are matched exactly and in order, each original taking the
/// first unmatched refined sentence after the previous match. Unmatched
/// refined sentences lying between two matches are paired, in order, with
/// the flagged originals in the same gap (rewritten); leftover flagged
/// originals are removed. Grounded sentences are always reported as kept;
/// ones the rewrite failed to reproduce go to `unexpected`.
pub fn edit_ledger(
    original: &[Hypothesis],
    flagged: &HashSet<usize>,
    refined: &[String],
) -> (Vec<Edit>, Vec<usize>) {
    let orig: Vec<&Hypothesis> = original.iter().filter(|h| h.selected).collect();
    let mut matched: Vec<Option<usize>> = vec![None; orig.len()];
    let mut cursor = 0;
    for (k, h) in orig.iter().enumerate() {
        let want = h.text.trim();
        if let Some(off) = refined[cursor..].iter().position(|r| r.trim() == want) {
            matched[k] = Some(cursor + off);
            cursor += off + 1;
        }
    }

    let mut edits = Vec::with_capacity(orig.len());
    let mut unexpected = Vec::new();
    let mut k = 0;
    let mut refined_from = 0;
    while k < orig.len() {
        if let Some(r) = matched[k] {
            edits.push(Edit {
                index: orig[k].index,
                action: EditAction::Kept,
                new_text: None,
            });
            refined_from = r + 1;
            k += 1;
            continue;
        }
        // an unmatched run of originals and the refined gap it faces
        let run_end = (k..orig.len())
            .find(|&j| matched[j].is_some())
            .unwrap_or(orig.len());
        let refined_to = matched
            .get(run_end)
            .copied()
            .flatten()
            .unwrap_or(refined.len());
        let mut residual = refined[refined_from..refined_to]
            .iter()
            .map(|s| s.trim().to_string());
        let flagged_in_run: Vec<usize> = (k..run_end)
            .filter(|&j| flagged.contains(&orig[j].index))
            .collect();
        let mut last_rewritten: Option<usize> = None;
        for j in k..run_end {
            let h = orig[j];
            if !flagged.contains(&h.index) {
                unexpected.push(h.index);
                edits.push(Edit {
                    index: h.index,
                    action: EditAction::Kept,
                    new_text: None,
                });
                continue;
            }
            match residual.next() {
                Some(text) => {
                    last_rewritten = Some(edits.len());
                    edits.push(Edit {
                        index: h.index,
                        action: EditAction::Rewritten,
                        new_text: Some(text),
                    });
                }
                None => edits.push(Edit {
                    index: h.index,
                    action: EditAction::Removed,
                    new_text: None,
                }),
            }
        }
        // a rewrite that spans several sentences stays with its original
        let extra: Vec<String> = residual.collect();
        if !extra.is_empty() && !flagged_in_run.is_empty() {
            if let Some(pos) = last_rewritten {
                let e = &mut edits[pos];
                let joined = std::iter::once(e.new_text.take().unwrap_or_default())
                    .chain(extra)
                    .collect::<Vec<_>>();
                e.new_text = Some(joined.join(" "));
            }
        }
        refined_from = refined_to;
        k = run_end;
    }
    edits.sort_by_key(|e| e.index);
    unexpected.sort_unstable();
    (edits, unexpected)
}

/// Settings shared by every mitigation call.
#[derive(Debug, Clone)]
pub struct Mitigator {
    pub template: PromptTemplate,
    pub splitter: SentenceSplitter,
    pub selector: SelectorConfig,
}

impl Mitigator {
    pub fn new(template: PromptTemplate) -> Self {
        Self {
            template,
            splitter: SentenceSplitter::default(),
            selector: SelectorConfig::default(),
        }
    }

    /// Rewrites flagged sentences. A report without hallucinations returns
    /// the response unchanged and never calls the provider.
    pub fn mitigate(
        &self,
        source: &SourceText,
        response: &RawResponse,
        report: &DetectionReport,
        client: &CompletionClient,
    ) -> Result<RefinedResponse, MitigationError> {
        let hyps = if report.hypotheses.is_empty() {
            select_hypotheses(response, &self.selector)
        } else {
            report.hypotheses.clone()
        };
        let flagged: HashSet<usize> = report.hallucinated_indices().into_iter().collect();
        if flagged.is_empty() {
            let mut edits: Vec<Edit> = hyps
                .iter()
                .filter(|h| h.selected)
                .map(|h| Edit {
                    index: h.index,
                    action: EditAction::Kept,
                    new_text: None,
                })
                .collect();
            edits.sort_by_key(|e| e.index);
            return Ok(RefinedResponse {
                text: response.text.clone(),
                edits,
                all_removed: false,
                unexpected_changes: Vec::new(),
            });
        }

        let instructions = build_rewrite_instructions(report, response);
        let messages = build_mitigation_prompt(&self.template, source, response, &instructions)?;
        let reply = client
            .complete(&messages)
            .map_err(|source| MitigationError::Provider {
                source,
                original: response.text.clone(),
            })?;
        let (text, all_removed) = parse_refined(&reply);

        let refined_resp = RawResponse::new(&response.id, text.clone(), &self.splitter);
        let refined: Vec<String> = select_hypotheses(&refined_resp, &self.selector)
            .into_iter()
            .filter(|h| h.selected)
            .map(|h| h.text)
            .collect();
        let (edits, unexpected_changes) = edit_ledger(&hyps, &flagged, &refined);
        Ok(RefinedResponse {
            text,
            edits,
            all_removed,
            unexpected_changes,
        })
    }
}
