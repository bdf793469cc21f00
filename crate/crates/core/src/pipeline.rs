//! The detection phase end to end: select hypotheses, judge each at the
//! sentence level, re-judge grounded ones entity by entity, and merge.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use thiserror::Error;

use crate::entity::{detect_entities, expand_hypothesis};
use crate::inference::template::{
    PromptTemplate, DETECTION, DETECTION_ENTITY, MITIGATION, MITIGATION_NORMALIZED,
};
use crate::inference::{CompletionClient, RetryPolicy};
use crate::model::{
    final_judgment, DetectionLevel, DetectionRecord, DetectionReport, Hypothesis, Judgment,
    ModelError, RawResponse, SourceText,
};
use crate::ner::{recognize, resolve_overlaps, EntityCategorySet, NerError, NerProvider};
use crate::selector::{select_hypotheses, SelectorConfig};
use crate::sentence::{detect_sentences, DetectionMode, JudgeError, JudgeOptions};

/// The three prompt templates a run uses.
#[derive(Debug, Clone)]
pub struct PromptSet {
    pub detection: PromptTemplate,
    pub entity: PromptTemplate,
    pub mitigation: PromptTemplate,
}

impl Default for PromptSet {
    fn default() -> Self {
        Self::new(None, false)
    }
}

impl PromptSet {
    /// `today` replaces the date in the detection rules; `normalized`
    /// selects the typo-corrected mitigation prompt.
    pub fn new(today: Option<&str>, normalized: bool) -> Self {
        let load = |id| PromptTemplate::get(id).expect("built-in template");
        let date = |t: PromptTemplate| match today {
            Some(d) => t.with_today(d),
            None => t,
        };
        Self {
            detection: date(load(DETECTION)),
            entity: date(load(DETECTION_ENTITY)),
            mitigation: load(if normalized {
                MITIGATION_NORMALIZED
            } else {
                MITIGATION
            }),
        }
    }
}

#[derive(Debug, Clone)]
pub struct DetectorSettings {
    pub selector: SelectorConfig,
    pub mode: DetectionMode,
    /// Upper bound on estimated prompt tokens per request.
    pub max_prompt_tokens: usize,
    pub categories: EntityCategorySet,
    pub prompts: PromptSet,
    /// Attempts for transient NER failures.
    pub ner_retry: RetryPolicy,
}

impl Default for DetectorSettings {
    fn default() -> Self {
        Self {
            selector: SelectorConfig::default(),
            mode: DetectionMode::Production,
            // 16k context minus the 4096-token completion allowance
            max_prompt_tokens: 16_384 - 4_096,
            categories: EntityCategorySet::default(),
            prompts: PromptSet::default(),
            ner_retry: RetryPolicy::default(),
        }
    }
}

#[derive(Debug, Error)]
pub enum MergeError {
    #[error("hypothesis {0} has both a sentence-level hallucination and entity-level records")]
    OverlappingDomains(usize),
    #[error("merge input holds a {0:?}-level record in the wrong set")]
    WrongLevel(DetectionLevel),
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Error)]
pub enum DetectError {
    #[error("judging failed: {0}")]
    Judge(#[from] JudgeError),
    #[error("entity recognition failed: {0}")]
    Ner(#[from] NerError),
    #[error(transparent)]
    Merge(#[from] MergeError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Merged record set and per-hypothesis verdicts.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Merged {
    pub records: Vec<DetectionRecord>,
    pub final_judgments: BTreeMap<usize, Judgment>,
}

/// Unions sentence-level hallucination records with all entity-level
/// records. Every hypothesis seen in either input gets a final verdict;
/// a hypothesis is grounded only if all its retained records say so.
pub fn merge(o_sent: &[DetectionRecord], o_ent: &[DetectionRecord]) -> Result<Merged, MergeError> {
    if let Some(r) = o_sent.iter().find(|r| r.level != DetectionLevel::Sentence) {
        return Err(MergeError::WrongLevel(r.level));
    }
    if let Some(r) = o_ent.iter().find(|r| r.level != DetectionLevel::Entity) {
        return Err(MergeError::WrongLevel(r.level));
    }
    let sent_hal: BTreeSet<usize> = o_sent
        .iter()
        .filter(|r| r.judgment.is_hallucination())
        .map(|r| r.hypothesis_index)
        .collect();
    if let Some(r) = o_ent
        .iter()
        .find(|r| sent_hal.contains(&r.hypothesis_index))
    {
        return Err(MergeError::OverlappingDomains(r.hypothesis_index));
    }

    let mut records: Vec<DetectionRecord> = o_sent
        .iter()
        .filter(|r| r.judgment.is_hallucination())
        .chain(o_ent)
        .cloned()
        .collect();
    records.sort_by_key(|r| r.sort_key());

    let mut grouped: BTreeMap<usize, Vec<DetectionRecord>> = BTreeMap::new();
    for r in &records {
        grouped
            .entry(r.hypothesis_index)
            .or_default()
            .push(r.clone());
    }
    let mut final_judgments = BTreeMap::new();
    for r in o_sent.iter().chain(o_ent) {
        final_judgments
            .entry(r.hypothesis_index)
            .or_insert(Judgment::NonHallucination);
    }
    for (i, group) in &grouped {
        final_judgments.insert(*i, final_judgment(group)?);
    }
    Ok(Merged {
        records,
        final_judgments,
    })
}

/// Completion and NER providers plus settings.
#[derive(Clone)]
pub struct Detector {
    client: CompletionClient,
    ner: Arc<dyn NerProvider>,
    settings: DetectorSettings,
}

impl Detector {
    pub fn new(
        client: CompletionClient,
        ner: Arc<dyn NerProvider>,
        settings: DetectorSettings,
    ) -> Self {
        Self {
            client,
            ner,
            settings,
        }
    }

    pub fn client(&self) -> &CompletionClient {
        &self.client
    }

    pub fn settings(&self) -> &DetectorSettings {
        &self.settings
    }

    fn entities_of(&self, hyp: &Hypothesis) -> Result<Vec<crate::model::EntitySpan>, NerError> {
        let attempts = self.settings.ner_retry.max_attempts.max(1);
        let mut attempt = 0;
        loop {
            match recognize(self.ner.as_ref(), &hyp.text, &self.settings.categories) {
                Ok(spans) => return Ok(resolve_overlaps(&spans)),
                Err(e) if e.is_transient() && attempt + 1 < attempts => {
                    tracing::warn!(error = %e, "transient NER failure, retrying");
                    std::thread::sleep(self.settings.ner_retry.delay(attempt));
                    attempt += 1;
                }
                Err(e) => return Err(e),
            }
        }
    }

    /// Judges one response against its source.
    pub fn detect(
        &self,
        source: &SourceText,
        response: &RawResponse,
    ) -> Result<DetectionReport, DetectError> {
        let mut report = DetectionReport::empty(&source.id, &response.id);
        let mut hyps = select_hypotheses(response, &self.settings.selector);
        hyps.sort_by_key(|h| h.index);
        if hyps.is_empty() {
            return Ok(report);
        }

        let sentence_opts = JudgeOptions {
            template: &self.settings.prompts.detection,
            mode: self.settings.mode,
            max_prompt_tokens: self.settings.max_prompt_tokens,
        };
        let sent = detect_sentences(source, &hyps, &self.client, &sentence_opts)?;
        report.diagnostics.extend(sent.diagnostics);

        let entity_opts = JudgeOptions {
            template: &self.settings.prompts.entity,
            ..sentence_opts
        };
        let mut o_ent = Vec::new();
        for record in sent
            .records
            .iter()
            .filter(|r| !r.judgment.is_hallucination())
        {
            let hyp = &hyps[record.hypothesis_index];
            let entities = self.entities_of(hyp)?;
            let tagged = expand_hypothesis(hyp, &entities)?;
            let out = detect_entities(source, &tagged, &self.client, &entity_opts)?;
            report.diagnostics.extend(out.diagnostics);
            o_ent.extend(out.records);
        }

        let merged = merge(&sent.records, &o_ent)?;
        report.records = merged.records;
        report.final_judgments = merged.final_judgments;
        for hyp in hyps.iter().filter(|h| !h.selected) {
            report.records.push(DetectionRecord::bypassed(hyp));
            report
                .final_judgments
                .insert(hyp.index, Judgment::NonHallucination);
        }
        // selected hypotheses that produced no record (none are expected)
        for hyp in hyps.iter().filter(|h| h.selected) {
            report
                .final_judgments
                .entry(hyp.index)
                .or_insert(Judgment::NonHallucination);
        }
        report.sentence_records = sent.records;
        report.hypotheses = hyps;
        Ok(report)
    }
}
