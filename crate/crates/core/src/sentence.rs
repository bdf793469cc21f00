//! Sentence-level NLI judging: build the few-shot chain-of-thought prompt,
//! parse the numbered `<reason> … </reason> [C]/[I]` answers, and turn them
//! into detection records.

use std::fmt;
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::inference::template::{
    bindings, PromptTemplate, TemplateError, HYPOTHESIS, SOURCE_TEXT,
};
use crate::inference::{estimate_message_tokens, CompletionClient, Message, ProviderError};
use crate::model::{
    judgment_from_nli, DetectionLevel, DetectionRecord, Diagnostic, EntitySpan, Hypothesis,
    Judgment, NliLabel, SourceText,
};

/// Reason attached when no parseable answer could be obtained.
pub const PARSE_FAILURE_REASON: &str = "parse-failure: conservative default";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Mark {
    C,
    I,
}

impl Mark {
    /// `[I]` stands for contradiction or neutral; the prompt does not tell
    /// them apart, so it maps to contradiction.
    pub fn nli_label(self) -> NliLabel {
        match self {
            Mark::C => NliLabel::Entailment,
            Mark::I => NliLabel::Contradiction,
        }
    }

    pub fn judgment(self) -> Judgment {
        judgment_from_nli(self.nli_label())
    }
}

impl fmt::Display for Mark {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mark::C => "C",
            Mark::I => "I",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParsedVerdict {
    pub index: usize,
    pub echoed_hypothesis: String,
    pub reason: String,
    pub mark: Mark,
}

impl ParsedVerdict {
    /// One answer line in the format the prompt's examples use.
    pub fn render(&self) -> String {
        format!(
            "({}). {} <reason> {} </reason> [{}]",
            self.index, self.echoed_hypothesis, self.reason, self.mark
        )
    }
}

/// Renders an `Answer:` block for a list of verdicts.
pub fn render_answer(verdicts: &[ParsedVerdict]) -> String {
    let mut out = String::from("Answer:");
    for v in verdicts {
        out.push('\n');
        out.push_str(&v.render());
    }
    out
}

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum ParseError {
    #[error("expected {expected} verdicts, found {found}")]
    CountMismatch { expected: usize, found: usize },
    #[error("item {item} has no <reason> tag")]
    MissingReason { item: usize },
    #[error("item {item} has an unclosed <reason> tag")]
    UnclosedReason { item: usize },
    #[error("item {item} has no [C]/[I] mark")]
    MissingMark { item: usize },
    #[error("item at position {position} is numbered ({found})")]
    IndexMismatch { position: usize, found: usize },
}

static ITEM_START: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?m)^[ \t]*\((\d+)\)\.?").expect("static pattern"));
static MARK: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"\[\s*([CIci])\s*\]").expect("static pattern"));

const REASON_OPEN: &str = "<reason>";
const REASON_CLOSE: &str = "</reason>";

/// Parses a numbered verdict list, tolerating a leading `Answer:` line.
pub fn parse_nli_answer(text: &str, expected: usize) -> Result<Vec<ParsedVerdict>, ParseError> {
    let mut body = text.trim_start();
    if let Some(rest) = body.strip_prefix("Answer:") {
        body = rest;
    }
    let starts: Vec<(usize, usize, usize)> = ITEM_START
        .captures_iter(body)
        .map(|c| {
            let m = c.get(0).unwrap();
            let n = c[1].parse().unwrap_or(usize::MAX);
            (m.start(), m.end(), n)
        })
        .collect();
    if starts.len() != expected {
        return Err(ParseError::CountMismatch {
            expected,
            found: starts.len(),
        });
    }
    let mut out = Vec::with_capacity(expected);
    for (pos, &(_, content_start, number)) in starts.iter().enumerate() {
        if number != pos {
            return Err(ParseError::IndexMismatch {
                position: pos,
                found: number,
            });
        }
        let content_end = starts.get(pos + 1).map_or(body.len(), |s| s.0);
        let item = &body[content_start..content_end];
        let open = item
            .find(REASON_OPEN)
            .ok_or(ParseError::MissingReason { item: pos })?;
        let after_open = &item[open + REASON_OPEN.len()..];
        let close = after_open
            .find(REASON_CLOSE)
            .ok_or(ParseError::UnclosedReason { item: pos })?;
        let tail = &after_open[close + REASON_CLOSE.len()..];
        let mark = MARK
            .captures(tail)
            .map(|c| {
                if c[1].eq_ignore_ascii_case("c") {
                    Mark::C
                } else {
                    Mark::I
                }
            })
            .ok_or(ParseError::MissingMark { item: pos })?;
        out.push(ParsedVerdict {
            index: number,
            echoed_hypothesis: item[..open].trim().to_string(),
            reason: after_open[..close].trim().to_string(),
            mark,
        });
    }
    Ok(out)
}

#[derive(Debug, Error)]
pub enum PromptError {
    #[error("no hypotheses to judge")]
    EmptyBatch,
    #[error("prompt needs ~{estimated} tokens, budget is {budget}")]
    OverBudget { estimated: usize, budget: usize },
    #[error(transparent)]
    Template(#[from] TemplateError),
}

/// Numbered `(i). text` lines.
pub fn number_hypotheses<'a>(texts: impl IntoIterator<Item = &'a str>) -> String {
    texts
        .into_iter()
        .enumerate()
        .map(|(i, t)| format!("({i}). {t}"))
        .collect::<Vec<_>>()
        .join("\n")
}

pub(crate) fn build_judge_prompt<'a>(
    template: &PromptTemplate,
    source: &SourceText,
    texts: impl IntoIterator<Item = &'a str>,
    max_prompt_tokens: Option<usize>,
) -> Result<Vec<Message>, PromptError> {
    let numbered = number_hypotheses(texts);
    if numbered.is_empty() {
        return Err(PromptError::EmptyBatch);
    }
    let messages = template.render(&bindings([
        (SOURCE_TEXT, source.text.as_str()),
        (HYPOTHESIS, numbered.as_str()),
    ]))?;
    if let Some(budget) = max_prompt_tokens {
        let estimated = estimate_message_tokens(&messages);
        if estimated > budget {
            return Err(PromptError::OverBudget { estimated, budget });
        }
    }
    Ok(messages)
}

/// Detection prompt for a batch of hypotheses.
pub fn build_sentence_prompt(
    template: &PromptTemplate,
    source: &SourceText,
    hyps: &[Hypothesis],
    max_prompt_tokens: Option<usize>,
) -> Result<Vec<Message>, PromptError> {
    build_judge_prompt(
        template,
        source,
        hyps.iter().map(|h| h.text.as_str()),
        max_prompt_tokens,
    )
}

/// How judgments are grouped into completion requests.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DetectionMode {
    /// Pack as many hypotheses per request as the token budget allows.
    #[default]
    Production,
    /// One hypothesis per request.
    Benchmark,
}

#[derive(Debug, Clone, Copy)]
pub struct JudgeOptions<'a> {
    pub template: &'a PromptTemplate,
    pub mode: DetectionMode,
    pub max_prompt_tokens: usize,
}

/// One thing to judge: the hypothesis it belongs to, the text shown to the
/// model, and the tagged entity for entity-level items.
#[derive(Debug, Clone)]
pub(crate) struct JudgeItem {
    pub hypothesis_index: usize,
    pub text: String,
    pub entity: Option<EntitySpan>,
}

#[derive(Debug, Default, Clone, PartialEq, Eq)]
pub struct LevelOutcome {
    pub records: Vec<DetectionRecord>,
    pub diagnostics: Vec<Diagnostic>,
}

#[derive(Debug, Error)]
pub enum JudgeError {
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error(transparent)]
    Provider(#[from] ProviderError),
}

/// Splits `items` into request-sized batches.
fn plan_batches<'i>(
    items: &'i [JudgeItem],
    source: &SourceText,
    opts: &JudgeOptions<'_>,
) -> Result<Vec<&'i [JudgeItem]>, PromptError> {
    let fits = |batch: &[JudgeItem]| {
        build_judge_prompt(
            opts.template,
            source,
            batch.iter().map(|i| i.text.as_str()),
            Some(opts.max_prompt_tokens),
        )
    };
    let mut batches = Vec::new();
    let mut start = 0;
    while start < items.len() {
        fits(&items[start..start + 1])?;
        let mut end = start + 1;
        if opts.mode == DetectionMode::Production {
            while end < items.len() && fits(&items[start..=end]).is_ok() {
                end += 1;
            }
        }
        batches.push(&items[start..end]);
        start = end;
    }
    Ok(batches)
}

pub(crate) fn judge(
    source: &SourceText,
    items: &[JudgeItem],
    level: DetectionLevel,
    client: &CompletionClient,
    opts: &JudgeOptions<'_>,
) -> Result<LevelOutcome, JudgeError> {
    let mut out = LevelOutcome::default();
    for batch in plan_batches(items, source, opts)? {
        let messages = build_judge_prompt(
            opts.template,
            source,
            batch.iter().map(|i| i.text.as_str()),
            None,
        )?;
        let indices: Vec<usize> = batch.iter().map(|i| i.hypothesis_index).collect();
        let verdicts = match parse_nli_answer(&client.complete(&messages)?, batch.len()) {
            Ok(v) => Some(v),
            Err(first) => {
                tracing::warn!(?level, error = %first, "unparseable verdicts, asking again");
                out.diagnostics.push(Diagnostic::ParseRetry {
                    level,
                    hypotheses: indices.clone(),
                    error: first.to_string(),
                });
                match parse_nli_answer(&client.complete_fresh(&messages)?, batch.len()) {
                    Ok(v) => Some(v),
                    Err(second) => {
                        out.diagnostics.push(Diagnostic::ParseFailure {
                            level,
                            hypotheses: indices.clone(),
                            error: second.to_string(),
                        });
                        None
                    }
                }
            }
        };
        for (k, item) in batch.iter().enumerate() {
            let (reason, judgment) = match &verdicts {
                Some(v) => (v[k].reason.clone(), v[k].mark.judgment()),
                None => (PARSE_FAILURE_REASON.to_string(), Judgment::NonHallucination),
            };
            out.records.push(DetectionRecord {
                hypothesis_index: item.hypothesis_index,
                level,
                hypothesis: item.text.clone(),
                entity: item.entity.clone(),
                reason: Some(reason),
                judgment,
            });
        }
    }
    Ok(out)
}

/// Judges every selected hypothesis against the premise; one record each.
pub fn detect_sentences(
    source: &SourceText,
    hyps: &[Hypothesis],
    client: &CompletionClient,
    opts: &JudgeOptions<'_>,
) -> Result<LevelOutcome, JudgeError> {
    let items: Vec<JudgeItem> = hyps
        .iter()
        .filter(|h| h.selected)
        .map(|h| JudgeItem {
            hypothesis_index: h.index,
            text: h.text.clone(),
            entity: None,
        })
        .collect();
    if items.is_empty() {
        return Ok(LevelOutcome::default());
    }
    judge(source, &items, DetectionLevel::Sentence, client, opts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::inference::template::DETECTION;
    use crate::inference::{CompletionProvider, RetryPolicy};
    use crate::model::{GenerationParams, Span};
    use proptest::prelude::*;
    use std::sync::atomic::{AtomicUsize, Ordering};
    use std::sync::{Arc, Mutex};

    fn hyp(i: usize, text: &str) -> Hypothesis {
        Hypothesis {
            index: i,
            sentence: i,
            response_span: Span::new(0, text.chars().count()),
            text: text.into(),
            selected: true,
            skip_reason: None,
        }
    }

    fn source() -> SourceText {
        SourceText::new("s", "The sky is blue.").unwrap()
    }

    fn client(p: impl CompletionProvider + 'static) -> CompletionClient {
        CompletionClient::new(Arc::new(p)).with_retry(RetryPolicy::immediate(1))
    }

    fn template() -> PromptTemplate {
        PromptTemplate::get(DETECTION).unwrap()
    }

    fn opts(t: &PromptTemplate, mode: DetectionMode) -> JudgeOptions<'_> {
        JudgeOptions {
            template: t,
            mode,
            max_prompt_tokens: 12_288,
        }
    }

    #[test]
    fn parses_minimal_and_appendix_items() {
        let v = parse_nli_answer("Answer:\n(0). X <reason>r</reason> [C]", 1).unwrap();
        assert_eq!(
            v,
            [ParsedVerdict {
                index: 0,
                echoed_hypothesis: "X".into(),
                reason: "r".into(),
                mark: Mark::C
            }]
        );
        let text = "(0). Oscar is presented every other two years. <reason> premise reference: \"They are presented annually\u{2026}\" It's contradiction. </reason> [I]";
        let v = parse_nli_answer(text, 1).unwrap();
        assert_eq!(v[0].index, 0);
        assert_eq!(v[0].mark, Mark::I);
        assert_eq!(
            v[0].echoed_hypothesis,
            "Oscar is presented every other two years."
        );
    }

    #[test]
    fn parse_error_classes() {
        let two = "Answer:\n(0). a <reason>r</reason> [C]\n(1). b <reason>r</reason> [I]";
        assert_eq!(
            parse_nli_answer(two, 3),
            Err(ParseError::CountMismatch {
                expected: 3,
                found: 2
            })
        );
        assert_eq!(
            parse_nli_answer("(0). a <reason>r</reason>", 1),
            Err(ParseError::MissingMark { item: 0 })
        );
        assert_eq!(
            parse_nli_answer("(0). a <reason>r [C]", 1),
            Err(ParseError::UnclosedReason { item: 0 })
        );
        assert_eq!(
            parse_nli_answer("(0). a [C]", 1),
            Err(ParseError::MissingReason { item: 0 })
        );
        assert_eq!(
            parse_nli_answer("(1). a <reason>r</reason> [C]", 1),
            Err(ParseError::IndexMismatch {
                position: 0,
                found: 1
            })
        );
        assert_eq!(
            parse_nli_answer("garbage", 1),
            Err(ParseError::CountMismatch {
                expected: 1,
                found: 0
            })
        );
    }

    #[test]
    fn mark_inside_reason_is_ignored() {
        let v = parse_nli_answer(
            "(0). an [ foreigner ] x <reason> tagged [ C ] word </reason> [I]",
            1,
        )
        .unwrap();
        assert_eq!(v[0].mark, Mark::I);
        assert_eq!(v[0].echoed_hypothesis, "an [ foreigner ] x");
    }

    #[test]
    fn prompt_numbering() {
        let t = template();
        let m = build_sentence_prompt(&t, &source(), &[hyp(0, "A.")], None).unwrap();
        assert_eq!(m[5].content.matches("(0).").count(), 1);
        assert!(!m[5].content.contains("(1)."));
        let hs = [hyp(0, "A."), hyp(1, "B."), hyp(2, "C.")];
        let m = build_sentence_prompt(&t, &source(), &hs, None).unwrap();
        assert!(m[5]
            .content
            .contains("Hypothesis:\n(0). A.\n(1). B.\n(2). C.\n"));
        assert!(matches!(
            build_sentence_prompt(&t, &source(), &[], None),
            Err(PromptError::EmptyBatch)
        ));
        assert!(matches!(
            build_sentence_prompt(&t, &source(), &hs, Some(100)),
            Err(PromptError::OverBudget { budget: 100, .. })
        ));
    }

    fn answer(marks: &[(Mark, &str)]) -> String {
        render_answer(
            &marks
                .iter()
                .enumerate()
                .map(|(i, (m, r))| ParsedVerdict {
                    index: i,
                    echoed_hypothesis: "h".into(),
                    reason: r.to_string(),
                    mark: *m,
                })
                .collect::<Vec<_>>(),
        )
    }

    #[test]
    fn verdicts_become_records() {
        let t = template();
        let reply = answer(&[(Mark::C, "ok"), (Mark::I, "premise reference: None")]);
        let c = client(move |_: &[Message], _: &GenerationParams| Ok(reply.clone()));
        let out = detect_sentences(
            &source(),
            &[hyp(0, "A."), hyp(1, "B.")],
            &c,
            &opts(&t, DetectionMode::Production),
        )
        .unwrap();
        assert_eq!(out.records.len(), 2);
        assert_eq!(out.records[0].judgment, Judgment::NonHallucination);
        assert_eq!(out.records[1].judgment, Judgment::Hallucination);
        assert_eq!(
            out.records[1].reason.as_deref(),
            Some("premise reference: None")
        );
        assert!(out.diagnostics.is_empty());
        assert_eq!(c.stats().provider_calls(), 1);
    }

    #[test]
    fn benchmark_mode_sends_one_at_a_time() {
        let t = template();
        let calls = AtomicUsize::new(0);
        let provider = move |m: &[Message], _: &GenerationParams| {
            calls.fetch_add(1, Ordering::SeqCst);
            assert!(!m[5].content.contains("(1)."));
            Ok(answer(&[(Mark::C, "ok")]))
        };
        let c = client(provider);
        let hs = [hyp(0, "A."), hyp(1, "B."), hyp(2, "C.")];
        let out =
            detect_sentences(&source(), &hs, &c, &opts(&t, DetectionMode::Benchmark)).unwrap();
        assert_eq!(out.records.len(), 3);
        assert_eq!(c.stats().provider_calls(), 3);
    }

    #[test]
    fn budget_splits_batches() {
        let t = template();
        let c = client(|m: &[Message], _: &GenerationParams| {
            let n = m[5].content.matches("). ").count();
            Ok(answer(&vec![(Mark::C, "ok"); n]))
        });
        let hs: Vec<Hypothesis> = (0..6).map(|i| hyp(i, &"word ".repeat(40))).collect();
        let one = build_sentence_prompt(&t, &source(), &hs[..1], None).unwrap();
        let budget = estimate_message_tokens(&one) + 120;
        let o = JudgeOptions {
            template: &t,
            mode: DetectionMode::Production,
            max_prompt_tokens: budget,
        };
        let out = detect_sentences(&source(), &hs, &c, &o).unwrap();
        let idx: Vec<usize> = out.records.iter().map(|r| r.hypothesis_index).collect();
        assert_eq!(idx, [0, 1, 2, 3, 4, 5]);
        assert!(c.stats().provider_calls() > 1 && c.stats().provider_calls() < 6);

        let tiny = JudgeOptions {
            max_prompt_tokens: 10,
            ..o
        };
        assert!(matches!(
            detect_sentences(&source(), &hs, &c, &tiny),
            Err(JudgeError::Prompt(PromptError::OverBudget { .. }))
        ));
    }

    #[test]
    fn garbage_twice_falls_back_conservatively() {
        let t = template();
        let c = client(|_: &[Message], _: &GenerationParams| Ok("I cannot comply".to_string()));
        let out = detect_sentences(
            &source(),
            &[hyp(0, "A.")],
            &c,
            &opts(&t, DetectionMode::Production),
        )
        .unwrap();
        assert_eq!(out.records[0].judgment, Judgment::NonHallucination);
        assert_eq!(out.records[0].reason.as_deref(), Some(PARSE_FAILURE_REASON));
        assert!(matches!(out.diagnostics[0], Diagnostic::ParseRetry { .. }));
        assert!(matches!(
            out.diagnostics[1],
            Diagnostic::ParseFailure { .. }
        ));
        assert_eq!(c.stats().provider_calls(), 2);
    }

    #[test]
    fn garbage_then_valid_recovers() {
        let t = template();
        let replies = Mutex::new(vec![answer(&[(Mark::I, "nope")]), "junk".to_string()]);
        let c = client(move |_: &[Message], _: &GenerationParams| {
            Ok(replies.lock().unwrap().pop().unwrap())
        });
        let out = detect_sentences(
            &source(),
            &[hyp(0, "A.")],
            &c,
            &opts(&t, DetectionMode::Production),
        )
        .unwrap();
        assert_eq!(out.records[0].judgment, Judgment::Hallucination);
        assert_eq!(out.diagnostics.len(), 1);
    }

    #[test]
    fn provider_errors_propagate() {
        let t = template();
        let c =
            client(|_: &[Message], _: &GenerationParams| Err(ProviderError::Refusal("x".into())));
        assert!(matches!(
            detect_sentences(
                &source(),
                &[hyp(0, "A.")],
                &c,
                &opts(&t, DetectionMode::Production)
            ),
            Err(JudgeError::Provider(_))
        ));
    }

    #[test]
    fn batch_parse_matches_single_parses() {
        let a = ParsedVerdict {
            index: 0,
            echoed_hypothesis: "h1".into(),
            reason: "r1".into(),
            mark: Mark::C,
        };
        let b = ParsedVerdict {
            index: 0,
            echoed_hypothesis: "h2".into(),
            reason: "r2".into(),
            mark: Mark::I,
        };
        let single_a = parse_nli_answer(&render_answer(std::slice::from_ref(&a)), 1).unwrap();
        let single_b = parse_nli_answer(&render_answer(std::slice::from_ref(&b)), 1).unwrap();
        let b1 = ParsedVerdict { index: 1, ..b };
        let batch = parse_nli_answer(&render_answer(&[a, b1]), 2).unwrap();
        assert_eq!(
            (
                batch[0].reason.as_str(),
                batch[0].mark,
                batch[1].reason.as_str(),
                batch[1].mark
            ),
            (
                single_a[0].reason.as_str(),
                single_a[0].mark,
                single_b[0].reason.as_str(),
                single_b[0].mark
            )
        );
    }

    proptest! {
        #[test]
        fn render_parse_round_trip(
            items in prop::collection::vec(
                ("[A-Za-z][A-Za-z ,.'\"\\[\\]]{0,30}[A-Za-z.]", "[A-Za-z][A-Za-z ,.:'\"]{0,40}[A-Za-z.\"]", any::<bool>()),
                1..6)
        ) {
            let verdicts: Vec<ParsedVerdict> = items
                .iter()
                .enumerate()
                .map(|(i, (h, r, c))| ParsedVerdict {
                    index: i,
                    echoed_hypothesis: h.clone(),
                    reason: r.clone(),
                    mark: if *c { Mark::C } else { Mark::I },
                })
                .collect();
            let parsed = parse_nli_answer(&render_answer(&verdicts), verdicts.len()).unwrap();
            prop_assert_eq!(parsed, verdicts);
        }
    }
}
