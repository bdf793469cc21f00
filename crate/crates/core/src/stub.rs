//! A rule-driven completion provider that speaks the detection and
//! rewrite prompt formats without a model. Used by the examples and tests,
//! and handy for dry runs of a pipeline configuration.

use std::collections::BTreeSet;
use std::sync::{Arc, LazyLock};

use regex::Regex;

use crate::inference::{CompletionProvider, Message, ProviderError};
use crate::model::{char_slice, GenerationParams, Span};
use crate::selector::SentenceSplitter;
use crate::sentence::{render_answer, Mark, ParsedVerdict};

static NUMBERED_HYPOTHESIS: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?m)^\((\d+)\)\. (.*)$").expect("static pattern"));
static NUMBERED_INSTRUCTION: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?m)^\d+\. (.*)$").expect("static pattern"));
static TAGGED: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"\[ (.+?) \]").expect("static pattern"));

/// The parts of a detection request the stub needs.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct JudgeRequest {
    pub premise: String,
    pub hypotheses: Vec<String>,
}

/// The parts of a rewrite request the stub needs.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RewriteRequest {
    pub document: String,
    pub claim: String,
    pub flagged: Vec<String>,
}

fn between<'a>(text: &'a str, start: &str, end: &str) -> Option<&'a str> {
    let from = text.find(start)? + start.len();
    let to = text[from..].rfind(end)? + from;
    Some(&text[from..to])
}

pub fn parse_judge_request(messages: &[Message]) -> Option<JudgeRequest> {
    let last = &messages.last()?.content;
    let premise = between(last, "Premise:\n", "\n\nHypothesis:\n")?;
    let block = between(last, "\n\nHypothesis:\n", "\n\nBegin your answer")?;
    let hypotheses = NUMBERED_HYPOTHESIS
        .captures_iter(block)
        .map(|c| c[2].to_string())
        .collect();
    Some(JudgeRequest {
        premise: premise.to_string(),
        hypotheses,
    })
}

pub fn parse_rewrite_request(messages: &[Message]) -> Option<RewriteRequest> {
    if !messages
        .first()?
        .content
        .starts_with("You are a proof-reading assistant")
    {
        return None;
    }
    let last = &messages.last()?.content;
    let mut document = between(last, "DOCUMENT:\n", "\n\nEnd DOCUMENT.")?;
    document = document.strip_prefix("Hypothesis:\n").unwrap_or(document);
    let claim = between(last, "CLAIM:\n", "\nEnd CLAIM.")?;
    let instructions = between(last, "instructions to the CLAIM:\n", "\n\nDirectly rewrite")?;
    let flagged = NUMBERED_INSTRUCTION
        .captures_iter(instructions)
        .map(|c| c[1].trim().to_string())
        .collect();
    Some(RewriteRequest {
        document: document.to_string(),
        claim: claim.to_string(),
        flagged,
    })
}

/// Removes each flagged sentence together with the whitespace after it.
pub fn drop_sentences(claim: &str, flagged: &[String], splitter: &SentenceSplitter) -> String {
    let spans = splitter.split(claim);
    let total = claim.chars().count();
    let mut out = String::new();
    let mut pos = 0;
    for (k, span) in spans.iter().enumerate() {
        let sentence = char_slice(claim, *span).unwrap_or_default().trim();
        let next = spans.get(k + 1).map_or(total, |s| s.start);
        if flagged.iter().any(|f| f == sentence) {
            out.push_str(char_slice(claim, Span::new(pos, span.start)).unwrap_or_default());
            pos = next;
        }
    }
    out.push_str(char_slice(claim, Span::new(pos, total)).unwrap_or_default());
    out.trim().to_string()
}

fn words(text: &str) -> BTreeSet<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

/// `[C]` when every word of the tagged span (or of the whole hypothesis if
/// nothing is tagged) occurs in the premise.
pub fn lexical_verdict(premise: &str, hypothesis: &str) -> Mark {
    let known = words(premise);
    let focus: Vec<&str> = TAGGED
        .captures_iter(hypothesis)
        .map(|c| c.get(1).unwrap().as_str())
        .collect();
    let needed = if focus.is_empty() {
        words(hypothesis)
    } else {
        words(&focus.join(" "))
    };
    if needed.is_subset(&known) {
        Mark::C
    } else {
        Mark::I
    }
}

/// Reason text the stub attaches to a verdict.
pub fn stub_reason(mark: Mark, hypothesis: &str) -> String {
    match mark {
        Mark::C => format!("premise reference: supports \"{hypothesis}\""),
        Mark::I => format!("premise reference: None. Nothing supports \"{hypothesis}\""),
    }
}

type VerdictFn = dyn Fn(&str, &str) -> Mark + Send + Sync;
type RewriteFn = dyn Fn(&RewriteRequest) -> String + Send + Sync;

#[derive(Clone)]
pub struct StubJudge {
    verdict: Arc<VerdictFn>,
    rewrite: Arc<RewriteFn>,
}

impl StubJudge {
    /// `verdict(premise, hypothesis)` decides each mark. Rewrites drop the
    /// flagged sentences.
    pub fn new(verdict: impl Fn(&str, &str) -> Mark + Send + Sync + 'static) -> Self {
        let splitter = SentenceSplitter::default();
        Self {
            verdict: Arc::new(verdict),
            rewrite: Arc::new(move |r: &RewriteRequest| {
                drop_sentences(&r.claim, &r.flagged, &splitter)
            }),
        }
    }

    pub fn lexical() -> Self {
        Self::new(lexical_verdict)
    }

    pub fn with_rewrite(
        mut self,
        rewrite: impl Fn(&RewriteRequest) -> String + Send + Sync + 'static,
    ) -> Self {
        self.rewrite = Arc::new(rewrite);
        self
    }
}

impl CompletionProvider for StubJudge {
    fn complete(
        &self,
        messages: &[Message],
        _params: &GenerationParams,
    ) -> Result<String, ProviderError> {
        if let Some(req) = parse_rewrite_request(messages) {
            return Ok(format!("Answer:\n{}", (self.rewrite)(&req)));
        }
        let req = parse_judge_request(messages).ok_or_else(|| {
            ProviderError::Malformed("stub: not a detection or rewrite prompt".into())
        })?;
        let verdicts: Vec<ParsedVerdict> = req
            .hypotheses
            .iter()
            .enumerate()
            .map(|(index, h)| {
                let mark = (self.verdict)(&req.premise, h);
                ParsedVerdict {
                    index,
                    echoed_hypothesis: h.clone(),
                    reason: stub_reason(mark, h),
                    mark,
                }
            })
            .collect();
        Ok(render_answer(&verdicts))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::inference::template::{bindings, PromptTemplate, DETECTION, MITIGATION};
    use crate::sentence::parse_nli_answer;

    #[test]
    fn answers_detection_prompts() {
        let t = PromptTemplate::get(DETECTION).unwrap();
        let m = t
            .render(&bindings([
                ("Source Text", "The tower is in Paris."),
                (
                    "Hypothesis",
                    "(0). The tower is in Paris.\n(1). The tower is in Rome.",
                ),
            ]))
            .unwrap();
        let req = parse_judge_request(&m).unwrap();
        assert_eq!(req.premise, "The tower is in Paris.");
        assert_eq!(req.hypotheses.len(), 2);
        let reply = StubJudge::lexical()
            .complete(&m, &GenerationParams::default())
            .unwrap();
        let marks: Vec<_> = parse_nli_answer(&reply, 2)
            .unwrap()
            .iter()
            .map(|v| v.mark)
            .collect();
        assert_eq!(marks, [Mark::C, Mark::I]);
    }

    #[test]
    fn answers_rewrite_prompts() {
        let t = PromptTemplate::get(MITIGATION).unwrap();
        let m = t
            .render(&bindings([
                ("Source Text", "Doc."),
                (
                    "Raw Response",
                    "Keep this one. Drop this one. Keep the last.",
                ),
                ("Rewrite Instructions", "1. Drop this one.\n- reason: r"),
            ]))
            .unwrap();
        let req = parse_rewrite_request(&m).unwrap();
        assert_eq!(req.document, "Doc.");
        assert_eq!(req.flagged, ["Drop this one."]);
        let reply = StubJudge::lexical()
            .complete(&m, &GenerationParams::default())
            .unwrap();
        assert_eq!(reply, "Answer:\nKeep this one. Keep the last.");
    }

    #[test]
    fn tagged_focus() {
        assert_eq!(
            lexical_verdict("Ann lives in Oslo.", "Ann lives in [ Oslo ] now."),
            Mark::C
        );
        assert_eq!(
            lexical_verdict("Ann lives in Oslo.", "Ann lives in [ Bergen ]."),
            Mark::I
        );
        assert_eq!(
            lexical_verdict("Ann lives in Oslo.", "Ann lives in Oslo."),
            Mark::C
        );
    }

    #[test]
    fn drop_keeps_layout() {
        let s = SentenceSplitter::default();
        assert_eq!(
            drop_sentences(
                "A one here.\nB two here.\nC three.",
                &["B two here.".into()],
                &s
            ),
            "A one here.\nC three."
        );
        assert_eq!(drop_sentences("Only one.", &["Only one.".into()], &s), "");
    }

    #[test]
    fn rejects_other_prompts() {
        let m = [Message::new(crate::inference::Role::User, "hello")];
        assert!(StubJudge::lexical()
            .complete(&m, &GenerationParams::default())
            .is_err());
    }
}
