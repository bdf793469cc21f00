//! Split-and-select: segment a response into sentences and purge those that
//! carry no checkable content.

use std::collections::HashSet;
use std::path::Path;
use std::sync::LazyLock;

use regex::Regex;

use crate::model::{char_slice, Hypothesis, RawResponse, Span};

const DEFAULT_ABBREVIATIONS: &[&str] = &[
    "mr", "mrs", "ms", "dr", "prof", "sr", "jr", "st", "mt", "ft", "vs", "e.g", "i.e", "cf", "u.s",
    "u.k", "u.n", "u.s.a", "e.u", "inc", "ltd", "corp", "co", "dept", "approx", "est", "fig", "al",
    "gen", "gov", "sen", "rep", "lt", "col", "capt", "sgt", "rev", "hon", "jan", "feb", "mar",
    "apr", "jun", "jul", "aug", "sep", "sept", "oct", "nov", "dec", "a.m", "p.m",
];

const CLOSERS: &[char] = &['"', '\'', ')', ']', '}', '\u{201d}', '\u{2019}', '\u{bb}'];

/// Rule-based splitter. Sentences end at `.`, `!`, `?` (followed by
/// whitespace or end of text) and at every newline. A period ending a known
/// abbreviation or a single-letter initial does not end a sentence; a period
/// followed by a non-space (decimals, `U.S`, domains) never does.
#[derive(Debug, Clone)]
pub struct SentenceSplitter {
    abbreviations: HashSet<String>,
}

impl Default for SentenceSplitter {
    fn default() -> Self {
        Self::with_abbreviations(DEFAULT_ABBREVIATIONS.iter().copied())
    }
}

fn normalize_abbreviation(s: &str) -> String {
    s.trim().trim_end_matches('.').to_lowercase()
}

impl SentenceSplitter {
    pub fn with_abbreviations<I, S>(abbreviations: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let abbreviations = abbreviations
            .into_iter()
            .map(|a| normalize_abbreviation(a.as_ref()))
            .filter(|a| !a.is_empty())
            .collect();
        Self { abbreviations }
    }

    /// Reads one abbreviation per line; blank lines and `#` comments are ignored.
    pub fn from_file(path: impl AsRef<Path>) -> std::io::Result<Self> {
        let body = std::fs::read_to_string(path)?;
        Ok(Self::with_abbreviations(
            body.lines()
                .map(str::trim)
                .filter(|l| !l.is_empty() && !l.starts_with('#')),
        ))
    }

    pub fn abbreviations(&self) -> &HashSet<String> {
        &self.abbreviations
    }

    fn is_abbreviation(&self, word: &str) -> bool {
        let word = word.trim_start_matches(|c: char| !c.is_alphanumeric());
        if word.is_empty() {
            return false;
        }
        let mut chars = word.chars();
        if let (Some(c), None) = (chars.next(), chars.next()) {
            if c.is_uppercase() {
                return true;
            }
        }
        self.abbreviations.contains(&word.to_lowercase())
    }

    /// Char spans of each sentence, in order. Spans start and end on
    /// non-whitespace; everything between spans is whitespace.
    pub fn split(&self, text: &str) -> Vec<Span> {
        let chars: Vec<char> = text.chars().collect();
        let n = chars.len();
        let mut spans = Vec::new();
        let mut start: Option<usize> = None;

        let close = |spans: &mut Vec<Span>, start: &mut Option<usize>, end: usize| {
            if let Some(s) = start.take() {
                let mut e = end;
                while e > s && chars[e - 1].is_whitespace() {
                    e -= 1;
                }
                if e > s {
                    spans.push(Span::new(s, e));
                }
            }
        };

        let mut i = 0;
        while i < n {
            let c = chars[i];
            if c == '\n' {
                close(&mut spans, &mut start, i);
                i += 1;
                continue;
            }
            if start.is_none() && !c.is_whitespace() {
                start = Some(i);
            }
            if matches!(c, '.' | '!' | '?') {
                let mut j = i + 1;
                while j < n && matches!(chars[j], '.' | '!' | '?') {
                    j += 1;
                }
                while j < n && CLOSERS.contains(&chars[j]) {
                    j += 1;
                }
                let at_boundary = j == n || chars[j].is_whitespace();
                if at_boundary {
                    let single_period = c == '.' && j == i + 1;
                    let abbreviated = single_period && {
                        let mut w = i;
                        while w > 0 && !chars[w - 1].is_whitespace() {
                            w -= 1;
                        }
                        let word: String = chars[w..i].iter().collect();
                        self.is_abbreviation(&word)
                    };
                    if !abbreviated {
                        close(&mut spans, &mut start, j);
                    }
                }
                i = j;
                continue;
            }
            i += 1;
        }
        close(&mut spans, &mut start, n);
        spans
    }
}

/// Splits with the default abbreviation list.
pub fn split_sentences(text: &str) -> Vec<Span> {
    SentenceSplitter::default().split(text)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SelectorConfig {
    /// Sentences with fewer alphabetic tokens are purged.
    pub min_tokens: usize,
    /// Responses with at most this many sentences skip purging entirely.
    pub bypass_max_sentences: usize,
    pub purge_enabled: bool,
}

impl Default for SelectorConfig {
    fn default() -> Self {
        Self {
            min_tokens: 3,
            bypass_max_sentences: 1,
            purge_enabled: true,
        }
    }
}

pub const REASON_NO_ALPHABETIC: &str = "no alphabetic content";
pub const REASON_BOILERPLATE: &str = "boilerplate";
pub const REASON_TOKEN_FLOOR: &str = "below token floor";

static BOILERPLATE: LazyLock<Vec<Regex>> = LazyLock::new(|| {
    [
        // headers and lead-ins such as "Summary:" or "Here are the key points:"
        r"^[^.!?]{0,80}:$",
        r"(?i)^(i hope (this|that) helps|let me know if|feel free to)\b",
    ]
    .iter()
    .map(|p| Regex::new(p).expect("static pattern"))
    .collect()
});

/// Maximal runs of alphanumeric characters.
pub fn tokens(text: &str) -> impl Iterator<Item = &str> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
}

fn purge_reason(text: &str, cfg: &SelectorConfig) -> Option<&'static str> {
    if !text.chars().any(char::is_alphabetic) {
        return Some(REASON_NO_ALPHABETIC);
    }
    if BOILERPLATE.iter().any(|re| re.is_match(text.trim())) {
        return Some(REASON_BOILERPLATE);
    }
    let alphabetic_tokens = tokens(text)
        .filter(|t| t.chars().any(char::is_alphabetic))
        .count();
    if alphabetic_tokens < cfg.min_tokens {
        return Some(REASON_TOKEN_FLOOR);
    }
    None
}

/// Short responses are judged whole, without purging.
pub fn should_bypass_selection(response: &RawResponse, cfg: &SelectorConfig) -> bool {
    response.sentences.len() <= cfg.bypass_max_sentences
}

/// Turns every sentence into a [`Hypothesis`], in response order. Selected
/// hypotheses get indices `0..n`; purged ones follow with `n..`.
pub fn select_hypotheses(response: &RawResponse, cfg: &SelectorConfig) -> Vec<Hypothesis> {
    let purge = cfg.purge_enabled && !should_bypass_selection(response, cfg);
    let mut hyps: Vec<Hypothesis> = response
        .sentences
        .iter()
        .enumerate()
        .map(|(k, span)| {
            let text = char_slice(&response.text, *span)
                .unwrap_or_default()
                .to_string();
            let skip_reason = if purge {
                purge_reason(&text, cfg).map(str::to_string)
            } else {
                None
            };
            Hypothesis {
                index: 0,
                sentence: k,
                response_span: *span,
                selected: skip_reason.is_none(),
                skip_reason,
                text,
            }
        })
        .collect();

    let mut next = 0;
    for h in hyps.iter_mut().filter(|h| h.selected) {
        h.index = next;
        next += 1;
    }
    for h in hyps.iter_mut().filter(|h| !h.selected) {
        h.index = next;
        next += 1;
    }
    hyps
}
