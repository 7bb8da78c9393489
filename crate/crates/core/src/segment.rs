//! Think/answer block extraction, sentence splitting and the token-to-sentence
//! alignment.
//!
//! All character offsets are Unicode scalar (code point) indices into the
//! original completion text, end-exclusive.

use serde::{Deserialize, Serialize};

pub const THINK_OPEN: &str = "<think>";
pub const THINK_CLOSE: &str = "</think>";
pub const ANSWER_OPEN: &str = "<answer>";
pub const ANSWER_CLOSE: &str = "</answer>";

pub const DEFAULT_FALLBACK_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Block {
    Think,
    Answer,
}

/// Content region of a tagged block, excluding the tags themselves.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockSpan {
    pub block: Block,
    pub start_char: usize,
    pub end_char: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SentenceSpan {
    /// 1-based, continuous across blocks.
    pub index: usize,
    pub start_char: usize,
    pub end_char: usize,
    pub block: Block,
}

impl SentenceSpan {
    pub fn text<'a>(&self, source: &'a str) -> &'a str {
        char_slice(source, self.start_char, self.end_char)
    }
}

/// Substring by code-point offsets; out-of-range offsets are clamped.
pub fn char_slice(s: &str, start: usize, end: usize) -> &str {
    let byte = |c: usize| s.char_indices().nth(c).map_or(s.len(), |(b, _)| b);
    let (b0, b1) = (byte(start), byte(end));
    &s[b0..b1.max(b0)]
}

fn find_from(chars: &[char], pat: &str, from: usize) -> Option<usize> {
    let pat: Vec<char> = pat.chars().collect();
    if from > chars.len() || pat.len() > chars.len() {
        return None;
    }
    (from..=chars.len() - pat.len()).find(|&i| chars[i..i + pat.len()] == pat[..])
}

/// Locates the think and answer blocks.
///
/// The think block runs to `</think>`, or when unclosed to the next
/// `<answer>`, or to the end of the text. The answer block is opened by the
/// first `<answer>` after the think block and may be unclosed. Text with no
/// tag at all is a single answer block.
pub fn find_blocks(text: &str) -> Vec<BlockSpan> {
    let chars: Vec<char> = text.chars().collect();
    let n = chars.len();
    let len = |t: &str| t.chars().count();
    let mut blocks = Vec::new();
    let mut cursor = 0;
    let think = find_from(&chars, THINK_OPEN, 0);
    let answer_any = find_from(&chars, ANSWER_OPEN, 0);
    if think.is_none() && answer_any.is_none() {
        return vec![BlockSpan { block: Block::Answer, start_char: 0, end_char: n }];
    }
    if let Some(t) = think {
        // an answer tag that precedes the think tag does not close it
        let start = t + len(THINK_OPEN);
        let end = find_from(&chars, THINK_CLOSE, start)
            .or_else(|| find_from(&chars, ANSWER_OPEN, start))
            .unwrap_or(n);
        blocks.push(BlockSpan { block: Block::Think, start_char: start, end_char: end });
        cursor = if chars[end..].starts_with(&THINK_CLOSE.chars().collect::<Vec<_>>()) {
            end + len(THINK_CLOSE)
        } else {
            end
        };
    }
    if let Some(a) = find_from(&chars, ANSWER_OPEN, cursor) {
        let start = a + len(ANSWER_OPEN);
        let end = find_from(&chars, ANSWER_CLOSE, start).unwrap_or(n);
        blocks.push(BlockSpan { block: Block::Answer, start_char: start, end_char: end });
    }
    blocks
}

fn is_terminal(c: char) -> bool {
    matches!(c, '.' | '!' | '?')
}

/// Splits every block at runs of `.`, `!`, `?` followed by whitespace or the
/// end of the block. Abbreviations are not special-cased.
pub fn split_sentences(text: &str) -> Vec<SentenceSpan> {
    let chars: Vec<char> = text.chars().collect();
    let mut out = Vec::new();
    for b in find_blocks(text) {
        let mut piece_start = b.start_char;
        let mut i = b.start_char;
        while i < b.end_char {
            if is_terminal(chars[i]) {
                let mut j = i;
                while j < b.end_char && is_terminal(chars[j]) {
                    j += 1;
                }
                if j == b.end_char || chars[j].is_whitespace() {
                    push_trimmed(&chars, piece_start, j, b.block, &mut out);
                    piece_start = j;
                }
                i = j;
            } else {
                i += 1;
            }
        }
        push_trimmed(&chars, piece_start, b.end_char, b.block, &mut out);
    }
    out
}

fn push_trimmed(chars: &[char], mut start: usize, mut end: usize, block: Block, out: &mut Vec<SentenceSpan>) {
    while start < end && chars[start].is_whitespace() {
        start += 1;
    }
    while end > start && chars[end - 1].is_whitespace() {
        end -= 1;
    }
    if start < end {
        out.push(SentenceSpan { index: out.len() + 1, start_char: start, end_char: end, block });
    }
}

/// A policy completion with its tokenization as character spans.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Completion {
    pub text: String,
    pub token_spans: Vec<(usize, usize)>,
    /// `true` for completion tokens, `false` for padding.
    pub mask: Vec<bool>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum CompletionError {
    #[error("mask has {mask} entries but there are {spans} token spans")]
    MaskLength { spans: usize, mask: usize },
    #[error("token {token} has span ({start}, {end}) outside text of {len} characters or reversed")]
    BadSpan { token: usize, start: usize, end: usize, len: usize },
    #[error("token {token} overlaps or precedes token {}", token - 1)]
    Unordered { token: usize },
}

impl Completion {
    /// Every token is a completion token.
    pub fn unpadded(text: impl Into<String>, token_spans: Vec<(usize, usize)>) -> Self {
        let mask = vec![true; token_spans.len()];
        Completion { text: text.into(), token_spans, mask }
    }

    pub fn validate(&self) -> Result<(), CompletionError> {
        if self.mask.len() != self.token_spans.len() {
            return Err(CompletionError::MaskLength { spans: self.token_spans.len(), mask: self.mask.len() });
        }
        let len = self.text.chars().count();
        let mut prev_end = 0;
        for (t, &(start, end)) in self.token_spans.iter().enumerate() {
            if start > end || end > len {
                return Err(CompletionError::BadSpan { token: t, start, end, len });
            }
            if t > 0 && start < prev_end {
                return Err(CompletionError::Unordered { token: t });
            }
            prev_end = end;
        }
        Ok(())
    }

    pub fn masked_count(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Alignment {
    /// Sentence index per token, 0 for tags, whitespace and padding.
    pub sigma: Vec<usize>,
    /// Masked tokens whose midpoint lies inside a block's content region.
    pub eligible: usize,
    /// Eligible tokens assigned to a sentence.
    pub aligned: usize,
    pub rate: f64,
    pub fallback: bool,
}

fn contains(start: usize, end: usize, point: usize) -> bool {
    start <= point && point <= end
}

/// Assigns each masked token to the sentence whose span contains its
/// midpoint `floor((start + end) / 2)`. Span ends are inclusive for this
/// test, so a midpoint exactly on a sentence's end goes to that sentence.
///
/// The rate is `aligned / eligible`. A token is eligible when its midpoint
/// is a character of some block's content, so tokens sitting on tags or
/// outside every block are not. No eligible token gives rate 0 and fallback.
pub fn align_tokens(completion: &Completion, sentences: &[SentenceSpan], fallback_threshold: f64) -> Alignment {
    let blocks = find_blocks(&completion.text);
    let mut sigma = vec![0; completion.token_spans.len()];
    let (mut eligible, mut aligned) = (0, 0);
    for (t, &(start, end)) in completion.token_spans.iter().enumerate() {
        if !completion.mask.get(t).copied().unwrap_or(false) {
            continue;
        }
        let mid = (start + end) / 2;
        if !blocks.iter().any(|b| (b.start_char..b.end_char).contains(&mid)) {
            continue;
        }
        eligible += 1;
        let k = sentences.partition_point(|s| s.start_char <= mid);
        if k > 0 && contains(sentences[k - 1].start_char, sentences[k - 1].end_char, mid) {
            sigma[t] = sentences[k - 1].index;
            aligned += 1;
        }
    }
    let rate = if eligible == 0 { 0.0 } else { aligned as f64 / eligible as f64 };
    let fallback = eligible == 0 || sentences.is_empty() || rate < fallback_threshold;
    Alignment { sigma, eligible, aligned, rate, fallback }
}
