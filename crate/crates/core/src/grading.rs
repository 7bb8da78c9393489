//! Response-level grading: answer normalization and matching, the
//! three-valued judge, answer extraction and the format reward.

use serde::{Deserialize, Serialize};
use unicode_normalization::char::is_combining_mark;
use unicode_normalization::UnicodeNormalization;

use crate::scalar::Scalar;
use crate::segment::{ANSWER_CLOSE, ANSWER_OPEN, THINK_CLOSE, THINK_OPEN};

const ARTICLES: [&str; 3] = ["a", "an", "the"];
const REFUSALS: [&str; 3] = ["", "i don't know", "i do not know"];

pub const MIN_THINK_CHARS: usize = 30;

fn fold_once(s: &str) -> String {
    s.nfkd().filter(|c| !is_combining_mark(*c)).collect::<String>().to_lowercase()
}

fn is_word_char(c: char) -> bool {
    c.is_alphanumeric() || c == '_'
}

/// NFKD with combining marks dropped, lowercase, stand-alone articles and
/// non-word punctuation turned into spaces, whitespace collapsed.
///
/// Folding is repeated until stable because lowercasing can produce
/// characters with a further decomposition (e.g. U+0130).
pub fn normalize(text: &str) -> String {
    let mut folded = fold_once(text);
    for _ in 0..4 {
        let next = fold_once(&folded);
        if next == folded {
            break;
        }
        folded = next;
    }
    let spaced: String = folded.chars().map(|c| if is_word_char(c) || c.is_whitespace() { c } else { ' ' }).collect();
    let words: Vec<&str> = spaced.split_whitespace().filter(|w| !ARTICLES.contains(w)).collect();
    words.join(" ")
}

/// Gold answer with its aliases.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "GoldRecord")]
pub struct GoldAnswers {
    pub primary: String,
    pub aliases: Vec<String>,
}

/// Accepted gold encodings: `{"answer": "a; b"}`, `{"answers": ["a", "b"]}`
/// or `{"primary": "a", "aliases": ["b"]}`.
#[derive(Debug, Deserialize)]
struct GoldRecord {
    primary: Option<String>,
    #[serde(default)]
    aliases: Vec<String>,
    answer: Option<String>,
    answers: Option<Vec<String>>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("gold record has no non-empty answer")]
pub struct EmptyGold;

impl TryFrom<GoldRecord> for GoldAnswers {
    type Error = EmptyGold;
    fn try_from(r: GoldRecord) -> Result<Self, EmptyGold> {
        let mut all: Vec<String> = Vec::new();
        all.extend(r.primary);
        all.extend(r.aliases);
        all.extend(r.answers.into_iter().flatten());
        if let Some(joined) = r.answer {
            all.extend(joined.split(';').map(str::to_owned));
        }
        GoldAnswers::from_list(all)
    }
}

impl GoldAnswers {
    pub fn new(primary: impl Into<String>) -> Self {
        GoldAnswers { primary: primary.into(), aliases: Vec::new() }
    }

    /// First non-empty entry is the primary; duplicates are dropped.
    pub fn from_list<S: AsRef<str>>(answers: impl IntoIterator<Item = S>) -> Result<Self, EmptyGold> {
        let mut seen: Vec<String> = Vec::new();
        for a in answers {
            let a = a.as_ref().trim();
            if !a.is_empty() && !seen.iter().any(|s| s == a) {
                seen.push(a.to_owned());
            }
        }
        let mut it = seen.into_iter();
        let primary = it.next().ok_or(EmptyGold)?;
        Ok(GoldAnswers { primary, aliases: it.collect() })
    }

    /// Training-time encoding: aliases joined by semicolons.
    pub fn from_semicolon(joined: &str) -> Result<Self, EmptyGold> {
        Self::from_list(joined.split(';'))
    }

    pub fn all(&self) -> impl Iterator<Item = &str> {
        std::iter::once(self.primary.as_str()).chain(self.aliases.iter().map(String::as_str))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Label {
    #[serde(rename = "GOOD")]
    Good,
    #[serde(rename = "BAD")]
    Bad,
    #[serde(rename = "NA")]
    Na,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct JudgeRewards<T> {
    pub good: T,
    pub bad: T,
    pub na: T,
}

impl<T: Scalar> Default for JudgeRewards<T> {
    fn default() -> Self {
        JudgeRewards { good: T::lit(2.0), bad: T::lit(-1.0), na: T::lit(-1.0) }
    }
}

impl<T: Scalar> JudgeRewards<T> {
    pub fn reward(&self, label: Label) -> T {
        match label {
            Label::Good => self.good,
            Label::Bad => self.bad,
            Label::Na => self.na,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JudgeVerdict<T> {
    pub label: Label,
    pub reward: T,
}

pub fn is_refusal(prediction: &str) -> bool {
    REFUSALS.contains(&prediction.trim().to_lowercase().as_str())
}

/// Equal or substring-related after normalization. Strings that normalize
/// to nothing never match.
pub fn answers_match(prediction: &str, gold: &str) -> bool {
    let (p, g) = (normalize(prediction), normalize(gold));
    !p.is_empty() && !g.is_empty() && (p.contains(&g) || g.contains(&p))
}

pub fn grade(prediction: &str, gold: &GoldAnswers) -> Label {
    if is_refusal(prediction) {
        Label::Na
    } else if gold.all().any(|g| answers_match(prediction, g)) {
        Label::Good
    } else {
        Label::Bad
    }
}

pub fn judge<T: Scalar>(prediction: &str, gold: &GoldAnswers, rewards: &JudgeRewards<T>) -> JudgeVerdict<T> {
    let label = grade(prediction, gold);
    JudgeVerdict { label, reward: rewards.reward(label) }
}

/// Text after the first `<answer>`, up to `</answer>` if present, trimmed.
/// Empty when there is no answer tag.
pub fn extract_answer(completion: &str) -> &str {
    let Some(open) = completion.find(ANSWER_OPEN) else {
        return "";
    };
    let rest = &completion[open + ANSWER_OPEN.len()..];
    let end = rest.find(ANSWER_CLOSE).unwrap_or(rest.len());
    rest[..end].trim()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FormatRule {
    MissingTags,
    ThinkTooShort,
    ThinkNoAlpha,
    ThinkStartsWithLt,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FormatRewards<T> {
    pub ok: T,
    pub fail: T,
}

impl<T: Scalar> Default for FormatRewards<T> {
    fn default() -> Self {
        FormatRewards { ok: T::one(), fail: -T::one() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FormatVerdict<T> {
    pub ok: bool,
    pub reward: T,
    pub violated_rule: Option<FormatRule>,
}

/// Content of the first `<think>…</think>` that is followed by `<answer>`.
pub fn think_content(completion: &str) -> Option<&str> {
    let open = completion.find(THINK_OPEN)? + THINK_OPEN.len();
    let close = open + completion[open..].find(THINK_CLOSE)?;
    completion[close + THINK_CLOSE.len()..].find(ANSWER_OPEN)?;
    Some(&completion[open..close])
}

/// First violated rule, checked in order: tag sequence, think length
/// (characters of the trimmed content), an alphabetic character, and no
/// leading `<`.
pub fn format_check(completion: &str) -> Option<FormatRule> {
    let Some(think) = think_content(completion) else {
        return Some(FormatRule::MissingTags);
    };
    let think = think.trim();
    if think.chars().count() < MIN_THINK_CHARS {
        Some(FormatRule::ThinkTooShort)
    } else if !think.chars().any(char::is_alphabetic) {
        Some(FormatRule::ThinkNoAlpha)
    } else if think.starts_with('<') {
        Some(FormatRule::ThinkStartsWithLt)
    } else {
        None
    }
}

pub fn format_reward<T: Scalar>(completion: &str, rewards: &FormatRewards<T>) -> FormatVerdict<T> {
    match format_check(completion) {
        None => FormatVerdict { ok: true, reward: rewards.ok, violated_rule: None },
        Some(rule) => FormatVerdict { ok: false, reward: rewards.fail, violated_rule: Some(rule) },
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normalization_examples() {
        assert_eq!(normalize("The Beatles!"), "beatles");
        assert_eq!(normalize("  Stanley   Cup "), "stanley cup");
        assert_eq!(normalize("Café-au-lait"), "cafe au lait");
        assert_eq!(normalize("the-an-a"), "");
        assert_eq!(normalize("İstanbul"), "istanbul");
        assert_eq!(normalize("ﬁnal ①"), "final 1");
    }

    #[test]
    fn gold_encodings() {
        let a: GoldAnswers = serde_json::from_str(r#"{"answer": "Paris; City of Light ;"}"#).unwrap();
        assert_eq!(a, GoldAnswers { primary: "Paris".into(), aliases: vec!["City of Light".into()] });
        let b: GoldAnswers = serde_json::from_str(r#"{"question": "q", "answers": ["Paris", "City of Light"]}"#).unwrap();
        assert_eq!(a, b);
        assert!(serde_json::from_str::<GoldAnswers>(r#"{"answer": " ; "}"#).is_err());
        let c: GoldAnswers = serde_json::from_str(&serde_json::to_string(&a).unwrap()).unwrap();
        assert_eq!(a, c);
    }

    #[test]
    fn judge_examples() {
        let r = JudgeRewards::<f64>::default();
        assert_eq!(judge("1975", &GoldAnswers::new("1975"), &r), JudgeVerdict { label: Label::Good, reward: 2.0 });
        assert_eq!(judge("I don't know", &GoldAnswers::new("1975"), &r), JudgeVerdict { label: Label::Na, reward: -1.0 });
        assert_eq!(judge("Michigan Wolverines", &GoldAnswers::new("Michigan"), &r).label, Label::Good);
        assert_eq!(judge("Ohio", &GoldAnswers::new("Michigan"), &r).label, Label::Bad);
        // article-only prediction normalizes to nothing and cannot match
        assert_eq!(judge("The", &GoldAnswers::new("The Who"), &r).label, Label::Bad);
    }

    #[test]
    fn answer_extraction() {
        assert_eq!(extract_answer("<answer>Paris</answer>"), "Paris");
        assert_eq!(extract_answer("<think>x</think><answer> Paris"), "Paris");
        assert_eq!(extract_answer("no tags at all"), "");
        assert_eq!(extract_answer("<answer>A</answer><answer>B</answer>"), "A");
    }

    #[test]
    fn format_examples() {
        let r = FormatRewards::<f64>::default();
        let think = "The capital of France is Paris, clearly.";
        let ok = format_reward(&format!("<think>{think}</think><answer>Paris</answer>"), &r);
        assert_eq!((ok.ok, ok.reward, ok.violated_rule), (true, 1.0, None));
        let short = format_reward("<think></think><answer>x</answer>", &r);
        assert_eq!((short.reward, short.violated_rule), (-1.0, Some(FormatRule::ThinkTooShort)));
        let smuggled = format_reward("<think><answer>Paris is the answer here for sure</think><answer>Paris", &r);
        assert_eq!(smuggled.violated_rule, Some(FormatRule::ThinkStartsWithLt));
        let digits = format_reward("<think>1234567890 1234567890 1234567890</think><answer>1", &r);
        assert_eq!(digits.violated_rule, Some(FormatRule::ThinkNoAlpha));
        assert_eq!(format_check("Paris"), Some(FormatRule::MissingTags));
        assert_eq!(format_check(&format!("<answer>x</answer><think>{think}</think>")), Some(FormatRule::MissingTags));
    }
}
