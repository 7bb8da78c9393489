//! Reduction of triplet entities to content-word conjunctions.

use std::collections::HashSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

/// Bundled closed-class list: articles, common prepositions, auxiliaries,
/// basic connectives and "it".
pub const DEFAULT_STOP_WORDS: &str = include_str!("../data/stopwords.txt");

#[derive(Debug, thiserror::Error)]
pub enum StopWordError {
    #[error("stop-word list must have exactly {expected} entries, found {found}")]
    Size { expected: usize, found: usize },
    #[error("stop word {0:?} is not lowercase")]
    NotLowercase(String),
    #[error("duplicate stop word {0:?}")]
    Duplicate(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StopWordList {
    words: Vec<String>,
    set: HashSet<String>,
}

impl Default for StopWordList {
    fn default() -> Self {
        Self::parse(DEFAULT_STOP_WORDS).expect("bundled stop-word list is valid")
    }
}

impl StopWordList {
    pub const SIZE: usize = 35;

    /// One lowercase word per line; blank lines are ignored.
    pub fn parse(text: &str) -> Result<Self, StopWordError> {
        let words: Vec<String> = text.lines().map(str::trim).filter(|l| !l.is_empty()).map(String::from).collect();
        if words.len() != Self::SIZE {
            return Err(StopWordError::Size { expected: Self::SIZE, found: words.len() });
        }
        let mut set = HashSet::new();
        for w in &words {
            if w.to_lowercase() != *w {
                return Err(StopWordError::NotLowercase(w.clone()));
            }
            if !set.insert(w.clone()) {
                return Err(StopWordError::Duplicate(w.clone()));
            }
        }
        Ok(StopWordList { words, set })
    }

    pub fn load(path: &Path) -> Result<Self, StopWordError> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| StopWordError::Io { path: path.display().to_string(), source })?;
        Self::parse(&text)
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    /// Case-insensitive membership, so sentence-initial "The" is a stop word.
    pub fn contains(&self, word: &str) -> bool {
        self.set.contains(word) || self.set.contains(&word.to_lowercase())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuerySource {
    HeadTail,
    HeadTailRelation,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WordQuery {
    pub words: Vec<String>,
    pub source: QuerySource,
}

/// Minimum number of distinct content words for a query to be issued.
pub const MIN_QUERY_WORDS: usize = 2;

fn surface_words(entity: &str) -> impl Iterator<Item = &str> {
    entity.split_whitespace().map(|w| w.trim_matches(|c: char| !c.is_alphanumeric())).filter(|w| !w.is_empty())
}

fn is_capitalized(word: &str) -> bool {
    word.chars().next().is_some_and(char::is_uppercase)
}

/// Capitalized non-stop words if there are any, otherwise non-stop words
/// longer than two characters.
pub fn content_words<'a>(entity: &'a str, stops: &StopWordList) -> Vec<&'a str> {
    let candidates: Vec<&str> = surface_words(entity).filter(|w| !stops.contains(w)).collect();
    let capitalized: Vec<&str> = candidates.iter().copied().filter(|w| is_capitalized(w)).collect();
    if !capitalized.is_empty() {
        capitalized
    } else {
        candidates.into_iter().filter(|w| w.chars().count() > 2).collect()
    }
}

fn push_unique(words: &mut Vec<String>, new: &[&str]) -> bool {
    let mut added = false;
    for w in new {
        if !words.iter().any(|x| x == w) {
            words.push((*w).to_owned());
            added = true;
        }
    }
    added
}

/// Head words then tail words, deduplicated in first-occurrence order;
/// `None` when fewer than two words survive.
pub fn build_entity_query(head: &str, tail: &str, stops: &StopWordList) -> Option<WordQuery> {
    let mut words = Vec::new();
    push_unique(&mut words, &content_words(head, stops));
    push_unique(&mut words, &content_words(tail, stops));
    (words.len() >= MIN_QUERY_WORDS).then_some(WordQuery { words, source: QuerySource::HeadTail })
}

/// Result of appending relation words to an entity query.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RelationQuery {
    pub query: WordQuery,
    /// False when the relation added no new word; the query is then the
    /// base query unchanged.
    pub contributed: bool,
}

pub fn build_relation_query(base: &WordQuery, relation: &str, stops: &StopWordList) -> RelationQuery {
    let mut words = base.words.clone();
    if push_unique(&mut words, &content_words(relation, stops)) {
        RelationQuery { query: WordQuery { words, source: QuerySource::HeadTailRelation }, contributed: true }
    } else {
        RelationQuery { query: base.clone(), contributed: false }
    }
}
