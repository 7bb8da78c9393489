//! Word-level tokenizer and the text-facing wrapper around [`CorpusIndex`].

use std::borrow::Cow;
use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};

use crate::index::{build_index, CnfCount, CnfQuery, Corpus, CorpusIndex, IndexError, IndexParams, TokenWidth, VocabMeta};

/// Splits on whitespace and punctuation; a token is a maximal run of
/// alphanumeric characters. Case is preserved unless `lowercase` is set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct WordTokenizer {
    pub lowercase: bool,
}

impl WordTokenizer {
    pub const CASED_ID: &'static str = "word-v1";
    pub const LOWER_ID: &'static str = "word-v1-lower";

    pub fn id(&self) -> &'static str {
        if self.lowercase {
            Self::LOWER_ID
        } else {
            Self::CASED_ID
        }
    }

    pub fn from_id(id: &str) -> Option<Self> {
        match id {
            Self::CASED_ID => Some(WordTokenizer { lowercase: false }),
            Self::LOWER_ID => Some(WordTokenizer { lowercase: true }),
            _ => None,
        }
    }

    pub fn words<'a>(&self, text: &'a str) -> impl Iterator<Item = Cow<'a, str>> + 'a {
        let lowercase = self.lowercase;
        text.split(|c: char| !c.is_alphanumeric()).filter(|w| !w.is_empty()).map(move |w| {
            if lowercase && w.chars().any(char::is_uppercase) {
                Cow::Owned(w.to_lowercase())
            } else {
                Cow::Borrowed(w)
            }
        })
    }
}

/// Bidirectional word/id table; ids are assigned in first-seen order.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Vocab {
    words: Vec<String>,
    ids: HashMap<String, u32>,
}

impl Vocab {
    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn get(&self, word: &str) -> Option<u32> {
        self.ids.get(word).copied()
    }

    pub fn word(&self, id: u32) -> Option<&str> {
        self.words.get(id as usize).map(String::as_str)
    }

    pub fn get_or_insert(&mut self, word: &str) -> u32 {
        if let Some(&id) = self.ids.get(word) {
            return id;
        }
        let id = self.words.len() as u32;
        self.words.push(word.to_owned());
        self.ids.insert(word.to_owned(), id);
        id
    }

    /// One word per line, line number = id.
    pub fn save(&self, path: &Path) -> Result<(), IndexError> {
        let mut out = String::with_capacity(self.words.iter().map(|w| w.len() + 1).sum());
        for w in &self.words {
            out.push_str(w);
            out.push('\n');
        }
        fs::write(path, out).map_err(|e| IndexError::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self, IndexError> {
        let text = fs::read_to_string(path).map_err(|e| IndexError::io(path, e))?;
        let mut vocab = Vocab::default();
        for line in text.lines() {
            if vocab.ids.contains_key(line) {
                return Err(IndexError::Corrupt("duplicate word in vocabulary file"));
            }
            vocab.get_or_insert(line);
        }
        Ok(vocab)
    }
}

/// Path of the vocabulary file stored next to an index file.
pub fn vocab_path(index_path: &Path) -> PathBuf {
    let mut s = index_path.as_os_str().to_owned();
    s.push(".vocab");
    PathBuf::from(s)
}

/// A [`CorpusIndex`] together with the tokenizer and vocabulary that
/// produced it, so queries can be posed as text.
#[derive(Debug)]
pub struct TextIndex {
    index: CorpusIndex,
    vocab: Vocab,
    tokenizer: WordTokenizer,
}

impl TextIndex {
    /// Tokenizes and indexes documents. Documents without any token are skipped.
    pub fn build<'a>(
        documents: impl IntoIterator<Item = &'a str>,
        tokenizer: WordTokenizer,
        max_clause_freq: u64,
        max_clause_dist: u64,
    ) -> Result<Self, IndexError> {
        let mut vocab = Vocab::default();
        let mut tokens = Vec::new();
        let mut bounds = Vec::new();
        for doc in documents {
            let start = tokens.len();
            tokens.extend(tokenizer.words(doc).map(|w| vocab.get_or_insert(&w)));
            if tokens.len() > start {
                bounds.push(start);
            }
        }
        let vocab_size = vocab.len() as u32;
        let meta = VocabMeta { tokenizer: tokenizer.id().to_owned(), vocab_size };
        let corpus = Corpus::new(tokens, bounds, meta)?;
        let params = IndexParams { max_clause_freq, max_clause_dist, token_width: TokenWidth::for_vocab(vocab_size) };
        let index = build_index(&corpus, params)?;
        Ok(TextIndex { index, vocab, tokenizer })
    }

    pub fn from_parts(index: CorpusIndex, vocab: Vocab) -> Result<Self, IndexError> {
        let meta = index.vocab_meta().ok_or(IndexError::Corrupt("unreadable vocab_meta"))?;
        let tokenizer = WordTokenizer::from_id(&meta.tokenizer).ok_or(IndexError::Corrupt("unknown tokenizer id"))?;
        if meta.vocab_size as usize != vocab.len() {
            return Err(IndexError::Corrupt("vocabulary file does not match index vocab_meta"));
        }
        Ok(TextIndex { index, vocab, tokenizer })
    }

    /// Loads `path` and its `.vocab` companion.
    pub fn load(path: &Path) -> Result<Self, IndexError> {
        let index = CorpusIndex::load(path)?;
        let vocab = Vocab::load(&vocab_path(path))?;
        Self::from_parts(index, vocab)
    }

    pub fn save(&self, path: &Path) -> Result<(), IndexError> {
        self.index.save(path)?;
        self.vocab.save(&vocab_path(path))
    }

    pub fn index(&self) -> &CorpusIndex {
        &self.index
    }

    pub fn vocab(&self) -> &Vocab {
        &self.vocab
    }

    pub fn tokenizer(&self) -> WordTokenizer {
        self.tokenizer
    }

    /// Token ids of a phrase; `None` if it is empty or contains an unknown word.
    pub fn encode(&self, phrase: &str) -> Option<Vec<u32>> {
        let ids: Option<Vec<u32>> = self.tokenizer.words(phrase).map(|w| self.vocab.get(&w)).collect();
        ids.filter(|v| !v.is_empty())
    }

    /// Co-occurrence count of text clauses. A clause that tokenizes to
    /// nothing or contains an unknown word has zero occurrences.
    pub fn count_phrases<S: AsRef<str>>(&self, phrases: &[S], window: u64) -> Result<CnfCount, IndexError> {
        if phrases.is_empty() {
            return Err(IndexError::Query("query has no clauses".into()));
        }
        let mut clauses = Vec::with_capacity(phrases.len());
        for (i, p) in phrases.iter().enumerate() {
            match self.encode(p.as_ref()) {
                Some(ids) => clauses.push(ids),
                None => {
                    if window > self.index.params().max_clause_dist {
                        return Err(IndexError::WindowTooLarge { window, max: self.index.params().max_clause_dist });
                    }
                    return Ok(CnfCount { count: 0, truncated: false, anchor_clause: i });
                }
            }
        }
        self.index.cnf_count(&CnfQuery::new(clauses, window)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn splits_on_punctuation() {
        let t = WordTokenizer::default();
        let words: Vec<_> = t.words("Men's Division-I, (1989) Café!").collect();
        assert_eq!(words, ["Men", "s", "Division", "I", "1989", "Café"]);
        let lower: Vec<_> = WordTokenizer { lowercase: true }.words("Stanley CUP").collect();
        assert_eq!(lower, ["stanley", "cup"]);
    }

    #[test]
    fn text_index_counts_phrases() {
        let idx = TextIndex::build(
            ["The Stanley Cup went to the Philadelphia Flyers.", "", "Stanley Cup again"],
            WordTokenizer::default(),
            100,
            50,
        )
        .unwrap();
        assert_eq!(idx.index().num_docs(), 2);
        assert_eq!(idx.count_phrases(&["Stanley Cup"], 10).unwrap().count, 2);
        assert_eq!(idx.count_phrases(&["Stanley", "Flyers"], 10).unwrap().count, 1);
        assert_eq!(idx.count_phrases(&["Stanley", "Hockey"], 10).unwrap().count, 0);
        // case sensitive by default
        assert_eq!(idx.count_phrases(&["stanley"], 10).unwrap().count, 0);
    }

    #[test]
    fn save_load_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.cvix");
        let idx = TextIndex::build(["a b c", "d a"], WordTokenizer { lowercase: true }, 10, 10).unwrap();
        idx.save(&path).unwrap();
        let back = TextIndex::load(&path).unwrap();
        assert_eq!(back.tokenizer(), idx.tokenizer());
        assert_eq!(back.vocab(), idx.vocab());
        assert_eq!(back.count_phrases(&["A", "D"], 3).unwrap(), idx.count_phrases(&["a", "d"], 3).unwrap());
    }
}
