//! Immutable suffix-array index over a token corpus.
//!
//! Answers exact phrase counts and bounded-window conjunctive (CNF)
//! co-occurrence counts. A co-occurrence is counted per position of the
//! anchor clause (the rarest clause), and requires every other clause to
//! start within `window` tokens of it inside the same document.

mod cnf;
mod format;
mod suffix;

use std::cmp::Ordering;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

pub use format::{FORMAT_VERSION, MAGIC};
pub use suffix::suffix_array;

use format::{Backing, Layout};

pub const DEFAULT_MAX_CLAUSE_FREQ: u64 = 500_000;
pub const DEFAULT_MAX_CLAUSE_DIST: u64 = 1_000;

#[derive(Debug, thiserror::Error)]
pub enum IndexError {
    #[error("corpus is empty")]
    EmptyCorpus,
    #[error("invalid document bounds: {0}")]
    DocBounds(String),
    #[error("token id {token} at position {position} exceeds vocabulary size {vocab_size}")]
    TokenOutOfVocab { position: usize, token: u32, vocab_size: u32 },
    #[error("token id {token} at position {position} does not fit in {width} bits")]
    TokenOverflow { position: usize, token: u32, width: u8 },
    #[error("invalid index parameters: {0}")]
    Params(String),
    #[error("invalid query: {0}")]
    Query(String),
    #[error("window {window} exceeds max_clause_dist {max}")]
    WindowTooLarge { window: u64, max: u64 },
    #[error("not an index file (bad magic)")]
    BadMagic,
    #[error("index format version {found} is not supported (expected {expected})")]
    VersionMismatch { found: u32, expected: u32 },
    #[error("index header checksum mismatch")]
    HeaderChecksum,
    #[error("index data checksum mismatch")]
    DataChecksum,
    #[error("index file truncated: expected {expected} bytes, found {found}")]
    Truncated { expected: u64, found: u64 },
    #[error("corrupt index: {0}")]
    Corrupt(&'static str),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl IndexError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        IndexError::Io { path: path.to_owned(), source }
    }
}

/// Bits per stored token id.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TokenWidth {
    U16,
    U32,
}

impl TokenWidth {
    pub fn bits(self) -> u8 {
        match self {
            TokenWidth::U16 => 16,
            TokenWidth::U32 => 32,
        }
    }

    pub fn bytes(self) -> usize {
        self.bits() as usize / 8
    }

    pub fn from_bits(bits: u8) -> Option<Self> {
        match bits {
            16 => Some(TokenWidth::U16),
            32 => Some(TokenWidth::U32),
            _ => None,
        }
    }

    /// Narrowest width that holds every id below `vocab_size`.
    pub fn for_vocab(vocab_size: u32) -> Self {
        if vocab_size <= u16::MAX as u32 + 1 {
            TokenWidth::U16
        } else {
            TokenWidth::U32
        }
    }

    fn max_token(self) -> u32 {
        match self {
            TokenWidth::U16 => u16::MAX as u32,
            TokenWidth::U32 => u32::MAX,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IndexParams {
    pub max_clause_freq: u64,
    pub max_clause_dist: u64,
    pub token_width: TokenWidth,
}

impl Default for IndexParams {
    fn default() -> Self {
        IndexParams {
            max_clause_freq: DEFAULT_MAX_CLAUSE_FREQ,
            max_clause_dist: DEFAULT_MAX_CLAUSE_DIST,
            token_width: TokenWidth::U16,
        }
    }
}

impl IndexParams {
    pub fn validate(&self) -> Result<(), IndexError> {
        if self.max_clause_freq == 0 {
            return Err(IndexError::Params("max_clause_freq must be >= 1".into()));
        }
        if self.max_clause_dist == 0 {
            return Err(IndexError::Params("max_clause_dist must be >= 1".into()));
        }
        Ok(())
    }
}

/// Tokenizer identity and vocabulary size recorded alongside the tokens.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VocabMeta {
    pub tokenizer: String,
    pub vocab_size: u32,
}

impl VocabMeta {
    /// Header encoding: `<tokenizer>;vocab=<size>`.
    pub fn encode(&self) -> String {
        format!("{};vocab={}", self.tokenizer, self.vocab_size)
    }

    pub fn decode(s: &str) -> Option<Self> {
        let (tokenizer, size) = s.rsplit_once(";vocab=")?;
        Some(VocabMeta { tokenizer: tokenizer.to_owned(), vocab_size: size.parse().ok()? })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Corpus {
    pub tokens: Vec<u32>,
    /// Start offset of each document; first element is 0.
    pub doc_bounds: Vec<usize>,
    pub vocab_meta: VocabMeta,
}

impl Corpus {
    pub fn new(tokens: Vec<u32>, doc_bounds: Vec<usize>, vocab_meta: VocabMeta) -> Result<Self, IndexError> {
        let corpus = Corpus { tokens, doc_bounds, vocab_meta };
        corpus.validate()?;
        Ok(corpus)
    }

    /// A corpus consisting of one document.
    pub fn single_document(tokens: Vec<u32>, vocab_meta: VocabMeta) -> Result<Self, IndexError> {
        Self::new(tokens, vec![0], vocab_meta)
    }

    pub fn validate(&self) -> Result<(), IndexError> {
        if self.tokens.is_empty() {
            return Err(IndexError::EmptyCorpus);
        }
        if self.doc_bounds.first() != Some(&0) {
            return Err(IndexError::DocBounds("first bound must be 0".into()));
        }
        for w in self.doc_bounds.windows(2) {
            if w[0] >= w[1] {
                return Err(IndexError::DocBounds(format!("bounds not strictly increasing at {}", w[1])));
            }
        }
        if let Some(&last) = self.doc_bounds.last() {
            if last >= self.tokens.len() {
                return Err(IndexError::DocBounds(format!("bound {last} past end of corpus")));
            }
        }
        let vocab = self.vocab_meta.vocab_size;
        if let Some((position, &token)) = self.tokens.iter().enumerate().find(|(_, &t)| t >= vocab) {
            return Err(IndexError::TokenOutOfVocab { position, token, vocab_size: vocab });
        }
        Ok(())
    }
}

/// Conjunction of contiguous phrases that must co-occur within `window`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CnfQuery {
    pub clauses: Vec<Vec<u32>>,
    pub window: u64,
}

impl CnfQuery {
    pub fn new(clauses: Vec<Vec<u32>>, window: u64) -> Result<Self, IndexError> {
        if clauses.is_empty() {
            return Err(IndexError::Query("query has no clauses".into()));
        }
        if clauses.iter().any(|c| c.is_empty()) {
            return Err(IndexError::Query("empty clause".into()));
        }
        if window == 0 {
            return Err(IndexError::Query("window must be >= 1".into()));
        }
        Ok(CnfQuery { clauses, window })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CnfCount {
    pub count: u64,
    /// The anchor clause had more than `max_clause_freq` occurrences and
    /// only the first `max_clause_freq` (in corpus order) were scanned.
    pub truncated: bool,
    pub anchor_clause: usize,
}

/// How companion clauses are located around each anchor position.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CompanionStrategy {
    /// Pick per clause from estimated cost.
    Auto,
    /// Sort the clause's occurrences and binary-search each window.
    Sorted,
    /// Compare tokens directly at every position of each window.
    Scan,
}

pub struct CorpusIndex {
    bytes: Backing,
    layout: Layout,
}

impl std::fmt::Debug for CorpusIndex {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("CorpusIndex")
            .field("tokens", &self.layout.tokens_len)
            .field("docs", &self.layout.docs_len)
            .field("params", &self.layout.params)
            .field("vocab_meta", &self.layout.vocab_meta)
            .finish()
    }
}

/// Builds an index. `params.token_width` must hold every token id.
pub fn build_index(corpus: &Corpus, params: IndexParams) -> Result<CorpusIndex, IndexError> {
    params.validate()?;
    corpus.validate()?;
    let max = params.token_width.max_token();
    if let Some((position, &token)) = corpus.tokens.iter().enumerate().find(|(_, &t)| t > max) {
        return Err(IndexError::TokenOverflow { position, token, width: params.token_width.bits() });
    }
    let sa = suffix_array(&corpus.tokens);
    let (bytes, layout) =
        format::encode(&params, &corpus.vocab_meta.encode(), &corpus.tokens, &sa, &corpus.doc_bounds);
    Ok(CorpusIndex { bytes: Backing::Owned(bytes), layout })
}

impl CorpusIndex {
    /// Memory-maps and validates an index file.
    pub fn load(path: &Path) -> Result<Self, IndexError> {
        let bytes = format::map_file(path)?;
        let layout = format::decode(&bytes)?;
        let index = CorpusIndex { bytes, layout };
        if index.doc_bound(0) != 0 {
            return Err(IndexError::Corrupt("first document bound is not 0"));
        }
        Ok(index)
    }

    pub fn save(&self, path: &Path) -> Result<(), IndexError> {
        format::write_file(path, &self.bytes)
    }

    /// The serialized file image.
    pub fn as_bytes(&self) -> &[u8] {
        &self.bytes
    }

    pub fn params(&self) -> &IndexParams {
        &self.layout.params
    }

    pub fn len(&self) -> usize {
        self.layout.tokens_len
    }

    pub fn is_empty(&self) -> bool {
        self.layout.tokens_len == 0
    }

    pub fn num_docs(&self) -> usize {
        self.layout.docs_len
    }

    pub fn vocab_meta_raw(&self) -> &str {
        &self.layout.vocab_meta
    }

    pub fn vocab_meta(&self) -> Option<VocabMeta> {
        VocabMeta::decode(&self.layout.vocab_meta)
    }

    #[inline]
    pub fn token(&self, pos: usize) -> u32 {
        let b = &self.bytes;
        match self.layout.params.token_width {
            TokenWidth::U16 => {
                let at = self.layout.tokens_at + pos * 2;
                u16::from_le_bytes([b[at], b[at + 1]]) as u32
            }
            TokenWidth::U32 => {
                let at = self.layout.tokens_at + pos * 4;
                u32::from_le_bytes(b[at..at + 4].try_into().unwrap())
            }
        }
    }

    /// Position stored at rank `rank` of the suffix array.
    #[inline]
    pub fn suffix(&self, rank: usize) -> usize {
        let at = self.layout.sa_at + rank * 8;
        u64::from_le_bytes(self.bytes[at..at + 8].try_into().unwrap()) as usize
    }

    #[inline]
    fn doc_bound(&self, i: usize) -> usize {
        let at = self.layout.docs_at + i * 8;
        u64::from_le_bytes(self.bytes[at..at + 8].try_into().unwrap()) as usize
    }

    pub fn tokens(&self) -> Vec<u32> {
        (0..self.len()).map(|i| self.token(i)).collect()
    }

    pub fn suffix_array(&self) -> Vec<usize> {
        (0..self.len()).map(|i| self.suffix(i)).collect()
    }

    pub fn doc_bounds(&self) -> Vec<usize> {
        (0..self.num_docs()).map(|i| self.doc_bound(i)).collect()
    }

    /// Token range `[start, end)` of the document containing `pos`.
    pub fn document_span(&self, pos: usize) -> (usize, usize) {
        let (mut lo, mut hi) = (0usize, self.num_docs());
        // last bound <= pos
        while hi - lo > 1 {
            let mid = (lo + hi) / 2;
            if self.doc_bound(mid) <= pos {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let end = if lo + 1 < self.num_docs() { self.doc_bound(lo + 1) } else { self.len() };
        (self.doc_bound(lo), end)
    }

    /// Compares the suffix at `pos`, cut to the clause length, with `clause`.
    fn cmp_suffix(&self, pos: usize, clause: &[u32]) -> Ordering {
        let n = self.len();
        for (k, &c) in clause.iter().enumerate() {
            if pos + k >= n {
                return Ordering::Less;
            }
            match self.token(pos + k).cmp(&c) {
                Ordering::Equal => {}
                other => return other,
            }
        }
        Ordering::Equal
    }

    /// Suffix-array rank range whose suffixes start with `clause`.
    pub fn clause_range(&self, clause: &[u32]) -> std::ops::Range<usize> {
        if clause.is_empty() {
            return 0..0;
        }
        let lower = self.partition_point(|pos| self.cmp_suffix(pos, clause) == Ordering::Less);
        let upper = self.partition_point(|pos| self.cmp_suffix(pos, clause) != Ordering::Greater);
        lower..upper.max(lower)
    }

    fn partition_point(&self, pred: impl Fn(usize) -> bool) -> usize {
        let (mut lo, mut hi) = (0usize, self.len());
        while lo < hi {
            let mid = lo + (hi - lo) / 2;
            if pred(self.suffix(mid)) {
                lo = mid + 1;
            } else {
                hi = mid;
            }
        }
        lo
    }

    /// Exact number of occurrences of a contiguous phrase. An empty clause counts 0.
    pub fn clause_count(&self, clause: &[u32]) -> u64 {
        self.clause_range(clause).len() as u64
    }

    /// Start positions of `clause`, sorted in corpus order.
    pub fn clause_positions(&self, clause: &[u32]) -> Vec<usize> {
        let mut positions: Vec<usize> = self.clause_range(clause).map(|r| self.suffix(r)).collect();
        positions.sort_unstable();
        positions
    }

    /// Whether `clause` occurs starting at `pos`.
    #[inline]
    pub fn matches_at(&self, pos: usize, clause: &[u32]) -> bool {
        pos + clause.len() <= self.len() && clause.iter().enumerate().all(|(k, &c)| self.token(pos + k) == c)
    }

    fn check_window(&self, query: &CnfQuery) -> Result<(), IndexError> {
        if query.window > self.params().max_clause_dist {
            return Err(IndexError::WindowTooLarge { window: query.window, max: self.params().max_clause_dist });
        }
        Ok(())
    }

    /// Bounded-window co-occurrence count anchored on the rarest clause.
    ///
    /// A single-clause query is a plain phrase count, still capped at
    /// `max_clause_freq`.
    pub fn cnf_count(&self, query: &CnfQuery) -> Result<CnfCount, IndexError> {
        self.check_window(query)?;
        Ok(cnf::count(self, query, None, CompanionStrategy::Auto))
    }

    /// Like [`cnf_count`](Self::cnf_count) but stops as soon as the count
    /// reaches `threshold`; the returned count is `min(true count, threshold)`.
    pub fn count_at_least(&self, query: &CnfQuery, threshold: u64) -> Result<CnfCount, IndexError> {
        self.check_window(query)?;
        Ok(cnf::count(self, query, Some(threshold), CompanionStrategy::Auto))
    }

    /// `cnf_count` with a forced companion strategy.
    pub fn cnf_count_with(&self, query: &CnfQuery, strategy: CompanionStrategy) -> Result<CnfCount, IndexError> {
        self.check_window(query)?;
        Ok(cnf::count(self, query, None, strategy))
    }
}
