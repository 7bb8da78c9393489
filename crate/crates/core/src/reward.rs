//! Sentence-level co-occurrence rewards: count-to-reward map, the
//! extraction -> query -> count pipeline, and the First / Min / RelCheck
//! aggregation variants.

use std::collections::HashMap;
use std::sync::atomic::{AtomicU64, Ordering};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::index::{CnfCount, IndexError};
use crate::query::{build_entity_query, build_relation_query, StopWordList, WordQuery};
use crate::scalar::Scalar;
use crate::segment::{Block, SentenceSpan};
use crate::tokenizer::TextIndex;
use crate::triplet::{all_valid_triplets, first_valid_triplet, ExtractError, Extractor, ExtractorOutput, Triplet};

/// Zero-count penalty values of the sensitivity sweep.
pub const ZERO_COUNT_PRESETS: [f64; 5] = [-0.1, -0.2, -0.3, -0.5, -1.0];

pub const DEFAULT_RELCHECK_DEMOTION: f64 = -0.05;

/// Piecewise-constant map from a co-occurrence count to a sentence reward.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RewardMap<T> {
    /// Reward for c = 0.
    pub alpha0: T,
    /// 0 < c < tau1.
    pub alpha1: T,
    /// tau1 <= c < tau2.
    pub alpha2: T,
    /// c >= tau2.
    pub alpha3: T,
    pub tau1: u64,
    pub tau2: u64,
}

impl<T: Scalar> Default for RewardMap<T> {
    fn default() -> Self {
        RewardMap { alpha0: T::lit(-0.3), alpha1: T::lit(-0.1), alpha2: T::lit(0.0), alpha3: T::lit(0.1), tau1: 5, tau2: 20 }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("invalid reward map: {0}")]
pub struct RewardMapError(pub String);

impl<T: Scalar> RewardMap<T> {
    /// Default map with a different zero-count penalty.
    pub fn with_zero_penalty(penalty: T) -> Self {
        RewardMap { alpha0: penalty, ..Self::default() }
    }

    pub fn validate(&self) -> Result<(), RewardMapError> {
        let alphas = [self.alpha0, self.alpha1, self.alpha2, self.alpha3];
        if alphas.iter().any(|a| !a.is_finite()) {
            return Err(RewardMapError("alphas must be finite".into()));
        }
        // alpha0 == alpha1 is allowed: the -0.1 zero-count preset equals the default alpha1
        if !(self.alpha0 <= self.alpha1 && self.alpha1 <= self.alpha2 && self.alpha2 < self.alpha3) {
            return Err(RewardMapError("need alpha0 <= alpha1 <= alpha2 < alpha3".into()));
        }
        if self.tau1 == 0 || self.tau1 >= self.tau2 {
            return Err(RewardMapError("need 0 < tau1 < tau2".into()));
        }
        Ok(())
    }

    pub fn map(&self, count: Option<u64>) -> T {
        match count {
            None => T::zero(),
            Some(0) => self.alpha0,
            Some(c) if c < self.tau1 => self.alpha1,
            Some(c) if c < self.tau2 => self.alpha2,
            Some(_) => self.alpha3,
        }
    }

    pub fn map_count(&self, count: Option<&CnfCount>) -> T {
        self.map(count.map(|c| c.count))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    #[default]
    First,
    Min,
    RelCheck,
}

impl std::str::FromStr for Variant {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "first" => Ok(Variant::First),
            "min" => Ok(Variant::Min),
            "relcheck" => Ok(Variant::RelCheck),
            other => Err(format!("unknown variant {other:?} (expected first, min or relcheck)")),
        }
    }
}

/// Answers co-occurrence counts for word conjunctions.
pub trait CoocCounter: Send + Sync {
    fn count_words(&self, words: &[String], window: u64) -> Result<CnfCount, IndexError>;
}

impl CoocCounter for TextIndex {
    fn count_words(&self, words: &[String], window: u64) -> Result<CnfCount, IndexError> {
        self.count_phrases(words, window)
    }
}

impl<C: CoocCounter + ?Sized> CoocCounter for &C {
    fn count_words(&self, words: &[String], window: u64) -> Result<CnfCount, IndexError> {
        (**self).count_words(words, window)
    }
}

/// Fixed counts keyed by the exact word list; unknown queries count 0.
/// Used to replay recorded traces without a corpus.
#[derive(Debug, Clone, Default)]
pub struct FixedCounter {
    counts: HashMap<Vec<String>, u64>,
}

impl FixedCounter {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with<S: AsRef<str>>(mut self, words: &[S], count: u64) -> Self {
        self.insert(words, count);
        self
    }

    pub fn insert<S: AsRef<str>>(&mut self, words: &[S], count: u64) {
        self.counts.insert(words.iter().map(|w| w.as_ref().to_owned()).collect(), count);
    }
}

impl CoocCounter for FixedCounter {
    fn count_words(&self, words: &[String], _window: u64) -> Result<CnfCount, IndexError> {
        let count = self.counts.get(words).copied().unwrap_or(0);
        Ok(CnfCount { count, truncated: false, anchor_clause: 0 })
    }
}

/// Wraps a counter and records how many queries reach it.
#[derive(Debug, Default)]
pub struct QueryCounter<C> {
    inner: C,
    queries: AtomicU64,
}

impl<C> QueryCounter<C> {
    pub fn new(inner: C) -> Self {
        QueryCounter { inner, queries: AtomicU64::new(0) }
    }

    pub fn queries(&self) -> u64 {
        self.queries.load(Ordering::Relaxed)
    }

    pub fn reset(&self) {
        self.queries.store(0, Ordering::Relaxed);
    }

    pub fn inner(&self) -> &C {
        &self.inner
    }
}

impl<C: CoocCounter> CoocCounter for QueryCounter<C> {
    fn count_words(&self, words: &[String], window: u64) -> Result<CnfCount, IndexError> {
        self.queries.fetch_add(1, Ordering::Relaxed);
        self.inner.count_words(words, window)
    }
}

/// Where the pipeline stopped for a sentence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    /// The extractor produced no valid triplet.
    NoTriplet,
    /// Fewer than two content words survived.
    NoQuery,
    Counted,
    /// RelCheck ran the relation-augmented query.
    RelationChecked,
    /// RelCheck skipped the second query because the relation had no content word.
    RelationSkipped,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SentenceScore<T> {
    pub sentence_index: usize,
    pub start_char: usize,
    pub end_char: usize,
    pub block: Block,
    pub triplet: Option<Triplet>,
    pub query: Option<WordQuery>,
    pub count: Option<CnfCount>,
    pub reward: T,
    pub variant: Variant,
    pub stage: Stage,
    /// Valid triplets that produced a query (Min inspects all of them).
    pub triplets_counted: usize,
    pub relation_query: Option<WordQuery>,
    pub relation_count: Option<CnfCount>,
    pub relcheck_demoted: bool,
}

#[derive(Debug, thiserror::Error)]
pub enum ScoreError {
    #[error("index query failed for sentence {sentence}: {source}")]
    Index {
        sentence: usize,
        #[source]
        source: IndexError,
    },
    #[error(transparent)]
    Extract(#[from] ExtractError),
    #[error("extractor returned {got} outputs for {expected} sentences")]
    ExtractorArity { expected: usize, got: usize },
}

/// Everything needed to score sentences. Read-only, so one instance can be
/// shared across threads.
pub struct SentenceScorer<'a, T> {
    pub extractor: &'a dyn Extractor,
    pub counter: &'a dyn CoocCounter,
    pub stops: &'a StopWordList,
    pub map: RewardMap<T>,
    pub variant: Variant,
    pub window: u64,
    pub relcheck_demotion: T,
}

/// Position of a sentence in its completion, carried into the score record.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SentenceRef {
    pub index: usize,
    pub start_char: usize,
    pub end_char: usize,
    pub block: Block,
}

impl From<&SentenceSpan> for SentenceRef {
    fn from(s: &SentenceSpan) -> Self {
        SentenceRef { index: s.index, start_char: s.start_char, end_char: s.end_char, block: s.block }
    }
}

impl SentenceRef {
    /// A standalone sentence scored outside any completion.
    pub fn standalone(text: &str) -> Self {
        SentenceRef { index: 1, start_char: 0, end_char: text.chars().count(), block: Block::Answer }
    }
}

impl<'a, T: Scalar> SentenceScorer<'a, T> {
    fn blank(&self, at: SentenceRef, variant: Variant) -> SentenceScore<T> {
        SentenceScore {
            sentence_index: at.index,
            start_char: at.start_char,
            end_char: at.end_char,
            block: at.block,
            triplet: None,
            query: None,
            count: None,
            reward: T::zero(),
            variant,
            stage: Stage::NoTriplet,
            triplets_counted: 0,
            relation_query: None,
            relation_count: None,
            relcheck_demoted: false,
        }
    }

    fn count(&self, at: SentenceRef, query: &WordQuery) -> Result<CnfCount, ScoreError> {
        self.counter.count_words(&query.words, self.window).map_err(|source| ScoreError::Index { sentence: at.index, source })
    }

    /// Scores an already extracted sentence under the configured variant.
    pub fn score_output(&self, at: SentenceRef, output: &ExtractorOutput) -> Result<SentenceScore<T>, ScoreError> {
        match self.variant {
            Variant::First => self.first(at, output, Variant::First),
            Variant::Min => self.min(at, output),
            Variant::RelCheck => self.relcheck(at, output),
        }
    }

    fn first(&self, at: SentenceRef, output: &ExtractorOutput, variant: Variant) -> Result<SentenceScore<T>, ScoreError> {
        let mut s = self.blank(at, variant);
        let Some(triplet) = first_valid_triplet(output) else {
            return Ok(s);
        };
        s.query = build_entity_query(&triplet.head, &triplet.tail, self.stops);
        s.triplet = Some(triplet);
        let Some(query) = &s.query else {
            s.stage = Stage::NoQuery;
            return Ok(s);
        };
        let count = self.count(at, query)?;
        s.count = Some(count);
        s.reward = self.map.map_count(Some(&count));
        s.stage = Stage::Counted;
        s.triplets_counted = 1;
        Ok(s)
    }

    fn min(&self, at: SentenceRef, output: &ExtractorOutput) -> Result<SentenceScore<T>, ScoreError> {
        let mut s = self.blank(at, Variant::Min);
        let triplets = all_valid_triplets(output);
        if triplets.is_empty() {
            return Ok(s);
        }
        s.stage = Stage::NoQuery;
        let mut best: Option<(Triplet, WordQuery, CnfCount)> = None;
        for t in triplets {
            let Some(q) = build_entity_query(&t.head, &t.tail, self.stops) else { continue };
            let c = self.count(at, &q)?;
            s.triplets_counted += 1;
            // first minimum wins ties
            if best.as_ref().is_none_or(|(_, _, b)| c.count < b.count) {
                best = Some((t, q, c));
            }
        }
        match best {
            Some((t, q, c)) => {
                s.reward = self.map.map_count(Some(&c));
                s.triplet = Some(t);
                s.query = Some(q);
                s.count = Some(c);
                s.stage = Stage::Counted;
            }
            None => s.triplet = first_valid_triplet(output),
        }
        Ok(s)
    }

    fn relcheck(&self, at: SentenceRef, output: &ExtractorOutput) -> Result<SentenceScore<T>, ScoreError> {
        let mut s = self.first(at, output, Variant::RelCheck)?;
        let (Some(count), Some(query), Some(triplet)) = (&s.count, &s.query, &s.triplet) else {
            return Ok(s);
        };
        if count.count < self.map.tau2 {
            return Ok(s);
        }
        let rq = build_relation_query(query, &triplet.relation, self.stops);
        if !rq.contributed {
            s.stage = Stage::RelationSkipped;
            return Ok(s);
        }
        let rc = self.count(at, &rq.query)?;
        if rc.count == 0 {
            s.reward = self.relcheck_demotion;
            s.relcheck_demoted = true;
        }
        s.relation_query = Some(rq.query);
        s.relation_count = Some(rc);
        s.stage = Stage::RelationChecked;
        Ok(s)
    }

    fn score_one(&self, sentence: &str, variant: Variant) -> Result<SentenceScore<T>, ScoreError> {
        let output = self.extractor.extract(sentence)?;
        let at = SentenceRef::standalone(sentence);
        match variant {
            Variant::First => self.first(at, &output, Variant::First),
            Variant::Min => self.min(at, &output),
            Variant::RelCheck => self.relcheck(at, &output),
        }
    }

    pub fn score_sentence_first(&self, sentence: &str) -> Result<SentenceScore<T>, ScoreError> {
        self.score_one(sentence, Variant::First)
    }

    pub fn score_sentence_min(&self, sentence: &str) -> Result<SentenceScore<T>, ScoreError> {
        self.score_one(sentence, Variant::Min)
    }

    pub fn score_sentence_relcheck(&self, sentence: &str) -> Result<SentenceScore<T>, ScoreError> {
        self.score_one(sentence, Variant::RelCheck)
    }

    /// Scores every sentence of a completion: one extractor batch, then
    /// counting in parallel. Results are in sentence order.
    pub fn score_sentences(&self, text: &str, sentences: &[SentenceSpan]) -> Result<Vec<SentenceScore<T>>, ScoreError> {
        if sentences.is_empty() {
            return Ok(Vec::new());
        }
        let texts: Vec<&str> = sentences.iter().map(|s| s.text(text)).collect();
        let outputs = self.extractor.extract_batch(&texts)?;
        if outputs.len() != sentences.len() {
            return Err(ScoreError::ExtractorArity { expected: sentences.len(), got: outputs.len() });
        }
        sentences.par_iter().zip(outputs.par_iter()).map(|(s, o)| self.score_output(s.into(), o)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::triplet::StubExtractor;

    #[test]
    fn boundary_table() {
        let m = RewardMap::<f64>::default();
        let cases = [
            (None, 0.0),
            (Some(0), -0.3),
            (Some(1), -0.1),
            (Some(4), -0.1),
            (Some(5), 0.0),
            (Some(19), 0.0),
            (Some(20), 0.1),
            (Some(1_000_000), 0.1),
            (Some(10), 0.0),
            (Some(12_323), 0.1),
        ];
        for (c, want) in cases {
            assert_eq!(m.map(c), want, "{c:?}");
        }
        let m32 = RewardMap::<f32>::default();
        assert_eq!(m32.map(Some(0)), -0.3f32);
    }

    #[test]
    fn presets_and_validation() {
        for p in ZERO_COUNT_PRESETS {
            let m = RewardMap::<f64>::with_zero_penalty(p);
            m.validate().unwrap();
            assert_eq!(m.map(Some(0)), p);
        }
        assert!(RewardMap::<f64> { tau1: 20, tau2: 5, ..Default::default() }.validate().is_err());
        assert!(RewardMap::<f64> { alpha0: 0.2, ..Default::default() }.validate().is_err());
    }

    fn scorer<'a>(
        ex: &'a StubExtractor,
        counter: &'a dyn CoocCounter,
        stops: &'a StopWordList,
        variant: Variant,
    ) -> SentenceScorer<'a, f64> {
        SentenceScorer {
            extractor: ex,
            counter,
            stops,
            map: RewardMap::default(),
            variant,
            window: 1000,
            relcheck_demotion: DEFAULT_RELCHECK_DEMOTION,
        }
    }

    const S: &str = "Mario Camerini directed Il Seduttore.";

    fn worked_example(relation_count: u64) -> (StubExtractor, QueryCounter<FixedCounter>) {
        let ex = StubExtractor::new().with(
            S,
            r#"[["Mario Camerini", "directed", "Il Seduttore"], ["Il Seduttore", "released in", "1954"]]"#,
        );
        let counter = FixedCounter::new()
            .with(&["Mario", "Camerini", "Il", "Seduttore"], 50)
            .with(&["Il", "Seduttore", "1954"], 0)
            .with(&["Mario", "Camerini", "Il", "Seduttore", "directed"], relation_count);
        (ex, QueryCounter::new(counter))
    }

    #[test]
    fn variants_on_worked_example() {
        let stops = StopWordList::default();
        let (ex, counter) = worked_example(0);
        let first = scorer(&ex, &counter, &stops, Variant::First).score_sentence_first(S).unwrap();
        assert_eq!((first.count.unwrap().count, first.reward), (50, 0.1));
        let min = scorer(&ex, &counter, &stops, Variant::Min).score_sentence_min(S).unwrap();
        assert_eq!((min.count.unwrap().count, min.reward, min.triplets_counted), (0, -0.3, 2));
        counter.reset();
        let rc = scorer(&ex, &counter, &stops, Variant::RelCheck).score_sentence_relcheck(S).unwrap();
        assert_eq!(rc.reward, -0.05);
        assert!(rc.relcheck_demoted);
        assert_eq!(counter.queries(), 2);

        let (ex, counter) = worked_example(3);
        let rc = scorer(&ex, &counter, &stops, Variant::RelCheck).score_sentence_relcheck(S).unwrap();
        assert_eq!((rc.reward, rc.relcheck_demoted, rc.stage), (0.1, false, Stage::RelationChecked));
    }

    #[test]
    fn relcheck_below_tau2_issues_one_query() {
        let stops = StopWordList::default();
        let ex = StubExtractor::new().with("x", r#"[["Ann Lee", "met", "Bob Ray"]]"#);
        let counter = QueryCounter::new(FixedCounter::new().with(&["Ann", "Lee", "Bob", "Ray"], 3));
        let s = scorer(&ex, &counter, &stops, Variant::RelCheck).score_sentence_relcheck("x").unwrap();
        assert_eq!(s.reward, -0.1);
        assert_eq!(counter.queries(), 1);
    }

    #[test]
    fn relcheck_vacuous_relation_keeps_reward() {
        let stops = StopWordList::default();
        let ex = StubExtractor::new().with("x", r#"[["Ann Lee", "is", "Bob Ray"]]"#);
        let counter = QueryCounter::new(FixedCounter::new().with(&["Ann", "Lee", "Bob", "Ray"], 30));
        let s = scorer(&ex, &counter, &stops, Variant::RelCheck).score_sentence_relcheck("x").unwrap();
        assert_eq!((s.reward, s.stage), (0.1, Stage::RelationSkipped));
        assert_eq!(counter.queries(), 1);
    }

    #[test]
    fn neutral_paths() {
        let stops = StopWordList::default();
        let ex = StubExtractor::new().with("empty", "[]").with("pron", r#"[["he", "won", "it"]]"#).with(
            "stop",
            r#"[["the", "was", "it all"]]"#,
        );
        let counter = FixedCounter::new();
        let sc = scorer(&ex, &counter, &stops, Variant::First);
        for (sentence, stage) in [("empty", Stage::NoTriplet), ("pron", Stage::NoTriplet), ("stop", Stage::NoQuery), ("unknown", Stage::NoTriplet)] {
            let s = sc.score_sentence_first(sentence).unwrap();
            assert_eq!((s.reward, s.stage, s.count), (0.0, stage, None), "{sentence}");
        }
    }

    struct Failing;
    impl CoocCounter for Failing {
        fn count_words(&self, _: &[String], _: u64) -> Result<CnfCount, IndexError> {
            Err(IndexError::Corrupt("disk gone"))
        }
    }

    #[test]
    fn index_failure_is_an_error() {
        let stops = StopWordList::default();
        let ex = StubExtractor::new().with("x", r#"[["Ann Lee", "met", "Bob Ray"]]"#);
        let r = scorer(&ex, &Failing, &stops, Variant::First).score_sentence_first("x");
        assert!(matches!(r, Err(ScoreError::Index { sentence: 1, .. })));
    }
}
