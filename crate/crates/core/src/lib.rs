//! Reward-side engine for co-occurrence-verified sentence rewards.
//!
//! The pipeline: split a completion into sentences, extract one
//! (head, relation, tail) triplet per sentence, reduce it to a content-word
//! conjunction, count bounded-window co-occurrences in a suffix-array corpus
//! index, map counts to sentence rewards, spread them onto tokens through a
//! character-span alignment, and normalize within a rollout group.

pub mod config;
pub mod data;
pub mod engine;
pub mod grading;
pub mod index;
pub mod protocol;
pub mod query;
pub mod returns;
pub mod reward;
pub mod scalar;
pub mod segment;
pub mod tokenizer;
pub mod triplet;

pub use config::{EngineConfig, Settings};
pub use engine::{CompletionInput, Engine, EngineError, GroupResult};
pub use index::{build_index, CnfCount, CnfQuery, Corpus, CorpusIndex, IndexError, IndexParams, TokenWidth, VocabMeta};
pub use scalar::Scalar;
pub use tokenizer::{TextIndex, Vocab, WordTokenizer};

/// Reward map in double precision, the type used by the engine and the wire protocol.
pub type RewardMap = reward::RewardMap<f64>;
pub type RewardMapF32 = reward::RewardMap<f32>;
pub type SentenceScore = reward::SentenceScore<f64>;
pub type CompletionScore = returns::CompletionScore<f64>;
pub type GroupAdvantages = returns::GroupAdvantages<f64>;
pub type GroupAdvantagesF32 = returns::GroupAdvantages<f32>;
pub type ChannelWeights = returns::ChannelWeights<f64>;
