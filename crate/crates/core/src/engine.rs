//! The assembled pipeline: completion text and token spans in, sentence
//! scores, per-token returns and group advantages out.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{ConfigError, EngineConfig, ExtractorConfig, Settings};
use crate::grading::{extract_answer, format_reward, judge, FormatRule, GoldAnswers, Label};
use crate::index::{CnfCount, IndexError};
use crate::query::{StopWordError, StopWordList};
use crate::returns::{group_advantages, response_return, token_returns, CompletionScore, ReturnsError};
use crate::reward::{CoocCounter, ScoreError, SentenceScore, SentenceScorer};
use crate::scalar::Scalar;
use crate::segment::{align_tokens, split_sentences, Completion, CompletionError};
use crate::tokenizer::TextIndex;
use crate::triplet::{CommandExtractor, ExtractError, Extractor, StubExtractor};

#[derive(Debug, thiserror::Error)]
pub enum EngineError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    StopWords(#[from] StopWordError),
    #[error("index: {0}")]
    Index(#[from] IndexError),
    #[error("extractor: {0}")]
    Extract(#[from] ExtractError),
    #[error(transparent)]
    Score(#[from] ScoreError),
    #[error("completion {completion}: {source}")]
    Completion {
        completion: usize,
        #[source]
        source: CompletionError,
    },
    #[error(transparent)]
    Returns(#[from] ReturnsError),
    #[error("{0}")]
    Input(String),
}

impl EngineError {
    /// True when the caller's input is at fault rather than the engine or
    /// its resources.
    pub fn is_input_error(&self) -> bool {
        match self {
            EngineError::Completion { .. } | EngineError::Input(_) => true,
            EngineError::Returns(e) => !matches!(e, ReturnsError::SentenceOutOfRange { .. } | ReturnsError::SentenceOrder),
            EngineError::Index(e) => matches!(e, IndexError::Query(_) | IndexError::WindowTooLarge { .. }),
            _ => false,
        }
    }
}

/// A completion as it arrives on the wire.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionInput {
    pub text: String,
    #[serde(default)]
    pub token_spans: Vec<(usize, usize)>,
    /// Defaults to every token being a completion token.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mask: Option<Vec<bool>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gold: Option<GoldAnswers>,
}

impl CompletionInput {
    pub fn completion(&self) -> Completion {
        let mask = self.mask.clone().unwrap_or_else(|| vec![true; self.token_spans.len()]);
        Completion { text: self.text.clone(), token_spans: self.token_spans.clone(), mask }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionDiagnostics<T> {
    pub label: Option<Label>,
    pub format_ok: bool,
    pub format_rule: Option<FormatRule>,
    pub response_return: T,
    pub alignment_rate: f64,
    pub fallback: bool,
    pub sentence_scores: Vec<SentenceScore<T>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupDiagnostics<T> {
    pub baseline: T,
    pub scale: T,
    pub degenerate: bool,
    pub completions: Vec<CompletionDiagnostics<T>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupResult<T> {
    pub prompt_id: String,
    pub advantages: Vec<Vec<T>>,
    pub diagnostics: GroupDiagnostics<T>,
}

pub struct Engine {
    counter: Box<dyn CoocCounter>,
    index_tokens: usize,
    extractor: Box<dyn Extractor>,
    stops: StopWordList,
    settings: Settings,
}

impl std::fmt::Debug for Engine {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Engine").field("index_tokens", &self.index_tokens).field("settings", &self.settings).finish()
    }
}

impl Engine {
    /// Loads the index, stop words and extractor named by the config.
    pub fn from_config(cfg: &EngineConfig) -> Result<Self, EngineError> {
        let index = TextIndex::load(&cfg.index_path)?;
        let max = index.index().params().max_clause_dist;
        if cfg.settings.window > max {
            return Err(IndexError::WindowTooLarge { window: cfg.settings.window, max }.into());
        }
        let stops = match &cfg.stopwords_path {
            Some(p) => StopWordList::load(p)?,
            None => StopWordList::default(),
        };
        let extractor: Box<dyn Extractor> = match &cfg.extractor {
            ExtractorConfig::Stub(p) => Box::new(StubExtractor::load(p)?),
            ExtractorConfig::Command(argv) => {
                let (program, args) = argv.split_first().ok_or_else(|| ConfigError::Invalid("empty extractor command".into()))?;
                Box::new(CommandExtractor::spawn(program, args)?)
            }
        };
        let tokens = index.index().len();
        Self::from_parts(Box::new(index), tokens, extractor, stops, cfg.settings.clone())
    }

    pub fn from_parts(
        counter: Box<dyn CoocCounter>,
        index_tokens: usize,
        extractor: Box<dyn Extractor>,
        stops: StopWordList,
        settings: Settings,
    ) -> Result<Self, EngineError> {
        settings.validate()?;
        Ok(Engine { counter, index_tokens, extractor, stops, settings })
    }

    pub fn settings(&self) -> &Settings {
        &self.settings
    }

    pub fn index_tokens(&self) -> usize {
        self.index_tokens
    }

    pub fn scorer<T: Scalar>(&self) -> SentenceScorer<'_, T> {
        let m = self.settings.reward_map();
        SentenceScorer {
            extractor: self.extractor.as_ref(),
            counter: self.counter.as_ref(),
            stops: &self.stops,
            map: crate::reward::RewardMap {
                alpha0: T::lit(m.alpha0),
                alpha1: T::lit(m.alpha1),
                alpha2: T::lit(m.alpha2),
                alpha3: T::lit(m.alpha3),
                tau1: m.tau1,
                tau2: m.tau2,
            },
            variant: self.settings.variant,
            window: self.settings.window,
            relcheck_demotion: T::lit(self.settings.relcheck_demotion),
        }
    }

    /// Raw co-occurrence count of words or phrases.
    pub fn count(&self, words: &[String], window: Option<u64>) -> Result<CnfCount, EngineError> {
        if words.is_empty() {
            return Err(EngineError::Input("count needs at least one word".into()));
        }
        Ok(self.counter.count_words(words, window.unwrap_or(self.settings.window))?)
    }

    /// Sentence scores, alignment, judge/format verdicts and token returns.
    /// Without a gold answer the judge channel contributes nothing.
    pub fn score_completion<T: Scalar>(
        &self,
        completion: &Completion,
        gold: Option<&GoldAnswers>,
    ) -> Result<CompletionScore<T>, EngineError> {
        completion.validate().map_err(|source| EngineError::Completion { completion: 0, source })?;
        let s = &self.settings;
        let w = crate::returns::ChannelWeights {
            lambda_f: T::lit(s.weights.lambda_f),
            lambda_j: T::lit(s.weights.lambda_j),
            lambda_c: T::lit(s.weights.lambda_c),
        };
        let judge_rewards = crate::grading::JudgeRewards {
            good: T::lit(s.judge_rewards.good),
            bad: T::lit(s.judge_rewards.bad),
            na: T::lit(s.judge_rewards.na),
        };
        let format_rewards = crate::grading::FormatRewards { ok: T::lit(s.format_rewards.ok), fail: T::lit(s.format_rewards.fail) };

        let sentences = split_sentences(&completion.text);
        let sentence_scores = self.scorer::<T>().score_sentences(&completion.text, &sentences)?;
        let alignment = align_tokens(completion, &sentences, s.fallback_threshold);
        let answer = extract_answer(&completion.text).to_owned();
        let judge = gold.map(|g| judge(&answer, g, &judge_rewards));
        let format = format_reward(&completion.text, &format_rewards);
        let rr = match &judge {
            Some(j) => response_return(j, &format, &w),
            None => w.lambda_f * format.reward,
        };
        let token_returns = token_returns(rr, &sentence_scores, &alignment, &completion.mask, &w)?;
        Ok(CompletionScore { answer, judge, format, response_return: rr, sentence_scores, alignment, token_returns })
    }

    /// Scores every completion (in parallel) and normalizes within the group.
    pub fn score_group<T: Scalar>(&self, prompt_id: &str, inputs: &[CompletionInput]) -> Result<GroupResult<T>, EngineError> {
        if inputs.len() < 2 {
            return Err(ReturnsError::GroupTooSmall(inputs.len()).into());
        }
        let completions: Vec<Completion> = inputs.iter().map(CompletionInput::completion).collect();
        let scores: Vec<CompletionScore<T>> = completions
            .par_iter()
            .zip(inputs.par_iter())
            .enumerate()
            .map(|(i, (c, input))| {
                self.score_completion(c, input.gold.as_ref()).map_err(|e| match e {
                    EngineError::Completion { source, .. } => EngineError::Completion { completion: i, source },
                    other => other,
                })
            })
            .collect::<Result<_, _>>()?;
        let returns: Vec<Vec<T>> = scores.iter().map(|s| s.token_returns.clone()).collect();
        let masks: Vec<Vec<bool>> = completions.into_iter().map(|c| c.mask).collect();
        let adv = group_advantages(&returns, &masks, self.settings.scale_mode, T::lit(self.settings.epsilon))?;
        let completions = scores
            .into_iter()
            .map(|s| CompletionDiagnostics {
                label: s.judge.map(|j| j.label),
                format_ok: s.format.ok,
                format_rule: s.format.violated_rule,
                response_return: s.response_return,
                alignment_rate: s.alignment.rate,
                fallback: s.alignment.fallback,
                sentence_scores: s.sentence_scores,
            })
            .collect();
        Ok(GroupResult {
            prompt_id: prompt_id.to_owned(),
            advantages: adv.advantages,
            diagnostics: GroupDiagnostics { baseline: adv.baseline, scale: adv.scale, degenerate: adv.degenerate, completions },
        })
    }
}
