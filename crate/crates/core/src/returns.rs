//! Response-level return, per-token returns and group-normalized advantages.

use serde::{Deserialize, Serialize};

use crate::grading::{FormatVerdict, JudgeVerdict};
use crate::reward::SentenceScore;
use crate::scalar::{mean, population_std, Scalar};
use crate::segment::Alignment;

pub const DEFAULT_EPSILON: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ChannelWeights<T> {
    pub lambda_f: T,
    pub lambda_j: T,
    pub lambda_c: T,
}

impl<T: Scalar> Default for ChannelWeights<T> {
    fn default() -> Self {
        ChannelWeights { lambda_f: T::one(), lambda_j: T::one(), lambda_c: T::one() }
    }
}

/// Which values the group scale is the population std of.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScaleMode {
    /// The G per-completion masked means.
    #[default]
    Scalar,
    /// Every masked token return in the group.
    Token,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ReturnsError {
    #[error("token {token} is aligned to sentence {sentence} but only {m} sentences were scored")]
    SentenceOutOfRange { token: usize, sentence: usize, m: usize },
    #[error("sentence scores are not numbered 1..m in order")]
    SentenceOrder,
    #[error("sigma has {sigma} entries but mask has {mask}")]
    Length { sigma: usize, mask: usize },
    #[error("a group needs at least 2 completions, got {0}")]
    GroupTooSmall(usize),
    #[error("completion {0} has no masked token")]
    AllPadding(usize),
    #[error("completion {completion}: {returns} returns but {mask} mask entries")]
    MaskMismatch { completion: usize, returns: usize, mask: usize },
}

pub fn response_return<T: Scalar>(judge: &JudgeVerdict<T>, format: &FormatVerdict<T>, w: &ChannelWeights<T>) -> T {
    w.lambda_j * judge.reward + w.lambda_f * format.reward
}

/// `R_t = rr + [sigma(t) > 0] * lambda_c * r_sigma(t)` on masked tokens, 0 on
/// padding. Under alignment fallback every masked token gets `rr`.
pub fn token_returns<T: Scalar>(
    rr: T,
    sentence_scores: &[SentenceScore<T>],
    alignment: &Alignment,
    mask: &[bool],
    w: &ChannelWeights<T>,
) -> Result<Vec<T>, ReturnsError> {
    if alignment.sigma.len() != mask.len() {
        return Err(ReturnsError::Length { sigma: alignment.sigma.len(), mask: mask.len() });
    }
    if sentence_scores.iter().enumerate().any(|(i, s)| s.sentence_index != i + 1) {
        return Err(ReturnsError::SentenceOrder);
    }
    let m = sentence_scores.len();
    alignment
        .sigma
        .iter()
        .zip(mask)
        .enumerate()
        .map(|(t, (&sigma, &masked))| {
            if !masked {
                return Ok(T::zero());
            }
            if sigma > m {
                return Err(ReturnsError::SentenceOutOfRange { token: t, sentence: sigma, m });
            }
            if alignment.fallback || sigma == 0 {
                Ok(rr)
            } else {
                Ok(rr + w.lambda_c * sentence_scores[sigma - 1].reward)
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupAdvantages<T> {
    /// Per completion, per token; 0 on padding.
    pub advantages: Vec<Vec<T>>,
    /// Masked mean return of each completion.
    pub completion_means: Vec<T>,
    pub baseline: T,
    /// Normalization scale after the epsilon floor.
    pub scale: T,
    pub epsilon: T,
    /// The spread was below epsilon and all advantages were set to 0.
    pub degenerate: bool,
}

/// Baseline = mean of the per-completion masked means; scale = population
/// std (per `mode`) floored at `epsilon`; `A_t = (R_t - baseline) / scale`.
/// When the spread is below `epsilon` every advantage is 0.
pub fn group_advantages<T: Scalar>(
    returns: &[Vec<T>],
    masks: &[Vec<bool>],
    mode: ScaleMode,
    epsilon: T,
) -> Result<GroupAdvantages<T>, ReturnsError> {
    let g = returns.len();
    if g < 2 {
        return Err(ReturnsError::GroupTooSmall(g));
    }
    if masks.len() != g {
        return Err(ReturnsError::MaskMismatch { completion: masks.len().min(g), returns: g, mask: masks.len() });
    }
    let mut means = Vec::with_capacity(g);
    for (i, (r, m)) in returns.iter().zip(masks).enumerate() {
        if r.len() != m.len() {
            return Err(ReturnsError::MaskMismatch { completion: i, returns: r.len(), mask: m.len() });
        }
        let masked: Vec<T> = r.iter().zip(m).filter(|(_, &keep)| keep).map(|(&x, _)| x).collect();
        means.push(mean(&masked).ok_or(ReturnsError::AllPadding(i))?);
    }
    let baseline = mean(&means).expect("group is non-empty");
    let spread = match mode {
        ScaleMode::Scalar => population_std(&means, baseline),
        ScaleMode::Token => {
            let all: Vec<T> =
                returns.iter().zip(masks).flat_map(|(r, m)| r.iter().zip(m).filter(|(_, &k)| k).map(|(&x, _)| x)).collect();
            population_std(&all, mean(&all).expect("masked tokens exist"))
        }
    };
    let scale = spread.max(epsilon);
    // a group without spread carries no signal; dividing within-completion
    // sentence differences by epsilon would only amplify them
    let degenerate = spread < epsilon;
    let advantages = returns
        .iter()
        .zip(masks)
        .map(|(r, m)| {
            r.iter()
                .zip(m)
                .map(|(&x, &keep)| if keep && !degenerate { (x - baseline) / scale } else { T::zero() })
                .collect()
        })
        .collect();
    Ok(GroupAdvantages { advantages, completion_means: means, baseline, scale, epsilon, degenerate })
}

/// Everything computed for one completion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionScore<T> {
    pub answer: String,
    pub judge: Option<JudgeVerdict<T>>,
    pub format: FormatVerdict<T>,
    pub response_return: T,
    pub sentence_scores: Vec<SentenceScore<T>>,
    pub alignment: Alignment,
    pub token_returns: Vec<T>,
}
