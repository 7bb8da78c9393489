//! Training-pool selection from rollout grades and the calibration audit
//! arithmetic.

use std::collections::HashSet;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub const DEFAULT_Z: f64 = 1.96;
pub const DEFAULT_BUCKETS: [u64; 5] = [0, 1, 5, 10, 20];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuestionStats {
    pub question_id: String,
    pub n_correct: u32,
    #[serde(rename = "G")]
    pub g: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum DataError {
    #[error("question {id} has G={found}, expected G={expected} like the first question")]
    MixedGroupSize { id: String, found: u32, expected: u32 },
    #[error("question {id} has n_correct={n_correct} > G={g}")]
    CountAboveG { id: String, n_correct: u32, g: u32 },
    #[error("duplicate question id {0}")]
    DuplicateId(String),
    #[error("invalid zone bounds low={low} high={high}")]
    ZoneBounds { low: u32, high: u32 },
    #[error("requested {requested} anchors but only {available} mastered questions are available")]
    NotEnoughAnchors { requested: usize, available: usize },
    #[error("Wilson interval needs n >= 1 and correct <= n (got correct={correct}, n={n})")]
    Wilson { correct: u64, n: u64 },
    #[error("bucket lower bounds must start at 0 and strictly increase")]
    Buckets,
}

/// Shared G of a grade set; checks every record.
pub fn group_size(stats: &[QuestionStats]) -> Result<Option<u32>, DataError> {
    let Some(first) = stats.first() else { return Ok(None) };
    let mut seen = HashSet::new();
    for s in stats {
        if s.g != first.g {
            return Err(DataError::MixedGroupSize { id: s.question_id.clone(), found: s.g, expected: first.g });
        }
        if s.n_correct > s.g {
            return Err(DataError::CountAboveG { id: s.question_id.clone(), n_correct: s.n_correct, g: s.g });
        }
        if !seen.insert(s.question_id.as_str()) {
            return Err(DataError::DuplicateId(s.question_id.clone()));
        }
    }
    Ok(Some(first.g))
}

/// Ids with `low <= n_correct <= high`, in input order. `high` defaults to G-1.
pub fn learning_zone_filter(stats: &[QuestionStats], low: u32, high: Option<u32>) -> Result<Vec<String>, DataError> {
    let Some(g) = group_size(stats)? else { return Ok(Vec::new()) };
    let high = high.unwrap_or(g.saturating_sub(1));
    if low > high {
        return Err(DataError::ZoneBounds { low, high });
    }
    Ok(stats.iter().filter(|s| (low..=high).contains(&s.n_correct)).map(|s| s.question_id.clone()).collect())
}

/// Ids answered correctly by every rollout.
pub fn mastered_ids(stats: &[QuestionStats]) -> Result<Vec<String>, DataError> {
    group_size(stats)?;
    Ok(stats.iter().filter(|s| s.n_correct == s.g).map(|s| s.question_id.clone()).collect())
}

/// Never / learning-zone / mastered split of a grade set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ZoneCounts {
    pub never: usize,
    pub learning: usize,
    pub mastered: usize,
}

impl ZoneCounts {
    pub fn total(&self) -> usize {
        self.never + self.learning + self.mastered
    }
}

pub fn zone_counts(stats: &[QuestionStats]) -> Result<ZoneCounts, DataError> {
    group_size(stats)?;
    let mut c = ZoneCounts::default();
    for s in stats {
        match s.n_correct {
            0 => c.never += 1,
            n if n == s.g => c.mastered += 1,
            _ => c.learning += 1,
        }
    }
    Ok(c)
}

/// `kept` followed by `k` mastered ids sampled uniformly without
/// replacement with a ChaCha8 generator seeded by `seed`. Mastered ids
/// already in `kept` are not eligible; sampled anchors keep their order in
/// `mastered`.
pub fn mix_anchors(kept: &[String], mastered: &[String], k: usize, seed: u64) -> Result<Vec<String>, DataError> {
    let kept_set: HashSet<&str> = kept.iter().map(String::as_str).collect();
    let mut seen = HashSet::new();
    let eligible: Vec<&String> =
        mastered.iter().filter(|m| !kept_set.contains(m.as_str()) && seen.insert(m.as_str())).collect();
    if k > eligible.len() {
        return Err(DataError::NotEnoughAnchors { requested: k, available: eligible.len() });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picked = rand::seq::index::sample(&mut rng, eligible.len(), k).into_vec();
    picked.sort_unstable();
    let mut pool = kept.to_vec();
    pool.extend(picked.into_iter().map(|i| eligible[i].clone()));
    Ok(pool)
}

/// Wilson score interval for a binomial proportion.
pub fn wilson_interval(correct: u64, n: u64, z: f64) -> Result<(f64, f64), DataError> {
    if n == 0 || correct > n {
        return Err(DataError::Wilson { correct, n });
    }
    let nf = n as f64;
    let p = correct as f64 / nf;
    let z2 = z * z;
    let denom = 1.0 + z2 / nf;
    let center = (p + z2 / (2.0 * nf)) / denom;
    let half = z / denom * (p * (1.0 - p) / nf + z2 / (4.0 * nf * nf)).sqrt();
    let low = if correct == 0 { 0.0 } else { (center - half).max(0.0) };
    let high = if correct == n { 1.0 } else { (center + half).min(1.0) };
    Ok((low, high))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CalibrationRecord {
    pub count: Option<u64>,
    pub correct: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationBucket {
    pub lower: u64,
    /// Inclusive; `None` is unbounded.
    pub upper: Option<u64>,
    pub n: u64,
    pub correct: u64,
    /// `None` for an empty bucket.
    pub precision: Option<f64>,
    pub ci_low: Option<f64>,
    pub ci_high: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationReport {
    pub buckets: Vec<CalibrationBucket>,
    /// Records without a count or a correctness label.
    pub skipped: u64,
}

/// Buckets `[b_i, b_{i+1} - 1]` from sorted lower bounds, the last one open.
pub fn calibrate(records: &[CalibrationRecord], lower_bounds: &[u64], z: f64) -> Result<CalibrationReport, DataError> {
    if lower_bounds.first() != Some(&0) || lower_bounds.windows(2).any(|w| w[0] >= w[1]) {
        return Err(DataError::Buckets);
    }
    let mut n = vec![0u64; lower_bounds.len()];
    let mut correct = vec![0u64; lower_bounds.len()];
    let mut skipped = 0;
    for r in records {
        let (Some(count), Some(ok)) = (r.count, r.correct) else {
            skipped += 1;
            continue;
        };
        let b = lower_bounds.partition_point(|&lb| lb <= count) - 1;
        n[b] += 1;
        correct[b] += ok as u64;
    }
    if skipped > 0 {
        log::warn!("calibration: skipped {skipped} records without count or label");
    }
    let buckets = lower_bounds
        .iter()
        .enumerate()
        .map(|(i, &lower)| {
            let (precision, ci) = if n[i] == 0 {
                (None, None)
            } else {
                (Some(correct[i] as f64 / n[i] as f64), Some(wilson_interval(correct[i], n[i], z)?))
            };
            Ok(CalibrationBucket {
                lower,
                upper: lower_bounds.get(i + 1).map(|u| u - 1),
                n: n[i],
                correct: correct[i],
                precision,
                ci_low: ci.map(|c| c.0),
                ci_high: ci.map(|c| c.1),
            })
        })
        .collect::<Result<_, DataError>>()?;
    Ok(CalibrationReport { buckets, skipped })
}
