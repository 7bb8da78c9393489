//! Engine configuration (TOML or JSON).

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::grading::{FormatRewards, JudgeRewards};
use crate::index::DEFAULT_MAX_CLAUSE_DIST;
use crate::returns::{ChannelWeights, ScaleMode, DEFAULT_EPSILON};
use crate::reward::{RewardMap, Variant, DEFAULT_RELCHECK_DEMOTION};
use crate::segment::DEFAULT_FALLBACK_THRESHOLD;

pub const CONFIG_ENV: &str = "CORVER_CONFIG";

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("no config given and {CONFIG_ENV} is not set")]
    Missing,
    #[error("{path}: {source}")]
    Read {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("invalid config: {0}")]
    Invalid(String),
}

/// Where sentence triplets come from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExtractorConfig {
    /// JSONL lookup file of `{"sentence", "raw"}` records.
    Stub(PathBuf),
    /// Program and arguments speaking the one-line-per-sentence protocol.
    Command(Vec<String>),
}

/// Numeric knobs of the scoring pipeline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Settings {
    pub variant: Variant,
    pub window: u64,
    /// Rewards for c = 0, 0 < c < tau1, tau1 <= c < tau2, c >= tau2.
    pub alphas: [f64; 4],
    pub taus: [u64; 2],
    pub relcheck_demotion: f64,
    pub weights: ChannelWeights<f64>,
    pub judge_rewards: JudgeRewards<f64>,
    pub format_rewards: FormatRewards<f64>,
    pub fallback_threshold: f64,
    pub scale_mode: ScaleMode,
    pub epsilon: f64,
}

impl Default for Settings {
    fn default() -> Self {
        let map = RewardMap::<f64>::default();
        Settings {
            variant: Variant::First,
            window: DEFAULT_MAX_CLAUSE_DIST,
            alphas: [map.alpha0, map.alpha1, map.alpha2, map.alpha3],
            taus: [map.tau1, map.tau2],
            relcheck_demotion: DEFAULT_RELCHECK_DEMOTION,
            weights: ChannelWeights::default(),
            judge_rewards: JudgeRewards::default(),
            format_rewards: FormatRewards::default(),
            fallback_threshold: DEFAULT_FALLBACK_THRESHOLD,
            scale_mode: ScaleMode::Scalar,
            epsilon: DEFAULT_EPSILON,
        }
    }
}

impl Settings {
    pub fn reward_map(&self) -> RewardMap<f64> {
        let [alpha0, alpha1, alpha2, alpha3] = self.alphas;
        RewardMap { alpha0, alpha1, alpha2, alpha3, tau1: self.taus[0], tau2: self.taus[1] }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.reward_map().validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        if self.window == 0 {
            return Err(ConfigError::Invalid("window must be >= 1".into()));
        }
        if !(0.0..=1.0).contains(&self.fallback_threshold) {
            return Err(ConfigError::Invalid("fallback_threshold must be in [0, 1]".into()));
        }
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(ConfigError::Invalid("epsilon must be positive".into()));
        }
        let w = &self.weights;
        let finite = [
            w.lambda_f,
            w.lambda_j,
            w.lambda_c,
            self.relcheck_demotion,
            self.judge_rewards.good,
            self.judge_rewards.bad,
            self.judge_rewards.na,
            self.format_rewards.ok,
            self.format_rewards.fail,
        ];
        if finite.iter().any(|x| !x.is_finite()) {
            return Err(ConfigError::Invalid("weights and reward values must be finite".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EngineConfig {
    pub index_path: PathBuf,
    pub extractor: ExtractorConfig,
    /// Defaults to the bundled list.
    #[serde(default)]
    pub stopwords_path: Option<PathBuf>,
    /// Service worker threads; defaults to the number of CPUs.
    #[serde(default)]
    pub workers: Option<usize>,
    #[serde(flatten)]
    pub settings: Settings,
}

impl EngineConfig {
    /// Parses by extension (`.json` is JSON, anything else TOML). Relative
    /// paths inside are resolved against the config file's directory.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read { path: path.to_owned(), source })?;
        let parse_err = |message: String| ConfigError::Parse { path: path.to_owned(), message };
        let mut cfg: EngineConfig = if path.extension().is_some_and(|e| e == "json") {
            serde_json::from_str(&text).map_err(|e| parse_err(e.to_string()))?
        } else {
            toml::from_str(&text).map_err(|e| parse_err(e.to_string()))?
        };
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.resolve_paths(base);
        cfg.settings.validate()?;
        Ok(cfg)
    }

    /// `explicit` if given, else the path in `CORVER_CONFIG`.
    pub fn locate(explicit: Option<&Path>) -> Result<Self, ConfigError> {
        match explicit {
            Some(p) => Self::load(p),
            None => {
                let p = std::env::var_os(CONFIG_ENV).ok_or(ConfigError::Missing)?;
                Self::load(Path::new(&p))
            }
        }
    }

    fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.index_path);
        if let Some(p) = self.stopwords_path.as_mut() {
            fix(p);
        }
        if let ExtractorConfig::Stub(p) = &mut self.extractor {
            fix(p);
        }
    }
}
