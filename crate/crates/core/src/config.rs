//! Run configuration: TOML-loadable, with environment-variable overrides
//! for endpoints and keys.

use std::collections::BTreeMap;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::encoder::DEFAULT_EMBED_DIM;
use crate::learner::TrainConfig;
use crate::model::TaskId;
use crate::selfplay::PriorMode;
use crate::tasks::DEFAULT_MAX_TURNS;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("bad config: {0}")]
    Parse(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub embed_dim: usize,
    pub hidden1: usize,
    pub hidden2: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            embed_dim: DEFAULT_EMBED_DIM,
            hidden1: 256,
            hidden2: 256,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct LlmEndpoint {
    pub endpoint: Option<String>,
    pub model: Option<String>,
    pub api_key: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LlmConfig {
    pub endpoint: Option<String>,
    pub model: String,
    pub api_key: Option<String>,
    pub supports_logprobs: bool,
    /// Per-role overrides keyed by role tag name (policy, system, user,
    /// critic, emotion).
    pub roles: BTreeMap<String, LlmEndpoint>,
}

impl Default for LlmConfig {
    fn default() -> Self {
        LlmConfig {
            endpoint: None,
            model: "default-model".to_string(),
            api_key: None,
            supports_logprobs: false,
            roles: BTreeMap::new(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EncoderKind {
    /// Deterministic built-in hash double.
    Hash,
    /// External embedding service.
    Http,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EncoderConfig {
    pub kind: EncoderKind,
    pub endpoint: Option<String>,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        EncoderConfig {
            kind: EncoderKind::Hash,
            endpoint: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub task: TaskId,
    pub k: usize,
    pub epsilon_eval: f64,
    pub seed: u64,
    pub max_turns: usize,
    /// Episode count for eval and simulate runs.
    pub eval_episodes: usize,
    pub out_dir: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    pub at_count_failures: bool,
    pub prior_mode: PriorMode,
    pub beam_width: u32,
    pub use_prior: bool,
    pub use_emotion: bool,
    pub use_rl: bool,
    pub max_prompt_chars: Option<usize>,
    pub call_cap: Option<u64>,
    /// Mock script path; the bundled script is used when unset.
    pub mock_script: Option<PathBuf>,
    /// Force the scripted backend even in train/eval modes.
    pub mock: bool,
    /// Cases file (JSON array); bundled cases are used when unset.
    pub cases_file: Option<PathBuf>,
    /// Projection table file in the `task, action_index, pattern` line
    /// format; the built-in table is used when unset.
    pub projection_file: Option<PathBuf>,
    pub train: TrainConfig,
    pub model: ModelConfig,
    pub llm: LlmConfig,
    pub encoder: EncoderConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            task: TaskId::Esconv,
            k: 4,
            epsilon_eval: 0.5,
            seed: 42,
            max_turns: DEFAULT_MAX_TURNS,
            eval_episodes: 20,
            out_dir: None,
            checkpoint: None,
            at_count_failures: true,
            prior_mode: PriorMode::List,
            beam_width: 8,
            use_prior: true,
            use_emotion: true,
            use_rl: true,
            max_prompt_chars: None,
            call_cap: None,
            mock_script: None,
            mock: false,
            cases_file: None,
            projection_file: None,
            train: TrainConfig::default(),
            model: ModelConfig::default(),
            llm: LlmConfig::default(),
            encoder: EncoderConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<RunConfig, ConfigError> {
        let mut cfg: RunConfig =
            toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        cfg.apply_env();
        Ok(cfg)
    }

    pub fn load(path: &std::path::Path) -> Result<RunConfig, ConfigError> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    /// Applies `LLM_ENDPOINT`, `LLM_MODEL`, `LLM_API_KEY`, and
    /// `ENCODER_ENDPOINT` from the environment over the file values.
    pub fn apply_env(&mut self) {
        if let Ok(v) = std::env::var("LLM_ENDPOINT") {
            self.llm.endpoint = Some(v);
        }
        if let Ok(v) = std::env::var("LLM_MODEL") {
            self.llm.model = v;
        }
        if let Ok(v) = std::env::var("LLM_API_KEY") {
            self.llm.api_key = Some(v);
        }
        if let Ok(v) = std::env::var("ENCODER_ENDPOINT") {
            self.encoder.endpoint = Some(v);
            self.encoder.kind = EncoderKind::Http;
        }
    }
}
