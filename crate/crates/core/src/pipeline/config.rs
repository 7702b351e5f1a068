//! Declarative run configuration (TOML).

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::embedding::EmbeddingProviderConfig;
use crate::error::{Error, Result};
use crate::metrics::EvalConfig;
use crate::policy::GenerationConfig;
use crate::prompting::PromptTemplates;
use crate::reward::RewardParams;
use crate::style_pool::PoolParams;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Every random choice derives from this seed.
    pub seed: u64,
    /// Outlier statistics are recomputed after this many pool inserts
    /// (1 = after every insert).
    pub refresh_batch: usize,
    /// Records with more tokens than this are dropped at ingestion.
    pub max_tokens: usize,
    /// Stabiliser for group-relative advantages.
    pub advantage_eps: f64,
    /// Extra gazetteer files, merged over the built-in starter list.
    pub gazetteers: Vec<PathBuf>,
    pub reward: RewardParams,
    pub pool: PoolParams,
    pub generation: GenerationConfig,
    pub embedding: EmbeddingProviderConfig,
    pub prompts: PromptTemplates,
    pub eval: EvalConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            seed: 3407,
            refresh_batch: 8,
            max_tokens: 512,
            advantage_eps: 1e-8,
            gazetteers: Vec::new(),
            reward: RewardParams::default(),
            pool: PoolParams::default(),
            generation: GenerationConfig::default(),
            embedding: EmbeddingProviderConfig::default(),
            prompts: PromptTemplates::default(),
            eval: EvalConfig::default(),
        }
    }
}

impl PipelineConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        if self.refresh_batch < 1 {
            return Err(Error::Config("refresh_batch must be at least 1".into()));
        }
        if self.max_tokens < 1 {
            return Err(Error::Config("max_tokens must be at least 1".into()));
        }
        if !(self.advantage_eps > 0.0) {
            return Err(Error::Config("advantage_eps must be positive".into()));
        }
        self.reward.validate()?;
        self.pool.validate()?;
        self.generation.validate()?;
        self.embedding.validate()?;
        if self.prompts.system_prompt.trim().is_empty() {
            return Err(Error::Config("prompts.system_prompt is empty".into()));
        }
        if !(0.0..1.0).contains(&self.eval.test_fraction) {
            return Err(Error::Config("eval.test_fraction must be in [0, 1)".into()));
        }
        Ok(())
    }
}
