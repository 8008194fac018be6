//! Declarative run configuration.
//!
//! Precedence is flags > environment > file > defaults. A top-level `seed`
//! (from the file or `--seed`) replaces every module seed.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use authrank::batcher::BatchConfig;
use authrank::eval::{Bm25Params, SynthConfig, DEFAULT_FRACTION, DEFAULT_SPLIT_SEEDS};
use authrank::reranker::InstanceConfig;
use authrank::{CurationConfig, FeatureConfig, PipelineConfig, SamplingStrategy, TrainConfig};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SamplingSection {
    /// Comma-separated categories: near_query, near_positive, random.
    pub strategy: String,
    pub m: usize,
}

impl Default for SamplingSection {
    fn default() -> Self {
        SamplingSection {
            strategy: SamplingStrategy::default().label(),
            m: 12,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SplitSection {
    pub fraction: f64,
    pub seeds: Vec<u64>,
}

impl Default for SplitSection {
    fn default() -> Self {
        SplitSection {
            fraction: DEFAULT_FRACTION,
            seeds: DEFAULT_SPLIT_SEEDS.to_vec(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: Option<u64>,
    /// Worker threads; 0 uses every core.
    pub threads: usize,
    pub features: FeatureConfig,
    pub curation: CurationConfig,
    pub batching: BatchConfig,
    pub training: TrainConfig,
    pub sampling: SamplingSection,
    pub instances: InstanceConfig,
    pub pipeline: PipelineConfig,
    pub splits: SplitSection,
    pub bm25: Bm25Params,
    pub synth: SynthConfig,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        match path {
            None => Ok(RunConfig::default()),
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?;
                Self::from_toml(&text)
            }
        }
    }

    /// Apply overrides and push the top-level seed into every module.
    pub fn resolve(mut self, seed: Option<u64>, threads: Option<usize>) -> Result<Self, CliError> {
        if seed.is_some() {
            self.seed = seed;
        }
        if let Some(t) = threads {
            self.threads = t;
        }
        if let Some(s) = self.seed {
            self.training.seed = s;
            self.instances.seed = s;
            self.synth.seed = s;
        }
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.features.validate()?;
        self.curation.validate()?;
        self.batching.validate()?;
        self.training.validate()?;
        self.sampling_strategy()?;
        self.instances.validate()?;
        self.pipeline.validate()?;
        self.bm25_checked()?;
        self.synth.validate()?;
        if !(self.splits.fraction > 0.0 && self.splits.fraction <= 1.0) || self.splits.seeds.is_empty() {
            return Err(CliError::Config("splits need a fraction in (0, 1] and at least one seed".into()));
        }
        Ok(())
    }

    fn bm25_checked(&self) -> Result<(), CliError> {
        if !(self.bm25.k1 >= 0.0 && (0.0..=1.0).contains(&self.bm25.b)) {
            return Err(CliError::Config("bm25 needs k1 >= 0 and b in [0, 1]".into()));
        }
        Ok(())
    }

    pub fn sampling_strategy(&self) -> Result<SamplingStrategy, CliError> {
        Ok(SamplingStrategy::parse(&self.sampling.strategy, self.sampling.m)?)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Hex sha256 of the canonical TOML rendering.
    pub fn hash(&self) -> String {
        Sha256::digest(self.to_toml().as_bytes())
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }
}
