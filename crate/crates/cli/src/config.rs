//! Run configuration read from TOML; every section may be omitted.

use std::path::Path;

use anyhow::{Context, Result};
use ordinal_depth::crowd::CrowdConfig;
use ordinal_depth::hourglass::HourglassConfig;
use ordinal_depth::sampling::{SamplerConfig, Strategy, DEFAULT_EQUAL_RATIO};
use ordinal_depth::train::TrainConfig;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

fn desk() -> HourglassConfig {
    HourglassConfig::desk()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Overrides the seeds of every section.
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub data: DataConfig,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub eval: EvalConfig,
    #[serde(default)]
    pub crowd: CrowdConfig,
    #[serde(default = "desk")]
    pub model: HourglassConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            data: DataConfig::default(),
            train: TrainConfig::default(),
            eval: EvalConfig::default(),
            crowd: CrowdConfig::default(),
            model: desk(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataConfig {
    pub width: usize,
    pub height: usize,
    pub n_images: usize,
    pub pairs_per_image: usize,
    pub strategy: Strategy,
    pub equal_ratio: f64,
    pub d_min: f64,
    pub d_max: f64,
    pub mix_ratio: f64,
}

impl Default for DataConfig {
    fn default() -> Self {
        let s = SamplerConfig::new(48, 48, Strategy::DistanceConstrained, 0);
        Self {
            width: 48,
            height: 48,
            n_images: 200,
            pairs_per_image: 50,
            strategy: Strategy::DistanceConstrained,
            equal_ratio: DEFAULT_EQUAL_RATIO,
            d_min: s.d_min,
            d_max: s.d_max,
            mix_ratio: s.mix_ratio,
        }
    }
}

impl DataConfig {
    pub fn sampler(&self, width: usize, height: usize, seed: u64) -> SamplerConfig {
        SamplerConfig {
            d_min: self.d_min,
            d_max: self.d_max,
            mix_ratio: self.mix_ratio,
            ..SamplerConfig::new(width, height, self.strategy, seed)
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalConfig {
    /// Fixed threshold; calibrated on the evaluated pairs when absent.
    pub tau: Option<f64>,
    pub negate: bool,
    pub target_mean: Option<f64>,
    pub target_std: Option<f64>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            tau: None,
            negate: true,
            target_mean: None,
            target_std: None,
        }
    }
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let mut cfg: RunConfig = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).with_context(|| format!("reading config {}", p.display()))?;
                toml::from_str(&text).with_context(|| format!("parsing config {}", p.display()))?
            }
            None => RunConfig::default(),
        };
        cfg.sync_seeds();
        Ok(cfg)
    }

    pub fn set_seed(&mut self, seed: u64) {
        self.seed = seed;
        self.sync_seeds();
    }

    fn sync_seeds(&mut self) {
        self.train.seed = self.seed;
        self.crowd.seed = self.seed;
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }

    /// Hex SHA-256 of the effective configuration.
    pub fn digest(&self) -> Result<String> {
        Ok(hex::encode(Sha256::digest(self.to_toml()?.as_bytes())))
    }
}
