//! Versioned JSON configuration for batch runs.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimator::EstimatorConfig;
use crate::rmt::DensityOptions;
use crate::sampling::ModelSpec;
use crate::weights::WeightSpec;

pub const CONFIG_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    #[default]
    Csv,
    Json,
}

impl std::str::FromStr for OutputFormat {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(Self::Csv),
            "json" => Ok(Self::Json),
            other => Err(Error::Config(format!("unknown format {other:?}"))),
        }
    }
}

/// Sizes and repetitions of a convergence study.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConvergenceSpec {
    /// `(N, n)` pairs sharing one aspect ratio.
    pub sizes: Vec<(usize, usize)>,
    pub reps: usize,
}

impl Default for ConvergenceSpec {
    fn default() -> Self {
        Self {
            sizes: vec![(50, 250), (100, 500), (200, 1000), (400, 2000)],
            reps: 10,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub version: u32,
    pub model: ModelSpec,
    pub weight: WeightSpec,
    #[serde(default)]
    pub estimator: EstimatorConfig,
    #[serde(default)]
    pub density: DensityOptions,
    pub seeds: Vec<u64>,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub format: OutputFormat,
    #[serde(default)]
    pub convergence: ConvergenceSpec,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

impl ExperimentConfig {
    /// The three-cluster setup at the given size with `alpha = 0.1`.
    pub fn three_cluster(dim: usize, samples: usize) -> Self {
        Self {
            version: CONFIG_VERSION,
            model: ModelSpec::three_cluster(dim, samples),
            weight: WeightSpec::student(0.1),
            estimator: EstimatorConfig::default(),
            density: DensityOptions::default(),
            seeds: vec![1],
            output_dir: default_output_dir(),
            format: OutputFormat::Csv,
            convergence: ConvergenceSpec::default(),
        }
    }

    pub fn aspect_ratio(&self) -> f64 {
        self.model.dim as f64 / self.model.samples as f64
    }

    pub fn validate(&self) -> Result<()> {
        if self.version != CONFIG_VERSION {
            return Err(Error::Config(format!(
                "config version {} is not supported (expected {CONFIG_VERSION})",
                self.version
            )));
        }
        if self.seeds.is_empty() {
            return Err(Error::Config("at least one seed is required".into()));
        }
        if self.model.dim == 0 || self.model.samples <= self.model.dim {
            return Err(Error::Config(format!(
                "need 0 < N < n, got N = {}, n = {}",
                self.model.dim, self.model.samples
            )));
        }
        self.density.validate()?;
        self.estimator
            .validate(self.model.dim)
            .map_err(|e| Error::Config(e.to_string()))?;
        let c = self.aspect_ratio();
        for &(dim, samples) in &self.convergence.sizes {
            if samples == 0 || (dim as f64 / samples as f64 - c).abs() > 1e-12 {
                return Err(Error::Config(format!(
                    "convergence size ({dim}, {samples}) does not share c = {c}"
                )));
            }
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Config(e.to_string()))
    }
}
