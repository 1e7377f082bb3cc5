use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::dataset::{check_split, load_dataset, CsvSchema, Dataset};
use super::synth::{make_synthetic, GeneratorSpec, Windowing};
use crate::error::{Error, Result};
use crate::models::ModelConfig;
use crate::spatial::SupportKind;
use crate::uqmethods::{MethodConfig, TrainConfig};

/// Where the series comes from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "kebab-case", deny_unknown_fields)]
pub enum DataSpec {
    Synthetic {
        generator: GeneratorSpec,
    },
    Csv {
        path: PathBuf,
        #[serde(default)]
        adjacency: Option<PathBuf>,
        /// `[width, height]` for grid data.
        #[serde(default)]
        grid: Option<[usize; 2]>,
    },
}

impl Default for DataSpec {
    fn default() -> Self {
        DataSpec::Synthetic {
            generator: GeneratorSpec::GraphDiffusion {
                nodes: 10,
                steps: 2000,
                decay: 0.9,
                noise_std: 0.1,
                kernel_sigma_sq: 0.1,
                kernel_threshold: 0.1,
                level: 0.0,
            },
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    /// Score only the first `n` test windows.
    pub max_test_windows: Option<usize>,
    /// Score `max(u, l)` in place of a crossed upper bound.
    pub clamp_crossing: bool,
}

/// One experiment: data, model, method and evaluation settings.
///
/// `model.horizon` and `model.input_dim` are overwritten from `horizon`
/// and the dataset's feature count.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    /// Seed of the method (initialization, shuffling, replicates).
    pub seed: u64,
    /// Seed of the synthetic generator.
    pub data_seed: u64,
    pub rho: f64,
    pub input_len: usize,
    pub horizon: usize,
    /// Chronological train/validation/test fractions.
    pub split: [f64; 3],
    pub output_dir: Option<PathBuf>,
    /// Diffusion supports for graph data.
    pub supports: Vec<SupportKind>,
    pub data: DataSpec,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub method: MethodConfig,
    pub eval: EvalConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            name: "experiment".into(),
            seed: 0,
            data_seed: 0,
            rho: 0.05,
            input_len: 12,
            horizon: 3,
            split: [0.7, 0.1, 0.2],
            output_dir: None,
            supports: vec![SupportKind::RandomWalk, SupportKind::ReverseRandomWalk],
            data: DataSpec::default(),
            model: ModelConfig::default(),
            train: TrainConfig::default(),
            method: MethodConfig::default(),
            eval: EvalConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads a TOML file. Relative data paths resolve against the file's
    /// directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)?;
        let mut cfg = Self::from_toml_str(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        if let DataSpec::Csv { path, adjacency, .. } = &mut cfg.data {
            if path.is_relative() {
                *path = base.join(&*path);
            }
            if let Some(a) = adjacency.as_mut().filter(|a| a.is_relative()) {
                *a = base.join(&*a);
            }
        }
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        check_split(self.split)?;
        if !(self.rho > 0.0 && self.rho < 1.0) {
            return Err(Error::Config(format!("rho must lie in (0, 1), got {}", self.rho)));
        }
        if self.input_len == 0 || self.horizon == 0 {
            return Err(Error::Config("input_len and horizon must be positive".into()));
        }
        self.model_config(self.model.input_dim).validate()?;
        self.train.validate()?;
        self.method.validate()
    }

    /// The model configuration with experiment-level overrides applied.
    pub fn model_config(&self, features: usize) -> ModelConfig {
        ModelConfig { horizon: self.horizon, input_dim: features, ..self.model.clone() }
    }

    /// Generates or loads the dataset.
    pub fn dataset(&self) -> Result<Dataset> {
        match &self.data {
            DataSpec::Synthetic { generator } => make_synthetic(
                generator,
                self.data_seed,
                Windowing { input_len: self.input_len, horizon: self.horizon, split: self.split },
            ),
            DataSpec::Csv { path, adjacency, grid } => {
                let schema = CsvSchema {
                    input_len: self.input_len,
                    horizon: self.horizon,
                    split: self.split,
                    grid: grid.map(|[w, h]| (w, h)),
                };
                load_dataset(path, adjacency.as_deref(), &schema)
            }
        }
    }

    /// Test windows after the `max_test_windows` cap.
    pub fn test_windows(&self, data: &Dataset) -> Vec<usize> {
        let t = &data.splits.test;
        t[..self.eval.max_test_windows.map_or(t.len(), |m| m.min(t.len()))].to_vec()
    }
}
