use serde::{Deserialize, Serialize};

use crate::diffcore::Padding;
use crate::error::{Error, Result};
use crate::scoring::SPLINE_PARAMS;
use crate::spatial::GraphSupport;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CellKind {
    GridConv,
    #[default]
    GraphConv,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Gating {
    /// `h' = sigmoid(W^h * h + W^x * x)`.
    Plain,
    #[default]
    Gru,
}

/// Output head layout.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum HeadKind {
    #[default]
    Point,
    /// Quantiles at `rho / 2`, 0.5 and `1 - rho / 2` (0.025, 0.5, 0.975
    /// at the default `rho = 0.05`).
    #[serde(rename = "quantile-3")]
    Quantile3,
    /// Lower bound, point, upper bound.
    #[serde(rename = "interval-3")]
    Interval3,
    /// Raw spline parameters per scalar target.
    #[serde(rename = "spline-11")]
    Spline11,
}

impl HeadKind {
    pub fn labels(self) -> &'static [&'static str] {
        match self {
            HeadKind::Point => &["point"],
            HeadKind::Quantile3 => &["q-lower", "q-median", "q-upper"],
            HeadKind::Interval3 => &["lower", "point", "upper"],
            HeadKind::Spline11 => &["spline"],
        }
    }

    /// Output columns per target feature.
    pub fn width_per_feature(self) -> usize {
        match self {
            HeadKind::Point => 1,
            HeadKind::Quantile3 | HeadKind::Interval3 => 3,
            HeadKind::Spline11 => SPLINE_PARAMS,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub cell: CellKind,
    pub hidden_units: usize,
    pub layers: usize,
    /// Graph cells only.
    pub diffusion_steps: usize,
    /// Grid cells only; odd.
    pub kernel_size: usize,
    pub horizon: usize,
    pub head: HeadKind,
    /// Inference-time weight dropout for the MC-dropout method.
    pub dropout_rate: f64,
    pub gating: Gating,
    /// Features per location, `D`.
    pub input_dim: usize,
    /// Predict the change from the decoder input instead of the level.
    pub residual: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            cell: CellKind::GraphConv,
            hidden_units: 16,
            layers: 1,
            diffusion_steps: 2,
            kernel_size: 3,
            horizon: 3,
            head: HeadKind::Point,
            dropout_rate: 0.05,
            gating: Gating::Gru,
            input_dim: 1,
            residual: true,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("hidden_units", self.hidden_units),
            ("layers", self.layers),
            ("horizon", self.horizon),
            ("input_dim", self.input_dim),
        ];
        if let Some((name, _)) = positive.iter().find(|(_, v)| *v == 0) {
            return Err(Error::Config(format!("model {name} must be positive")));
        }
        match self.cell {
            CellKind::GraphConv if self.diffusion_steps == 0 => {
                return Err(Error::Config("diffusion_steps must be positive".into()))
            }
            CellKind::GridConv if self.kernel_size.is_multiple_of(2) => {
                return Err(Error::Config(format!("kernel_size must be odd, got {}", self.kernel_size)))
            }
            _ => {}
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(Error::Config(format!("dropout_rate must lie in [0, 1), got {}", self.dropout_rate)));
        }
        Ok(())
    }
}

/// Where the locations live: on a graph with diffusion supports, or on a
/// `width x height` grid.
#[derive(Clone, Debug, PartialEq)]
pub enum SpatialLayout {
    Graph { supports: Vec<GraphSupport> },
    Grid { width: usize, height: usize, padding: Padding },
}

impl SpatialLayout {
    pub fn node_count(&self) -> usize {
        match self {
            SpatialLayout::Graph { supports } => supports.first().map_or(0, |s| s.node_count()),
            SpatialLayout::Grid { width, height, .. } => width * height,
        }
    }

    pub(crate) fn check(&self, config: &ModelConfig) -> Result<()> {
        match (self, config.cell) {
            (SpatialLayout::Graph { supports }, CellKind::GraphConv) => {
                let p = self.node_count();
                if supports.is_empty() || p == 0 || supports.iter().any(|s| s.node_count() != p) {
                    return Err(Error::Config("graph layout needs supports of one common size".into()));
                }
                Ok(())
            }
            (SpatialLayout::Grid { width, height, .. }, CellKind::GridConv) if width * height > 0 => Ok(()),
            _ => Err(Error::Config(format!("{:?} cell does not fit the spatial layout", config.cell))),
        }
    }

    /// Rows of a spatial weight matrix reading `c_in` channels.
    pub(crate) fn weight_rows(&self, config: &ModelConfig, c_in: usize) -> usize {
        match self {
            SpatialLayout::Graph { supports } => supports.len() * config.diffusion_steps * c_in,
            SpatialLayout::Grid { .. } => config.kernel_size * config.kernel_size * c_in,
        }
    }
}
