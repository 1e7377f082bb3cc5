use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scoring::empirical_interval;

/// Stable method identifiers used by configuration files and the CLI.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MethodTag {
    #[default]
    Point,
    Bootstrap,
    Quantile,
    Sq,
    Mis,
    McDropout,
    SgMcmc,
}

impl MethodTag {
    pub const ALL: [MethodTag; 7] = [
        MethodTag::Point,
        MethodTag::Bootstrap,
        MethodTag::Quantile,
        MethodTag::Sq,
        MethodTag::Mis,
        MethodTag::McDropout,
        MethodTag::SgMcmc,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            MethodTag::Point => "point",
            MethodTag::Bootstrap => "bootstrap",
            MethodTag::Quantile => "quantile",
            MethodTag::Sq => "sq",
            MethodTag::Mis => "mis",
            MethodTag::McDropout => "mc-dropout",
            MethodTag::SgMcmc => "sg-mcmc",
        }
    }

    /// Methods whose intervals come from a batch of sampled forecasts.
    pub fn is_sampling(self) -> bool {
        matches!(self, MethodTag::Bootstrap | MethodTag::McDropout | MethodTag::SgMcmc)
    }
}

impl fmt::Display for MethodTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for MethodTag {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        MethodTag::ALL
            .into_iter()
            .find(|t| t.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown method `{s}`")))
    }
}

/// Array extents of a forecast: `windows x horizon x nodes x features`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ForecastDims {
    pub windows: usize,
    pub horizon: usize,
    pub nodes: usize,
    pub features: usize,
}

impl ForecastDims {
    pub fn len(&self) -> usize {
        self.windows * self.horizon * self.nodes * self.features
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn index(&self, window: usize, step: usize, node: usize, feature: usize) -> usize {
        ((window * self.horizon + step) * self.nodes + node) * self.features + feature
    }
}

/// Mean forecast with optional `(1 - rho)` bounds, in physical units.
///
/// Arrays are flat in `[window, step, node, feature]` order.
#[derive(Clone, Debug, PartialEq)]
pub struct ProbabilisticForecast {
    pub method: MethodTag,
    pub rho: f64,
    pub dims: ForecastDims,
    /// Start index of each forecast window in the source series.
    pub window_starts: Vec<usize>,
    pub mean: Vec<f64>,
    pub lower: Option<Vec<f64>>,
    pub upper: Option<Vec<f64>>,
    /// `S` sampled forecasts, for sampling-based methods.
    pub samples: Option<Vec<Vec<f64>>>,
    /// Some position has `upper < lower`.
    pub crossing: bool,
}

impl ProbabilisticForecast {
    pub fn point(method: MethodTag, rho: f64, dims: ForecastDims, window_starts: Vec<usize>, mean: Vec<f64>) -> Self {
        ProbabilisticForecast { method, rho, dims, window_starts, mean, lower: None, upper: None, samples: None, crossing: false }
    }

    /// Head-based bounds; crossing is recorded, never repaired.
    pub fn with_bounds(
        method: MethodTag,
        rho: f64,
        dims: ForecastDims,
        window_starts: Vec<usize>,
        mean: Vec<f64>,
        lower: Vec<f64>,
        upper: Vec<f64>,
    ) -> Self {
        let crossing = lower.iter().zip(&upper).any(|(l, u)| u < l);
        ProbabilisticForecast {
            method,
            rho,
            dims,
            window_starts,
            mean,
            lower: Some(lower),
            upper: Some(upper),
            samples: None,
            crossing,
        }
    }

    /// Averages the samples and takes order-statistic bounds per position.
    pub fn from_samples(
        method: MethodTag,
        rho: f64,
        dims: ForecastDims,
        window_starts: Vec<usize>,
        samples: Vec<Vec<f64>>,
    ) -> Result<Self> {
        if samples.len() < 2 {
            return Err(Error::invalid(format!(
                "{method} needs at least two samples for an interval, got {}",
                samples.len()
            )));
        }
        let n = dims.len();
        if samples.iter().any(|s| s.len() != n) {
            return Err(Error::shape("samples", format!("every sample must hold {n} values")));
        }
        let s = samples.len() as f64;
        let mut mean = vec![0.0; n];
        let mut lower = vec![0.0; n];
        let mut upper = vec![0.0; n];
        let mut column = vec![0.0; samples.len()];
        for i in 0..n {
            for (c, smp) in column.iter_mut().zip(&samples) {
                *c = smp[i];
            }
            mean[i] = column.iter().sum::<f64>() / s;
            let iv = empirical_interval(&column, rho)?;
            lower[i] = iv.lower;
            upper[i] = iv.upper;
        }
        Ok(ProbabilisticForecast {
            method,
            rho,
            dims,
            window_starts,
            mean,
            lower: Some(lower),
            upper: Some(upper),
            samples: Some(samples),
            crossing: false,
        })
    }

    pub fn sample_count(&self) -> Option<usize> {
        self.samples.as_ref().map(Vec::len)
    }

    /// The same forecast rebuilt from its first `count` samples.
    pub fn prefix(&self, count: usize) -> Result<Self> {
        let samples = self.samples.as_ref().ok_or_else(|| Error::invalid("forecast holds no samples"))?;
        if count > samples.len() {
            return Err(Error::invalid(format!("asked for {count} of {} samples", samples.len())));
        }
        Self::from_samples(self.method, self.rho, self.dims, self.window_starts.clone(), samples[..count].to_vec())
    }
}
