//! Desk-scale synthetic datasets with known generative parameters.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use super::dataset::{chronological_splits, Dataset, GroundTruth, SpatialDomain, Splits};
use crate::diffcore::Tensor;
use crate::error::{Error, Result};
use crate::spatial::{gaussian_kernel_adjacency, random_walk_support, SpatialGraph};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NoiseKind {
    #[default]
    Gaussian,
    /// Uniform on `[0, 1)`.
    Uniform,
    PointMass,
}

impl NoiseKind {
    fn draw(self, rng: &mut ChaCha8Rng) -> f64 {
        match self {
            NoiseKind::Gaussian => rng.sample(StandardNormal),
            NoiseKind::Uniform => rng.random::<f64>(),
            NoiseKind::PointMass => 0.0,
        }
    }

    /// Quantile of the unit-scale noise at `level`.
    pub fn quantile(self, level: f64) -> f64 {
        match self {
            NoiseKind::Gaussian => Normal::standard().inverse_cdf(level),
            NoiseKind::Uniform => level,
            NoiseKind::PointMass => 0.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum GeneratorSpec {
    /// `x_{t+1} = decay * S x_t + noise_std * eps` on a random geometric
    /// graph, `S` its random-walk matrix.
    GraphDiffusion {
        #[serde(default = "d_nodes")]
        nodes: usize,
        #[serde(default = "d_steps")]
        steps: usize,
        #[serde(default = "d_one")]
        decay: f64,
        #[serde(default = "d_noise")]
        noise_std: f64,
        #[serde(default = "d_sigma")]
        kernel_sigma_sq: f64,
        #[serde(default = "d_threshold")]
        kernel_threshold: f64,
        #[serde(default)]
        level: f64,
    },
    /// A travelling sinusoid on a grid plus spatially smoothed noise.
    SeasonalGrid {
        #[serde(default = "d_width")]
        width: usize,
        #[serde(default = "d_height")]
        height: usize,
        #[serde(default = "d_steps")]
        steps: usize,
        #[serde(default = "d_period")]
        period: f64,
        #[serde(default = "d_one")]
        amplitude: f64,
        #[serde(default = "d_noise")]
        noise_std: f64,
        #[serde(default = "d_one")]
        correlation_length: f64,
        #[serde(default)]
        level: f64,
    },
    /// Independent pairs `y = x + scale (1 + kappa x) e`, stored as
    /// two-frame windows (`input_len = horizon = 1`).
    HeteroscedasticScalar {
        #[serde(default = "d_train")]
        train: usize,
        #[serde(default = "d_validation")]
        validation: usize,
        #[serde(default = "d_test")]
        test: usize,
        #[serde(default)]
        noise: NoiseKind,
        #[serde(default = "d_one")]
        scale: f64,
        #[serde(default)]
        kappa: f64,
        #[serde(default)]
        x_min: f64,
        #[serde(default = "d_xmax")]
        x_max: f64,
    },
}

fn d_nodes() -> usize {
    10
}
fn d_steps() -> usize {
    2000
}
fn d_one() -> f64 {
    1.0
}
fn d_noise() -> f64 {
    0.1
}
fn d_sigma() -> f64 {
    0.1
}
fn d_threshold() -> f64 {
    0.1
}
fn d_width() -> usize {
    6
}
fn d_height() -> usize {
    5
}
fn d_period() -> f64 {
    24.0
}
fn d_train() -> usize {
    5000
}
fn d_validation() -> usize {
    500
}
fn d_test() -> usize {
    100
}
fn d_xmax() -> f64 {
    4.0
}

/// How a generated series is cut into windows.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Windowing {
    pub input_len: usize,
    pub horizon: usize,
    pub split: [f64; 3],
}

impl GeneratorSpec {
    pub fn name(&self) -> &'static str {
        match self {
            GeneratorSpec::GraphDiffusion { .. } => "graph-diffusion",
            GeneratorSpec::SeasonalGrid { .. } => "seasonal-grid",
            GeneratorSpec::HeteroscedasticScalar { .. } => "heteroscedastic-scalar",
        }
    }
}

fn stamps(n: usize) -> Vec<String> {
    (0..n).map(|t| t.to_string()).collect()
}

fn positive(name: &str, v: usize) -> Result<()> {
    if v == 0 {
        return Err(Error::Config(format!("generator {name} must be positive")));
    }
    Ok(())
}

/// Generates a dataset; identical `(spec, seed, windowing)` give
/// identical datasets.
pub fn make_synthetic(spec: &GeneratorSpec, seed: u64, windowing: Windowing) -> Result<Dataset> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut params = BTreeMap::new();
    let ds = match *spec {
        GeneratorSpec::GraphDiffusion { nodes, steps, decay, noise_std, kernel_sigma_sq, kernel_threshold, level } => {
            positive("nodes", nodes)?;
            positive("steps", steps)?;
            let pos: Vec<[f64; 2]> = (0..nodes).map(|_| [rng.random::<f64>(), rng.random::<f64>()]).collect();
            let mut dist = Tensor::zeros(&[nodes, nodes]);
            for i in 0..nodes {
                for j in 0..nodes {
                    dist.set2(i, j, (pos[i][0] - pos[j][0]).hypot(pos[i][1] - pos[j][1]));
                }
            }
            let graph = gaussian_kernel_adjacency(&dist, kernel_sigma_sq, kernel_threshold)?;
            let s = random_walk_support(&graph);
            let mut x: Vec<f64> = (0..nodes).map(|_| rng.sample(StandardNormal)).collect();
            let mut values = Vec::with_capacity(steps * nodes);
            for _ in 0..steps {
                values.extend(x.iter().map(|v| v + level));
                let next: Vec<f64> = (0..nodes)
                    .map(|i| {
                        let drift: f64 = (0..nodes).map(|j| s.matrix().get2(i, j) * x[j]).sum();
                        decay * drift + noise_std * rng.sample::<f64, _>(StandardNormal)
                    })
                    .collect();
                x = next;
            }
            params.insert("decay".into(), decay);
            params.insert("noise_std".into(), noise_std);
            params.insert("level".into(), level);
            let splits = chronological_splits(steps, windowing.input_len, windowing.horizon, windowing.split)?;
            let ids = (0..nodes).map(|i| format!("n{i}")).collect();
            Dataset::new(
                "graph-diffusion",
                ids,
                stamps(steps),
                1,
                values,
                vec![true; steps * nodes],
                SpatialDomain::Graph(graph),
                windowing.input_len,
                windowing.horizon,
                splits,
            )?
        }
        GeneratorSpec::SeasonalGrid {
            width,
            height,
            steps,
            period,
            amplitude,
            noise_std,
            correlation_length,
            level,
        } => {
            positive("width", width)?;
            positive("height", height)?;
            positive("steps", steps)?;
            if !(period > 0.0 && correlation_length > 0.0) {
                return Err(Error::Config("period and correlation_length must be positive".into()));
            }
            let cells = width * height;
            let coord = |k: usize| ((k / height) as f64, (k % height) as f64);
            // smoothing weights, scaled so smoothed unit noise keeps unit variance
            let mut kernel = vec![0.0; cells * cells];
            for a in 0..cells {
                let (ma, na) = coord(a);
                let mut norm = 0.0;
                for b in 0..cells {
                    let (mb, nb) = coord(b);
                    let d2 = (ma - mb).powi(2) + (na - nb).powi(2);
                    let w = (-d2 / (2.0 * correlation_length * correlation_length)).exp();
                    kernel[a * cells + b] = w;
                    norm += w * w;
                }
                kernel[a * cells..(a + 1) * cells].iter_mut().for_each(|w| *w /= norm.sqrt());
            }
            let mut values = Vec::with_capacity(steps * cells);
            for t in 0..steps {
                let eps: Vec<f64> = (0..cells).map(|_| rng.sample(StandardNormal)).collect();
                for a in 0..cells {
                    let (m, n) = coord(a);
                    let phase = std::f64::consts::PI * (m / width as f64 + n / height as f64);
                    let wave = amplitude * (2.0 * std::f64::consts::PI * t as f64 / period + phase).sin();
                    let noise: f64 = (0..cells).map(|b| kernel[a * cells + b] * eps[b]).sum();
                    values.push(level + wave + noise_std * noise);
                }
            }
            params.insert("period".into(), period);
            params.insert("amplitude".into(), amplitude);
            params.insert("noise_std".into(), noise_std);
            let splits = chronological_splits(steps, windowing.input_len, windowing.horizon, windowing.split)?;
            let ids = (0..cells).map(|k| format!("r{}c{}", k / height, k % height)).collect();
            Dataset::new(
                "seasonal-grid",
                ids,
                stamps(steps),
                1,
                values,
                vec![true; steps * cells],
                SpatialDomain::Grid { width, height },
                windowing.input_len,
                windowing.horizon,
                splits,
            )?
        }
        GeneratorSpec::HeteroscedasticScalar { train, validation, test, noise, scale, kappa, x_min, x_max } => {
            positive("train", train)?;
            positive("validation", validation)?;
            positive("test", test)?;
            if windowing.input_len != 1 || windowing.horizon != 1 {
                return Err(Error::Config("heteroscedastic-scalar data needs input_len = 1 and horizon = 1".into()));
            }
            if !(x_max > x_min) {
                return Err(Error::Config("x_max must exceed x_min".into()));
            }
            let n = train + validation + test;
            let mut values = Vec::with_capacity(2 * n);
            for i in 0..n {
                let x = if i < train + validation {
                    x_min + (x_max - x_min) * rng.random::<f64>()
                } else {
                    let k = i - train - validation;
                    x_min + (x_max - x_min) * (k as f64 + 0.5) / test as f64
                };
                let y = x + scale * (1.0 + kappa * x) * noise.draw(&mut rng);
                values.push(x);
                values.push(y);
            }
            for (name, level) in [("q0.025", 0.025), ("q0.5", 0.5), ("q0.975", 0.975)] {
                params.insert(format!("{name}_offset"), noise.quantile(level));
            }
            params.insert("scale".into(), scale);
            params.insert("kappa".into(), kappa);
            let starts = |lo: usize, hi: usize| (lo..hi).map(|i| 2 * i).collect::<Vec<_>>();
            let splits = Splits {
                train: starts(0, train),
                validation: starts(train, train + validation),
                test: starts(train + validation, n),
            };
            Dataset::new(
                "heteroscedastic-scalar",
                vec!["y".into()],
                stamps(2 * n),
                1,
                values,
                vec![true; 2 * n],
                SpatialDomain::Graph(SpatialGraph::new(Tensor::identity(1))?),
                1,
                1,
                splits,
            )?
        }
    };
    let mut ds = ds;
    ds.truth = Some(GroundTruth { generator: spec.name().into(), params });
    Ok(ds)
}

#[cfg(test)]
mod tests {
    use super::*;

    const W: Windowing = Windowing { input_len: 3, horizon: 2, split: [0.7, 0.1, 0.2] };

    #[test]
    fn gaussian_offset_recorded() {
        let spec = GeneratorSpec::HeteroscedasticScalar {
            train: 50,
            validation: 10,
            test: 10,
            noise: NoiseKind::Gaussian,
            scale: 1.0,
            kappa: 0.0,
            x_min: 0.0,
            x_max: 1.0,
        };
        let ds = make_synthetic(&spec, 1, Windowing { input_len: 1, horizon: 1, split: [0.7, 0.1, 0.2] }).unwrap();
        let q = ds.truth.unwrap().params["q0.975_offset"];
        assert!((q - 1.959964).abs() < 1e-6);
    }

    #[test]
    fn noiseless_diffusion_follows_support() {
        let spec = GeneratorSpec::GraphDiffusion {
            nodes: 5,
            steps: 60,
            decay: 1.0,
            noise_std: 0.0,
            kernel_sigma_sq: 0.1,
            kernel_threshold: 0.1,
            level: 0.0,
        };
        let ds = make_synthetic(&spec, 3, W).unwrap();
        let SpatialDomain::Graph(g) = &ds.domain else { panic!("graph expected") };
        let s = random_walk_support(g);
        for t in 0..59 {
            for i in 0..5 {
                let want: f64 = (0..5).map(|j| s.matrix().get2(i, j) * ds.value(t, j, 0)).sum();
                assert!((ds.value(t + 1, i, 0) - want).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn same_seed_same_data() {
        let spec = GeneratorSpec::SeasonalGrid {
            width: 3,
            height: 2,
            steps: 100,
            period: 12.0,
            amplitude: 1.0,
            noise_std: 0.3,
            correlation_length: 1.0,
            level: 5.0,
        };
        let a = make_synthetic(&spec, 9, W).unwrap();
        let b = make_synthetic(&spec, 9, W).unwrap();
        assert_eq!(a.values(), b.values());
        let c = make_synthetic(&spec, 10, W).unwrap();
        assert_ne!(a.values(), c.values());
    }
}
