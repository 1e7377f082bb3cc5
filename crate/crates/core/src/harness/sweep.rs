use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use super::experiment::{evaluate_forecast, forecast_truth, write_atomic};
use crate::error::{Error, Result};
use crate::uqmethods::{method_samples, run_method, ForecastDims, MethodContext, MethodTag, ProbabilisticForecast};

pub const SWEEP_JSON: &str = "sweep.json";
pub const SWEEP_CSV: &str = "sweep.csv";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub samples: usize,
    pub seed: u64,
    pub mis: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepMean {
    pub samples: usize,
    pub mis: f64,
}

/// MIS against sample count, per seed and averaged over seeds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepTable {
    pub method: MethodTag,
    pub rho: f64,
    pub rows: Vec<SweepRow>,
    pub means: Vec<SweepMean>,
}

impl SweepTable {
    pub fn mis(&self, samples: usize, seed: u64) -> Option<f64> {
        self.rows.iter().find(|r| r.samples == samples && r.seed == seed).map(|r| r.mis)
    }

    pub fn mean(&self, samples: usize) -> Option<f64> {
        self.means.iter().find(|m| m.samples == samples).map(|m| m.mis)
    }

    /// Seeds whose MIS at `larger` is below their MIS at `smaller`.
    pub fn improved_seeds(&self, smaller: usize, larger: usize) -> usize {
        let seeds: Vec<u64> = self.rows.iter().filter(|r| r.samples == smaller).map(|r| r.seed).collect();
        seeds
            .into_iter()
            .filter(|&s| matches!((self.mis(larger, s), self.mis(smaller, s)), (Some(a), Some(b)) if a < b))
            .count()
    }

    /// `samples,seed,mis` rows, then one `mean` row per count.
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["samples", "seed", "mis"])?;
        for r in &self.rows {
            w.write_record([r.samples.to_string(), r.seed.to_string(), r.mis.to_string()])?;
        }
        for m in &self.means {
            w.write_record([m.samples.to_string(), "mean".into(), m.mis.to_string()])?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        write_atomic(&dir.join(SWEEP_JSON), &serde_json::to_vec_pretty(self)?)?;
        write_atomic(&dir.join(SWEEP_CSV), self.to_csv()?.as_bytes())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join(SWEEP_JSON);
        if !path.exists() {
            return Err(Error::invalid(format!("no sweep table in {}", dir.display())));
        }
        Ok(serde_json::from_slice(&std::fs::read(path)?)?)
    }
}

fn check_counts(cfg: &ExperimentConfig, counts: &[usize]) -> Result<()> {
    if !cfg.method.tag.is_sampling() {
        return Err(Error::Config(format!("{} is not a sampling method", cfg.method.tag)));
    }
    if counts.is_empty() || counts.windows(2).any(|w| w[0] >= w[1]) || counts[0] < 2 {
        return Err(Error::Config("sample counts must be ascending and at least 2".into()));
    }
    Ok(())
}

/// Overall MIS for each seed and sample count. Samples are drawn once
/// per seed at the largest count; smaller counts reuse the prefix.
pub fn sample_complexity_sweep(cfg: &ExperimentConfig, counts: &[usize], seeds: &[u64]) -> Result<SweepTable> {
    cfg.validate()?;
    check_counts(cfg, counts)?;
    let largest = *counts.last().expect("nonempty counts");
    let method = cfg.method.with_sample_count(largest)?;
    let data = cfg.dataset()?;
    let model = cfg.model_config(data.features());
    let layout = data.layout(&cfg.supports)?;
    let test = cfg.test_windows(&data);
    let dims = ForecastDims { windows: test.len(), horizon: data.horizon, nodes: data.nodes(), features: data.features() };
    let (truth, mask) = forecast_truth(&data, dims, &test);
    let indices: Vec<usize> = (0..largest).collect();
    let mut rows = Vec::new();
    for &seed in seeds {
        let ctx = MethodContext { model: &model, layout: &layout, data: &data, train: &cfg.train, rho: cfg.rho, test: &test, seed };
        let samples = method_samples(&ctx, &method, &indices)?;
        let full = ProbabilisticForecast::from_samples(cfg.method.tag, cfg.rho, dims, test.clone(), samples)?;
        for &count in counts {
            let f = full.prefix(count)?;
            let (_, _, overall) = evaluate_forecast(&f, &truth, &mask, cfg.eval.clamp_crossing)?;
            let mis = overall.mis.ok_or_else(|| Error::invalid("sampled forecast lacks an interval"))?;
            rows.push(SweepRow { samples: count, seed, mis });
        }
    }
    Ok(finish(cfg, counts, rows))
}

/// The same table computed by an independent run at every count.
pub fn sample_complexity_sweep_from_scratch(cfg: &ExperimentConfig, counts: &[usize], seeds: &[u64]) -> Result<SweepTable> {
    cfg.validate()?;
    check_counts(cfg, counts)?;
    let data = cfg.dataset()?;
    let model = cfg.model_config(data.features());
    let layout = data.layout(&cfg.supports)?;
    let test = cfg.test_windows(&data);
    let mut rows = Vec::new();
    for &seed in seeds {
        for &count in counts {
            let method = cfg.method.with_sample_count(count)?;
            let ctx =
                MethodContext { model: &model, layout: &layout, data: &data, train: &cfg.train, rho: cfg.rho, test: &test, seed };
            let out = run_method(&ctx, &method)?;
            let (truth, mask) = forecast_truth(&data, out.forecast.dims, &test);
            let (_, _, overall) = evaluate_forecast(&out.forecast, &truth, &mask, cfg.eval.clamp_crossing)?;
            rows.push(SweepRow { samples: count, seed, mis: overall.mis.unwrap_or(f64::NAN) });
        }
    }
    Ok(finish(cfg, counts, rows))
}

fn finish(cfg: &ExperimentConfig, counts: &[usize], mut rows: Vec<SweepRow>) -> SweepTable {
    rows.sort_by_key(|r| (r.samples, r.seed));
    let means = counts
        .iter()
        .map(|&c| {
            let v: Vec<f64> = rows.iter().filter(|r| r.samples == c).map(|r| r.mis).collect();
            SweepMean { samples: c, mis: v.iter().sum::<f64>() / v.len().max(1) as f64 }
        })
        .collect();
    SweepTable { method: cfg.method.tag, rho: cfg.rho, rows, means }
}
