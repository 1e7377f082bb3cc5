use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use super::dataset::Dataset;
use crate::error::{Error, Result};
use crate::scoring::{summary_metrics, Bounds, MetricOptions, SummaryMetrics};
use crate::uqmethods::{run_method, ForecastDims, MethodContext, MethodOutput, MethodTag, ProbabilisticForecast};

/// Version of the results layout, bumped on breaking changes.
pub const RESULTS_SCHEMA_VERSION: u32 = 1;

/// JSON Schema of [`ResultsRecord`].
pub const RESULTS_SCHEMA: &str = include_str!("../../schema/results.schema.json");

pub const RESULTS_FILE: &str = "results.json";
pub const FORECAST_FILE: &str = "forecast.bin";
pub const FORECAST_SIDECAR: &str = "forecast.json";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetSummary {
    pub name: String,
    pub steps: usize,
    pub nodes: usize,
    pub features: usize,
    pub train_windows: usize,
    pub validation_windows: usize,
    pub test_windows: usize,
}

/// Metrics of one horizon step (`step`, 1-based), or pooled over steps
/// `1..=step` for cumulative rows.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HorizonMetrics {
    pub step: usize,
    #[serde(flatten)]
    pub metrics: SummaryMetrics,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainingSummary {
    pub epochs_run: usize,
    pub best_epoch: usize,
    pub best_validation_loss: f64,
}

/// Everything one run reports.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultsRecord {
    pub schema_version: u32,
    pub name: String,
    pub method: MethodTag,
    pub seed: u64,
    pub rho: f64,
    /// Sampled forecasts behind the interval, for sampling methods.
    pub samples: Option<usize>,
    pub crossing: bool,
    pub dataset: DatasetSummary,
    pub per_horizon: Vec<HorizonMetrics>,
    pub cumulative: Vec<HorizonMetrics>,
    pub overall: SummaryMetrics,
    pub training: Vec<TrainingSummary>,
    pub max_abs_xi: Option<f64>,
    pub wall_clock_seconds: f64,
    pub config: ExperimentConfig,
}

impl ResultsRecord {
    /// The record with the wall-clock time zeroed, for comparing reruns.
    pub fn without_timing(&self) -> Self {
        ResultsRecord { wall_clock_seconds: 0.0, ..self.clone() }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Ok(serde_json::from_slice(&fs::read(path)?)?)
    }
}

/// Target values and observation mask aligned with a forecast, flat in
/// `[window, step, node, feature]` order, physical units.
pub fn forecast_truth(data: &Dataset, dims: ForecastDims, starts: &[usize]) -> (Vec<f64>, Vec<bool>) {
    let mut truth = vec![0.0; dims.len()];
    let mut mask = vec![false; dims.len()];
    for (w, &s) in starts.iter().enumerate() {
        for h in 0..dims.horizon {
            let t = s + data.input_len + h;
            for p in 0..dims.nodes {
                for d in 0..dims.features {
                    let i = dims.index(w, h, p, d);
                    truth[i] = data.value(t, p, d);
                    mask[i] = data.is_observed(t, p, d);
                }
            }
        }
    }
    (truth, mask)
}

fn subset_metrics(
    f: &ProbabilisticForecast,
    truth: &[f64],
    mask: &[bool],
    keep: impl Fn(usize) -> bool,
    clamp: bool,
) -> Result<SummaryMetrics> {
    let dims = f.dims;
    let per = dims.nodes * dims.features;
    let idx: Vec<usize> = (0..dims.len()).filter(|i| keep((i / per) % dims.horizon)).collect();
    let pick = |v: &[f64]| idx.iter().map(|&i| v[i]).collect::<Vec<f64>>();
    let (mean, t) = (pick(&f.mean), pick(truth));
    let m: Vec<bool> = idx.iter().map(|&i| mask[i]).collect();
    let (lo, up) = (f.lower.as_deref().map(pick), f.upper.as_deref().map(pick));
    let bounds = match (&lo, &up) {
        (Some(l), Some(u)) => Some(Bounds { lower: l, upper: u, rho: f.rho }),
        _ => None,
    };
    summary_metrics(&mean, bounds, &t, MetricOptions { mask: Some(&m), clamp_crossing: clamp })
}

/// Per-step, cumulative and overall metrics of a forecast.
pub fn evaluate_forecast(
    f: &ProbabilisticForecast,
    truth: &[f64],
    mask: &[bool],
    clamp: bool,
) -> Result<(Vec<HorizonMetrics>, Vec<HorizonMetrics>, SummaryMetrics)> {
    let h = f.dims.horizon;
    let mut per = Vec::with_capacity(h);
    let mut cum = Vec::with_capacity(h);
    for step in 0..h {
        per.push(HorizonMetrics { step: step + 1, metrics: subset_metrics(f, truth, mask, |s| s == step, clamp)? });
        cum.push(HorizonMetrics { step: step + 1, metrics: subset_metrics(f, truth, mask, |s| s <= step, clamp)? });
    }
    let overall = subset_metrics(f, truth, mask, |_| true, clamp)?;
    Ok((per, cum, overall))
}

/// A forecast bundled with its targets, as persisted next to the record.
#[derive(Clone, Debug, PartialEq)]
pub struct ForecastArtifact {
    pub forecast: ProbabilisticForecast,
    pub truth: Vec<f64>,
    pub mask: Vec<bool>,
    pub node_ids: Vec<String>,
    /// Timestamp label of each `(window, step)` target, window-major.
    pub target_times: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct ArraySpec {
    name: String,
    offset: usize,
    count: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct Sidecar {
    dtype: String,
    dims: [usize; 4],
    method: MethodTag,
    rho: f64,
    crossing: bool,
    samples: Option<usize>,
    window_starts: Vec<usize>,
    node_ids: Vec<String>,
    target_times: Vec<String>,
    arrays: Vec<ArraySpec>,
}

/// Writes `bytes` to `path` through a temporary file and a rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension(format!(
        "{}.tmp",
        path.extension().and_then(|e| e.to_str()).unwrap_or_default()
    ));
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

impl ForecastArtifact {
    pub fn new(forecast: ProbabilisticForecast, data: &Dataset) -> Self {
        let (truth, mask) = forecast_truth(data, forecast.dims, &forecast.window_starts);
        let target_times = forecast
            .window_starts
            .iter()
            .flat_map(|&s| (0..forecast.dims.horizon).map(move |h| s + data.input_len + h))
            .map(|t| data.timestamps[t].clone())
            .collect();
        ForecastArtifact { forecast, truth, mask, node_ids: data.node_ids.clone(), target_times }
    }

    /// Writes `forecast.bin` (little-endian f64) and `forecast.json`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        let f = &self.forecast;
        let mut bytes = Vec::new();
        let mut arrays = Vec::new();
        let mut push = |name: String, values: &mut dyn Iterator<Item = f64>| {
            let offset = bytes.len() / 8;
            for v in values {
                bytes.extend_from_slice(&v.to_le_bytes());
            }
            arrays.push(ArraySpec { name, offset, count: bytes.len() / 8 - offset });
        };
        push("mean".into(), &mut f.mean.iter().copied());
        if let Some(l) = &f.lower {
            push("lower".into(), &mut l.iter().copied());
        }
        if let Some(u) = &f.upper {
            push("upper".into(), &mut u.iter().copied());
        }
        push("truth".into(), &mut self.truth.iter().copied());
        push("mask".into(), &mut self.mask.iter().map(|&m| if m { 1.0 } else { 0.0 }));
        for (i, s) in f.samples.iter().flatten().enumerate() {
            push(format!("sample_{i}"), &mut s.iter().copied());
        }
        let d = f.dims;
        let sidecar = Sidecar {
            dtype: "f64-le".into(),
            dims: [d.windows, d.horizon, d.nodes, d.features],
            method: f.method,
            rho: f.rho,
            crossing: f.crossing,
            samples: f.sample_count(),
            window_starts: f.window_starts.clone(),
            node_ids: self.node_ids.clone(),
            target_times: self.target_times.clone(),
            arrays,
        };
        fs::create_dir_all(dir)?;
        write_atomic(&dir.join(FORECAST_FILE), &bytes)?;
        write_atomic(&dir.join(FORECAST_SIDECAR), &serde_json::to_vec_pretty(&sidecar)?)
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let side_path = dir.join(FORECAST_SIDECAR);
        if !side_path.exists() {
            return Err(Error::invalid(format!("no forecast artifact in {}", dir.display())));
        }
        let side: Sidecar = serde_json::from_slice(&fs::read(side_path)?)?;
        if side.dtype != "f64-le" {
            return Err(Error::invalid(format!("unsupported dtype {}", side.dtype)));
        }
        let bytes = fs::read(dir.join(FORECAST_FILE))?;
        let values: Vec<f64> =
            bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk"))).collect();
        let [windows, horizon, nodes, features] = side.dims;
        let dims = ForecastDims { windows, horizon, nodes, features };
        let get = |name: &str| -> Option<Result<Vec<f64>>> {
            side.arrays.iter().find(|a| a.name == name).map(|a| {
                values
                    .get(a.offset..a.offset + a.count)
                    .map(<[f64]>::to_vec)
                    .ok_or_else(|| Error::invalid(format!("array {name} runs past the end of the data")))
            })
        };
        let need = |name: &str| get(name).unwrap_or_else(|| Err(Error::invalid(format!("artifact lacks {name}"))));
        let samples: Option<Vec<Vec<f64>>> = match side.samples {
            Some(s) => Some((0..s).map(|i| need(&format!("sample_{i}"))).collect::<Result<_>>()?),
            None => None,
        };
        let forecast = ProbabilisticForecast {
            method: side.method,
            rho: side.rho,
            dims,
            window_starts: side.window_starts,
            mean: need("mean")?,
            lower: get("lower").transpose()?,
            upper: get("upper").transpose()?,
            samples,
            crossing: side.crossing,
        };
        Ok(ForecastArtifact {
            forecast,
            truth: need("truth")?,
            mask: need("mask")?.into_iter().map(|m| m != 0.0).collect(),
            node_ids: side.node_ids,
            target_times: side.target_times,
        })
    }
}

/// Output of [`run_experiment`].
#[derive(Clone, Debug)]
pub struct ExperimentOutput {
    pub record: ResultsRecord,
    pub artifact: ForecastArtifact,
    /// Directory written to, when the config names one.
    pub written_to: Option<PathBuf>,
}

fn summarize(data: &Dataset) -> DatasetSummary {
    DatasetSummary {
        name: data.name.clone(),
        steps: data.steps(),
        nodes: data.nodes(),
        features: data.features(),
        train_windows: data.splits.train.len(),
        validation_windows: data.splits.validation.len(),
        test_windows: data.splits.test.len(),
    }
}

/// Scores a method output and assembles its record.
pub fn build_record(
    cfg: &ExperimentConfig,
    data: &Dataset,
    out: &MethodOutput,
    wall_clock_seconds: f64,
) -> Result<(ResultsRecord, ForecastArtifact)> {
    let artifact = ForecastArtifact::new(out.forecast.clone(), data);
    let (per_horizon, cumulative, overall) =
        evaluate_forecast(&artifact.forecast, &artifact.truth, &artifact.mask, cfg.eval.clamp_crossing)?;
    let record = ResultsRecord {
        schema_version: RESULTS_SCHEMA_VERSION,
        name: cfg.name.clone(),
        method: cfg.method.tag,
        seed: cfg.seed,
        rho: cfg.rho,
        samples: out.forecast.sample_count(),
        crossing: out.forecast.crossing,
        dataset: summarize(data),
        per_horizon,
        cumulative,
        overall,
        training: out
            .reports
            .iter()
            .map(|r| TrainingSummary {
                epochs_run: r.epochs_run,
                best_epoch: r.best_epoch,
                best_validation_loss: r.best_validation_loss,
            })
            .collect(),
        max_abs_xi: out.max_abs_xi,
        wall_clock_seconds,
        config: cfg.clone(),
    };
    Ok((record, artifact))
}

/// Runs the configured method on the configured data and, when
/// `output_dir` is set, writes `results.json` plus the forecast
/// artifact. Nothing is written unless the whole run succeeds.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutput> {
    cfg.validate()?;
    let start = Instant::now();
    let data = cfg.dataset()?;
    let model = cfg.model_config(data.features());
    let layout = data.layout(&cfg.supports)?;
    let test = cfg.test_windows(&data);
    if test.is_empty() {
        return Err(Error::invalid("no test windows"));
    }
    let ctx = MethodContext {
        model: &model,
        layout: &layout,
        data: &data,
        train: &cfg.train,
        rho: cfg.rho,
        test: &test,
        seed: cfg.seed,
    };
    let out = run_method(&ctx, &cfg.method)?;
    let (record, artifact) = build_record(cfg, &data, &out, start.elapsed().as_secs_f64())?;
    let written_to = match &cfg.output_dir {
        Some(dir) => {
            artifact.save(dir)?;
            write_atomic(&dir.join(RESULTS_FILE), &serde_json::to_vec_pretty(&record)?)?;
            Some(dir.clone())
        }
        None => None,
    };
    Ok(ExperimentOutput { record, artifact, written_to })
}
