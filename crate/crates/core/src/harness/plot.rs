use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::experiment::{write_atomic, ForecastArtifact, ResultsRecord, RESULTS_FILE};
use super::sweep::SweepTable;
use crate::error::{Error, Result};

/// Which plot-ready table to emit.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PlotKind {
    /// `time,location_id,truth,mean,lower,upper,method` for one window.
    ForecastBand,
    /// `samples,seed,mis`.
    Sweep,
    /// `method,horizon,coverage,width`.
    CoverageVsWidth,
}

impl PlotKind {
    pub fn file_name(self) -> &'static str {
        match self {
            PlotKind::ForecastBand => "forecast_band.csv",
            PlotKind::Sweep => "sweep.csv",
            PlotKind::CoverageVsWidth => "coverage_vs_width.csv",
        }
    }
}

impl FromStr for PlotKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "forecast-band" => Ok(PlotKind::ForecastBand),
            "sweep" => Ok(PlotKind::Sweep),
            "coverage-vs-width" => Ok(PlotKind::CoverageVsWidth),
            _ => Err(Error::Config(format!("unknown plot kind `{s}`"))),
        }
    }
}

/// Window and feature shown by the forecast-band table.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct BandSelection {
    pub window: usize,
    pub feature: usize,
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn finish(w: csv::Writer<Vec<u8>>) -> Result<Vec<u8>> {
    w.into_inner().map_err(|e| Error::Io(e.into_error()))
}

/// Forecast-band rows of one window for every run directory.
pub fn forecast_band_csv(runs: &[PathBuf], sel: BandSelection) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["time", "location_id", "truth", "mean", "lower", "upper", "method"])?;
    for dir in runs {
        let a = ForecastArtifact::load(dir)?;
        let d = a.forecast.dims;
        if sel.window >= d.windows || sel.feature >= d.features {
            return Err(Error::invalid(format!("{} has no window {} feature {}", dir.display(), sel.window, sel.feature)));
        }
        for h in 0..d.horizon {
            for p in 0..d.nodes {
                let i = d.index(sel.window, h, p, sel.feature);
                let truth = if a.mask[i] { a.truth[i].to_string() } else { String::new() };
                w.write_record([
                    a.target_times[sel.window * d.horizon + h].clone(),
                    a.node_ids[p].clone(),
                    truth,
                    a.forecast.mean[i].to_string(),
                    opt(a.forecast.lower.as_ref().map(|l| l[i])),
                    opt(a.forecast.upper.as_ref().map(|u| u[i])),
                    a.forecast.method.to_string(),
                ])?;
            }
        }
    }
    finish(w)
}

/// Per-step coverage and width of every run directory's record.
pub fn coverage_width_csv(runs: &[PathBuf]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["method", "horizon", "coverage", "width"])?;
    for dir in runs {
        let path = dir.join(RESULTS_FILE);
        if !path.exists() {
            return Err(Error::invalid(format!("no results record in {}", dir.display())));
        }
        let r = ResultsRecord::load(path)?;
        for h in &r.per_horizon {
            w.write_record([
                r.method.to_string(),
                h.step.to_string(),
                opt(h.metrics.coverage),
                opt(h.metrics.interval_width),
            ])?;
        }
    }
    finish(w)
}

/// Per-seed sweep rows of every sweep directory.
pub fn sweep_csv(runs: &[PathBuf]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["samples", "seed", "mis"])?;
    for dir in runs {
        for r in SweepTable::load(dir)?.rows {
            w.write_record([r.samples.to_string(), r.seed.to_string(), r.mis.to_string()])?;
        }
    }
    finish(w)
}

/// Writes the `kind` table built from `runs` into `out_dir` and returns
/// its path.
pub fn emit_plot_data(runs: &[PathBuf], kind: PlotKind, sel: BandSelection, out_dir: &Path) -> Result<PathBuf> {
    if runs.is_empty() {
        return Err(Error::invalid("no result directories given"));
    }
    let bytes = match kind {
        PlotKind::ForecastBand => forecast_band_csv(runs, sel)?,
        PlotKind::Sweep => sweep_csv(runs)?,
        PlotKind::CoverageVsWidth => coverage_width_csv(runs)?,
    };
    std::fs::create_dir_all(out_dir)?;
    let path = out_dir.join(kind.file_name());
    write_atomic(&path, &bytes)?;
    Ok(path)
}
