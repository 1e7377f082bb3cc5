//! Datasets, synthetic generators, experiment configuration and
//! orchestration, results persistence, sample-complexity sweeps and
//! plot-data emission.

mod config;
mod dataset;
mod experiment;
pub mod oracles;
mod plot;
mod sweep;
mod synth;

pub use config::{DataSpec, EvalConfig, ExperimentConfig};
pub use dataset::{
    check_split, chronological_splits, load_dataset, read_series_csv, Batch, CsvSchema, Dataset, GroundTruth,
    Normalizer, SpatialDomain, Splits,
};
pub use experiment::{
    build_record, evaluate_forecast, forecast_truth, run_experiment, write_atomic, DatasetSummary, ExperimentOutput,
    ForecastArtifact, HorizonMetrics, ResultsRecord, TrainingSummary, FORECAST_FILE, FORECAST_SIDECAR, RESULTS_FILE,
    RESULTS_SCHEMA, RESULTS_SCHEMA_VERSION,
};
pub use plot::{coverage_width_csv, emit_plot_data, forecast_band_csv, sweep_csv, BandSelection, PlotKind};
pub use sweep::{sample_complexity_sweep, sample_complexity_sweep_from_scratch, SweepMean, SweepRow, SweepTable, SWEEP_CSV, SWEEP_JSON};
pub use synth::{make_synthetic, GeneratorSpec, NoiseKind, Windowing};
