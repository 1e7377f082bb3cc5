//! Runs a point forecaster and a quantile forecaster, then emits the
//! plot-ready forecast-band and coverage-vs-width tables.

use stuq::harness::{emit_plot_data, run_experiment, BandSelection, DataSpec, ExperimentConfig, GeneratorSpec, PlotKind};
use stuq::models::ModelConfig;
use stuq::uqmethods::{MethodTag, TrainConfig};

fn main() -> stuq::Result<()> {
    let root = std::env::temp_dir().join("stuq-plot-data");
    let mut runs = Vec::new();
    for tag in [MethodTag::Point, MethodTag::Quantile] {
        let mut cfg = ExperimentConfig { name: tag.to_string(), input_len: 4, horizon: 3, ..Default::default() };
        cfg.data = DataSpec::Synthetic {
            generator: GeneratorSpec::GraphDiffusion {
                nodes: 4,
                steps: 300,
                decay: 0.9,
                noise_std: 0.1,
                kernel_sigma_sq: 0.1,
                kernel_threshold: 0.1,
                level: 0.0,
            },
        };
        cfg.model = ModelConfig { hidden_units: 4, ..Default::default() };
        cfg.train = TrainConfig { max_epochs: 5, ..Default::default() };
        cfg.method.tag = tag;
        cfg.output_dir = Some(root.join(tag.to_string()));
        runs.push(run_experiment(&cfg)?.written_to.expect("output_dir is set"));
    }

    let bands = emit_plot_data(&runs, PlotKind::ForecastBand, BandSelection { window: 0, feature: 0 }, &root)?;
    let coverage = emit_plot_data(&runs, PlotKind::CoverageVsWidth, BandSelection::default(), &root)?;
    for path in [bands, coverage] {
        println!("== {}", path.display());
        print!("{}", std::fs::read_to_string(path)?);
    }
    Ok(())
}
