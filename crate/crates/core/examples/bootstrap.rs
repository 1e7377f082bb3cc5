//! Bootstrap ensemble: each replicate trains on a random half of the
//! training windows; the interval spans the replicates' forecasts. The
//! spread reflects model uncertainty only, so on low-noise data it is far
//! narrower than the observation noise.

use stuq::harness::{forecast_truth, make_synthetic, GeneratorSpec, Windowing};
use stuq::models::ModelConfig;
use stuq::scoring::{summary_metrics, Bounds, MetricOptions};
use stuq::spatial::SupportKind;
use stuq::uqmethods::{bootstrap_forecast, MethodConfig, MethodContext, MethodTag, TrainConfig, Weighting};

fn main() -> stuq::Result<()> {
    let spec = GeneratorSpec::GraphDiffusion {
        nodes: 5,
        steps: 400,
        decay: 0.9,
        noise_std: 0.1,
        kernel_sigma_sq: 0.1,
        kernel_threshold: 0.1,
        level: 0.0,
    };
    let data = make_synthetic(&spec, 1, Windowing { input_len: 3, horizon: 2, split: [0.7, 0.1, 0.2] })?;
    let layout = data.layout(&[SupportKind::RandomWalk])?;
    let model = ModelConfig { hidden_units: 4, horizon: 2, diffusion_steps: 1, ..Default::default() };
    let train = TrainConfig { max_epochs: 8, patience: 3, learning_rate: 0.02, ..Default::default() };
    let ctx = MethodContext { model: &model, layout: &layout, data: &data, train: &train, rho: 0.05, test: &data.splits.test, seed: 0 };

    for weighting in [Weighting::Subsample, Weighting::Dirichlet] {
        let method = MethodConfig { replicates: 10, weighting, ..MethodConfig::new(MethodTag::Bootstrap) };
        let out = bootstrap_forecast(&ctx, &method)?;
        let f = &out.forecast;
        let (truth, _) = forecast_truth(&data, f.dims, ctx.test);
        let bounds = Bounds { lower: f.lower.as_deref().expect("bounds"), upper: f.upper.as_deref().expect("bounds"), rho: 0.05 };
        let m = summary_metrics(&f.mean, Some(bounds), &truth, MetricOptions::default())?;
        println!(
            "{weighting:?}: {} replicates, MAE {:.4}, MIS {:.4}, coverage {:.3}",
            out.reports.len(),
            m.mae,
            m.mis.unwrap_or(f64::NAN),
            m.coverage.unwrap_or(f64::NAN)
        );
    }
    Ok(())
}
