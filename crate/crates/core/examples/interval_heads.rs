//! Direct interval heads: MIS regression (lower, point, upper outputs
//! trained on the interval score) and a spline quantile head trained on
//! CRPS, compared on the same heteroscedastic data.

use stuq::harness::{forecast_truth, make_synthetic, GeneratorSpec, NoiseKind, Windowing};
use stuq::models::ModelConfig;
use stuq::scoring::{summary_metrics, Bounds, MetricOptions};
use stuq::spatial::SupportKind;
use stuq::uqmethods::{mis_forecast, sq_forecast, MethodConfig, MethodContext, MethodOutput, MethodTag, TrainConfig};

fn main() -> stuq::Result<()> {
    let spec = GeneratorSpec::HeteroscedasticScalar {
        train: 4000,
        validation: 500,
        test: 100,
        noise: NoiseKind::Gaussian,
        scale: 0.5,
        kappa: 0.5,
        x_min: 0.0,
        x_max: 4.0,
    };
    let data = make_synthetic(&spec, 2, Windowing { input_len: 1, horizon: 1, split: [0.7, 0.1, 0.2] })?;
    let layout = data.layout(&[SupportKind::RandomWalk])?;
    let model = ModelConfig { hidden_units: 16, horizon: 1, diffusion_steps: 1, ..Default::default() };
    let train = TrainConfig { max_epochs: 40, patience: 10, batch_size: 256, learning_rate: 0.005, ..Default::default() };
    let ctx = MethodContext { model: &model, layout: &layout, data: &data, train: &train, rho: 0.1, test: &data.splits.test, seed: 0 };

    let runs: [(&str, MethodOutput); 2] = [
        ("MIS regression", mis_forecast(&ctx, &MethodConfig::new(MethodTag::Mis))?),
        ("spline quantiles", sq_forecast(&ctx, &MethodConfig::new(MethodTag::Sq))?),
    ];
    for (name, out) in &runs {
        let f = &out.forecast;
        let (truth, _) = forecast_truth(&data, f.dims, ctx.test);
        let bounds = Bounds { lower: f.lower.as_deref().expect("bounds"), upper: f.upper.as_deref().expect("bounds"), rho: 0.1 };
        let m = summary_metrics(&f.mean, Some(bounds), &truth, MetricOptions::default())?;
        println!(
            "{name}: MIS {:.4}, width {:.4}, coverage {:.3}, crossing {}",
            m.mis.unwrap_or(f64::NAN),
            m.interval_width.unwrap_or(f64::NAN),
            m.coverage.unwrap_or(f64::NAN),
            f.crossing
        );
    }
    Ok(())
}
