//! Monte Carlo dropout: one trained network, many stochastic passes with
//! random weight masks.

use stuq::harness::{forecast_truth, make_synthetic, GeneratorSpec, Windowing};
use stuq::models::ModelConfig;
use stuq::scoring::mis_metric;
use stuq::spatial::SupportKind;
use stuq::uqmethods::{mc_dropout_forecast, train_point, MethodContext, TrainConfig};

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
    let model = ModelConfig { hidden_units: 8, horizon: 2, diffusion_steps: 1, dropout_rate: 0.05, ..Default::default() };
    let train = TrainConfig { max_epochs: 10, patience: 3, learning_rate: 0.02, ..Default::default() };
    let ctx = MethodContext { model: &model, layout: &layout, data: &data, train: &train, rho: 0.05, test: &data.splits.test, seed: 0 };
    let trained = train_point(&ctx)?;

    for rate in [0.0, 0.02, 0.05, 0.1] {
        let f = mc_dropout_forecast(&trained.model, &data, ctx.test, rate, 50, 0.05, 0)?;
        let (lo, hi) = (f.lower.as_ref().expect("bounds"), f.upper.as_ref().expect("bounds"));
        let (truth, _) = forecast_truth(&data, f.dims, ctx.test);
        let width = lo.iter().zip(hi).map(|(l, u)| u - l).sum::<f64>() / lo.len() as f64;
        println!("rate {rate:4}: mean width {width:.4}, MIS {:.4}", mis_metric(lo, hi, &truth, 0.05)?);
    }
    Ok(())
}
