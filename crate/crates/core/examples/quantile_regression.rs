//! Three pinball-loss heads recover the 2.5%, 50% and 97.5% quantiles of
//! `y = x + N(0, 1)`.

use stuq::harness::{make_synthetic, GeneratorSpec, NoiseKind, Windowing};
use stuq::models::ModelConfig;
use stuq::spatial::SupportKind;
use stuq::uqmethods::{quantile_forecast, MethodConfig, MethodContext, MethodTag, TrainConfig};

fn main() -> stuq::Result<()> {
    let spec = GeneratorSpec::HeteroscedasticScalar {
        train: 5000,
        validation: 500,
        test: 100,
        noise: NoiseKind::Gaussian,
        scale: 1.0,
        kappa: 0.0,
        x_min: 0.0,
        x_max: 4.0,
    };
    let data = make_synthetic(&spec, 1, Windowing { input_len: 1, horizon: 1, split: [0.7, 0.1, 0.2] })?;
    let layout = data.layout(&[SupportKind::RandomWalk])?;
    let model = ModelConfig { hidden_units: 16, horizon: 1, diffusion_steps: 1, ..Default::default() };
    let train = TrainConfig { max_epochs: 40, patience: 8, batch_size: 64, learning_rate: 0.01, ..Default::default() };
    let ctx = MethodContext { model: &model, layout: &layout, data: &data, train: &train, rho: 0.05, test: &data.splits.test, seed: 3 };

    let out = quantile_forecast(&ctx, &MethodConfig::new(MethodTag::Quantile))?;
    let f = &out.forecast;
    let (lo, hi) = (f.lower.as_ref().expect("bounds"), f.upper.as_ref().expect("bounds"));
    println!("{:>6} {:>8} {:>8} {:>8}   exact: {:>8} {:>8}", "x", "q0.025", "median", "q0.975", "q0.025", "q0.975");
    for (i, &s) in data.splits.test.iter().enumerate().step_by(20) {
        let x = data.value(s, 0, 0);
        println!("{x:6.3} {:8.3} {:8.3} {:8.3}          {:8.3} {:8.3}", lo[i], f.mean[i], hi[i], x - 1.959964, x + 1.959964);
    }
    Ok(())
}
