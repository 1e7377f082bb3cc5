//! MIS against the number of sampled forecasts for the bootstrap. Each
//! seed draws the largest count once; smaller counts reuse its prefix.

use stuq::harness::{sample_complexity_sweep, DataSpec, ExperimentConfig, GeneratorSpec};
use stuq::models::ModelConfig;
use stuq::spatial::SupportKind;
use stuq::uqmethods::{MethodTag, TrainConfig};

fn main() -> stuq::Result<()> {
    let mut cfg = ExperimentConfig {
        name: "sweep".into(),
        data_seed: 1,
        input_len: 3,
        horizon: 2,
        supports: vec![SupportKind::RandomWalk],
        ..Default::default()
    };
    cfg.data = DataSpec::Synthetic {
        generator: GeneratorSpec::GraphDiffusion {
            nodes: 5,
            steps: 400,
            decay: 0.9,
            noise_std: 0.1,
            kernel_sigma_sq: 0.1,
            kernel_threshold: 0.1,
            level: 0.0,
        },
    };
    cfg.model = ModelConfig { hidden_units: 4, diffusion_steps: 1, ..Default::default() };
    cfg.train = TrainConfig { max_epochs: 8, patience: 3, learning_rate: 0.02, ..Default::default() };
    cfg.method.tag = MethodTag::Bootstrap;

    let table = sample_complexity_sweep(&cfg, &[3, 10, 25], &[0, 1, 2])?;
    print!("{}", table.to_csv()?);
    println!("seeds improving from 3 to 25 samples: {}/3", table.improved_seeds(3, 25));
    Ok(())
}
