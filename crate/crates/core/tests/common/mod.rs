#![allow(dead_code)]

use stuq::diffcore::Tensor;
use stuq::harness::{
    chronological_splits, make_synthetic, Dataset, ExperimentConfig, GeneratorSpec, NoiseKind, SpatialDomain,
    Windowing,
};
use stuq::models::{ModelConfig, SpatialLayout};
use stuq::spatial::{SpatialGraph, SupportKind};
use stuq::uqmethods::{MethodContext, MethodTag, SamplerConfig, TrainConfig};

pub fn scalar(noise: NoiseKind, train: usize, x_max: f64, seed: u64) -> Dataset {
    let spec = GeneratorSpec::HeteroscedasticScalar {
        train,
        validation: 500,
        test: 100,
        noise,
        scale: 1.0,
        kappa: 0.0,
        x_min: 0.0,
        x_max,
    };
    make_synthetic(&spec, seed, Windowing { input_len: 1, horizon: 1, split: [0.7, 0.1, 0.2] }).unwrap()
}

pub fn diffusion(nodes: usize, steps: usize, input_len: usize, horizon: usize, seed: u64) -> Dataset {
    let spec = GeneratorSpec::GraphDiffusion {
        nodes,
        steps,
        decay: 0.9,
        noise_std: 0.1,
        kernel_sigma_sq: 0.1,
        kernel_threshold: 0.1,
        level: 0.0,
    };
    make_synthetic(&spec, seed, Windowing { input_len, horizon, split: [0.7, 0.1, 0.2] }).unwrap()
}

/// Three nodes, each holding its own constant value for every step.
pub fn constant_graph(steps: usize) -> Dataset {
    let adjacency = Tensor::matrix(3, 3, vec![1.0, 0.5, 0.0, 0.5, 1.0, 0.5, 0.0, 0.5, 1.0]).unwrap();
    let values: Vec<f64> = (0..steps).flat_map(|_| [1.0, 2.0, 3.0]).collect();
    let splits = chronological_splits(steps, 3, 2, [0.7, 0.1, 0.2]).unwrap();
    Dataset::new(
        "constant",
        vec!["a".into(), "b".into(), "c".into()],
        (0..steps).map(|t| t.to_string()).collect(),
        1,
        values,
        vec![true; steps * 3],
        SpatialDomain::Graph(SpatialGraph::new(adjacency).unwrap()),
        3,
        2,
        splits,
    )
    .unwrap()
}

pub fn layout(data: &Dataset) -> SpatialLayout {
    data.layout(&[SupportKind::RandomWalk]).unwrap()
}

pub fn small_model(horizon: usize, hidden: usize) -> ModelConfig {
    ModelConfig { hidden_units: hidden, horizon, diffusion_steps: 1, ..Default::default() }
}

pub fn quick_train(max_epochs: usize) -> TrainConfig {
    TrainConfig { max_epochs, patience: 8, batch_size: 64, ..Default::default() }
}

pub fn ctx<'a>(
    model: &'a ModelConfig,
    layout: &'a SpatialLayout,
    data: &'a Dataset,
    train: &'a TrainConfig,
    rho: f64,
    seed: u64,
) -> MethodContext<'a> {
    MethodContext { model, layout, data, train, rho, test: &data.splits.test, seed }
}

/// A small graph-diffusion experiment that runs in a second or two.
pub fn tiny_experiment(tag: MethodTag) -> ExperimentConfig {
    let mut cfg = ExperimentConfig {
        name: format!("tiny-{tag}"),
        input_len: 3,
        horizon: 2,
        supports: vec![SupportKind::RandomWalk],
        ..Default::default()
    };
    cfg.data = stuq::harness::DataSpec::Synthetic {
        generator: GeneratorSpec::GraphDiffusion {
            nodes: 5,
            steps: 300,
            decay: 0.9,
            noise_std: 0.1,
            kernel_sigma_sq: 0.1,
            kernel_threshold: 0.1,
            level: 0.0,
        },
    };
    cfg.model = ModelConfig { hidden_units: 4, diffusion_steps: 1, ..Default::default() };
    cfg.train = TrainConfig { max_epochs: 4, patience: 2, ..Default::default() };
    cfg.method.tag = tag;
    cfg.method.replicates = 4;
    cfg.method.passes = 6;
    cfg.method.sampler = SamplerConfig { burn_in: 40, chains: 4, ..Default::default() };
    cfg.eval.max_test_windows = Some(20);
    cfg
}
