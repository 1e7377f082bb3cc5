//! One PASS/FAIL line per acceptance criterion. Runs as a plain binary so
//! the report is always printed; exits nonzero when any criterion fails.

use std::process::ExitCode;
use std::time::{Duration, Instant};

use stuq::harness::oracles::{crps_oracle, gradient_oracle, primitive_gradient_oracle, prop2_oracle};
use stuq::harness::{
    make_synthetic, run_experiment, sample_complexity_sweep, DataSpec, ExperimentConfig, GeneratorSpec, NoiseKind,
    Windowing,
};
use stuq::models::ModelConfig;
use stuq::scoring::{mis_metric, SplineQuantile};
use stuq::spatial::SupportKind;
use stuq::uqmethods::{
    run_method, sample_gaussian_target, MethodConfig, MethodContext, MethodTag, SamplerConfig, TrainConfig,
};

struct Verdict {
    passed: bool,
    detail: String,
}

fn verdict(passed: bool, detail: impl Into<String>) -> stuq::Result<Verdict> {
    Ok(Verdict { passed, detail: detail.into() })
}

fn within(t: Duration, limit: Duration) -> bool {
    t < limit
}

fn prop2() -> stuq::Result<Verdict> {
    let start = Instant::now();
    let check = prop2_oracle(200, 2024)?;
    let t = start.elapsed();
    verdict(
        check.passed && within(t, Duration::from_secs(10)),
        format!("{} mismatches over 200 batches in {:.2?}", check.value, t),
    )
}

fn mis_hand_value() -> stuq::Result<Verdict> {
    let v = mis_metric(&[-1.0; 3], &[1.0; 3], &[0.0, 2.0, -3.0], 0.2)?;
    verdict((v - 12.0).abs() <= 1e-12, format!("MIS = {v}"))
}

fn gradients() -> stuq::Result<Verdict> {
    let start = Instant::now();
    let mut checks = primitive_gradient_oracle(7)?;
    checks.extend(gradient_oracle(7)?);
    let t = start.elapsed();
    let worst = checks.iter().map(|c| c.value).fold(0.0, f64::max);
    let failing: Vec<&str> = checks.iter().filter(|c| !c.passed).map(|c| c.name.as_str()).collect();
    verdict(
        failing.is_empty() && within(t, Duration::from_secs(30)),
        format!("{} checks, worst relative error {worst:.2e}, failing {failing:?}, {t:.2?}", checks.len()),
    )
}

fn quantile_recovery() -> stuq::Result<Verdict> {
    let start = Instant::now();
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
    let out = run_method(&ctx, &MethodConfig::new(MethodTag::Quantile))?;
    let upper = out.forecast.upper.as_ref().expect("quantile heads give bounds");
    let dev: Vec<f64> = data
        .splits
        .test
        .iter()
        .zip(upper)
        .map(|(&s, u)| u - (data.value(s, 0, 0) + 1.959964))
        .collect();
    let mean_abs = dev.iter().map(|d| d.abs()).sum::<f64>() / dev.len() as f64;
    let t = start.elapsed();
    verdict(
        mean_abs < 0.15 && within(t, Duration::from_secs(120)),
        format!("mean |Q0.975 - (x + 1.96)| = {mean_abs:.4} over {} test points in {t:.2?}", dev.len()),
    )
}

fn sgnht_gaussian() -> stuq::Result<Verdict> {
    let start = Instant::now();
    let (dim, lambda) = (10, 2.0);
    let cfg = SamplerConfig {
        step_size: 0.05,
        burn_in: 2000,
        thinning: 10,
        draws_per_chain: 200,
        chains: 25,
        init_std: 1.0,
        ..Default::default()
    };
    let chains = sample_gaussian_target(dim, lambda, &cfg, 7)?;
    let all: Vec<f64> = chains.iter().flat_map(|c| c.draws.iter().flatten().copied()).collect();
    let n = all.len() as f64;
    let mean = all.iter().sum::<f64>() / n;
    let var = all.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let target = 1.0 / lambda;
    let t = start.elapsed();
    verdict(
        (var - target).abs() <= 0.15 * target && mean.abs() < 0.05 * target.sqrt() && within(t, Duration::from_secs(60)),
        format!("variance {var:.4} (target {target}), mean {mean:.4} (limit {:.4}), {t:.2?}", 0.05 * target.sqrt()),
    )
}

fn crps_closed_form() -> stuq::Result<Verdict> {
    let check = crps_oracle(100, 11)?;
    let uniform = SplineQuantile::new(0.0, vec![1.0], vec![0.0])?.crps(0.5);
    let gap = (uniform - 1.0 / 12.0).abs();
    verdict(
        check.passed && gap <= 1e-9,
        format!("max |closed form - quadrature| {:.2e}, uniform CRPS {uniform:.12}", check.value),
    )
}

fn desk_config(tag: MethodTag) -> ExperimentConfig {
    let mut cfg = ExperimentConfig {
        name: format!("coverage-{tag}"),
        data_seed: 1,
        rho: 0.05,
        input_len: 4,
        horizon: 3,
        supports: vec![SupportKind::RandomWalk, SupportKind::ReverseRandomWalk],
        ..Default::default()
    };
    cfg.data = DataSpec::Synthetic {
        generator: GeneratorSpec::GraphDiffusion {
            nodes: 10,
            steps: 2000,
            decay: 0.9,
            noise_std: 0.1,
            kernel_sigma_sq: 0.1,
            kernel_threshold: 0.1,
            level: 0.0,
        },
    };
    cfg.model = ModelConfig { hidden_units: 8, diffusion_steps: 2, ..Default::default() };
    cfg.train = TrainConfig { max_epochs: 30, patience: 5, batch_size: 32, learning_rate: 0.01, ..Default::default() };
    cfg.method.tag = tag;
    cfg
}

fn coverage() -> stuq::Result<Verdict> {
    let start = Instant::now();
    let mut parts = Vec::new();
    let mut ok = true;
    for tag in [MethodTag::Quantile, MethodTag::Mis] {
        let r = run_experiment(&desk_config(tag))?.record;
        let c = r.overall.coverage.expect("interval method");
        ok &= (0.90..=0.98).contains(&c);
        parts.push(format!("{tag} {c:.4}"));
    }
    let t = start.elapsed();
    verdict(ok && within(t, Duration::from_secs(300)), format!("coverage {} in {t:.2?}", parts.join(", ")))
}

fn sweep_config(tag: MethodTag) -> ExperimentConfig {
    let mut cfg = ExperimentConfig {
        name: format!("sweep-{tag}"),
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
    cfg.train = TrainConfig { max_epochs: 8, patience: 3, batch_size: 32, learning_rate: 0.02, ..Default::default() };
    cfg.method.tag = tag;
    cfg.method.sampler = SamplerConfig { burn_in: 300, ..Default::default() };
    cfg
}

fn sweep_trend() -> stuq::Result<Verdict> {
    let start = Instant::now();
    let seeds: Vec<u64> = (0..10).collect();
    let mut parts = Vec::new();
    let mut ok = true;
    for tag in [MethodTag::Bootstrap, MethodTag::SgMcmc] {
        let table = sample_complexity_sweep(&sweep_config(tag), &[5, 25], &seeds)?;
        let (m5, m25) = (table.mean(5).unwrap_or(f64::NAN), table.mean(25).unwrap_or(f64::NAN));
        let wins = table.improved_seeds(5, 25);
        ok &= m25 < m5 && wins >= 8;
        parts.push(format!("{tag} MIS {m5:.4} -> {m25:.4}, {wins}/10 seeds improve"));
    }
    verdict(ok, format!("{} in {:.2?}", parts.join("; "), start.elapsed()))
}

fn determinism() -> stuq::Result<Verdict> {
    let mut differing = Vec::new();
    for tag in MethodTag::ALL {
        let mut cfg = sweep_config(tag);
        cfg.name = format!("determinism-{tag}");
        cfg.method.replicates = 5;
        cfg.method.passes = 5;
        cfg.method.sampler = SamplerConfig { burn_in: 100, chains: 5, ..Default::default() };
        let a = run_experiment(&cfg)?.record;
        let b = run_experiment(&cfg)?.record;
        let same = a.without_timing() == b.without_timing()
            && serde_json::to_string(&a.overall)? == serde_json::to_string(&b.overall)?;
        if !same {
            differing.push(tag.to_string());
        }
    }
    verdict(differing.is_empty(), format!("{} methods rerun, differing: {differing:?}", MethodTag::ALL.len()))
}

fn scope_statement() -> stuq::Result<Verdict> {
    verdict(
        true,
        "absolute benchmark numbers (e.g. METR-LA 15-min MAE 2.32 for SG-MCMC, MIS 18.26 for MIS regression) \
         need the full traffic datasets and GPU-scale training and are not targets here; \
         the synthetic criteria above stand in for them",
    )
}

fn main() -> ExitCode {
    type Criterion = fn() -> stuq::Result<Verdict>;
    let criteria: [(&str, Criterion); 10] = [
        ("order statistics minimize MIS", prop2),
        ("MIS hand value", mis_hand_value),
        ("gradient correctness", gradients),
        ("quantile recovery", quantile_recovery),
        ("SGNHT on a Gaussian target", sgnht_gaussian),
        ("closed-form CRPS", crps_closed_form),
        ("desk-scale coverage", coverage),
        ("MIS falls with more samples", sweep_trend),
        ("determinism", determinism),
        ("scope of reproduction", scope_statement),
    ];
    let mut failures = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let (passed, detail) = match run() {
            Ok(v) => (v.passed, v.detail),
            Err(e) => (false, format!("error: {e}")),
        };
        failures += usize::from(!passed);
        println!("{} {:>2} {name}: {detail}", if passed { "PASS" } else { "FAIL" }, i + 1);
    }
    if failures == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
