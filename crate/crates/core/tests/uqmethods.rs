mod common;

use common::*;
use stuq::harness::{forecast_truth, NoiseKind};
use stuq::scoring::{empirical_interval, summary_metrics, Bounds, MetricOptions};
use stuq::uqmethods::*;

fn mean_abs(xs: impl Iterator<Item = f64>) -> f64 {
    let v: Vec<f64> = xs.collect();
    v.iter().map(|x| x.abs()).sum::<f64>() / v.len() as f64
}

fn test_x(data: &stuq::harness::Dataset) -> Vec<f64> {
    data.splits.test.iter().map(|&s| data.value(s, 0, 0)).collect()
}

#[test]
fn point_training_learns_constant_targets() {
    let data = constant_graph(120);
    let (model, layout, train) = (small_model(2, 4), layout(&data), quick_train(50));
    let trained = train_point(&ctx(&model, &layout, &data, &train, 0.05, 0)).unwrap();
    assert!(trained.report.best_validation_loss < 0.05, "{:?}", trained.report);
}

#[test]
fn zero_patience_runs_one_epoch() {
    let data = constant_graph(120);
    let (model, layout) = (small_model(2, 4), layout(&data));
    let train = TrainConfig { patience: 0, ..quick_train(20) };
    let trained = train_point(&ctx(&model, &layout, &data, &train, 0.05, 0)).unwrap();
    assert_eq!(trained.report.epochs_run, 1);
}

#[test]
fn point_training_is_deterministic() {
    let data = diffusion(4, 200, 3, 2, 1);
    let (model, layout, train) = (small_model(2, 4), layout(&data), quick_train(3));
    let c = ctx(&model, &layout, &data, &train, 0.05, 9);
    let a = train_point(&c).unwrap();
    let b = train_point(&c).unwrap();
    assert_eq!(a.model.params().tensors(), b.model.params().tensors());
}

#[test]
fn bootstrap_with_repeated_replicate_has_zero_width() {
    let data = diffusion(4, 200, 3, 2, 1);
    let (model, layout, train) = (small_model(2, 4), layout(&data), quick_train(2));
    let c = ctx(&model, &layout, &data, &train, 0.05, 3);
    let method = MethodConfig { keep_fraction: 1.0, ..MethodConfig::new(MethodTag::Bootstrap) };
    let (samples, _) = bootstrap_samples(&c, &method, &[0, 0, 0]).unwrap();
    let dims = ForecastDims { windows: c.test.len(), horizon: 2, nodes: 4, features: 1 };
    let f = ProbabilisticForecast::from_samples(MethodTag::Bootstrap, 0.05, dims, c.test.to_vec(), samples.clone()).unwrap();
    assert_eq!(f.lower.as_ref(), Some(&samples[0]));
    assert_eq!(f.upper.as_ref(), Some(&samples[0]));
}

#[test]
fn bootstrap_of_25_spans_min_and_max() {
    let data = diffusion(3, 150, 2, 1, 2);
    let (model, layout, train) = (small_model(1, 3), layout(&data), quick_train(1));
    let c = ctx(&model, &layout, &data, &train, 0.05, 4);
    let out = bootstrap_forecast(&c, &MethodConfig::new(MethodTag::Bootstrap)).unwrap();
    let f = &out.forecast;
    let samples = f.samples.as_ref().unwrap();
    assert_eq!(samples.len(), 25);
    for i in 0..f.mean.len() {
        let col: Vec<f64> = samples.iter().map(|s| s[i]).collect();
        assert_eq!(f.lower.as_ref().unwrap()[i], col.iter().cloned().fold(f64::INFINITY, f64::min));
        assert_eq!(f.upper.as_ref().unwrap()[i], col.iter().cloned().fold(f64::NEG_INFINITY, f64::max));
    }
}

#[test]
fn bootstrap_subsamples_differ_but_reproduce() {
    let train: Vec<usize> = (0..100).collect();
    let a = bootstrap_windows(&train, 0.5, Weighting::Subsample, replicate_seed(5, 0)).unwrap();
    let b = bootstrap_windows(&train, 0.5, Weighting::Subsample, replicate_seed(5, 1)).unwrap();
    assert_eq!(a.starts.len(), 50);
    assert_ne!(a.starts, b.starts);
    assert_eq!(a, bootstrap_windows(&train, 0.5, Weighting::Subsample, replicate_seed(5, 0)).unwrap());
    let d = bootstrap_windows(&train, 0.5, Weighting::Dirichlet, replicate_seed(5, 0)).unwrap();
    let w = d.weights.unwrap();
    assert!((w.iter().sum::<f64>() - 100.0).abs() < 1e-9);
}

#[test]
fn single_replicate_or_pass_is_an_error() {
    let data = diffusion(3, 150, 2, 1, 2);
    let (model, layout, train) = (small_model(1, 3), layout(&data), quick_train(1));
    let c = ctx(&model, &layout, &data, &train, 0.05, 4);
    let method = MethodConfig { replicates: 1, ..MethodConfig::new(MethodTag::Bootstrap) };
    assert!(bootstrap_forecast(&c, &method).is_err());
    let trained = train_point(&c).unwrap();
    assert!(mc_dropout_forecast(&trained.model, &data, c.test, 0.05, 1, 0.05, 0).is_err());
}

#[test]
fn quantile_heads_track_gaussian_quantiles() {
    let data = scalar(NoiseKind::Gaussian, 5000, 4.0, 1);
    let (model, layout, train) = (small_model(1, 16), layout(&data), quick_train(40));
    let out = quantile_forecast(&ctx(&model, &layout, &data, &train, 0.05, 0), &MethodConfig::default()).unwrap();
    let f = &out.forecast;
    let x = test_x(&data);
    let upper = mean_abs(x.iter().zip(f.upper.as_ref().unwrap()).map(|(x, u)| u - (x + 1.959964)));
    let median = mean_abs(x.iter().zip(&f.mean).map(|(x, m)| m - x));
    assert!(upper < 0.15, "upper head off by {upper}");
    assert!(median < 0.15, "median head off by {median}");
}

#[test]
fn noiseless_quantile_heads_coincide() {
    let data = scalar(NoiseKind::PointMass, 2000, 4.0, 1);
    let (model, layout, train) = (small_model(1, 8), layout(&data), quick_train(60));
    let out = quantile_forecast(&ctx(&model, &layout, &data, &train, 0.05, 0), &MethodConfig::default()).unwrap();
    let f = &out.forecast;
    let x = test_x(&data);
    for head in [&f.mean, f.lower.as_ref().unwrap(), f.upper.as_ref().unwrap()] {
        let err = mean_abs(x.iter().zip(head).map(|(x, h)| h - x));
        assert!(err < 0.02, "head off by {err}");
    }
}

#[test]
fn spline_collapses_on_point_mass() {
    let data = scalar(NoiseKind::PointMass, 2000, 4.0, 1);
    let (model, layout, train) = (small_model(1, 8), layout(&data), quick_train(60));
    let out = sq_forecast(&ctx(&model, &layout, &data, &train, 0.05, 0), &MethodConfig::default()).unwrap();
    let f = &out.forecast;
    let x = test_x(&data);
    for head in [&f.mean, f.lower.as_ref().unwrap(), f.upper.as_ref().unwrap()] {
        let err = mean_abs(x.iter().zip(head).map(|(x, h)| h - x));
        assert!(err < 0.02, "quantile off by {err}");
    }
    assert!(!f.crossing);
}

#[test]
fn spline_width_matches_uniform_noise() {
    let data = scalar(NoiseKind::Uniform, 5000, 0.01, 2);
    let (model, layout, train) = (small_model(1, 8), layout(&data), quick_train(40));
    let out = sq_forecast(&ctx(&model, &layout, &data, &train, 0.05, 0), &MethodConfig::default()).unwrap();
    let f = &out.forecast;
    let (l, u) = (f.lower.as_ref().unwrap(), f.upper.as_ref().unwrap());
    let width = l.iter().zip(u).map(|(l, u)| u - l).sum::<f64>() / l.len() as f64;
    assert!((width - 0.95).abs() < 0.1, "width {width}");
}

#[test]
fn mis_bounds_approach_order_statistics() {
    let data = scalar(NoiseKind::Gaussian, 5000, 4.0, 3);
    let (model, layout) = (small_model(1, 16), layout(&data));
    // large batches tame the 2 / rho weighted miss penalty
    let train = TrainConfig { max_epochs: 60, patience: 15, batch_size: 256, learning_rate: 0.003, ..Default::default() };
    let out = mis_forecast(&ctx(&model, &layout, &data, &train, 0.05, 0), &MethodConfig::default()).unwrap();
    let f = &out.forecast;
    let residuals: Vec<f64> = data.splits.train.iter().map(|&s| data.value(s + 1, 0, 0) - data.value(s, 0, 0)).collect();
    let iv = empirical_interval(&residuals, 0.05).unwrap();
    let x = test_x(&data);
    let lo = mean_abs(x.iter().zip(f.lower.as_ref().unwrap()).map(|(x, l)| l - x - iv.lower));
    let hi = mean_abs(x.iter().zip(f.upper.as_ref().unwrap()).map(|(x, u)| u - x - iv.upper));
    assert!(lo < 0.1 && hi < 0.1, "lower off by {lo}, upper off by {hi}");
}

#[test]
fn mis_width_shrinks_with_rho() {
    let data = scalar(NoiseKind::Gaussian, 2000, 4.0, 3);
    let (model, layout, train) = (small_model(1, 8), layout(&data), quick_train(30));
    let width = |rho: f64| {
        let out = mis_forecast(&ctx(&model, &layout, &data, &train, rho, 0), &MethodConfig::default()).unwrap();
        let f = out.forecast;
        let (l, u) = (f.lower.unwrap(), f.upper.unwrap());
        l.iter().zip(&u).map(|(l, u)| u - l).sum::<f64>() / l.len() as f64
    };
    let (wide, narrow) = (width(0.05), width(0.9));
    assert!(narrow < wide, "rho 0.9 width {narrow} vs rho 0.05 width {wide}");
}

#[test]
fn noiseless_mis_is_narrow() {
    let data = scalar(NoiseKind::PointMass, 2000, 4.0, 1);
    let (model, layout, train) = (small_model(1, 8), layout(&data), quick_train(60));
    let out = mis_forecast(&ctx(&model, &layout, &data, &train, 0.05, 0), &MethodConfig::default()).unwrap();
    let f = out.forecast;
    let (l, u) = (f.lower.unwrap(), f.upper.unwrap());
    let width = l.iter().zip(&u).map(|(l, u)| u - l).sum::<f64>() / l.len() as f64;
    assert!(width < 0.05, "width {width}");
}

#[test]
fn dropout_rate_zero_gives_identical_passes() {
    let data = diffusion(4, 200, 3, 2, 1);
    let (model, layout, train) = (small_model(2, 4), layout(&data), quick_train(2));
    let c = ctx(&model, &layout, &data, &train, 0.05, 1);
    let trained = train_point(&c).unwrap();
    let f = mc_dropout_forecast(&trained.model, &data, c.test, 0.0, 5, 0.05, 7).unwrap();
    assert_eq!(f.lower, f.upper);
    let lower = f.lower.as_ref().unwrap();
    assert!(lower.iter().zip(&f.mean).all(|(l, m)| (l - m).abs() < 1e-12));
}

#[test]
fn dropout_is_reproducible_and_reports_coverage() {
    let data = diffusion(4, 300, 3, 2, 1);
    let (model, layout, train) = (small_model(2, 6), layout(&data), quick_train(5));
    let c = ctx(&model, &layout, &data, &train, 0.05, 1);
    let trained = train_point(&c).unwrap();
    let a = mc_dropout_forecast(&trained.model, &data, c.test, 0.05, 50, 0.05, 7).unwrap();
    let b = mc_dropout_forecast(&trained.model, &data, c.test, 0.05, 50, 0.05, 7).unwrap();
    assert_eq!(a, b);
    let (truth, mask) = forecast_truth(&data, a.dims, c.test);
    let bounds = Bounds { lower: a.lower.as_ref().unwrap(), upper: a.upper.as_ref().unwrap(), rho: 0.05 };
    let m = summary_metrics(&a.mean, Some(bounds), &truth, MetricOptions { mask: Some(&mask), clamp_crossing: false }).unwrap();
    let coverage = m.coverage.unwrap();
    println!("mc-dropout coverage of held-out data: {coverage:.3}");
    assert!((0.0..=1.0).contains(&coverage));
}

#[test]
fn sgnht_model_sampling_is_reproducible() {
    let data = diffusion(3, 150, 2, 1, 2);
    let (model, layout, train) = (small_model(1, 3), layout(&data), quick_train(1));
    let c = ctx(&model, &layout, &data, &train, 0.05, 4);
    let sampler = SamplerConfig { burn_in: 30, chains: 3, ..Default::default() };
    let a = sgnht_sample(&c, &sampler).unwrap();
    let b = sgnht_sample(&c, &sampler).unwrap();
    assert_eq!(a.forecast, b.forecast);
    assert_eq!(a.forecast.sample_count(), Some(3));
    assert!(a.max_abs_xi.unwrap() < 100.0);
    let bad = SamplerConfig { step_size: 0.0, ..sampler };
    assert!(matches!(sgnht_sample(&c, &bad), Err(stuq::Error::Config(_))));
}

#[test]
fn sgnht_draws_prefix_is_stable() {
    let data = diffusion(3, 150, 2, 1, 2);
    let (model, layout, train) = (small_model(1, 3), layout(&data), quick_train(1));
    let c = ctx(&model, &layout, &data, &train, 0.05, 4);
    let sampler = SamplerConfig { burn_in: 20, ..Default::default() };
    let (few, _) = sgnht_draws(&c, &sampler, &[0, 1]).unwrap();
    let (many, _) = sgnht_draws(&c, &sampler, &[0, 1, 2, 3]).unwrap();
    assert_eq!(few[..], many[..2]);
}

#[test]
fn sgnht_potential_gradient_matches_differences() {
    let data = diffusion(3, 150, 2, 1, 2);
    let (model, layout) = (small_model(1, 3), layout(&data));
    let cfg = stuq::models::ModelConfig { input_dim: 1, ..model };
    let m = stuq::models::RecurrentForecaster::new(cfg, layout, 1).unwrap();
    let theta = m.params().flatten();
    let starts = &data.splits.train[..8];
    let g = potential_gradient(&m, &data, &theta, starts, 100, 4.0).unwrap();
    let potential = |t: &[f64]| {
        let mut p = m.params().clone();
        p.assign_flat(t).unwrap();
        let mm = m.with_params(p).unwrap();
        let batch = data.batch(starts);
        let out = mm.forecast(&batch.history, stuq::models::DecoderFeed::FreeRunning).unwrap();
        let f = &out.heads[0].steps[0];
        let t0 = &batch.targets[0].target;
        let sse: f64 = f.data().iter().zip(t0.data()).map(|(a, b)| 0.5 * (a - b) * (a - b)).sum();
        100.0 * sse / starts.len() as f64 + t.iter().map(|v| v * v).sum::<f64>() / 8.0
    };
    for k in [0, theta.len() / 2, theta.len() - 1] {
        let mut plus = theta.clone();
        let mut minus = theta.clone();
        plus[k] += 1e-6;
        minus[k] -= 1e-6;
        let fd = (potential(&plus) - potential(&minus)) / 2e-6;
        assert!((fd - g[k]).abs() < 1e-5 * fd.abs().max(1.0), "coordinate {k}: {fd} vs {}", g[k]);
    }
}
