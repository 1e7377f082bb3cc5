use rand::seq::index::sample as sample_indices;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::forecast::{ForecastDims, MethodTag, ProbabilisticForecast};
use super::seeds::{derive_seed, stream};
use super::sgnht::{run_chain, SamplerConfig, SgnhtState};
use super::train::{init_model, train_model, Objective, TrainConfig, TrainReport, TrainedModel, WeightedWindows};
use crate::diffcore::Tape;
use crate::error::{Error, Result};
use crate::harness::Dataset;
use crate::models::{apply_dropout_masks, DecoderFeed, HeadKind, ModelConfig, RecurrentForecaster, SpatialLayout};
use crate::scoring::{half_squared_error_sum_on_tape, SplineQuantileParams, SPLINE_PARAMS};

/// How bootstrap replicates reweigh the training windows.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Weighting {
    /// Keep a random `keep_fraction` of the windows, drop the rest.
    #[default]
    Subsample,
    /// Weigh every window by a symmetric Dirichlet draw scaled to mean 1.
    Dirichlet,
}

/// Method tag plus the hyperparameters of every method.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MethodConfig {
    pub tag: MethodTag,
    /// Bootstrap replicates `B`.
    pub replicates: usize,
    pub keep_fraction: f64,
    pub weighting: Weighting,
    /// MC-dropout forecast passes `T`.
    pub passes: usize,
    /// Weight of the MAE term next to the interval score in MIS training.
    pub mae_weight: f64,
    /// Independently trained regressors averaged by the quantile, sq and
    /// mis methods. `1` trains a single model.
    pub ensemble: usize,
    pub sampler: SamplerConfig,
}

impl Default for MethodConfig {
    fn default() -> Self {
        MethodConfig {
            tag: MethodTag::Point,
            replicates: 25,
            keep_fraction: 0.5,
            weighting: Weighting::Subsample,
            passes: 50,
            mae_weight: 1.0,
            ensemble: 1,
            sampler: SamplerConfig::default(),
        }
    }
}

impl MethodConfig {
    pub fn new(tag: MethodTag) -> Self {
        MethodConfig { tag, ..Default::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.keep_fraction > 0.0 && self.keep_fraction <= 1.0) {
            return Err(Error::Config(format!("keep_fraction must lie in (0, 1], got {}", self.keep_fraction)));
        }
        if self.replicates == 0 || self.passes == 0 || self.ensemble == 0 {
            return Err(Error::Config("replicates, passes and ensemble must be positive".into()));
        }
        if !(self.mae_weight >= 0.0) {
            return Err(Error::Config("mae_weight must be nonnegative".into()));
        }
        if self.tag == MethodTag::SgMcmc {
            self.sampler.validate()?;
        }
        Ok(())
    }

    /// Number of sampled forecasts a sampling method produces.
    pub fn sample_count(&self) -> Option<usize> {
        match self.tag {
            MethodTag::Bootstrap => Some(self.replicates),
            MethodTag::McDropout => Some(self.passes),
            MethodTag::SgMcmc => Some(self.sampler.total_draws()),
            _ => None,
        }
    }

    /// A copy that draws `count` samples instead.
    pub fn with_sample_count(&self, count: usize) -> Result<Self> {
        let mut c = self.clone();
        match self.tag {
            MethodTag::Bootstrap => c.replicates = count,
            MethodTag::McDropout => c.passes = count,
            MethodTag::SgMcmc => {
                if !count.is_multiple_of(c.sampler.draws_per_chain) {
                    return Err(Error::Config(format!(
                        "{count} samples is not a multiple of {} draws per chain",
                        c.sampler.draws_per_chain
                    )));
                }
                c.sampler.chains = count / c.sampler.draws_per_chain;
            }
            tag => return Err(Error::Config(format!("{tag} does not draw samples"))),
        }
        Ok(c)
    }
}

impl MethodTag {
    /// Output head the method trains.
    pub fn head(self) -> HeadKind {
        match self {
            MethodTag::Quantile => HeadKind::Quantile3,
            MethodTag::Sq => HeadKind::Spline11,
            MethodTag::Mis => HeadKind::Interval3,
            MethodTag::Point | MethodTag::Bootstrap | MethodTag::McDropout | MethodTag::SgMcmc => HeadKind::Point,
        }
    }
}

/// Everything a method needs besides its own hyperparameters.
#[derive(Clone, Copy, Debug)]
pub struct MethodContext<'a> {
    pub model: &'a ModelConfig,
    pub layout: &'a SpatialLayout,
    pub data: &'a Dataset,
    pub train: &'a TrainConfig,
    pub rho: f64,
    /// Windows to forecast, usually the test split.
    pub test: &'a [usize],
    pub seed: u64,
}

impl MethodContext<'_> {
    fn model_config(&self, head: HeadKind) -> ModelConfig {
        ModelConfig { head, input_dim: self.data.features(), ..self.model.clone() }
    }

    fn dims(&self) -> ForecastDims {
        ForecastDims {
            windows: self.test.len(),
            horizon: self.data.horizon,
            nodes: self.data.nodes(),
            features: self.data.features(),
        }
    }
}

/// Result of one method run.
#[derive(Clone, Debug)]
pub struct MethodOutput {
    pub forecast: ProbabilisticForecast,
    /// Training records of every fitted model, in replicate order.
    pub reports: Vec<TrainReport>,
    /// Largest thermostat magnitude over all chains (sg-mcmc only).
    pub max_abs_xi: Option<f64>,
}

/// Denormalized head values, flat in `[window, step, node, feature]`.
#[derive(Clone, Debug, PartialEq)]
pub struct HeadBands {
    pub mean: Vec<f64>,
    pub lower: Option<Vec<f64>>,
    pub upper: Option<Vec<f64>>,
}

/// Forecasts the windows at `starts` and maps the head outputs to a
/// center and, for interval heads, bounds at level `1 - rho`.
pub fn predict_bands(model: &RecurrentForecaster, data: &Dataset, starts: &[usize], rho: f64) -> Result<HeadBands> {
    let (p, d, h) = (data.nodes(), data.features(), model.config().horizon);
    let n = starts.len() * h * p * d;
    let head = model.config().head;
    let width = match head {
        HeadKind::Point => 1,
        _ => 3,
    };
    let mut cols: Vec<Vec<f64>> = vec![vec![0.0; n]; width];
    let mut done = 0;
    for chunk in starts.chunks(256) {
        let batch = data.batch(chunk);
        let out = model.forecast(&batch.history, DecoderFeed::FreeRunning)?;
        for step in 0..h {
            for b in 0..chunk.len() {
                for node in 0..p {
                    let row = b * p + node;
                    for f in 0..d {
                        let idx = (((done + b) * h + step) * p + node) * d + f;
                        let norm = &data.normalizer;
                        match head {
                            HeadKind::Spline11 => {
                                let t = &out.heads[0].steps[step];
                                let raw = t.data()[row * t.cols() + f * SPLINE_PARAMS..row * t.cols() + (f + 1) * SPLINE_PARAMS].to_vec();
                                let q = SplineQuantileParams::new(raw)?.transform();
                                cols[0][idx] = norm.denormalize(q.quantile(0.5), f);
                                cols[1][idx] = norm.denormalize(q.quantile(rho / 2.0), f);
                                cols[2][idx] = norm.denormalize(q.quantile(1.0 - rho / 2.0), f);
                            }
                            _ => {
                                for (c, series) in cols.iter_mut().zip(&out.heads) {
                                    c[idx] = norm.denormalize(series.steps[step].get2(row, f), f);
                                }
                            }
                        }
                    }
                }
            }
        }
        done += chunk.len();
    }
    let mut it = cols.into_iter();
    Ok(match head {
        HeadKind::Point => HeadBands { mean: it.next().unwrap_or_default(), lower: None, upper: None },
        HeadKind::Spline11 => {
            let mean = it.next().unwrap_or_default();
            HeadBands { mean, lower: it.next(), upper: it.next() }
        }
        // labels are ordered lower, center, upper
        HeadKind::Quantile3 | HeadKind::Interval3 => {
            let lower = it.next();
            let mean = it.next().unwrap_or_default();
            HeadBands { mean, lower, upper: it.next() }
        }
    })
}

/// Trains a point forecaster with the MAE objective.
pub fn train_point(ctx: &MethodContext<'_>) -> Result<TrainedModel> {
    let cfg = ctx.model_config(HeadKind::Point);
    let model = init_model(&cfg, ctx.layout, ctx.seed)?;
    train_model(model, ctx.data, Objective::Mae, &WeightedWindows::all(&ctx.data.splits.train), ctx.train, ctx.seed)
}

/// Point baseline: no interval.
pub fn point_forecast(ctx: &MethodContext<'_>) -> Result<MethodOutput> {
    let trained = train_point(ctx)?;
    let bands = predict_bands(&trained.model, ctx.data, ctx.test, ctx.rho)?;
    Ok(MethodOutput {
        forecast: ProbabilisticForecast::point(MethodTag::Point, ctx.rho, ctx.dims(), ctx.test.to_vec(), bands.mean),
        reports: vec![trained.report],
        max_abs_xi: None,
    })
}

/// Training windows of bootstrap replicate `seed`.
pub fn bootstrap_windows(train: &[usize], keep_fraction: f64, weighting: Weighting, seed: u64) -> Result<WeightedWindows> {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, stream::SUBSAMPLE));
    match weighting {
        Weighting::Subsample => {
            let keep = ((keep_fraction * train.len() as f64).round() as usize).clamp(1, train.len().max(1));
            let mut picked = sample_indices(&mut rng, train.len(), keep).into_vec();
            picked.sort_unstable();
            Ok(WeightedWindows { starts: picked.into_iter().map(|i| train[i]).collect(), weights: None })
        }
        Weighting::Dirichlet => {
            let gamma = Gamma::new(1.0, 1.0).map_err(|e| Error::invalid(e.to_string()))?;
            let raw: Vec<f64> = (0..train.len()).map(|_| gamma.sample(&mut rng)).collect();
            let total: f64 = raw.iter().sum();
            let scale = train.len() as f64 / total;
            Ok(WeightedWindows { starts: train.to_vec(), weights: Some(raw.into_iter().map(|w| w * scale).collect()) })
        }
    }
}

/// Seed of bootstrap replicate (or chain, or dropout pass) `index`.
pub fn replicate_seed(base: u64, index: usize) -> u64 {
    derive_seed(derive_seed(base, stream::REPLICATE), index as u64)
}

/// Point predictions of bootstrap replicates `indices`, in that order.
pub fn bootstrap_samples(ctx: &MethodContext<'_>, method: &MethodConfig, indices: &[usize]) -> Result<(Vec<Vec<f64>>, Vec<TrainReport>)> {
    let cfg = ctx.model_config(HeadKind::Point);
    let runs: Vec<Result<(Vec<f64>, TrainReport)>> = indices
        .par_iter()
        .map(|&r| {
            let seed = replicate_seed(ctx.seed, r);
            let windows = bootstrap_windows(&ctx.data.splits.train, method.keep_fraction, method.weighting, seed)?;
            let model = init_model(&cfg, ctx.layout, seed)?;
            let trained = train_model(model, ctx.data, Objective::Mae, &windows, ctx.train, seed)?;
            let bands = predict_bands(&trained.model, ctx.data, ctx.test, ctx.rho)?;
            Ok((bands.mean, trained.report))
        })
        .collect();
    let mut samples = Vec::with_capacity(runs.len());
    let mut reports = Vec::with_capacity(runs.len());
    for r in runs {
        let (s, rep) = r?;
        samples.push(s);
        reports.push(rep);
    }
    Ok((samples, reports))
}

/// Ensemble of `B` point models, each fit to its own reweighted copy of
/// the training windows.
pub fn bootstrap_forecast(ctx: &MethodContext<'_>, method: &MethodConfig) -> Result<MethodOutput> {
    if method.replicates < 2 {
        return Err(Error::Config("bootstrap needs at least two replicates for an interval".into()));
    }
    let indices: Vec<usize> = (0..method.replicates).collect();
    let (samples, reports) = bootstrap_samples(ctx, method, &indices)?;
    let forecast = ProbabilisticForecast::from_samples(MethodTag::Bootstrap, ctx.rho, ctx.dims(), ctx.test.to_vec(), samples)?;
    Ok(MethodOutput { forecast, reports, max_abs_xi: None })
}

/// Shared path of the head-based methods: trains `ensemble` regressors
/// and averages their heads.
fn head_forecast(ctx: &MethodContext<'_>, method: &MethodConfig, objective: Objective) -> Result<MethodOutput> {
    let cfg = ctx.model_config(objective.head());
    let members: Vec<Result<(HeadBands, TrainReport)>> = (0..method.ensemble)
        .into_par_iter()
        .map(|e| {
            let seed = if e == 0 { ctx.seed } else { replicate_seed(ctx.seed, e) };
            let model = init_model(&cfg, ctx.layout, seed)?;
            let trained = train_model(model, ctx.data, objective, &WeightedWindows::all(&ctx.data.splits.train), ctx.train, seed)?;
            Ok((predict_bands(&trained.model, ctx.data, ctx.test, ctx.rho)?, trained.report))
        })
        .collect();
    let mut reports = Vec::new();
    let mut acc: Option<HeadBands> = None;
    for m in members {
        let (bands, report) = m?;
        reports.push(report);
        acc = Some(match acc {
            None => bands,
            Some(mut a) => {
                add_into(&mut a.mean, &bands.mean);
                if let (Some(x), Some(y)) = (a.lower.as_mut(), bands.lower.as_ref()) {
                    add_into(x, y);
                }
                if let (Some(x), Some(y)) = (a.upper.as_mut(), bands.upper.as_ref()) {
                    add_into(x, y);
                }
                a
            }
        });
    }
    let mut bands = acc.ok_or_else(|| Error::Config("ensemble must be positive".into()))?;
    if method.ensemble > 1 {
        let s = 1.0 / method.ensemble as f64;
        for v in bands.mean.iter_mut().chain(bands.lower.iter_mut().flatten()).chain(bands.upper.iter_mut().flatten()) {
            *v *= s;
        }
    }
    let (lower, upper) = match (bands.lower, bands.upper) {
        (Some(l), Some(u)) => (l, u),
        _ => return Err(Error::invalid("head carries no bounds")),
    };
    let forecast = ProbabilisticForecast::with_bounds(method.tag, ctx.rho, ctx.dims(), ctx.test.to_vec(), bands.mean, lower, upper);
    Ok(MethodOutput { forecast, reports, max_abs_xi: None })
}

fn add_into(acc: &mut [f64], x: &[f64]) {
    for (a, b) in acc.iter_mut().zip(x) {
        *a += b;
    }
}

/// Three-level quantile regression at `rho / 2`, `0.5`, `1 - rho / 2`.
pub fn quantile_forecast(ctx: &MethodContext<'_>, method: &MethodConfig) -> Result<MethodOutput> {
    let method = MethodConfig { tag: MethodTag::Quantile, ..method.clone() };
    head_forecast(ctx, &method, Objective::Quantile { rho: ctx.rho })
}

/// Monotone spline quantile function trained by CRPS.
pub fn sq_forecast(ctx: &MethodContext<'_>, method: &MethodConfig) -> Result<MethodOutput> {
    let method = MethodConfig { tag: MethodTag::Sq, ..method.clone() };
    head_forecast(ctx, &method, Objective::Crps)
}

/// Joint lower/point/upper regression on the interval score.
pub fn mis_forecast(ctx: &MethodContext<'_>, method: &MethodConfig) -> Result<MethodOutput> {
    let method = MethodConfig { tag: MethodTag::Mis, ..method.clone() };
    head_forecast(ctx, &method, Objective::Mis { rho: ctx.rho, mae_weight: method.mae_weight })
}

/// Forecasts of `trained` under dropout masks `indices`, in that order.
pub fn mc_dropout_samples(
    trained: &RecurrentForecaster,
    data: &Dataset,
    test: &[usize],
    rate: f64,
    seed: u64,
    indices: &[usize],
) -> Result<Vec<Vec<f64>>> {
    let mask_base = derive_seed(seed, stream::MASK);
    indices
        .par_iter()
        .map(|&k| {
            let view = apply_dropout_masks(trained, rate, derive_seed(mask_base, k as u64))?;
            Ok(predict_bands(&view, data, test, 0.5)?.mean)
        })
        .collect()
}

/// `passes` forecasts of one trained point model under independent
/// weight-dropout masks.
pub fn mc_dropout_forecast(
    trained: &RecurrentForecaster,
    data: &Dataset,
    test: &[usize],
    rate: f64,
    passes: usize,
    rho: f64,
    seed: u64,
) -> Result<ProbabilisticForecast> {
    if passes < 2 {
        return Err(Error::Config("mc-dropout needs at least two passes for an interval".into()));
    }
    let indices: Vec<usize> = (0..passes).collect();
    let samples = mc_dropout_samples(trained, data, test, rate, seed, &indices)?;
    let dims = ForecastDims { windows: test.len(), horizon: data.horizon, nodes: data.nodes(), features: data.features() };
    ProbabilisticForecast::from_samples(MethodTag::McDropout, rho, dims, test.to_vec(), samples)
}

/// Gradient of the sampler potential
/// `N_train * mean_window(sum 1/2 (y - f)^2) + |theta|^2 / (2 prior_variance)`
/// on the minibatch `starts`.
pub fn potential_gradient(
    model: &RecurrentForecaster,
    data: &Dataset,
    theta: &[f64],
    starts: &[usize],
    n_train: usize,
    prior_variance: f64,
) -> Result<Vec<f64>> {
    let mut params = model.params().clone();
    params.assign_flat(theta)?;
    let batch = data.batch(starts);
    let mut tape = Tape::new();
    let vars = params.bind(&mut tape);
    let steps = model.forecast_on_tape(&mut tape, &vars, &batch.history, DecoderFeed::FreeRunning)?;
    let mut total = None;
    for (s, t) in steps.iter().zip(&batch.targets) {
        let l = half_squared_error_sum_on_tape(&mut tape, s.heads[0], t)?;
        total = Some(match total {
            None => l,
            Some(acc) => tape.add(acc, l)?,
        });
    }
    let total = total.ok_or_else(|| Error::invalid("no horizon steps"))?;
    let loss = tape.scale(total, n_train as f64 / starts.len() as f64)?;
    let grads = tape.backward(loss)?;
    let mut flat = Vec::with_capacity(theta.len());
    for v in &vars {
        flat.extend_from_slice(grads.wrt(*v).data());
    }
    for (g, t) in flat.iter_mut().zip(theta) {
        *g += t / prior_variance;
    }
    Ok(flat)
}

/// Posterior draws of chains `indices`, in that order, with the largest
/// thermostat magnitude seen.
pub fn sgnht_draws(ctx: &MethodContext<'_>, sampler: &SamplerConfig, indices: &[usize]) -> Result<(Vec<Vec<f64>>, f64)> {
    sampler.validate()?;
    let cfg = ctx.model_config(HeadKind::Point);
    let template = RecurrentForecaster::new(cfg, ctx.layout.clone(), 0)?;
    let train = &ctx.data.splits.train;
    if train.is_empty() {
        return Err(Error::invalid("no training windows"));
    }
    let per_epoch = train.len().div_ceil(sampler.batch_size);
    let cap = sampler.max_epochs.map(|e| e * per_epoch);
    let chains: Vec<Result<(Vec<Vec<f64>>, f64)>> = indices
        .par_iter()
        .map(|&c| {
            let seed = derive_seed(derive_seed(ctx.seed, stream::CHAIN), c as u64);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let init = SgnhtState::random(template.params().numel(), sampler.init_std, sampler.xi_init, &mut rng);
            let mut shuffle = ChaCha8Rng::seed_from_u64(derive_seed(seed, stream::SHUFFLE));
            let mut order: Vec<usize> = Vec::new();
            let mut cursor = 0;
            let out = run_chain(
                init,
                sampler,
                cap,
                |theta, _| {
                    if cursor >= order.len() {
                        order = train.clone();
                        rand::seq::SliceRandom::shuffle(order.as_mut_slice(), &mut shuffle);
                        cursor = 0;
                    }
                    let end = (cursor + sampler.batch_size).min(order.len());
                    let starts = &order[cursor..end];
                    cursor = end;
                    potential_gradient(&template, ctx.data, theta, starts, train.len(), sampler.prior_variance)
                },
                &mut rng,
            )?;
            Ok((out.draws, out.max_abs_xi))
        })
        .collect();
    let mut draws = Vec::new();
    let mut max_xi: f64 = 0.0;
    for c in chains {
        let (d, x) = c?;
        draws.extend(d);
        max_xi = max_xi.max(x);
    }
    Ok((draws, max_xi))
}

/// Forecasts under each posterior draw.
pub fn forecasts_under_draws(ctx: &MethodContext<'_>, draws: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    let cfg = ctx.model_config(HeadKind::Point);
    let template = RecurrentForecaster::new(cfg, ctx.layout.clone(), 0)?;
    draws
        .par_iter()
        .map(|theta| {
            let mut params = template.params().clone();
            params.assign_flat(theta)?;
            let model = template.with_params(params)?;
            Ok(predict_bands(&model, ctx.data, ctx.test, ctx.rho)?.mean)
        })
        .collect()
}

/// Stochastic-gradient Nosé-Hoover posterior sampling over the weights of
/// a point forecaster.
pub fn sgnht_sample(ctx: &MethodContext<'_>, sampler: &SamplerConfig) -> Result<MethodOutput> {
    let indices: Vec<usize> = (0..sampler.chains).collect();
    let (draws, max_xi) = sgnht_draws(ctx, sampler, &indices)?;
    let samples = forecasts_under_draws(ctx, &draws)?;
    let forecast = ProbabilisticForecast::from_samples(MethodTag::SgMcmc, ctx.rho, ctx.dims(), ctx.test.to_vec(), samples)?;
    Ok(MethodOutput { forecast, reports: Vec::new(), max_abs_xi: Some(max_xi) })
}

/// Raw forecast samples `indices` of a sampling method, for sweeps that
/// grow the budget without recomputing earlier samples.
pub fn method_samples(ctx: &MethodContext<'_>, method: &MethodConfig, indices: &[usize]) -> Result<Vec<Vec<f64>>> {
    match method.tag {
        MethodTag::Bootstrap => Ok(bootstrap_samples(ctx, method, indices)?.0),
        MethodTag::McDropout => {
            let trained = train_point(ctx)?;
            mc_dropout_samples(&trained.model, ctx.data, ctx.test, ctx.model.dropout_rate, ctx.seed, indices)
        }
        MethodTag::SgMcmc => {
            let per = method.sampler.draws_per_chain;
            let chains: Vec<usize> = indices.iter().map(|i| i / per).collect::<std::collections::BTreeSet<_>>().into_iter().collect();
            let (draws, _) = sgnht_draws(ctx, &method.sampler, &chains)?;
            let samples = forecasts_under_draws(ctx, &draws)?;
            indices
                .iter()
                .map(|&i| {
                    let pos = chains.binary_search(&(i / per)).map_err(|_| Error::invalid("chain lookup"))?;
                    Ok(samples[pos * per + i % per].clone())
                })
                .collect()
        }
        tag => Err(Error::Config(format!("{tag} is not a sampling method"))),
    }
}

/// Runs the method named by `method.tag`.
pub fn run_method(ctx: &MethodContext<'_>, method: &MethodConfig) -> Result<MethodOutput> {
    method.validate()?;
    ctx.model.validate()?;
    match method.tag {
        MethodTag::Point => point_forecast(ctx),
        MethodTag::Bootstrap => bootstrap_forecast(ctx, method),
        MethodTag::Quantile => quantile_forecast(ctx, method),
        MethodTag::Sq => sq_forecast(ctx, method),
        MethodTag::Mis => mis_forecast(ctx, method),
        MethodTag::McDropout => {
            let trained = train_point(ctx)?;
            let forecast =
                mc_dropout_forecast(&trained.model, ctx.data, ctx.test, ctx.model.dropout_rate, method.passes, ctx.rho, ctx.seed)?;
            Ok(MethodOutput { forecast, reports: vec![trained.report], max_abs_xi: None })
        }
        MethodTag::SgMcmc => sgnht_sample(ctx, &method.sampler),
    }
}
