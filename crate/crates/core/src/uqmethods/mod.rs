//! Uncertainty-quantification procedures: bootstrap ensembles, quantile,
//! spline-quantile and interval-score regression, MC dropout and SGNHT
//! posterior sampling. Each maps a model configuration, a dataset and a
//! budget to a [`ProbabilisticForecast`].

mod forecast;
mod methods;
mod seeds;
mod sgnht;
mod train;

pub use forecast::{ForecastDims, MethodTag, ProbabilisticForecast};
pub use methods::{
    bootstrap_forecast, bootstrap_samples, bootstrap_windows, forecasts_under_draws, mc_dropout_forecast,
    mc_dropout_samples, method_samples, mis_forecast, point_forecast, potential_gradient, predict_bands,
    quantile_forecast, replicate_seed, run_method, sgnht_draws, sgnht_sample, sq_forecast, train_point, HeadBands,
    MethodConfig, MethodContext, MethodOutput, Weighting,
};
pub use seeds::derive_seed;
pub use sgnht::{run_chain, sample_gaussian_target, sgnht_step, ChainOutput, SamplerConfig, SgnhtState};
pub use train::{
    evaluate_objective, init_model, train_model, Objective, TrainConfig, TrainReport, TrainedModel, WeightedWindows,
};
