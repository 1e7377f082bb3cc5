use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::seeds::{derive_seed, stream};
use crate::diffcore::{OptimizerKind, OptimizerState, Tape, Var};
use crate::error::{Error, Result};
use crate::harness::{Batch, Dataset};
use crate::models::{
    teacher_forcing_probability, DecoderFeed, HeadKind, ModelConfig, RecurrentForecaster, SpatialLayout, StepOutput,
};
use crate::scoring::{crps_on_tape_masked, mae_on_tape, mis_on_tape, quantile3_on_tape, MaskedTarget};

/// Optimization settings shared by every gradient-trained method.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub optimizer: OptimizerKind,
    pub learning_rate: f64,
    /// Global gradient-norm clip; `None` disables clipping.
    pub clip_norm: Option<f64>,
    pub max_epochs: usize,
    /// Stop after this many epochs without a validation improvement.
    pub patience: usize,
    pub batch_size: usize,
    /// Epochs over which the teacher-forcing probability decays to 0.
    pub teacher_forcing_epochs: usize,
    /// Cap on minibatches per epoch; `None` sweeps all training windows.
    pub max_batches_per_epoch: Option<usize>,
    /// Cap on validation windows scored per epoch.
    pub max_validation_windows: Option<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            optimizer: OptimizerKind::Adam,
            learning_rate: 0.01,
            clip_norm: Some(5.0),
            max_epochs: 30,
            patience: 5,
            batch_size: 32,
            teacher_forcing_epochs: 10,
            max_batches_per_epoch: None,
            max_validation_windows: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) || self.batch_size == 0 || self.max_epochs == 0 {
            return Err(Error::Config("learning_rate, batch_size and max_epochs must be positive".into()));
        }
        if self.clip_norm.is_some_and(|c| !(c > 0.0)) {
            return Err(Error::Config("clip_norm must be positive".into()));
        }
        Ok(())
    }
}

/// Training loss, matched to the model head.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Objective {
    Mae,
    Quantile { rho: f64 },
    Mis { rho: f64, mae_weight: f64 },
    Crps,
}

impl Objective {
    pub fn head(self) -> HeadKind {
        match self {
            Objective::Mae => HeadKind::Point,
            Objective::Quantile { .. } => HeadKind::Quantile3,
            Objective::Mis { .. } => HeadKind::Interval3,
            Objective::Crps => HeadKind::Spline11,
        }
    }

    /// Mean over horizon steps of the per-step loss.
    pub fn on_tape(self, tape: &mut Tape, steps: &[StepOutput], targets: &[MaskedTarget]) -> Result<Var> {
        let mut total = None;
        for (s, t) in steps.iter().zip(targets) {
            let l = match self {
                Objective::Mae => mae_on_tape(tape, s.heads[0], t)?,
                Objective::Quantile { rho } => quantile3_on_tape(tape, [s.heads[0], s.heads[1], s.heads[2]], t, rho)?,
                Objective::Mis { rho, mae_weight } => mis_on_tape(tape, s.heads[0], s.heads[1], s.heads[2], t, rho, mae_weight)?,
                Objective::Crps => crps_on_tape_masked(tape, s.heads[0], t)?,
            };
            total = Some(match total {
                None => l,
                Some(acc) => tape.add(acc, l)?,
            });
        }
        let total = total.ok_or_else(|| Error::invalid("no horizon steps"))?;
        tape.scale(total, 1.0 / steps.len() as f64)
    }
}

/// Per-epoch record of a training run.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub epochs_run: usize,
    pub best_epoch: usize,
    pub best_validation_loss: f64,
    pub train_losses: Vec<f64>,
    pub validation_losses: Vec<f64>,
}

/// A trained forecaster with its training record.
#[derive(Clone, Debug)]
pub struct TrainedModel {
    pub model: RecurrentForecaster,
    pub report: TrainReport,
}

/// Training windows with per-window loss weights.
#[derive(Clone, Debug, PartialEq)]
pub struct WeightedWindows {
    pub starts: Vec<usize>,
    /// `None` weighs every window equally.
    pub weights: Option<Vec<f64>>,
}

impl WeightedWindows {
    pub fn all(starts: &[usize]) -> Self {
        WeightedWindows { starts: starts.to_vec(), weights: None }
    }
}

fn as_divergence(epoch: usize, err: Error) -> Error {
    if err.is_divergence() {
        Error::Divergence(format!("epoch {epoch}: {err}"))
    } else {
        err
    }
}

fn weigh(batch: &mut Batch, weights: &[f64], nodes: usize) {
    for t in &mut batch.targets {
        let d = t.mask.cols();
        for (b, w) in weights.iter().enumerate() {
            for v in &mut t.mask.data_mut()[b * nodes * d..(b + 1) * nodes * d] {
                *v *= w;
            }
        }
    }
}

/// Objective averaged over `starts` under free-running decoding.
pub fn evaluate_objective(model: &RecurrentForecaster, data: &Dataset, objective: Objective, starts: &[usize]) -> Result<f64> {
    let mut total = 0.0;
    for chunk in starts.chunks(256) {
        let batch = data.batch(chunk);
        let mut tape = Tape::new();
        let vars: Vec<Var> = model.params().tensors().iter().map(|t| tape.constant(t.clone())).collect();
        let steps = model.forecast_on_tape(&mut tape, &vars, &batch.history, DecoderFeed::FreeRunning)?;
        let loss = objective.on_tape(&mut tape, &steps, &batch.targets)?;
        total += tape.scalar(loss) * chunk.len() as f64;
    }
    Ok(total / starts.len().max(1) as f64)
}

/// Minimizes `objective` with minibatch gradient steps, scheduled
/// sampling and early stopping on the validation split. The returned
/// model holds the best-validation parameters.
pub fn train_model(
    mut model: RecurrentForecaster,
    data: &Dataset,
    objective: Objective,
    windows: &WeightedWindows,
    cfg: &TrainConfig,
    seed: u64,
) -> Result<TrainedModel> {
    cfg.validate()?;
    if model.config().head != objective.head() {
        return Err(Error::Config(format!("{objective:?} needs a {:?} head", objective.head())));
    }
    if windows.starts.is_empty() {
        return Err(Error::invalid("no training windows"));
    }
    if let Some(w) = &windows.weights {
        if w.len() != windows.starts.len() || w.iter().any(|v| !(*v >= 0.0 && v.is_finite())) {
            return Err(Error::invalid("window weights must be finite, nonnegative and one per window"));
        }
    }
    let validation: Vec<usize> = match cfg.max_validation_windows {
        Some(cap) => data.splits.validation.iter().copied().take(cap).collect(),
        None => data.splits.validation.clone(),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, stream::SHUFFLE));
    let mut opt = OptimizerState::new(cfg.optimizer, cfg.learning_rate, cfg.clip_norm)?;
    let mut report = TrainReport { best_validation_loss: f64::INFINITY, ..Default::default() };
    let mut best = model.params().clone();
    let mut since_best = 0;
    let horizon = model.config().horizon;
    let nodes = data.nodes();
    let mut order: Vec<usize> = (0..windows.starts.len()).collect();

    for epoch in 0..cfg.max_epochs {
        order.shuffle(&mut rng);
        let p_teacher = teacher_forcing_probability(epoch, cfg.teacher_forcing_epochs);
        let mut epoch_loss = 0.0;
        let mut batches = 0;
        for chunk in order.chunks(cfg.batch_size) {
            if cfg.max_batches_per_epoch.is_some_and(|m| batches >= m) {
                break;
            }
            let starts: Vec<usize> = chunk.iter().map(|&i| windows.starts[i]).collect();
            let mut batch = data.batch(&starts);
            if let Some(w) = &windows.weights {
                let bw: Vec<f64> = chunk.iter().map(|&i| w[i]).collect();
                weigh(&mut batch, &bw, nodes);
            }
            let truth: Vec<bool> = (0..horizon.saturating_sub(1)).map(|_| rng.random::<f64>() < p_teacher).collect();
            let frames: Vec<_> = batch.targets.iter().map(|t| t.target.clone()).collect();
            let feed = DecoderFeed::TeacherForced { targets: &frames, truth_steps: Some(&truth) };
            let mut tape = Tape::new();
            let vars = model.params().bind(&mut tape);
            let loss = model
                .forecast_on_tape(&mut tape, &vars, &batch.history, feed)
                .and_then(|steps| objective.on_tape(&mut tape, &steps, &batch.targets))
                .map_err(|e| as_divergence(epoch, e))?;
            let value = tape.scalar(loss);
            let grads = tape.backward(loss).map_err(|e| as_divergence(epoch, e))?;
            let g: Vec<_> = vars.iter().map(|&v| grads.wrt(v)).collect();
            opt.step(model.params_mut().tensors_mut(), &g)?;
            if model.params().tensors().iter().any(|t| !t.is_finite()) {
                return Err(Error::Divergence(format!("epoch {epoch}: parameters became non-finite")));
            }
            epoch_loss += value;
            batches += 1;
        }
        report.train_losses.push(epoch_loss / batches.max(1) as f64);
        let val = evaluate_objective(&model, data, objective, &validation).map_err(|e| as_divergence(epoch, e))?;
        if !val.is_finite() {
            return Err(Error::Divergence(format!("epoch {epoch}: validation loss is {val}")));
        }
        report.validation_losses.push(val);
        report.epochs_run = epoch + 1;
        if val < report.best_validation_loss {
            report.best_validation_loss = val;
            report.best_epoch = epoch;
            best = model.params().clone();
            since_best = 0;
        } else {
            since_best += 1;
        }
        if since_best >= cfg.patience {
            break;
        }
    }
    let model = model.with_params(best)?;
    Ok(TrainedModel { model, report })
}

/// Fresh model for `data`, initialized from `seed`.
pub fn init_model(config: &ModelConfig, layout: &SpatialLayout, seed: u64) -> Result<RecurrentForecaster> {
    RecurrentForecaster::new(config.clone(), layout.clone(), derive_seed(seed, stream::INIT))
}
