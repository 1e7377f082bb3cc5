use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::cell::{cell_step, CellWeights};
use super::config::{Gating, HeadKind, ModelConfig, SpatialLayout};
use crate::diffcore::{ParamStore, Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::scoring::{spline_from_raw_on_tape, spline_quantile_on_tape, SPLINE_PARAMS};

/// How the decoder picks its next input.
#[derive(Clone, Copy, Debug)]
pub enum DecoderFeed<'a> {
    /// Feed back the model's own median (or point) output.
    FreeRunning,
    /// Feed back ground truth. `truth_steps[t]` chooses, for decoder step
    /// `t + 1`, between the target of step `t` (`true`) and the model's own
    /// output; `None` always takes the target.
    TeacherForced { targets: &'a [Tensor], truth_steps: Option<&'a [bool]> },
}

/// Tape handles of one decoder step.
#[derive(Clone, Debug)]
pub struct StepOutput {
    /// One entry per head label; `[rows, D]` except the spline head,
    /// which is `[rows, 11 * D]`.
    pub heads: Vec<Var>,
    /// The value fed to the next step, `[rows, D]`.
    pub feedback: Var,
}

#[derive(Clone, Debug, PartialEq)]
pub struct HeadSeries {
    pub label: &'static str,
    /// `horizon` arrays of `[B * P, columns]`.
    pub steps: Vec<Tensor>,
}

/// Concrete forecast values, per head and horizon step.
#[derive(Clone, Debug, PartialEq)]
pub struct ForecastOutput {
    pub head: HeadKind,
    pub heads: Vec<HeadSeries>,
}

impl ForecastOutput {
    pub fn get(&self, label: &str) -> Option<&HeadSeries> {
        self.heads.iter().find(|h| h.label == label)
    }
}

/// Named flat arrays plus the configuration that shaped them.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelCheckpoint {
    pub config: ModelConfig,
    pub names: Vec<String>,
    pub shapes: Vec<Vec<usize>>,
    pub values: Vec<Vec<f64>>,
}

/// Encoder/decoder recurrent forecaster over a fixed spatial layout.
#[derive(Clone, Debug)]
pub struct RecurrentForecaster {
    config: ModelConfig,
    layout: SpatialLayout,
    params: ParamStore,
}

const STAGES: [&str; 2] = ["enc", "dec"];

/// Parameter names and shapes, in slot order.
pub fn parameter_shapes(config: &ModelConfig, layout: &SpatialLayout) -> Vec<(String, Vec<usize>)> {
    let u = config.hidden_units;
    let mut out = Vec::new();
    for stage in STAGES {
        for layer in 0..config.layers {
            let c_in = if layer == 0 { config.input_dim } else { u };
            let rx = layout.weight_rows(config, c_in);
            let rh = layout.weight_rows(config, u);
            let p = format!("{stage}.l{layer}");
            match config.gating {
                Gating::Plain => {
                    out.push((format!("{p}.wx"), vec![rx, u]));
                    out.push((format!("{p}.wh"), vec![rh, u]));
                }
                Gating::Gru => {
                    out.push((format!("{p}.gate_wx"), vec![rx, 2 * u]));
                    out.push((format!("{p}.gate_wh"), vec![rh, 2 * u]));
                    out.push((format!("{p}.gate_b"), vec![2 * u]));
                    out.push((format!("{p}.cand_wx"), vec![rx, u]));
                    out.push((format!("{p}.cand_wh"), vec![rh, u]));
                    out.push((format!("{p}.cand_b"), vec![u]));
                }
            }
        }
    }
    let n_out = config.input_dim * config.head.width_per_feature();
    out.push(("out.w".into(), vec![u, n_out]));
    out.push(("out.b".into(), vec![n_out]));
    out
}

impl RecurrentForecaster {
    /// Weights uniform in `+-1/sqrt(fan_in)`, biases zero.
    pub fn new(config: ModelConfig, layout: SpatialLayout, seed: u64) -> Result<Self> {
        config.validate()?;
        layout.check(&config)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamStore::new();
        for (name, dims) in parameter_shapes(&config, &layout) {
            let mut t = Tensor::zeros(&dims);
            if dims.len() == 2 {
                let bound = 1.0 / (dims[0] as f64).sqrt();
                t.data_mut().iter_mut().for_each(|v| *v = rng.random_range(-bound..bound));
            }
            params.push(name, t);
        }
        Ok(RecurrentForecaster { config, layout, params })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn layout(&self) -> &SpatialLayout {
        &self.layout
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    pub fn with_params(&self, params: ParamStore) -> Result<Self> {
        let same = params.len() == self.params.len()
            && params.tensors().iter().zip(self.params.tensors()).all(|(a, b)| a.dims() == b.dims());
        if !same {
            return Err(Error::shape("with_params", "parameter shapes differ from the model".to_string()));
        }
        Ok(RecurrentForecaster { params, ..self.clone() })
    }

    pub fn checkpoint(&self) -> ModelCheckpoint {
        ModelCheckpoint {
            config: self.config.clone(),
            names: self.params.names().to_vec(),
            shapes: self.params.tensors().iter().map(|t| t.dims().to_vec()).collect(),
            values: self.params.tensors().iter().map(|t| t.data().to_vec()).collect(),
        }
    }

    pub fn from_checkpoint(ckpt: &ModelCheckpoint, layout: SpatialLayout) -> Result<Self> {
        let mut model = RecurrentForecaster::new(ckpt.config.clone(), layout, 0)?;
        let expected: Vec<(String, Vec<usize>)> = model.params.iter().map(|(n, t)| (n.to_string(), t.dims().to_vec())).collect();
        let got: Vec<(String, Vec<usize>)> = ckpt.names.iter().cloned().zip(ckpt.shapes.iter().cloned()).collect();
        if expected != got || ckpt.values.len() != got.len() {
            return Err(Error::Config("checkpoint does not match its configuration".into()));
        }
        for (t, v) in model.params.tensors_mut().iter_mut().zip(&ckpt.values) {
            if v.len() != t.numel() {
                return Err(Error::Config("checkpoint array length mismatch".into()));
            }
            t.data_mut().copy_from_slice(v);
        }
        Ok(model)
    }

    fn per_cell(&self) -> usize {
        match self.config.gating {
            Gating::Plain => 2,
            Gating::Gru => 6,
        }
    }

    fn cell_weights(&self, vars: &[Var], stage: usize, layer: usize) -> CellWeights {
        let base = (stage * self.config.layers + layer) * self.per_cell();
        let v = &vars[base..base + self.per_cell()];
        match self.config.gating {
            Gating::Plain => CellWeights::Plain { wx: v[0], wh: v[1] },
            Gating::Gru => CellWeights::Gru {
                gate_wx: v[0],
                gate_wh: v[1],
                gate_b: v[2],
                cand_wx: v[3],
                cand_wh: v[4],
                cand_b: v[5],
            },
        }
    }

    fn check_frame(&self, frame: &Tensor, what: &str) -> Result<usize> {
        let p = self.layout.node_count();
        if frame.dims().len() != 2 || frame.cols() != self.config.input_dim || !frame.rows().is_multiple_of(p) {
            return Err(Error::shape(
                "forecast",
                format!("{what} frame {:?}, expected [B * {p}, {}]", frame.dims(), self.config.input_dim),
            ));
        }
        Ok(frame.rows())
    }

    /// Projects the top hidden state to the heads of one step.
    fn project(&self, tape: &mut Tape, vars: &[Var], top: Var, input: Var) -> Result<StepOutput> {
        let n = vars.len();
        let (w, b) = (vars[n - 2], vars[n - 1]);
        let d = self.config.input_dim;
        let per = self.config.head.width_per_feature();
        let lin = tape.matmul(top, w)?;
        let mut raw = tape.add_bias(lin, b)?;
        if self.config.residual {
            // lift[d', c] = 1 where column c carries the level of feature d'
            let mut lift = Tensor::zeros(&[d, d * per]);
            for f in 0..d {
                match self.config.head {
                    HeadKind::Spline11 => lift.set2(f, f * SPLINE_PARAMS, 1.0),
                    _ => (0..per).for_each(|h| lift.set2(f, h * d + f, 1.0)),
                }
            }
            let lift = tape.constant(lift);
            let base = tape.matmul(input, lift)?;
            raw = tape.add(raw, base)?;
        }
        match self.config.head {
            HeadKind::Point => Ok(StepOutput { heads: vec![raw], feedback: raw }),
            HeadKind::Quantile3 | HeadKind::Interval3 => {
                let heads = (0..3).map(|h| tape.slice_cols(raw, h * d, (h + 1) * d)).collect::<Result<Vec<_>>>()?;
                Ok(StepOutput { feedback: heads[1], heads })
            }
            HeadKind::Spline11 => {
                let mut medians = Vec::with_capacity(d);
                for f in 0..d {
                    let block = if d == 1 { raw } else { tape.slice_cols(raw, f * SPLINE_PARAMS, (f + 1) * SPLINE_PARAMS)? };
                    let sv = spline_from_raw_on_tape(tape, block)?;
                    medians.push(spline_quantile_on_tape(tape, &sv, 0.5)?);
                }
                let feedback = if d == 1 { medians[0] } else { tape.concat_cols(&medians)? };
                Ok(StepOutput { heads: vec![raw], feedback })
            }
        }
    }

    /// Records the encoder and `horizon` decoder steps on `tape`, with
    /// `vars` the parameters bound in slot order.
    pub fn forecast_on_tape(
        &self,
        tape: &mut Tape,
        vars: &[Var],
        history: &[Tensor],
        feed: DecoderFeed<'_>,
    ) -> Result<Vec<StepOutput>> {
        if vars.len() != self.params.len() {
            return Err(Error::shape("forecast", format!("{} parameter handles for {} slots", vars.len(), self.params.len())));
        }
        let last = history.last().ok_or_else(|| Error::invalid("forecast needs at least one history frame"))?;
        let rows = self.check_frame(last, "history")?;
        for f in history {
            if self.check_frame(f, "history")? != rows {
                return Err(Error::shape("forecast", "history frames differ in batch size".to_string()));
            }
        }
        let horizon = self.config.horizon;
        if let DecoderFeed::TeacherForced { targets, truth_steps } = feed {
            if targets.len() != horizon {
                return Err(Error::shape("forecast", format!("{} target frames for horizon {horizon}", targets.len())));
            }
            if truth_steps.is_some_and(|s| s.len() + 1 < horizon) {
                return Err(Error::shape("forecast", "teacher schedule shorter than the horizon".to_string()));
            }
            for t in targets {
                if self.check_frame(t, "target")? != rows {
                    return Err(Error::shape("forecast", "target batch differs from history".to_string()));
                }
            }
        }

        let u = self.config.hidden_units;
        let mut states: Vec<Var> = (0..self.config.layers).map(|_| tape.constant(Tensor::zeros(&[rows, u]))).collect();
        let step = |tape: &mut Tape, states: &mut Vec<Var>, stage: usize, x: Var| -> Result<Var> {
            let mut input = x;
            for (layer, state) in states.iter_mut().enumerate() {
                let w = self.cell_weights(vars, stage, layer);
                *state = cell_step(tape, &self.layout, &self.config, &w, *state, input)?;
                input = *state;
            }
            Ok(input)
        };
        for frame in history {
            let x = tape.constant(frame.clone());
            step(tape, &mut states, 0, x)?;
        }
        let mut input = tape.constant(last.clone());
        let mut out = Vec::with_capacity(horizon);
        for t in 0..horizon {
            let top = step(tape, &mut states, 1, input)?;
            let so = self.project(tape, vars, top, input)?;
            input = match feed {
                DecoderFeed::TeacherForced { targets, truth_steps } if truth_steps.is_none_or(|s| t >= s.len() || s[t]) => {
                    tape.constant(targets[t].clone())
                }
                _ => so.feedback,
            };
            out.push(so);
        }
        Ok(out)
    }

    /// Evaluates a forecast without recording gradients for later use.
    pub fn forecast(&self, history: &[Tensor], feed: DecoderFeed<'_>) -> Result<ForecastOutput> {
        let mut tape = Tape::new();
        let vars: Vec<Var> = self.params.tensors().iter().map(|t| tape.constant(t.clone())).collect();
        let steps = self.forecast_on_tape(&mut tape, &vars, history, feed)?;
        let heads = self
            .config
            .head
            .labels()
            .iter()
            .enumerate()
            .map(|(h, &label)| HeadSeries { label, steps: steps.iter().map(|s| tape.value(s.heads[h]).clone()).collect() })
            .collect();
        Ok(ForecastOutput { head: self.config.head, heads })
    }
}

/// A copy of `model` whose parameters are each zeroed independently with
/// probability `rate`. No rescaling is applied to the survivors.
pub fn apply_dropout_masks(model: &RecurrentForecaster, rate: f64, seed: u64) -> Result<RecurrentForecaster> {
    if !(0.0..1.0).contains(&rate) {
        return Err(Error::invalid(format!("dropout rate must lie in [0, 1), got {rate}")));
    }
    let mut view = model.clone();
    if rate > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for t in view.params.tensors_mut() {
            for v in t.data_mut() {
                if rng.random::<f64>() < rate {
                    *v = 0.0;
                }
            }
        }
    }
    Ok(view)
}

/// Teacher-forcing probability for scheduled sampling: linear decay from
/// 1 at epoch 0 to 0 at `span`.
pub fn teacher_forcing_probability(epoch: usize, span: usize) -> f64 {
    if span == 0 {
        0.0
    } else {
        (1.0 - epoch as f64 / span as f64).max(0.0)
    }
}
