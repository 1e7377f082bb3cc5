//! Self-checks runnable from the command line: order-statistic MIS
//! minimizer against brute force, closed-form CRPS against quadrature,
//! and reverse-mode gradients against central differences.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, StandardNormal};
use serde::Serialize;

use std::sync::Arc;

use crate::diffcore::{finite_difference_check, Padding, Tape, Tensor, Var};
use crate::error::Result;
use crate::models::{CellKind, DecoderFeed, Gating, ModelConfig, RecurrentForecaster, SpatialLayout};
use crate::scoring::oracle::crps_quadrature;
use crate::scoring::{brute_force_mis_minimizer, crps_pwl, empirical_interval, MaskedTarget, SplineQuantileParams};
use crate::spatial::{random_walk_support, reverse_random_walk_support, SpatialGraph};
use crate::uqmethods::Objective;

/// Outcome of one check: `value` compared against `threshold`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OracleCheck {
    pub name: String,
    pub value: f64,
    pub threshold: f64,
    pub passed: bool,
}

impl OracleCheck {
    fn below(name: impl Into<String>, value: f64, threshold: f64) -> Self {
        OracleCheck { name: name.into(), value, threshold, passed: value < threshold }
    }
}

/// Draws from one of three families: normal, exponential, or a coarse
/// integer lattice that produces ties.
pub fn oracle_sample(family: usize, n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let exp = Exp::new(1.0).expect("unit rate");
    (0..n)
        .map(|_| match family % 3 {
            0 => rng.sample::<f64, _>(StandardNormal),
            1 => exp.sample(rng),
            _ => rng.random_range(-3..=3) as f64,
        })
        .collect()
}

/// Batches over `N in {5, 25, 100}`, `rho in {0.05, 0.2, 0.5}` and three
/// families where the order-statistic interval differs from the brute
/// force minimizer. The value is the mismatch count.
pub fn prop2_oracle(batches: usize, seed: u64) -> Result<OracleCheck> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut mismatches = 0;
    for b in 0..batches {
        let n = [5, 25, 100][b % 3];
        let rho = [0.05, 0.2, 0.5][(b / 3) % 3];
        let xs = oracle_sample(b / 9, n, &mut rng);
        let fast = empirical_interval(&xs, rho)?;
        let slow = brute_force_mis_minimizer(&xs, rho)?;
        if (fast.lower, fast.upper) != (slow.lower, slow.upper) {
            mismatches += 1;
        }
    }
    Ok(OracleCheck::below(format!("order statistics minimize MIS ({batches} batches)"), mismatches as f64, 0.5))
}

/// Random spline parameters and targets where closed-form CRPS and
/// quadrature disagree; the value is the largest absolute gap.
pub fn crps_oracle(pairs: usize, seed: u64) -> Result<OracleCheck> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..pairs {
        let raw: Vec<f64> = (0..11).map(|_| 1.5 * rng.sample::<f64, _>(StandardNormal)).collect();
        let params = SplineQuantileParams::new(raw)?;
        let q = params.transform();
        let y = q.quantile(0.5) + 2.0 * rng.sample::<f64, _>(StandardNormal);
        let exact = crps_pwl(&params, y);
        let numeric = crps_quadrature(&|a| q.quantile(a), y);
        worst = worst.max((exact - numeric).abs());
    }
    Ok(OracleCheck::below(format!("closed-form CRPS matches quadrature ({pairs} pairs)"), worst, 1e-6))
}

fn random_tensor(dims: &[usize], rng: &mut ChaCha8Rng, scale: f64) -> Tensor {
    let n = dims.iter().product();
    Tensor::from_vec(dims.to_vec(), (0..n).map(|_| scale * rng.sample::<f64, _>(StandardNormal)).collect())
        .expect("tensor dims")
}

/// Gradient of `objective` through a whole forecaster against central
/// differences; the value is the largest relative error.
pub fn model_gradient_check(
    config: &ModelConfig,
    layout: &SpatialLayout,
    objective: Objective,
    batch: usize,
    seed: u64,
) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let model = RecurrentForecaster::new(config.clone(), layout.clone(), seed)?;
    let rows = batch * layout.node_count();
    let d = config.input_dim;
    let history: Vec<Tensor> = (0..3).map(|_| random_tensor(&[rows, d], &mut rng, 1.0)).collect();
    let targets: Vec<MaskedTarget> =
        (0..config.horizon).map(|_| MaskedTarget::dense(random_tensor(&[rows, d], &mut rng, 1.0))).collect();
    // nudge the weights so that biases and symmetric inits are not special
    let params: Vec<Tensor> = model
        .params()
        .tensors()
        .iter()
        .map(|t| {
            let jitter = random_tensor(t.dims(), &mut rng, 0.05);
            let data = t.data().iter().zip(jitter.data()).map(|(a, b)| a + b).collect();
            Tensor::from_vec(t.dims().to_vec(), data).expect("same dims")
        })
        .collect();
    finite_difference_check(
        |tape: &mut Tape, vars: &[Var]| {
            let steps = model.forecast_on_tape(tape, vars, &history, DecoderFeed::FreeRunning)?;
            objective.on_tape(tape, &steps, &targets)
        },
        &params,
        1e-6,
    )
}

type Primitive = fn(&mut Tape, Var, Var, &Arc<Tensor>) -> Result<Var>;

/// Every tape primitive applied to two random `3 x 4` inputs (plus a
/// fixed `3 x 3` block matrix), reduced to a scalar through fixed random
/// weights so that no output entry is silently ignored.
pub fn primitive_gradient_oracle(seed: u64) -> Result<Vec<OracleCheck>> {
    let cases: [(&str, Primitive); 19] = [
        ("add", |t, a, b, _| t.add(a, b)),
        ("sub", |t, a, b, _| t.sub(a, b)),
        ("mul", |t, a, b, _| t.mul(a, b)),
        ("add_bias", |t, a, b, _| {
            let ones = t.constant(Tensor::full(&[1, 3], 1.0));
            let bias = t.matmul(ones, b)?;
            t.add_bias(a, bias)
        }),
        ("scale", |t, a, _, _| t.scale(a, -1.7)),
        ("offset", |t, a, _, _| t.offset(a, 0.3)),
        ("matmul", |t, a, b, _| {
            let left = t.slice_cols(b, 0, 3)?;
            t.matmul(left, a)
        }),
        ("sigmoid", |t, a, _, _| t.sigmoid(a)),
        ("tanh", |t, a, _, _| t.tanh(a)),
        ("relu", |t, a, _, _| t.relu(a)),
        ("abs", |t, a, _, _| t.abs(a)),
        ("softplus", |t, a, _, _| t.softplus(a)),
        ("sum", |t, a, b, _| {
            let s = t.sum(a)?;
            let p = t.mul(a, b)?;
            let q = t.sum(p)?;
            t.mul(s, q)
        }),
        ("mean", |t, a, b, _| {
            let p = t.mul(a, b)?;
            let m = t.mean(p)?;
            t.mul(m, m)
        }),
        ("concat_cols", |t, a, b, _| t.concat_cols(&[a, b, a])),
        ("slice_cols", |t, a, _, _| t.slice_cols(a, 1, 3)),
        ("softmax_rows", |t, a, _, _| t.softmax_rows(a)),
        ("cumsum_rows", |t, a, _, _| t.cumsum_rows(a)),
        ("block_matmul", |t, a, _, m| t.block_matmul(Arc::clone(m), a)),
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let block = Arc::new(random_tensor(&[3, 3], &mut rng, 1.0));
    cases
        .iter()
        .map(|&(name, op)| {
            let inputs = [random_tensor(&[3, 4], &mut rng, 1.0), random_tensor(&[3, 4], &mut rng, 1.0)];
            let probe = random_tensor(&[64], &mut rng, 1.0);
            let err = finite_difference_check(
                |tape: &mut Tape, vars: &[Var]| {
                    let out = op(tape, vars[0], vars[1], &block)?;
                    let dims = tape.value(out).dims().to_vec();
                    let n = dims.iter().product();
                    let w = tape.constant(Tensor::from_vec(dims, probe.data()[..n].to_vec())?);
                    let weighted = tape.mul(out, w)?;
                    tape.sum(weighted)
                },
                &inputs,
                1e-6,
            )?;
            Ok(OracleCheck::below(format!("gradient: primitive {name}"), err, 1e-4))
        })
        .collect()
}

/// Model and loss gradient checks on a three-node graph (and a 3x1
/// grid), horizon 2, four hidden units.
pub fn gradient_oracle(seed: u64) -> Result<Vec<OracleCheck>> {
    let adjacency = Tensor::matrix(3, 3, vec![1.0, 0.6, 0.0, 0.3, 1.0, 0.8, 0.0, 0.5, 1.0])?;
    let graph = SpatialGraph::new(adjacency)?;
    let graph_layout = SpatialLayout::Graph { supports: vec![random_walk_support(&graph), reverse_random_walk_support(&graph)] };
    let grid_layout = SpatialLayout::Grid { width: 3, height: 1, padding: Padding::Zero };
    let base = ModelConfig { hidden_units: 4, horizon: 2, diffusion_steps: 2, kernel_size: 3, ..Default::default() };
    let cases = [
        ("graph-conv gru, point head, MAE", CellKind::GraphConv, Gating::Gru, Objective::Mae),
        ("graph-conv plain, quantile head, pinball", CellKind::GraphConv, Gating::Plain, Objective::Quantile { rho: 0.05 }),
        ("graph-conv gru, interval head, MIS", CellKind::GraphConv, Gating::Gru, Objective::Mis { rho: 0.05, mae_weight: 1.0 }),
        ("graph-conv gru, spline head, CRPS", CellKind::GraphConv, Gating::Gru, Objective::Crps),
        ("grid-conv plain, point head, MAE", CellKind::GridConv, Gating::Plain, Objective::Mae),
        ("grid-conv gru, spline head, CRPS", CellKind::GridConv, Gating::Gru, Objective::Crps),
    ];
    cases
        .iter()
        .enumerate()
        .map(|(i, &(name, cell, gating, objective))| {
            let layout = if cell == CellKind::GraphConv { &graph_layout } else { &grid_layout };
            let cfg = ModelConfig { cell, gating, head: objective.head(), ..base.clone() };
            let err = model_gradient_check(&cfg, layout, objective, 2, seed.wrapping_add(i as u64))?;
            Ok(OracleCheck::below(format!("gradient: {name}"), err, 1e-4))
        })
        .collect()
}

/// Every suite with its default size.
pub fn all_oracles(seed: u64) -> Result<Vec<OracleCheck>> {
    let mut out = vec![prop2_oracle(200, seed)?, crps_oracle(100, seed)?];
    out.extend(primitive_gradient_oracle(seed)?);
    out.extend(gradient_oracle(seed)?);
    Ok(out)
}
