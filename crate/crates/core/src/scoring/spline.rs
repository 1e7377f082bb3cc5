//! Monotone piecewise-linear quantile functions and their closed-form CRPS.
//!
//! A quantile function is `Q(a) = b + sum_j s_j max(0, a - k_j)` with
//! nonnegative slopes `s_j` and knots `k_j` in `[0, 1)`. The raw parameter
//! vector has one intercept, `n` slope logits (mapped through softplus)
//! and `n` knot logits (softmax, cumulative sum; the first knot is pinned
//! at zero so `Q(0) = b`).

use std::sync::Arc;

use crate::diffcore::{CustomOp, Tape, Tensor, Var};
use crate::error::{Error, Result};

/// Segments used by the spline head.
pub const SPLINE_PIECES: usize = 5;
/// Raw parameters per predicted scalar: intercept, slopes, knots.
pub const SPLINE_PARAMS: usize = 1 + 2 * SPLINE_PIECES;

/// Unconstrained spline parameters as emitted by a network head.
#[derive(Clone, Debug, PartialEq)]
pub struct SplineQuantileParams {
    raw: Vec<f64>,
}

impl SplineQuantileParams {
    pub fn new(raw: Vec<f64>) -> Result<Self> {
        if raw.len() < 3 || raw.len().is_multiple_of(2) {
            return Err(Error::invalid(format!(
                "spline parameters need 1 + 2n entries, got {}",
                raw.len()
            )));
        }
        Ok(SplineQuantileParams { raw })
    }

    pub fn raw(&self) -> &[f64] {
        &self.raw
    }

    pub fn pieces(&self) -> usize {
        (self.raw.len() - 1) / 2
    }

    pub fn transform(&self) -> SplineQuantile {
        let n = self.pieces();
        let slopes = self.raw[1..1 + n].iter().map(|&r| softplus(r)).collect();
        let logits = &self.raw[1 + n..];
        let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let e: Vec<f64> = logits.iter().map(|&r| (r - m).exp()).collect();
        let z: f64 = e.iter().sum();
        let mut knots = Vec::with_capacity(n);
        let mut acc = 0.0;
        knots.push(0.0);
        for w in e.iter().take(n - 1) {
            acc += w / z;
            knots.push(acc.min(1.0));
        }
        SplineQuantile { intercept: self.raw[0], slopes, knots }
    }
}

fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x + (-x).exp()
    } else {
        x.exp().ln_1p()
    }
}

/// Constrained (monotone) quantile function.
#[derive(Clone, Debug, PartialEq)]
pub struct SplineQuantile {
    pub intercept: f64,
    pub slopes: Vec<f64>,
    pub knots: Vec<f64>,
}

impl SplineQuantile {
    pub fn new(intercept: f64, slopes: Vec<f64>, knots: Vec<f64>) -> Result<Self> {
        if slopes.len() != knots.len() || slopes.is_empty() {
            return Err(Error::invalid("spline needs one knot per slope"));
        }
        if slopes.iter().any(|s| !(*s >= 0.0)) {
            return Err(Error::invalid("spline slopes must be nonnegative"));
        }
        if knots.iter().any(|k| !(0.0..1.0).contains(k)) || knots.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::invalid("spline knots must be nondecreasing in [0, 1)"));
        }
        Ok(SplineQuantile { intercept, slopes, knots })
    }

    pub fn quantile(&self, alpha: f64) -> f64 {
        self.intercept
            + self.slopes.iter().zip(&self.knots).map(|(s, k)| s * (alpha - k).max(0.0)).sum::<f64>()
    }

    /// `sup { a in [0, 1] : Q(a) <= y }`, or 0 when `y < Q(0)`.
    pub fn crossing_level(&self, y: f64) -> f64 {
        crossing_level(self.intercept, &self.slopes, &self.knots, y)
    }

    /// `integral_0^1 2 pinball(y, Q(a), a) da`, exactly.
    pub fn crps(&self, y: f64) -> f64 {
        crps_closed_form(self.intercept, &self.slopes, &self.knots, y).0
    }
}

pub fn spline_quantile_eval(params: &SplineQuantileParams, alpha: f64) -> f64 {
    params.transform().quantile(alpha)
}

pub fn crps_pwl(params: &SplineQuantileParams, y: f64) -> f64 {
    params.transform().crps(y)
}

fn crossing_level(b: f64, slopes: &[f64], knots: &[f64], y: f64) -> f64 {
    if y < b {
        return 0.0;
    }
    let mut order: Vec<usize> = (0..knots.len()).collect();
    order.sort_by(|&i, &j| knots[i].total_cmp(&knots[j]));
    let mut breaks: Vec<f64> = order.iter().map(|&i| knots[i].clamp(0.0, 1.0)).collect();
    breaks.push(1.0);
    let mut a0 = 0.0;
    let mut q0 = b;
    let mut slope = 0.0;
    let mut next = 0;
    for &a1 in &breaks {
        // activate every knot at or before the segment start
        while next < order.len() && knots[order[next]] <= a0 {
            slope += slopes[order[next]];
            next += 1;
        }
        let q1 = q0 + slope * (a1 - a0);
        if q1 > y {
            return a0 + (y - q0) / slope;
        }
        a0 = a1;
        q0 = q1;
    }
    1.0
}

/// Returns the CRPS and the crossing level used to evaluate it.
fn crps_closed_form(b: f64, slopes: &[f64], knots: &[f64], y: f64) -> (f64, f64) {
    let at = crossing_level(b, slopes, knots, y);
    let mut v = (2.0 * at - 1.0) * y + (1.0 - 2.0 * at) * b;
    for (s, k) in slopes.iter().zip(knots) {
        let tail = 1.0 - k;
        let past = (at - k).max(0.0);
        v += s * (tail * tail * tail / 3.0 - past * past);
    }
    (v.max(0.0), at)
}

/// Row-wise CRPS primitive. Inputs: intercept `[N, 1]`, slopes `[N, n]`,
/// knots `[N, n]`; output `[N, 1]`. The crossing level drops out of the
/// derivative because `Q(a*) = y` there.
pub(crate) struct CrpsOp {
    targets: Arc<[f64]>,
}

impl CustomOp for CrpsOp {
    fn name(&self) -> &'static str {
        "crps_pwl"
    }

    fn forward(&self, inputs: &[&Tensor]) -> Result<Tensor> {
        let (b, s, k) = (inputs[0], inputs[1], inputs[2]);
        let rows = b.rows();
        if b.cols() != 1 || s.dims() != k.dims() || s.rows() != rows || self.targets.len() != rows {
            return Err(Error::shape(
                "crps_pwl",
                format!("intercept {:?}, slopes {:?}, knots {:?}, {} targets", b.dims(), s.dims(), k.dims(), self.targets.len()),
            ));
        }
        let n = s.cols();
        let out = (0..rows)
            .map(|r| {
                crps_closed_form(
                    b.data()[r],
                    &s.data()[r * n..(r + 1) * n],
                    &k.data()[r * n..(r + 1) * n],
                    self.targets[r],
                )
                .0
            })
            .collect();
        Tensor::from_vec(vec![rows, 1], out)
    }

    fn backward(&self, inputs: &[&Tensor], _output: &Tensor, grad: &Tensor) -> Vec<Tensor> {
        let (b, s, k) = (inputs[0], inputs[1], inputs[2]);
        let (rows, n) = (s.rows(), s.cols());
        let mut gb = Tensor::zeros(b.dims());
        let mut gs = Tensor::zeros(s.dims());
        let mut gk = Tensor::zeros(k.dims());
        for r in 0..rows {
            let g = grad.data()[r];
            let sr = &s.data()[r * n..(r + 1) * n];
            let kr = &k.data()[r * n..(r + 1) * n];
            let at = crossing_level(b.data()[r], sr, kr, self.targets[r]);
            gb.data_mut()[r] = g * (1.0 - 2.0 * at);
            for j in 0..n {
                let tail = 1.0 - kr[j];
                let past = (at - kr[j]).max(0.0);
                gs.data_mut()[r * n + j] = g * (tail * tail * tail / 3.0 - past * past);
                gk.data_mut()[r * n + j] = g * sr[j] * (2.0 * past - tail * tail);
            }
        }
        vec![gb, gs, gk]
    }
}

/// Differentiable spline pieces of a raw head `[N, 1 + 2n]`.
#[derive(Clone, Copy, Debug)]
pub struct SplineVars {
    pub intercept: Var,
    pub slopes: Var,
    pub knots: Var,
    pub pieces: usize,
}

pub fn spline_from_raw_on_tape(tape: &mut Tape, raw: Var) -> Result<SplineVars> {
    let cols = tape.value(raw).cols();
    if cols < 3 || cols.is_multiple_of(2) {
        return Err(Error::shape("spline head", format!("{cols} columns is not 1 + 2n")));
    }
    let n = (cols - 1) / 2;
    let rows = tape.value(raw).rows();
    let intercept = tape.slice_cols(raw, 0, 1)?;
    let slope_logits = tape.slice_cols(raw, 1, 1 + n)?;
    let slopes = tape.softplus(slope_logits)?;
    let knot_logits = tape.slice_cols(raw, 1 + n, cols)?;
    let weights = tape.softmax_rows(knot_logits)?;
    let cum = tape.cumsum_rows(weights)?;
    let zero = tape.constant(Tensor::zeros(&[rows, 1]));
    let knots = if n == 1 {
        zero
    } else {
        let inner = tape.slice_cols(cum, 0, n - 1)?;
        tape.concat_cols(&[zero, inner])?
    };
    Ok(SplineVars { intercept, slopes, knots, pieces: n })
}

/// `Q(alpha)` for every row, as `[N, 1]`.
pub fn spline_quantile_on_tape(tape: &mut Tape, sv: &SplineVars, alpha: f64) -> Result<Var> {
    let rows = tape.value(sv.intercept).rows();
    let level = tape.constant(Tensor::full(&[rows, sv.pieces], alpha));
    let gap = tape.sub(level, sv.knots)?;
    let hinge = tape.relu(gap)?;
    let weighted = tape.mul(hinge, sv.slopes)?;
    let ones = tape.constant(Tensor::full(&[sv.pieces, 1], 1.0));
    let rise = tape.matmul(weighted, ones)?;
    tape.add(sv.intercept, rise)
}

/// Per-row CRPS `[N, 1]` against constant targets.
pub fn crps_on_tape(tape: &mut Tape, sv: &SplineVars, targets: &[f64]) -> Result<Var> {
    let op = Arc::new(CrpsOp { targets: targets.into() });
    tape.custom(op, &[sv.intercept, sv.slopes, sv.knots])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffcore::finite_difference_check;

    fn uniform() -> SplineQuantile {
        SplineQuantile::new(0.0, vec![1.0, 0.0, 0.0, 0.0, 0.0], vec![0.0, 0.2, 0.4, 0.6, 0.8]).unwrap()
    }

    #[test]
    fn uniform_predictive_crps_is_one_twelfth() {
        assert!((uniform().crps(0.5) - 1.0 / 12.0).abs() < 1e-15);
    }

    #[test]
    fn point_mass_has_zero_crps() {
        let q = SplineQuantile::new(2.0, vec![0.0; 5], vec![0.0, 0.1, 0.2, 0.3, 0.4]).unwrap();
        assert_eq!(q.crps(2.0), 0.0);
        assert!((q.crps(3.0) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn constant_when_slopes_vanish() {
        let mut raw = vec![1.5];
        raw.extend([f64::NEG_INFINITY; 5]);
        raw.extend([0.3, -0.2, 0.0, 1.0, 0.5]);
        let p = SplineQuantileParams::new(raw).unwrap();
        for a in [0.01, 0.3, 0.77, 0.99] {
            assert_eq!(spline_quantile_eval(&p, a), 1.5);
        }
    }

    #[test]
    fn single_hinge_rise() {
        let s = 3.0;
        let q = SplineQuantile::new(0.0, vec![0.0, s, 0.0, 0.0, 0.0], vec![0.0, 0.5, 0.6, 0.7, 0.8]).unwrap();
        assert!((q.quantile(0.75) - q.quantile(0.5) - 0.25 * s).abs() < 1e-15);
    }

    #[test]
    fn transformed_knots_are_ordered() {
        let p = SplineQuantileParams::new(vec![0.0, 1., 2., 3., 4., 5., -3., 2., 0.5, 1.0, 0.0]).unwrap();
        let q = p.transform();
        assert_eq!(q.knots[0], 0.0);
        assert!(q.knots.windows(2).all(|w| w[1] > w[0]));
        assert!(q.knots.iter().all(|k| *k < 1.0));
        assert!(q.slopes.iter().all(|s| *s > 0.0));
    }

    #[test]
    fn crossing_level_inverts_quantile() {
        let q = SplineQuantile::new(-1.0, vec![0.5, 2.0, 0.0, 1.0, 0.3], vec![0.0, 0.1, 0.4, 0.5, 0.9]).unwrap();
        for a in [0.05, 0.2, 0.55, 0.95] {
            let y = q.quantile(a);
            assert!((q.crossing_level(y) - a).abs() < 1e-12);
        }
        assert_eq!(q.crossing_level(-5.0), 0.0);
        assert_eq!(q.crossing_level(50.0), 1.0);
    }

    #[test]
    fn crps_op_gradient_matches_finite_differences() {
        let raw = Tensor::matrix(
            3,
            11,
            vec![
                0.1, 0.3, -0.5, 1.0, 0.2, -1.0, 0.4, 0.1, -0.3, 0.8, 0.0, //
                -0.4, 1.2, 0.1, -0.2, 0.5, 0.3, -0.6, 0.9, 0.2, 0.1, -0.1, //
                0.7, -0.3, 0.6, 0.4, -0.8, 1.1, 0.0, 0.0, 0.5, -0.5, 0.3,
            ],
        )
        .unwrap();
        let targets = [0.35, -0.9, 1.4];
        let err = finite_difference_check(
            |t, v| {
                let sv = spline_from_raw_on_tape(t, v[0])?;
                let c = crps_on_tape(t, &sv, &targets)?;
                let m = spline_quantile_on_tape(t, &sv, 0.3)?;
                let s1 = t.sum(c)?;
                let s2 = t.sum(m)?;
                t.add(s1, s2)
            },
            &[raw],
            1e-5,
        )
        .unwrap();
        assert!(err < 1e-6, "{err}");
    }
}
