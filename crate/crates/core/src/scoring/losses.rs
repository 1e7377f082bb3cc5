//! Training objectives, both as plain scalar functions and as recorded
//! tape programs over `[rows, features]` predictions.
//!
//! Every tape loss takes a 0/1 mask of the same shape as the target;
//! masked entries contribute nothing and the average runs over the
//! unmasked count only.

use crate::diffcore::{Tape, Tensor, Var};
use crate::error::{Error, Result};

use super::interval::check_rho;
use super::spline::{crps_on_tape, spline_from_raw_on_tape};

/// The three levels of the quantile head at miscoverage `rho`, in
/// emission order.
pub fn quantile_levels(rho: f64) -> [f64; 3] {
    [rho / 2.0, 0.5, 1.0 - rho / 2.0]
}

/// `(y - f) (level - 1{y < f})`.
pub fn pinball_loss(y: f64, f: f64, level: f64) -> f64 {
    let below = if y < f { 1.0 } else { 0.0 };
    (y - f) * (level - below)
}

/// Batch mean of `(u - l) + 2/rho (y - u)+ + 2/rho (l - y)+ + |y - f|`.
pub fn mis_training_loss(y: &[f64], upper: &[f64], lower: &[f64], point: &[f64], rho: f64) -> Result<f64> {
    check_rho(rho)?;
    let n = y.len();
    if upper.len() != n || lower.len() != n || point.len() != n {
        return Err(Error::shape(
            "mis_training_loss",
            format!("{n} targets, {} upper, {} lower, {} point", upper.len(), lower.len(), point.len()),
        ));
    }
    if n == 0 {
        return Err(Error::invalid("mis_training_loss needs at least one target"));
    }
    let total: f64 = (0..n)
        .map(|i| {
            let (z, u, l) = (y[i], upper[i], lower[i]);
            (u - l) + 2.0 / rho * (z - u).max(0.0) + 2.0 / rho * (l - z).max(0.0) + (z - point[i]).abs()
        })
        .sum();
    Ok(total / n as f64)
}

/// Target and mask for a batch of rows. Both tensors share one shape.
#[derive(Clone, Debug)]
pub struct MaskedTarget {
    pub target: Tensor,
    pub mask: Tensor,
}

impl MaskedTarget {
    pub fn new(target: Tensor, mask: Tensor) -> Result<Self> {
        if target.dims() != mask.dims() {
            return Err(Error::shape("masked target", format!("{:?} vs mask {:?}", target.dims(), mask.dims())));
        }
        if mask.data().iter().any(|&m| m != 0.0 && m != 1.0) {
            return Err(Error::invalid("mask entries must be 0 or 1"));
        }
        Ok(MaskedTarget { target, mask })
    }

    pub fn dense(target: Tensor) -> Self {
        let mask = Tensor::full(target.dims(), 1.0);
        MaskedTarget { target, mask }
    }

    pub fn observed(&self) -> usize {
        self.mask.data().iter().filter(|&&m| m != 0.0).count()
    }
}

fn masked_mean(tape: &mut Tape, per_elem: Var, t: &MaskedTarget) -> Result<Var> {
    let mask = tape.constant(t.mask.clone());
    let kept = tape.mul(per_elem, mask)?;
    let total = tape.sum(kept)?;
    tape.scale(total, 1.0 / t.observed().max(1) as f64)
}

fn residual(tape: &mut Tape, pred: Var, t: &MaskedTarget) -> Result<Var> {
    let y = tape.constant(t.target.clone());
    tape.sub(y, pred)
}

/// Masked mean absolute error.
pub fn mae_on_tape(tape: &mut Tape, pred: Var, t: &MaskedTarget) -> Result<Var> {
    let r = residual(tape, pred, t)?;
    let a = tape.abs(r)?;
    masked_mean(tape, a, t)
}

/// Masked sum of `(y - f)^2 / 2`: the negative log-likelihood of a
/// unit-variance Gaussian, up to a constant.
pub fn half_squared_error_sum_on_tape(tape: &mut Tape, pred: Var, t: &MaskedTarget) -> Result<Var> {
    let r = residual(tape, pred, t)?;
    let sq = tape.mul(r, r)?;
    let mask = tape.constant(t.mask.clone());
    let kept = tape.mul(sq, mask)?;
    let total = tape.sum(kept)?;
    tape.scale(total, 0.5)
}

fn pinball_elems(tape: &mut Tape, pred: Var, t: &MaskedTarget, level: f64) -> Result<Var> {
    let r = residual(tape, pred, t)?;
    let over = tape.relu(r)?;
    let neg = tape.scale(r, -1.0)?;
    let under = tape.relu(neg)?;
    let a = tape.scale(over, level)?;
    let b = tape.scale(under, 1.0 - level)?;
    tape.add(a, b)
}

/// Masked mean pinball loss at one level.
pub fn pinball_on_tape(tape: &mut Tape, pred: Var, t: &MaskedTarget, level: f64) -> Result<Var> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::invalid(format!("quantile level must lie in (0, 1), got {level}")));
    }
    let e = pinball_elems(tape, pred, t, level)?;
    masked_mean(tape, e, t)
}

/// Equal-weight sum of the pinball losses of the three quantile heads at
/// the levels of [`quantile_levels`].
pub fn quantile3_on_tape(tape: &mut Tape, heads: [Var; 3], t: &MaskedTarget, rho: f64) -> Result<Var> {
    check_rho(rho)?;
    let mut total = None;
    for (h, level) in heads.into_iter().zip(quantile_levels(rho)) {
        let l = pinball_on_tape(tape, h, t, level)?;
        total = Some(match total {
            None => l,
            Some(acc) => tape.add(acc, l)?,
        });
    }
    Ok(total.expect("three heads"))
}

/// Masked mean MIS training loss with `mae_weight |y - f|` added.
pub fn mis_on_tape(
    tape: &mut Tape,
    lower: Var,
    point: Var,
    upper: Var,
    t: &MaskedTarget,
    rho: f64,
    mae_weight: f64,
) -> Result<Var> {
    check_rho(rho)?;
    let width = tape.sub(upper, lower)?;
    let above = residual(tape, upper, t)?;
    let above = tape.relu(above)?;
    let y = tape.constant(t.target.clone());
    let below = tape.sub(lower, y)?;
    let below = tape.relu(below)?;
    let miss = tape.add(above, below)?;
    let miss = tape.scale(miss, 2.0 / rho)?;
    let mut e = tape.add(width, miss)?;
    if mae_weight != 0.0 {
        let r = residual(tape, point, t)?;
        let a = tape.abs(r)?;
        let a = tape.scale(a, mae_weight)?;
        e = tape.add(e, a)?;
    }
    masked_mean(tape, e, t)
}

/// Masked mean CRPS of a spline head `[rows, (1 + 2n) * D]`: feature `d`
/// owns the column block `d * (1 + 2n) ..`.
pub fn crps_on_tape_masked(tape: &mut Tape, raw: Var, t: &MaskedTarget) -> Result<Var> {
    let d = t.target.cols();
    let cols = tape.value(raw).cols();
    if !cols.is_multiple_of(d) {
        return Err(Error::shape("crps loss", format!("{cols} spline columns for {d} target columns")));
    }
    let per = cols / d;
    let rows = t.target.rows();
    let mut total = None;
    for col in 0..d {
        let ys: Vec<f64> = (0..rows).map(|r| t.target.get2(r, col)).collect();
        let ms: Vec<f64> = (0..rows).map(|r| t.mask.get2(r, col)).collect();
        let block = if d == 1 { raw } else { tape.slice_cols(raw, col * per, (col + 1) * per)? };
        let sv = spline_from_raw_on_tape(tape, block)?;
        let c = crps_on_tape(tape, &sv, &ys)?;
        let m = tape.constant(Tensor::from_vec(vec![rows, 1], ms)?);
        let kept = tape.mul(c, m)?;
        let s = tape.sum(kept)?;
        total = Some(match total {
            None => s,
            Some(acc) => tape.add(acc, s)?,
        });
    }
    let total = total.expect("at least one column");
    tape.scale(total, 1.0 / t.observed().max(1) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffcore::finite_difference_check;

    #[test]
    fn pinball_hand_values() {
        assert_eq!(pinball_loss(0.3, 0.3, 0.9), 0.0);
        assert!((pinball_loss(1.0, 0.0, 0.975) - 0.975).abs() < 1e-15);
        assert!((pinball_loss(0.0, 1.0, 0.975) - 0.025).abs() < 1e-15);
    }

    #[test]
    fn mis_loss_hand_values() {
        assert_eq!(mis_training_loss(&[0.0], &[1.0], &[-1.0], &[0.0], 0.1).unwrap(), 2.0);
        assert!((mis_training_loss(&[2.0], &[1.0], &[-1.0], &[0.0], 0.05).unwrap() - 44.0).abs() < 1e-12);
        assert_eq!(mis_training_loss(&[3.0], &[3.0], &[3.0], &[3.0], 0.2).unwrap(), 0.0);
    }

    #[test]
    fn tape_mis_matches_scalar() {
        let mut tape = Tape::new();
        let l = tape.leaf(Tensor::matrix(2, 1, vec![-1.0, 0.5]).unwrap());
        let f = tape.leaf(Tensor::matrix(2, 1, vec![0.0, 1.0]).unwrap());
        let u = tape.leaf(Tensor::matrix(2, 1, vec![1.0, 0.7]).unwrap());
        let t = MaskedTarget::dense(Tensor::matrix(2, 1, vec![2.0, 0.0]).unwrap());
        let v = mis_on_tape(&mut tape, l, f, u, &t, 0.05, 1.0).unwrap();
        let want = mis_training_loss(&[2.0, 0.0], &[1.0, 0.7], &[-1.0, 0.5], &[0.0, 1.0], 0.05).unwrap();
        assert!((tape.scalar(v) - want).abs() < 1e-12);
    }

    #[test]
    fn mask_excludes_entries() {
        let mut tape = Tape::new();
        let p = tape.leaf(Tensor::matrix(2, 1, vec![0.0, 0.0]).unwrap());
        let t = MaskedTarget::new(
            Tensor::matrix(2, 1, vec![1.0, 100.0]).unwrap(),
            Tensor::matrix(2, 1, vec![1.0, 0.0]).unwrap(),
        )
        .unwrap();
        let v = mae_on_tape(&mut tape, p, &t).unwrap();
        assert_eq!(tape.scalar(v), 1.0);
        let g = tape.backward(v).unwrap().wrt(p);
        assert_eq!(g.data(), &[-1.0, 0.0]);
    }

    #[test]
    fn losses_pass_gradient_check() {
        let t = MaskedTarget::dense(Tensor::matrix(3, 1, vec![0.3, -1.2, 2.0]).unwrap());
        let p = |v: Vec<f64>| Tensor::matrix(3, 1, v).unwrap();
        let params = [p(vec![0.1, -0.4, 1.1]), p(vec![0.35, 0.2, 1.5]), p(vec![0.9, 0.7, 2.6])];
        let e = finite_difference_check(|tp, v| quantile3_on_tape(tp, [v[0], v[1], v[2]], &t, 0.05), &params, 1e-6).unwrap();
        assert!(e < 1e-6, "{e}");
        let e = finite_difference_check(|tp, v| mis_on_tape(tp, v[0], v[1], v[2], &t, 0.1, 1.0), &params, 1e-6).unwrap();
        assert!(e < 1e-6, "{e}");
    }
}
