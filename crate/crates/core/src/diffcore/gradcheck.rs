use super::tape::{Tape, Var};
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Output of [`record`].
#[derive(Debug)]
pub struct Recording {
    pub tape: Tape,
    pub inputs: Vec<Var>,
    pub output: Var,
}

/// Runs `program` on a fresh tape with `inputs` bound as leaves.
pub fn record<F>(inputs: &[Tensor], program: F) -> Result<Recording>
where
    F: FnOnce(&mut Tape, &[Var]) -> Result<Var>,
{
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.leaf(t.clone())).collect();
    let output = program(&mut tape, &vars)?;
    Ok(Recording { tape, inputs: vars, output })
}

/// Largest `|analytic - central difference| / max(1, |analytic|)` over
/// every coordinate of every parameter.
pub fn finite_difference_check<F>(program: F, params: &[Tensor], step: f64) -> Result<f64>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    if !(step > 0.0) {
        return Err(Error::invalid(format!("finite-difference step must be positive, got {step}")));
    }
    let rec = record(params, &program)?;
    let grads = rec.tape.backward(rec.output)?;
    let analytic: Vec<Tensor> = rec.inputs.iter().map(|&v| grads.wrt(v)).collect();

    let eval = |perturbed: &[Tensor]| -> Result<f64> {
        let r = record(perturbed, &program)?;
        let v = r.tape.value(r.output);
        if v.numel() != 1 {
            return Err(Error::NonScalarLoss(v.dims().to_vec()));
        }
        Ok(v.data()[0])
    };

    let mut worst: f64 = 0.0;
    let mut work = params.to_vec();
    for (pi, a) in analytic.iter().enumerate() {
        for k in 0..a.numel() {
            let orig = work[pi].data()[k];
            work[pi].data_mut()[k] = orig + step;
            let plus = eval(&work)?;
            work[pi].data_mut()[k] = orig - step;
            let minus = eval(&work)?;
            work[pi].data_mut()[k] = orig;
            let fd = (plus - minus) / (2.0 * step);
            let an = a.data()[k];
            worst = worst.max((an - fd).abs() / an.abs().max(1.0));
        }
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_is_accurate() {
        let x = Tensor::from_vec(vec![1, 3], vec![0.3, -1.2, 2.0]).unwrap();
        let err = finite_difference_check(
            |t, v| {
                let sq = t.mul(v[0], v[0])?;
                t.sum(sq)
            },
            &[x],
            1e-5,
        )
        .unwrap();
        assert!(err < 1e-6, "{err}");
    }

    #[test]
    fn linear_is_exact() {
        let x = Tensor::from_vec(vec![1, 2], vec![0.5, 2.0]).unwrap();
        let err = finite_difference_check(
            |t, v| {
                let s = t.scale(v[0], 3.0)?;
                t.sum(s)
            },
            &[x],
            1e-5,
        )
        .unwrap();
        assert!(err < 1e-10, "{err}");
    }

    #[test]
    fn relu_away_from_kink() {
        let x = Tensor::from_vec(vec![1, 2], vec![0.7, -0.4]).unwrap();
        let err = finite_difference_check(
            |t, v| {
                let r = t.relu(v[0])?;
                let sq = t.mul(r, r)?;
                t.sum(sq)
            },
            &[x],
            1e-5,
        )
        .unwrap();
        assert!(err < 1e-6, "{err}");
    }

    #[test]
    fn rejects_nonpositive_step() {
        assert!(finite_difference_check(|t, v| t.sum(v[0]), &[Tensor::scalar(1.0)], 0.0).is_err());
    }
}
