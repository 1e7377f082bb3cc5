use serde::{Deserialize, Serialize};

use super::tensor::Tensor;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OptimizerKind {
    PlainSgd,
    #[default]
    Adam,
}

/// First-order optimizer with optional global-norm gradient clipping.
#[derive(Clone, Debug)]
pub struct OptimizerState {
    pub kind: OptimizerKind,
    pub learning_rate: f64,
    pub clip_norm: Option<f64>,
    beta1: f64,
    beta2: f64,
    eps: f64,
    steps: u64,
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
}

impl OptimizerState {
    pub fn new(kind: OptimizerKind, learning_rate: f64, clip_norm: Option<f64>) -> Result<Self> {
        if !(learning_rate > 0.0 && learning_rate.is_finite()) {
            return Err(Error::invalid(format!("learning rate must be positive, got {learning_rate}")));
        }
        if let Some(c) = clip_norm {
            if !(c > 0.0) {
                return Err(Error::invalid(format!("clip norm must be positive, got {c}")));
            }
        }
        Ok(OptimizerState {
            kind,
            learning_rate,
            clip_norm,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            steps: 0,
            first: Vec::new(),
            second: Vec::new(),
        })
    }

    pub fn sgd(learning_rate: f64) -> Result<Self> {
        Self::new(OptimizerKind::PlainSgd, learning_rate, None)
    }

    pub fn adam(learning_rate: f64) -> Result<Self> {
        Self::new(OptimizerKind::Adam, learning_rate, None)
    }

    pub fn with_clip_norm(mut self, clip: f64) -> Self {
        self.clip_norm = Some(clip);
        self
    }

    /// Factor applied to the raw gradients by clipping (1 when inactive).
    pub fn clip_factor(&self, grads: &[Tensor]) -> f64 {
        match self.clip_norm {
            Some(c) => {
                let norm = grads.iter().map(|g| g.data().iter().map(|v| v * v).sum::<f64>()).sum::<f64>().sqrt();
                if norm > c { c / norm } else { 1.0 }
            }
            None => 1.0,
        }
    }

    pub fn step(&mut self, params: &mut [Tensor], grads: &[Tensor]) -> Result<()> {
        if params.len() != grads.len()
            || params.iter().zip(grads).any(|(p, g)| p.dims() != g.dims())
        {
            return Err(Error::shape(
                "optimizer step",
                format!(
                    "parameters {:?} vs gradients {:?}",
                    params.iter().map(|p| p.dims().to_vec()).collect::<Vec<_>>(),
                    grads.iter().map(|g| g.dims().to_vec()).collect::<Vec<_>>()
                ),
            ));
        }
        let factor = self.clip_factor(grads);
        self.steps += 1;
        match self.kind {
            OptimizerKind::PlainSgd => {
                for (p, g) in params.iter_mut().zip(grads) {
                    for (pv, gv) in p.data_mut().iter_mut().zip(g.data()) {
                        *pv -= self.learning_rate * factor * gv;
                    }
                }
            }
            OptimizerKind::Adam => {
                if self.first.is_empty() {
                    self.first = params.iter().map(|p| vec![0.0; p.numel()]).collect();
                    self.second = self.first.clone();
                }
                if self.first.iter().zip(params.iter()).any(|(m, p)| m.len() != p.numel()) {
                    return Err(Error::shape("optimizer step", "moment buffers do not match parameters"));
                }
                let t = self.steps as i32;
                let bc1 = 1.0 - self.beta1.powi(t);
                let bc2 = 1.0 - self.beta2.powi(t);
                for ((p, g), (m, v)) in
                    params.iter_mut().zip(grads).zip(self.first.iter_mut().zip(self.second.iter_mut()))
                {
                    for (((pv, gv), mv), vv) in
                        p.data_mut().iter_mut().zip(g.data()).zip(m.iter_mut()).zip(v.iter_mut())
                    {
                        let gv = gv * factor;
                        *mv = self.beta1 * *mv + (1.0 - self.beta1) * gv;
                        *vv = self.beta2 * *vv + (1.0 - self.beta2) * gv * gv;
                        let mhat = *mv / bc1;
                        let vhat = *vv / bc2;
                        *pv -= self.learning_rate * mhat / (vhat.sqrt() + self.eps);
                    }
                }
            }
        }
        Ok(())
    }

    pub fn set_learning_rate(&mut self, lr: f64) {
        self.learning_rate = lr;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sgd_hand_step() {
        let mut opt = OptimizerState::sgd(0.1).unwrap();
        let mut p = vec![Tensor::scalar(1.0)];
        opt.step(&mut p, &[Tensor::scalar(1.0)]).unwrap();
        assert!((p[0].data()[0] - 0.9).abs() < 1e-15);
    }

    #[test]
    fn zero_gradient_is_fixed_point() {
        for mut opt in [OptimizerState::sgd(0.1).unwrap(), OptimizerState::adam(0.1).unwrap()] {
            let mut p = vec![Tensor::from_vec(vec![2], vec![1.0, -2.0]).unwrap()];
            opt.step(&mut p, &[Tensor::zeros(&[2])]).unwrap();
            assert_eq!(p[0].data(), &[1.0, -2.0]);
        }
    }

    #[test]
    fn clipping_halves_norm_ten_gradient() {
        let mut opt = OptimizerState::sgd(1.0).unwrap().with_clip_norm(5.0);
        let g = Tensor::from_vec(vec![2], vec![6.0, 8.0]).unwrap();
        assert!((opt.clip_factor(std::slice::from_ref(&g)) - 0.5).abs() < 1e-15);
        let mut p = vec![Tensor::zeros(&[2])];
        opt.step(&mut p, &[g]).unwrap();
        assert_eq!(p[0].data(), &[-3.0, -4.0]);
    }

    #[test]
    fn shape_mismatch_is_error() {
        let mut opt = OptimizerState::adam(0.1).unwrap();
        let mut p = vec![Tensor::zeros(&[2])];
        assert!(opt.step(&mut p, &[Tensor::zeros(&[3])]).is_err());
    }

    #[test]
    fn adam_first_step_moves_by_learning_rate() {
        let mut opt = OptimizerState::adam(0.01).unwrap();
        let mut p = vec![Tensor::scalar(0.0)];
        opt.step(&mut p, &[Tensor::scalar(3.0)]).unwrap();
        assert!((p[0].data()[0] + 0.01).abs() < 1e-9);
    }
}
