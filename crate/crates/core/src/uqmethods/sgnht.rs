//! Stochastic-gradient Nosé-Hoover thermostat sampling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplerConfig {
    /// `h`.
    pub step_size: f64,
    /// `A`.
    pub diffusion: f64,
    /// Initial thermostat `xi_0`.
    pub xi_init: f64,
    pub prior_variance: f64,
    /// Standard deviation of the initial parameters.
    pub init_std: f64,
    pub burn_in: usize,
    /// Steps between retained draws.
    pub thinning: usize,
    pub draws_per_chain: usize,
    pub chains: usize,
    pub batch_size: usize,
    /// Hard cap on sampling epochs (passes over the training windows).
    pub max_epochs: Option<usize>,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig {
            step_size: 5e-4,
            diffusion: 1.0,
            xi_init: 1.0,
            prior_variance: 4.0,
            init_std: 0.2,
            burn_in: 500,
            thinning: 1,
            draws_per_chain: 1,
            chains: 25,
            batch_size: 32,
            max_epochs: Some(50),
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.step_size > 0.0) {
            return Err(Error::Config(format!("step_size must be positive, got {}", self.step_size)));
        }
        if !(self.diffusion >= 0.0) || !(self.prior_variance > 0.0) || !(self.init_std >= 0.0) || !self.xi_init.is_finite() {
            return Err(Error::Config("diffusion, prior_variance and init_std are out of range".into()));
        }
        if self.chains == 0 || self.thinning == 0 || self.draws_per_chain == 0 || self.batch_size == 0 {
            return Err(Error::Config("chains, thinning, draws_per_chain and batch_size must be positive".into()));
        }
        Ok(())
    }

    /// Draws retained over all chains.
    pub fn total_draws(&self) -> usize {
        self.chains * self.draws_per_chain
    }
}

/// Position, momentum and thermostat of one chain.
#[derive(Clone, Debug, PartialEq)]
pub struct SgnhtState {
    pub theta: Vec<f64>,
    pub momentum: Vec<f64>,
    pub xi: f64,
}

impl SgnhtState {
    /// `theta ~ N(0, init_std^2)`, `p ~ N(0, I)`, `xi = xi_init`.
    pub fn random(dim: usize, init_std: f64, xi_init: f64, rng: &mut ChaCha8Rng) -> Self {
        let theta = (0..dim).map(|_| init_std * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, rng)).collect();
        let momentum = (0..dim).map(|_| StandardNormal.sample(rng)).collect();
        SgnhtState { theta, momentum, xi: xi_init }
    }
}

/// One update:
///
/// ```text
/// theta' = theta + p h
/// p'     = p - grad(theta') h - xi p h + N(0, 2 A h)
/// xi'    = xi + (p.p / d - 1) h
/// ```
pub fn sgnht_step(
    state: &mut SgnhtState,
    grad: impl FnOnce(&[f64]) -> Result<Vec<f64>>,
    step_size: f64,
    diffusion: f64,
    rng: &mut ChaCha8Rng,
) -> Result<()> {
    let h = step_size;
    let d = state.theta.len();
    for (t, p) in state.theta.iter_mut().zip(&state.momentum) {
        *t += p * h;
    }
    let g = grad(&state.theta)?;
    if g.len() != d {
        return Err(Error::shape("sgnht_step", format!("gradient has {} entries, state {d}", g.len())));
    }
    let kinetic = state.momentum.iter().map(|p| p * p).sum::<f64>() / d.max(1) as f64;
    let noise_sd = (2.0 * diffusion * h).sqrt();
    let xi = state.xi;
    for (p, gi) in state.momentum.iter_mut().zip(&g) {
        let eps: f64 = if noise_sd > 0.0 { StandardNormal.sample(rng) } else { 0.0 };
        *p += -gi * h - xi * *p * h + noise_sd * eps;
    }
    state.xi += (kinetic - 1.0) * h;
    Ok(())
}

/// Draws of one chain plus the largest `|xi|` seen along the way.
#[derive(Clone, Debug, PartialEq)]
pub struct ChainOutput {
    pub draws: Vec<Vec<f64>>,
    pub max_abs_xi: f64,
    pub steps: usize,
}

/// Runs one chain for `burn_in + thinning * draws_per_chain` steps (or
/// until `max_steps`, which then shortens the burn-in) and keeps every
/// `thinning`-th state after burn-in.
pub fn run_chain(
    mut state: SgnhtState,
    cfg: &SamplerConfig,
    max_steps: Option<usize>,
    mut grad: impl FnMut(&[f64], usize) -> Result<Vec<f64>>,
    rng: &mut ChaCha8Rng,
) -> Result<ChainOutput> {
    cfg.validate()?;
    let keep = cfg.thinning * cfg.draws_per_chain;
    let burn_in = match max_steps {
        Some(cap) => cfg.burn_in.min(cap.saturating_sub(keep)),
        None => cfg.burn_in,
    };
    let total = burn_in + keep;
    let mut out = ChainOutput { draws: Vec::with_capacity(cfg.draws_per_chain), max_abs_xi: state.xi.abs(), steps: total };
    for step in 0..total {
        sgnht_step(&mut state, |theta| grad(theta, step), cfg.step_size, cfg.diffusion, rng)?;
        let finite = state.xi.is_finite() && state.theta.iter().chain(&state.momentum).all(|v| v.is_finite());
        if !finite {
            return Err(Error::Divergence(format!("sampler state became non-finite at step {step}")));
        }
        out.max_abs_xi = out.max_abs_xi.max(state.xi.abs());
        if step >= burn_in && (step + 1 - burn_in) % cfg.thinning == 0 {
            out.draws.push(state.theta.clone());
        }
    }
    Ok(out)
}

/// Samples `N(0, I / lambda)` through the full sampler: a self-check on
/// the analytic target `L(theta) = lambda |theta|^2 / 2`.
pub fn sample_gaussian_target(dim: usize, lambda: f64, cfg: &SamplerConfig, seed: u64) -> Result<Vec<ChainOutput>> {
    (0..cfg.chains)
        .map(|c| {
            let mut rng = ChaCha8Rng::seed_from_u64(super::derive_seed(seed, c as u64));
            let init = SgnhtState::random(dim, cfg.init_std, cfg.xi_init, &mut rng);
            run_chain(init, cfg, None, |theta, _| Ok(theta.iter().map(|t| lambda * t).collect()), &mut rng)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_step_is_fixed_point() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut s = SgnhtState { theta: vec![0.3, -1.0], momentum: vec![2.0, 0.5], xi: 0.7 };
        let before = s.clone();
        sgnht_step(&mut s, |t| Ok(t.to_vec()), 0.0, 1.0, &mut rng).unwrap();
        assert_eq!(s, before);
    }

    #[test]
    fn free_drift_is_linear() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        // unit-norm-per-coordinate momentum keeps xi at zero
        let mut s = SgnhtState { theta: vec![0.0, 1.0], momentum: vec![1.0, -1.0], xi: 0.0 };
        for k in 1..=10 {
            sgnht_step(&mut s, |t| Ok(vec![0.0; t.len()]), 0.1, 0.0, &mut rng).unwrap();
            assert!((s.theta[0] - 0.1 * k as f64).abs() < 1e-12);
            assert!((s.theta[1] - (1.0 - 0.1 * k as f64)).abs() < 1e-12);
        }
        assert_eq!(s.xi, 0.0);
    }

    #[test]
    fn nonpositive_step_rejected() {
        let cfg = SamplerConfig { step_size: 0.0, ..Default::default() };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn divergence_names_step() {
        let cfg = SamplerConfig { step_size: 1.0, burn_in: 50, chains: 1, ..Default::default() };
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let init = SgnhtState::random(3, 1.0, 0.0, &mut rng);
        let err = run_chain(init, &cfg, None, |t, _| Ok(t.iter().map(|v| 1e300 * v).collect()), &mut rng).unwrap_err();
        assert!(matches!(err, Error::Divergence(ref m) if m.contains("step")), "{err}");
    }
}
