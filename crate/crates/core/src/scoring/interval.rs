use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A `(1 - rho)` interval `[lower, upper]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct IntervalSpec {
    pub rho: f64,
    pub lower: f64,
    pub upper: f64,
}

impl IntervalSpec {
    pub fn new(rho: f64, lower: f64, upper: f64) -> Result<Self> {
        check_rho(rho)?;
        if !(upper >= lower) {
            return Err(Error::invalid(format!("interval upper {upper} below lower {lower}")));
        }
        Ok(IntervalSpec { rho, lower, upper })
    }

    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }
}

pub(crate) fn check_rho(rho: f64) -> Result<()> {
    if rho > 0.0 && rho < 1.0 {
        Ok(())
    } else {
        Err(Error::invalid(format!("rho must lie in (0, 1), got {rho}")))
    }
}

/// Interval score of a single observation; the boundary itself counts as
/// inside.
#[inline]
pub fn interval_score(lower: f64, upper: f64, z: f64, rho: f64) -> f64 {
    let mut s = upper - lower;
    if z > upper {
        s += 2.0 / rho * (z - upper);
    }
    if z < lower {
        s += 2.0 / rho * (lower - z);
    }
    s
}

/// Mean interval score over instances with per-instance bounds.
pub fn mis_metric(lower: &[f64], upper: &[f64], observations: &[f64], rho: f64) -> Result<f64> {
    check_rho(rho)?;
    if lower.len() != upper.len() || lower.len() != observations.len() {
        return Err(Error::shape(
            "mis_metric",
            format!("{} lower, {} upper, {} observations", lower.len(), upper.len(), observations.len()),
        ));
    }
    if observations.is_empty() {
        return Err(Error::invalid("mis_metric needs at least one observation"));
    }
    let total: f64 = lower
        .iter()
        .zip(upper)
        .zip(observations)
        .map(|((&l, &u), &z)| interval_score(l, u, z, rho))
        .sum();
    Ok(total / observations.len() as f64)
}

/// `MIS_N(u, l)` of one fixed interval against a batch of draws.
pub fn mis_of_interval(lower: f64, upper: f64, samples: &[f64], rho: f64) -> f64 {
    let total: f64 = samples.iter().map(|&z| interval_score(lower, upper, z, rho)).sum();
    total / samples.len() as f64
}

/// Order-statistic ranks `(ceil(rho N / 2), N - floor(rho N / 2))`, 1-based.
///
/// `rho N / 2` within 1e-9 of an integer is treated as that integer so the
/// ranks do not depend on the rounding of the product.
pub fn order_statistic_ranks(n: usize, rho: f64) -> (usize, usize) {
    let half = rho * n as f64 / 2.0;
    let nearest = half.round();
    let (lo, hi) = if (half - nearest).abs() < 1e-9 {
        (nearest as usize, nearest as usize)
    } else {
        (half.ceil() as usize, half.floor() as usize)
    };
    (lo.max(1), n - hi)
}

fn sorted(samples: &[f64]) -> Result<Vec<f64>> {
    if samples.len() < 2 {
        return Err(Error::invalid(format!("need at least two samples, got {}", samples.len())));
    }
    if let Some(v) = samples.iter().find(|v| !v.is_finite()) {
        return Err(Error::invalid(format!("sample {v} is not finite")));
    }
    let mut z = samples.to_vec();
    z.sort_by(f64::total_cmp);
    Ok(z)
}

/// `l = z_(ceil(rho N / 2))`, `u = z_(N - floor(rho N / 2))` over the sorted
/// batch: the minimizer of `MIS_N`.
pub fn empirical_interval(samples: &[f64], rho: f64) -> Result<IntervalSpec> {
    check_rho(rho)?;
    let z = sorted(samples)?;
    let (lo, hi) = order_statistic_ranks(z.len(), rho);
    Ok(IntervalSpec { rho, lower: z[lo - 1], upper: z[hi - 1] })
}

/// Exhaustive search of `MIS_N` over every pair of order statistics
/// (plus infinite guards).
///
/// Scores within a relative 1e-10 are treated as tied; ties go to the
/// lower `l`, then the lower `u`, which selects the lower end of each
/// flat stretch of the objective.
pub fn brute_force_mis_minimizer(samples: &[f64], rho: f64) -> Result<IntervalSpec> {
    check_rho(rho)?;
    let z = sorted(samples)?;
    let mut candidates = Vec::with_capacity(z.len() + 2);
    candidates.push(f64::NEG_INFINITY);
    candidates.extend_from_slice(&z);
    candidates.push(f64::INFINITY);

    let mut best: Option<(f64, f64, f64)> = None;
    for (i, &l) in candidates.iter().enumerate() {
        for &u in &candidates[i..] {
            if !(u - l).is_finite() {
                continue;
            }
            let score = mis_of_interval(l, u, &z, rho);
            best = match best {
                None => Some((score, l, u)),
                Some((bs, bl, bu)) => {
                    let tol = 1e-10 * bs.abs().max(1.0);
                    if score < bs - tol {
                        Some((score, l, u))
                    } else if (score - bs).abs() <= tol && (l, u) < (bl, bu) {
                        Some((bs.min(score), l, u))
                    } else {
                        Some((bs, bl, bu))
                    }
                }
            };
        }
    }
    let (_, lower, upper) = best.expect("at least one finite pair");
    Ok(IntervalSpec { rho, lower, upper })
}
