use serde::{Deserialize, Serialize};

use super::interval::{check_rho, mis_metric};
use crate::error::{Error, Result};

/// Point and interval accuracy of one forecast against the truth.
///
/// Interval fields are `None` when the forecast carries no bounds.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummaryMetrics {
    pub mae: f64,
    pub rmse: f64,
    pub mis: Option<f64>,
    pub interval_width: Option<f64>,
    pub coverage: Option<f64>,
    pub crossing_rate: Option<f64>,
    /// Unmasked entries the metrics were computed over.
    pub count: usize,
}

/// Bounds at level `1 - rho`.
#[derive(Clone, Copy, Debug)]
pub struct Bounds<'a> {
    pub lower: &'a [f64],
    pub upper: &'a [f64],
    pub rho: f64,
}

#[derive(Clone, Copy, Debug, Default)]
pub struct MetricOptions<'a> {
    /// `true` marks an observed entry; `None` means all observed.
    pub mask: Option<&'a [bool]>,
    /// Replace `u` by `max(u, l)` before scoring. Crossing is still
    /// reported from the unclamped bounds.
    pub clamp_crossing: bool,
}

pub fn summary_metrics(
    mean: &[f64],
    bounds: Option<Bounds<'_>>,
    truth: &[f64],
    opts: MetricOptions<'_>,
) -> Result<SummaryMetrics> {
    let n = truth.len();
    let mut lens = vec![("mean", mean.len())];
    if let Some(b) = &bounds {
        check_rho(b.rho)?;
        lens.push(("lower", b.lower.len()));
        lens.push(("upper", b.upper.len()));
    }
    if let Some(m) = opts.mask {
        lens.push(("mask", m.len()));
    }
    if let Some((name, len)) = lens.iter().find(|(_, len)| *len != n) {
        return Err(Error::shape("summary_metrics", format!("{name} has {len} entries, truth has {n}")));
    }
    let keep: Vec<usize> = (0..n).filter(|&i| opts.mask.is_none_or(|m| m[i])).collect();
    if keep.is_empty() {
        return Err(Error::invalid("every entry is masked"));
    }
    let count = keep.len();
    let (mut abs, mut sq) = (0.0, 0.0);
    for &i in &keep {
        let e = mean[i] - truth[i];
        abs += e.abs();
        sq += e * e;
    }
    let mut out = SummaryMetrics {
        mae: abs / count as f64,
        rmse: (sq / count as f64).sqrt(),
        mis: None,
        interval_width: None,
        coverage: None,
        crossing_rate: None,
        count,
    };
    if let Some(b) = bounds {
        let z: Vec<f64> = keep.iter().map(|&i| truth[i]).collect();
        let l: Vec<f64> = keep.iter().map(|&i| b.lower[i]).collect();
        let raw_u: Vec<f64> = keep.iter().map(|&i| b.upper[i]).collect();
        let crossed = l.iter().zip(&raw_u).filter(|(l, u)| u < l).count();
        let u: Vec<f64> = if opts.clamp_crossing {
            raw_u.iter().zip(&l).map(|(u, l)| u.max(*l)).collect()
        } else {
            raw_u
        };
        let inside = (0..count).filter(|&k| l[k] <= z[k] && z[k] <= u[k]).count();
        out.mis = Some(mis_metric(&l, &u, &z, b.rho)?);
        out.interval_width = Some(u.iter().zip(&l).map(|(u, l)| u - l).sum::<f64>() / count as f64);
        out.coverage = Some(inside as f64 / count as f64);
        out.crossing_rate = Some(crossed as f64 / count as f64);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_forecast() {
        let t = [1.0, -2.0, 3.5];
        let b = Bounds { lower: &t, upper: &t, rho: 0.05 };
        let m = summary_metrics(&t, Some(b), &t, MetricOptions::default()).unwrap();
        assert_eq!((m.mae, m.rmse, m.mis, m.interval_width, m.coverage), (0.0, 0.0, Some(0.0), Some(0.0), Some(1.0)));
    }

    #[test]
    fn constant_bias() {
        let t = [1.0, 2.0, 3.0, 4.0];
        let f: Vec<f64> = t.iter().map(|v| v - 0.5).collect();
        let m = summary_metrics(&f, None, &t, MetricOptions::default()).unwrap();
        assert!((m.mae - 0.5).abs() < 1e-15 && (m.rmse - 0.5).abs() < 1e-15);
        assert!(m.mis.is_none() && m.coverage.is_none());
    }

    #[test]
    fn mis_field_matches_metric() {
        let (l, u, z) = ([-1.0; 3], [1.0; 3], [0.0, 2.0, -3.0]);
        let b = Bounds { lower: &l, upper: &u, rho: 0.2 };
        let m = summary_metrics(&[0.0; 3], Some(b), &z, MetricOptions::default()).unwrap();
        assert_eq!(m.mis.unwrap(), mis_metric(&l, &u, &z, 0.2).unwrap());
        assert!((m.coverage.unwrap() - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn crossing_reported_and_clamped() {
        let (l, u, z) = ([1.0, 0.0], [0.0, 1.0], [0.5, 0.5]);
        let b = Bounds { lower: &l, upper: &u, rho: 0.1 };
        let raw = summary_metrics(&z, Some(b), &z, MetricOptions::default()).unwrap();
        assert_eq!(raw.crossing_rate, Some(0.5));
        let opts = MetricOptions { clamp_crossing: true, ..Default::default() };
        let clamped = summary_metrics(&z, Some(b), &z, opts).unwrap();
        assert_eq!(clamped.crossing_rate, Some(0.5));
        assert_eq!(clamped.interval_width, Some(0.5));
    }

    #[test]
    fn mask_and_all_masked() {
        let opts = MetricOptions { mask: Some(&[true, false]), ..Default::default() };
        let m = summary_metrics(&[0.0, 0.0], None, &[1.0, 99.0], opts).unwrap();
        assert_eq!((m.mae, m.count), (1.0, 1));
        let opts = MetricOptions { mask: Some(&[false, false]), ..Default::default() };
        assert!(summary_metrics(&[0.0, 0.0], None, &[1.0, 99.0], opts).is_err());
    }
}
