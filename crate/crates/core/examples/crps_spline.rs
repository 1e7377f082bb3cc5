//! Monotone spline quantile functions and their closed-form CRPS.

use stuq::scoring::oracle::crps_quadrature;
use stuq::scoring::{crps_pwl, SplineQuantile, SplineQuantileParams};

fn main() -> stuq::Result<()> {
    // 11 unconstrained numbers: intercept, five slopes, five knot gaps
    let params = SplineQuantileParams::new(vec![0.3, 1.2, -0.5, 0.1, 0.8, -1.0, 0.2, 0.0, -0.3, 0.4, 0.1])?;
    let q = params.transform();
    for alpha in [0.025, 0.25, 0.5, 0.75, 0.975] {
        println!("Q({alpha}) = {:.4}", q.quantile(alpha));
    }
    for y in [-1.0, 0.5, 2.0] {
        let exact = crps_pwl(&params, y);
        let numeric = crps_quadrature(&|a| q.quantile(a), y);
        println!("CRPS at y = {y}: closed form {exact:.10}, quadrature {numeric:.10}");
    }

    let uniform = SplineQuantile::new(0.0, vec![1.0], vec![0.0])?;
    println!("uniform(0, 1) at y = 0.5: {:.12} (1/12 = {:.12})", uniform.crps(0.5), 1.0 / 12.0);
    Ok(())
}
