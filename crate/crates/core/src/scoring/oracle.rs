//! Independent numerical references used to check the closed forms.

use super::losses::pinball_loss;

/// Levels of bisection done before the error estimate is trusted. A
/// piecewise-quadratic integrand can fool the estimate on coarse panels
/// when a kink falls between sample points.
const MIN_DEPTH: u32 = 10;
const MAX_DEPTH: u32 = 48;

/// Adaptive Simpson quadrature of `f` over `[a, b]` to absolute tolerance
/// `tol`.
pub fn adaptive_simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    let (fa, fb) = (f(a), f(b));
    let m = 0.5 * (a + b);
    let fm = f(m);
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    refine(f, a, b, fa, fm, fb, whole, tol, MAX_DEPTH)
}

#[allow(clippy::too_many_arguments)]
fn refine(f: &dyn Fn(f64) -> f64, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: u32) -> f64 {
    let m = 0.5 * (a + b);
    let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
    let (flm, frm) = (f(lm), f(rm));
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if depth == 0 || (MAX_DEPTH - depth >= MIN_DEPTH && delta.abs() <= 15.0 * tol) {
        return left + right + delta / 15.0;
    }
    refine(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1) + refine(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
}

/// `integral_0^1 2 pinball(y, Q(a), a) da` by quadrature.
pub fn crps_quadrature(quantile: &dyn Fn(f64) -> f64, y: f64) -> f64 {
    let integrand = |a: f64| 2.0 * pinball_loss(y, quantile(a), a);
    adaptive_simpson(&integrand, 0.0, 1.0, 1e-11)
}
