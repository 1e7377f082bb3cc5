//! The order-statistic interval of a sample batch is the interval that
//! minimizes its mean interval score. Compares it to exhaustive search.

use stuq::scoring::{brute_force_mis_minimizer, empirical_interval, mis_metric, mis_of_interval};

fn main() -> stuq::Result<()> {
    let samples = [2.3, -0.4, 1.1, 0.9, 5.2, -1.7, 0.2, 1.8, 0.5, 3.1];
    for rho in [0.05, 0.2, 0.5] {
        let fast = empirical_interval(&samples, rho)?;
        let slow = brute_force_mis_minimizer(&samples, rho)?;
        println!(
            "rho {rho}: order statistics [{}, {}], brute force [{}, {}], MIS {:.4}",
            fast.lower,
            fast.upper,
            slow.lower,
            slow.upper,
            mis_of_interval(fast.lower, fast.upper, &samples, rho)
        );
    }

    // width 2 plus (2 / rho) times each miss: (2 + 12 + 22) / 3
    let mis = mis_metric(&[-1.0; 3], &[1.0; 3], &[0.0, 2.0, -3.0], 0.2)?;
    println!("MIS of [-1, 1] on {{0, 2, -3}} at rho 0.2: {mis}");
    Ok(())
}
