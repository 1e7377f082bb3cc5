//! The thermostat sampler on `U(theta) = lambda |theta|^2 / 2`, whose
//! exact posterior is `N(0, 1 / lambda)` in every coordinate.

use stuq::uqmethods::{sample_gaussian_target, SamplerConfig};

fn main() -> stuq::Result<()> {
    let lambda = 2.0;
    let cfg = SamplerConfig {
        step_size: 0.05,
        burn_in: 2000,
        thinning: 10,
        draws_per_chain: 200,
        chains: 25,
        init_std: 1.0,
        ..Default::default()
    };
    let chains = sample_gaussian_target(10, lambda, &cfg, 7)?;
    let all: Vec<f64> = chains.iter().flat_map(|c| c.draws.iter().flatten().copied()).collect();
    let n = all.len() as f64;
    let mean = all.iter().sum::<f64>() / n;
    let var = all.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let xi = chains.iter().map(|c| c.max_abs_xi).fold(0.0, f64::max);
    println!("{} draws: mean {mean:.4}, variance {var:.4} (exact {})", all.len(), 1.0 / lambda);
    println!("largest |xi| seen: {xi:.3}");
    Ok(())
}
