//! Loads an experiment preset, shrinks it to run in seconds, and writes
//! `results.json` plus the forecast artifact to a temporary directory.
//!
//! `cargo run --example run_preset -- configs/quantile.toml`

use stuq::harness::{run_experiment, ExperimentConfig};

fn main() -> stuq::Result<()> {
    let path = std::env::args().nth(1).unwrap_or_else(|| concat!(env!("CARGO_MANIFEST_DIR"), "/../../configs/quantile.toml").into());
    let mut cfg = ExperimentConfig::load(&path)?;
    cfg.train.max_epochs = 3;
    cfg.model.hidden_units = 8;
    cfg.eval.max_test_windows = Some(50);
    cfg.output_dir = Some(std::env::temp_dir().join(format!("stuq-{}", cfg.name)));

    let out = run_experiment(&cfg)?;
    let r = &out.record;
    println!("{} ({}) on {} windows in {:.1}s", r.name, r.method, r.dataset.test_windows, r.wall_clock_seconds);
    for h in &r.per_horizon {
        let m = &h.metrics;
        println!(
            "  step {}: MAE {:.4} RMSE {:.4} MIS {:?} coverage {:?}",
            h.step, m.mae, m.rmse, m.mis, m.coverage
        );
    }
    if let Some(dir) = out.written_to {
        println!("wrote {}", dir.display());
    }
    Ok(())
}
