use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use stuq::harness::oracles::{
    all_oracles, crps_oracle, gradient_oracle, primitive_gradient_oracle, prop2_oracle, OracleCheck,
};
use stuq::harness::{
    emit_plot_data, run_experiment, sample_complexity_sweep, write_atomic, BandSelection, ExperimentConfig, PlotKind,
    SpatialDomain,
};
use stuq::uqmethods::{train_point, MethodContext, MethodTag};
use stuq::{Error, Result};

#[derive(Parser)]
#[command(name = "stuq", version, about = "Uncertainty quantification for spatiotemporal forecasters")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct Common {
    /// Experiment file (TOML).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// point, bootstrap, quantile, sq, mis, mc-dropout or sg-mcmc.
    #[arg(long)]
    method: Option<MethodTag>,
    /// Miscoverage level of the interval.
    #[arg(long)]
    rho: Option<f64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the configured synthetic dataset as CSV.
    Synth(Common),
    /// Train a point forecaster and save its checkpoint.
    Train(Common),
    /// Run one method end to end and write its results.
    Run(Common),
    /// MIS against the number of sampled forecasts.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Ascending sample counts, e.g. `5,25`.
        #[arg(long, value_delimiter = ',', default_value = "5,25")]
        samples: Vec<usize>,
        /// Method seeds; defaults to ten seeds from `--seed`.
        #[arg(long, value_delimiter = ',')]
        seeds: Vec<u64>,
    },
    /// Emit plot-ready CSV from result directories.
    PlotData {
        /// forecast-band, sweep or coverage-vs-width.
        #[arg(long)]
        kind: PlotKind,
        #[arg(long, num_args = 1.., required = true)]
        runs: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        window: usize,
        #[arg(long, default_value_t = 0)]
        feature: usize,
    },
    /// Run the built-in oracle suites.
    Oracle {
        /// all, prop2, crps or gradient.
        #[arg(long, default_value = "all")]
        suite: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn load_config(c: &Common) -> Result<ExperimentConfig> {
    let mut cfg = match &c.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(s) = c.seed {
        cfg.seed = s;
    }
    if let Some(m) = c.method {
        cfg.method.tag = m;
    }
    if let Some(r) = c.rho {
        cfg.rho = r;
    }
    if let Some(o) = &c.out {
        cfg.output_dir = Some(o.clone());
    }
    cfg.validate()?;
    Ok(cfg)
}

fn out_dir(cfg: &ExperimentConfig) -> Result<&Path> {
    cfg.output_dir.as_deref().ok_or_else(|| Error::Config("no output directory: pass --out or set output_dir".into()))
}

fn synth(c: &Common) -> Result<()> {
    let cfg = load_config(c)?;
    let dir = out_dir(&cfg)?;
    let data = cfg.dataset()?;
    std::fs::create_dir_all(dir)?;
    let mut buf = Vec::new();
    data.write_csv(&mut buf)?;
    write_atomic(&dir.join("data.csv"), &buf)?;
    if let SpatialDomain::Graph(g) = &data.domain {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&data.node_ids)?;
        let a = g.adjacency();
        for i in 0..a.rows() {
            w.write_record((0..a.cols()).map(|j| a.get2(i, j).to_string()))?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
        write_atomic(&dir.join("adjacency.csv"), &bytes)?;
    }
    if let Some(t) = &data.truth {
        write_atomic(&dir.join("truth.json"), &serde_json::to_vec_pretty(t)?)?;
    }
    println!("wrote {} steps x {} nodes to {}", data.steps(), data.nodes(), dir.display());
    Ok(())
}

fn train(c: &Common) -> Result<()> {
    let cfg = load_config(c)?;
    let data = cfg.dataset()?;
    let model = cfg.model_config(data.features());
    let layout = data.layout(&cfg.supports)?;
    let ctx = MethodContext {
        model: &model,
        layout: &layout,
        data: &data,
        train: &cfg.train,
        rho: cfg.rho,
        test: &data.splits.test,
        seed: cfg.seed,
    };
    let trained = train_point(&ctx)?;
    let r = &trained.report;
    println!(
        "trained {} epochs, best validation MAE {:.6} at epoch {}",
        r.epochs_run, r.best_validation_loss, r.best_epoch
    );
    if let Some(dir) = &cfg.output_dir {
        std::fs::create_dir_all(dir)?;
        write_atomic(&dir.join("checkpoint.json"), &serde_json::to_vec(&trained.model.checkpoint())?)?;
        write_atomic(&dir.join("train_report.json"), &serde_json::to_vec_pretty(r)?)?;
    }
    Ok(())
}

fn run(c: &Common) -> Result<()> {
    let cfg = load_config(c)?;
    let out = run_experiment(&cfg)?;
    let r = &out.record;
    let m = &r.overall;
    let opt = |v: Option<f64>| v.map_or("-".to_string(), |x| format!("{x:.4}"));
    println!(
        "{} ({}): mae {:.4} rmse {:.4} mis {} width {} coverage {} in {:.1}s",
        r.name,
        r.method,
        m.mae,
        m.rmse,
        opt(m.mis),
        opt(m.interval_width),
        opt(m.coverage),
        r.wall_clock_seconds
    );
    if let Some(dir) = &out.written_to {
        println!("results in {}", dir.display());
    }
    Ok(())
}

fn sweep(c: &Common, samples: &[usize], seeds: &[u64]) -> Result<()> {
    let cfg = load_config(c)?;
    let seeds: Vec<u64> = if seeds.is_empty() { (cfg.seed..cfg.seed + 10).collect() } else { seeds.to_vec() };
    let table = sample_complexity_sweep(&cfg, samples, &seeds)?;
    print!("{}", table.to_csv()?);
    if let Some(dir) = &cfg.output_dir {
        table.save(dir)?;
    }
    Ok(())
}

fn oracle(suite: &str, seed: u64) -> Result<bool> {
    let checks: Vec<OracleCheck> = match suite {
        "all" => all_oracles(seed)?,
        "prop2" => vec![prop2_oracle(200, seed)?],
        "crps" => vec![crps_oracle(100, seed)?],
        "gradient" => {
            let mut checks = primitive_gradient_oracle(seed)?;
            checks.extend(gradient_oracle(seed)?);
            checks
        }
        other => return Err(Error::Config(format!("unknown oracle suite `{other}`"))),
    };
    for c in &checks {
        println!("{} {}: {:.3e} (limit {:.0e})", if c.passed { "PASS" } else { "FAIL" }, c.name, c.value, c.threshold);
    }
    Ok(checks.iter().all(|c| c.passed))
}

fn dispatch(cmd: Command) -> Result<bool> {
    match cmd {
        Command::Synth(c) => synth(&c)?,
        Command::Train(c) => train(&c)?,
        Command::Run(c) => run(&c)?,
        Command::Sweep { common, samples, seeds } => sweep(&common, &samples, &seeds)?,
        Command::PlotData { kind, runs, out, window, feature } => {
            let path = emit_plot_data(&runs, kind, BandSelection { window, feature }, &out)?;
            println!("wrote {}", path.display());
        }
        Command::Oracle { suite, seed } => return oracle(&suite, seed),
    }
    Ok(true)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match dispatch(cli.command) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_divergence() { 2 } else { 1 })
        }
    }
}
