use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use swapreg::harness::{
    fit_rate, make_adversary, run_experiment, sweep_point, ExperimentConfig, RegretReport,
    Scenario,
};

#[derive(Parser)]
#[command(name = "swapreg", about = "Swap-regret minimization experiments", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct CommonArgs {
    /// Horizon (number of rounds)
    #[arg(long = "T", default_value_t = 1000)]
    horizon: u64,
    /// Discretization parameter override
    #[arg(long)]
    eps: Option<f64>,
    /// Ambient dimension
    #[arg(long, default_value_t = 1)]
    d: usize,
    /// Adversary spec, e.g. bernoulli:0.5, periodic:01, adaptive-opposite
    #[arg(long, default_value = "bernoulli:0.5")]
    adversary: String,
    /// RNG seed
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output stem: writes <out>.csv and <out>.json
    #[arg(long)]
    out: Option<PathBuf>,
    /// JSON experiment config; its fields override the flags above
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Continuous-grid l2 calibration run
    Calibrate(CommonArgs),
    /// Discretized calibration on the eps-lattice
    DiscCalibrate(CommonArgs),
    /// Structured-game self-play
    Game(CommonArgs),
    /// Strongly-convex OGD envelope check
    OcoCheck(CommonArgs),
    /// Swap-regret decomposition audit
    SwapCheck(CommonArgs),
    /// Discretized-calibration sweep over (T, eps), three algorithms per point
    Sweep {
        #[command(flatten)]
        common: CommonArgs,
        /// Comma-separated horizons; defaults to --T
        #[arg(long)]
        horizons: Option<String>,
        /// Comma-separated epsilons; defaults to T^{-1/3},T^{-1/4},T^{-1/5}
        #[arg(long)]
        epsilons: Option<String>,
    },
    /// Summarize a previously written JSON report
    Report {
        /// Path to a report written by another subcommand
        path: PathBuf,
    },
}

fn build_config(scenario: Scenario, args: &CommonArgs) -> Result<ExperimentConfig, swapreg::Error> {
    make_adversary(&args.adversary)?;
    let mut cfg = ExperimentConfig {
        scenario,
        horizon: args.horizon,
        dimension: args.d,
        loss_class: None,
        epsilon: args.eps,
        adversary: args.adversary.clone(),
        seed: args.seed,
        out_csv: args.out.as_ref().map(|p| p.with_extension("csv")),
        out_json: args.out.as_ref().map(|p| p.with_extension("json")),
    };
    if let Some(path) = &args.config {
        let text = std::fs::read_to_string(path)?;
        cfg = serde_json::from_str(&text)?;
    }
    if cfg.horizon == 0 {
        return Err(swapreg::Error::Configuration("horizon must be >= 1".into()));
    }
    Ok(cfg)
}

fn print_report(report: &RegretReport) {
    println!(
        "scenario: {}",
        serde_json::to_string(&report.config.scenario).unwrap_or_default()
    );
    println!("horizon: {}", report.config.horizon);
    println!("final regret: {:.6e}", report.final_regret);
    println!("envelope ok: {}", report.envelope_ok);
    if report.series.len() >= 3 {
        let pts: Vec<(f64, f64)> = report
            .series
            .iter()
            .map(|r| (r.t as f64, r.cum_regret))
            .collect();
        if let Ok(fit) = fit_rate(&pts) {
            println!("fitted log-log slope: {:.4}", fit.slope);
        }
    }
    for (k, v) in &report.extras {
        println!("{k}: {v}");
    }
    println!("wall clock: {} ms", report.wall_clock_ms);
}

fn parse_list(s: &str) -> Result<Vec<f64>, swapreg::Error> {
    s.split(',')
        .map(|tok| {
            tok.trim()
                .parse::<f64>()
                .map_err(|e| swapreg::Error::Configuration(format!("bad number {tok:?}: {e}")))
        })
        .collect()
}

fn run_sweep(
    common: &CommonArgs,
    horizons: Option<&str>,
    epsilons: Option<&str>,
) -> Result<(), swapreg::Error> {
    let horizons: Vec<u64> = match horizons {
        Some(s) => parse_list(s)?.into_iter().map(|v| v as u64).collect(),
        None => vec![common.horizon],
    };
    let mut wtr: Box<dyn std::io::Write> = match &common.out {
        Some(p) => Box::new(std::fs::File::create(p.with_extension("csv"))?),
        None => Box::new(std::io::stdout()),
    };
    writeln!(wtr, "T,eps,new_algorithm,rounded_baseline,mwu_baseline")?;
    for &horizon in &horizons {
        let t = horizon as f64;
        let epsilons: Vec<f64> = match epsilons {
            Some(s) => parse_list(s)?,
            None => [3.0, 4.0, 5.0]
                .iter()
                .map(|&q| 1.0 / t.powf(1.0 / q).round().max(1.0))
                .collect(),
        };
        for &eps in &epsilons {
            let row = sweep_point(horizon, eps, &common.adversary, common.seed)?;
            writeln!(
                wtr,
                "{},{},{},{},{}",
                row.horizon, row.epsilon, row.new_algorithm, row.rounded_baseline, row.mwu_baseline
            )?;
        }
    }
    Ok(())
}

fn run(cli: Cli) -> Result<(), swapreg::Error> {
    match cli.command {
        Command::Calibrate(args) => {
            let cfg = build_config(Scenario::Calibration, &args)?;
            print_report(&run_experiment(&cfg)?);
        }
        Command::DiscCalibrate(args) => {
            let cfg = build_config(Scenario::DiscretizedCalibration, &args)?;
            print_report(&run_experiment(&cfg)?);
        }
        Command::Game(args) => {
            let cfg = build_config(Scenario::StructuredGame, &args)?;
            print_report(&run_experiment(&cfg)?);
        }
        Command::OcoCheck(args) => {
            let cfg = build_config(Scenario::OcoEnvelope, &args)?;
            print_report(&run_experiment(&cfg)?);
        }
        Command::SwapCheck(args) => {
            let cfg = build_config(Scenario::SwapDecomposition, &args)?;
            print_report(&run_experiment(&cfg)?);
        }
        Command::Sweep { common, horizons, epsilons } => {
            run_sweep(&common, horizons.as_deref(), epsilons.as_deref())?;
        }
        Command::Report { path } => {
            let report: RegretReport = serde_json::from_str(&std::fs::read_to_string(&path)?)?;
            print_report(&report);
        }
    }
    Ok(())
}

fn main() {
    if let Err(e) = run(Cli::parse()) {
        eprintln!("error: {e}");
        std::process::exit(1);
    }
}
