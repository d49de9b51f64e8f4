use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};

use paradin::harness::config::parse_pairs;
use paradin::harness::verify::{run_suite, Suite};
use paradin::harness::{
    predict_speedup, run_experiment, write_report, ExperimentConfig, RunRow, SpeedupModel,
    SpeedupVariant,
};
use paradin::solvers::Method;

#[derive(Parser)]
#[command(name = "paradin", version, about = "Parallel-in-time BDF1 solvers for 2-D heat and Burgers problems")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the methods and grids of a config file and write CSV reports.
    Solve {
        #[arg(long)]
        config: PathBuf,
        /// Comma-separated method list, overrides the file.
        #[arg(long)]
        method: Option<String>,
        #[arg(long)]
        mode: Option<String>,
        #[arg(long)]
        workers: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Extra `key=value` overrides.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<String>,
    },
    /// Run a golden check suite; exits non-zero on failure.
    Verify {
        #[arg(long, value_parser = ["table1", "table4", "equivalence", "proposition1"])]
        suite: String,
        /// Number of refinement grids for the table suites.
        #[arg(long)]
        grids: Option<usize>,
    },
}

fn model_speedup(row: &RunRow) -> Option<f64> {
    let mut m = SpeedupModel::new(row.label.nt, row.cf, row.parareal_iters);
    let variant = match row.method {
        Method::ParaDIn => SpeedupVariant::ParaDIn,
        Method::ParaDInParareal => match row.cs {
            Some(cs) if cs > 1 => {
                m.cs = cs as f64;
                SpeedupVariant::CombinedCoarsened
            }
            _ => SpeedupVariant::Combined,
        },
        _ => return None,
    };
    Some(predict_speedup(&m, variant))
}

fn solve(
    config: PathBuf,
    method: Option<String>,
    mode: Option<String>,
    workers: Option<usize>,
    out: Option<PathBuf>,
    set: Vec<String>,
) -> Result<ExitCode> {
    let text = std::fs::read_to_string(&config)
        .with_context(|| format!("reading {}", config.display()))?;
    let mut pairs = parse_pairs(&text)?;
    for kv in &set {
        let (k, v) = kv
            .split_once('=')
            .with_context(|| format!("--set expects key=value, got '{kv}'"))?;
        pairs.insert(k.trim().to_ascii_lowercase(), v.trim().to_string());
    }
    let flags = [
        ("method", method),
        ("mode", mode),
        ("workers", workers.map(|w| w.to_string())),
        ("out_dir", out.map(|o| o.display().to_string())),
    ];
    for (k, v) in flags {
        if let Some(v) = v {
            pairs.insert(k.to_string(), v);
        }
    }
    let cfg = ExperimentConfig::from_pairs(&pairs)?;
    let report = run_experiment(&cfg);
    let files = write_report(&cfg, &report, &cfg.out_dir)
        .with_context(|| format!("writing to {}", cfg.out_dir.display()))?;

    println!(
        "{:<12} {:<18} {:>4} {:>11} {:>11} {:>11} {:>6} {:>6} {:>6} {:>10} {:>8}",
        "grid", "method", "M", "L1", "L2", "Linf", "newton", "pr", "jac", "measured_s", "model_S"
    );
    for r in &report.rows {
        let model = model_speedup(r).map_or("-".to_string(), |s| format!("{s:.1}"));
        println!(
            "{:<12} {:<18} {:>4} {:>11.3e} {:>11.3e} {:>11.3e} {:>6} {:>6} {:>6} {:>10.3} {:>8}",
            r.label.to_string(),
            r.method.name(),
            r.blocks,
            r.norms.l1,
            r.norms.l2,
            r.norms.linf,
            r.newton_iters,
            r.parareal_iters,
            r.jacobi_iters,
            r.wall_s,
            model
        );
    }
    for r in &report.rates {
        println!(
            "rate {} {} -> {}: L1 {:.2} L2 {:.2} Linf {:.2}",
            r.method.name(),
            r.coarse,
            r.fine,
            r.rates.l1,
            r.rates.l2,
            r.rates.linf
        );
    }
    for r in report.failures() {
        eprintln!("failed: {} {}: {}", r.label, r.method.name(), r.error.as_deref().unwrap_or(""));
    }
    for f in files {
        println!("wrote {}", f.display());
    }
    Ok(ExitCode::SUCCESS)
}

fn verify(suite: &str, grids: Option<usize>) -> Result<ExitCode> {
    let suite: Suite = suite.parse().map_err(anyhow::Error::msg)?;
    let report = run_suite(suite, grids)?;
    print!("{report}");
    Ok(if report.passed() {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    })
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Solve {
            config,
            method,
            mode,
            workers,
            out,
            set,
        } => solve(config, method, mode, workers, out, set),
        Command::Verify { suite, grids } => verify(&suite, grids),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
