use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use ws_core::diagnostics::{fit_decay, DecaySeries};
use ws_core::scenario::{load_scenario, run_pipeline, Stage};

/// Thread count for the numerical kernels; defaults to all cores.
const THREADS_VAR: &str = "WS_SCATTER_THREADS";

#[derive(Parser)]
#[command(name = "ws-scatter", version, about = "Long-range scattering experiments for the 3D Wave-Schrodinger system")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run pipeline stages on a scenario and print the verdict table.
    Run {
        scenario: PathBuf,
        /// Comma-separated subset of profiles, remainders, scatter, t0study, checks.
        #[arg(long, value_delimiter = ',', value_parser = parse_stage)]
        stages: Option<Vec<Stage>>,
        /// Overrides the scenario seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Overrides the scenario output directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Parse and validate a scenario, listing every violation.
    Validate {
        scenario: PathBuf,
        /// Print the scenario with all defaults filled in.
        #[arg(long)]
        resolved: bool,
    },
    /// Fit a power law `c t^p` to one column of a CSV artifact.
    Fit {
        csv: PathBuf,
        #[arg(long)]
        column: String,
        /// Name of the time column.
        #[arg(long, default_value = "t")]
        time: String,
        /// Restrict the fit to times at or above this value.
        #[arg(long)]
        from: Option<f64>,
        /// Restrict the fit to times at or below this value.
        #[arg(long)]
        to: Option<f64>,
    },
}

fn parse_stage(s: &str) -> std::result::Result<Stage, String> {
    s.parse().map_err(|e: ws_core::Error| e.to_string())
}

fn configure_threads() -> Result<()> {
    let Ok(value) = std::env::var(THREADS_VAR) else {
        return Ok(());
    };
    let n: usize = value
        .parse()
        .with_context(|| format!("{THREADS_VAR} must be a positive integer, got {value:?}"))?;
    rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    Ok(())
}

fn read_column(path: &Path, time: &str, column: &str) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut reader = csv::Reader::from_path(path).with_context(|| format!("cannot open {}", path.display()))?;
    let header = reader.headers()?.clone();
    let find = |name: &str| {
        header
            .iter()
            .position(|h| h == name)
            .with_context(|| format!("no column {name:?} in {}; columns are {:?}", path.display(), header.iter().collect::<Vec<_>>()))
    };
    let (ti, ci) = (find(time)?, find(column)?);
    let (mut ts, mut vs) = (Vec::new(), Vec::new());
    for (line, record) in reader.records().enumerate() {
        let record = record?;
        let parse = |i: usize| -> Result<f64> {
            record[i]
                .parse()
                .with_context(|| format!("row {}: {:?} is not a number", line + 2, &record[i]))
        };
        ts.push(parse(ti)?);
        vs.push(parse(ci)?);
    }
    Ok((ts, vs))
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Run { scenario, stages, seed, out } => {
            let mut sc = load_scenario(&scenario)?;
            if let Some(seed) = seed {
                sc.seed = seed;
            }
            if let Some(out) = out {
                sc.outputs.directory = out;
            }
            let stages = stages.unwrap_or_else(|| Stage::ALL.to_vec());
            let report = run_pipeline(&sc, &stages)?;
            print!("{}", report.render());
            Ok(ExitCode::from(report.exit_code() as u8))
        }
        Command::Validate { scenario, resolved } => {
            let sc = load_scenario(&scenario)?;
            if resolved {
                print!("{}", sc.resolved().to_toml());
            } else {
                println!("{}: scenario {:?} is valid", scenario.display(), sc.name);
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Fit { csv, column, time, from, to } => {
            let (ts, vs) = read_column(&csv, &time, &column)?;
            // Trajectories are stored in integration order, which may run backward.
            let mut pairs: Vec<(f64, f64)> = ts.into_iter().zip(vs).collect();
            pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
            pairs.dedup_by(|a, b| a.0 == b.0);
            let (ts, vs): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
            if ts.len() < 2 {
                bail!("need at least two rows to fit");
            }
            let window = match (from, to) {
                (None, None) => None,
                (lo, hi) => Some((lo.unwrap_or(ts[0]), hi.unwrap_or(ts[ts.len() - 1]))),
            };
            let fit = fit_decay(&DecaySeries::new(column, ts, vs)?, window)?;
            println!("{}", serde_json::to_string_pretty(&fit)?);
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let result = configure_threads().and_then(|()| run(cli));
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
