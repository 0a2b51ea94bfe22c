use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};

use mckean::commands::{catalog_text, wasserstein_files, TransportMethod, DEFAULT_PROJECTIONS};
use mckean::experiment::{error_exit_code, run_experiment, RunOptions, OUT_DIR_ENV};
use mckean::selftest::run_selftest;
use mckean::Error;

const RUN_AFTER_HELP: &str = "\
Artifacts (written to --out, else the config's `output`, else $MCKEAN_OUT_DIR/<config stem>):
  points.csv    model,functional,kind,N,n,h,T,time,estimate,std_error,R,floor,usable
                (one row per design point, then companion estimators; `#` lines hold
                the version and the resolved config as JSON)
  plotdata.csv  kind,axis,x,log_x,estimate,log_estimate,std_error,fit_log_estimate
  points.json   the same points with the resolved config
  ratefit.json  verdict, window and fit: slope, intercept, half_width, noise_ratio, clean
  summary.txt   human-readable verdict (the only artifact with a timestamp)
  with dump_replication set: tableau.bin, trajectory.csv
                (replication,time,particle,coordinate,value) and trajectory.bin

Exit codes: 0 PASS or no window, 1 FAIL, 2 invalid config, 3 integration error,
4 NOISY (noise budget exhausted or noisy fit), 5 size cap exceeded.";

#[derive(Parser)]
#[command(name = "mckean", version, about = "McKean-Vlasov particle simulation and convergence-rate experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a TOML experiment config and write its artifacts.
    #[command(after_help = RUN_AFTER_HELP)]
    Run {
        config: PathBuf,
        /// Override the config's seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Worker threads (default: hardware parallelism). Results do not depend on it.
        #[arg(long)]
        workers: Option<usize>,
        /// Output directory.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Default output root when neither --out nor the config sets one.
        #[arg(long = "out-root", env = OUT_DIR_ENV, hide_env_values = true)]
        out_root: Option<PathBuf>,
        /// Print a progress line per replication batch.
        #[arg(long)]
        progress: bool,
    },
    /// Wasserstein distance between two CSV point clouds (one point per row, no header).
    Wasserstein {
        a: PathBuf,
        b: PathBuf,
        #[arg(long, default_value_t = 2)]
        p: u32,
        /// exact, 1d or sliced.
        #[arg(long, default_value = "exact")]
        method: String,
        #[arg(long, default_value_t = DEFAULT_PROJECTIONS)]
        projections: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Print a JSON report instead of plain text.
        #[arg(long)]
        json: bool,
    },
    /// List models, functionals and estimators.
    Catalog,
    /// Run the built-in oracle checks.
    Selftest,
}

fn fail(e: &Error) -> ExitCode {
    eprintln!("error: {e}");
    ExitCode::from(error_exit_code(e) as u8)
}

fn main() -> anyhow::Result<ExitCode> {
    match Cli::parse().command {
        Command::Run {
            config,
            seed,
            workers,
            out,
            out_root,
            progress,
        } => {
            let options = RunOptions {
                seed,
                workers,
                output: out,
                output_root: out_root,
                progress,
            };
            match run_experiment(&config, &options) {
                Ok(summary) => {
                    let report = &summary.report;
                    println!("{:?}: {}", report.verdict, report.reason);
                    println!("artifacts in {}", summary.output.display());
                    Ok(ExitCode::from(report.verdict.exit_code() as u8))
                }
                Err(e) => Ok(fail(&e)),
            }
        }
        Command::Wasserstein {
            a,
            b,
            p,
            method,
            projections,
            seed,
            json,
        } => {
            let Some(m) = TransportMethod::parse(&method) else {
                eprintln!("error: unknown method {method:?}; expected exact, 1d or sliced");
                return Ok(ExitCode::from(2));
            };
            match wasserstein_files(&a, &b, p, m, projections, seed) {
                Ok(r) if json => {
                    println!("{}", serde_json::to_string(&r).context("serializing report")?);
                    Ok(ExitCode::SUCCESS)
                }
                Ok(r) => {
                    let extra = r.projections.map_or(String::new(), |k| format!(", {k} projections, approximate"));
                    println!("{}", r.distance);
                    println!("W{} by {} (d = {}, sizes {} and {}{extra})", r.p, r.method, r.dim, r.size_a, r.size_b);
                    Ok(ExitCode::SUCCESS)
                }
                Err(e) => Ok(fail(&e)),
            }
        }
        Command::Catalog => {
            print!("{}", catalog_text());
            Ok(ExitCode::SUCCESS)
        }
        Command::Selftest => {
            let checks = run_selftest();
            for c in &checks {
                println!("{} {}: {}", if c.passed { "ok  " } else { "FAIL" }, c.name, c.detail);
            }
            Ok(if checks.iter().all(|c| c.passed) { ExitCode::SUCCESS } else { ExitCode::FAILURE })
        }
    }
}
