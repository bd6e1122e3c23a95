use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use vsam::data::{generate_dataset, DatasetKind};
use vsam::diagnostics::psf_bound_sweep;
use vsam::harness::{compare_report, run_experiment, verify, Check, ExperimentConfig};
use vsam::metrics::fmt_f64;
use vsam::selfcheck::run_selfcheck;

/// Sharpness-aware training experiments with adaptive PSF sampling.
#[derive(Parser)]
#[command(name = "vsam", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every seed of an experiment config.
    Run { config: PathBuf },
    /// Compare completed experiments (mean ± population σ over seeds).
    Report {
        #[arg(required = true, num_args = 1..)]
        dirs: Vec<PathBuf>,
        /// Also write the table as CSV.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Recompute accounting and summaries from the metrics streams.
    Verify { dir: PathBuf },
    /// Write a synthetic dataset file.
    GenData {
        kind: DatasetKind,
        #[arg(long, default_value_t = 2000)]
        n: usize,
        #[arg(long, default_value_t = 0.1)]
        noise: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Sweep random positive definite quadratics through the PSF norm bound.
    CheckBounds {
        #[arg(long, default_value_t = 1000)]
        cases: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 2)]
        min_dim: usize,
        #[arg(long, default_value_t = 8)]
        max_dim: usize,
        #[arg(long, default_value_t = 0.1)]
        rho: f64,
        /// Write every case as CSV.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Run the built-in invariant suite.
    Selfcheck {
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn print_checks(checks: &[Check]) -> bool {
    for c in checks {
        let mark = if c.passed { "ok  " } else { "FAIL" };
        if c.detail.is_empty() {
            println!("{mark} {}", c.name);
        } else {
            println!("{mark} {} ({})", c.name, c.detail);
        }
    }
    checks.iter().all(|c| c.passed)
}

fn write_file(path: &PathBuf, text: &str) -> vsam::Result<()> {
    std::fs::write(path, text).map_err(|e| vsam::Error::io(path, e))
}

fn execute(cmd: Command) -> vsam::Result<bool> {
    match cmd {
        Command::Run { config } => {
            let cfg = ExperimentConfig::load(&config)?;
            let outcome = run_experiment(&cfg)?;
            for s in &outcome.seeds {
                match &s.result {
                    Ok(sum) => println!(
                        "seed {}: {} iterations, {} sampled, {} grad evals, loss {}{}",
                        s.seed,
                        sum.iterations,
                        sum.sampling_number,
                        sum.grad_evals,
                        fmt_f64(sum.final_train_loss),
                        sum.final_accuracy
                            .map(|a| format!(", accuracy {:.2}%", 100.0 * a))
                            .unwrap_or_default()
                    ),
                    Err(e) => println!("seed {}: FAILED: {e}", s.seed),
                }
            }
            println!("output: {}", outcome.output_dir.display());
            Ok(outcome.failures().is_empty())
        }
        Command::Report { dirs, csv } => {
            let report = compare_report(&dirs)?;
            print!("{}", report.to_text());
            if let Some(path) = csv {
                write_file(&path, &report.to_csv())?;
            }
            Ok(true)
        }
        Command::Verify { dir } => Ok(print_checks(&verify(&dir)?.checks)),
        Command::GenData {
            kind,
            n,
            noise,
            seed,
            out,
        } => {
            let data = generate_dataset(kind, n, noise, seed)?;
            data.save(&out)?;
            println!("{} {}", data.checksum(), out.display());
            Ok(true)
        }
        Command::CheckBounds {
            cases,
            seed,
            min_dim,
            max_dim,
            rho,
            csv,
        } => {
            let results = psf_bound_sweep(cases, seed, min_dim..=max_dim, rho)?;
            let violations = results.iter().filter(|c| !c.result.satisfied).count();
            let worst_tight = results
                .iter()
                .filter(|c| c.aligned)
                .map(|c| c.result.slack.abs())
                .fold(0.0, f64::max);
            let min_slack = results
                .iter()
                .filter(|c| !c.aligned)
                .map(|c| c.result.slack)
                .fold(f64::INFINITY, f64::min);
            println!("cases: {cases} random + {cases} eigenvector-aligned");
            println!("violations: {violations}");
            println!("smallest slack (random): {}", fmt_f64(min_slack));
            println!("largest |slack| (aligned): {}", fmt_f64(worst_tight));
            if let Some(path) = csv {
                let mut text = String::from("dim,aligned,lhs,rhs,slack,satisfied\n");
                for c in &results {
                    text.push_str(&format!(
                        "{},{},{},{},{},{}\n",
                        c.dim,
                        u8::from(c.aligned),
                        fmt_f64(c.result.lhs),
                        fmt_f64(c.result.rhs),
                        fmt_f64(c.result.slack),
                        u8::from(c.result.satisfied)
                    ));
                }
                write_file(&path, &text)?;
            }
            Ok(violations == 0 && worst_tight <= 1e-10)
        }
        Command::Selfcheck { seed } => Ok(print_checks(&run_selfcheck(seed))),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
