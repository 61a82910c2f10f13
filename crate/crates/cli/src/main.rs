use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use inclusion_accel_cli::commands::{cmd_compare, cmd_list_problems, cmd_run, cmd_verify_identities, Outcome};
use inclusion_accel_cli::{CliError, EXIT_CHECK_FAILURE, EXIT_CONFIG_ERROR, EXIT_PASS};

#[derive(Parser)]
#[command(name = "inclusion-accel", version, about = "Run and verify EAG, AS and EG on monotone inclusion problems")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one solver over every seed of an experiment config.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Check both algebraic identities on random draws.
    VerifyIdentities {
        #[arg(long, default_value_t = 1000)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Perturb one coefficient by 1e-3; the battery must then fail.
        #[arg(long)]
        mutate: bool,
    },
    /// Run several solvers on one problem and compare fitted rate exponents.
    Compare {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// List problem names accepted in configs.
    ListProblems,
}

fn emit(outcome: &Outcome) -> ExitCode {
    let json = serde_json::to_string_pretty(outcome).expect("outcome serializes");
    let mut stdout = std::io::stdout().lock();
    let _ = writeln!(stdout, "{json}");
    ExitCode::from(if outcome.passed() { EXIT_PASS } else { EXIT_CHECK_FAILURE })
}

fn fmt_exponent(x: Option<f64>) -> String {
    x.map_or_else(|| "n/a".to_string(), |s| format!("{s:.4}"))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result: Result<ExitCode, CliError> = match cli.command {
        Command::Run { config, out } => cmd_run(&config, &out).map(|o| {
            for r in &o.runs {
                eprintln!(
                    "{} {} seed {}: {} iterations, final residual {:.3e}, exponent {}",
                    r.problem,
                    r.algorithm,
                    r.seed,
                    r.iterations,
                    r.final_cert_residual.unwrap_or(f64::NAN),
                    fmt_exponent(r.fitted_rate_exponent)
                );
            }
            emit(&o)
        }),
        Command::VerifyIdentities { trials, seed, mutate } => cmd_verify_identities(trials, seed, mutate).map(|o| {
            if let Some(b) = &o.identities {
                eprintln!(
                    "max relative residual: EAG identity {:.3e}, AS identity {:.3e}",
                    b.max_relative_residual_eag, b.max_relative_residual_as
                );
            }
            emit(&o)
        }),
        Command::Compare { config, out } => cmd_compare(&config, &out).map(|(o, rows)| {
            eprintln!("{:<6} {:>6} {:>12} {:>14}  note", "solver", "seed", "exponent", "final resid");
            for r in &rows {
                eprintln!(
                    "{:<6} {:>6} {:>12} {:>14.6e}  {}",
                    r.algorithm.name(),
                    r.seed,
                    fmt_exponent(r.fitted_rate_exponent),
                    r.final_cert_residual.unwrap_or(f64::NAN),
                    if r.asserted { "asserted <= -0.9" } else { "reported only" }
                );
            }
            emit(&o)
        }),
        Command::ListProblems => {
            for (name, about) in cmd_list_problems() {
                println!("{name:<24} {about}");
            }
            Ok(ExitCode::from(EXIT_PASS))
        }
    };
    result.unwrap_or_else(|e| {
        eprintln!("error: {e}");
        ExitCode::from(EXIT_CONFIG_ERROR)
    })
}
