use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use eivreg::bench::{self, Format, SimulationConfig};
use eivreg::minimax::{self, MinimaxConfig};
use eivreg::model::{gram, DgpConfig};
use eivreg::sensitivity::{self, ExactBudget, LocalOptions, SensitivityNorm};
use eivreg::{io, Error, Result};
use serde::Serialize;

/// Sparse errors-in-variables regression toolkit.
///
/// Exit codes: 0 ok, 2 parse or invalid input, 3 shape mismatch,
/// 4 infeasible problem, 5 solver failure.
#[derive(Parser)]
#[command(name = "eivreg", version)]
struct Cli {
    /// Worker threads for Monte Carlo runs (all cores when unset).
    #[arg(long, global = true, env = "EIV_THREADS")]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Monte Carlo study of the estimators on simulated data.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        /// Output file; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value = "csv")]
        format: Format,
    },
    /// Conic RMSE across sample sizes, with the fitted log-log slope.
    RateScan {
        #[arg(long)]
        config: PathBuf,
        /// Increasing sample sizes, comma separated.
        #[arg(long, value_delimiter = ',', required = true)]
        n: Vec<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Fits one estimator to a response file and a design file.
    Fit {
        #[arg(long)]
        y: PathBuf,
        #[arg(long = "Z")]
        z: PathBuf,
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Sensitivity constant of a Gram matrix (or of a design with --design).
    Sensitivity {
        #[arg(long)]
        matrix: PathBuf,
        /// Treat the matrix as an n x p design and use X'X / n.
        #[arg(long)]
        design: bool,
        #[arg(long)]
        s: usize,
        #[arg(long)]
        u: f64,
        /// One of 1, 2, inf, pr.
        #[arg(long)]
        q: SensitivityNorm,
        #[arg(long, default_value_t = 20)]
        restarts: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Packing-based hypothesis family with separations and divergences.
    Minimax {
        #[arg(long)]
        config: PathBuf,
        /// CSV file receiving one hypothesis per row.
        #[arg(long)]
        family_out: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Draws one dataset and writes y.csv, Z.csv and X.csv.
    Generate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
    },
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Shape(_) | Error::DimensionMismatch(_) => 3,
        Error::Infeasible { .. } | Error::NoFixedPoint { .. } | Error::Unbounded => 4,
        Error::SolverFailure(_) | Error::BudgetExceeded(_) => 5,
        Error::Parse(_)
        | Error::Io(_)
        | Error::InvalidParameter(_)
        | Error::NotPsd(_)
        | Error::NotPd
        | Error::ZeroDiagonal(_) => 2,
    }
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Parse(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))
}

fn write_out(out: Option<&Path>, bytes: &[u8]) -> Result<()> {
    match out {
        Some(p) => std::fs::write(p, bytes)?,
        None => {
            use std::io::Write;
            std::io::stdout().write_all(bytes)?;
        }
    }
    Ok(())
}

fn write_json<T: Serialize>(out: Option<&Path>, value: &T) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    write_out(out, &bytes)
}

/// Sizes the global pool used by simulations and subset enumeration.
fn configure_threads(threads: Option<usize>) -> Result<()> {
    match threads {
        Some(0) => Err(Error::InvalidParameter("the worker count must be at least 1".into())),
        Some(t) => rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .map_err(|e| Error::InvalidParameter(format!("cannot start {t} workers: {e}"))),
        None => Ok(()),
    }
}

fn run(cli: Cli) -> Result<()> {
    configure_threads(cli.threads)?;
    match cli.command {
        Command::Simulate { config, out, format } => {
            let cfg: SimulationConfig = read_json(&config)?;
            let table = bench::run_monte_carlo(&cfg)?;
            write_out(out.as_deref(), &bench::emit(&table, format)?)
        }
        Command::RateScan { config, n, out } => {
            let cfg: SimulationConfig = read_json(&config)?;
            write_json(out.as_deref(), &bench::rate_scan(&cfg, &n)?)
        }
        Command::Fit { y, z, config, out } => write_json(out.as_deref(), &bench::fit_from_file(y, z, config)?),
        Command::Sensitivity { matrix, design, s, u, q, restarts, seed, out } => {
            let m = io::read_matrix_file(&matrix)?;
            let psi = if design { gram(&m) } else { m };
            let opts = LocalOptions { restarts, seed, ..LocalOptions::default() };
            let report = sensitivity::sensitivity(&psi, s, u, q, &opts, &ExactBudget::default())?;
            write_json(out.as_deref(), &report)
        }
        Command::Minimax { config, family_out, out } => {
            let cfg: MinimaxConfig = read_json(&config)?;
            let (family, report) = minimax::minimax_report(&cfg)?;
            let rows = family.omega_bars.len();
            let flat: Vec<f64> = family.omega_bars.iter().flatten().copied().collect();
            let m = nalgebra::DMatrix::from_row_slice(rows, cfg.p, &flat);
            io::write_matrix_file(&family_out, &m, "w")?;
            write_json(out.as_deref(), &report)
        }
        Command::Generate { config, out_dir } => {
            let cfg: DgpConfig = read_json(&config)?;
            let data = cfg.generate()?;
            std::fs::create_dir_all(&out_dir)?;
            io::write_vector_file(out_dir.join("y.csv"), &data.y, "y")?;
            io::write_matrix_file(out_dir.join("Z.csv"), &data.z, "z")?;
            if let Some(x) = &data.x {
                io::write_matrix_file(out_dir.join("X.csv"), x, "x")?;
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
