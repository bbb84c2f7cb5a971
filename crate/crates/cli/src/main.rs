//! `bilinmor`: reduce, simulate and sweep bilinear systems from the command line.

mod commands;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "bilinmor", version, about = "Balancing-based reduction of bilinear systems with non-zero initial conditions")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write the finite-difference heat benchmark as JSON.
    Heat2d(Heat2dArgs),
    /// Gramians, balancing, reduced models and error bounds.
    Reduce(RunArgs),
    /// Reduce, then simulate full and reduced models and compare.
    Simulate(RunArgs),
    /// Bounds and measured errors over a range of orders and gamma values.
    Sweep(SweepArgs),
    /// Hankel singular values of both Gramian pairs.
    Hsv(RunArgs),
    /// Generalized stability of (A, N) at gamma.
    CheckStability(StabilityArgs),
    /// Independent reference checks on the fixture systems.
    Oracles {
        #[command(subcommand)]
        action: OracleAction,
    },
}

#[derive(Args)]
struct Heat2dArgs {
    #[arg(long, default_value_t = 10)]
    k: usize,
    #[arg(long, default_value_t = 0.1)]
    v0: f64,
    #[arg(long, default_value_t = 1.0)]
    robin: f64,
    /// Output file (JSON).
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Clone)]
struct SystemArgs {
    /// System JSON file; defaults to the heat benchmark.
    #[arg(long, conflicts_with = "k")]
    system: Option<PathBuf>,
    /// Grid size of the heat benchmark.
    #[arg(long)]
    k: Option<usize>,
}

#[derive(Args, Clone)]
struct RunArgs {
    #[command(flatten)]
    system: SystemArgs,
    #[arg(long, default_value_t = 2.0)]
    gamma: f64,
    #[arg(long, default_value_t = 10)]
    rx0: usize,
    #[arg(long, default_value_t = 10)]
    rb: usize,
    #[arg(long, default_value = "bt")]
    method_x0: String,
    #[arg(long, default_value = "bt")]
    method_b: String,
    /// `expcos`, `zero` or `table:FILE` (CSV rows `t,u1,...,um`).
    #[arg(long, default_value = "expcos")]
    input: String,
    #[arg(long = "T", default_value_t = 1.0)]
    t_end: f64,
    #[arg(long, default_value_t = 1e-4)]
    dt: f64,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Directory for cached Gramians.
    #[arg(long)]
    cache: Option<PathBuf>,
    /// Skip the interior-point trace minimisation of P_B.
    #[arg(long)]
    no_sdp: bool,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    run: RunArgs,
    /// `a:b:count`; overrides --gamma.
    #[arg(long)]
    gamma_range: Option<String>,
    /// Inclusive order range `lo:hi`.
    #[arg(long, default_value = "1:16")]
    r_range: String,
    /// Worker threads (one gamma value per task).
    #[arg(long)]
    jobs: Option<usize>,
}

#[derive(Args)]
struct StabilityArgs {
    #[command(flatten)]
    system: SystemArgs,
    #[arg(long, default_value_t = 1.0)]
    gamma: f64,
    /// Also bisect for the smallest stabilizing gamma in [lo, hi].
    #[arg(long)]
    min_gamma: Option<String>,
}

#[derive(Subcommand)]
enum OracleAction {
    Run {
        #[arg(long)]
        report: PathBuf,
        #[arg(long, default_value = "fixtures")]
        fixtures: PathBuf,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Heat2d(a) => commands::heat2d(&a),
        Command::Reduce(a) => commands::reduce(&a),
        Command::Simulate(a) => commands::simulate(&a),
        Command::Sweep(a) => commands::sweep(&a),
        Command::Hsv(a) => commands::hsv(&a),
        Command::CheckStability(a) => commands::check_stability(&a),
        Command::Oracles { action: OracleAction::Run { report, fixtures } } => commands::oracles(&report, &fixtures),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::from(e.exit_code())
        }
    }
}
