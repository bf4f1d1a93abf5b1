use std::net::SocketAddr;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{ArgGroup, Args, Parser, Subcommand, ValueEnum};

mod commands;
mod parse;

/// Exact and sampled evaluation of three-qubit Vaidman games and simulated
/// secret-sharing sessions.
#[derive(Parser, Debug)]
#[command(name = "vaidman", version)]
struct Cli {
    /// Directory for files written without an explicit path.
    #[arg(long, global = true, env = "VAIDMAN_OUT_DIR", default_value = ".")]
    out_dir: PathBuf,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Emit a figure's data as CSV.
    Sweep(SweepArgs),
    /// Evaluate one state on one game.
    Game(GameArgs),
    /// Run a GHZ secret-sharing session.
    Qss(QssArgs),
    /// Run a facilitated W-state secret-sharing session.
    Facilitated(FacilitatedArgs),
    /// Run every built-in cross-check and print one line per check.
    VerifyAll(VerifyArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Family {
    Ghz,
    W,
    Wn,
    RulemakerW,
    RulemakerGhz,
}

#[derive(Args, Debug)]
struct SweepArgs {
    family: Family,
    /// θ grid for `ghz`, e.g. `0:pi/4:100` (start:stop:steps).
    #[arg(long)]
    theta: Option<String>,
    /// n values for `wn`, e.g. `1..50`.
    #[arg(long)]
    n: Option<String>,
    /// λ grid for the rule-maker families, e.g. `0:pi/2:90`.
    #[arg(long)]
    lambda: Option<String>,
    /// Steps per squared amplitude on the W simplex grid.
    #[arg(long)]
    divisions: Option<usize>,
    /// CSV destination; standard output when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum StateKind {
    /// sinθ|000> + cosθ|111>
    Ghz,
    /// (|000> + |111>)/√2
    GhzStd,
    /// a|100> + b|010> + c|001>
    W,
    /// (|100> + |010> + |001>)/√3
    WStd,
    /// the Wₙ family
    Wn,
}

#[derive(Args, Debug)]
#[command(group(ArgGroup::new("which").required(true).args(["xy", "zy", "rulemaker"])))]
struct GameArgs {
    #[arg(long)]
    state: StateKind,
    #[arg(long, value_parser = parse::angle)]
    theta: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    a: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    b: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    c: Option<f64>,
    #[arg(long)]
    n: Option<u64>,
    #[arg(long, value_parser = parse::angle, allow_hyphen_values = true)]
    gamma: Option<f64>,
    #[arg(long, value_parser = parse::angle, allow_hyphen_values = true)]
    delta: Option<f64>,
    /// XY game (questions XXX, XYY, YXY, YYX).
    #[arg(long)]
    xy: bool,
    /// ZY game (questions ZZZ, ZYY, YZY, YYZ).
    #[arg(long)]
    zy: bool,
    /// Rule-maker game; Charlie measures in the λ basis.
    #[arg(long)]
    rulemaker: bool,
    #[arg(long, value_parser = parse::angle, allow_hyphen_values = true)]
    lambda: Option<f64>,
    /// Monte Carlo trials; 0 skips sampling.
    #[arg(long, value_parser = parse::count, default_value = "0")]
    trials: u64,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum TransportFlag {
    InProcess,
    Socket,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum RoleFlag {
    Charlie,
    Alice,
    Bob,
}

#[derive(Args, Debug)]
struct TransportArgs {
    #[arg(long, value_enum, default_value = "in-process")]
    transport: TransportFlag,
    /// Address Charlie listens on (socket transport).
    #[arg(long)]
    listen: Option<SocketAddr>,
    /// Charlie's address, for `--role alice` or `--role bob`.
    #[arg(long)]
    connect: Option<SocketAddr>,
    /// Run a single role in this process and write its log.
    #[arg(long, value_enum)]
    role: Option<RoleFlag>,
    /// Per-message timeout in seconds.
    #[arg(long, default_value = "10")]
    timeout: f64,
    #[arg(long, default_value = "0")]
    retries: u32,
    /// Build the transcript from three role logs: charlie, alice, bob.
    #[arg(long, num_args = 3, value_names = ["CHARLIE", "ALICE", "BOB"])]
    assemble: Option<Vec<PathBuf>>,
}

#[derive(Args, Debug)]
struct QssArgs {
    /// Number of rounds.
    #[arg(long, value_parser = parse::count)]
    m: Option<u64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Transcript (or role log) destination.
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    transport: TransportArgs,
}

#[derive(Args, Debug)]
struct FacilitatedArgs {
    #[arg(long, value_parser = parse::count)]
    m: Option<u64>,
    /// Charlie's measurement angle.
    #[arg(long, value_parser = parse::angle, default_value = "pi/2", allow_hyphen_values = true)]
    lambda: f64,
    /// `sift` (independent choices, mismatches discarded) or `announce`.
    #[arg(long, default_value = "sift")]
    policy: String,
    /// `honest`, `random:<party>` or `flip:<party>`.
    #[arg(long, default_value = "honest")]
    cheat: String,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value_t = vaidman_core::protocols::DEFAULT_THRESHOLD)]
    threshold: f64,
    #[arg(long, default_value_t = vaidman_core::protocols::DEFAULT_SLACK)]
    slack: f64,
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    transport: TransportArgs,
}

#[derive(Args, Debug)]
struct VerifyArgs {
    /// Seed for the sampled checks.
    #[arg(long, default_value = "2024")]
    seed: u64,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match commands::run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
