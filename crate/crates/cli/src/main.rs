mod commands;
mod config;
mod output;

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::config::{ConfigError, Resolver};
use crate::output::Format;

pub const EXIT_OK: u8 = 0;
pub const EXIT_USAGE: u8 = 1;
pub const EXIT_PARSE: u8 = 2;
pub const EXIT_VERIFY: u8 = 3;
pub const EXIT_TRIVIAL: u8 = 4;

/// CHSH self-testing: simulate Bell tests and certify state and measurement fidelities.
#[derive(Debug, Parser)]
#[command(name = "chsh-selftest", version)]
pub struct Cli {
    /// Flat key=value file; keys are long flag names. Flags override it.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output format: text (6 significant digits) or csv (full precision).
    #[arg(long, global = true, value_enum)]
    pub format: Option<Format>,
    /// Worker threads (1 runs sequentially; default uses all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate Bell-test trials and optionally write a trial log.
    Simulate(SimulateArgs),
    /// Certify state and measurement fidelities from a trial log.
    Certify(CertifyArgs),
    /// Sweep the basis offset angle and locate the S maxima.
    SweepAngle(SweepArgs),
    /// Certified fidelities for given CHSH values (no finite-size correction).
    Bounds(BoundsArgs),
    /// Certified fidelities over a grid of CHSH values and trial counts.
    FiniteSizeTable(TableArgs),
    /// Light-cone time budget and locality margin.
    Timing(TimingArgs),
    /// Two-qubit state tomography and the tomographic measurement-fidelity bound.
    Tomography(TomographyArgs),
    /// Cross-check closed-form bounds against independent oracles.
    Verify(VerifyArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Preset {
    /// Noise-free |phi+> at the optimal offset.
    Ideal,
    /// Bell fidelity 0.859, readout fidelities 0.989 / 0.972, 2^24 trials in blocks of 2^20.
    Lab,
}

impl std::str::FromStr for Preset {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        <Preset as ValueEnum>::from_str(s, true)
    }
}

impl std::fmt::Display for Preset {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Preset::Ideal => "ideal",
            Preset::Lab => "lab",
        })
    }
}

#[derive(Debug, Args, Default)]
pub struct NoiseArgs {
    /// Starting point for every noise parameter.
    #[arg(long, value_enum)]
    pub preset: Option<Preset>,
    #[arg(long)]
    pub bell_fidelity: Option<f64>,
    /// Basis offset angle of node B, degrees.
    #[arg(long)]
    pub theta_deg: Option<f64>,
    /// Separation of node A's measurement directions, degrees.
    #[arg(long)]
    pub alpha_deg: Option<f64>,
    #[arg(long)]
    pub readout_eg_a: Option<f64>,
    #[arg(long)]
    pub readout_ge_a: Option<f64>,
    #[arg(long)]
    pub readout_eg_b: Option<f64>,
    #[arg(long)]
    pub readout_ge_b: Option<f64>,
    #[arg(long)]
    pub drift_amplitude_deg: Option<f64>,
    /// Drift period in trials.
    #[arg(long)]
    pub drift_period: Option<u64>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Number of trials.
    #[arg(long)]
    pub n: Option<u64>,
    /// Trials per calibration block; must divide n.
    #[arg(long)]
    pub block_size: Option<u64>,
    /// Trials per reported S value; must divide n.
    #[arg(long)]
    pub report_size: Option<u64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Repetition rate in Hz (metadata only).
    #[arg(long)]
    pub repetition_rate: Option<f64>,
    #[command(flatten)]
    pub noise: NoiseArgs,
    /// Trial log path.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CertifyArgs {
    /// Trial log written by `simulate`.
    pub log: Option<PathBuf>,
    /// Confidence level.
    #[arg(long)]
    pub conf: Option<f64>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[arg(long)]
    pub theta_start_deg: Option<f64>,
    #[arg(long)]
    pub theta_stop_deg: Option<f64>,
    /// Grid points, endpoints included.
    #[arg(long)]
    pub points: Option<usize>,
    /// Trials per grid point.
    #[arg(long)]
    pub trials: Option<u64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[command(flatten)]
    pub noise: NoiseArgs,
}

#[derive(Debug, Args)]
pub struct BoundsArgs {
    /// A single CHSH value.
    #[arg(long)]
    pub s: Option<f64>,
    #[arg(long)]
    pub s_min: Option<f64>,
    #[arg(long)]
    pub s_max: Option<f64>,
    #[arg(long)]
    pub steps: Option<usize>,
}

#[derive(Debug, Args)]
pub struct TableArgs {
    /// Comma-separated CHSH values.
    #[arg(long, value_delimiter = ',')]
    pub s: Option<Vec<f64>>,
    /// Comma-separated trial counts.
    #[arg(long, value_delimiter = ',')]
    pub n: Option<Vec<u64>>,
    #[arg(long)]
    pub conf: Option<f64>,
}

#[derive(Debug, Args)]
pub struct TimingArgs {
    #[arg(long)]
    pub distance_m: Option<f64>,
    #[arg(long)]
    pub duration_ns: Option<f64>,
    #[arg(long)]
    pub distance_sigma_ns: Option<f64>,
    #[arg(long)]
    pub duration_sigma_ns: Option<f64>,
    /// Required margin in combined standard deviations.
    #[arg(long)]
    pub k: Option<f64>,
}

#[derive(Debug, Args)]
pub struct TomographyArgs {
    #[arg(long)]
    pub bell_fidelity: Option<f64>,
    #[arg(long)]
    pub readout_fidelity_a: Option<f64>,
    #[arg(long)]
    pub readout_fidelity_b: Option<f64>,
    /// Shots per Pauli setting.
    #[arg(long)]
    pub shots: Option<u64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Rotation error probability for the measurement-fidelity bound.
    #[arg(long)]
    pub eps_r: Option<f64>,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    #[arg(long)]
    pub seed: Option<u64>,
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Simulate(_) => "simulate",
            Command::Certify(_) => "certify",
            Command::SweepAngle(_) => "sweep-angle",
            Command::Bounds(_) => "bounds",
            Command::FiniteSizeTable(_) => "finite-size-table",
            Command::Timing(_) => "timing",
            Command::Tomography(_) => "tomography",
            Command::Verify(_) => "verify",
        }
    }
}

/// Parses arguments and runs the command, writing to `stdout`. Returns the exit code.
pub fn run(args: &[String], stdout: &mut impl Write, stderr: &mut impl Write) -> u8 {
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = if e.use_stderr() {
                write!(stderr, "{}", e.render())
            } else {
                write!(stdout, "{}", e.render())
            };
            return code;
        }
    };
    match dispatch(cli, stdout) {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e:#}");
            exit_code_for(&e)
        }
    }
}

fn exit_code_for(e: &anyhow::Error) -> u8 {
    for cause in e.chain() {
        if cause.downcast_ref::<ConfigError>().is_some() {
            return EXIT_PARSE;
        }
        if let Some(chsh_selftest::Error::Parse { .. }) = cause.downcast_ref::<chsh_selftest::Error>() {
            return EXIT_PARSE;
        }
    }
    EXIT_USAGE
}

fn dispatch(cli: Cli, stdout: &mut impl Write) -> anyhow::Result<u8> {
    let name = cli.command.name();
    let mut r = match &cli.config {
        Some(p) => Resolver::load(p, name)?,
        None => Resolver::empty(),
    };
    let format = r.get("format", cli.format, Format::Text)?;
    let threads = r.opt("threads", cli.threads)?;
    let exec = match threads {
        None | Some(0) => chsh_selftest::Execution::Parallel,
        Some(1) => chsh_selftest::Execution::Sequential,
        Some(k) => chsh_selftest::Execution::Workers(k),
    };
    let ctx = commands::Context { format, exec };
    match cli.command {
        Command::Simulate(a) => commands::simulate(&ctx, &mut r, a, stdout),
        Command::Certify(a) => commands::certify(&ctx, &mut r, a, stdout),
        Command::SweepAngle(a) => commands::sweep_angle(&ctx, &mut r, a, stdout),
        Command::Bounds(a) => commands::bounds(&ctx, &mut r, a, stdout),
        Command::FiniteSizeTable(a) => commands::finite_size_table(&ctx, &mut r, a, stdout),
        Command::Timing(a) => commands::timing(&ctx, &mut r, a, stdout),
        Command::Tomography(a) => commands::tomography(&ctx, &mut r, a, stdout),
        Command::Verify(a) => commands::verify(&ctx, &mut r, a, stdout),
    }
}

fn main() -> ExitCode {
    let args: Vec<String> = std::env::args().collect();
    let stdout = std::io::stdout();
    let mut out = std::io::BufWriter::new(stdout.lock());
    let code = run(&args, &mut out, &mut std::io::stderr());
    if out.flush().is_err() {
        return ExitCode::from(EXIT_USAGE);
    }
    ExitCode::from(code)
}
