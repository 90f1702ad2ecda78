//! `isopulse`: reproducible runs of the pulse-control experiments.

mod cmd;
mod fail;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use fail::Failure;

#[derive(Parser, Serialize)]
#[command(
    name = "isopulse",
    version,
    about = "Isostable pulse design and regulation for monotone systems"
)]
struct Cli {
    /// Worker threads for grid evaluations. Falls back to ISOPULSE_WORKERS, then all cores.
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Serialize)]
enum Command {
    /// Integrate one trajectory, optionally under a pulse.
    Simulate(SimulateArgs),
    /// Dominant spectrum and a sampled eigenfunction at one equilibrium.
    Spectral(SpectralArgs),
    /// Solve the fixed-pulse minimum-time program.
    Design(DesignArgs),
    /// Admissible pulses over a parameter interval and the contour overlay.
    Envelope(EnvelopeArgs),
    /// Event-based regulation inside a box around the saddle.
    Regulate(RegulateArgs),
    /// Quick numerical property checks.
    Check(CheckArgs),
}

/// A comma-separated vector, or one of `min`, `int`, `max` for the toggle parameter sets.
#[derive(Clone, Debug, Serialize)]
#[serde(transparent)]
pub struct Vector(pub Vec<f64>);

impl FromStr for Vector {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        use isopulse_core::toggle;
        match s.trim() {
            "min" => return Ok(Vector(toggle::Q_MIN.to_vec())),
            "int" => return Ok(Vector(toggle::Q_INT.to_vec())),
            "max" => return Ok(Vector(toggle::Q_MAX.to_vec())),
            _ => {}
        }
        s.split(',')
            .map(|t| t.trim().parse::<f64>().map_err(|_| format!("not a number: {t:?}")))
            .collect::<Result<Vec<_>, _>>()
            .map(Vector)
    }
}

#[derive(Clone, Copy, Debug, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Which {
    /// Stable state with x2 high.
    Star,
    /// Stable state with x1 high.
    Bullet,
}

#[derive(Args, Serialize)]
pub struct ModelArgs {
    /// Model description (JSON). The built-in toggle switch when omitted.
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Parameter vector.
    #[arg(long)]
    pub q: Option<Vector>,
}

#[derive(Args, Serialize)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    /// Initial state; defaults to the equilibrium picked by --from.
    #[arg(long)]
    pub x0: Option<Vector>,
    #[arg(long, value_enum, default_value = "star")]
    pub from: Which,
    #[arg(long)]
    pub mu: Option<f64>,
    #[arg(long)]
    pub tau: Option<f64>,
    /// Pulse from a design JSON (mu, tau and channel); overrides --mu/--tau.
    #[arg(long)]
    pub design: Option<PathBuf>,
    /// Input channel of the pulse, zero-based.
    #[arg(long, default_value_t = 0)]
    pub channel: usize,
    #[arg(long, default_value_t = 200.0)]
    pub t_end: f64,
    /// Report the state only at these times (dense output).
    #[arg(long)]
    pub at_times: Option<Vector>,
    #[arg(long, default_value_t = 1e-9)]
    pub rtol: f64,
    #[arg(long, default_value_t = 1e-9)]
    pub atol: f64,
    /// Also write time-series and phase-plane SVGs.
    #[arg(long)]
    pub svg: bool,
}

#[derive(Args, Serialize)]
pub struct SpectralArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value = "bullet")]
    pub at: Which,
    /// Sampling box `lo1,lo2,hi1,hi2`.
    #[arg(long, default_value = "0,0,12,12")]
    pub bbox: Vector,
    #[arg(long, default_value_t = 41)]
    pub resolution: usize,
    /// Isostable levels drawn in the SVG.
    #[arg(long, default_value = "-100000,-1000,-10,10,1000,100000")]
    pub levels: Vector,
}

#[derive(Args, Serialize)]
pub struct DesignArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long)]
    pub out: PathBuf,
    /// Equilibrium whose eigenfunction defines the target isostable.
    #[arg(long, value_enum, default_value = "bullet")]
    pub target: Which,
    /// Starting state; defaults to the other stable equilibrium.
    #[arg(long)]
    pub x0: Option<Vector>,
    #[arg(long, default_value_t = 0)]
    pub channel: usize,
    #[arg(long, default_value_t = 1e-2)]
    pub epsilon: f64,
    /// Energy budget on mu * tau.
    #[arg(long, default_value_t = 100.0)]
    pub e_max: f64,
    #[arg(long, default_value = "2.5,10")]
    pub mu_range: Vector,
    #[arg(long, default_value = "0.5,25")]
    pub tau_range: Vector,
    /// Points per axis of the r-field; 0 skips it.
    #[arg(long, default_value_t = 41)]
    pub grid: usize,
}

#[derive(Args, Serialize)]
pub struct EnvelopeArgs {
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value = "min")]
    pub p1: Vector,
    #[arg(long, default_value = "max")]
    pub p2: Vector,
    /// Optional third parameter vector drawn between the bounds.
    #[arg(long)]
    pub p_mid: Option<Vector>,
    /// Contours start each parameter from this equilibrium; membership uses it at the reference parameter.
    #[arg(long, value_enum, default_value = "star")]
    pub from: Which,
    /// Reference parameter for the membership state; defaults to --p-mid, then `int`.
    #[arg(long)]
    pub p_ref: Option<Vector>,
    #[arg(long, default_value_t = 0)]
    pub channel: usize,
    #[arg(long, default_value_t = 1e-14)]
    pub epsilon: f64,
    #[arg(long, default_value_t = 38.0)]
    pub sigma: f64,
    #[arg(long, default_value = "2.5,10")]
    pub mu_range: Vector,
    #[arg(long, default_value = "0.5,25")]
    pub tau_range: Vector,
    #[arg(long, default_value_t = 60)]
    pub grid: usize,
}

#[derive(Args, Serialize)]
pub struct RegulateArgs {
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value = "int")]
    pub q_true: Vector,
    #[arg(long, default_value = "min")]
    pub q_lo: Vector,
    #[arg(long, default_value = "max")]
    pub q_hi: Vector,
    /// Box `lo1,lo2,hi1,hi2`.
    #[arg(long, default_value = "4,4,10,10")]
    pub r#box: Vector,
    /// Exits are monitored on the box shrunk by this margin.
    #[arg(long, default_value_t = 0.1)]
    pub guard: f64,
    #[arg(long, default_value_t = 1e-5)]
    pub delta: f64,
    #[arg(long, default_value_t = 0.25)]
    pub xi_upper: f64,
    /// Anchors per box edge.
    #[arg(long, default_value_t = 8)]
    pub n_anchors: usize,
    #[arg(long, default_value_t = 50.0)]
    pub mu_cap: f64,
    #[arg(long, default_value_t = 100.0)]
    pub t_end: f64,
    /// Defaults to the box centre.
    #[arg(long)]
    pub x0: Option<Vector>,
}

#[derive(Args, Serialize)]
pub struct CheckArgs {
    /// Write the report here as well.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, default_value_t = 256)]
    pub samples: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
}

fn workers(flag: Option<usize>) -> Result<Option<usize>, Failure> {
    if let Some(n) = flag {
        return Ok(Some(n));
    }
    match std::env::var("ISOPULSE_WORKERS") {
        Ok(s) => s
            .trim()
            .parse::<usize>()
            .map(Some)
            .map_err(|_| Failure::Validation(format!("ISOPULSE_WORKERS={s:?} is not a count"))),
        Err(_) => Ok(None),
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    if let Some(n) = workers(cli.workers)? {
        if n == 0 {
            return Err(Failure::Validation("worker count must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Failure::Validation(e.to_string()))?;
    }
    let config = serde_json::to_value(&cli.command).map_err(|e| Failure::Validation(e.to_string()))?;
    match &cli.command {
        Command::Simulate(a) => cmd::simulate(a, &config),
        Command::Spectral(a) => cmd::spectral(a, &config),
        Command::Design(a) => cmd::design(a, &config),
        Command::Envelope(a) => cmd::envelope(a, &config),
        Command::Regulate(a) => cmd::regulate(a, &config),
        Command::Check(a) => cmd::check(a, &config),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
