//! `mipt-xeb`: runs the cross-entropy experiments and persists every
//! artifact together with a hashed run manifest.
//!
//! Exit codes: 0 success, 1 configuration error, 2 runtime failure,
//! 3 more than 10% of circuits or models failed.

mod experiments;
mod tools;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use mipt_xeb::trajectory::InitialState;
use mipt_xeb::xeb::EstimatorKind;
use mipt_xeb_cli::{check_partial, config, output, Failure};

use config::Config;
use output::{Manifest, Output};

#[derive(Parser, Debug)]
#[command(name = "mipt-xeb", version, about = "Cross-entropy benchmark for monitored circuits")]
struct Cli {
    /// TOML experiment configuration (`version = 1`); defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed; overrides the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory. Defaults to `$MIPT_XEB_OUT/<command>`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads; 0 uses every core. Results do not depend on it.
    #[arg(long, global = true, default_value_t = 0)]
    workers: usize,
    /// exact, histogram or rnn.
    #[arg(long, global = true)]
    estimator: Option<EstimatorKind>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// χ versus measurement rate for several chain lengths.
    Sweep,
    /// χ_C(M) of one circuit on the M grid with its reference value.
    Convergence,
    /// Histogram versus RNN sample complexity of one circuit.
    DeltaM,
    /// Circuit-averaged half-chain entanglement entropy versus depth.
    Entropy,
    /// Trains one model on a record file.
    Train(tools::TrainArgs),
    /// One-shot χ_C of a single circuit.
    Chi(tools::ChiArgs),
    /// Compares BPTT against finite differences on a random model.
    Gradcheck(tools::GradcheckArgs),
    /// Samples and writes one circuit descriptor.
    Circuit(CircuitArgs),
    /// Samples measurement records of a circuit.
    Sample(tools::SampleArgs),
    /// Replays every record of a circuit under both initial states.
    Enumerate(tools::EnumerateArgs),
    /// Enumerates a model's distribution and tallies samples from it.
    Model(tools::ModelArgs),
}

#[derive(Args, Debug, Clone)]
pub struct CircuitArgs {
    /// Read the circuit from a file instead of sampling it.
    #[arg(long)]
    circuit: Option<PathBuf>,
    #[arg(long, default_value_t = 8)]
    qubits: usize,
    #[arg(long, default_value_t = 0.1)]
    rate: f64,
    /// First circuit seed tried.
    #[arg(long, default_value_t = 0)]
    circuit_seed: u64,
    /// Require exactly this many measurement sites.
    #[arg(long)]
    measurements: Option<usize>,
    /// Require at most this many measurement sites.
    #[arg(long)]
    max_measurements: Option<usize>,
}

impl CircuitArgs {
    pub fn resolve(&self) -> Result<mipt_xeb::CircuitDescriptor, Failure> {
        config::CircuitChoice {
            circuit_file: self.circuit.clone(),
            circuit_seed: self.circuit_seed,
            measurements: self.measurements,
            max_measurements: self.max_measurements,
        }
        .resolve(self.qubits, self.rate)
    }
}

pub fn parse_initial(s: &str) -> Result<InitialState, Failure> {
    s.parse().map_err(|e: mipt_xeb::Error| Failure::Config(e.to_string()))
}

/// Everything a command needs besides its own arguments.
pub struct Ctx {
    pub config: Config,
    pub seed: u64,
    pub workers: usize,
    pub estimator: Option<EstimatorKind>,
    out: Option<PathBuf>,
    arguments: Vec<String>,
}

impl Ctx {
    pub fn output(&self, command: &str) -> Result<Output, Failure> {
        let dir = output::resolve_dir(self.out.as_deref(), command);
        Output::create(
            dir,
            Manifest {
                tool: "mipt-xeb",
                version: env!("CARGO_PKG_VERSION"),
                command: command.to_string(),
                arguments: self.arguments.clone(),
                config_hash: self.config.hash(),
                config: self.config.canonical(),
                seed: self.seed,
                workers: self.workers,
                notes: Vec::new(),
                values: Default::default(),
                failures: Vec::new(),
                files: Vec::new(),
                timings: Vec::new(),
            },
        )
    }
}

fn load_config(path: Option<&Path>) -> Result<Config, Failure> {
    match path {
        Some(p) => Config::load(p),
        None => Ok(Config::default()),
    }
}

fn run(cli: Cli) -> Result<PathBuf, Failure> {
    let mut config = load_config(cli.config.as_deref())?;
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(cli.workers)
        .build_global()
        .map_err(|e| Failure::Runtime(e.to_string()))?;
    let ctx = Ctx {
        seed: config.seed,
        config,
        workers: rayon::current_num_threads(),
        estimator: cli.estimator,
        out: cli.out,
        arguments: std::env::args().skip(1).collect(),
    };
    match cli.command {
        Command::Sweep => experiments::sweep(&ctx),
        Command::Convergence => experiments::convergence(&ctx),
        Command::DeltaM => experiments::delta_m(&ctx),
        Command::Entropy => experiments::entropy(&ctx),
        Command::Train(a) => tools::train(&ctx, &a),
        Command::Chi(a) => tools::chi(&ctx, &a),
        Command::Gradcheck(a) => tools::gradcheck(&ctx, &a),
        Command::Circuit(a) => tools::circuit(&ctx, &a),
        Command::Sample(a) => tools::sample(&ctx, &a),
        Command::Enumerate(a) => tools::enumerate(&ctx, &a),
        Command::Model(a) => tools::model(&ctx, &a),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(dir) => {
            println!("{}", dir.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("mipt-xeb: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
