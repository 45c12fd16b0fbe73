use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use scatterlab::experiment::{self, ExperimentConfig, ExperimentKind};
use scatterlab::states::StateFamily;
use scatterlab::ScatterError;

const EXIT_CHECK_FAILED: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_IO: u8 = 3;

#[derive(Parser, Debug)]
#[command(name = "scatterlab", version, about = "Monte Carlo experiments on random boundary-environment scattering")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Running distance between the Monte Carlo average state and rho_I ⊗ 1/d_B.
    Decoupling(RunArgs),
    /// Conditional purity per Haar draw against the closed-form mean.
    PurityScan(RunArgs),
    /// Tail frequencies of the scattered distance against the analytic bound.
    Concentration(RunArgs),
    /// Haar moments of unitary matrix entries against their exact values.
    Moments(RunArgs),
    /// Run whichever experiment the config file names.
    Run(RunArgs),
}

#[derive(Args, Debug)]
struct RunArgs {
    /// TOML config file; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Inner qubits.
    #[arg(long = "ni")]
    n_i: Option<u32>,
    /// Boundary qubits.
    #[arg(long = "nb")]
    n_b: Option<u32>,
    /// Environment qubits.
    #[arg(long = "ne")]
    n_e: Option<u32>,
    /// Raw inner dimension (exclusive with qubit counts).
    #[arg(long = "di")]
    d_i: Option<usize>,
    #[arg(long = "db")]
    d_b: Option<usize>,
    #[arg(long = "de")]
    d_e: Option<usize>,
    /// ghz, w, product, max-entangled-ib, random-pure or custom.
    #[arg(long)]
    family: Option<StateFamily>,
    /// Prepare the state on I ⊗ B and put the environment in |0...0>.
    #[arg(long)]
    fiducial: bool,
    /// Decoupling: replace the B ⊗ E part by the maximally mixed state.
    #[arg(long)]
    mixed_be: bool,
    #[arg(long)]
    samples: Option<u64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Deviation grid for the concentration experiment.
    #[arg(long, num_args = 1.., value_delimiter = ',')]
    epsilon: Option<Vec<f64>>,
    /// Environment qubit counts for the purity spread sweep.
    #[arg(long, num_args = 1.., value_delimiter = ',')]
    ne_sweep: Option<Vec<u32>>,
    /// Unitary dimension for the moments experiment.
    #[arg(long)]
    dim: Option<usize>,
    /// Sample counts at which the decoupling distance is reported.
    #[arg(long, num_args = 1.., value_delimiter = ',')]
    checkpoints: Option<Vec<u64>>,
    /// Amplitude file (one `re im` pair per line) for the custom family.
    #[arg(long)]
    amplitudes: Option<PathBuf>,
    /// CSV destination; standard output when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads; 1 gives byte-identical output on every run.
    #[arg(long)]
    threads: Option<usize>,
    /// Print the CSV header of the experiment and exit.
    #[arg(long)]
    schema: bool,
}

enum Failure {
    Config(anyhow::Error),
    Io(anyhow::Error),
    Run(anyhow::Error),
}

impl From<ScatterError> for Failure {
    fn from(e: ScatterError) -> Self {
        match e {
            ScatterError::Io(_) => Failure::Io(e.into()),
            ScatterError::Inconsistent(_) => Failure::Run(e.into()),
            _ => Failure::Config(e.into()),
        }
    }
}

fn build_config(kind: Option<ExperimentKind>, args: &RunArgs) -> Result<ExperimentConfig, Failure> {
    let mut cfg = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("reading config {}", path.display()))
                .map_err(Failure::Io)?;
            ExperimentConfig::from_toml_str(&text)?
        }
        None => ExperimentConfig::default(),
    };
    if let Some(k) = kind {
        cfg.experiment = Some(k);
    }
    if args.n_i.or(args.n_b).or(args.n_e).is_some() {
        (cfg.d_i, cfg.d_b, cfg.d_e) = (None, None, None);
    }
    if args.d_i.or(args.d_b).or(args.d_e).is_some() {
        (cfg.n_i, cfg.n_b, cfg.n_e) = (None, None, None);
    }
    macro_rules! set {
        ($($field:ident),*) => { $(if let Some(v) = args.$field.clone() { cfg.$field = Some(v); })* };
    }
    set!(n_i, n_b, n_e, d_i, d_b, d_e, checkpoints, amplitudes);
    if let Some(f) = args.family {
        cfg.family = f;
    }
    cfg.fiducial |= args.fiducial;
    cfg.mixed_be |= args.mixed_be;
    if let Some(n) = args.samples {
        cfg.samples = n;
    }
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    if let Some(e) = &args.epsilon {
        cfg.epsilon = e.clone();
    }
    if let Some(n) = &args.ne_sweep {
        cfg.ne_sweep = n.clone();
    }
    if let Some(d) = args.dim {
        cfg.dim = d;
    }
    if let Some(o) = &args.out {
        cfg.output = Some(o.clone());
    }
    Ok(cfg)
}

fn execute(kind: Option<ExperimentKind>, args: RunArgs) -> Result<bool, Failure> {
    let cfg = build_config(kind, &args)?;
    let kind = cfg.kind()?;
    if args.schema {
        println!("{}", kind.schema().join(","));
        return Ok(true);
    }
    if let Some(t) = args.threads {
        if t == 0 {
            return Err(Failure::Config(anyhow::anyhow!("invalid parameter `threads`: must be >= 1")));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .context("configuring the worker pool")
            .map_err(Failure::Run)?;
    }
    let outcome = experiment::run(&cfg)?;
    let csv = outcome.to_csv()?;
    match &cfg.output {
        Some(path) => std::fs::write(path, csv)
            .with_context(|| format!("writing {}", path.display()))
            .map_err(Failure::Io)?,
        None => print!("{csv}"),
    }
    for m in &outcome.messages {
        eprintln!("{m}");
    }
    Ok(outcome.passed)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (kind, args) = match cli.command {
        Command::Decoupling(a) => (Some(ExperimentKind::Decoupling), a),
        Command::PurityScan(a) => (Some(ExperimentKind::PurityScan), a),
        Command::Concentration(a) => (Some(ExperimentKind::Concentration), a),
        Command::Moments(a) => (Some(ExperimentKind::Moments), a),
        Command::Run(a) => (None, a),
    };
    match execute(kind, args) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("statistical check failed");
            ExitCode::from(EXIT_CHECK_FAILED)
        }
        Err(Failure::Config(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_CONFIG)
        }
        Err(Failure::Io(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_IO)
        }
        Err(Failure::Run(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_CHECK_FAILED)
        }
    }
}
