use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use heom_qubit::study::{DepthPolicy, Treatment};
use heom_qubit_cli::config::extract_embedded;
use heom_qubit_cli::{parse_with, run_experiment, ConfigError, Overrides, RunKind};

const THREADS_ENV: &str = "HEOM_QUBIT_THREADS";

#[derive(Parser)]
#[command(name = "heom-qubit", version, about = "Qubit dynamics under classical field noise and a Lorentzian bath")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// TOML configuration, or an output file of an earlier run to repeat it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Hierarchy depth: a non-negative integer or `auto`.
    #[arg(long, global = true, value_parser = parse_depth)]
    depth: Option<DepthArg>,

    /// Treatment of the environment; repeat or separate with commas for several.
    #[arg(long, global = true, value_enum, value_delimiter = ',')]
    treatment: Vec<TreatmentArg>,

    /// Seed of the Monte Carlo oracle.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Worker threads for sweeps and Monte Carlo; falls back to HEOM_QUBIT_THREADS.
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Print the normalized configuration and exit.
    #[arg(long, global = true)]
    dry_run: bool,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Reduced density matrix against time.
    Evolve,
    /// Stationary state under each treatment.
    Steady,
    /// Stationary excited population along one parameter axis.
    Sweep,
    /// Steady-state emission spectrum and the correlation behind it.
    Spectrum,
    /// Compare the solver with the exact, Markovian and Monte Carlo oracles.
    Verify,
}

impl Command {
    fn kind(self) -> RunKind {
        match self {
            Command::Evolve => RunKind::Evolve,
            Command::Steady => RunKind::SteadyState,
            Command::Sweep => RunKind::SteadySweep,
            Command::Spectrum => RunKind::Spectrum,
            Command::Verify => RunKind::Verify,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum TreatmentArg {
    Full,
    Rwa,
    Markov,
}

impl From<TreatmentArg> for Treatment {
    fn from(t: TreatmentArg) -> Self {
        match t {
            TreatmentArg::Full => Treatment::Full,
            TreatmentArg::Rwa => Treatment::Rwa,
            TreatmentArg::Markov => Treatment::Markov,
        }
    }
}

#[derive(Clone, Copy)]
enum DepthArg {
    Fixed(usize),
    Auto,
}

fn parse_depth(s: &str) -> Result<DepthArg, String> {
    if s == "auto" {
        return Ok(DepthArg::Auto);
    }
    s.parse().map(DepthArg::Fixed).map_err(|_| format!("expected a non-negative integer or `auto`, got {s:?}"))
}

fn config_failure(e: impl std::fmt::Display) -> ExitCode {
    eprintln!("heom-qubit: configuration error: {e}");
    ExitCode::from(2)
}

fn thread_count(flag: Option<usize>) -> Result<Option<usize>, ConfigError> {
    let n = match flag {
        Some(n) => Some(n),
        None => match std::env::var(THREADS_ENV) {
            Ok(v) => Some(v.trim().parse().map_err(|_| ConfigError::new(THREADS_ENV, format!("not a thread count: {v:?}")))?),
            Err(_) => None,
        },
    };
    if n == Some(0) {
        return Err(ConfigError::new("threads", "must be >= 1"));
    }
    Ok(n)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let threads = match thread_count(cli.threads) {
        Ok(n) => n,
        Err(e) => return config_failure(e),
    };
    let text = match &cli.config {
        Some(path) => match std::fs::read_to_string(path) {
            Ok(t) => extract_embedded(&t),
            Err(e) => return config_failure(format!("cannot read {}: {e}", path.display())),
        },
        None => String::new(),
    };
    let overrides = Overrides {
        kind: Some(cli.command.kind()),
        out: cli.out.clone(),
        depth: cli.depth.map(|d| match d {
            DepthArg::Fixed(l) => DepthPolicy::Fixed(l),
            DepthArg::Auto => DepthPolicy::default(),
        }),
        treatments: (!cli.treatment.is_empty()).then(|| cli.treatment.iter().map(|&t| t.into()).collect()),
        seed: cli.seed,
    };
    let cfg = match parse_with(&text, &overrides) {
        Ok(c) => c,
        Err(e) => {
            let source = cli.config.as_ref().map_or("command line".into(), |p| p.display().to_string());
            return config_failure(format!("{source}: {e}"));
        }
    };
    if cli.dry_run {
        print!("{}", cfg.to_toml());
        return ExitCode::SUCCESS;
    }
    if let Some(n) = threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("heom-qubit: cannot start {n} threads: {e}");
            return ExitCode::from(1);
        }
    }
    match run_experiment(&cfg) {
        Ok(summary) => {
            for line in &summary.report {
                println!("{line}");
            }
            for f in &summary.files {
                println!("wrote {}", f.display());
            }
            if summary.success() {
                ExitCode::SUCCESS
            } else {
                eprintln!("heom-qubit: {} failure(s)", summary.failures.len());
                for f in &summary.failures {
                    eprintln!("  {f}");
                }
                ExitCode::from(1)
            }
        }
        Err(e) => {
            eprintln!("heom-qubit: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
