//! `caloric`: run checks and studies on caloric polynomials and write
//! machine-readable artifacts.

mod config;
mod output;
mod studies;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use caloric_core::checks::Fault;
use config::{ExperimentConfig, Format};

#[derive(Parser, Debug)]
#[command(name = "caloric", version, about = "Frequency, strata and neck-region experiments for caloric polynomials")]
struct Cli {
    /// TOML config; written with defaults when the file does not exist.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory (overrides the config).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,
    /// Gauss–Hermite order (0 = degree-exact).
    #[arg(long = "quad-order", global = true)]
    quad_order: Option<usize>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (0 = all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write the default config and exit.
    Init,
    /// H, E, N, D over a scale grid at one base point.
    Frequency,
    /// Best symmetry plane over a range of scales.
    Symmetry,
    /// Effective nodal, effective singular, zero or stratum set on a grid.
    Strata,
    /// Minkowski content over several radii with a dimension fit.
    Minkowski,
    /// Greedy neck decomposition with axiom verification.
    Neck,
    /// Run every invariant suite; exit 1 on any failure.
    Verify {
        /// Restrict to a suite (repeatable).
        #[arg(long)]
        suite: Vec<String>,
        /// Inject a deliberate defect.
        #[arg(long, value_enum)]
        inject: Vec<InjectArg>,
    },
    /// Run one of the canonical studies.
    Study {
        #[arg(value_enum)]
        name: StudyName,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum InjectArg {
    EnergySign,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum StudyName {
    Frequency,
    Minkowski,
    Neck,
    Graph,
}

/// Failure classes mapped to exit codes.
pub enum Failure {
    Assert(String),
    Config(anyhow::Error),
    Run(anyhow::Error),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        match e.downcast_ref::<caloric_core::Error>() {
            Some(
                caloric_core::Error::InvalidArgument(_)
                | caloric_core::Error::DimensionMismatch { .. }
                | caloric_core::Error::Parse(_)
                | caloric_core::Error::NotCaloric { .. },
            ) => Failure::Config(e),
            _ => Failure::Run(e),
        }
    }
}

impl From<caloric_core::Error> for Failure {
    fn from(e: caloric_core::Error) -> Self {
        anyhow::Error::from(e).into()
    }
}

fn resolve_config(cli: &Cli) -> anyhow::Result<(ExperimentConfig, PathBuf)> {
    let (mut cfg, root) = match &cli.config {
        Some(path) if path.exists() => {
            let root = path.parent().map(Path::to_path_buf).unwrap_or_default();
            (ExperimentConfig::load(path)?, root)
        }
        Some(path) => {
            let cfg = ExperimentConfig::default();
            if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(dir)?;
            }
            std::fs::write(path, cfg.to_toml())?;
            eprintln!("wrote default config to {}", path.display());
            (cfg, path.parent().map(Path::to_path_buf).unwrap_or_default())
        }
        None => (ExperimentConfig::default(), PathBuf::from(".")),
    };
    if let Some(out) = &cli.out {
        cfg.out_dir = out.to_string_lossy().into_owned();
    }
    if let Some(f) = cli.format {
        cfg.format = f;
    }
    if let Some(q) = cli.quad_order {
        cfg.quad_order = q;
    }
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(t) = cli.threads {
        cfg.threads = t;
    }
    Ok((cfg, root))
}

fn run(cli: Cli) -> Result<(), Failure> {
    let (cfg, root) = resolve_config(&cli).map_err(Failure::Config)?;
    if cfg.threads > 0 {
        rayon::ThreadPoolBuilder::new().num_threads(cfg.threads).build_global().map_err(|e| Failure::Run(e.into()))?;
    }
    let command = match &cli.command {
        Command::Init => "init",
        Command::Frequency => "frequency",
        Command::Symmetry => "symmetry",
        Command::Strata => "strata",
        Command::Minkowski => "minkowski",
        Command::Neck => "neck",
        Command::Verify { .. } => "verify",
        Command::Study { name } => match name {
            StudyName::Frequency => "study-frequency",
            StudyName::Minkowski => "study-minkowski",
            StudyName::Neck => "study-neck",
            StudyName::Graph => "study-graph",
        },
    };
    let mut ctx = studies::Context::new(cfg, root, command)?;
    ctx.write_config()?;
    match cli.command {
        Command::Init => Ok(()),
        Command::Frequency | Command::Study { name: StudyName::Frequency } => studies::frequency(&mut ctx),
        Command::Symmetry => studies::symmetry(&mut ctx),
        Command::Strata => studies::strata(&mut ctx),
        Command::Minkowski | Command::Study { name: StudyName::Minkowski } => studies::minkowski(&mut ctx),
        Command::Neck | Command::Study { name: StudyName::Neck } => studies::neck(&mut ctx),
        Command::Study { name: StudyName::Graph } => studies::graph(&mut ctx),
        Command::Verify { suite, inject } => {
            let faults = inject.iter().map(|f| match f {
                InjectArg::EnergySign => Fault::EnergySign,
            });
            studies::verify(&mut ctx, suite, faults.collect())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Assert(msg)) => {
            eprintln!("assertion failed: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Config(e)) => {
            eprintln!("config error: {e:#}");
            ExitCode::from(2)
        }
        Err(Failure::Run(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
