mod commands;
mod config;

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde_json::json;
use thiserror::Error;

use config::{ExperimentConfig, Overrides};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config: {0}")]
    Config(String),
    #[error("{0}")]
    Assumption(String),
    #[error("{0}")]
    Core(#[from] tubewcp::Error),
    #[error("i/o: {0}")]
    Io(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        use tubewcp::Error as E;
        match self {
            CliError::Config(_) => 2,
            CliError::Assumption(_) => 4,
            CliError::Io(_) => 1,
            CliError::Core(e) => match e {
                E::InvalidInput(_) | E::UnknownManifold(_) | E::EpsilonOutOfRange { .. } | E::InsufficientSamples { .. } => 2,
                E::DegenerateMetric { .. }
                | E::DegenerateParametrization { .. }
                | E::SingularCurve { .. }
                | E::VanishingCurvature { .. }
                | E::Reparametrization { .. }
                | E::OutOfChart { .. }
                | E::UnsupportedBase(_)
                | E::EmptySample => 3,
                E::BadExponent { .. }
                | E::NonIntegrable { .. }
                | E::ExponentOutOfRange { .. }
                | E::MeshTooCoarse { .. }
                | E::MissingConstant(_)
                | E::NoAdmissibleEps { .. } => 4,
                E::NotCertified { .. } | E::InvalidTestFunction(_) => 5,
                E::NoConvergence { .. } => 6,
                E::Io(_) => 1,
            },
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "tubewcp", version, about = "Weak comparison experiments on normal tubes")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Experiment configuration (JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Directory for reports and side files.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Recorded in the report; the pipeline itself is deterministic.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Proceed even when assumptions fail.
    #[arg(long, global = true)]
    force: bool,
    /// Print the report on stdout.
    #[arg(long, global = true)]
    json: bool,
    #[arg(long, global = true)]
    manifold: Option<String>,
    #[arg(long, global = true)]
    eps: Option<f64>,
    /// `a:b` per base direction, comma separated.
    #[arg(long, global = true, allow_hyphen_values = true)]
    window: Option<String>,
    /// Base samples per direction.
    #[arg(long, global = true)]
    samples: Option<usize>,
}

#[derive(Debug, Clone, Copy, Subcommand)]
enum Command {
    Metric,
    Rts,
    Reach,
    CheckAssumptions,
    Sobolev,
    Epsilon0,
    Solve,
    VerifyWcp,
    VolumeGrowth,
    IterateLemma,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Metric => "metric",
            Command::Rts => "rts",
            Command::Reach => "reach",
            Command::CheckAssumptions => "check-assumptions",
            Command::Sobolev => "sobolev",
            Command::Epsilon0 => "epsilon0",
            Command::Solve => "solve",
            Command::VerifyWcp => "verify-wcp",
            Command::VolumeGrowth => "volume-growth",
            Command::IterateLemma => "iterate-lemma",
        }
    }
}

fn set_threads() -> Result<(), CliError> {
    if let Ok(v) = std::env::var("TUBEWCP_THREADS") {
        let n: usize = v
            .parse()
            .map_err(|_| CliError::Config(format!("TUBEWCP_THREADS = '{v}' is not a count")))?;
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Config(e.to_string()))?;
    }
    Ok(())
}

/// Write through a temporary file in the same directory, then rename.
fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let io = |e: std::io::Error| CliError::Io(format!("{}: {e}", path.display()));
    let dir = path.parent().unwrap_or(Path::new("."));
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("out");
    let tmp = dir.join(format!(".{name}.{}.tmp", std::process::id()));
    let mut f = std::fs::File::create(&tmp).map_err(io)?;
    f.write_all(bytes).map_err(io)?;
    f.sync_all().map_err(io)?;
    std::fs::rename(&tmp, path).map_err(io)
}

fn run(cli: &Cli) -> Result<u8, CliError> {
    set_threads()?;
    let overrides = Overrides {
        manifold: cli.manifold.clone(),
        eps: cli.eps,
        window: cli.window.clone(),
        samples: cli.samples,
    };
    let cfg = match &cli.config {
        Some(p) => ExperimentConfig::load(p, &overrides)?,
        None => ExperimentConfig::from_overrides(&overrides)?,
    };
    let flags = commands::Flags { force: cli.force };
    let outcome = match cli.command {
        Command::Metric => commands::metric(&cfg),
        Command::Rts => commands::rts(&cfg),
        Command::Reach => commands::reach(&cfg),
        Command::CheckAssumptions => commands::check_assumptions(&cfg),
        Command::Sobolev => commands::sobolev(&cfg),
        Command::Epsilon0 => commands::epsilon0(&cfg),
        Command::Solve => commands::solve_cmd(&cfg),
        Command::VerifyWcp => commands::verify(&cfg, &flags),
        Command::VolumeGrowth => commands::volume_growth(&cfg),
        Command::IterateLemma => commands::iterate_lemma(&cfg),
    }?;
    let name = cli.command.name();
    let report = json!({
        "command": name,
        "schema_version": config::SCHEMA_VERSION,
        "seed": cli.seed,
        "exit_code": outcome.exit,
        "config": cfg,
        "result": outcome.result,
        "metadata": { "version": env!("CARGO_PKG_VERSION") },
    });
    let text = serde_json::to_string_pretty(&report).map_err(|e| CliError::Io(e.to_string()))? + "\n";
    let out = cli.out.clone().or_else(|| cfg.output.dir.as_ref().map(PathBuf::from));
    if let Some(dir) = &out {
        std::fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))?;
        for (file, bytes) in &outcome.files {
            write_atomic(&dir.join(file), bytes)?;
        }
        write_atomic(&dir.join(format!("{name}.json")), text.as_bytes())?;
    }
    if cli.json || out.is_none() {
        print!("{text}");
    }
    Ok(outcome.exit)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("tubewcp {}: {e}", cli.command.name());
            ExitCode::from(e.exit_code())
        }
    }
}
