//! `nwave`: batch noise-wave analyses of the replica-array canceler and of
//! generic multiport systems.

mod analysis;
mod config;
mod error;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};

use crate::config::SystemConfig;
use crate::error::CliError;
use crate::output::{Artifacts, RunInfo};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Analysis {
    Analyze,
    SweepPhase,
    Contour,
    NullSearch,
    MatchSearch,
    MonteCarlo,
    Wideband,
}

impl Analysis {
    fn name(self) -> &'static str {
        match self {
            Analysis::Analyze => "analyze",
            Analysis::SweepPhase => "sweep-phase",
            Analysis::Contour => "contour",
            Analysis::NullSearch => "null-search",
            Analysis::MatchSearch => "match-search",
            Analysis::MonteCarlo => "monte-carlo",
            Analysis::Wideband => "wideband",
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "nwave", version, about = "Noise-wave analysis of multiport receiver systems")]
struct Cli {
    analysis: Analysis,
    /// JSON system and analysis description.
    #[arg(long)]
    config: PathBuf,
    /// Directory for the CSV tables and JSON sidecar.
    #[arg(long)]
    out: PathBuf,
    /// Overrides `monte_carlo.seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; defaults to one per core.
    #[arg(long, env = "NWAVE_THREADS")]
    threads: Option<usize>,
}

fn run(cli: &Cli) -> Result<Vec<PathBuf>, CliError> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::Config("thread count must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Config(format!("thread pool: {e}")))?;
    }
    let loaded = config::load(&cli.config)?;
    let mut cfg = loaded.config;
    if let Some(seed) = cli.seed {
        cfg.monte_carlo.seed = seed;
    }
    let f = cfg.frequency_hz;
    let artifacts: Artifacts = match &cfg.system {
        SystemConfig::Generic(g) => {
            if cli.analysis != Analysis::Analyze {
                return Err(CliError::Config(format!(
                    "{} needs a canceler system; generic systems support analyze only",
                    cli.analysis.name()
                )));
            }
            analysis::analyze_generic(&g.resolve(&loaded.base_dir)?, f)?
        }
        SystemConfig::Canceler(c) => {
            let spec = c.resolve(&loaded.base_dir)?;
            match cli.analysis {
                Analysis::Analyze => analysis::analyze(&spec, f)?,
                Analysis::SweepPhase => analysis::sweep_phase(&spec, f, &cfg.sweep_phase)?,
                Analysis::Contour => analysis::contour(&spec, f, &cfg.contour)?,
                Analysis::NullSearch => analysis::null_search(&spec, f, &cfg.null_search)?,
                Analysis::MatchSearch => analysis::match_search(&spec, f, &cfg.match_search)?,
                Analysis::MonteCarlo => analysis::monte_carlo_run(&spec, f, &cfg.monte_carlo)?,
                Analysis::Wideband => analysis::wideband(&spec, &cfg.wideband)?,
            }
        }
    };
    let info = RunInfo {
        analysis: cli.analysis.name(),
        config_bytes: &loaded.raw,
        frequency_hz: f,
    };
    output::write(&cli.out, &info, &artifacts)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(paths) => {
            for p in paths {
                println!("{}", p.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("nwave: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
