use bibasket_cli::commands::{self, CliError};
use bibasket_cli::config::{parse_config, ConfigError, RunConfig};
use clap::{Args, Parser, Subcommand};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

/// Bivariate EXNEX models for randomised basket trials.
#[derive(Parser)]
#[command(name = "bibasket", version)]
struct Cli {
    #[command(subcommand)]
    mode: Mode,
}

#[derive(Subcommand)]
enum Mode {
    /// Fit models to one dataset (ingested or generated).
    Fit(Common),
    /// Simulate operating characteristics.
    Oc(Common),
    /// Calibrate decision thresholds on a null scenario.
    Calibrate(Common),
    /// Tabulate scenarios and their implied arm quantities.
    Scenarios(Common),
}

#[derive(Args)]
struct Common {
    /// TOML run configuration; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Simulation replicates per scenario.
    #[arg(long)]
    reps: Option<usize>,
    /// Worker threads (overrides BIBASKET_THREADS).
    #[arg(long)]
    threads: Option<usize>,
    /// Write SVG bar charts next to the OC tables.
    #[arg(long)]
    emit_plots: bool,
}

fn load(c: &Common) -> Result<RunConfig, CliError> {
    let mut cfg = match &c.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|source| CliError::Io { path: path.clone(), source })?;
            parse_config(&text).map_err(|e| match e {
                ConfigError::Syntax(m) => ConfigError::Syntax(format!("{}: {m}", path.display())),
                other => other,
            })?
        }
        None => RunConfig::default(),
    };
    if c.seed.is_some() {
        cfg.seed = c.seed;
    }
    if c.reps.is_some() {
        cfg.n_reps = c.reps;
    }
    if c.out.is_some() {
        cfg.out = c.out.clone();
    }
    if c.emit_plots {
        cfg.emit_plots = Some(true);
    }
    cfg.validate()?;
    Ok(cfg)
}

fn thread_count(flag: Option<usize>) -> Result<Option<usize>, ConfigError> {
    if flag.is_some() {
        return Ok(flag);
    }
    match std::env::var("BIBASKET_THREADS") {
        Ok(v) => v.trim().parse().map(Some).map_err(|_| ConfigError::Field {
            field: "BIBASKET_THREADS".into(),
            message: format!("'{v}' is not a thread count"),
        }),
        Err(_) => Ok(None),
    }
}

type Command = fn(&RunConfig, &Path) -> Result<Vec<PathBuf>, CliError>;

fn run(cli: Cli) -> Result<Vec<PathBuf>, CliError> {
    let (common, cmd): (&Common, Command) = match &cli.mode {
        Mode::Fit(c) => (c, commands::fit),
        Mode::Oc(c) => (c, commands::oc),
        Mode::Calibrate(c) => (c, commands::calibrate),
        Mode::Scenarios(c) => (c, commands::scenarios),
    };
    let cfg = load(common)?;
    if let Some(n) = thread_count(common.threads)? {
        if n == 0 {
            return Err(ConfigError::Field { field: "threads".into(), message: "must be at least 1".into() }.into());
        }
        // Fails only if a pool already exists, which cannot happen here.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    let out = cfg.out.clone().unwrap_or_else(|| PathBuf::from("bibasket-out"));
    cmd(&cfg, &out)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(paths) => {
            for p in paths {
                println!("{}", p.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
