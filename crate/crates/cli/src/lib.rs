//! Command-line front end.
//!
//! Every subcommand reads one JSON config, writes one or more CSV files and a
//! `<stem>.meta.json` sidecar next to the main output. Exit codes: 0 on
//! success, 1 on domain errors, 2 on usage or configuration errors.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod config;

use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand};
use serde_json::json;
use thiserror::Error;

pub use config::RunConfig;

/// Environment variable consulted when neither `--threads` nor the config
/// sets a thread count.
pub const THREADS_ENV: &str = "KITAEV_THREADS";

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("config error: {0}")]
    Config(String),
    #[error(transparent)]
    Domain(#[from] kitaev_core::Error),
    /// A check the command performs did not pass.
    #[error("{0}")]
    Failed(String),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        use kitaev_core::Error as E;
        match self {
            CliError::Usage(_) | CliError::Config(_) | CliError::Io { .. } => 2,
            CliError::Domain(E::InvalidParameter { .. } | E::LengthMismatch { .. }) => 2,
            CliError::Domain(_) | CliError::Failed(_) => 1,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "kitaev", version, about = "Bosonic Kitaev chain simulations")]
struct Cli {
    /// Worker threads (else config `threads`, then $KITAEV_THREADS, then all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct IoArgs {
    /// JSON run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Main CSV output (default: config `output`, then `<command>.csv`).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Eigenvalues of a chain or of the coupled generator.
    Spectrum(IoArgs),
    /// Time evolution of a Gaussian packet, optionally against the continuum.
    Evolve(IoArgs),
    /// Kernel vectors of an odd chain.
    StableMode(IoArgs),
    /// Tree evolution reduced to layers and compared with its chain.
    TreeCheck(IoArgs),
    /// Curved-space operator and its band-edge match with the lattice.
    CurvedOp(IoArgs),
    /// Perturbative gap over an (L, mu) grid.
    GapScan(IoArgs),
    /// Concurrent sweep of a target routine over (L, Delta, mu).
    Sweep(IoArgs),
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Spectrum(_) => "spectrum",
            Command::Evolve(_) => "evolve",
            Command::StableMode(_) => "stable-mode",
            Command::TreeCheck(_) => "tree-check",
            Command::CurvedOp(_) => "curved-op",
            Command::GapScan(_) => "gap-scan",
            Command::Sweep(_) => "sweep",
        }
    }

    fn io(&self) -> &IoArgs {
        match self {
            Command::Spectrum(a)
            | Command::Evolve(a)
            | Command::StableMode(a)
            | Command::TreeCheck(a)
            | Command::CurvedOp(a)
            | Command::GapScan(a)
            | Command::Sweep(a) => a,
        }
    }
}

/// Files and sidecar results produced by one subcommand.
#[derive(Debug)]
pub struct Report {
    pub files: Vec<(PathBuf, Vec<u8>)>,
    pub results: serde_json::Value,
    /// Exit code when the command ran but its outcome is a failure (all sweep
    /// points failed, say); outputs are still kept.
    pub status: i32,
}

/// `<dir>/<stem><suffix>` next to `main`.
pub fn sibling(main: &Path, suffix: &str) -> PathBuf {
    let stem = main.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    main.with_file_name(format!("{stem}{suffix}"))
}

pub fn resolve_threads(flag: Option<usize>, config: Option<usize>) -> Result<usize, CliError> {
    let from_env = || -> Result<Option<usize>, CliError> {
        match std::env::var(THREADS_ENV) {
            Ok(v) if !v.trim().is_empty() => v
                .trim()
                .parse()
                .map(Some)
                .map_err(|_| CliError::Config(format!("{THREADS_ENV}={v:?} is not a thread count"))),
            _ => Ok(None),
        }
    };
    let n = match flag.or(config) {
        Some(n) => n,
        None => match from_env()? {
            Some(n) => n,
            None => std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1),
        },
    };
    if n == 0 {
        return Err(CliError::Config("threads must be >= 1".into()));
    }
    Ok(n)
}

fn write_all(files: &[(PathBuf, Vec<u8>)]) -> Result<(), CliError> {
    let mut written: Vec<&Path> = Vec::new();
    for (path, bytes) in files {
        if let Err(source) = std::fs::write(path, bytes) {
            for p in written {
                let _ = std::fs::remove_file(p);
            }
            return Err(CliError::Io {
                path: path.clone(),
                source,
            });
        }
        written.push(path);
    }
    Ok(())
}

fn check_writable(path: &Path) -> Result<(), CliError> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    if !dir.is_dir() {
        return Err(CliError::Config(format!("output directory {} does not exist", dir.display())));
    }
    Ok(())
}

fn execute(cli: Cli) -> Result<i32, CliError> {
    let start = Instant::now();
    let name = cli.command.name();
    let io = cli.command.io();
    let cfg = RunConfig::load(&io.config)?;
    if let Some(c) = &cfg.command {
        if c != name {
            return Err(CliError::Config(format!("config is for `{c}`, not `{name}`")));
        }
    }
    let out = io
        .out
        .clone()
        .or_else(|| cfg.output.clone())
        .unwrap_or_else(|| PathBuf::from(format!("{name}.csv")));
    check_writable(&out)?;
    let threads = resolve_threads(cli.threads, cfg.threads)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| CliError::Config(format!("cannot start {threads} worker threads: {e}")))?;

    let report = pool.install(|| match &cli.command {
        Command::Spectrum(_) => commands::spectrum(&cfg, &out),
        Command::Evolve(_) => commands::evolve(&cfg, &out),
        Command::StableMode(_) => commands::stable_mode(&cfg, &out),
        Command::TreeCheck(_) => commands::tree_check(&cfg, &out),
        Command::CurvedOp(_) => commands::curved_op(&cfg, &out),
        Command::GapScan(_) => commands::gap_scan(&cfg, &out),
        Command::Sweep(_) => commands::sweep(&cfg, &out),
    })?;

    let meta_path = sibling(&out, ".meta.json");
    let timestamp = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
    let meta = json!({
        "command": name,
        "config": serde_json::to_value(&cfg).expect("config serializes"),
        "config_path": io.config.display().to_string(),
        "versions": {
            "kitaev-cli": env!("CARGO_PKG_VERSION"),
            "kitaev-core": kitaev_core::VERSION,
        },
        "threads": threads,
        "wall_time_seconds": start.elapsed().as_secs_f64(),
        "timestamp_unix": timestamp,
        "outputs": report.files.iter().map(|(p, _)| p.display().to_string()).collect::<Vec<_>>(),
        "exit_code": report.status,
        "results": report.results,
    });
    let mut files = report.files;
    let mut text = serde_json::to_vec_pretty(&meta).expect("metadata serializes");
    text.push(b'\n');
    files.push((meta_path, text));
    write_all(&files)?;
    Ok(report.status)
}

/// Parses `argv` (including the program name) and runs the subcommand.
/// Returns the process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => 0,
                _ => 2,
            };
        }
    };
    match execute(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
