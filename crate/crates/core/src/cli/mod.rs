//! The `glass` command line: `run`, `verify`, `oracle` and `conformance`.
//!
//! Exit codes: 0 success, 2 configuration error, 3 oracle failure,
//! 4 internal or output error, 5 verification or conformance mismatch,
//! 130 interrupted.

pub mod config;
pub mod manifest;
pub mod run;

use std::io::{BufReader, Write};
use std::net::TcpListener;
use std::path::PathBuf;
use std::sync::atomic::AtomicBool;
use std::sync::Arc;
use std::time::Duration;

use clap::{Parser, Subcommand};
use thiserror::Error;
use tracing::{info, warn};

use crate::oracle::corpus::{generate_corpus, read_handshake, run_conformance};
use crate::oracle::{serve, LineTransport, Oracle, OracleError, SyntheticBenchmarkOracle, SyntheticLinearOracle};
use config::{Benchmark, RunConfig, RunFlags};
use manifest::{RunManifest, RunStatus};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_ORACLE: i32 = 3;
pub const EXIT_INTERNAL: i32 = 4;
pub const EXIT_MISMATCH: i32 = 5;
pub const EXIT_INTERRUPTED: i32 = 130;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error("{0}")]
    Evaluation(String),
    #[error("output error: {0}")]
    Io(String),
    #[error("internal error: {0}")]
    Internal(String),
    #[error("mismatch: {0}")]
    Mismatch(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Oracle(_) | CliError::Evaluation(_) => EXIT_ORACLE,
            CliError::Io(_) | CliError::Internal(_) => EXIT_INTERNAL,
            CliError::Mismatch(_) => EXIT_MISMATCH,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "glass", version, about = "Evolutionary search over generator latent spaces")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Search for latents matching a target and write a run manifest.
    Run(RunFlags),
    /// Replay a manifest's run and check it reproduces bit for bit.
    Verify {
        manifest: PathBuf,
    },
    /// Serve a built-in synthetic oracle over stdin/stdout (or TCP).
    Oracle(OracleArgs),
    /// Replay the protocol conformance corpus against an oracle.
    Conformance(ConformanceArgs),
}

#[derive(Debug, Clone, clap::Args)]
pub struct OracleArgs {
    #[arg(long, value_enum)]
    pub benchmark: Benchmark,
    #[arg(long)]
    pub dim: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub matrix_seed: u64,
    #[arg(long, default_value_t = SyntheticLinearOracle::DEFAULT_EMBEDDING_DIM)]
    pub embedding_dim: usize,
    /// Do not report discriminator probabilities (linear benchmark).
    #[arg(long)]
    pub no_discriminator: bool,
    /// Accept TCP connections on this address, one at a time.
    #[arg(long)]
    pub listen: Option<String>,
}

#[derive(Debug, Clone, clap::Args)]
pub struct ConformanceArgs {
    #[command(flatten)]
    pub run: RunFlags,
    /// Also write the corpus (one case per line) to this file.
    #[arg(long)]
    pub write_corpus: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub corpus_seed: u64,
    /// Check against a built-in benchmark's space (sized by --dim).
    #[arg(long, value_enum, conflicts_with_all = ["preset", "benchmark"])]
    pub benchmark_space: Option<Benchmark>,
}

/// Routes `GLASS_LOG_LEVEL` (an env-filter directive, default `info`) to stderr.
pub fn init_logging() {
    let filter = tracing_subscriber::EnvFilter::try_from_env("GLASS_LOG_LEVEL")
        .unwrap_or_else(|_| tracing_subscriber::EnvFilter::new("info"));
    let _ = tracing_subscriber::fmt().with_env_filter(filter).with_writer(std::io::stderr).try_init();
}

/// Runs a parsed command line and returns the process exit code.
pub fn dispatch(cli: Cli, abort: Arc<AtomicBool>) -> i32 {
    let result = match cli.command {
        Command::Run(flags) => cmd_run(&flags, &abort),
        Command::Verify { manifest } => cmd_verify(&manifest),
        Command::Oracle(args) => cmd_oracle(&args).map(|()| EXIT_OK),
        Command::Conformance(args) => cmd_conformance(&args),
    };
    result.unwrap_or_else(|e| {
        eprintln!("glass: {e}");
        e.exit_code()
    })
}

fn cmd_run(flags: &RunFlags, abort: &AtomicBool) -> Result<i32, CliError> {
    let config = RunConfig::from_flags(flags)?;
    let outcome = run::execute_run(&config, abort)?;
    let m = &outcome.manifest;
    let best = m.best.as_ref().map(|b| b.objectives.clone()).unwrap_or_default();
    println!(
        "{}: {} generations, {} evaluations, front of {}, best {:?}; manifest in {}",
        match m.status {
            RunStatus::Complete => "complete",
            RunStatus::Interrupted => "interrupted",
            RunStatus::Failed => "failed",
        },
        m.history.len().saturating_sub(1),
        m.evaluations,
        m.front.len(),
        best,
        outcome.out_dir.display()
    );
    Ok(if m.status == RunStatus::Interrupted { EXIT_INTERRUPTED } else { EXIT_OK })
}

fn cmd_verify(path: &std::path::Path) -> Result<i32, CliError> {
    let manifest = RunManifest::load(path)?;
    let report = run::verify_manifest(&manifest)?;
    println!("{}", serde_json::to_string(&report).map_err(|e| CliError::Internal(e.to_string()))?);
    if report.ok {
        Ok(EXIT_OK)
    } else {
        Err(CliError::Mismatch(match report.diverged_at {
            Some(g) => format!("diverged at generation {g}: {}", report.detail),
            None => report.detail,
        }))
    }
}

fn builtin_oracle(args: &OracleArgs) -> Result<Box<dyn Oracle>, CliError> {
    let space = args.benchmark.default_space(args.dim.unwrap_or(args.benchmark.default_dim()));
    let oracle: Box<dyn Oracle> = match args.benchmark.landscape() {
        Some(landscape) => Box::new(SyntheticBenchmarkOracle::new(landscape, &space)?),
        None => Box::new(SyntheticLinearOracle::new(
            &space,
            args.matrix_seed,
            args.embedding_dim,
            !args.no_discriminator,
        )?),
    };
    Ok(oracle)
}

fn cmd_oracle(args: &OracleArgs) -> Result<(), CliError> {
    let mut oracle = builtin_oracle(args).map_err(|e| match e {
        CliError::Oracle(e) => CliError::Config(e.to_string()),
        other => other,
    })?;
    let Some(addr) = &args.listen else {
        let stdin = std::io::stdin().lock();
        let stdout = std::io::stdout().lock();
        return Ok(serve(&mut oracle, stdin, stdout)?);
    };
    let listener = TcpListener::bind(addr).map_err(|e| CliError::Config(format!("cannot listen on {addr}: {e}")))?;
    info!(addr = %listener.local_addr().map_err(|e| CliError::Io(e.to_string()))?, "oracle listening");
    for stream in listener.incoming() {
        let stream = stream.map_err(|e| CliError::Io(e.to_string()))?;
        let _ = stream.set_nodelay(true);
        let reader = BufReader::new(stream.try_clone().map_err(|e| CliError::Io(e.to_string()))?);
        if let Err(e) = serve(&mut oracle, reader, stream) {
            warn!(error = %e, "connection ended with an error");
        }
    }
    Ok(())
}

fn cmd_conformance(args: &ConformanceArgs) -> Result<i32, CliError> {
    let mut config = RunConfig::from_flags(&args.run)?;
    if let Some(b) = args.benchmark_space {
        config.preset = None;
        config.space = Some(b.default_space(config.oracle.dim.unwrap_or(b.default_dim())));
    }
    if config.oracle.command.is_none() && config.oracle.address.is_none() {
        return Err(CliError::Config("conformance needs --oracle-cmd or --oracle-addr".into()));
    }
    // the corpus carries its own target
    config.objectives.target.get_or_insert_with(|| crate::oracle::TargetRequest::text("unused"));
    config.validate()?;
    let space = config.resolve_space()?;
    let timeout = Duration::from_secs(config.oracle.timeout_secs);
    let mut transport = match (&config.oracle.command, &config.oracle.address) {
        (Some(cmd), _) => LineTransport::spawn(cmd)?,
        (None, Some(addr)) => LineTransport::connect(addr)?,
        (None, None) => unreachable!("checked above"),
    };
    let handshake = read_handshake(&mut transport, timeout)?;
    handshake.validate(&space.fingerprint())?;
    let corpus = generate_corpus(&space, &handshake, args.corpus_seed);
    if let Some(path) = &args.write_corpus {
        let mut text = String::new();
        for case in &corpus {
            text.push_str(&serde_json::to_string(case).map_err(|e| CliError::Internal(e.to_string()))?);
            text.push('\n');
        }
        std::fs::write(path, text).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    }
    let report = run_conformance(&mut transport, &handshake, &corpus, timeout)?;
    let mut out = std::io::stdout().lock();
    for case in &report.cases {
        let verdict = if case.passed { "PASS" } else { "FAIL" };
        let _ = writeln!(out, "{verdict} {} {}", case.name, case.detail);
    }
    if report.passed() {
        Ok(EXIT_OK)
    } else {
        let failed = report.cases.iter().filter(|c| !c.passed).count();
        Err(CliError::Mismatch(format!("{failed} of {} conformance cases failed", report.cases.len())))
    }
}
