mod complete;
mod factor;
mod gen;
mod study;
mod track;

use std::fmt;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use toucan::{CgdConfig, Error};

#[derive(Debug, Parser)]
#[command(name = "toucan", version, about = "Streaming low-tubal-rank tensor completion")]
pub struct Cli {
    #[command(flatten)]
    pub common: Common,
    #[command(subcommand)]
    pub cmd: Command,
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// Seed for every random draw.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Directory receiving all outputs (created if missing).
    #[arg(long, global = true, default_value = ".")]
    pub out_dir: PathBuf,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a low-rank tensor and observation masks.
    Gen(gen::GenArgs),
    /// Complete a partially observed tensor.
    Complete(complete::CompleteArgs),
    /// Track a free submodule that changes over time.
    Track(track::TrackArgs),
    /// Conjugate-gradient iteration counts across sampling rates.
    CgdStudy(study::StudyArgs),
    /// t-SVD of a tensor file.
    Tsvd(factor::TsvdArgs),
}

#[derive(Debug, Clone, Args)]
pub struct CgdArgs {
    /// Relative residual at which CG stops.
    #[arg(long, default_value_t = 1e-9, value_parser = positive)]
    pub tol: f64,
    #[arg(long, default_value_t = 300, value_parser = clap::value_parser!(u64).range(1..))]
    pub max_iters: u64,
}

impl CgdArgs {
    pub fn config(&self) -> CgdConfig {
        CgdConfig {
            tol: self.tol,
            max_iters: self.max_iters as usize,
        }
    }
}

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Run(Error),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            Self::Usage(_) => 2,
            Self::Run(_) => 1,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Usage(m) => write!(f, "{m}"),
            Self::Run(e) => write!(f, "{e}"),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::InvalidArgument(_) | Error::RankOutOfRange { .. } | Error::MaskKind { .. } => {
                Self::Usage(e.to_string())
            }
            other => Self::Run(other),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        Self::Run(e.into())
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

pub fn rate(s: &str) -> std::result::Result<f64, String> {
    let r: f64 = s.parse().map_err(|e| format!("{e}"))?;
    if r > 0.0 && r <= 1.0 {
        Ok(r)
    } else {
        Err(format!("sampling rate must lie in (0, 1], got {r}"))
    }
}

pub fn positive(s: &str) -> std::result::Result<f64, String> {
    let x: f64 = s.parse().map_err(|e| format!("{e}"))?;
    if x > 0.0 && x.is_finite() {
        Ok(x)
    } else {
        Err(format!("expected a positive number, got {x}"))
    }
}

pub fn run(cli: Cli) -> CliResult<()> {
    if let Some(t) = cli.common.threads {
        if t == 0 {
            return Err(CliError::Usage("--threads must be at least 1".into()));
        }
        toucan::par::init_global_pool(t)?;
    }
    std::fs::create_dir_all(&cli.common.out_dir)?;
    match cli.cmd {
        Command::Gen(a) => gen::run(&cli.common, a),
        Command::Complete(a) => complete::run(&cli.common, a),
        Command::Track(a) => track::run(&cli.common, a),
        Command::CgdStudy(a) => study::run(&cli.common, a),
        Command::Tsvd(a) => factor::run(&cli.common, a),
    }
}

pub fn create(dir: &Path, name: &str) -> CliResult<BufWriter<File>> {
    Ok(BufWriter::new(File::create(dir.join(name))?))
}

pub fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T) -> CliResult<()> {
    let mut w = create(dir, name)?;
    serde_json::to_writer_pretty(&mut w, value).map_err(|e| CliError::Run(Error::Format(e.to_string())))?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

/// Empty for `None`, scientific notation otherwise.
pub fn opt(x: Option<f64>) -> String {
    x.map(|v| format!("{v:e}")).unwrap_or_default()
}
