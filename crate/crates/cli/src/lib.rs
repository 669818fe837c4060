//! Batch harness over `iecc-core`: runs, sweeps, attack generators and
//! codebook tools. [`execute`] is the whole CLI; `main` only wires stdio.

use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use iecc_core::channel::{ProtocolKind, ProtocolParams, SetupError};
use iecc_core::ecc::EccError;
use iecc_core::p35::Protocol35;
use iecc_core::p611::Protocol611;
use iecc_core::rational::parse_rational;
use iecc_core::Rational;

pub mod attack;
pub mod codebook;
pub mod config;
pub mod run;
pub mod sweep;

pub use sweep::{SummaryRow, CSV_HEADER};

/// Exit statuses.
pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURES: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_GENERATOR: i32 = 3;
pub const EXIT_CONSTRUCTION: i32 = 4;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("generator error: {0}")]
    Generator(String),
    #[error("codebook construction failed: {0}")]
    Construction(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Io(_) => EXIT_CONFIG,
            CliError::Generator(_) => EXIT_GENERATOR,
            CliError::Construction(_) => EXIT_CONSTRUCTION,
        }
    }
}

impl From<SetupError> for CliError {
    fn from(e: SetupError) -> Self {
        match e {
            SetupError::Code(e @ EccError::ConstructionFailed { .. }) => CliError::Construction(e.to_string()),
            other => CliError::Config(other.to_string()),
        }
    }
}

pub fn rational_arg(s: &str) -> Result<Rational, String> {
    parse_rational(s).map_err(|e| e.to_string())
}

#[derive(Debug, Parser)]
#[command(name = "iecc", version, about = "Interactive ECC lab over adversarial erasure channels")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run sessions and print one verdict per input.
    Run(run::RunArgs),
    /// Sweep a budget grid and emit a CSV summary.
    Sweep(sweep::SweepArgs),
    /// Generate and verify attacks.
    #[command(subcommand)]
    Attack(attack::AttackCommand),
    /// Build, verify and print codebooks.
    #[command(subcommand)]
    Codebook(codebook::CodebookCommand),
}

/// Protocol selection; missing values fall back to the desk defaults.
#[derive(Debug, Clone, Args)]
pub struct ProtocolArgs {
    /// `611` or `35`.
    #[arg(long)]
    pub protocol: ProtocolKind,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long, value_parser = rational_arg)]
    pub epsilon: Option<Rational>,
    #[arg(long)]
    pub m: Option<usize>,
    #[arg(long, value_parser = rational_arg)]
    pub code_epsilon: Option<Rational>,
    #[arg(long)]
    pub code_seed: Option<u64>,
}

impl ProtocolArgs {
    pub fn params(&self) -> ProtocolParams {
        let mut p = ProtocolParams::desk_default(self.protocol);
        if let Some(n) = self.n {
            p.n = n;
        }
        if let Some(e) = self.epsilon {
            p.epsilon = e;
        }
        if let Some(m) = self.m {
            p.m = m;
        }
        p.code_epsilon = self.code_epsilon;
        if let Some(s) = self.code_seed {
            p.code_seed = s;
        }
        p
    }
}

pub enum AnyProtocol {
    P611(Protocol611),
    P35(Protocol35),
}

impl AnyProtocol {
    pub fn build(params: ProtocolParams) -> Result<Self, CliError> {
        Ok(match params.protocol {
            ProtocolKind::P611 => AnyProtocol::P611(Protocol611::new(params)?),
            ProtocolKind::P35 => AnyProtocol::P35(Protocol35::new(params)?),
        })
    }
}

/// Evaluates `$body` with `$p` bound to the concrete protocol.
#[macro_export]
macro_rules! with_protocol {
    ($any:expr, $p:ident => $body:expr) => {
        match $any {
            $crate::AnyProtocol::P611($p) => $body,
            $crate::AnyProtocol::P35($p) => $body,
        }
    };
}

/// Parses `args` (including the program name), runs the command and returns
/// the exit status. Normal output goes to `out`, diagnostics to stderr.
pub fn execute(args: Vec<String>, out: &mut dyn Write) -> i32 {
    let args = match config::merge_config(args) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("{e}");
            return e.exit_code();
        }
    };
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = e.exit_code();
            if code == 0 {
                let _ = write!(out, "{e}");
            } else {
                eprintln!("{e}");
            }
            return code;
        }
    };
    let result = match cli.command {
        Command::Run(a) => run::cmd_run(&a, out),
        Command::Sweep(a) => sweep::cmd_sweep(&a, out),
        Command::Attack(a) => attack::cmd_attack(&a, out),
        Command::Codebook(a) => codebook::cmd_codebook(&a, out),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("{e}");
            e.exit_code()
        }
    }
}

/// Writes `text` to `path`, creating parent directories.
pub fn write_file(path: &PathBuf, text: &str) -> Result<(), CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    std::fs::write(path, text)?;
    Ok(())
}

/// Derives independent per-job seeds from one user seed.
pub fn derive_seed(seed: u64, parts: &[u64]) -> u64 {
    let mut h = seed ^ 0x9E37_79B9_7F4A_7C15;
    for &p in parts {
        h = (h ^ p).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        h ^= h >> 31;
    }
    h
}
