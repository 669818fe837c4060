use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Subcommand};
use iecc_core::channel::{Protocol, ProtocolKind, ProtocolParams};
use iecc_core::ecc::{build_codebook, Codebook, DistanceReport, EccError, TripleCheck};
use iecc_core::p611::bob_codebook;
use iecc_core::{BitWord, Rational};

use crate::{rational_arg, with_protocol, write_file, AnyProtocol, CliError, EXIT_FAILURES, EXIT_OK};

#[derive(Debug, Subcommand)]
pub enum CodebookCommand {
    /// Build a codebook, either explicitly or as a protocol's Alice code.
    Build(BuildArgs),
    /// Check distances and triple overlaps of a codebook file.
    Verify(VerifyArgs),
    /// Print the words of a codebook file or a built-in word set.
    Show(ShowArgs),
}

#[derive(Debug, Args)]
pub struct BuildArgs {
    /// Build the Alice code of this protocol (`611` or `35`).
    #[arg(long, conflicts_with_all = ["count", "length"])]
    pub protocol: Option<ProtocolKind>,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub m: Option<usize>,
    #[arg(long, required_unless_present = "protocol")]
    pub count: Option<usize>,
    #[arg(long, required_unless_present = "protocol")]
    pub length: Option<usize>,
    /// Protocol epsilon with `--protocol`, code epsilon otherwise.
    #[arg(long, value_parser = rational_arg)]
    pub epsilon: Option<Rational>,
    #[arg(long, value_parser = rational_arg)]
    pub code_epsilon: Option<Rational>,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Keep words away from the all-zeros and all-ones words.
    #[arg(long)]
    pub forbid_constants: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    pub file: PathBuf,
    /// Check every triple regardless of codebook size.
    #[arg(long, conflicts_with = "samples")]
    pub exhaustive: bool,
    /// Sample this many triples instead.
    #[arg(long)]
    pub samples: Option<u64>,
    #[arg(long, default_value_t = 0)]
    pub triple_seed: u64,
}

#[derive(Debug, Args)]
pub struct ShowArgs {
    #[arg(required_unless_present = "builtin")]
    pub file: Option<PathBuf>,
    /// `bob611`: Bob's four 6/11 words.
    #[arg(long, conflicts_with = "file")]
    pub builtin: Option<String>,
    #[arg(long, default_value_t = 64)]
    pub m: usize,
}

pub fn cmd_codebook(cmd: &CodebookCommand, out: &mut dyn Write) -> Result<i32, CliError> {
    match cmd {
        CodebookCommand::Build(a) => build(a, out),
        CodebookCommand::Verify(a) => verify(a, out),
        CodebookCommand::Show(a) => show(a, out),
    }
}

fn construction(e: EccError) -> CliError {
    match e {
        EccError::ConstructionFailed { .. } => CliError::Construction(e.to_string()),
        other => CliError::Config(other.to_string()),
    }
}

fn build(a: &BuildArgs, out: &mut dyn Write) -> Result<i32, CliError> {
    let cb = match a.protocol {
        Some(kind) => {
            let mut params = ProtocolParams::desk_default(kind);
            params.n = a.n.unwrap_or(params.n);
            params.m = a.m.unwrap_or(params.m);
            params.epsilon = a.epsilon.unwrap_or(params.epsilon);
            params.code_epsilon = a.code_epsilon;
            params.code_seed = a.seed;
            let protocol = AnyProtocol::build(params)?;
            with_protocol!(&protocol, p => p.alice_codebook().clone())
        }
        None => {
            let (count, length) = (a.count.unwrap_or(0), a.length.unwrap_or(0));
            let epsilon = a.code_epsilon.or(a.epsilon).unwrap_or(Rational::new(1, 8));
            let forbidden = if a.forbid_constants {
                vec![BitWord::zeros(length), BitWord::ones(length)]
            } else {
                Vec::new()
            };
            build_codebook(count, length, epsilon, forbidden, a.seed).map_err(construction)?
        }
    };
    let text = cb.to_text();
    match &a.out {
        Some(path) => {
            write_file(path, &text)?;
            writeln!(out, "wrote {} words of length {} to {}", cb.len(), cb.length(), path.display())?;
        }
        None => write!(out, "{text}")?,
    }
    Ok(EXIT_OK)
}

fn load(path: &PathBuf) -> Result<Codebook, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    Codebook::from_text(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

pub fn report_lines(r: &DistanceReport) -> String {
    format!(
        "min_pairwise={}\nmin_forbidden={}\nrequired_distance={}\nmax_triple_overlap={}\noverlap_bound={}\nexhaustive={}\ntriples_checked={}\ncertified={}\n",
        r.min_pairwise,
        r.min_forbidden,
        r.required_distance,
        r.max_triple_overlap,
        r.overlap_bound,
        r.exhaustive,
        r.triples_checked,
        r.certified
    )
}

fn verify(a: &VerifyArgs, out: &mut dyn Write) -> Result<i32, CliError> {
    let cb = load(&a.file)?;
    let mode = match (a.exhaustive, a.samples) {
        (true, _) => TripleCheck::Exhaustive,
        (false, Some(samples)) => TripleCheck::Sampled { samples, seed: a.triple_seed },
        (false, None) => TripleCheck::Auto,
    };
    let r = cb.verify_distance(mode);
    writeln!(out, "count={} length={} epsilon={}", cb.len(), cb.length(), cb.epsilon())?;
    write!(out, "{}", report_lines(&r))?;
    Ok(if r.certified { EXIT_OK } else { EXIT_FAILURES })
}

fn show(a: &ShowArgs, out: &mut dyn Write) -> Result<i32, CliError> {
    let cb = match (&a.file, a.builtin.as_deref()) {
        (Some(path), _) => load(path)?,
        (None, Some("bob611")) => {
            if a.m == 0 || !a.m.is_multiple_of(8) {
                return Err(CliError::Config(format!("--m must be a positive multiple of 8, got {}", a.m)));
            }
            bob_codebook(a.m)
        }
        (None, Some(other)) => return Err(CliError::Config(format!("unknown built-in set {other:?}"))),
        (None, None) => return Err(CliError::Config("give a file or --builtin".into())),
    };
    for (k, w) in cb.words().iter().enumerate() {
        writeln!(out, "{k} {w}")?;
    }
    for w in cb.forbidden() {
        writeln!(out, "forbidden {w}")?;
    }
    Ok(EXIT_OK)
}
