use std::io::Write;
use std::path::{Path, PathBuf};

use clap::Args;
use iecc_core::adversaries::{
    apply_chunk_actions, parse_actions, strategy_random, AttackPlan, ChunkAction, EraseAll,
};
use iecc_core::channel::{run_session, trace_to_jsonl, NullAdversary, Protocol, SessionOptions, SessionResult};
use iecc_core::{BitWord, Rational};
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde_json::json;

use crate::{rational_arg, with_protocol, write_file, AnyProtocol, CliError, ProtocolArgs, EXIT_FAILURES, EXIT_OK};

/// Environment variable naming a default trace directory.
pub const TRACE_DIR_ENV: &str = "IECC_TRACE_DIR";

#[derive(Debug, Clone, Args)]
pub struct RunArgs {
    #[command(flatten)]
    pub protocol: ProtocolArgs,
    /// null, random, erase-all, actions or plan.
    #[arg(long, default_value = "null")]
    pub adversary: String,
    /// Erasure budget for `random`, as a fraction of all rounds.
    #[arg(long, value_parser = rational_arg, default_value = "0")]
    pub budget: Rational,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Action letters (p c a b x), one per chunk, for `actions`.
    #[arg(long, default_value = "")]
    pub actions: String,
    /// Decoy input for `actions`; defaults to the next input in binary order.
    #[arg(long)]
    pub decoy: Option<BitWord>,
    /// Attack plan file (JSONL) for `plan`.
    #[arg(long)]
    pub plan: Option<PathBuf>,
    /// Single input; overrides `--inputs`.
    #[arg(long)]
    pub x: Option<BitWord>,
    /// `all` or `sampled:K`.
    #[arg(long, default_value = "all")]
    pub inputs: String,
    /// Trace file; with several inputs the input is appended to the stem.
    #[arg(long)]
    pub trace: Option<PathBuf>,
    /// JSONL file with one summary record per run.
    #[arg(long)]
    pub summary: Option<PathBuf>,
}

#[derive(Debug, Clone)]
pub enum AdversarySpec {
    Null,
    Random { budget: Rational, seed: u64 },
    EraseAll,
    Actions { actions: Vec<ChunkAction>, decoy: Option<BitWord> },
    Plan(AttackPlan),
}

impl AdversarySpec {
    pub fn from_args(a: &RunArgs) -> Result<Self, CliError> {
        Ok(match a.adversary.as_str() {
            "null" => AdversarySpec::Null,
            "random" => AdversarySpec::Random { budget: a.budget, seed: a.seed },
            "erase-all" => AdversarySpec::EraseAll,
            "actions" => AdversarySpec::Actions {
                actions: parse_actions(&a.actions).map_err(|e| CliError::Config(e.to_string()))?,
                decoy: a.decoy.clone(),
            },
            "plan" => {
                let path = a.plan.as_ref().ok_or_else(|| CliError::Config("--adversary plan needs --plan".into()))?;
                let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
                AdversarySpec::Plan(AttackPlan::from_jsonl(&text).map_err(|e| CliError::Config(e.to_string()))?)
            }
            other => return Err(CliError::Config(format!("unknown adversary {other:?}"))),
        })
    }
}

/// Inputs to run: a single `x`, all of length `n`, or `K` sampled with `seed`.
pub fn select_inputs(mode: &str, x: Option<&BitWord>, n: usize, seed: u64) -> Result<Vec<BitWord>, CliError> {
    if let Some(x) = x {
        if x.len() != n {
            return Err(CliError::Config(format!("--x has length {}, expected {n}", x.len())));
        }
        return Ok(vec![x.clone()]);
    }
    let total = 1usize << n;
    if mode == "all" {
        return Ok((0..total).map(|v| BitWord::from_index(v, n)).collect());
    }
    let k: usize = mode
        .strip_prefix("sampled:")
        .and_then(|k| k.parse().ok())
        .ok_or_else(|| CliError::Config(format!("--inputs must be all or sampled:K, got {mode:?}")))?;
    if k == 0 || k > total {
        return Err(CliError::Config(format!("cannot sample {k} of {total} inputs")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picked = sample(&mut rng, total, k).into_vec();
    picked.sort_unstable();
    Ok(picked.into_iter().map(|v| BitWord::from_index(v, n)).collect())
}

/// Runs one session of `p` on `x`. `run_index` offsets the random seed so
/// that each input of a batch sees its own pattern.
pub fn run_one<P: Protocol>(
    p: &P,
    x: &BitWord,
    spec: &AdversarySpec,
    run_index: u64,
    opts: SessionOptions,
) -> Result<SessionResult, CliError> {
    let n = p.params().n;
    let r = match spec {
        AdversarySpec::Null => run_session(p, x, &mut NullAdversary, opts),
        AdversarySpec::Random { budget, seed } => {
            run_session(p, x, &mut strategy_random(*budget, seed.wrapping_add(run_index)), opts)
        }
        AdversarySpec::EraseAll => run_session(p, x, &mut EraseAll, opts),
        AdversarySpec::Actions { actions, decoy } => {
            let decoy = decoy.clone().unwrap_or_else(|| BitWord::from_index((x.to_index() + 1) % (1 << n), n));
            if decoy.len() != n {
                return Err(CliError::Config(format!("--decoy has length {}, expected {n}", decoy.len())));
            }
            run_session(p, x, &mut apply_chunk_actions::<P>(actions.clone(), decoy), opts)
        }
        AdversarySpec::Plan(plan) => run_session(p, x, &mut plan.adversary(), opts),
    };
    r.map_err(|e| CliError::Config(e.to_string()))
}

fn list_or_none(v: &[String]) -> String {
    if v.is_empty() {
        "none".into()
    } else {
        v.join(",")
    }
}

pub fn verdict_line(r: &SessionResult) -> String {
    format!(
        "x={} output={} success={} erased={}/{} fraction={} violations={} flags={}",
        r.input,
        r.bob_output,
        r.success,
        r.erased_alice_rounds + r.erased_bob_rounds,
        r.total_rounds,
        r.total_erasure_fraction,
        list_or_none(&r.invariant_violations),
        list_or_none(&r.flags),
    )
}

pub fn summary_record(r: &SessionResult) -> serde_json::Value {
    json!({
        "input": r.input.to_string(),
        "output": r.bob_output.to_string(),
        "success": r.success,
        "erased_alice_rounds": r.erased_alice_rounds,
        "erased_bob_rounds": r.erased_bob_rounds,
        "total_rounds": r.total_rounds,
        "total_erasure_fraction": r.total_erasure_fraction.to_string(),
        "invariant_violations": r.invariant_violations,
        "flags": r.flags,
    })
}

fn trace_path(base: &Path, x: &BitWord, several: bool) -> PathBuf {
    if !several {
        return base.to_path_buf();
    }
    let stem = base.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let ext = base.extension().map(|e| format!(".{}", e.to_string_lossy())).unwrap_or_default();
    base.with_file_name(format!("{stem}-{x}{ext}"))
}

pub fn cmd_run(a: &RunArgs, out: &mut dyn Write) -> Result<i32, CliError> {
    let params = a.protocol.params();
    let spec = AdversarySpec::from_args(a)?;
    let inputs = select_inputs(&a.inputs, a.x.as_ref(), params.n, a.seed)?;
    let protocol = AnyProtocol::build(params.clone())?;
    let trace_target = a.trace.clone().or_else(|| {
        std::env::var_os(TRACE_DIR_ENV).map(|d| PathBuf::from(d).join(format!("run-{}-n{}.jsonl", params.protocol, params.n)))
    });
    let opts = SessionOptions { trace: trace_target.is_some(), ..Default::default() };
    let results: Vec<SessionResult> = with_protocol!(&protocol, p => inputs
        .par_iter()
        .enumerate()
        .map(|(k, x)| run_one(p, x, &spec, k as u64, opts))
        .collect::<Result<_, _>>()?);

    let several = results.len() > 1 || a.x.is_none();
    let mut summary = String::new();
    for r in &results {
        writeln!(out, "{}", verdict_line(r))?;
        if let Some(base) = &trace_target {
            write_file(&trace_path(base, &r.input, several), &trace_to_jsonl(&r.trace))?;
        }
        summary.push_str(&summary_record(r).to_string());
        summary.push('\n');
    }
    if let Some(path) = &a.summary {
        write_file(path, &summary)?;
    }
    let ok = results.iter().all(|r| r.success && r.invariant_violations.is_empty());
    Ok(if ok { EXIT_OK } else { EXIT_FAILURES })
}
