use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Subcommand};
use iecc_core::adversaries::{
    actions_to_string, attack_search, bitflip_attack_generate, erasure_confusion_attack, AttackError, FlipAttack,
    SearchMethod, Strawman, DEFAULT_SEARCH_CAP,
};
use iecc_core::{BitWord, Rational};
use serde_json::json;

use crate::run::select_inputs;
use crate::{rational_arg, with_protocol, write_file, AnyProtocol, CliError, ProtocolArgs, EXIT_FAILURES, EXIT_OK};

#[derive(Debug, Subcommand)]
pub enum AttackCommand {
    /// Two-input erasure confusion attack; replays both inputs under the plan.
    Confusion(ConfusionArgs),
    /// Bit-flip attack on a deterministic machine.
    Bitflip(BitflipArgs),
    /// Bounded search over chunk-action scripts for a fooling plan.
    Search(SearchArgs),
}

#[derive(Debug, Args)]
pub struct ConfusionArgs {
    #[command(flatten)]
    pub protocol: ProtocolArgs,
    /// Plan output (JSONL).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BitflipArgs {
    /// Machine to attack; only `strawman` is bundled.
    #[arg(long, default_value = "strawman")]
    pub target: String,
    #[arg(long, default_value_t = 3)]
    pub n: usize,
    /// Repetitions of the input per Alice message.
    #[arg(long, default_value_t = 4)]
    pub reps: usize,
    #[arg(long, default_value_t = 2)]
    pub bob_len: usize,
    #[arg(long, default_value_t = 4)]
    pub chunks: usize,
    /// `all` or `sampled:K`.
    #[arg(long, default_value = "all")]
    pub inputs: String,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Result output (JSON).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SearchArgs {
    #[command(flatten)]
    pub protocol: ProtocolArgs,
    #[arg(long, value_parser = rational_arg)]
    pub budget: Rational,
    /// `exhaustive` or `beam`.
    #[arg(long, default_value = "exhaustive")]
    pub method: String,
    /// Chunks searched exhaustively; later chunks pass.
    #[arg(long, default_value_t = 6)]
    pub depth: usize,
    #[arg(long, default_value_t = 64)]
    pub width: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Largest number of exhaustive sequences allowed.
    #[arg(long, default_value_t = DEFAULT_SEARCH_CAP)]
    pub cap: u128,
    /// Plan output (JSONL) when a fooling plan is found.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn generator(e: AttackError) -> CliError {
    CliError::Generator(e.to_string())
}

pub fn cmd_attack(cmd: &AttackCommand, out: &mut dyn Write) -> Result<i32, CliError> {
    match cmd {
        AttackCommand::Confusion(a) => confusion(a, out),
        AttackCommand::Bitflip(a) => bitflip(a, out),
        AttackCommand::Search(a) => search(a, out),
    }
}

fn confusion(a: &ConfusionArgs, out: &mut dyn Write) -> Result<i32, CliError> {
    let protocol = AnyProtocol::build(a.protocol.params())?;
    let v = with_protocol!(&protocol, p => erasure_confusion_attack(p).map_err(generator)?);
    writeln!(out, "attack=confusion inputs={},{}", v.inputs.0, v.inputs.1)?;
    writeln!(out, "bob_fraction={} cost_rounds={} cost_fraction={} bound={}", v.bob_fraction, v.cost_rounds, v.cost_fraction, v.bound)?;
    writeln!(out, "views_identical={} within_bound={} outputs={},{} fools={}", v.views_identical, v.within_bound(), v.outputs.0, v.outputs.1, v.fools())?;
    if let Some(path) = &a.out {
        write_file(path, &v.plan.to_jsonl())?;
    }
    Ok(if v.views_identical && v.within_bound() { EXIT_OK } else { EXIT_FAILURES })
}

fn words(v: &[BitWord]) -> Vec<String> {
    v.iter().map(BitWord::to_string).collect()
}

pub fn flip_record(r: &FlipAttack) -> serde_json::Value {
    json!({
        "pair": [r.inputs.0.to_string(), r.inputs.1.to_string()],
        "cost_first": r.cost_first,
        "cost_second": r.cost_second,
        "slack": r.slack,
        "alice_rounds": r.alice_rounds,
        "bob_rounds": r.bob_rounds,
        "bound": r.bound.to_string(),
        "within_bound": r.within_bound(),
        "views_identical": r.views_identical,
        "bob_view": words(&r.bob_view),
        "alice_view": words(&r.alice_view),
    })
}

fn bitflip(a: &BitflipArgs, out: &mut dyn Write) -> Result<i32, CliError> {
    if a.target != "strawman" {
        return Err(CliError::Config(format!("unknown bit-flip target {:?}", a.target)));
    }
    if a.n == 0 || a.n > 12 || a.reps == 0 || a.chunks == 0 {
        return Err(CliError::Config("strawman needs 1 <= n <= 12 and positive reps and chunks".into()));
    }
    let machine = Strawman { n: a.n, reps: a.reps, bob_len: a.bob_len, chunks: a.chunks };
    let inputs = select_inputs(&a.inputs, None, a.n, a.seed)?;
    let r = bitflip_attack_generate(&machine, &inputs).map_err(generator)?;
    writeln!(out, "attack=bitflip target=strawman inputs={} pair={},{}", inputs.len(), r.inputs.0, r.inputs.1)?;
    writeln!(
        out,
        "cost_first={} cost_second={} slack={} A={} B={} bound={}",
        r.cost_first, r.cost_second, r.slack, r.alice_rounds, r.bob_rounds, r.bound
    )?;
    writeln!(out, "views_identical={} within_bound={}", r.views_identical, r.within_bound())?;
    if let Some(path) = &a.out {
        write_file(path, &format!("{}\n", flip_record(&r)))?;
    }
    Ok(if r.views_identical && r.within_bound() { EXIT_OK } else { EXIT_FAILURES })
}

fn search(a: &SearchArgs, out: &mut dyn Write) -> Result<i32, CliError> {
    let method = match a.method.as_str() {
        "exhaustive" => SearchMethod::Exhaustive { depth: a.depth },
        "beam" => SearchMethod::Beam { width: a.width, seed: a.seed },
        other => return Err(CliError::Config(format!("unknown search method {other:?}"))),
    };
    let protocol = AnyProtocol::build(a.protocol.params())?;
    let hit = with_protocol!(&protocol, p => attack_search(p, a.budget, method, a.cap).map_err(generator)?);
    writeln!(out, "attack=search method={} depth={} budget={}", a.method, a.depth, a.budget)?;
    match hit {
        Some(h) => {
            writeln!(
                out,
                "found=true input={} decoy={} output={} actions={} cost_fraction={}",
                h.input,
                h.decoy,
                h.output,
                actions_to_string(&h.actions),
                h.cost_fraction
            )?;
            if let Some(path) = &a.out {
                write_file(path, &h.plan.to_jsonl())?;
            }
        }
        None => writeln!(out, "found=false note=no fooling plan in the searched repertoire; evidence, not proof")?,
    }
    Ok(EXIT_OK)
}
