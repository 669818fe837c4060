use std::io::Write;
use std::path::PathBuf;

use clap::Args;
use iecc_core::adversaries::{apply_chunk_actions, strategy_random, ChunkAction};
use iecc_core::channel::{run_session, Protocol, SessionOptions};
use iecc_core::rational::{floor_nonneg, parse_rational, scaled};
use iecc_core::{BitWord, Rational};
use num_rational::Ratio;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::run::select_inputs;
use crate::{derive_seed, with_protocol, write_file, AnyProtocol, CliError, ProtocolArgs, EXIT_OK};

pub const CSV_HEADER: &str = "budget,runs,failures,violations,mean_fraction";

#[derive(Debug, Clone, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub protocol: ProtocolArgs,
    /// Inclusive grid `start:stop:step`, e.g. `0:1/2:1/10`.
    #[arg(long, conflicts_with = "budgets")]
    pub grid: Option<String>,
    /// Explicit comma-separated budgets, e.g. `0,1/4,1`.
    #[arg(long)]
    pub budgets: Option<String>,
    /// Repetitions per input and budget, for each adversary family.
    #[arg(long, default_value_t = 4)]
    pub reps: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// `all` or `sampled:K`.
    #[arg(long, default_value = "all")]
    pub inputs: String,
    /// CSV output file; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// One budget point of a sweep.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SummaryRow {
    pub budget: Rational,
    pub runs: usize,
    pub failures: usize,
    /// Runs that reported at least one invariant violation.
    pub violations: usize,
    pub mean_fraction: Rational,
}

impl SummaryRow {
    pub fn to_csv(&self) -> String {
        format!("{},{},{},{},{}", self.budget, self.runs, self.failures, self.violations, self.mean_fraction)
    }

    pub fn from_csv(line: &str) -> Result<Self, CliError> {
        let err = || CliError::Config(format!("bad summary row {line:?}"));
        let f: Vec<&str> = line.trim().split(',').collect();
        if f.len() != 5 {
            return Err(err());
        }
        let rat = |s: &str| parse_rational(s).map_err(|_| err());
        let int = |s: &str| s.parse::<usize>().map_err(|_| err());
        let row = SummaryRow {
            budget: rat(f[0])?,
            runs: int(f[1])?,
            failures: int(f[2])?,
            violations: int(f[3])?,
            mean_fraction: rat(f[4])?,
        };
        if row.failures > row.runs {
            return Err(err());
        }
        Ok(row)
    }
}

/// Budget points from `--grid` or `--budgets`.
pub fn budget_grid(grid: Option<&str>, budgets: Option<&str>) -> Result<Vec<Rational>, CliError> {
    let rat = |s: &str| parse_rational(s).map_err(|e| CliError::Config(e.to_string()));
    let points = match (grid, budgets) {
        (Some(g), _) => {
            let parts: Vec<&str> = g.split(':').collect();
            let [start, stop, step] = parts.as_slice() else {
                return Err(CliError::Config(format!("--grid must be start:stop:step, got {g:?}")));
            };
            let (start, stop, step) = (rat(start)?, rat(stop)?, rat(step)?);
            if step <= Rational::from_integer(0) {
                return Err(CliError::Config("grid step must be positive".into()));
            }
            let mut v = Vec::new();
            let mut b = start;
            while b <= stop {
                v.push(b);
                b += step;
            }
            v
        }
        (None, Some(list)) => list.split(',').map(|s| rat(s.trim())).collect::<Result<_, _>>()?,
        (None, None) => return Err(CliError::Config("give --grid or --budgets".into())),
    };
    if points.is_empty() {
        return Err(CliError::Config("budget grid is empty".into()));
    }
    Ok(points)
}

struct Outcome {
    point: usize,
    success: bool,
    violated: bool,
    fraction: Rational,
}

/// A random action script for `chunks` chunks.
fn random_script(rng: &mut ChaCha8Rng, chunks: usize) -> Vec<ChunkAction> {
    (0..chunks).map(|_| ChunkAction::ALL[rng.gen_range(0..ChunkAction::ALL.len())]).collect()
}

/// Every (point, input, rep) runs one random and one capped chunk-action
/// session; the action script and decoy are drawn from a derived seed.
pub fn sweep_rows<P: Protocol>(
    p: &P,
    points: &[Rational],
    inputs: &[BitWord],
    reps: usize,
    seed: u64,
) -> Result<Vec<SummaryRow>, CliError> {
    let total = p.schedule().total_rounds();
    let chunks = p.schedule().chunk_count();
    let jobs: Vec<(usize, usize, usize, bool)> = (0..points.len())
        .flat_map(|b| (0..inputs.len()).flat_map(move |x| (0..reps).flat_map(move |r| [(b, x, r, false), (b, x, r, true)])))
        .collect();
    let outcomes: Vec<Outcome> = jobs
        .par_iter()
        .map(|&(b, xi, r, scripted)| {
            let budget = points[b];
            let job_seed = derive_seed(seed, &[b as u64, xi as u64, r as u64, scripted as u64]);
            let x = &inputs[xi];
            let res = if scripted {
                let mut rng = ChaCha8Rng::seed_from_u64(job_seed);
                let script = random_script(&mut rng, chunks);
                let n = x.len();
                let shift = rng.gen_range(1..(1usize << n).max(2));
                let decoy = BitWord::from_index((x.to_index() + shift) % (1 << n), n);
                let cap = if budget < Rational::from_integer(0) { 0 } else { floor_nonneg(scaled(budget, total)) };
                run_session(p, x, &mut apply_chunk_actions::<P>(script, decoy).with_cap(cap), SessionOptions::default())
            } else {
                run_session(p, x, &mut strategy_random(budget, job_seed), SessionOptions::default())
            }
            .map_err(|e| CliError::Config(e.to_string()))?;
            Ok(Outcome {
                point: b,
                success: res.success,
                violated: !res.invariant_violations.is_empty(),
                fraction: res.total_erasure_fraction,
            })
        })
        .collect::<Result<_, CliError>>()?;

    let mut rows: Vec<SummaryRow> = points
        .iter()
        .map(|&budget| SummaryRow { budget, runs: 0, failures: 0, violations: 0, mean_fraction: Ratio::from_integer(0) })
        .collect();
    for o in &outcomes {
        let row = &mut rows[o.point];
        row.runs += 1;
        row.failures += usize::from(!o.success);
        row.violations += usize::from(o.violated);
        row.mean_fraction += o.fraction;
    }
    for row in &mut rows {
        if row.runs > 0 {
            row.mean_fraction /= Rational::from_integer(row.runs as i64);
        }
    }
    Ok(rows)
}

pub fn cmd_sweep(a: &SweepArgs, out: &mut dyn Write) -> Result<i32, CliError> {
    let params = a.protocol.params();
    let points = budget_grid(a.grid.as_deref(), a.budgets.as_deref())?;
    if a.reps == 0 {
        return Err(CliError::Config("--reps must be positive".into()));
    }
    let inputs = select_inputs(&a.inputs, None, params.n, a.seed)?;
    let protocol = AnyProtocol::build(params)?;
    let rows = with_protocol!(&protocol, p => sweep_rows(p, &points, &inputs, a.reps, a.seed)?);
    let mut csv = format!("{CSV_HEADER}\n");
    for r in &rows {
        csv.push_str(&r.to_csv());
        csv.push('\n');
    }
    match &a.out {
        Some(path) => {
            write_file(path, &csv)?;
            writeln!(out, "wrote {} rows to {}", rows.len(), path.display())?;
        }
        None => write!(out, "{csv}")?,
    }
    Ok(EXIT_OK)
}
