//! One PASS/FAIL line per acceptance criterion. Exits nonzero on any FAIL.

use std::path::Path;
use std::process::Command;
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use iecc_core::adversaries::{
    apply_chunk_actions, attack_search, bitflip_attack_generate, erasure_confusion_attack, strategy_random,
    AttackPlan, ChunkAction, FlipMachine, SearchMethod, Strawman, DEFAULT_SEARCH_CAP,
};
use iecc_core::channel::{
    run_session, NullAdversary, Protocol, ProtocolKind, ProtocolParams, SessionOptions, SessionResult,
};
use iecc_core::ecc::{erasure_list_decode, Candidate, Codebook, TripleCheck};
use iecc_core::p35::Protocol35;
use iecc_core::p611::Protocol611;
use iecc_core::{BitWord, ErasedWord, Rational};
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

type Check = Result<String, String>;
type Criterion = (u8, &'static str, fn() -> Check, Duration);

fn r(a: i64, b: i64) -> Rational {
    Rational::new(a, b)
}

fn desk611() -> &'static Protocol611 {
    static P: OnceLock<Protocol611> = OnceLock::new();
    P.get_or_init(|| Protocol611::new(ProtocolParams::desk_default(ProtocolKind::P611)).unwrap())
}

fn desk35() -> &'static Protocol35 {
    static P: OnceLock<Protocol35> = OnceLock::new();
    P.get_or_init(|| Protocol35::new(ProtocolParams::desk_default(ProtocolKind::P35)).unwrap())
}

fn p35_quarter() -> &'static Protocol35 {
    static P: OnceLock<Protocol35> = OnceLock::new();
    P.get_or_init(|| Protocol35::new(ProtocolParams::new(ProtocolKind::P35, 2, r(1, 4), 32)).unwrap())
}

fn inputs(n: usize) -> Vec<BitWord> {
    (0..1usize << n).map(|v| BitWord::from_index(v, n)).collect()
}

// ---- 1 ----

fn noiseless<P: Protocol>(p: &P) -> Result<usize, String> {
    for x in inputs(p.params().n) {
        let res = run_session(p, &x, &mut NullAdversary, SessionOptions::default()).map_err(|e| e.to_string())?;
        if res.bob_output != x || !res.invariant_violations.is_empty() {
            return Err(format!("{} n={} x={x}: output {} violations {:?}", p.params().protocol, p.params().n, res.bob_output, res.invariant_violations));
        }
    }
    Ok(1 << p.params().n)
}

fn criterion_1() -> Check {
    let mut sessions = 0;
    for n in 1..=4 {
        let mut params = ProtocolParams::desk_default(ProtocolKind::P611);
        params.n = n;
        sessions += noiseless(&Protocol611::new(params).map_err(|e| e.to_string())?)?;
    }
    for n in 1..=3 {
        let mut params = ProtocolParams::desk_default(ProtocolKind::P35);
        params.n = n;
        sessions += noiseless(&Protocol35::new(params).map_err(|e| e.to_string())?)?;
    }
    Ok(format!("{sessions} noiseless sessions decoded exactly"))
}

// ---- 2 ----

/// Positions on which all three words agree, counted bit by bit.
fn agree3(a: &BitWord, b: &BitWord, c: &BitWord) -> usize {
    (0..a.len()).filter(|&k| a.get(k) == b.get(k) && b.get(k) == c.get(k)).count()
}

fn certify(name: &str, cb: &Codebook) -> Result<String, String> {
    let p = cb.length() as i64;
    let eps = cb.epsilon();
    let dist = |a: &BitWord, b: &BitWord| (0..a.len()).filter(|&k| a.get(k) != b.get(k)).count() as i64;
    let words = cb.words();
    let min_pair = (0..words.len())
        .flat_map(|i| (i + 1..words.len()).map(move |j| (i, j)))
        .map(|(i, j)| dist(&words[i], &words[j]))
        .min()
        .unwrap();
    let min_forb = words.iter().flat_map(|w| cb.forbidden().iter().map(move |f| dist(w, f))).min().unwrap_or(p);
    // Packed blocks make the exhaustive pass affordable; the bitwise
    // version above cross-checks it on a prefix.
    let all: Vec<&BitWord> = words.iter().chain(cb.forbidden()).collect();
    let pad = |len: usize, k: usize| -> u64 {
        let rem = len.saturating_sub(64 * k);
        if rem >= 64 { u64::MAX } else { (1u64 << rem) - 1 }
    };
    let fast3 = |a: &BitWord, b: &BitWord, c: &BitWord| -> usize {
        a.blocks()
            .iter()
            .zip(b.blocks())
            .zip(c.blocks())
            .enumerate()
            .map(|(k, ((x, y), z))| (!(x ^ y) & !(y ^ z) & pad(a.len(), k)).count_ones() as usize)
            .sum()
    };
    for i in 0..all.len().min(12) {
        for j in i + 1..all.len().min(12) {
            for k in j + 1..all.len().min(12) {
                if fast3(all[i], all[j], all[k]) != agree3(all[i], all[j], all[k]) {
                    return Err(format!("{name}: packed overlap disagrees with bitwise count"));
                }
            }
        }
    }
    let max_overlap = (0..all.len())
        .into_par_iter()
        .map(|i| {
            let mut m = 0;
            for j in i + 1..all.len() {
                for k in j + 1..all.len() {
                    m = m.max(fast3(all[i], all[j], all[k]));
                }
            }
            m
        })
        .max()
        .unwrap_or(0) as i64;
    let half = r(1, 2) - eps;
    let overlap = r(1, 4) + r(3, 2) * eps;
    let pr = Rational::from_integer(p);
    let ok = Rational::from_integer(min_pair) >= half * pr
        && Rational::from_integer(min_forb) >= half * pr
        && Rational::from_integer(max_overlap) <= overlap * pr;
    let report = cb.verify_distance(TripleCheck::Exhaustive);
    let agrees = report.min_pairwise as i64 == min_pair
        && report.max_triple_overlap as i64 == max_overlap
        && report.certified == ok;
    let line = format!(
        "{name}: {}x{} eps={eps} d_min={min_pair} d_forb={min_forb} (need {}) overlap={max_overlap} (max {})",
        words.len(),
        p,
        half * pr,
        overlap * pr
    );
    if ok && agrees {
        Ok(line)
    } else {
        Err(format!("{line} certified={ok} report_agrees={agrees}"))
    }
}

fn criterion_2() -> Check {
    let a = certify("611", desk611().alice_codebook())?;
    let b = certify("35", desk35().alice_codebook())?;
    Ok(format!("{a}; {b}"))
}

// ---- 3 ----

fn naive_decode(cb: &Codebook, received: &ErasedWord, extras: &[BitWord]) -> Vec<Candidate> {
    let fits = |w: &BitWord| (0..w.len()).all(|k| received.get(k).is_none_or(|b| b == w.get(k)));
    let mut out: Vec<Candidate> = cb.words().iter().enumerate().filter(|(_, w)| fits(w)).map(|(k, _)| Candidate::Word(k)).collect();
    out.extend(extras.iter().enumerate().filter(|(_, w)| fits(w)).map(|(k, _)| Candidate::Extra(k)));
    out
}

fn list_trials(cb: &Codebook, extras: &[BitWord], trials: usize, seed: u64) -> Result<usize, String> {
    let p = cb.length();
    // Largest erasure count strictly below (3/4 - 3eps/2) p.
    let limit = (r(3, 4) - r(3, 2) * cb.epsilon()) * Rational::from_integer(p as i64);
    let max_erasures = (limit.ceil().to_integer() - 1) as usize;
    (0..trials)
        .into_par_iter()
        .map(|t| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (t as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
            let index = rng.gen_range(0..cb.len());
            // Bias toward the threshold, where lists are largest.
            let count = if rng.gen_bool(0.5) { max_erasures } else { rng.gen_range(0..=max_erasures) };
            let mask = BitWord::from_bits({
                let picked = sample(&mut rng, p, count).into_vec();
                let mut bits = vec![false; p];
                for k in picked {
                    bits[k] = true;
                }
                bits
            });
            let received = ErasedWord::deliver(&cb.words()[index], &mask).unwrap();
            let list = erasure_list_decode(cb, &received, extras).unwrap();
            if list.len() > 2 || !list.contains(&Candidate::Word(index)) {
                return Err(format!("trial {t}: index {index} erasures {count} list {list:?}"));
            }
            if t % 97 == 0 && naive_decode(cb, &received, extras) != list {
                return Err(format!("trial {t}: decoder disagrees with brute force"));
            }
            Ok(count)
        })
        .collect::<Result<Vec<_>, _>>()
        .map(|v| v.into_iter().max().unwrap_or(0))
}

fn criterion_3() -> Check {
    let a = list_trials(desk611().alice_codebook(), desk611().alice_extras(), 100_000, 3)?;
    let b = list_trials(desk35().alice_codebook(), desk35().alice_extras(), 100_000, 5)?;
    Ok(format!("2 x 100000 patterns, max erasures {a}/64 and {b}/128, lists <= 2 with the sent word"))
}

// ---- 4, 5, 6 ----

struct Fuzz {
    sessions: usize,
    violations: Vec<(String, String)>,
}

impl Fuzz {
    fn count(&self, pred: impl Fn(&str) -> bool) -> (usize, Option<&(String, String)>) {
        let hits: Vec<_> = self.violations.iter().filter(|(_, v)| pred(v)).collect();
        (hits.len(), hits.first().copied())
    }
}

fn fuzz_session<P: Protocol>(p: &P, seed: u64) -> SessionResult {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = p.params().n;
    let x = BitWord::from_index(rng.gen_range(0..1usize << n), n);
    if rng.gen_bool(0.5) {
        let budget = [r(1, 4), r(2, 5), r(1, 2)][rng.gen_range(0..3)];
        run_session(p, &x, &mut strategy_random(budget, rng.gen()), SessionOptions::default()).unwrap()
    } else {
        let chunks = p.schedule().chunk_count();
        let script: Vec<ChunkAction> = (0..chunks).map(|_| ChunkAction::ALL[rng.gen_range(0..5)]).collect();
        let shift = rng.gen_range(1..1usize << n);
        let decoy = BitWord::from_index((x.to_index() + shift) % (1 << n), n);
        run_session(p, &x, &mut apply_chunk_actions::<P>(script, decoy), SessionOptions::default()).unwrap()
    }
}

fn fuzz_many<P: Protocol>(p: &P, count: usize, seed: u64, tag: &str) -> Fuzz {
    let violations = (0..count)
        .into_par_iter()
        .flat_map_iter(|k| {
            let res = fuzz_session(p, seed.wrapping_add(k as u64));
            res.invariant_violations.into_iter().map(move |v| (format!("{tag}#{k}"), v))
        })
        .collect();
    Fuzz { sessions: count, violations }
}

fn fuzz35() -> &'static Fuzz {
    static F: OnceLock<Fuzz> = OnceLock::new();
    F.get_or_init(|| {
        let a = fuzz_many(desk35(), 6000, 1_000, "35/eps=1/2");
        let b = fuzz_many(p35_quarter(), 6000, 2_000_000, "35/eps=1/4");
        Fuzz { sessions: a.sessions + b.sessions, violations: a.violations.into_iter().chain(b.violations).collect() }
    })
}

fn fuzz611() -> &'static Fuzz {
    static F: OnceLock<Fuzz> = OnceLock::new();
    F.get_or_init(|| fuzz_many(desk611(), 10_000, 7_000_000, "611"))
}

fn verdict(label: &str, fuzz: &[&Fuzz], pred: impl Fn(&str) -> bool) -> Check {
    let sessions: usize = fuzz.iter().map(|f| f.sessions).sum();
    let mut total = 0;
    let mut first = None;
    for f in fuzz {
        let (c, e) = f.count(&pred);
        total += c;
        first = first.or(e.cloned());
    }
    match first {
        None => Ok(format!("{sessions} fuzz sessions, 0 {label} violations")),
        Some((s, v)) => Err(format!("{total} {label} violations in {sessions} sessions, first {v} in {s}")),
    }
}

fn criterion_4() -> Check {
    verdict("S0/S1 lemma", &[fuzz35()], |v| v.starts_with("lemma_"))
}

fn criterion_5() -> Check {
    verdict("unique-decode soundness", &[fuzz35(), fuzz611()], |v| v.ends_with("_unsound"))
}

fn criterion_6() -> Check {
    let line = verdict("true-world containment", &[fuzz35(), fuzz611()], |v| {
        v == "true_world_not_contained" || v == "true_world_missing"
    })?;
    let mut other = std::collections::BTreeMap::<&str, usize>::new();
    for (_, v) in fuzz35().violations.iter().chain(&fuzz611().violations) {
        *other.entry(v.as_str()).or_default() += 1;
    }
    Ok(format!("{line}; all violation kinds seen: {other:?}"))
}

// ---- 7 ----

fn replay_view<P: Protocol>(p: &P, plan: &AttackPlan, x: &BitWord) -> String {
    let opts = SessionOptions { record_bob_view: true, ..Default::default() };
    let res = run_session(p, x, &mut plan.adversary(), opts).unwrap();
    res.bob_view.iter().map(|w| format!("{w}\n")).collect()
}

fn confusion<P: Protocol>(p: &P, ceiling: Rational) -> Check {
    let s = p.schedule();
    let r_bob = Rational::new(s.bob_rounds() as i64, s.total_rounds() as i64);
    let v = erasure_confusion_attack(p).map_err(|e| e.to_string())?;
    let erased: usize = v.plan.masks.values().map(BitWord::count_ones).sum();
    let cost = Rational::new(erased as i64, s.total_rounds() as i64);
    let a = replay_view(p, &v.plan, &v.inputs.0);
    let b = replay_view(p, &v.plan, &v.inputs.1);
    let line = format!("{}: r={r_bob} cost={cost} ceiling={ceiling}", p.params().protocol);
    if (r(1, 1) + r_bob) / r(2, 1) != ceiling {
        return Err(format!("{line}: (1+r)/2 != ceiling"));
    }
    if a.as_bytes() != b.as_bytes() || !v.views_identical {
        return Err(format!("{line}: replayed Bob views differ"));
    }
    if cost > ceiling || cost != v.cost_fraction {
        return Err(format!("{line}: over the ceiling or misreported ({})", v.cost_fraction));
    }
    Ok(line)
}

fn criterion_7() -> Check {
    let a = confusion(desk611(), r(7, 11))?;
    let b = confusion(desk35(), r(3, 5))?;
    Ok(format!("{a}; {b}; views byte-identical"))
}

// ---- 8 ----

/// Replays the strawman for input `x` against fixed deliveries and counts
/// the flips the channel must have made.
fn strawman_flips(m: &Strawman, x: &BitWord, to_bob: &[BitWord], to_alice: &[BitWord]) -> usize {
    let mut flips = 0;
    for k in 0..to_bob.len() {
        let a = m.alice_message(x, &to_alice[..k]);
        flips += (0..a.len()).filter(|&t| a.get(t) != to_bob[k].get(t)).count();
        let b = m.bob_message(&to_bob[..=k]);
        flips += (0..b.len()).filter(|&t| b.get(t) != to_alice[k].get(t)).count();
    }
    flips
}

fn criterion_8() -> Check {
    let m = Strawman { n: 3, reps: 4, bob_len: 2, chunks: 4 };
    let ins = inputs(3);
    let atk = bitflip_attack_generate(&m, &ins).map_err(|e| e.to_string())?;
    let (a_rounds, b_rounds) = (3 * 4 * 4, 2 * 4);
    let bound = r(b_rounds, 2) + r(a_rounds, 4);
    let fi = strawman_flips(&m, &atk.inputs.0, &atk.bob_view, &atk.alice_view);
    let fj = strawman_flips(&m, &atk.inputs.1, &atk.bob_view, &atk.alice_view);
    let line = format!(
        "N=8 A={a_rounds} B={b_rounds} cost={} slack={} bound={bound} replay flips {fi}/{fj}",
        atk.cost_first, atk.slack
    );
    let ok = atk.bound == bound
        && Rational::from_integer(atk.cost_first as i64) <= bound + Rational::from_integer(atk.slack as i64)
        && fi == atk.cost_first
        && fj == atk.cost_second
        && atk.views_identical;
    if ok {
        Ok(line)
    } else {
        Err(line)
    }
}

// ---- 9 ----

fn criterion_9() -> Check {
    let p = Protocol611::new(ProtocolParams::new(ProtocolKind::P611, 2, r(1, 2), 32)).map_err(|e| e.to_string())?;
    let method = SearchMethod::Exhaustive { depth: 6 };
    let tolerance = r(6, 11) - r(14, 11) * r(1, 2);
    let low = attack_search(&p, tolerance, method, DEFAULT_SEARCH_CAP).map_err(|e| e.to_string())?;
    if let Some(h) = low {
        return Err(format!("fooling plan at budget {tolerance}: {:?}", h.actions));
    }
    let zero = attack_search(&p, r(0, 1), method, DEFAULT_SEARCH_CAP).map_err(|e| e.to_string())?;
    if zero.is_some() {
        return Err("fooling plan at budget 0".into());
    }
    let hit = attack_search(&p, r(1, 1), method, DEFAULT_SEARCH_CAP)
        .map_err(|e| e.to_string())?
        .ok_or("no fooling plan at budget 1")?;
    let replay = run_session(&p, &hit.input, &mut hit.plan.adversary(), SessionOptions::default()).unwrap();
    if replay.success {
        return Err("budget-1 plan does not fool Bob on replay".into());
    }
    Ok(format!(
        "none at {tolerance} or 0; at 1 found {}->{} cost {} (evidence, not proof)",
        hit.input, replay.bob_output, replay.total_erasure_fraction
    ))
}

// ---- 10 ----

fn cli(args: &[&str], dir: &Path) -> Result<(), String> {
    let status = Command::new(env!("CARGO_BIN_EXE_iecc"))
        .args(args)
        .current_dir(dir)
        .env_remove("IECC_TRACE_DIR")
        .output()
        .map_err(|e| e.to_string())?;
    if status.status.code().is_none_or(|c| c > 1) {
        return Err(format!("{args:?} exited with {:?}: {}", status.status.code(), String::from_utf8_lossy(&status.stderr)));
    }
    Ok(())
}

fn criterion_10() -> Check {
    let commands: Vec<Vec<&str>> = vec![
        vec!["run", "--protocol", "35", "--adversary", "random", "--budget", "1/2", "--seed", "1", "--trace", "trace.jsonl", "--summary", "summary.jsonl"],
        vec!["run", "--protocol", "611", "--adversary", "actions", "--actions", "cxbcap", "--x", "101", "--trace", "one.jsonl", "--summary", "one-summary.jsonl"],
        vec!["sweep", "--protocol", "611", "--grid", "0:1/2:1/4", "--reps", "2", "--seed", "9", "--out", "sweep.csv"],
        vec!["sweep", "--protocol", "35", "--budgets", "1/4,2/5", "--reps", "2", "--seed", "9", "--out", "sweep35.csv"],
        vec!["attack", "confusion", "--protocol", "611", "--out", "confusion.jsonl"],
        vec!["attack", "bitflip", "--target", "strawman", "--n", "3", "--out", "bitflip.json"],
        vec!["attack", "search", "--protocol", "611", "--n", "2", "--m", "32", "--budget", "1", "--out", "search.jsonl"],
    ];
    let runs: Vec<tempfile::TempDir> = (0..2).map(|_| tempfile::tempdir().unwrap()).collect();
    for dir in &runs {
        for c in &commands {
            cli(c, dir.path())?;
        }
    }
    let mut files = Vec::new();
    for entry in walk(runs[0].path()) {
        let rel = entry.strip_prefix(runs[0].path()).unwrap().to_path_buf();
        let a = std::fs::read(&entry).unwrap();
        let b = std::fs::read(runs[1].path().join(&rel)).map_err(|_| format!("{} missing in second run", rel.display()))?;
        if a != b {
            return Err(format!("{} differs between runs", rel.display()));
        }
        if a.is_empty() {
            return Err(format!("{} is empty", rel.display()));
        }
        files.push(rel.display().to_string());
    }
    if files.len() < commands.len() {
        return Err(format!("only {} output files", files.len()));
    }
    Ok(format!("{} output files byte-identical across two runs", files.len()))
}

fn walk(dir: &Path) -> Vec<std::path::PathBuf> {
    let mut out = Vec::new();
    for e in std::fs::read_dir(dir).unwrap() {
        let path = e.unwrap().path();
        if path.is_dir() {
            out.extend(walk(&path));
        } else {
            out.push(path);
        }
    }
    out.sort();
    out
}

fn main() {
    let criteria: [Criterion; 10] = [
        (1, "noiseless correctness", criterion_1, Duration::from_secs(10)),
        (2, "codebook certification", criterion_2, Duration::from_secs(30)),
        (3, "list-size bound", criterion_3, Duration::from_secs(60)),
        (4, "S0/S1 lemma invariant", criterion_4, Duration::from_secs(300)),
        (5, "unique-decode soundness", criterion_5, Duration::from_secs(300)),
        (6, "true-world containment", criterion_6, Duration::from_secs(300)),
        (7, "erasure confusion attack", criterion_7, Duration::from_secs(60)),
        (8, "bit-flip attack", criterion_8, Duration::from_secs(60)),
        (9, "bounded attack search", criterion_9, Duration::from_secs(600)),
        (10, "determinism", criterion_10, Duration::from_secs(300)),
    ];
    let mut failed = 0;
    for (id, name, check, limit) in criteria {
        let start = Instant::now();
        let outcome = check();
        let took = start.elapsed();
        let outcome = match outcome {
            Ok(d) if took > limit => Err(format!("{d}; took {took:.1?}, limit {limit:?}")),
            o => o,
        };
        match outcome {
            Ok(detail) => println!("PASS {id:>2} {name}: {detail} [{took:.2?}]"),
            Err(detail) => {
                failed += 1;
                println!("FAIL {id:>2} {name}: {detail} [{took:.2?}]");
            }
        }
    }
    println!("{} of 10 criteria passed", 10 - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
