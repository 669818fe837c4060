//! Erasure strategies: null, seeded random, chunk-action scripts, fixed
//! plans, and the attack generators built on them.

mod bitflip;
mod confusion;
mod search;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

use crate::bits::{BitWord, ErasedWord};
use crate::channel::{Adversary, ChannelError, MessageView, NullAdversary, Protocol, Speaker};
use crate::ecc::{below_list_threshold, erasure_list_decode};
use crate::rational::{floor_nonneg, parse_rational, scaled, Rational};

pub use bitflip::{bitflip_attack_generate, FlipAttack, FlipMachine, Strawman};
pub use confusion::{erasure_confusion_attack, ConfusionVerdict};
pub use search::{attack_search, SearchHit, SearchMethod, DEFAULT_SEARCH_CAP};

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum AttackError {
    #[error("invalid inputs: {0}")]
    InvalidInputs(String),
    #[error("machine diverged from its own simulation in chunk {chunk}")]
    NonDeterministicMachine { chunk: usize },
    #[error("search space of {size} sequences exceeds the cap of {cap}")]
    SearchSpaceTooLarge { size: u128, cap: u128 },
    #[error(transparent)]
    Channel(#[from] ChannelError),
    #[error("attack plan: {0}")]
    Plan(String),
}

/// Per-chunk adversary moves. Confusion targets the true input and the
/// decoy input the adversary was built with.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ChunkAction {
    Pass,
    ConfusePair,
    BlindAlice,
    BlindBob,
    BlindBobAndConfuse,
}

impl ChunkAction {
    pub const ALL: [ChunkAction; 5] = [
        ChunkAction::Pass,
        ChunkAction::ConfusePair,
        ChunkAction::BlindAlice,
        ChunkAction::BlindBob,
        ChunkAction::BlindBobAndConfuse,
    ];

    pub fn letter(self) -> char {
        match self {
            ChunkAction::Pass => 'p',
            ChunkAction::ConfusePair => 'c',
            ChunkAction::BlindAlice => 'a',
            ChunkAction::BlindBob => 'b',
            ChunkAction::BlindBobAndConfuse => 'x',
        }
    }

    fn confuses(self) -> bool {
        matches!(self, ChunkAction::ConfusePair | ChunkAction::BlindBobAndConfuse)
    }

    fn blinds_bob(self) -> bool {
        matches!(self, ChunkAction::BlindBob | ChunkAction::BlindBobAndConfuse)
    }
}

impl fmt::Display for ChunkAction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.letter())
    }
}

/// Parses a string of action letters `p c a b x`.
pub fn parse_actions(s: &str) -> Result<Vec<ChunkAction>, AttackError> {
    s.chars()
        .map(|c| {
            ChunkAction::ALL
                .into_iter()
                .find(|a| a.letter() == c)
                .ok_or_else(|| AttackError::Plan(format!("unknown action letter {c:?}")))
        })
        .collect()
}

pub fn actions_to_string(actions: &[ChunkAction]) -> String {
    actions.iter().map(|a| a.letter()).collect()
}

pub fn strategy_null() -> NullAdversary {
    NullAdversary
}

/// Erases a uniformly random set of `floor(budget * total)` rounds, fixed
/// on first use from the seed and applied message by message.
#[derive(Debug, Clone)]
pub struct RandomAdversary {
    budget: Rational,
    seed: u64,
    erased: Option<BTreeSet<usize>>,
}

pub fn strategy_random(budget: Rational, seed: u64) -> RandomAdversary {
    RandomAdversary { budget, seed, erased: None }
}

impl<P: Protocol + ?Sized> Adversary<P> for RandomAdversary {
    fn mask(&mut self, view: &MessageView<'_, P>) -> BitWord {
        let total = view.protocol.schedule().total_rounds();
        let (budget, seed) = (self.budget, self.seed);
        let erased = self.erased.get_or_insert_with(|| {
            let count = floor_nonneg(scaled(budget, total)).min(total);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            sample(&mut rng, total, count).into_iter().collect()
        });
        BitWord::from_bits((0..view.sent.len()).map(|k| erased.contains(&(view.round + k))))
    }
}

/// Realizes a script of [`ChunkAction`]s. A shadow Alice holding `decoy`
/// hears exactly what the real Alice hears; confusion erases the positions
/// where the two messages differ.
pub struct ChunkActionAdversary<P: Protocol> {
    actions: Vec<ChunkAction>,
    decoy: BitWord,
    cap: Option<usize>,
    shadow: Option<P::Alice>,
    to_alice: Option<ErasedWord>,
    fallbacks: Vec<usize>,
    capped: Vec<usize>,
}

impl<P: Protocol> Clone for ChunkActionAdversary<P> {
    fn clone(&self) -> Self {
        ChunkActionAdversary {
            actions: self.actions.clone(),
            decoy: self.decoy.clone(),
            cap: self.cap,
            shadow: self.shadow.clone(),
            to_alice: self.to_alice.clone(),
            fallbacks: self.fallbacks.clone(),
            capped: self.capped.clone(),
        }
    }
}

/// Builds an adversary realizing `actions` chunk by chunk; chunks past the
/// end of the script pass.
pub fn apply_chunk_actions<P: Protocol>(actions: Vec<ChunkAction>, decoy: BitWord) -> ChunkActionAdversary<P> {
    ChunkActionAdversary {
        actions,
        decoy,
        cap: None,
        shadow: None,
        to_alice: None,
        fallbacks: Vec::new(),
        capped: Vec::new(),
    }
}

impl<P: Protocol> ChunkActionAdversary<P> {
    /// Any message whose mask would push the total past `cap` erased rounds
    /// passes untouched instead.
    pub fn with_cap(mut self, cap: usize) -> Self {
        self.cap = Some(cap);
        self
    }

    pub fn push(&mut self, action: ChunkAction) {
        self.actions.push(action);
    }

    pub fn actions(&self) -> &[ChunkAction] {
        &self.actions
    }

    /// Chunks where confusion fell back to blinding Alice.
    pub fn fallbacks(&self) -> &[usize] {
        &self.fallbacks
    }

    pub fn capped(&self) -> &[usize] {
        &self.capped
    }

    fn confusion_mask(&self, view: &MessageView<'_, P>, shadow_word: &BitWord) -> Option<BitWord> {
        let diff = view.sent.xor(shadow_word).ok()?;
        if diff.count_ones() == 0 {
            return None;
        }
        let params = view.protocol.params();
        if !below_list_threshold(diff.count_ones(), params.code_epsilon(), view.sent.len()) {
            return None;
        }
        let delivered = ErasedWord::deliver(view.sent, &diff).ok()?;
        let list = erasure_list_decode(view.protocol.alice_codebook(), &delivered, view.protocol.alice_extras()).ok()?;
        (list.len() == 2).then_some(diff)
    }
}

impl<P: Protocol> Adversary<P> for ChunkActionAdversary<P> {
    fn mask(&mut self, view: &MessageView<'_, P>) -> BitWord {
        let chunk = view.slot.index;
        let action = self.actions.get(chunk).copied().unwrap_or(ChunkAction::Pass);
        let len = view.sent.len();
        let mask = match view.speaker {
            Speaker::Alice => {
                let protocol = view.protocol;
                let shadow = self.shadow.take().unwrap_or_else(|| protocol.alice_start(&self.decoy));
                let step = protocol.alice_send(&shadow, self.to_alice.as_ref(), view.slot);
                self.shadow = Some(step.state);
                match action {
                    ChunkAction::BlindAlice => BitWord::ones(len),
                    a if a.confuses() => self.confusion_mask(view, &step.word).unwrap_or_else(|| {
                        self.fallbacks.push(chunk);
                        BitWord::ones(len)
                    }),
                    _ => BitWord::zeros(len),
                }
            }
            Speaker::Bob => {
                if action.blinds_bob() {
                    BitWord::ones(len)
                } else {
                    BitWord::zeros(len)
                }
            }
        };
        let mask = match self.cap {
            Some(cap) if view.erased_so_far + mask.count_ones() > cap => {
                self.capped.push(chunk);
                BitWord::zeros(len)
            }
            _ => mask,
        };
        if view.speaker == Speaker::Bob {
            self.to_alice = ErasedWord::deliver(view.sent, &mask).ok();
        }
        mask
    }
}

/// A fixed erasure plan: masks keyed by (chunk, speaker). Missing entries
/// erase nothing.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AttackPlan {
    pub masks: BTreeMap<(usize, Speaker), BitWord>,
    pub total_cost: usize,
    pub description: String,
    pub params: serde_json::Map<String, Value>,
}

impl AttackPlan {
    pub fn new(masks: BTreeMap<(usize, Speaker), BitWord>, description: impl Into<String>) -> Self {
        let total_cost = masks.values().map(BitWord::count_ones).sum();
        AttackPlan { masks, total_cost, description: description.into(), params: Default::default() }
    }

    pub fn with_param(mut self, key: &str, value: Value) -> Self {
        self.params.insert(key.to_string(), value);
        self
    }

    /// A header record, then one record per (chunk, speaker).
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        let header = json!({
            "description": self.description,
            "total_cost": self.total_cost,
            "params": Value::Object(self.params.clone()),
        });
        out.push_str(&header.to_string());
        out.push('\n');
        for ((chunk, speaker), mask) in &self.masks {
            let rec = json!({ "chunk": chunk, "speaker": speaker, "mask": mask.to_string() });
            out.push_str(&rec.to_string());
            out.push('\n');
        }
        out
    }

    pub fn from_jsonl(text: &str) -> Result<Self, AttackError> {
        let err = |m: String| AttackError::Plan(m);
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header: Value = serde_json::from_str(lines.next().ok_or_else(|| err("empty plan".into()))?)
            .map_err(|e| err(e.to_string()))?;
        let description = header["description"].as_str().unwrap_or_default().to_string();
        let params = header["params"].as_object().cloned().unwrap_or_default();
        let mut masks = BTreeMap::new();
        for line in lines {
            let rec: Value = serde_json::from_str(line).map_err(|e| err(e.to_string()))?;
            let chunk = rec["chunk"].as_u64().ok_or_else(|| err("record without chunk".into()))? as usize;
            let speaker: Speaker = rec["speaker"]
                .as_str()
                .ok_or_else(|| err("record without speaker".into()))?
                .parse()?;
            let mask: BitWord = rec["mask"]
                .as_str()
                .ok_or_else(|| err("record without mask".into()))?
                .parse()
                .map_err(|e: crate::bits::BitsError| err(e.to_string()))?;
            masks.insert((chunk, speaker), mask);
        }
        let plan = AttackPlan::new(masks, description);
        if let Some(stated) = header["total_cost"].as_u64() {
            if stated as usize != plan.total_cost {
                return Err(err(format!("header cost {stated} != mask cost {}", plan.total_cost)));
            }
        }
        Ok(AttackPlan { params, ..plan })
    }

    pub fn from_masks(masks: &[crate::channel::AppliedMask], description: impl Into<String>) -> Self {
        let map = masks.iter().map(|m| ((m.chunk, m.speaker), m.mask.clone())).collect();
        AttackPlan::new(map, description)
    }

    pub fn adversary(&self) -> PlanAdversary<'_> {
        PlanAdversary { plan: self }
    }
}

pub struct PlanAdversary<'a> {
    plan: &'a AttackPlan,
}

impl<P: Protocol + ?Sized> Adversary<P> for PlanAdversary<'_> {
    fn mask(&mut self, view: &MessageView<'_, P>) -> BitWord {
        self.plan
            .masks
            .get(&(view.slot.index, view.speaker))
            .cloned()
            .unwrap_or_else(|| BitWord::zeros(view.sent.len()))
    }
}

/// Erases every round.
#[derive(Debug, Clone, Copy, Default)]
pub struct EraseAll;

impl<P: Protocol + ?Sized> Adversary<P> for EraseAll {
    fn mask(&mut self, view: &MessageView<'_, P>) -> BitWord {
        BitWord::ones(view.sent.len())
    }
}

/// Parses a budget such as `1/4` or `0.25`.
pub fn parse_budget(s: &str) -> Result<Rational, AttackError> {
    parse_rational(s).map_err(|e| AttackError::Plan(e.to_string()))
}

/// Whether `erased` rounds out of `total` stay within `budget`.
pub fn within_budget(erased: usize, total: usize, budget: Rational) -> bool {
    Rational::from_integer(erased as i64) <= scaled(budget, total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{run_session, ProtocolKind, ProtocolParams, SessionOptions};
    use crate::p611::Protocol611;

    fn proto() -> Protocol611 {
        Protocol611::new(ProtocolParams::new(ProtocolKind::P611, 3, Rational::new(1, 2), 16)).unwrap()
    }

    #[test]
    fn null_strategy_erases_nothing() {
        let p = proto();
        let r = run_session(&p, &"101".parse().unwrap(), &mut strategy_null(), SessionOptions::default()).unwrap();
        assert!(r.success);
        assert_eq!(r.erased_alice_rounds + r.erased_bob_rounds, 0);
    }

    #[test]
    fn random_strategy_spends_exact_budget() {
        let p = proto();
        let x = "110".parse().unwrap();
        let mut adv = strategy_random(Rational::new(1, 4), 9);
        let r = run_session(&p, &x, &mut adv, SessionOptions::default()).unwrap();
        assert_eq!(r.erased_alice_rounds + r.erased_bob_rounds, 44);
        assert_eq!(r.total_erasure_fraction, Rational::new(1, 4));
        let again = run_session(&p, &x, &mut strategy_random(Rational::new(1, 4), 9), SessionOptions::default()).unwrap();
        assert_eq!(r.bob_output, again.bob_output);
    }

    #[test]
    fn erase_everything_falls_back_without_violations() {
        let p = proto();
        let r = run_session(&p, &"101".parse().unwrap(), &mut EraseAll, SessionOptions::default()).unwrap();
        assert!(!r.success);
        assert_eq!(r.bob_output, "000".parse().unwrap());
        assert_eq!(r.total_erasure_fraction, Rational::from_integer(1));
        assert!(r.invariant_violations.is_empty());
        assert_eq!(r.flags, vec!["finalize_fallback".to_string()]);
    }

    #[test]
    fn plan_jsonl_roundtrip() {
        let mut masks = BTreeMap::new();
        masks.insert((0, Speaker::Alice), "0110".parse().unwrap());
        masks.insert((0, Speaker::Bob), "11".parse().unwrap());
        let plan = AttackPlan::new(masks, "demo").with_param("seed", json!(3));
        assert_eq!(plan.total_cost, 4);
        let text = plan.to_jsonl();
        assert!(text.starts_with("{\"description\":\"demo\",\"params\":{\"seed\":3},\"total_cost\":4}\n"));
        assert_eq!(AttackPlan::from_jsonl(&text).unwrap(), plan);
    }

    #[test]
    fn action_letters_roundtrip() {
        let a = parse_actions("pcabx").unwrap();
        assert_eq!(a, ChunkAction::ALL.to_vec());
        assert_eq!(actions_to_string(&a), "pcabx");
        assert!(parse_actions("q").is_err());
    }

    #[test]
    fn confusion_within_tolerance_never_fools() {
        let eps = Rational::new(1, 8);
        let p = Protocol611::new(ProtocolParams::new(ProtocolKind::P611, 3, eps, 64)).unwrap();
        let total = p.schedule().total_rounds();
        let tolerance = Rational::new(6, 11) - Rational::new(14, 11) * eps;
        let cap = floor_nonneg(scaled(tolerance, total));
        let chunks = p.schedule().chunk_count();
        for (x, decoy) in [("000", "001"), ("001", "000"), ("110", "010")] {
            let (x, decoy): (BitWord, BitWord) = (x.parse().unwrap(), decoy.parse().unwrap());
            let mut adv = apply_chunk_actions::<Protocol611>(vec![ChunkAction::ConfusePair; chunks], decoy).with_cap(cap);
            let r = run_session(&p, &x, &mut adv, SessionOptions::default()).unwrap();
            assert!(r.invariant_violations.is_empty(), "{:?}", r.invariant_violations);
            assert!(r.success, "{x} fooled at {}", r.total_erasure_fraction);
        }
    }

    #[test]
    fn unbounded_confusion_can_fool() {
        let p = proto();
        let chunks = p.schedule().chunk_count();
        let x: BitWord = "001".parse().unwrap();
        let mut adv = apply_chunk_actions::<Protocol611>(vec![ChunkAction::ConfusePair; chunks], "000".parse().unwrap());
        let r = run_session(&p, &x, &mut adv, SessionOptions::default()).unwrap();
        assert!(r.invariant_violations.is_empty());
        assert!(r.total_erasure_fraction > Rational::new(6, 11) - Rational::new(14, 11) * p.params().epsilon);
    }
}
