//! Round schedules, session configuration, and the alternating-turn runner
//! over an adversarial erasure channel.

use std::fmt;
use std::str::FromStr;

use num_traits::{One, Zero};
use serde::Serialize;

use crate::bits::{BitWord, ErasedWord};
use crate::ecc::{Candidate, Codebook, EccError};
use crate::rational::{ceil_nonneg, fraction, Rational};

pub type StateMap = serde_json::Map<String, serde_json::Value>;

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum ChannelError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("adversary returned a mask of length {got} for a {expected}-symbol {speaker} message in chunk {chunk}")]
    AdversaryProtocolError { chunk: usize, speaker: Speaker, expected: usize, got: usize },
    #[error("{speaker} emitted {got} symbols in chunk {chunk}, schedule expects {expected}")]
    ScheduleViolation { chunk: usize, speaker: Speaker, expected: usize, got: usize },
    #[error("session already finished")]
    Finished,
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum SetupError {
    #[error(transparent)]
    Config(#[from] ChannelError),
    #[error(transparent)]
    Code(#[from] EccError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum ProtocolKind {
    #[serde(rename = "611")]
    P611,
    #[serde(rename = "35")]
    P35,
}

impl fmt::Display for ProtocolKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ProtocolKind::P611 => "611",
            ProtocolKind::P35 => "35",
        })
    }
}

impl FromStr for ProtocolKind {
    type Err = ChannelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "611" | "6/11" | "p611" => Ok(ProtocolKind::P611),
            "35" | "3/5" | "p35" => Ok(ProtocolKind::P35),
            other => Err(ChannelError::InvalidConfig(format!("unknown protocol {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Speaker {
    Alice,
    Bob,
}

impl fmt::Display for Speaker {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Speaker::Alice => "alice",
            Speaker::Bob => "bob",
        })
    }
}

impl FromStr for Speaker {
    type Err = ChannelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "alice" => Ok(Speaker::Alice),
            "bob" => Ok(Speaker::Bob),
            other => Err(ChannelError::InvalidConfig(format!("unknown speaker {other:?}"))),
        }
    }
}

/// One chunk: Alice speaks `alice_len` rounds, then Bob `bob_len` rounds.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChunkSlot {
    pub index: usize,
    pub megablock: Option<usize>,
    /// Block index within the megablock.
    pub block: Option<usize>,
    /// Chunk index within the block (equal to `index` without blocks).
    pub chunk_in_block: usize,
    pub alice_len: usize,
    pub bob_len: usize,
    pub first_round: usize,
}

impl ChunkSlot {
    pub fn is_block_start(&self) -> bool {
        self.block.is_some() && self.chunk_in_block == 0
    }

    pub fn is_megablock_start(&self) -> bool {
        self.block == Some(0) && self.chunk_in_block == 0
    }

    pub fn round_of(&self, speaker: Speaker) -> usize {
        match speaker {
            Speaker::Alice => self.first_round,
            Speaker::Bob => self.first_round + self.alice_len,
        }
    }

    pub fn len_of(&self, speaker: Speaker) -> usize {
        match speaker {
            Speaker::Alice => self.alice_len,
            Speaker::Bob => self.bob_len,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Segment {
    pub speaker: Speaker,
    pub length: usize,
    pub chunk: usize,
    pub block: Option<usize>,
    pub megablock: Option<usize>,
    pub first_round: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScheduleShape {
    /// `chunks` chunks of `M` + `3M/8` rounds.
    P611 { chunks: usize },
    /// `megablocks` x `blocks` x `chunks`, each chunk `4M` + `M` rounds.
    P35 { megablocks: usize, blocks: usize, chunks: usize },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RoundSchedule {
    shape: ScheduleShape,
    chunks: Vec<ChunkSlot>,
    alice_rounds: usize,
    bob_rounds: usize,
}

fn check_epsilon(epsilon: Rational) -> Result<(), ChannelError> {
    if epsilon <= Rational::zero() || epsilon > Rational::new(1, 2) {
        return Err(ChannelError::InvalidConfig(format!(
            "epsilon must lie in (0, 1/2], got {epsilon}"
        )));
    }
    Ok(())
}

impl RoundSchedule {
    pub fn new(kind: ProtocolKind, n: usize, epsilon: Rational, m: usize) -> Result<Self, ChannelError> {
        if n == 0 {
            return Err(ChannelError::InvalidConfig("n must be positive".into()));
        }
        if m == 0 {
            return Err(ChannelError::InvalidConfig("M must be positive".into()));
        }
        check_epsilon(epsilon)?;
        let inv = Rational::one() / epsilon;
        let mut chunks = Vec::new();
        let mut round = 0;
        let shape = match kind {
            ProtocolKind::P611 => {
                if !m.is_multiple_of(8) {
                    return Err(ChannelError::InvalidConfig(format!(
                        "M must be divisible by 8 for the 6/11 protocol, got {m}"
                    )));
                }
                let t = ceil_nonneg(Rational::from_integer(n as i64 + 1) * inv);
                for index in 0..t {
                    chunks.push(ChunkSlot {
                        index,
                        megablock: None,
                        block: None,
                        chunk_in_block: index,
                        alice_len: m,
                        bob_len: 3 * m / 8,
                        first_round: round,
                    });
                    round += m + 3 * m / 8;
                }
                ScheduleShape::P611 { chunks: t }
            }
            ProtocolKind::P35 => {
                let a = ceil_nonneg(inv);
                let b = ceil_nonneg(Rational::from_integer(n as i64) * inv);
                let c = ceil_nonneg(inv);
                for mb in 0..a {
                    for bl in 0..b {
                        for ch in 0..c {
                            chunks.push(ChunkSlot {
                                index: chunks.len(),
                                megablock: Some(mb),
                                block: Some(bl),
                                chunk_in_block: ch,
                                alice_len: 4 * m,
                                bob_len: m,
                                first_round: round,
                            });
                            round += 5 * m;
                        }
                    }
                }
                ScheduleShape::P35 { megablocks: a, blocks: b, chunks: c }
            }
        };
        let alice_rounds = chunks.iter().map(|c| c.alice_len).sum();
        let bob_rounds = chunks.iter().map(|c| c.bob_len).sum();
        Ok(RoundSchedule { shape, chunks, alice_rounds, bob_rounds })
    }

    pub fn shape(&self) -> ScheduleShape {
        self.shape
    }

    pub fn chunks(&self) -> &[ChunkSlot] {
        &self.chunks
    }

    pub fn chunk_count(&self) -> usize {
        self.chunks.len()
    }

    pub fn total_rounds(&self) -> usize {
        self.alice_rounds + self.bob_rounds
    }

    pub fn alice_rounds(&self) -> usize {
        self.alice_rounds
    }

    pub fn bob_rounds(&self) -> usize {
        self.bob_rounds
    }

    /// Fraction of rounds in which Bob speaks.
    pub fn bob_fraction(&self) -> Rational {
        fraction(self.bob_rounds, self.total_rounds())
    }

    pub fn segments(&self) -> Vec<Segment> {
        self.chunks
            .iter()
            .flat_map(|c| {
                [Speaker::Alice, Speaker::Bob].map(|speaker| Segment {
                    speaker,
                    length: c.len_of(speaker),
                    chunk: c.index,
                    block: c.block,
                    megablock: c.megablock,
                    first_round: c.round_of(speaker),
                })
            })
            .collect()
    }
}

/// Parameters that fix a protocol instance (schedule and codebooks).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProtocolParams {
    pub protocol: ProtocolKind,
    pub n: usize,
    pub epsilon: Rational,
    pub m: usize,
    /// Epsilon used for Alice's codebook and Bob's list-decoding threshold.
    /// Defaults to `min(epsilon, 1/8)`.
    pub code_epsilon: Option<Rational>,
    pub code_seed: u64,
}

/// Largest supported input length.
pub const MAX_N: usize = 12;

impl ProtocolParams {
    pub fn new(protocol: ProtocolKind, n: usize, epsilon: Rational, m: usize) -> Self {
        ProtocolParams { protocol, n, epsilon, m, code_epsilon: None, code_seed: 1 }
    }

    /// Desk defaults: 6/11 at n=3, eps=1/2, M=64; 3/5 at n=2, eps=1/2, M=32.
    pub fn desk_default(protocol: ProtocolKind) -> Self {
        match protocol {
            ProtocolKind::P611 => Self::new(protocol, 3, Rational::new(1, 2), 64),
            ProtocolKind::P35 => Self::new(protocol, 2, Rational::new(1, 2), 32),
        }
    }

    pub fn code_epsilon(&self) -> Rational {
        self.code_epsilon.unwrap_or_else(|| self.epsilon.min(Rational::new(1, 8)))
    }

    pub fn validate(&self) -> Result<RoundSchedule, ChannelError> {
        if self.n > MAX_N {
            return Err(ChannelError::InvalidConfig(format!("n must be at most {MAX_N}")));
        }
        let ce = self.code_epsilon();
        if ce < Rational::zero() || ce >= Rational::new(1, 4) {
            return Err(ChannelError::InvalidConfig(format!(
                "code epsilon must lie in [0, 1/4), got {ce}"
            )));
        }
        RoundSchedule::new(self.protocol, self.n, self.epsilon, self.m)
    }

    /// Every input of length `n`, in ascending binary order.
    pub fn all_inputs(&self) -> Vec<BitWord> {
        (0..1usize << self.n).map(|v| BitWord::from_index(v, self.n)).collect()
    }
}

/// Exact erased fraction.
pub fn budget_fraction(erased_rounds: usize, total_rounds: usize) -> Rational {
    fraction(erased_rounds, total_rounds)
}

pub struct AliceStep<S> {
    pub state: S,
    pub word: BitWord,
    pub notes: Vec<&'static str>,
}

pub struct BobStep<S> {
    pub state: S,
    pub word: BitWord,
    pub report: BobReport,
}

/// What Bob did with one received message.
#[derive(Debug, Clone, Default)]
pub struct BobReport {
    /// Which rule fired, e.g. `case2`.
    pub case: &'static str,
    /// Candidate list when the message was below the decoding threshold.
    pub decoded: Option<Vec<Candidate>>,
    /// Output fixed during this step, with the rule that fixed it.
    pub xhat_set: Option<(BitWord, &'static str)>,
    pub notes: Vec<&'static str>,
    pub violations: Vec<&'static str>,
}

#[derive(Debug, Clone)]
pub struct Finalized {
    pub output: BitWord,
    pub flags: Vec<&'static str>,
}

/// A two-party protocol as pure step functions on immutable state values.
pub trait Protocol: Sync {
    type Alice: Clone + fmt::Debug + Send + Sync;
    type Bob: Clone + fmt::Debug + Send + Sync;

    fn params(&self) -> &ProtocolParams;
    fn schedule(&self) -> &RoundSchedule;
    /// Alice's codebook, decoded by Bob together with [`Protocol::alice_extras`].
    fn alice_codebook(&self) -> &Codebook;
    fn alice_extras(&self) -> &[BitWord];

    fn alice_start(&self, x: &BitWord) -> Self::Alice;
    /// Alice's message for `slot`, given Bob's latest delivered message.
    fn alice_send(
        &self,
        state: &Self::Alice,
        received: Option<&ErasedWord>,
        slot: &ChunkSlot,
    ) -> AliceStep<Self::Alice>;
    fn alice_input<'a>(&self, state: &'a Self::Alice) -> &'a BitWord;

    fn bob_start(&self) -> Self::Bob;
    fn bob_reply(&self, state: &Self::Bob, received: &ErasedWord, slot: &ChunkSlot) -> BobStep<Self::Bob>;
    fn bob_finalize(&self, state: &Self::Bob) -> Finalized;
    /// Bob's output once it can no longer change.
    fn bob_committed<'a>(&self, state: &'a Self::Bob) -> Option<&'a BitWord>;

    fn alice_snapshot(&self, state: &Self::Alice) -> StateMap;
    fn bob_snapshot(&self, state: &Self::Bob) -> StateMap;
    fn describe_candidate(&self, c: Candidate) -> String;

    /// Checks run after Alice sends and before Bob processes the message.
    fn check_alice_sent(&self, _alice: &Self::Alice, _sent: &BitWord, _bob: &Self::Bob) -> Vec<&'static str> {
        Vec::new()
    }

    /// Checks run after Bob processes a message, against Alice's true state.
    fn check_bob_step(&self, _alice: &Self::Alice, _bob: &Self::Bob, _report: &BobReport) -> Vec<&'static str> {
        Vec::new()
    }
}

/// Everything a white-box adversary sees when choosing a mask.
pub struct MessageView<'a, P: Protocol + ?Sized> {
    pub protocol: &'a P,
    pub slot: &'a ChunkSlot,
    pub speaker: Speaker,
    pub round: usize,
    pub sent: &'a BitWord,
    pub alice: &'a P::Alice,
    pub bob: &'a P::Bob,
    pub erased_so_far: usize,
}

/// An online adversary returns one erasure mask (1 = erased) per message.
pub trait Adversary<P: Protocol + ?Sized> {
    fn mask(&mut self, view: &MessageView<'_, P>) -> BitWord;
}

impl<P: Protocol + ?Sized, A: Adversary<P> + ?Sized> Adversary<P> for &mut A {
    fn mask(&mut self, view: &MessageView<'_, P>) -> BitWord {
        (**self).mask(view)
    }
}

impl<P: Protocol + ?Sized, A: Adversary<P> + ?Sized> Adversary<P> for Box<A> {
    fn mask(&mut self, view: &MessageView<'_, P>) -> BitWord {
        (**self).mask(view)
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct NullAdversary;

impl<P: Protocol + ?Sized> Adversary<P> for NullAdversary {
    fn mask(&mut self, view: &MessageView<'_, P>) -> BitWord {
        BitWord::zeros(view.sent.len())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum TraceKind {
    ChunkStart,
    MessageSent,
    MessageDelivered,
    DecodeResult,
    StateSnapshot,
    Finalize,
}

/// One JSONL trace record. Every field is always present, `null` when it
/// does not apply.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceEvent {
    pub round: usize,
    pub kind: TraceKind,
    pub chunk: Option<usize>,
    pub block: Option<usize>,
    pub megablock: Option<usize>,
    pub speaker: Option<Speaker>,
    pub bits: Option<String>,
    pub mask: Option<String>,
    pub candidates: Option<Vec<String>>,
    pub state: Option<StateMap>,
}

impl TraceEvent {
    fn at(kind: TraceKind, round: usize, slot: Option<&ChunkSlot>) -> Self {
        TraceEvent {
            round,
            kind,
            chunk: slot.map(|s| s.index),
            block: slot.and_then(|s| s.block),
            megablock: slot.and_then(|s| s.megablock),
            speaker: None,
            bits: None,
            mask: None,
            candidates: None,
            state: None,
        }
    }
}

/// Serializes trace events, one JSON object per line.
pub fn trace_to_jsonl(trace: &[TraceEvent]) -> String {
    let mut out = String::new();
    for ev in trace {
        out.push_str(&serde_json::to_string(ev).expect("trace events serialize"));
        out.push('\n');
    }
    out
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SessionOptions {
    pub trace: bool,
    /// Keep every message as delivered to Bob.
    pub record_bob_view: bool,
    /// Keep every applied mask.
    pub record_masks: bool,
}

/// A mask applied to one message.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AppliedMask {
    pub chunk: usize,
    pub speaker: Speaker,
    pub mask: BitWord,
}

#[derive(Debug, Clone)]
pub struct SessionResult {
    pub input: BitWord,
    pub bob_output: BitWord,
    pub success: bool,
    pub erased_alice_rounds: usize,
    pub erased_bob_rounds: usize,
    pub total_rounds: usize,
    pub total_erasure_fraction: Rational,
    pub invariant_violations: Vec<String>,
    pub flags: Vec<String>,
    pub trace: Vec<TraceEvent>,
    pub bob_view: Vec<ErasedWord>,
    pub masks: Vec<AppliedMask>,
}

/// A session in progress; cloning forks it.
pub struct Session<'p, P: Protocol> {
    protocol: &'p P,
    options: SessionOptions,
    alice: P::Alice,
    bob: P::Bob,
    next_chunk: usize,
    to_alice: Option<ErasedWord>,
    erased_alice: usize,
    erased_bob: usize,
    violations: Vec<String>,
    flags: Vec<String>,
    trace: Vec<TraceEvent>,
    bob_view: Vec<ErasedWord>,
    masks: Vec<AppliedMask>,
}

impl<P: Protocol> Clone for Session<'_, P> {
    fn clone(&self) -> Self {
        Session {
            protocol: self.protocol,
            options: self.options,
            alice: self.alice.clone(),
            bob: self.bob.clone(),
            next_chunk: self.next_chunk,
            to_alice: self.to_alice.clone(),
            erased_alice: self.erased_alice,
            erased_bob: self.erased_bob,
            violations: self.violations.clone(),
            flags: self.flags.clone(),
            trace: self.trace.clone(),
            bob_view: self.bob_view.clone(),
            masks: self.masks.clone(),
        }
    }
}

fn push_unique(list: &mut Vec<String>, item: &str) {
    if !list.iter().any(|v| v == item) {
        list.push(item.to_string());
    }
}

impl<'p, P: Protocol> Session<'p, P> {
    pub fn new(protocol: &'p P, x: &BitWord, options: SessionOptions) -> Result<Self, ChannelError> {
        if x.len() != protocol.params().n {
            return Err(ChannelError::InvalidConfig(format!(
                "input has length {}, expected n = {}",
                x.len(),
                protocol.params().n
            )));
        }
        Ok(Session {
            protocol,
            options,
            alice: protocol.alice_start(x),
            bob: protocol.bob_start(),
            next_chunk: 0,
            to_alice: None,
            erased_alice: 0,
            erased_bob: 0,
            violations: Vec::new(),
            flags: Vec::new(),
            trace: Vec::new(),
            bob_view: Vec::new(),
            masks: Vec::new(),
        })
    }

    pub fn alice(&self) -> &P::Alice {
        &self.alice
    }

    pub fn bob(&self) -> &P::Bob {
        &self.bob
    }

    pub fn next_chunk(&self) -> usize {
        self.next_chunk
    }

    pub fn is_done(&self) -> bool {
        self.next_chunk >= self.protocol.schedule().chunk_count()
    }

    pub fn erased_rounds(&self) -> usize {
        self.erased_alice + self.erased_bob
    }

    fn deliver<A: Adversary<P> + ?Sized>(
        &mut self,
        adversary: &mut A,
        slot: &ChunkSlot,
        speaker: Speaker,
        sent: &BitWord,
    ) -> Result<ErasedWord, ChannelError> {
        let expected = slot.len_of(speaker);
        if sent.len() != expected {
            return Err(ChannelError::ScheduleViolation { chunk: slot.index, speaker, expected, got: sent.len() });
        }
        let round = slot.round_of(speaker);
        let mask = adversary.mask(&MessageView {
            protocol: self.protocol,
            slot,
            speaker,
            round,
            sent,
            alice: &self.alice,
            bob: &self.bob,
            erased_so_far: self.erased_rounds(),
        });
        if mask.len() != expected {
            return Err(ChannelError::AdversaryProtocolError { chunk: slot.index, speaker, expected, got: mask.len() });
        }
        let delivered = ErasedWord::deliver(sent, &mask).expect("lengths checked");
        let erased = delivered.erasure_count();
        match speaker {
            Speaker::Alice => self.erased_alice += erased,
            Speaker::Bob => self.erased_bob += erased,
        }
        if self.options.trace {
            let mut ev = TraceEvent::at(TraceKind::MessageSent, round, Some(slot));
            ev.speaker = Some(speaker);
            ev.bits = Some(sent.to_string());
            self.trace.push(ev);
            let mut ev = TraceEvent::at(TraceKind::MessageDelivered, round, Some(slot));
            ev.speaker = Some(speaker);
            ev.bits = Some(delivered.to_string());
            ev.mask = Some(mask.to_string());
            self.trace.push(ev);
        }
        if self.options.record_masks {
            self.masks.push(AppliedMask { chunk: slot.index, speaker, mask });
        }
        Ok(delivered)
    }

    /// Runs the next chunk: Alice speaks, then Bob.
    pub fn run_chunk<A: Adversary<P> + ?Sized>(&mut self, adversary: &mut A) -> Result<(), ChannelError> {
        let protocol = self.protocol;
        let slot = protocol.schedule().chunks().get(self.next_chunk).ok_or(ChannelError::Finished)?;
        if self.options.trace {
            self.trace.push(TraceEvent::at(TraceKind::ChunkStart, slot.first_round, Some(slot)));
        }

        let step = protocol.alice_send(&self.alice, self.to_alice.as_ref(), slot);
        self.alice = step.state;
        for note in step.notes {
            push_unique(&mut self.flags, note);
        }
        let a_word = step.word;
        let to_bob = self.deliver(adversary, slot, Speaker::Alice, &a_word)?;
        for v in protocol.check_alice_sent(&self.alice, &a_word, &self.bob) {
            push_unique(&mut self.violations, v);
        }
        if self.options.record_bob_view {
            self.bob_view.push(to_bob.clone());
        }

        let step = protocol.bob_reply(&self.bob, &to_bob, slot);
        self.bob = step.state;
        let report = step.report;
        let x = protocol.alice_input(&self.alice);
        for v in protocol.check_bob_step(&self.alice, &self.bob, &report).into_iter().chain(report.violations.iter().copied()) {
            push_unique(&mut self.violations, v);
        }
        if let Some((xhat, rule)) = &report.xhat_set {
            if xhat != x {
                push_unique(&mut self.violations, &format!("{rule}_unsound"));
            }
        }
        for note in &report.notes {
            push_unique(&mut self.flags, note);
        }
        if self.options.trace {
            let round = slot.round_of(Speaker::Bob);
            let mut ev = TraceEvent::at(TraceKind::DecodeResult, round, Some(slot));
            ev.speaker = Some(Speaker::Bob);
            ev.candidates = report
                .decoded
                .as_ref()
                .map(|l| l.iter().map(|c| protocol.describe_candidate(*c)).collect());
            let mut st = StateMap::new();
            st.insert("case".into(), report.case.into());
            ev.state = Some(st);
            self.trace.push(ev);
            for (speaker, state) in [
                (Speaker::Alice, protocol.alice_snapshot(&self.alice)),
                (Speaker::Bob, protocol.bob_snapshot(&self.bob)),
            ] {
                let mut ev = TraceEvent::at(TraceKind::StateSnapshot, round, Some(slot));
                ev.speaker = Some(speaker);
                ev.state = Some(state);
                self.trace.push(ev);
            }
        }

        let b_word = step.word;
        let to_alice = self.deliver(adversary, slot, Speaker::Bob, &b_word)?;
        self.to_alice = Some(to_alice);
        self.next_chunk += 1;
        Ok(())
    }

    pub fn finish(mut self) -> SessionResult {
        let protocol = self.protocol;
        let fin = protocol.bob_finalize(&self.bob);
        for f in fin.flags {
            push_unique(&mut self.flags, f);
        }
        let x = protocol.alice_input(&self.alice).clone();
        let total = protocol.schedule().total_rounds();
        let success = fin.output == x;
        if self.options.trace {
            let mut ev = TraceEvent::at(TraceKind::Finalize, total, None);
            ev.speaker = Some(Speaker::Bob);
            ev.bits = Some(fin.output.to_string());
            let mut st = StateMap::new();
            st.insert("success".into(), success.into());
            st.insert("flags".into(), self.flags.clone().into());
            st.insert("violations".into(), self.violations.clone().into());
            ev.state = Some(st);
            self.trace.push(ev);
        }
        SessionResult {
            input: x,
            bob_output: fin.output,
            success,
            erased_alice_rounds: self.erased_alice,
            erased_bob_rounds: self.erased_bob,
            total_rounds: total,
            total_erasure_fraction: budget_fraction(self.erased_alice + self.erased_bob, total),
            invariant_violations: self.violations,
            flags: self.flags,
            trace: self.trace,
            bob_view: self.bob_view,
            masks: self.masks,
        }
    }
}

/// Runs a whole session of `protocol` on input `x`.
pub fn run_session<P: Protocol, A: Adversary<P> + ?Sized>(
    protocol: &P,
    x: &BitWord,
    adversary: &mut A,
    options: SessionOptions,
) -> Result<SessionResult, ChannelError> {
    let mut s = Session::new(protocol, x, options)?;
    while !s.is_done() {
        s.run_chunk(adversary)?;
    }
    Ok(s.finish())
}
