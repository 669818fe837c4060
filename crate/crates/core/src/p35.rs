//! The 3/5 protocol: megablocks of blocks of chunks. Alice advances a
//! counter through three stages under Bob's 0/1 signals; Bob tracks, for each
//! of his two hypotheses, the set of messages Alice could be sending next.
//!
//! Positions of `x` are 0-indexed; Bob's counter target for index `i` is
//! `2(i + 1)`, and an even counter `c >= 2` refers to `x[c/2 - 1]`.

use std::collections::BTreeSet;

use serde_json::json;

use crate::bits::{BitWord, ErasedWord};
use crate::channel::{
    AliceStep, BobReport, BobStep, ChunkSlot, Finalized, Protocol, ProtocolKind, ProtocolParams,
    RoundSchedule, SetupError, StateMap,
};
use crate::ecc::{below_list_threshold, build_codebook, erasure_list_decode, Candidate, Codebook};

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum P35Error {
    #[error("message {0:?} is not a word Alice can send")]
    UnknownWord(Msg),
}

/// The fields Alice encodes in every non-terminal message.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Fields {
    pub x: BitWord,
    pub cnt: usize,
    pub cnfm: bool,
    pub rec: bool,
    /// -1 in Stage 1, then 0 or 1.
    pub knt: i8,
    pub stg2: bool,
}

/// One of Alice's possible messages.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Msg {
    Ecc(usize),
    Const(bool),
}

impl From<Candidate> for Msg {
    fn from(c: Candidate) -> Self {
        match c {
            Candidate::Word(k) => Msg::Ecc(k),
            Candidate::Extra(k) => Msg::Const(k == 1),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AliceState {
    pub x: BitWord,
    pub stage: u8,
    pub cnt: usize,
    pub cnfm: bool,
    pub rec: bool,
    pub knt: i8,
    pub stg2: bool,
    pub beta: Option<bool>,
    pub last_sent: Option<Msg>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Until {
    EndOfMegablock,
    Forever,
}

/// Bob sends `bit` regardless of other rules until the window expires.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Forced {
    pub bit: bool,
    pub until: Until,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Pending {
    Phase2 { stage2_world: usize },
    Phase3 { stage3_world: usize, beta: bool, other: Msg },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct World {
    pub x: BitWord,
    /// Messages Alice could send next if this world is the true one.
    pub s: BTreeSet<Msg>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BobState {
    pub phase: u8,
    pub xhat: Option<BitWord>,
    pub worlds: Option<[World; 2]>,
    /// Smallest index on which the two hypotheses differ.
    pub i: usize,
    pub forced: Option<Forced>,
    pub pending: Option<Pending>,
    pub stage2_world: Option<usize>,
    /// World in Stage 3 and the bit it repeats.
    pub stage3: Option<(usize, bool)>,
    pub j: Option<bool>,
    pub last_sent: bool,
    pub last_received_bit: Option<bool>,
}

pub struct Protocol35 {
    params: ProtocolParams,
    schedule: RoundSchedule,
    alice_code: Codebook,
    extras: Vec<BitWord>,
    bob_words: [BitWord; 2],
}

fn first_difference(a: &BitWord, b: &BitWord) -> Option<usize> {
    (0..a.len()).find(|&k| a.get(k) != b.get(k))
}

impl Protocol35 {
    pub fn new(params: ProtocolParams) -> Result<Self, SetupError> {
        let mut params = params;
        params.protocol = ProtocolKind::P35;
        let schedule = params.validate()?;
        let len = 4 * params.m;
        let extras = vec![BitWord::zeros(len), BitWord::ones(len)];
        let count = Self::message_count(params.n);
        let alice_code = build_codebook(count, len, params.code_epsilon(), extras.clone(), params.code_seed)?;
        let bob_words = [BitWord::zeros(params.m), BitWord::ones(params.m)];
        Ok(Protocol35 { params, schedule, alice_code, extras, bob_words })
    }

    /// Size of the field space: x, cnt in [0, 2n], cnfm, rec, knt, stg2.
    pub fn message_count(n: usize) -> usize {
        (1usize << n) * (2 * n + 1) * 2 * 2 * 3 * 2
    }

    fn max_cnt(&self) -> usize {
        2 * self.params.n
    }

    pub fn index_of(&self, f: &Fields) -> usize {
        let mut k = f.x.to_index();
        k = k * (self.max_cnt() + 1) + f.cnt;
        k = k * 2 + f.cnfm as usize;
        k = k * 2 + f.rec as usize;
        k = k * 3 + (f.knt + 1) as usize;
        k * 2 + f.stg2 as usize
    }

    pub fn fields_of(&self, index: usize) -> Fields {
        let mut k = index;
        let stg2 = k % 2 == 1;
        k /= 2;
        let knt = (k % 3) as i8 - 1;
        k /= 3;
        let rec = k % 2 == 1;
        k /= 2;
        let cnfm = k % 2 == 1;
        k /= 2;
        let cnt = k % (self.max_cnt() + 1);
        k /= self.max_cnt() + 1;
        Fields { x: BitWord::from_index(k, self.params.n), cnt, cnfm, rec, knt, stg2 }
    }

    pub fn word_of(&self, msg: Msg) -> &BitWord {
        match msg {
            Msg::Ecc(k) => &self.alice_code.words()[k],
            Msg::Const(b) => &self.extras[b as usize],
        }
    }

    pub fn bob_word(&self, bit: bool) -> &BitWord {
        &self.bob_words[bit as usize]
    }

    fn msg_of_state(&self, s: &AliceState) -> Msg {
        match s.beta {
            Some(b) => Msg::Const(b),
            None => Msg::Ecc(self.index_of(&Fields {
                x: s.x.clone(),
                cnt: s.cnt,
                cnfm: s.cnfm,
                rec: s.rec,
                knt: s.knt,
                stg2: s.stg2,
            })),
        }
    }

    /// Rebuilds the only Alice state that sends `msg`.
    pub fn state_of_msg(&self, msg: Msg) -> Result<AliceState, P35Error> {
        match msg {
            Msg::Const(b) => Ok(AliceState {
                x: BitWord::zeros(self.params.n),
                stage: 3,
                cnt: 0,
                cnfm: false,
                rec: false,
                knt: -1,
                stg2: false,
                beta: Some(b),
                last_sent: Some(msg),
            }),
            Msg::Ecc(k) => {
                if k >= self.alice_code.len() {
                    return Err(P35Error::UnknownWord(msg));
                }
                let f = self.fields_of(k);
                if f.knt == -1 && f.stg2 {
                    return Err(P35Error::UnknownWord(msg));
                }
                Ok(AliceState {
                    stage: if f.knt == -1 { 1 } else { 2 },
                    x: f.x,
                    cnt: f.cnt,
                    cnfm: f.cnfm,
                    rec: f.rec,
                    knt: f.knt,
                    stg2: f.stg2,
                    beta: None,
                    last_sent: Some(msg),
                })
            }
        }
    }

    /// Alice's deterministic transition. `heard` is Bob's latest word as
    /// Alice decoded it, `None` if fully erased or absent.
    pub fn alice_step(&self, state: &AliceState, heard: Option<bool>, slot: &ChunkSlot) -> (AliceState, Msg, Vec<&'static str>) {
        let mut s = state.clone();
        let mut notes = Vec::new();
        if s.stage == 3 {
            let m = self.msg_of_state(&s);
            s.last_sent = Some(m);
            return (s, m, notes);
        }
        if slot.is_block_start() {
            if slot.is_megablock_start() {
                if s.stage == 1 {
                    s.cnt = 0;
                    s.knt = -1;
                } else {
                    s.knt = 0;
                }
                s.cnfm = true;
                s.stg2 = false;
            }
            if !s.stg2 {
                s.rec = false;
            }
        } else if !s.stg2 {
            match heard {
                None => {}
                Some(true) => {
                    s.rec = true;
                    if s.cnfm {
                        s.cnfm = false;
                        if s.stage == 1 {
                            if s.cnt < self.max_cnt() {
                                s.cnt += 1;
                            } else {
                                notes.push("alice_counter_saturated");
                            }
                        } else if s.knt < 1 {
                            s.knt += 1;
                        } else {
                            notes.push("alice_knt_saturated");
                        }
                    }
                }
                Some(false) if s.rec => s.cnfm = true,
                Some(false) => {
                    if s.stage == 1 {
                        if s.cnt % 2 == 1 {
                            s.beta = Some(true);
                        } else if s.cnt == 0 {
                            s.beta = Some(false);
                        } else {
                            let pos = s.cnt / 2 - 1;
                            let pos = if pos >= self.params.n {
                                notes.push("alice_index_clamped");
                                self.params.n - 1
                            } else {
                                pos
                            };
                            if s.x.get(pos) {
                                s.stage = 2;
                                s.knt = 0;
                                s.stg2 = true;
                            } else {
                                s.beta = Some(false);
                            }
                        }
                    } else {
                        s.beta = Some(s.knt == 0);
                    }
                    if s.beta.is_some() {
                        s.stage = 3;
                    }
                }
            }
        }
        let m = self.msg_of_state(&s);
        s.last_sent = Some(m);
        (s, m, notes)
    }

    /// Alice's next message had she last sent `msg`, given whether she hears
    /// Bob's `bob_bit`, at position `next`.
    pub fn simulate_alice_step(&self, msg: Msg, bob_bit: Option<bool>, next: &ChunkSlot) -> Result<Msg, P35Error> {
        let state = self.state_of_msg(msg)?;
        Ok(self.alice_step(&state, bob_bit, next).1)
    }

    fn is_advanced(&self, m: Msg) -> bool {
        match m {
            Msg::Const(_) => true,
            Msg::Ecc(k) => self.fields_of(k).knt >= 0,
        }
    }

    fn in_stage2(&self, m: Msg) -> bool {
        matches!(m, Msg::Ecc(k) if self.fields_of(k).knt >= 0)
    }

    fn admissible_for_init(&self, m: Msg) -> Option<Fields> {
        let Msg::Ecc(k) = m else { return None };
        let f = self.fields_of(k);
        let ok = f.knt == -1 && !f.stg2 && !f.cnfm && !(f.cnt == 0 && f.rec);
        ok.then_some(f)
    }

    fn lemma_violations(&self, worlds: &[World; 2], out: &mut Vec<&'static str>) {
        if !worlds[0].s.is_disjoint(&worlds[1].s) {
            out.push("lemma_overlap");
        }
        let stage2 = |w: &World| w.s.iter().any(|m| self.in_stage2(*m));
        if stage2(&worlds[0]) && stage2(&worlds[1]) {
            out.push("lemma_both_stage2");
        }
    }

    fn counter_of(&self, m: Msg) -> Option<(usize, i8)> {
        match m {
            Msg::Ecc(k) => {
                let f = self.fields_of(k);
                Some((f.cnt, f.knt))
            }
            Msg::Const(_) => None,
        }
    }

    fn phase1_message(&self, s: &mut BobState, pair: Option<(Msg, Msg)>, slot: &ChunkSlot, report: &mut BobReport) -> bool {
        let default = slot.is_block_start() || s.last_sent;
        let Some((m0, m1)) = pair else {
            report.case = "case1";
            return default;
        };
        if self.is_advanced(m0) || self.is_advanced(m1) {
            report.case = "case4";
            let pending = match (m0, m1) {
                (_, Msg::Const(b)) => Pending::Phase3 { stage3_world: 1, beta: b, other: m0 },
                (Msg::Const(b), _) => Pending::Phase3 { stage3_world: 0, beta: b, other: m1 },
                _ => Pending::Phase2 { stage2_world: if self.in_stage2(m1) { 1 } else { 0 } },
            };
            s.pending = Some(pending);
            if s.forced.is_none() {
                s.forced = Some(Forced { bit: true, until: Until::EndOfMegablock });
            }
            return true;
        }
        let f0 = match m0 {
            Msg::Ecc(k) => self.fields_of(k),
            Msg::Const(_) => unreachable!("constants are advanced"),
        };
        let f1 = match m1 {
            Msg::Ecc(k) => self.fields_of(k),
            Msg::Const(_) => unreachable!("constants are advanced"),
        };
        let target = 2 * (s.i + 1);
        if f0.cnt != f1.cnt || f0.cnt == target {
            report.case = "case5";
            if s.forced.is_none() {
                s.forced = Some(Forced { bit: false, until: Until::EndOfMegablock });
            }
            false
        } else if !f0.rec && !f1.rec {
            report.case = "case6";
            true
        } else {
            report.case = "case7";
            false
        }
    }

    fn phase3_message(&self, s: &mut BobState, pair: Option<(Msg, Msg)>, slot: &ChunkSlot, report: &mut BobReport) -> bool {
        if s.j != Some(true) {
            report.case = "phase3_hold";
            return false;
        }
        let default = slot.is_block_start() || s.last_sent;
        let (Some((m0, m1)), Some((w, _))) = (pair, s.stage3) else {
            report.case = "case1";
            return default;
        };
        let other = if w == 1 { m0 } else { m1 };
        match self.counter_of(other) {
            Some((cnt, knt)) => {
                let counter = if knt == -1 { cnt } else { knt as usize };
                if counter == 0 {
                    report.case = "phase3_case4";
                    true
                } else {
                    report.case = "phase3_case5";
                    if s.forced.is_none() {
                        s.forced = Some(Forced { bit: false, until: Until::EndOfMegablock });
                    }
                    false
                }
            }
            None => {
                report.case = "phase3_settled";
                default
            }
        }
    }

    fn enter_pending(&self, s: &mut BobState) {
        let Some(p) = s.pending.take() else { return };
        match p {
            Pending::Phase2 { stage2_world } => {
                s.phase = 2;
                s.stage2_world = Some(stage2_world);
                s.forced = Some(Forced { bit: false, until: Until::Forever });
            }
            Pending::Phase3 { stage3_world, beta, other } => {
                s.phase = 3;
                s.stage3 = Some((stage3_world, beta));
                s.j = self.counter_of(other).map(|(_, knt)| if knt == -1 { !beta } else { beta });
                if s.j != Some(true) {
                    s.forced = Some(Forced { bit: false, until: Until::Forever });
                }
            }
        }
    }

    fn expand(&self, worlds: &mut [World; 2], sent: bool, next: &ChunkSlot) {
        for w in worlds.iter_mut() {
            let mut grown = BTreeSet::new();
            for m in &w.s {
                for heard in [Some(sent), None] {
                    if let Ok(n) = self.simulate_alice_step(*m, heard, next) {
                        grown.insert(n);
                    }
                }
            }
            w.s = grown;
        }
    }
}

fn decided(mut s: BobState, x: BitWord, rule: &'static str, report: &mut BobReport) -> BobState {
    report.xhat_set = Some((x.clone(), rule));
    s.xhat = Some(x);
    s
}

impl Protocol for Protocol35 {
    type Alice = AliceState;
    type Bob = BobState;

    fn params(&self) -> &ProtocolParams {
        &self.params
    }

    fn schedule(&self) -> &RoundSchedule {
        &self.schedule
    }

    fn alice_codebook(&self) -> &Codebook {
        &self.alice_code
    }

    fn alice_extras(&self) -> &[BitWord] {
        &self.extras
    }

    fn alice_start(&self, x: &BitWord) -> AliceState {
        AliceState {
            x: x.clone(),
            stage: 1,
            cnt: 0,
            cnfm: true,
            rec: false,
            knt: -1,
            stg2: false,
            beta: None,
            last_sent: None,
        }
    }

    fn alice_input<'a>(&self, state: &'a AliceState) -> &'a BitWord {
        &state.x
    }

    fn alice_send(&self, state: &AliceState, received: Option<&ErasedWord>, slot: &ChunkSlot) -> AliceStep<AliceState> {
        let heard = received.and_then(|r| (0..r.len()).find_map(|k| r.get(k)));
        let (state, msg, notes) = self.alice_step(state, heard, slot);
        AliceStep { word: self.word_of(msg).clone(), state, notes }
    }

    fn bob_start(&self) -> BobState {
        BobState {
            phase: 1,
            xhat: None,
            worlds: None,
            i: 0,
            forced: None,
            pending: None,
            stage2_world: None,
            stage3: None,
            j: None,
            last_sent: true,
            last_received_bit: None,
        }
    }

    fn bob_committed<'a>(&self, state: &'a BobState) -> Option<&'a BitWord> {
        state.xhat.as_ref()
    }

    fn bob_reply(&self, state: &BobState, received: &ErasedWord, slot: &ChunkSlot) -> BobStep<BobState> {
        let mut s = state.clone();
        let mut report = BobReport::default();
        if let Some(bit) = received.last_symbol() {
            s.last_received_bit = Some(bit);
        }
        let send = |mut s: BobState, bit: bool, report: BobReport| {
            s.last_sent = bit;
            BobStep { word: self.bob_word(bit).clone(), state: s, report }
        };
        if s.xhat.is_some() {
            report.case = "decided";
            return send(s, true, report);
        }
        if slot.is_megablock_start() {
            if matches!(s.forced, Some(Forced { until: Until::EndOfMegablock, .. })) {
                s.forced = None;
            }
            self.enter_pending(&mut s);
        }

        let mut list = None;
        if below_list_threshold(received.erasure_count(), self.params.code_epsilon(), received.len()) {
            let l = erasure_list_decode(&self.alice_code, received, &self.extras).expect("lengths match");
            if l.len() > 2 {
                report.violations.push("list_too_large");
            } else {
                report.decoded = Some(l.clone());
                list = Some(l.into_iter().map(Msg::from).collect::<Vec<_>>());
            }
        }

        let mut pair = None;
        match (&mut s.worlds, list) {
            (None, Some(l)) => match l.as_slice() {
                [Msg::Ecc(k)] => {
                    let x = self.fields_of(*k).x;
                    report.case = "init";
                    let s = decided(s, x, "unique_decode", &mut report);
                    return send(s, true, report);
                }
                [Msg::Const(_)] => report.violations.push("premature_constant"),
                [a, b] => match (self.admissible_for_init(*a), self.admissible_for_init(*b)) {
                    (Some(f0), Some(f1)) if f0.x == f1.x => {
                        report.case = "init";
                        let s = decided(s, f0.x, "init_same_input", &mut report);
                        return send(s, true, report);
                    }
                    (Some(f0), Some(f1)) => {
                        s.i = first_difference(&f0.x, &f1.x).expect("distinct inputs");
                        s.worlds = Some([
                            World { x: f0.x, s: BTreeSet::from([*a]) },
                            World { x: f1.x, s: BTreeSet::from([*b]) },
                        ]);
                        pair = Some((*a, *b));
                    }
                    _ => report.notes.push("init_skipped"),
                },
                _ => {}
            },
            (Some(worlds), Some(l)) => {
                let hit: Vec<bool> = worlds.iter().map(|w| l.iter().any(|m| w.s.contains(m))).collect();
                match (hit[0], hit[1]) {
                    (false, false) => report.violations.push("no_consistent_world"),
                    (true, false) | (false, true) => {
                        let keep = if hit[0] { 0 } else { 1 };
                        let rule = if l.len() == 1 { "unique_decode" } else { "world_inconsistent" };
                        let x = worlds[keep].x.clone();
                        report.case = "case2";
                        let s = decided(s, x, rule, &mut report);
                        return send(s, true, report);
                    }
                    (true, true) => {
                        if l.len() == 1 {
                            report.violations.push("lemma_overlap");
                        } else {
                            let (m0, m1) = if worlds[0].s.contains(&l[0]) && worlds[1].s.contains(&l[1]) {
                                (l[0], l[1])
                            } else {
                                (l[1], l[0])
                            };
                            worlds[0].s = BTreeSet::from([m0]);
                            worlds[1].s = BTreeSet::from([m1]);
                            pair = Some((m0, m1));
                        }
                    }
                }
            }
            (_, None) => {}
        }
        if let Some(w) = &s.worlds {
            self.lemma_violations(w, &mut report.violations);
        }

        let bit = match s.phase {
            1 => self.phase1_message(&mut s, pair, slot, &mut report),
            2 => {
                report.case = "phase2";
                false
            }
            _ => self.phase3_message(&mut s, pair, slot, &mut report),
        };
        let bit = s.forced.map(|f| f.bit).unwrap_or(bit);

        if let Some(next) = self.schedule.chunks().get(slot.index + 1) {
            if let Some(worlds) = &mut s.worlds {
                self.expand(worlds, bit, next);
                self.lemma_violations(worlds, &mut report.violations);
            }
        }
        send(s, bit, report)
    }

    fn bob_finalize(&self, state: &BobState) -> Finalized {
        if let Some(x) = &state.xhat {
            return Finalized { output: x.clone(), flags: vec![] };
        }
        let fallback = || Finalized {
            output: state
                .worlds
                .as_ref()
                .map(|w| w[0].x.clone())
                .unwrap_or_else(|| BitWord::zeros(self.params.n)),
            flags: vec!["finalize_fallback"],
        };
        let (Some(worlds), Some(d)) = (&state.worlds, state.last_received_bit) else {
            return fallback();
        };
        match (state.phase, state.stage2_world, state.stage3) {
            (2, Some(w), _) => {
                let pick = if d { w } else { 1 - w };
                Finalized { output: worlds[pick].x.clone(), flags: vec![] }
            }
            (3, _, Some((w, beta))) => {
                let pick = if d == beta { w } else { 1 - w };
                Finalized { output: worlds[pick].x.clone(), flags: vec![] }
            }
            _ => fallback(),
        }
    }

    fn alice_snapshot(&self, s: &AliceState) -> StateMap {
        let v = json!({
            "stage": s.stage,
            "cnt": s.cnt,
            "cnfm": s.cnfm,
            "rec": s.rec,
            "knt": s.knt,
            "stg2": s.stg2,
            "beta": s.beta.map(u8::from),
        });
        v.as_object().cloned().unwrap_or_default()
    }

    fn bob_snapshot(&self, s: &BobState) -> StateMap {
        let sizes = s.worlds.as_ref().map(|w| (w[0].s.len(), w[1].s.len()));
        let forced = s.forced.map(|f| {
            let until = match f.until {
                Until::EndOfMegablock => "end_of_megablock",
                Until::Forever => "forever",
            };
            format!("{}:{}", u8::from(f.bit), until)
        });
        let pending = s.pending.map(|p| match p {
            Pending::Phase2 { .. } => 2,
            Pending::Phase3 { .. } => 3,
        });
        let v = json!({
            "phase": s.phase,
            "S0_size": sizes.map(|z| z.0),
            "S1_size": sizes.map(|z| z.1),
            "forced": forced,
            "pending": pending,
            "xhat": s.xhat.as_ref().map(|x| x.to_string()),
        });
        v.as_object().cloned().unwrap_or_default()
    }

    fn describe_candidate(&self, c: Candidate) -> String {
        match Msg::from(c) {
            Msg::Ecc(k) => {
                let f = self.fields_of(k);
                format!(
                    "x={},cnt={},cnfm={},rec={},knt={},stg2={}",
                    f.x, f.cnt, f.cnfm as u8, f.rec as u8, f.knt, f.stg2 as u8
                )
            }
            Msg::Const(b) => format!("const={}", b as u8),
        }
    }

    fn check_alice_sent(&self, alice: &AliceState, _sent: &BitWord, bob: &BobState) -> Vec<&'static str> {
        let (Some(worlds), None, Some(msg)) = (&bob.worlds, &bob.xhat, alice.last_sent) else {
            return Vec::new();
        };
        match worlds.iter().find(|w| w.x == alice.x) {
            Some(w) if !w.s.contains(&msg) => vec!["true_world_not_contained"],
            _ => Vec::new(),
        }
    }
}
