//! The 6/11 protocol: Alice streams `ECC(x, cnt)`, Bob steers her counter
//! with four short codewords until it reaches the first index on which his
//! two hypotheses differ, then asks one question.

use serde_json::json;

use crate::bits::{BitWord, ErasedWord};
use crate::channel::{
    AliceStep, BobReport, BobStep, ChunkSlot, Finalized, Protocol, ProtocolKind, ProtocolParams,
    RoundSchedule, SetupError, StateMap,
};
use crate::ecc::{below_list_threshold, build_codebook, erasure_list_decode, Candidate, Codebook};
use crate::rational::Rational;

/// Bob's four words: `(000)`, `(011)`, `(101)`, `(110)` repeated `M/8` times.
pub fn bob_codebook(m: usize) -> Codebook {
    let words = ["000", "011", "101", "110"]
        .iter()
        .map(|p| BitWord::repeat(&p.parse().expect("static pattern"), m / 8))
        .collect();
    Codebook::from_words(words, Rational::new(0, 1), vec![], 0).expect("equal lengths")
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AliceState {
    pub x: BitWord,
    pub cnt: usize,
    /// Index of the last Bob word acted on (0 or 1).
    pub mes: u8,
    /// Set once Alice answers a question; she then repeats `bit^M`.
    pub terminal: Option<bool>,
    pub last_sent: Option<BitWord>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Question {
    /// Ask for `x[i]`.
    Bit,
    /// Ask for the parity of Alice's counter.
    Parity,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BobState {
    /// 1 while steering the counter, 2 while asking a question.
    pub phase: u8,
    /// Index (0 or 1) of the word Bob currently sends in Phase 1.
    pub mes: u8,
    pub xhat: Option<BitWord>,
    pub hypotheses: Option<(BitWord, BitWord)>,
    pub i: usize,
    pub last: usize,
    pub ques: Option<Question>,
    pub par: bool,
    pub last_received_bit: Option<bool>,
}

pub struct Protocol611 {
    params: ProtocolParams,
    schedule: RoundSchedule,
    alice_code: Codebook,
    extras: Vec<BitWord>,
    bob_code: Codebook,
}

impl Protocol611 {
    pub fn new(params: ProtocolParams) -> Result<Self, SetupError> {
        let mut params = params;
        params.protocol = ProtocolKind::P611;
        let schedule = params.validate()?;
        let m = params.m;
        let extras = vec![BitWord::zeros(m), BitWord::ones(m)];
        let count = (1usize << params.n) * (params.n + 1);
        let alice_code = build_codebook(count, m, params.code_epsilon(), extras.clone(), params.code_seed)?;
        Ok(Protocol611 { bob_code: bob_codebook(m), params, schedule, alice_code, extras })
    }

    /// Codebook index of `ECC(x, cnt)`.
    pub fn message_index(&self, x: &BitWord, cnt: usize) -> usize {
        x.to_index() * (self.params.n + 1) + cnt
    }

    /// Inverse of [`Protocol611::message_index`].
    pub fn message_fields(&self, index: usize) -> (BitWord, usize) {
        let n = self.params.n;
        (BitWord::from_index(index / (n + 1), n), index % (n + 1))
    }

    pub fn alice_word(&self, x: &BitWord, cnt: usize) -> &BitWord {
        &self.alice_code.words()[self.message_index(x, cnt)]
    }

    pub fn bob_word(&self, k: u8) -> &BitWord {
        &self.bob_code.words()[k as usize]
    }

    pub fn bob_code(&self) -> &Codebook {
        &self.bob_code
    }

    fn bob_send(&self, state: BobState, word: u8, report: BobReport) -> BobStep<BobState> {
        BobStep { word: self.bob_word(word).clone(), state, report }
    }
}

fn first_difference(a: &BitWord, b: &BitWord) -> Option<usize> {
    (0..a.len()).find(|&k| a.get(k) != b.get(k))
}

fn question_word(q: Question) -> u8 {
    match q {
        Question::Bit => 2,
        Question::Parity => 3,
    }
}

impl Protocol for Protocol611 {
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
        AliceState { x: x.clone(), cnt: 0, mes: 0, terminal: None, last_sent: None }
    }

    fn alice_input<'a>(&self, state: &'a AliceState) -> &'a BitWord {
        &state.x
    }

    fn alice_send(&self, state: &AliceState, received: Option<&ErasedWord>, _slot: &ChunkSlot) -> AliceStep<AliceState> {
        let m = self.params.m;
        let n = self.params.n;
        let mut s = state.clone();
        let mut notes = Vec::new();
        if let Some(bit) = s.terminal {
            let word = BitWord::constant(bit, m);
            s.last_sent = Some(word.clone());
            return AliceStep { state: s, word, notes };
        }
        // Anything Alice cannot pin down to one of Bob's words is a resend.
        let heard = received.and_then(|r| {
            if 3 * r.erasure_count() >= 2 * r.len() {
                return None;
            }
            let list = erasure_list_decode(&self.bob_code, r, &[]).ok()?;
            match list.as_slice() {
                [Candidate::Word(k)] => Some(*k as u8),
                _ => None,
            }
        });
        match heard {
            Some(k @ (0 | 1)) if k != s.mes => {
                s.mes = k;
                if s.cnt < n {
                    s.cnt += 1;
                } else {
                    notes.push("alice_counter_saturated");
                }
            }
            Some(2) => {
                let idx = if s.cnt >= n {
                    notes.push("alice_index_clamped");
                    n - 1
                } else {
                    s.cnt
                };
                s.terminal = Some(s.x.get(idx));
            }
            Some(3) => s.terminal = Some(s.cnt % 2 == 1),
            _ => {}
        }
        let word = match s.terminal {
            Some(bit) => BitWord::constant(bit, m),
            None => self.alice_word(&s.x, s.cnt).clone(),
        };
        s.last_sent = Some(word.clone());
        AliceStep { state: s, word, notes }
    }

    fn bob_start(&self) -> BobState {
        BobState {
            phase: 1,
            mes: 0,
            xhat: None,
            hypotheses: None,
            i: 0,
            last: 0,
            ques: None,
            par: false,
            last_received_bit: None,
        }
    }

    fn bob_committed<'a>(&self, state: &'a BobState) -> Option<&'a BitWord> {
        state.xhat.as_ref()
    }

    fn bob_reply(&self, state: &BobState, received: &ErasedWord, _slot: &ChunkSlot) -> BobStep<BobState> {
        let mut s = state.clone();
        let mut report = BobReport::default();
        if let Some(bit) = received.last_symbol() {
            s.last_received_bit = Some(bit);
        }
        if s.xhat.is_some() {
            report.case = "decided";
            return self.bob_send(s, 1, report);
        }
        if let Some(q) = s.ques {
            report.case = "phase2";
            return self.bob_send(s, question_word(q), report);
        }
        if !below_list_threshold(received.erasure_count(), self.params.code_epsilon(), received.len()) {
            report.case = "case1";
            let mes = s.mes;
            return self.bob_send(s, mes, report);
        }
        let list = erasure_list_decode(&self.alice_code, received, &self.extras).expect("lengths match");
        report.decoded = Some(list.clone());
        if list.len() > 2 {
            report.case = "case1";
            report.violations.push("list_too_large");
            let mes = s.mes;
            return self.bob_send(s, mes, report);
        }
        let worlds: Vec<(BitWord, usize)> = list
            .iter()
            .filter_map(|c| match c {
                Candidate::Word(k) => Some(self.message_fields(*k)),
                Candidate::Extra(_) => None,
            })
            .collect();

        match (worlds.as_slice(), s.hypotheses.clone()) {
            ([], _) => {
                report.case = "case2";
                report.violations.push("no_ecc_candidate");
                let mes = s.mes;
                self.bob_send(s, mes, report)
            }
            ([(x, _)], _) => {
                report.case = "case2";
                s.xhat = Some(x.clone());
                report.xhat_set = Some((x.clone(), "unique_decode"));
                self.bob_send(s, 1, report)
            }
            ([(x0, c0), (x1, c1)], None) => {
                report.case = "case3";
                if *c0 != 0 || *c1 != 0 {
                    let zero = if *c0 == 0 {
                        Some(x0)
                    } else if *c1 == 0 {
                        Some(x1)
                    } else {
                        None
                    };
                    return match zero {
                        Some(x) => {
                            s.xhat = Some(x.clone());
                            report.xhat_set = Some((x.clone(), "first_pair_counter"));
                            self.bob_send(s, 1, report)
                        }
                        None => {
                            report.violations.push("first_pair_no_zero_counter");
                            let mes = s.mes;
                            self.bob_send(s, mes, report)
                        }
                    };
                }
                let i = first_difference(x0, x1).expect("distinct words with equal counters");
                s.hypotheses = Some((x0.clone(), x1.clone()));
                s.i = i;
                s.last = 0;
                if i == 0 {
                    // Both counters already sit on the target index.
                    report.notes.push("target_reached_at_init");
                    s.phase = 2;
                    s.ques = Some(Question::Bit);
                    return self.bob_send(s, 2, report);
                }
                s.mes = 1;
                self.bob_send(s, 1, report)
            }
            ([a, b], Some((h0, h1))) => {
                report.case = "case4";
                let (w0, w1) = if a.0 == h0 {
                    (a, b)
                } else if b.0 == h0 || a.0 == h1 {
                    (b, a)
                } else {
                    (a, b)
                };
                let last = s.last;
                let bad = |w: &(BitWord, usize), h: &BitWord| w.0 != *h || (w.1 != last && w.1 != last + 1);
                match (bad(w0, &h0), bad(w1, &h1)) {
                    (true, true) => {
                        report.violations.push("no_consistent_world");
                        let mes = s.mes;
                        return self.bob_send(s, mes, report);
                    }
                    (true, false) | (false, true) => {
                        let keep = if bad(w0, &h0) { &w1.0 } else { &w0.0 };
                        s.xhat = Some(keep.clone());
                        report.xhat_set = Some((keep.clone(), "world_inconsistent"));
                        return self.bob_send(s, 1, report);
                    }
                    (false, false) => {}
                }
                let (c0, c1) = (w0.1, w1.1);
                if c0 == c1 && c0 == last {
                    let mes = s.mes;
                    self.bob_send(s, mes, report)
                } else if c0 == c1 {
                    s.last = c0;
                    if s.last == s.i {
                        s.phase = 2;
                        s.ques = Some(Question::Bit);
                        self.bob_send(s, 2, report)
                    } else {
                        s.mes ^= 1;
                        let mes = s.mes;
                        self.bob_send(s, mes, report)
                    }
                } else {
                    s.phase = 2;
                    s.ques = Some(Question::Parity);
                    s.par = c1 % 2 == 1;
                    self.bob_send(s, 3, report)
                }
            }
            _ => unreachable!("list has at most two entries"),
        }
    }

    fn bob_finalize(&self, state: &BobState) -> Finalized {
        let n = self.params.n;
        if let Some(x) = &state.xhat {
            return Finalized { output: x.clone(), flags: vec![] };
        }
        let fallback = |h: &Option<(BitWord, BitWord)>| Finalized {
            output: h.as_ref().map(|(a, _)| a.clone()).unwrap_or_else(|| BitWord::zeros(n)),
            flags: vec!["finalize_fallback"],
        };
        let (Some(q), Some((h0, h1)), Some(d)) = (state.ques, &state.hypotheses, state.last_received_bit) else {
            return fallback(&state.hypotheses);
        };
        let output = match q {
            Question::Bit => {
                if h1.get(state.i) == d {
                    h1.clone()
                } else {
                    h0.clone()
                }
            }
            Question::Parity => {
                if d == state.par {
                    h1.clone()
                } else {
                    h0.clone()
                }
            }
        };
        Finalized { output, flags: vec![] }
    }

    fn alice_snapshot(&self, s: &AliceState) -> StateMap {
        let v = json!({
            "cnt": s.cnt,
            "mes": s.mes,
            "terminal": s.terminal.map(u8::from),
        });
        v.as_object().cloned().unwrap_or_default()
    }

    fn bob_snapshot(&self, s: &BobState) -> StateMap {
        let v = json!({
            "phase": s.phase,
            "mes": s.mes,
            "last": s.last,
            "i": s.hypotheses.as_ref().map(|_| s.i),
            "ques": s.ques.map(question_word),
            "par": u8::from(s.par),
            "xhat": s.xhat.as_ref().map(|x| x.to_string()),
        });
        v.as_object().cloned().unwrap_or_default()
    }

    fn describe_candidate(&self, c: Candidate) -> String {
        match c {
            Candidate::Word(k) => {
                let (x, cnt) = self.message_fields(k);
                format!("x={x},cnt={cnt}")
            }
            Candidate::Extra(k) => format!("const={k}"),
        }
    }

    fn check_bob_step(&self, alice: &AliceState, bob: &BobState, report: &BobReport) -> Vec<&'static str> {
        let mut out = Vec::new();
        let Some(list) = &report.decoded else { return out };
        if alice.terminal.is_some() {
            return out;
        }
        let true_index = self.message_index(&alice.x, alice.cnt);
        if !list.contains(&Candidate::Word(true_index)) {
            out.push("true_world_missing");
        }
        let split = bob.ques == Some(Question::Parity);
        if report.case == "case4" && !split && report.xhat_set.is_none() && bob.last != alice.cnt {
            out.push("counter_desync");
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{run_session, NullAdversary, SessionOptions};

    fn proto(n: usize, m: usize) -> Protocol611 {
        Protocol611::new(ProtocolParams::new(ProtocolKind::P611, n, Rational::new(1, 2), m)).unwrap()
    }

    fn w(s: &str) -> BitWord {
        s.parse().unwrap()
    }

    fn slot(p: &Protocol611) -> ChunkSlot {
        p.schedule().chunks()[1].clone()
    }

    #[test]
    fn bob_words_match_patterns() {
        let cb = bob_codebook(64);
        assert_eq!(cb.words()[2], BitWord::repeat(&w("101"), 8));
        assert_eq!(cb.words()[0].len(), 24);
    }

    #[test]
    fn alice_resends_on_heavy_erasure() {
        let p = proto(3, 16);
        let mut a = p.alice_start(&w("101"));
        a.cnt = 1;
        a.mes = 1;
        let r = ErasedWord::deliver(p.bob_word(0), &w("111100")).unwrap();
        let step = p.alice_send(&a, Some(&r), &slot(&p));
        assert_eq!(step.state.cnt, 1);
        assert_eq!(&step.word, p.alice_word(&w("101"), 1));
    }

    #[test]
    fn alice_flip_increments_counter() {
        let p = proto(3, 16);
        let a = p.alice_start(&w("101"));
        let r = ErasedWord::clean(p.bob_word(1));
        let step = p.alice_send(&a, Some(&r), &slot(&p));
        assert_eq!(step.state.cnt, 1);
        assert_eq!(step.state.mes, 1);
        let again = p.alice_send(&step.state, Some(&r), &slot(&p));
        assert_eq!(again.state.cnt, 1);
    }

    #[test]
    fn alice_answers_bit_question_forever() {
        let p = proto(3, 16);
        let mut a = p.alice_start(&w("101"));
        a.cnt = 2;
        let r = ErasedWord::clean(p.bob_word(2));
        let step = p.alice_send(&a, Some(&r), &slot(&p));
        assert_eq!(step.word, BitWord::ones(16));
        let later = p.alice_send(&step.state, Some(&ErasedWord::clean(p.bob_word(0))), &slot(&p));
        assert_eq!(later.word, BitWord::ones(16));
    }

    #[test]
    fn alice_clamps_out_of_range_question() {
        let p = proto(3, 16);
        let mut a = p.alice_start(&w("100"));
        a.cnt = 3;
        let step = p.alice_send(&a, Some(&ErasedWord::clean(p.bob_word(2))), &slot(&p));
        assert_eq!(step.word, BitWord::zeros(16));
        assert_eq!(step.notes, vec!["alice_index_clamped"]);
    }

    #[test]
    fn alice_parity_question() {
        let p = proto(3, 16);
        let mut a = p.alice_start(&w("000"));
        a.cnt = 3;
        let step = p.alice_send(&a, Some(&ErasedWord::clean(p.bob_word(3))), &slot(&p));
        assert_eq!(step.word, BitWord::ones(16));
    }

    /// Delivers `ECC(x0, c0)` with exactly the positions where it differs from
    /// `ECC(x1, c1)` erased.
    fn confused(p: &Protocol611, x0: &str, c0: usize, x1: &str, c1: usize) -> ErasedWord {
        let a = p.alice_word(&w(x0), c0);
        let b = p.alice_word(&w(x1), c1);
        ErasedWord::deliver(a, &a.xor(b).unwrap()).unwrap()
    }

    #[test]
    fn bob_first_pair_sets_hypotheses() {
        let p = proto(2, 128);
        let s = p.bob_start();
        let step = p.bob_reply(&s, &confused(&p, "00", 0, "01", 0), &slot(&p));
        assert_eq!(step.state.hypotheses, Some((w("00"), w("01"))));
        assert_eq!(step.state.i, 1);
        assert_eq!(step.state.mes, 1);
        assert_eq!(&step.word, p.bob_word(1));
    }

    #[test]
    fn bob_first_pair_with_nonzero_counter_decides() {
        let p = proto(2, 128);
        let step = p.bob_reply(&p.bob_start(), &confused(&p, "00", 1, "11", 0), &slot(&p));
        assert_eq!(step.state.xhat, Some(w("11")));
    }

    #[test]
    fn bob_reaches_target_and_asks() {
        let p = proto(2, 128);
        let s = p.bob_reply(&p.bob_start(), &confused(&p, "00", 0, "01", 0), &slot(&p)).state;
        let step = p.bob_reply(&s, &confused(&p, "00", 1, "01", 1), &slot(&p));
        assert_eq!(step.state.ques, Some(Question::Bit));
        assert_eq!(&step.word, p.bob_word(2));
    }

    #[test]
    fn bob_split_counters_ask_parity() {
        let p = proto(3, 32);
        let s = p.bob_reply(&p.bob_start(), &confused(&p, "000", 0, "001", 0), &slot(&p)).state;
        assert_eq!(s.i, 2);
        let step = p.bob_reply(&s, &confused(&p, "000", 0, "001", 1), &slot(&p));
        assert_eq!(step.state.ques, Some(Question::Parity));
        assert!(step.state.par);
    }

    #[test]
    fn bob_catches_inconsistent_world() {
        let p = proto(3, 32);
        let s = p.bob_reply(&p.bob_start(), &confused(&p, "000", 0, "001", 0), &slot(&p)).state;
        let step = p.bob_reply(&s, &confused(&p, "000", 1, "001", 3), &slot(&p));
        assert_eq!(step.state.xhat, Some(w("000")));
    }

    #[test]
    fn finalize_bit_question() {
        let p = proto(2, 128);
        let s = BobState {
            phase: 2,
            ques: Some(Question::Bit),
            hypotheses: Some((w("00"), w("01"))),
            i: 1,
            last_received_bit: Some(true),
            ..p.bob_start()
        };
        assert_eq!(p.bob_finalize(&s).output, w("01"));
    }

    #[test]
    fn finalize_fallback_when_no_pair() {
        let p = proto(2, 128);
        let f = p.bob_finalize(&p.bob_start());
        assert_eq!(f.output, w("00"));
        assert_eq!(f.flags, vec!["finalize_fallback"]);
    }

    #[test]
    fn noiseless_all_inputs() {
        let p = proto(3, 16);
        for x in p.params().all_inputs() {
            let r = run_session(&p, &x, &mut NullAdversary, SessionOptions::default()).unwrap();
            assert!(r.success, "x = {x}");
            assert!(r.invariant_violations.is_empty());
            assert_eq!(r.total_erasure_fraction, Rational::new(0, 1));
        }
    }
}
