//! Generic bit-flip attack on deterministic two-party machines.

use num_traits::Zero;

use super::AttackError;
use crate::bits::BitWord;
use crate::rational::Rational;

/// A deterministic protocol over a bit-flip channel, as two pure functions
/// of what each party has received so far.
pub trait FlipMachine {
    fn input_len(&self) -> usize;
    /// (Alice length, Bob length) per chunk; Alice speaks first.
    fn chunk_lengths(&self) -> Vec<(usize, usize)>;
    /// Alice's message in chunk `heard.len()`.
    fn alice_message(&self, x: &BitWord, heard: &[BitWord]) -> BitWord;
    /// Bob's message in chunk `heard.len() - 1`.
    fn bob_message(&self, heard: &[BitWord]) -> BitWord;
}

/// Alice repeats `x`, complemented when Bob's last reply was mostly ones;
/// Bob echoes the parity of what he received.
#[derive(Debug, Clone, Copy)]
pub struct Strawman {
    pub n: usize,
    pub reps: usize,
    pub bob_len: usize,
    pub chunks: usize,
}

impl FlipMachine for Strawman {
    fn input_len(&self) -> usize {
        self.n
    }

    fn chunk_lengths(&self) -> Vec<(usize, usize)> {
        vec![(self.n * self.reps, self.bob_len); self.chunks]
    }

    fn alice_message(&self, x: &BitWord, heard: &[BitWord]) -> BitWord {
        let flip = heard.last().is_some_and(|b| 2 * b.count_ones() > b.len());
        let y = BitWord::from_bits(x.iter().map(|v| v ^ flip));
        BitWord::repeat(&y, self.reps)
    }

    fn bob_message(&self, heard: &[BitWord]) -> BitWord {
        let parity = heard.last().is_some_and(|a| a.count_ones() % 2 == 1);
        BitWord::constant(parity, self.bob_len)
    }
}

#[derive(Debug, Clone)]
pub struct FlipAttack {
    /// Indices into the input list of the chosen ordered pair.
    pub pair: (usize, usize),
    pub inputs: (BitWord, BitWord),
    /// Flips when Alice holds the first input.
    pub cost_first: usize,
    /// Flips when Alice holds the second input.
    pub cost_second: usize,
    /// Chunks with odd Alice-side distance, each costing one extra flip on
    /// the second input.
    pub slack: usize,
    pub alice_rounds: usize,
    pub bob_rounds: usize,
    /// `B/2 + A/4` in rounds.
    pub bound: Rational,
    /// What Bob receives (identical for both inputs).
    pub bob_view: Vec<BitWord>,
    /// What Alice receives.
    pub alice_view: Vec<BitWord>,
    pub views_identical: bool,
}

impl FlipAttack {
    pub fn within_bound(&self) -> bool {
        Rational::from_integer(self.cost_first as i64) <= self.bound + Rational::from_integer(self.slack as i64)
    }
}

/// Equidistant word between `a` and `b`: agreeing positions kept, the t-th
/// differing position takes `a`'s bit for even t and `b`'s for odd t, so it
/// lies `floor(d/2)` from `a` and `ceil(d/2)` from `b`.
fn midpoint(a: &BitWord, b: &BitWord) -> BitWord {
    let mut t = 0;
    BitWord::from_bits(a.iter().zip(b.iter()).map(|(u, v)| {
        if u == v {
            u
        } else {
            t += 1;
            if t % 2 == 1 {
                u
            } else {
                v
            }
        }
    }))
}

fn majority(words: &[BitWord], len: usize) -> BitWord {
    BitWord::from_bits((0..len).map(|k| {
        let ones = words.iter().filter(|w| w.get(k)).count();
        2 * ones > words.len()
    }))
}

fn dist(a: &BitWord, b: &BitWord) -> usize {
    a.hamming(b).expect("equal lengths")
}

/// Builds the attack: Alice always hears the majority `S_k` of Bob's replies
/// over all ordered pairs, Bob hears the pairwise midpoints `R_k`. Picks the
/// cheapest ordered pair and replays both of its inputs under the resulting
/// flips.
pub fn bitflip_attack_generate<M: FlipMachine + ?Sized>(machine: &M, inputs: &[BitWord]) -> Result<FlipAttack, AttackError> {
    let n = inputs.len();
    if n < 2 {
        return Err(AttackError::InvalidInputs("need at least two inputs".into()));
    }
    for (i, x) in inputs.iter().enumerate() {
        if x.len() != machine.input_len() {
            return Err(AttackError::InvalidInputs(format!("input {x} has the wrong length")));
        }
        if inputs[..i].contains(x) {
            return Err(AttackError::InvalidInputs(format!("input {x} repeats")));
        }
    }
    let lengths = machine.chunk_lengths();
    let pairs: Vec<(usize, usize)> = (0..n).flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j))).collect();

    let mut s_hist: Vec<BitWord> = Vec::new();
    let mut a_hist: Vec<Vec<BitWord>> = vec![Vec::new(); n];
    let mut r_hist: Vec<Vec<BitWord>> = vec![Vec::new(); pairs.len()];
    let mut b_hist: Vec<Vec<BitWord>> = vec![Vec::new(); pairs.len()];
    let mut cost = vec![0usize; pairs.len()];
    for &(_, blen) in &lengths {
        let a_k: Vec<BitWord> = inputs.iter().map(|x| machine.alice_message(x, &s_hist)).collect();
        let mut b_k = Vec::with_capacity(pairs.len());
        for (p, &(i, j)) in pairs.iter().enumerate() {
            let r = midpoint(&a_k[i], &a_k[j]);
            cost[p] += dist(&r, &a_k[i]);
            r_hist[p].push(r);
            let b = machine.bob_message(&r_hist[p]);
            if b.len() != blen {
                return Err(AttackError::InvalidInputs("Bob message has the wrong length".into()));
            }
            b_k.push(b);
        }
        let s = majority(&b_k, blen);
        for (p, b) in b_k.into_iter().enumerate() {
            cost[p] += dist(&s, &b);
            b_hist[p].push(b);
        }
        for (i, a) in a_k.into_iter().enumerate() {
            a_hist[i].push(a);
        }
        s_hist.push(s);
    }

    let best = (0..pairs.len()).min_by_key(|&p| cost[p]).expect("at least one pair");
    let (i, j) = pairs[best];
    let alice_rounds: usize = lengths.iter().map(|l| l.0).sum();
    let bob_rounds: usize = lengths.iter().map(|l| l.1).sum();
    let slack = r_hist[best]
        .iter()
        .zip(&a_hist[i])
        .zip(&a_hist[j])
        .filter(|((_, a), b)| dist(a, b) % 2 == 1)
        .count();

    let replay = |x: &BitWord, idx: usize| -> Result<(Vec<BitWord>, Vec<BitWord>, usize), AttackError> {
        let mut to_alice = Vec::new();
        let mut to_bob = Vec::new();
        let mut flips = 0;
        for k in 0..lengths.len() {
            let a = machine.alice_message(x, &to_alice);
            let mask = a_hist[idx][k].xor(&r_hist[best][k]).expect("equal lengths");
            let got = a.xor(&mask).map_err(|_| AttackError::NonDeterministicMachine { chunk: k })?;
            if got != r_hist[best][k] {
                return Err(AttackError::NonDeterministicMachine { chunk: k });
            }
            flips += mask.count_ones();
            to_bob.push(got);
            let b = machine.bob_message(&to_bob);
            let mask = b_hist[best][k].xor(&s_hist[k]).expect("equal lengths");
            let got = b.xor(&mask).map_err(|_| AttackError::NonDeterministicMachine { chunk: k })?;
            if got != s_hist[k] {
                return Err(AttackError::NonDeterministicMachine { chunk: k });
            }
            flips += mask.count_ones();
            to_alice.push(got);
        }
        Ok((to_bob, to_alice, flips))
    };
    let (view_i, alice_view, flips_i) = replay(&inputs[i], i)?;
    let (view_j, _, flips_j) = replay(&inputs[j], j)?;
    if flips_i != cost[best] {
        return Err(AttackError::NonDeterministicMachine { chunk: lengths.len() });
    }

    let bound = Rational::new(bob_rounds as i64, 2) + Rational::new(alice_rounds as i64, 4);
    debug_assert!(bound >= Rational::zero());
    Ok(FlipAttack {
        pair: (i, j),
        inputs: (inputs[i].clone(), inputs[j].clone()),
        cost_first: flips_i,
        cost_second: flips_j,
        slack,
        alice_rounds,
        bob_rounds,
        bound,
        views_identical: view_i == view_j,
        bob_view: view_i,
        alice_view,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::cell::Cell;

    fn all_inputs(n: usize) -> Vec<BitWord> {
        (0..1 << n).map(|v| BitWord::from_index(v, n)).collect()
    }

    #[test]
    fn midpoint_splits_odd_distance() {
        let a: BitWord = "00000".parse().unwrap();
        let b: BitWord = "11100".parse().unwrap();
        let r = midpoint(&a, &b);
        assert_eq!(r.to_string(), "01000");
        assert_eq!(dist(&r, &a), 1);
        assert_eq!(dist(&r, &b), 2);
    }

    #[test]
    fn majority_ties_go_to_zero() {
        let w: Vec<BitWord> = ["10", "01"].iter().map(|s| s.parse().unwrap()).collect();
        assert_eq!(majority(&w, 2).to_string(), "00");
    }

    #[test]
    fn strawman_attack_within_bound() {
        let m = Strawman { n: 3, reps: 4, bob_len: 2, chunks: 4 };
        let atk = bitflip_attack_generate(&m, &all_inputs(3)).unwrap();
        assert!(atk.views_identical);
        assert!(atk.within_bound());
        assert_eq!(atk.cost_second, atk.cost_first + atk.slack);
    }

    #[test]
    fn duplicate_inputs_rejected() {
        let m = Strawman { n: 2, reps: 2, bob_len: 1, chunks: 2 };
        let x: BitWord = "01".parse().unwrap();
        assert!(matches!(bitflip_attack_generate(&m, &[x.clone(), x]), Err(AttackError::InvalidInputs(_))));
    }

    struct SilentAlice;

    impl FlipMachine for SilentAlice {
        fn input_len(&self) -> usize {
            1
        }
        fn chunk_lengths(&self) -> Vec<(usize, usize)> {
            vec![(0, 3); 4]
        }
        fn alice_message(&self, _x: &BitWord, _heard: &[BitWord]) -> BitWord {
            BitWord::zeros(0)
        }
        fn bob_message(&self, heard: &[BitWord]) -> BitWord {
            BitWord::constant(heard.len() % 2 == 1, 3)
        }
    }

    #[test]
    fn silent_alice_costs_at_most_half_of_bob() {
        let atk = bitflip_attack_generate(&SilentAlice, &all_inputs(1)).unwrap();
        assert_eq!(atk.alice_rounds, 0);
        assert!(Rational::from_integer(atk.cost_first as i64) <= Rational::new(atk.bob_rounds as i64, 2));
        assert!(atk.views_identical);
    }

    struct Drifting {
        calls: Cell<usize>,
    }

    impl FlipMachine for Drifting {
        fn input_len(&self) -> usize {
            1
        }
        fn chunk_lengths(&self) -> Vec<(usize, usize)> {
            vec![(2, 1); 2]
        }
        fn alice_message(&self, x: &BitWord, _heard: &[BitWord]) -> BitWord {
            self.calls.set(self.calls.get() + 1);
            let drift = self.calls.get() > 4;
            BitWord::constant(x.get(0) ^ drift, 2)
        }
        fn bob_message(&self, _heard: &[BitWord]) -> BitWord {
            BitWord::zeros(1)
        }
    }

    #[test]
    fn nondeterminism_detected_on_replay() {
        let m = Drifting { calls: Cell::new(0) };
        let r = bitflip_attack_generate(&m, &all_inputs(1));
        assert!(matches!(r, Err(AttackError::NonDeterministicMachine { .. })));
    }
}
