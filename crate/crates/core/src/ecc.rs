//! Randomized codebooks with certified distance, and brute-force erasure
//! list decoding.

use std::fmt::Write as _;

use num_traits::{One, Zero};
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::bits::{BitWord, BitsError, ErasedWord};
use crate::rational::{ceil_nonneg, floor_nonneg, parse_rational, scaled, Rational};

/// Codebooks with fewer codewords than this get an exhaustive triple check.
pub const EXHAUSTIVE_TRIPLE_LIMIT: usize = 200;
/// Triples sampled when the check is not exhaustive.
pub const DEFAULT_TRIPLE_SAMPLES: u64 = 200_000;

const DRAWS_PER_SLOT: usize = 20_000;
const RESTARTS: u64 = 8;

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum EccError {
    #[error("could not build {count} words of length {length} after {restarts} restarts")]
    ConstructionFailed { count: usize, length: usize, restarts: u64 },
    #[error("codeword index {index} out of range (codebook has {count} words)")]
    IndexOutOfRange { index: usize, count: usize },
    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("epsilon must lie in [0, 1/2), got {0}")]
    InvalidEpsilon(Rational),
    #[error("codebook text: {0}")]
    Parse(String),
}

impl From<BitsError> for EccError {
    fn from(e: BitsError) -> Self {
        match e {
            BitsError::LengthMismatch { left, right } => {
                EccError::LengthMismatch { expected: left, got: right }
            }
            other => EccError::Parse(other.to_string()),
        }
    }
}

/// Pairwise distance every codeword pair and every codeword/forbidden pair
/// must reach: `ceil((1/2 - eps) * p)`.
pub fn required_distance(epsilon: Rational, length: usize) -> usize {
    ceil_nonneg(scaled(Rational::new(1, 2) - epsilon, length))
}

/// Largest allowed count of positions on which three words agree:
/// `floor((1/4 + 3 eps / 2) * p)`.
pub fn triple_overlap_bound(epsilon: Rational, length: usize) -> usize {
    floor_nonneg(scaled(Rational::new(1, 4) + Rational::new(3, 2) * epsilon, length))
}

/// Erasure fraction below which at most two words stay consistent:
/// `3/4 - 3 eps / 2`.
pub fn list_decoding_fraction(epsilon: Rational) -> Rational {
    Rational::new(3, 4) - Rational::new(3, 2) * epsilon
}

/// Whether a received word with `erasures` erasures out of `length` lies
/// strictly below the two-candidate threshold.
pub fn below_list_threshold(erasures: usize, epsilon: Rational, length: usize) -> bool {
    crate::rational::below(erasures, list_decoding_fraction(epsilon), length)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Codebook {
    words: Vec<BitWord>,
    length: usize,
    epsilon: Rational,
    forbidden: Vec<BitWord>,
    seed: u64,
}

/// A decoded candidate: a codeword index or a tagged extra word.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub enum Candidate {
    Word(usize),
    Extra(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TripleCheck {
    /// Exhaustive below [`EXHAUSTIVE_TRIPLE_LIMIT`] codewords, sampled above.
    Auto,
    Exhaustive,
    Sampled { samples: u64, seed: u64 },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct DistanceReport {
    pub min_pairwise: usize,
    pub min_forbidden: usize,
    pub max_triple_overlap: usize,
    pub required_distance: usize,
    pub overlap_bound: usize,
    pub exhaustive: bool,
    pub triples_checked: u64,
    pub certified: bool,
}

fn check_epsilon(epsilon: Rational) -> Result<(), EccError> {
    if epsilon < Rational::zero() || epsilon >= Rational::new(1, 2) {
        return Err(EccError::InvalidEpsilon(epsilon));
    }
    Ok(())
}

fn random_word(rng: &mut ChaCha8Rng, length: usize) -> BitWord {
    BitWord::from_bits((0..length).map(|_| rng.gen::<bool>()))
}

/// Seeded greedy accumulation: each slot draws random words until one is far
/// enough from everything accepted so far. A stuck slot restarts the whole
/// search with a derived seed; the result must then pass certification.
pub fn build_codebook(
    count: usize,
    length: usize,
    epsilon: Rational,
    forbidden: Vec<BitWord>,
    seed: u64,
) -> Result<Codebook, EccError> {
    check_epsilon(epsilon)?;
    for f in &forbidden {
        if f.len() != length {
            return Err(EccError::LengthMismatch { expected: length, got: f.len() });
        }
    }
    // Distinct messages need distinct words even when the target is 0.
    let dist = required_distance(epsilon, length).max(1);
    for restart in 0..RESTARTS {
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(restart.wrapping_mul(0x9E37_79B9_7F4A_7C15)));
        let mut words: Vec<BitWord> = Vec::with_capacity(count);
        let mut stuck = false;
        for _ in 0..count {
            let found = (0..DRAWS_PER_SLOT).find_map(|_| {
                let w = random_word(&mut rng, length);
                let ok = words
                    .iter()
                    .chain(&forbidden)
                    .all(|o| w.hamming(o).map(|d| d >= dist).unwrap_or(false));
                ok.then_some(w)
            });
            match found {
                Some(w) => words.push(w),
                None => {
                    stuck = true;
                    break;
                }
            }
        }
        if stuck {
            continue;
        }
        let cb = Codebook { words, length, epsilon, forbidden: forbidden.clone(), seed };
        if cb.verify_distance(TripleCheck::Auto).certified {
            return Ok(cb);
        }
    }
    Err(EccError::ConstructionFailed { count, length, restarts: RESTARTS })
}

impl Codebook {
    /// Wraps explicit words. No distance requirement is enforced here; call
    /// [`Codebook::verify_distance`] to certify.
    pub fn from_words(
        words: Vec<BitWord>,
        epsilon: Rational,
        forbidden: Vec<BitWord>,
        seed: u64,
    ) -> Result<Codebook, EccError> {
        let length = words.first().or(forbidden.first()).map(BitWord::len).unwrap_or(0);
        for w in words.iter().chain(&forbidden) {
            if w.len() != length {
                return Err(EccError::LengthMismatch { expected: length, got: w.len() });
            }
        }
        Ok(Codebook { words, length, epsilon, forbidden, seed })
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn length(&self) -> usize {
        self.length
    }

    pub fn epsilon(&self) -> Rational {
        self.epsilon
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn words(&self) -> &[BitWord] {
        &self.words
    }

    pub fn forbidden(&self) -> &[BitWord] {
        &self.forbidden
    }

    pub fn encode(&self, index: usize) -> Result<&BitWord, EccError> {
        self.words
            .get(index)
            .ok_or(EccError::IndexOutOfRange { index, count: self.words.len() })
    }

    /// Distance certification. Triple overlap is measured over codewords
    /// together with forbidden words, since those are decoded alongside.
    pub fn verify_distance(&self, mode: TripleCheck) -> DistanceReport {
        let p = self.length;
        let required = required_distance(self.epsilon, p);
        let bound = triple_overlap_bound(self.epsilon, p);

        let mut min_pairwise = p;
        for (i, a) in self.words.iter().enumerate() {
            for b in &self.words[i + 1..] {
                min_pairwise = min_pairwise.min(a.hamming(b).unwrap_or(0));
            }
        }
        let mut min_forbidden = p;
        for a in &self.words {
            for f in &self.forbidden {
                min_forbidden = min_forbidden.min(a.hamming(f).unwrap_or(0));
            }
        }

        let all: Vec<&BitWord> = self.words.iter().chain(&self.forbidden).collect();
        let exhaustive = match mode {
            TripleCheck::Exhaustive => true,
            TripleCheck::Auto => self.words.len() < EXHAUSTIVE_TRIPLE_LIMIT,
            TripleCheck::Sampled { .. } => false,
        };
        let (max_triple_overlap, triples_checked) = if exhaustive {
            exhaustive_overlap(&all)
        } else {
            let (samples, seed) = match mode {
                TripleCheck::Sampled { samples, seed } => (samples, seed),
                _ => (DEFAULT_TRIPLE_SAMPLES, self.seed),
            };
            sampled_overlap(&all, samples, seed)
        };

        let certified = min_pairwise >= required
            && min_forbidden >= required
            && max_triple_overlap <= bound
            && (self.words.len() < 2 || min_pairwise > 0);
        DistanceReport {
            min_pairwise,
            min_forbidden,
            max_triple_overlap,
            required_distance: required,
            overlap_bound: bound,
            exhaustive,
            triples_checked,
            certified,
        }
    }

    /// Text form: a header line, one word per line, then a `forbidden:`
    /// section.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "iecc-codebook v1 count={} length={} epsilon={} seed={}",
            self.words.len(),
            self.length,
            self.epsilon,
            self.seed
        );
        for w in &self.words {
            let _ = writeln!(out, "{w}");
        }
        out.push_str("forbidden:\n");
        for f in &self.forbidden {
            let _ = writeln!(out, "{f}");
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Codebook, EccError> {
        let perr = |m: &str| EccError::Parse(m.to_string());
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines.next().ok_or_else(|| perr("empty input"))?;
        let mut fields = header.split_whitespace();
        if fields.next() != Some("iecc-codebook") || fields.next() != Some("v1") {
            return Err(perr("bad header"));
        }
        let (mut count, mut length, mut epsilon, mut seed) = (None, None, None, None);
        for f in fields {
            let (k, v) = f.split_once('=').ok_or_else(|| perr("bad header field"))?;
            match k {
                "count" => count = v.parse::<usize>().ok(),
                "length" => length = v.parse::<usize>().ok(),
                "epsilon" => epsilon = parse_rational(v).ok(),
                "seed" => seed = v.parse::<u64>().ok(),
                _ => return Err(perr("unknown header field")),
            }
        }
        let (count, length, epsilon, seed) = match (count, length, epsilon, seed) {
            (Some(c), Some(l), Some(e), Some(s)) => (c, l, e, s),
            _ => return Err(perr("missing or invalid header field")),
        };
        let mut words = Vec::new();
        let mut forbidden = Vec::new();
        let mut in_forbidden = false;
        for line in lines {
            let line = line.trim();
            if line == "forbidden:" {
                in_forbidden = true;
                continue;
            }
            let w: BitWord = line.parse().map_err(|e: BitsError| perr(&e.to_string()))?;
            if w.len() != length {
                return Err(EccError::LengthMismatch { expected: length, got: w.len() });
            }
            if in_forbidden {
                forbidden.push(w);
            } else {
                words.push(w);
            }
        }
        if words.len() != count {
            return Err(perr("word count does not match header"));
        }
        Ok(Codebook { words, length, epsilon, forbidden, seed })
    }
}

fn overlap3(a: &BitWord, b: &BitWord, c: &BitWord) -> usize {
    let disagree: usize = a
        .blocks()
        .iter()
        .zip(b.blocks())
        .zip(c.blocks())
        .map(|((x, y), z)| ((x ^ y) | (x ^ z)).count_ones() as usize)
        .sum();
    a.len() - disagree
}

fn exhaustive_overlap(all: &[&BitWord]) -> (usize, u64) {
    let mut best = 0;
    let mut checked = 0u64;
    for i in 0..all.len() {
        for j in i + 1..all.len() {
            let dij: Vec<u64> =
                all[i].blocks().iter().zip(all[j].blocks()).map(|(x, y)| x ^ y).collect();
            for c in &all[j + 1..] {
                let disagree: usize = dij
                    .iter()
                    .zip(all[i].blocks())
                    .zip(c.blocks())
                    .map(|((d, x), z)| (d | (x ^ z)).count_ones() as usize)
                    .sum();
                best = best.max(all[i].len() - disagree);
                checked += 1;
            }
        }
    }
    (best, checked)
}

fn sampled_overlap(all: &[&BitWord], samples: u64, seed: u64) -> (usize, u64) {
    if all.len() < 3 {
        return (0, 0);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best = 0;
    for _ in 0..samples {
        let t = sample(&mut rng, all.len(), 3);
        best = best.max(overlap3(all[t.index(0)], all[t.index(1)], all[t.index(2)]));
    }
    (best, samples)
}

/// Brute-force list of every codeword and extra word consistent with
/// `received`: codeword indices ascending, then extras in the given order.
pub fn erasure_list_decode(
    cb: &Codebook,
    received: &ErasedWord,
    extra_words: &[BitWord],
) -> Result<Vec<Candidate>, EccError> {
    if received.len() != cb.length {
        return Err(EccError::LengthMismatch { expected: cb.length, got: received.len() });
    }
    let mut out = Vec::new();
    for (i, w) in cb.words.iter().enumerate() {
        if received.consistent(w)? {
            out.push(Candidate::Word(i));
        }
    }
    for (k, w) in extra_words.iter().enumerate() {
        if received.consistent(w)? {
            out.push(Candidate::Extra(k));
        }
    }
    Ok(out)
}

/// Whether `received` is consistent with `word`.
pub fn consistent(received: &ErasedWord, word: &BitWord) -> Result<bool, EccError> {
    Ok(received.consistent(word)?)
}

/// Relative distance `distance / length`.
pub fn relative(distance: usize, length: usize) -> Rational {
    if length == 0 {
        return Rational::one();
    }
    Rational::new(distance as i64, length as i64)
}
