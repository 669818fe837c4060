//! Packed binary words and words with erasures.
//!
//! Position 0 is the leftmost character in the text form.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum BitsError {
    #[error("invalid symbol {0:?} in bit string")]
    InvalidSymbol(char),
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
}

/// Fixed-length binary word, packed 64 positions per block.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct BitWord {
    len: usize,
    blocks: Vec<u64>,
}

fn block_count(len: usize) -> usize {
    len.div_ceil(64)
}

impl BitWord {
    pub fn zeros(len: usize) -> Self {
        BitWord { len, blocks: vec![0; block_count(len)] }
    }

    pub fn ones(len: usize) -> Self {
        Self::constant(true, len)
    }

    pub fn constant(bit: bool, len: usize) -> Self {
        let mut w = Self::zeros(len);
        if bit {
            for b in w.blocks.iter_mut() {
                *b = u64::MAX;
            }
            w.trim();
        }
        w
    }

    pub fn from_bits<I: IntoIterator<Item = bool>>(bits: I) -> Self {
        let mut blocks = Vec::new();
        let mut len = 0;
        for bit in bits {
            if len % 64 == 0 {
                blocks.push(0);
            }
            if bit {
                blocks[len / 64] |= 1 << (len % 64);
            }
            len += 1;
        }
        BitWord { len, blocks }
    }

    /// The word `pattern` repeated `times` times.
    pub fn repeat(pattern: &BitWord, times: usize) -> Self {
        Self::from_bits((0..times).flat_map(|_| pattern.iter()))
    }

    /// Big-endian binary expansion of `value` on `len` positions.
    pub fn from_index(value: usize, len: usize) -> Self {
        Self::from_bits((0..len).map(|k| (value >> (len - 1 - k)) & 1 == 1))
    }

    /// Inverse of [`BitWord::from_index`].
    pub fn to_index(&self) -> usize {
        self.iter().fold(0, |acc, b| (acc << 1) | b as usize)
    }

    fn trim(&mut self) {
        let rem = self.len % 64;
        if rem != 0 {
            if let Some(last) = self.blocks.last_mut() {
                *last &= (1u64 << rem) - 1;
            }
        }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn get(&self, i: usize) -> bool {
        assert!(i < self.len, "bit index {i} out of range {}", self.len);
        (self.blocks[i / 64] >> (i % 64)) & 1 == 1
    }

    pub fn set(&mut self, i: usize, bit: bool) {
        assert!(i < self.len, "bit index {i} out of range {}", self.len);
        if bit {
            self.blocks[i / 64] |= 1 << (i % 64);
        } else {
            self.blocks[i / 64] &= !(1 << (i % 64));
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = bool> + '_ {
        (0..self.len).map(move |i| self.get(i))
    }

    pub fn count_ones(&self) -> usize {
        self.blocks.iter().map(|b| b.count_ones() as usize).sum()
    }

    pub fn blocks(&self) -> &[u64] {
        &self.blocks
    }

    pub fn xor(&self, other: &BitWord) -> Result<BitWord, BitsError> {
        self.check_len(other)?;
        let blocks = self.blocks.iter().zip(&other.blocks).map(|(a, b)| a ^ b).collect();
        Ok(BitWord { len: self.len, blocks })
    }

    pub fn hamming(&self, other: &BitWord) -> Result<usize, BitsError> {
        self.check_len(other)?;
        Ok(self
            .blocks
            .iter()
            .zip(&other.blocks)
            .map(|(a, b)| (a ^ b).count_ones() as usize)
            .sum())
    }

    /// Concatenation of `self` and `other`.
    pub fn concat(&self, other: &BitWord) -> BitWord {
        BitWord::from_bits(self.iter().chain(other.iter()))
    }

    fn check_len(&self, other: &BitWord) -> Result<(), BitsError> {
        if self.len != other.len {
            return Err(BitsError::LengthMismatch { left: self.len, right: other.len });
        }
        Ok(())
    }
}

impl fmt::Display for BitWord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s: String = self.iter().map(|b| if b { '1' } else { '0' }).collect();
        f.write_str(&s)
    }
}

impl fmt::Debug for BitWord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "BitWord({self})")
    }
}

impl FromStr for BitWord {
    type Err = BitsError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bits = s
            .chars()
            .map(|c| match c {
                '0' => Ok(false),
                '1' => Ok(true),
                other => Err(BitsError::InvalidSymbol(other)),
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(BitWord::from_bits(bits))
    }
}

impl Serialize for BitWord {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for BitWord {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// A word over {0, 1, erased}. Erased positions carry value 0.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct ErasedWord {
    values: BitWord,
    erased: BitWord,
}

impl ErasedWord {
    /// Deliver `word` through `mask` (1 = erased).
    pub fn deliver(word: &BitWord, mask: &BitWord) -> Result<Self, BitsError> {
        word.check_len(mask)?;
        let blocks = word.blocks.iter().zip(&mask.blocks).map(|(w, m)| w & !m).collect();
        Ok(ErasedWord { values: BitWord { len: word.len, blocks }, erased: mask.clone() })
    }

    pub fn clean(word: &BitWord) -> Self {
        ErasedWord { values: word.clone(), erased: BitWord::zeros(word.len()) }
    }

    pub fn all_erased(len: usize) -> Self {
        ErasedWord { values: BitWord::zeros(len), erased: BitWord::ones(len) }
    }

    pub fn len(&self) -> usize {
        self.values.len
    }

    pub fn is_empty(&self) -> bool {
        self.values.len == 0
    }

    /// `None` marks an erasure.
    pub fn get(&self, i: usize) -> Option<bool> {
        if self.erased.get(i) {
            None
        } else {
            Some(self.values.get(i))
        }
    }

    pub fn erasure_count(&self) -> usize {
        self.erased.count_ones()
    }

    pub fn is_fully_erased(&self) -> bool {
        self.erasure_count() == self.len()
    }

    pub fn mask(&self) -> &BitWord {
        &self.erased
    }

    pub fn values(&self) -> &BitWord {
        &self.values
    }

    /// Rightmost non-erased symbol, if any.
    pub fn last_symbol(&self) -> Option<bool> {
        (0..self.len()).rev().find_map(|i| self.get(i))
    }

    /// Whether `word` agrees with every non-erased position.
    pub fn consistent(&self, word: &BitWord) -> Result<bool, BitsError> {
        self.values.check_len(word)?;
        Ok(self
            .values
            .blocks
            .iter()
            .zip(&word.blocks)
            .zip(&self.erased.blocks)
            .all(|((v, w), e)| (v ^ w) & !e == 0))
    }
}

impl fmt::Display for ErasedWord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s: String = (0..self.len())
            .map(|i| match self.get(i) {
                None => '_',
                Some(true) => '1',
                Some(false) => '0',
            })
            .collect();
        f.write_str(&s)
    }
}

impl fmt::Debug for ErasedWord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "ErasedWord({self})")
    }
}

impl FromStr for ErasedWord {
    type Err = BitsError;

    /// Accepts `0`, `1`, and `_` or `⊥` for an erasure.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut values = Vec::new();
        let mut erased = Vec::new();
        for c in s.chars() {
            let (v, e) = match c {
                '0' => (false, false),
                '1' => (true, false),
                '_' | '⊥' => (false, true),
                other => return Err(BitsError::InvalidSymbol(other)),
            };
            values.push(v);
            erased.push(e);
        }
        Ok(ErasedWord { values: BitWord::from_bits(values), erased: BitWord::from_bits(erased) })
    }
}
