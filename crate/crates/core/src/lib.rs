//! Simulation lab for interactive error-correcting codes over adversarial
//! binary erasure channels.

pub mod adversaries;
pub mod bits;
pub mod channel;
pub mod ecc;
pub mod p35;
pub mod p611;
pub mod rational;

pub use bits::{BitWord, ErasedWord};
pub use channel::{Protocol, ProtocolKind, ProtocolParams, RoundSchedule, SessionOptions, SessionResult};
pub use rational::Rational;
