//! Bit-domain primitives: maximal-length sequences, frame construction,
//! agreement correlation, and error counting.
//!
//! The over-the-air frame is a 63-bit m-sequence preamble followed by a
//! 57-bit data payload, 120 bits total. Frame synchronization compares a
//! received 63-bit window against the known preamble with the agreement
//! fraction (matching positions / length): a window with up to 12 wrong
//! bits still scores 51/63 ~ 0.8095 and clears the 0.8 detection
//! threshold, while 13 errors score 50/63 ~ 0.7937 and are rejected.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

pub const SYNC_LEN: usize = 63;
pub const DATA_LEN: usize = 57;
pub const FRAME_LEN: usize = SYNC_LEN + DATA_LEN;

/// Fixed-length sequence of binary symbols.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct BitSequence {
    bits: Vec<u8>,
}

impl BitSequence {
    /// Build from raw 0/1 values. Rejects anything else.
    pub fn new(bits: Vec<u8>) -> Result<Self> {
        if let Some(&b) = bits.iter().find(|&&b| b > 1) {
            return Err(Error::InvalidConfig(format!(
                "bit value {b} out of range: every element must be 0 or 1"
            )));
        }
        Ok(Self { bits })
    }

    pub fn zeros(len: usize) -> Self {
        Self { bits: vec![0; len] }
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn bits(&self) -> &[u8] {
        &self.bits
    }

    pub fn ones(&self) -> usize {
        self.bits.iter().map(|&b| b as usize).sum()
    }

    /// Cyclic left rotation by `n` positions.
    pub fn rotated(&self, n: usize) -> Self {
        if self.bits.is_empty() {
            return self.clone();
        }
        let n = n % self.bits.len();
        let mut bits = Vec::with_capacity(self.bits.len());
        bits.extend_from_slice(&self.bits[n..]);
        bits.extend_from_slice(&self.bits[..n]);
        Self { bits }
    }

    /// New sequence with the given positions flipped.
    pub fn with_flipped(&self, positions: &[usize]) -> Self {
        let mut bits = self.bits.clone();
        for &p in positions {
            bits[p] ^= 1;
        }
        Self { bits }
    }

    pub fn concat(&self, other: &Self) -> Self {
        let mut bits = Vec::with_capacity(self.bits.len() + other.bits.len());
        bits.extend_from_slice(&self.bits);
        bits.extend_from_slice(&other.bits);
        Self { bits }
    }

    pub fn slice(&self, start: usize, len: usize) -> Self {
        Self {
            bits: self.bits[start..start + len].to_vec(),
        }
    }
}

impl fmt::Display for BitSequence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for &b in &self.bits {
            write!(f, "{}", b)?;
        }
        Ok(())
    }
}

impl FromStr for BitSequence {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut bits = Vec::with_capacity(s.len());
        for c in s.chars() {
            match c {
                '0' => bits.push(0),
                '1' => bits.push(1),
                c if c.is_whitespace() => {}
                c => return Err(Error::BadBitChar(c)),
            }
        }
        Ok(Self { bits })
    }
}

/// Linear-feedback shift register description.
///
/// `taps` are 1-based stage indices of the generating polynomial; the
/// default `{6, 5}` encodes x^6 + x^5 + 1. Fibonacci form: the feedback
/// bit is the XOR of the tapped stages and the output is the last stage.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LfsrSpec {
    pub degree: u32,
    pub taps: Vec<u32>,
    pub seed: u32,
}

impl LfsrSpec {
    pub fn new(degree: u32, taps: Vec<u32>, seed: u32) -> Result<Self> {
        let spec = Self { degree, taps, seed };
        spec.validate()?;
        Ok(spec)
    }

    /// x^6 + x^5 + 1 with the all-ones register.
    pub fn default_sync() -> Self {
        Self {
            degree: 6,
            taps: vec![6, 5],
            seed: 0b111111,
        }
    }

    /// Same polynomial, different phase; source of the default payload.
    /// This phase keeps every payload-overlapping window at least 5 bits
    /// below the 51-match detection threshold (best of all 62 phases).
    pub fn default_payload() -> Self {
        Self {
            degree: 6,
            taps: vec![6, 5],
            seed: 0b001110,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.seed == 0 {
            return Err(Error::InvalidSeed);
        }
        if self.degree == 0 || self.degree > 24 {
            return Err(Error::InvalidConfig(format!(
                "LFSR degree {} out of supported range 1..=24",
                self.degree
            )));
        }
        if self.seed >= 1u32 << self.degree {
            return Err(Error::InvalidConfig(format!(
                "seed 0x{:x} does not fit in a degree-{} register",
                self.seed, self.degree
            )));
        }
        if self.taps.is_empty() || self.taps.iter().any(|&t| t == 0 || t > self.degree) {
            return Err(Error::InvalidConfig(format!(
                "taps {:?} must be 1-based stage indices <= degree {}",
                self.taps, self.degree
            )));
        }
        Ok(())
    }

    /// One register step: returns the output bit (last stage).
    fn step(&self, state: &mut u32) -> u8 {
        let out = (*state >> (self.degree - 1)) & 1;
        let mut fb = 0u32;
        for &t in &self.taps {
            fb ^= (*state >> (t - 1)) & 1;
        }
        *state = ((*state << 1) | fb) & ((1u32 << self.degree) - 1);
        out as u8
    }
}

/// Generate one full period of the LFSR output.
///
/// The period is detected by walking the register until the seed state
/// recurs; for a primitive polynomial such as the default this is
/// 2^degree - 1 (63 for degree 6).
pub fn generate_m_sequence(spec: &LfsrSpec) -> Result<BitSequence> {
    spec.validate()?;
    let max_period = (1usize << spec.degree) - 1;
    let mut state = spec.seed;
    let mut bits = Vec::with_capacity(max_period);
    for _ in 0..max_period {
        bits.push(spec.step(&mut state));
        if state == spec.seed {
            break;
        }
    }
    Ok(BitSequence { bits })
}

/// Successive register states visited over one default-polynomial period.
pub fn lfsr_states(spec: &LfsrSpec) -> Result<Vec<u32>> {
    spec.validate()?;
    let max_period = (1usize << spec.degree) - 1;
    let mut state = spec.seed;
    let mut states = Vec::with_capacity(max_period);
    for _ in 0..max_period {
        states.push(state);
        spec.step(&mut state);
        if state == spec.seed {
            break;
        }
    }
    Ok(states)
}

/// The shipped 63-bit synchronization sequence.
pub fn default_sync_sequence() -> BitSequence {
    generate_m_sequence(&LfsrSpec::default_sync()).expect("default spec is valid")
}

/// The shipped 57-bit payload: leading bits of a second m-sequence phase.
pub fn default_payload() -> BitSequence {
    let seq = generate_m_sequence(&LfsrSpec::default_payload()).expect("default spec is valid");
    seq.slice(0, DATA_LEN)
}

/// Prepend the synchronization sequence to a 57-bit payload.
pub fn build_frame(data: &BitSequence) -> Result<BitSequence> {
    build_frame_with_sync(&default_sync_sequence(), data)
}

pub fn build_frame_with_sync(sync: &BitSequence, data: &BitSequence) -> Result<BitSequence> {
    if data.len() != DATA_LEN {
        return Err(Error::LengthMismatch {
            expected: DATA_LEN,
            got: data.len(),
        });
    }
    if sync.len() != SYNC_LEN {
        return Err(Error::LengthMismatch {
            expected: SYNC_LEN,
            got: sync.len(),
        });
    }
    Ok(sync.concat(data))
}

/// Fraction of positions at which the two sequences agree, in [0, 1].
pub fn agreement_correlation(window: &BitSequence, reference: &BitSequence) -> Result<f64> {
    if window.len() != reference.len() {
        return Err(Error::LengthMismatch {
            expected: reference.len(),
            got: window.len(),
        });
    }
    if window.is_empty() {
        return Err(Error::InsufficientData("empty correlation window".into()));
    }
    Ok(agreement_count(window.bits(), reference.bits()) as f64 / window.len() as f64)
}

/// Matching positions between two equal-length bit slices.
#[inline]
pub(crate) fn agreement_count(a: &[u8], b: &[u8]) -> usize {
    a.iter().zip(b).filter(|(x, y)| x == y).count()
}

/// Number of differing positions.
pub fn hamming_errors(a: &BitSequence, b: &BitSequence) -> Result<usize> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch {
            expected: a.len(),
            got: b.len(),
        });
    }
    Ok(a.bits().iter().zip(b.bits()).filter(|(x, y)| x != y).count())
}
