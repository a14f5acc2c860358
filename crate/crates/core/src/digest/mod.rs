//! Checksum-challenge primitives: MD5 digests, digest-set comparison and
//! avalanche (hex divergence) measurement.

mod md5;

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::exec::{self, ExecMode};
use crate::NodeId;

pub use self::md5::{md5_digest, Md5};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum DigestError {
    #[error("challenge message must be exactly 64 bytes, got {0}")]
    MessageLength(usize),
    #[error("invalid digest hex {0:?}: expected 32 hex characters")]
    InvalidHex(String),
    #[error("cannot compare against an empty set of observed digests")]
    EmptyObservation,
    #[error("avalanche study needs at least one trial")]
    NoTrials,
}

/// 128-bit MD5 output.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Digest128([u8; 16]);

impl Digest128 {
    pub const fn from_bytes(bytes: [u8; 16]) -> Self {
        Digest128(bytes)
    }

    pub fn as_bytes(&self) -> &[u8; 16] {
        &self.0
    }

    /// Lowercase 32-character hex rendering.
    pub fn to_hex(&self) -> String {
        use std::fmt::Write;
        let mut s = String::with_capacity(32);
        for b in self.0 {
            let _ = write!(s, "{b:02x}");
        }
        s
    }

    /// Flips bit `bit` (0..128) of the digest.
    pub fn with_bit_flipped(mut self, bit: usize) -> Self {
        self.0[(bit / 8) % 16] ^= 1 << (bit % 8);
        self
    }
}

impl FromStr for Digest128 {
    type Err = DigestError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let raw = s.as_bytes();
        if raw.len() != 32 {
            return Err(DigestError::InvalidHex(s.to_string()));
        }
        let mut out = [0u8; 16];
        for (i, pair) in raw.chunks_exact(2).enumerate() {
            let hi = hex_value(pair[0]).ok_or_else(|| DigestError::InvalidHex(s.to_string()))?;
            let lo = hex_value(pair[1]).ok_or_else(|| DigestError::InvalidHex(s.to_string()))?;
            out[i] = (hi << 4) | lo;
        }
        Ok(Digest128(out))
    }
}

fn hex_value(c: u8) -> Option<u8> {
    match c {
        b'0'..=b'9' => Some(c - b'0'),
        b'a'..=b'f' => Some(c - b'a' + 10),
        b'A'..=b'F' => Some(c - b'A' + 10),
        _ => None,
    }
}

impl fmt::Display for Digest128 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

impl fmt::Debug for Digest128 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Digest128({})", self.to_hex())
    }
}

impl Serialize for Digest128 {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.to_hex())
    }
}

impl<'de> Deserialize<'de> for Digest128 {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// The fixed 512-bit message a supervisor challenges nodes with.
#[derive(Clone, Copy, PartialEq, Eq)]
pub struct ChallengeMessage([u8; 64]);

impl ChallengeMessage {
    pub const LEN: usize = 64;

    pub const fn new(bytes: [u8; 64]) -> Self {
        ChallengeMessage(bytes)
    }

    pub fn as_bytes(&self) -> &[u8; 64] {
        &self.0
    }

    pub fn digest(&self) -> Digest128 {
        md5_digest(&self.0)
    }

    /// Copy of the message with bit `bit` (0..512) inverted.
    pub fn with_bit_flipped(mut self, bit: usize) -> Self {
        self.0[(bit / 8) % 64] ^= 1 << (bit % 8);
        self
    }

    /// Parses a 128-character hex rendering.
    pub fn from_hex(s: &str) -> Result<Self, DigestError> {
        let raw = s.trim().as_bytes();
        if !raw.len().is_multiple_of(2) || raw.iter().any(|&c| hex_value(c).is_none()) {
            return Err(DigestError::MessageLength(raw.len() / 2));
        }
        let bytes: Vec<u8> =
            raw.chunks_exact(2).map(|p| (hex_value(p[0]).unwrap() << 4) | hex_value(p[1]).unwrap()).collect();
        Self::try_from(bytes.as_slice())
    }
}

impl Default for ChallengeMessage {
    /// A fixed ASCII block, padded with dots to 64 bytes.
    fn default() -> Self {
        let mut bytes = [b'.'; 64];
        let text = b"bsentinel supervisor challenge block v1";
        bytes[..text.len()].copy_from_slice(text);
        ChallengeMessage(bytes)
    }
}

impl TryFrom<&[u8]> for ChallengeMessage {
    type Error = DigestError;

    fn try_from(bytes: &[u8]) -> Result<Self, Self::Error> {
        let arr: [u8; 64] = bytes.try_into().map_err(|_| DigestError::MessageLength(bytes.len()))?;
        Ok(ChallengeMessage(arr))
    }
}

impl fmt::Debug for ChallengeMessage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "ChallengeMessage({})", String::from_utf8_lossy(&self.0))
    }
}

/// Fraction of the 32 hex characters that differ between `a` and `b`.
pub fn hex_divergence(a: &Digest128, b: &Digest128) -> f64 {
    let differing: u32 = a
        .0
        .iter()
        .zip(b.0.iter())
        .map(|(x, y)| {
            let d = x ^ y;
            u32::from(d & 0xf0 != 0) + u32::from(d & 0x0f != 0)
        })
        .sum();
    f64::from(differing) / 32.0
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SetVerdict {
    /// Every observed digest equals the expected one.
    AllMatch,
    /// Some, but not all, observed digests differ.
    Mismatch,
    /// No observed digest equals the expected one. The supervisor itself may
    /// be compromised.
    Disjoint,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SetComparison {
    pub verdict: SetVerdict,
    pub erroneous_ids: BTreeSet<NodeId>,
}

/// Compares the observed digests against the expected one.
///
/// Erroneous nodes are those whose digest differs from `expected`.
pub fn compare_digest_sets(
    expected: &Digest128,
    observed: &[(NodeId, Digest128)],
) -> Result<SetComparison, DigestError> {
    if observed.is_empty() {
        return Err(DigestError::EmptyObservation);
    }
    let erroneous_ids: BTreeSet<NodeId> =
        observed.iter().filter(|(_, d)| d != expected).map(|(id, _)| *id).collect();
    let matching = observed.iter().filter(|(_, d)| d == expected).count();
    let verdict = if erroneous_ids.is_empty() {
        SetVerdict::AllMatch
    } else if matching == 0 {
        SetVerdict::Disjoint
    } else {
        SetVerdict::Mismatch
    };
    Ok(SetComparison { verdict, erroneous_ids })
}

/// Summary of a single-bit-flip avalanche study.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AvalancheSummary {
    pub trials: usize,
    pub seed: u64,
    pub mean: f64,
    pub min: f64,
    pub max: f64,
    /// Fraction of trials whose divergence reached at least one half.
    pub at_least_half: f64,
}

/// Measures hex divergence between `md5(M)` and `md5(M')` where `M'` has one
/// random bit flipped.
///
/// With `fixed` set, every trial perturbs that message; otherwise each trial
/// draws a fresh random 64-byte message. Trial `i` draws from its own RNG
/// stream, so the result does not depend on `mode`.
pub fn avalanche_study(
    trials: usize,
    seed: u64,
    fixed: Option<ChallengeMessage>,
    mode: ExecMode,
) -> Result<AvalancheSummary, DigestError> {
    if trials == 0 {
        return Err(DigestError::NoTrials);
    }
    let divergences = exec::map_range(mode, trials, |i| {
        let mut rng = exec::stream_rng(seed, exec::DOMAIN_AVALANCHE, i as u64);
        let message = fixed.unwrap_or_else(|| {
            let mut bytes = [0u8; 64];
            rng.fill(&mut bytes[..]);
            ChallengeMessage(bytes)
        });
        let bit = rng.random_range(0..512);
        hex_divergence(&message.digest(), &message.with_bit_flipped(bit).digest())
    });

    let n = divergences.len() as f64;
    let mean = divergences.iter().sum::<f64>() / n;
    let min = divergences.iter().copied().fold(f64::INFINITY, f64::min);
    let max = divergences.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let at_least_half = divergences.iter().filter(|&&d| d >= 0.5).count() as f64 / n;
    Ok(AvalancheSummary { trials, seed, mean, min, max, at_least_half })
}
