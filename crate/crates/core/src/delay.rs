//! Baseline response times and delay-variation classification.
//!
//! A [`BaselineSet`] is built once from calibration replies. Each node's
//! baseline is the median of its calibration samples. The upper bound `U` is
//! the largest calibration time seen across the pool, `z = ceil(alpha * U)`,
//! and the supremum is `U + z`. Observations are classified against both the
//! node's own baseline and the pool-wide bounds.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::NodeId;

/// Microseconds.
pub type Micros = u64;

#[derive(Debug, Error, PartialEq)]
pub enum DelayError {
    #[error("no calibration samples supplied")]
    NoSamples,
    #[error("node {0} has no calibration samples")]
    EmptyNode(NodeId),
    #[error("calibration sample for node {0} is not positive")]
    NonPositiveSample(NodeId),
    #[error("z policy alpha must lie strictly between 0 and 1, got {0}")]
    AlphaOutOfRange(f64),
    #[error("tolerance must lie in [0, 1), got {0}")]
    ToleranceOutOfRange(f64),
    #[error("observed response time must be positive")]
    NonPositiveObservation,
    #[error("node {0} has no baseline")]
    UnknownNode(NodeId),
}

/// Delay-variation level. Ordered `Low < Normal < High < Extreme`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DelayClass {
    Low,
    Normal,
    High,
    Extreme,
}

impl DelayClass {
    pub const ALL: [DelayClass; 4] = [DelayClass::Low, DelayClass::Normal, DelayClass::High, DelayClass::Extreme];

    /// Two-bit wire encoding: low 00, normal 01, high 10, extreme 11.
    pub fn bits(self) -> u8 {
        match self {
            DelayClass::Low => 0b00,
            DelayClass::Normal => 0b01,
            DelayClass::High => 0b10,
            DelayClass::Extreme => 0b11,
        }
    }

    pub fn from_bits(bits: u8) -> Option<Self> {
        match bits {
            0b00 => Some(DelayClass::Low),
            0b01 => Some(DelayClass::Normal),
            0b10 => Some(DelayClass::High),
            0b11 => Some(DelayClass::Extreme),
            _ => None,
        }
    }

    /// Low or normal: nothing to act on.
    pub fn is_quiescent(self) -> bool {
        matches!(self, DelayClass::Low | DelayClass::Normal)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            DelayClass::Low => "low",
            DelayClass::Normal => "normal",
            DelayClass::High => "high",
            DelayClass::Extreme => "extreme",
        }
    }
}

impl fmt::Display for DelayClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for DelayClass {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        DelayClass::ALL.into_iter().find(|c| c.as_str() == s).ok_or_else(|| format!("unknown delay class {s:?}"))
    }
}

/// Calibrated baselines plus the pool-wide upper bound and supremum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineSet {
    baselines: BTreeMap<NodeId, Micros>,
    upper_bound: Micros,
    z: Micros,
    supremum: Micros,
}

impl BaselineSet {
    pub fn baseline(&self, node: NodeId) -> Option<Micros> {
        self.baselines.get(&node).copied()
    }

    pub fn baselines(&self) -> &BTreeMap<NodeId, Micros> {
        &self.baselines
    }

    pub fn upper_bound(&self) -> Micros {
        self.upper_bound
    }

    pub fn z(&self) -> Micros {
        self.z
    }

    pub fn supremum(&self) -> Micros {
        self.supremum
    }

    pub fn len(&self) -> usize {
        self.baselines.len()
    }

    pub fn is_empty(&self) -> bool {
        self.baselines.is_empty()
    }

    /// Registers `node` under an existing baseline `t` without touching the
    /// pool-wide bounds. Used when a replacement node takes over a slot.
    pub(crate) fn inherit(&mut self, node: NodeId, t: Micros) {
        self.baselines.insert(node, t);
    }
}

/// Median of `samples`; even counts average the two middle values, rounding
/// half up.
pub fn median(samples: &[Micros]) -> Option<Micros> {
    if samples.is_empty() {
        return None;
    }
    let mut sorted = samples.to_vec();
    sorted.sort_unstable();
    let mid = sorted.len() / 2;
    Some(if sorted.len() % 2 == 1 { sorted[mid] } else { (sorted[mid - 1] + sorted[mid]).div_ceil(2) })
}

/// Builds the baseline set from per-node calibration samples.
pub fn build_baseline(samples: &BTreeMap<NodeId, Vec<Micros>>, alpha: f64) -> Result<BaselineSet, DelayError> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(DelayError::AlphaOutOfRange(alpha));
    }
    if samples.is_empty() {
        return Err(DelayError::NoSamples);
    }

    let mut baselines = BTreeMap::new();
    let mut upper_bound = 0;
    for (&node, times) in samples {
        if times.contains(&0) {
            return Err(DelayError::NonPositiveSample(node));
        }
        let m = median(times).ok_or(DelayError::EmptyNode(node))?;
        baselines.insert(node, m);
        upper_bound = upper_bound.max(times.iter().copied().max().unwrap_or(0));
    }

    // alpha < 1 and U >= 1 keep 0 < z <= U; z == U only when U == 1.
    let z = ((alpha * upper_bound as f64).ceil() as Micros).max(1);
    Ok(BaselineSet { baselines, upper_bound, z, supremum: upper_bound + z })
}

/// Classifies one observation against the node's baseline and the pool bounds.
///
/// Branches follow the elseif order of the delay-comparison procedure:
/// below the tolerance band is low, inside it is normal, anything up to the
/// upper bound is still normal, beyond it is high, and at or beyond the
/// supremum it is extreme.
pub fn classify_delay(
    t_obs: Micros,
    t_base: Micros,
    baseline: &BaselineSet,
    tolerance: f64,
) -> Result<DelayClass, DelayError> {
    if t_obs == 0 {
        return Err(DelayError::NonPositiveObservation);
    }
    if !(0.0..1.0).contains(&tolerance) {
        return Err(DelayError::ToleranceOutOfRange(tolerance));
    }
    if t_obs >= baseline.supremum {
        return Ok(DelayClass::Extreme);
    }
    let obs = t_obs as f64;
    let base = t_base as f64;
    if obs < base * (1.0 - tolerance) {
        return Ok(DelayClass::Low);
    }
    if obs <= base * (1.0 + tolerance) || t_obs <= baseline.upper_bound {
        return Ok(DelayClass::Normal);
    }
    Ok(DelayClass::High)
}

/// A classified observation of one node.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DelayObservation {
    pub node: NodeId,
    pub observed_us: Micros,
    pub class: DelayClass,
}

impl DelayObservation {
    pub fn classify(
        node: NodeId,
        observed_us: Micros,
        baseline: &BaselineSet,
        tolerance: f64,
    ) -> Result<Self, DelayError> {
        let t_base = baseline.baseline(node).ok_or(DelayError::UnknownNode(node))?;
        let class = classify_delay(observed_us, t_base, baseline, tolerance)?;
        Ok(DelayObservation { node, observed_us, class })
    }
}
