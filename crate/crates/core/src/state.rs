//! Three-state node lifecycle and its transition tables.
//!
//! * delay-only table: inputs are the two-bit delay classes, output always 0;
//! * checksum table: input is the checksum error bit, output always 1;
//! * combined table: inputs are `(delay bit, checksum bit)` with high = 0,
//!   extreme = 1 and no-error = 0, error = 1, output always 1, plus the
//!   quiescent case that returns a byzantine-prone node to fail-safe.
//!
//! S2 (fail-stop) is absorbing. Every step function refuses it.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::delay::DelayClass;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum NodeState {
    /// Fail-safe.
    S0,
    /// Byzantine-prone.
    S1,
    /// Fail-stop.
    S2,
}

impl NodeState {
    pub fn as_str(self) -> &'static str {
        match self {
            NodeState::S0 => "S0",
            NodeState::S1 => "S1",
            NodeState::S2 => "S2",
        }
    }
}

impl fmt::Display for NodeState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
#[error("node is fail-stop (S2); only a replacement node can continue")]
pub struct LifecycleError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TransitionResult {
    pub next: NodeState,
    /// 1 when a decisive action fires now, 0 when the step only observes.
    pub output: u8,
}

/// Input to the combined table.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CombinedInput {
    /// Delay was low or normal and the checksum was clean.
    Quiescent,
    Bits {
        /// 0 = high, 1 = extreme.
        delay: u8,
        /// 0 = no error, 1 = error.
        checksum: u8,
    },
}

impl CombinedInput {
    pub fn bits(delay_extreme: bool, checksum_error: bool) -> Self {
        CombinedInput::Bits { delay: u8::from(delay_extreme), checksum: u8::from(checksum_error) }
    }
}

fn live(state: NodeState) -> Result<(), LifecycleError> {
    if state == NodeState::S2 {
        Err(LifecycleError)
    } else {
        Ok(())
    }
}

/// Delay-only transition. S0 and S1 rows are identical.
pub fn step_delay(state: NodeState, delay: DelayClass) -> Result<TransitionResult, LifecycleError> {
    live(state)?;
    let next = match delay {
        DelayClass::Low | DelayClass::Normal => NodeState::S0,
        DelayClass::High => NodeState::S1,
        DelayClass::Extreme => NodeState::S2,
    };
    Ok(TransitionResult { next, output: 0 })
}

/// Checksum-only transition: a clean checksum is fail-safe, an error is fail-stop.
pub fn step_checksum(state: NodeState, checksum_error: bool) -> Result<TransitionResult, LifecycleError> {
    live(state)?;
    let next = if checksum_error { NodeState::S2 } else { NodeState::S0 };
    Ok(TransitionResult { next, output: 1 })
}

/// Combined delay/checksum transition with the S1 -> S0 recovery rule.
pub fn step_combined(state: NodeState, input: CombinedInput) -> Result<TransitionResult, LifecycleError> {
    live(state)?;
    Ok(match input {
        CombinedInput::Quiescent => TransitionResult { next: NodeState::S0, output: 0 },
        CombinedInput::Bits { delay: 0, checksum: 0 } => TransitionResult { next: NodeState::S1, output: 1 },
        CombinedInput::Bits { .. } => TransitionResult { next: NodeState::S2, output: 1 },
    })
}

/// Latest per-node state variables: delay class and checksum verdict.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct NodeVariables {
    pub delay: Option<DelayClass>,
    /// `Some(true)` when the last checked digest was wrong.
    pub checksum_error: Option<bool>,
}

/// System state at one instant: component modes and state variables, one
/// entry per active node.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize)]
pub struct SystemState {
    pub tick: u64,
    pub modes: Vec<NodeState>,
    pub variables: Vec<NodeVariables>,
}

impl SystemState {
    pub fn active_nodes(&self) -> usize {
        debug_assert_eq!(self.modes.len(), self.variables.len());
        self.modes.len()
    }
}
