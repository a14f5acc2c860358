//! Byzantine fault detection for virtual node pools.
//!
//! A supervisor challenges nodes with a fixed 512-bit message and checks
//! their MD5 replies against a pre-computed digest. Reply latency is
//! classified against calibrated baselines, and both signals drive a
//! three-state node lifecycle (fail-safe, Byzantine-prone, fail-stop) with
//! adaptive monitoring intervals. A seeded discrete-event simulator, a trace
//! replayer and report aggregation sit on top.

use std::fmt;

use serde::{Deserialize, Serialize};

pub mod config;
pub mod delay;
pub mod digest;
pub mod events;
pub mod exec;
pub mod metrics;
pub mod simnet;
pub mod state;
pub mod supervisor;
pub mod trace;

/// Identifier of a virtual node. Replacement nodes get fresh identifiers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(pub u32);

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}
