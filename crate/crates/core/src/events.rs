//! Event log shared by the simulator and the trace replayer.
//!
//! Serialized as newline-delimited JSON, one record per line, with a fixed
//! field order. Identical logs therefore serialize to identical bytes.

use std::io::{self, BufRead, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::delay::{DelayClass, Micros};
use crate::digest::Digest128;
use crate::state::NodeState;
use crate::supervisor::{CheckpointTrigger, ShutdownReason, Tick, TransitionRule};
use crate::NodeId;

/// Behaviour a simulated node is switched into.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FaultKind {
    Healthy,
    /// Computes on a corrupted input, so every digest is wrong.
    ByzantineCorrupt,
    /// Keeps the checksum path intact but stalls beyond the supremum.
    ConcealedMalicious,
    /// Correct digests, latency multiplied by a degradation factor.
    Degraded,
    /// Never replies.
    FailStop,
}

impl FaultKind {
    pub fn as_str(self) -> &'static str {
        match self {
            FaultKind::Healthy => "healthy",
            FaultKind::ByzantineCorrupt => "byzantine-corrupt",
            FaultKind::ConcealedMalicious => "concealed-malicious",
            FaultKind::Degraded => "degraded",
            FaultKind::FailStop => "fail-stop",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EventKind {
    Inject {
        mode: FaultKind,
    },
    /// Node failed calibration and was never admitted.
    Reject,
    Challenge {
        intra: bool,
    },
    Reply {
        digest: Option<Digest128>,
        latency_us: Option<Micros>,
        /// `None` when the digest was not verified (crash-only mode, or no
        /// digest in a replayed trace).
        checksum_ok: Option<bool>,
    },
    Classify {
        class: DelayClass,
        latency_us: Micros,
        baseline_us: Micros,
    },
    Transition {
        from: NodeState,
        to: NodeState,
        output: u8,
        rule: TransitionRule,
    },
    Checkpoint {
        trigger: CheckpointTrigger,
        position: u64,
    },
    Shutdown {
        reason: ShutdownReason,
    },
    Replace {
        new_node: NodeId,
        /// Tick of the checkpoint the workload resumed from; `None` is a cold restart.
        resume_tick: Option<Tick>,
        position: u64,
    },
}

impl EventKind {
    pub fn name(&self) -> &'static str {
        match self {
            EventKind::Inject { .. } => "inject",
            EventKind::Reject => "reject",
            EventKind::Challenge { .. } => "challenge",
            EventKind::Reply { .. } => "reply",
            EventKind::Classify { .. } => "classify",
            EventKind::Transition { .. } => "transition",
            EventKind::Checkpoint { .. } => "checkpoint",
            EventKind::Shutdown { .. } => "shutdown",
            EventKind::Replace { .. } => "replace",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub tick: Tick,
    pub node: NodeId,
    #[serde(flatten)]
    pub kind: EventKind,
}

#[derive(Debug, Error)]
pub enum LogError {
    #[error("event log I/O: {0}")]
    Io(#[from] io::Error),
    #[error("line {line}: {source}")]
    Parse { line: usize, source: serde_json::Error },
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum LogViolation {
    #[error("tick decreases at record {0}")]
    TickOrder(usize),
    #[error("shutdown of node {node} at tick {tick} is not followed by exactly one replace")]
    UnpairedShutdown { node: NodeId, tick: Tick },
    #[error("replace of node {0} without a preceding shutdown")]
    UnpairedReplace(NodeId),
}

/// Ordered event records.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EventLog {
    events: Vec<Event>,
}

impl EventLog {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, tick: Tick, node: NodeId, kind: EventKind) {
        self.events.push(Event { tick, node, kind });
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn of_kind<'a>(&'a self, name: &'a str) -> impl Iterator<Item = &'a Event> + 'a {
        self.events.iter().filter(move |e| e.kind.name() == name)
    }

    pub fn write_ndjson<W: Write>(&self, mut out: W) -> Result<(), LogError> {
        for e in &self.events {
            serde_json::to_writer(&mut out, e).map_err(io::Error::from)?;
            out.write_all(b"\n")?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn to_ndjson(&self) -> String {
        let mut buf = Vec::new();
        self.write_ndjson(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("serde_json emits UTF-8")
    }

    pub fn read_ndjson<R: BufRead>(input: R) -> Result<Self, LogError> {
        let mut events = Vec::new();
        for (i, line) in input.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let event = serde_json::from_str(&line).map_err(|source| LogError::Parse { line: i + 1, source })?;
            events.push(event);
        }
        Ok(EventLog { events })
    }

    /// Checks tick ordering and that every shutdown is paired with exactly
    /// one replace of the same node at the same tick.
    pub fn verify_simulation_log(&self) -> Result<(), LogViolation> {
        if let Some(i) = self.events.windows(2).position(|w| w[1].tick < w[0].tick) {
            return Err(LogViolation::TickOrder(i + 1));
        }
        let mut open: Option<(NodeId, Tick)> = None;
        for e in &self.events {
            match e.kind {
                EventKind::Shutdown { .. } => {
                    if let Some((node, tick)) = open {
                        return Err(LogViolation::UnpairedShutdown { node, tick });
                    }
                    open = Some((e.node, e.tick));
                }
                EventKind::Replace { .. } => match open.take() {
                    Some((node, tick)) if node == e.node && tick == e.tick => {}
                    Some((node, tick)) => return Err(LogViolation::UnpairedShutdown { node, tick }),
                    None => return Err(LogViolation::UnpairedReplace(e.node)),
                },
                _ => {
                    if let Some((node, tick)) = open {
                        return Err(LogViolation::UnpairedShutdown { node, tick });
                    }
                }
            }
        }
        match open {
            Some((node, tick)) => Err(LogViolation::UnpairedShutdown { node, tick }),
            None => Ok(()),
        }
    }
}

impl FromIterator<Event> for EventLog {
    fn from_iter<I: IntoIterator<Item = Event>>(iter: I) -> Self {
        EventLog { events: iter.into_iter().collect() }
    }
}
