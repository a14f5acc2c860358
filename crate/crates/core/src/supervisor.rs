//! Monitoring supervisor.
//!
//! The supervisor admits nodes after a calibration round of checksum
//! challenges, then evaluates each node when it falls due:
//!
//! 1. if the reply latency reaches the QoS threshold, a checkpoint is
//!    captured before anything else;
//! 2. the reply digest is checked against the pre-computed digest, and a
//!    mismatch shuts the node down;
//! 3. a clean reply is classified for delay variation. Extreme delay shuts
//!    the node down, high delay moves it to S1, low or normal is quiescent;
//! 4. the next evaluation is scheduled. Quiescent S0 nodes stretch their
//!    interval `j, 2j, 3j, ...` up to a cap. S1 nodes are re-evaluated every
//!    `j`, and the `q_limit`-th successive high reading shuts them down.
//!
//! A silent node (no reply within the challenge timeout) is treated as
//! extreme delay.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::delay::{build_baseline, classify_delay, BaselineSet, DelayClass, DelayError, Micros};
use crate::digest::{ChallengeMessage, Digest128};
use crate::state::{step_checksum, step_combined, CombinedInput, LifecycleError, NodeState};
use crate::NodeId;

/// Simulation time in ticks (one tick is one second of simulated time).
pub type Tick = u64;

/// Tunables chosen before calibration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Policy {
    /// QoS response-time threshold. Defaults to the calibrated upper bound.
    pub qos_us: Option<Micros>,
    /// Initial monitoring interval `j`, in ticks.
    pub interval: Tick,
    /// `z = ceil(alpha * U)`.
    pub alpha: f64,
    /// Relative band around a node's baseline that still counts as normal.
    pub tolerance: f64,
    /// A reply slower than this is a timeout.
    pub timeout_us: Micros,
    /// Largest interval multiplier for quiescent nodes.
    pub m_cap: u32,
    /// Successive high readings in S1 that force a shutdown.
    pub q_limit: u8,
    /// When false, digests and delays are ignored and only timeouts count
    /// (crash-only detector).
    pub checksum: bool,
}

impl Default for Policy {
    fn default() -> Self {
        Policy {
            qos_us: None,
            interval: 10,
            alpha: 0.5,
            tolerance: 0.01,
            timeout_us: 1_000_000,
            m_cap: 16,
            q_limit: 3,
            checksum: true,
        }
    }
}

impl Policy {
    pub fn validate(&self) -> Result<(), PrecomputeError> {
        let bad = |msg: String| Err(PrecomputeError::InvalidPolicy(msg));
        if self.interval == 0 {
            return bad("interval must be at least 1 tick".into());
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return bad(format!("alpha must lie in (0, 1), got {}", self.alpha));
        }
        if !(0.0..1.0).contains(&self.tolerance) {
            return bad(format!("tolerance must lie in [0, 1), got {}", self.tolerance));
        }
        if self.timeout_us == 0 {
            return bad("timeout_us must be positive".into());
        }
        if self.qos_us == Some(0) {
            return bad("qos_us must be positive".into());
        }
        if self.m_cap == 0 {
            return bad("m_cap must be at least 1".into());
        }
        if !(1..=3).contains(&self.q_limit) {
            return bad(format!("q_limit must lie in 1..=3, got {}", self.q_limit));
        }
        Ok(())
    }
}

/// Everything the supervisor needs once nodes are admitted.
#[derive(Debug, Clone, PartialEq)]
pub struct SupervisorConfig {
    pub message: ChallengeMessage,
    pub expected: Digest128,
    pub baseline: BaselineSet,
    pub qos_us: Micros,
    pub interval: Tick,
    pub alpha: f64,
    pub tolerance: f64,
    pub timeout_us: Micros,
    pub m_cap: u32,
    pub q_limit: u8,
    pub checksum: bool,
}

impl SupervisorConfig {
    /// Combines a calibrated baseline with the policy tunables.
    pub fn from_policy(message: ChallengeMessage, baseline: BaselineSet, policy: &Policy) -> Self {
        SupervisorConfig {
            message,
            expected: message.digest(),
            qos_us: policy.qos_us.unwrap_or(baseline.upper_bound()),
            baseline,
            interval: policy.interval,
            alpha: policy.alpha,
            tolerance: policy.tolerance,
            timeout_us: policy.timeout_us,
            m_cap: policy.m_cap,
            q_limit: policy.q_limit,
            checksum: policy.checksum,
        }
    }
}

/// A node's answer to a challenge.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "reply", rename_all = "snake_case")]
pub enum Reply {
    Digest { digest: Digest128, latency_us: Micros },
    Timeout,
}

impl Reply {
    /// Applies the challenge timeout to a raw reply.
    pub fn within(self, timeout_us: Micros) -> Reply {
        match self {
            Reply::Digest { latency_us, .. } if latency_us > timeout_us => Reply::Timeout,
            r => r,
        }
    }

    pub fn latency_us(&self) -> Option<Micros> {
        match self {
            Reply::Digest { latency_us, .. } => Some(*latency_us),
            Reply::Timeout => None,
        }
    }

    pub fn digest(&self) -> Option<Digest128> {
        match self {
            Reply::Digest { digest, .. } => Some(*digest),
            Reply::Timeout => None,
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum PrecomputeError {
    #[error("no nodes to calibrate")]
    NoNodes,
    #[error("calibration needs at least one round")]
    NoRounds,
    #[error("every calibration digest disagreed with the expected digest; the supervisor itself may be compromised")]
    SupervisorSuspect,
    #[error("no node passed calibration")]
    NoHealthyNodes,
    #[error("invalid policy: {0}")]
    InvalidPolicy(String),
    #[error(transparent)]
    Baseline(#[from] DelayError),
}

/// Outcome of calibration.
#[derive(Debug, Clone)]
pub struct Precomputed {
    pub config: SupervisorConfig,
    pub admitted: Vec<NodeId>,
    pub rejected: Vec<NodeId>,
    /// Calibration latencies of admitted nodes, in round order.
    pub samples: BTreeMap<NodeId, Vec<Micros>>,
}

/// Challenges every node `rounds` times and admits those whose digests all
/// match `md5(message)`.
///
/// A node is rejected on any mismatch or timeout. When nobody is admitted and
/// every reply that did arrive was wrong, the supervisor is suspect.
pub fn precompute<F>(
    message: ChallengeMessage,
    nodes: &[NodeId],
    rounds: u32,
    policy: &Policy,
    mut challenge: F,
) -> Result<Precomputed, PrecomputeError>
where
    F: FnMut(NodeId, u32) -> Reply,
{
    policy.validate()?;
    if nodes.is_empty() {
        return Err(PrecomputeError::NoNodes);
    }
    if rounds == 0 {
        return Err(PrecomputeError::NoRounds);
    }
    let expected = message.digest();

    let mut samples = BTreeMap::new();
    let mut rejected = Vec::new();
    let mut any_match = false;
    let mut any_reply = false;
    for &node in nodes {
        let mut times = Vec::with_capacity(rounds as usize);
        let mut ok = true;
        for round in 0..rounds {
            match challenge(node, round).within(policy.timeout_us) {
                Reply::Digest { digest, latency_us } if digest == expected => {
                    any_reply = true;
                    any_match = true;
                    times.push(latency_us.max(1));
                }
                Reply::Digest { .. } => {
                    any_reply = true;
                    ok = false;
                }
                Reply::Timeout => ok = false,
            }
        }
        if ok {
            samples.insert(node, times);
        } else {
            rejected.push(node);
        }
    }

    if samples.is_empty() {
        return Err(if any_reply && !any_match {
            PrecomputeError::SupervisorSuspect
        } else {
            PrecomputeError::NoHealthyNodes
        });
    }
    let baseline = build_baseline(&samples, policy.alpha)?;
    let config = SupervisorConfig::from_policy(message, baseline, policy);
    Ok(Precomputed { config, admitted: samples.keys().copied().collect(), rejected, samples })
}

/// Saved workload progress of a node.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CheckpointToken {
    pub node: NodeId,
    pub captured_at: Tick,
    /// Opaque workload position.
    pub position: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct NodeRecord {
    pub id: NodeId,
    pub state: NodeState,
    pub baseline_us: Micros,
    /// Current interval is `multiplier * j`.
    pub multiplier: u32,
    /// Successive high readings while in S1.
    pub q: u8,
    pub checkpoint: Option<CheckpointToken>,
    pub next_due: Tick,
}

impl NodeRecord {
    pub fn admit(id: NodeId, baseline_us: Micros, now: Tick, config: &SupervisorConfig) -> Self {
        NodeRecord {
            id,
            state: NodeState::S0,
            baseline_us,
            multiplier: 1,
            q: 0,
            checkpoint: None,
            next_due: now + config.interval,
        }
    }

    pub fn is_due(&self, now: Tick) -> bool {
        self.state != NodeState::S2 && now >= self.next_due
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ShutdownReason {
    ChecksumError,
    ExtremeDelay,
    PersistentHigh,
    Timeout,
}

impl ShutdownReason {
    pub fn as_str(self) -> &'static str {
        match self {
            ShutdownReason::ChecksumError => "checksum-error",
            ShutdownReason::ExtremeDelay => "extreme-delay",
            ShutdownReason::PersistentHigh => "persistent-high",
            ShutdownReason::Timeout => "timeout",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "action", content = "reason", rename_all = "snake_case")]
pub enum Action {
    Continue,
    Checkpoint,
    ShutdownAndReplace(ShutdownReason),
    SupervisorSuspect,
}

/// Why a checkpoint was captured.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckpointTrigger {
    /// Response time reached the QoS threshold.
    Qos,
    /// Clean evaluation on the optimized schedule.
    Interval,
}

/// Which rule produced a state change.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TransitionRule {
    Checksum,
    Combined,
    Recovery,
    Persistence,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StateChange {
    pub from: NodeState,
    pub to: NodeState,
    pub output: u8,
    pub rule: TransitionRule,
}

/// Current time and workload position of the node being evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Probe {
    pub now: Tick,
    pub position: u64,
}

/// What happened during one evaluation, in order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Trail {
    pub checkpoint: Option<CheckpointTrigger>,
    /// `Some(true)` for a wrong digest, `None` when not checked.
    pub checksum_error: Option<bool>,
    pub class: Option<DelayClass>,
    pub changes: Vec<StateChange>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub action: Action,
    pub trail: Trail,
}

fn capture(record: &mut NodeRecord, probe: Probe) {
    record.checkpoint = Some(CheckpointToken { node: record.id, captured_at: probe.now, position: probe.position });
}

fn apply(record: &mut NodeRecord, next: NodeState, output: u8, rule: TransitionRule, trail: &mut Trail) {
    if record.state != next {
        trail.changes.push(StateChange { from: record.state, to: next, output, rule });
        record.state = next;
    }
}

/// Response-time trigger: checkpoint when the QoS threshold is reached.
pub fn monitor_tick(record: &NodeRecord, response_us: Micros, config: &SupervisorConfig) -> Action {
    debug_assert_ne!(record.state, NodeState::S2);
    if response_us >= config.qos_us {
        Action::Checkpoint
    } else {
        Action::Continue
    }
}

/// Verifies a challenge reply and hands clean replies to the delay check.
pub fn checksum_challenge(
    record: &mut NodeRecord,
    reply: Reply,
    config: &SupervisorConfig,
    probe: Probe,
    trail: &mut Trail,
) -> Result<Action, LifecycleError> {
    match reply.within(config.timeout_us) {
        Reply::Timeout => {
            let t = step_combined(record.state, CombinedInput::bits(true, false))?;
            apply(record, t.next, t.output, TransitionRule::Combined, trail);
            Ok(Action::ShutdownAndReplace(ShutdownReason::Timeout))
        }
        Reply::Digest { .. } if !config.checksum => {
            step_combined(record.state, CombinedInput::Quiescent)?;
            Ok(checkpoint_optimize(record, config, probe, false, trail))
        }
        Reply::Digest { digest, latency_us } => {
            let wrong = digest != config.expected;
            trail.checksum_error = Some(wrong);
            if wrong {
                let t = step_checksum(record.state, true)?;
                apply(record, t.next, t.output, TransitionRule::Checksum, trail);
                Ok(Action::ShutdownAndReplace(ShutdownReason::ChecksumError))
            } else {
                compare_delay_variation(record, latency_us, config, probe, trail)
            }
        }
    }
}

/// Classifies a verified reply's latency and applies the combined table.
pub fn compare_delay_variation(
    record: &mut NodeRecord,
    t_obs: Micros,
    config: &SupervisorConfig,
    probe: Probe,
    trail: &mut Trail,
) -> Result<Action, LifecycleError> {
    // Replies are never faster than 1 us.
    let class = classify_delay(t_obs.max(1), record.baseline_us, &config.baseline, config.tolerance)
        .expect("positive observation and validated tolerance");
    trail.class = Some(class);

    match class {
        DelayClass::Low | DelayClass::Normal => {
            let rule = if record.state == NodeState::S1 { TransitionRule::Recovery } else { TransitionRule::Combined };
            let t = step_combined(record.state, CombinedInput::Quiescent)?;
            apply(record, t.next, t.output, rule, trail);
            Ok(checkpoint_optimize(record, config, probe, false, trail))
        }
        DelayClass::High => {
            let t = step_combined(record.state, CombinedInput::bits(false, false))?;
            apply(record, t.next, t.output, TransitionRule::Combined, trail);
            Ok(checkpoint_optimize(record, config, probe, true, trail))
        }
        DelayClass::Extreme => {
            let t = step_combined(record.state, CombinedInput::bits(true, false))?;
            apply(record, t.next, t.output, TransitionRule::Combined, trail);
            Ok(Action::ShutdownAndReplace(ShutdownReason::ExtremeDelay))
        }
    }
}

/// Schedules the next evaluation after a non-fatal reading.
///
/// `high` is true when this evaluation read high delay with a clean
/// checksum. A node that just recovered to S0 restarts its growth from `j`.
pub fn checkpoint_optimize(
    record: &mut NodeRecord,
    config: &SupervisorConfig,
    probe: Probe,
    high: bool,
    trail: &mut Trail,
) -> Action {
    match record.state {
        NodeState::S0 => {
            let recovered = trail.changes.iter().any(|c| c.rule == TransitionRule::Recovery);
            if recovered {
                record.q = 0;
                record.multiplier = 1;
            } else {
                record.multiplier = (record.multiplier + 1).min(config.m_cap);
            }
            record.next_due = probe.now + u64::from(record.multiplier) * config.interval;
        }
        NodeState::S1 => {
            record.multiplier = 1;
            record.next_due = probe.now + config.interval;
            if high {
                record.q += 1;
            }
            if record.q >= config.q_limit {
                apply(record, NodeState::S2, 1, TransitionRule::Persistence, trail);
                return Action::ShutdownAndReplace(ShutdownReason::PersistentHigh);
            }
        }
        NodeState::S2 => return Action::Continue,
    }
    if trail.checkpoint.is_none() {
        capture(record, probe);
        trail.checkpoint = Some(CheckpointTrigger::Interval);
    }
    Action::Continue
}

/// Runs one full evaluation of a due node.
pub fn evaluate(
    record: &mut NodeRecord,
    reply: Reply,
    config: &SupervisorConfig,
    probe: Probe,
) -> Result<Evaluation, LifecycleError> {
    if record.state == NodeState::S2 {
        return Err(LifecycleError);
    }
    let mut trail = Trail::default();
    let reply = reply.within(config.timeout_us);
    if let Some(latency) = reply.latency_us() {
        if monitor_tick(record, latency, config) == Action::Checkpoint {
            capture(record, probe);
            trail.checkpoint = Some(CheckpointTrigger::Qos);
        }
    }
    let action = checksum_challenge(record, reply, config, probe, &mut trail)?;
    Ok(Evaluation { action, trail })
}

/// A fresh node taking over a fail-stop node's slot.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Replacement {
    pub record: NodeRecord,
    /// Checkpoint the workload resumes from; `None` is a cold restart.
    pub resume_from: Option<CheckpointToken>,
}

/// Starts a replacement for a fail-stop node.
pub fn replace_node(
    retired: &NodeRecord,
    new_id: NodeId,
    now: Tick,
    config: &SupervisorConfig,
) -> Result<Replacement, ReplaceError> {
    if retired.state != NodeState::S2 {
        return Err(ReplaceError::NotFailStop(retired.id, retired.state));
    }
    let mut record = NodeRecord::admit(new_id, retired.baseline_us, now, config);
    record.checkpoint = retired.checkpoint.map(|t| CheckpointToken { node: new_id, ..t });
    Ok(Replacement { record, resume_from: retired.checkpoint })
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ReplaceError {
    #[error("node {0} is in {1}, only fail-stop nodes are replaced")]
    NotFailStop(NodeId, NodeState),
    #[error("unknown node {0}")]
    UnknownNode(NodeId),
}

/// Replication regime for k-fault tolerance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ReplicationMode {
    Crash,
    ByzantineClassic,
    ByzantineWithChecksum,
}

/// Replicas needed to tolerate `k` faults. The checksum reduces Byzantine
/// faults to crash faults, so it needs only `k + 1`.
pub fn required_replicas(k: u64, mode: ReplicationMode) -> u64 {
    match mode {
        ReplicationMode::Crash | ReplicationMode::ByzantineWithChecksum => k + 1,
        ReplicationMode::ByzantineClassic => 3 * k + 1,
    }
}

/// Owns every node record and drives evaluations.
#[derive(Debug, Clone)]
pub struct Supervisor {
    config: SupervisorConfig,
    records: BTreeMap<NodeId, NodeRecord>,
}

impl Supervisor {
    pub fn new(config: SupervisorConfig, admitted: &[NodeId], now: Tick) -> Self {
        let records = admitted
            .iter()
            .map(|&id| {
                let t = config.baseline.baseline(id).expect("admitted node has a baseline");
                (id, NodeRecord::admit(id, t, now, &config))
            })
            .collect();
        Supervisor { config, records }
    }

    pub fn config(&self) -> &SupervisorConfig {
        &self.config
    }

    pub fn record(&self, id: NodeId) -> Option<&NodeRecord> {
        self.records.get(&id)
    }

    pub fn records(&self) -> impl Iterator<Item = &NodeRecord> {
        self.records.values()
    }

    pub fn is_due(&self, id: NodeId, now: Tick) -> bool {
        self.records.get(&id).is_some_and(|r| r.is_due(now))
    }

    pub fn evaluate(&mut self, id: NodeId, reply: Reply, probe: Probe) -> Result<Evaluation, LifecycleError> {
        let record = self.records.get_mut(&id).ok_or(LifecycleError)?;
        evaluate(record, reply, &self.config, probe)
    }

    /// Retires `old` and admits `new_id` in its place.
    pub fn replace(&mut self, old: NodeId, new_id: NodeId, now: Tick) -> Result<Replacement, ReplaceError> {
        let retired = self.records.remove(&old).ok_or(ReplaceError::UnknownNode(old))?;
        let replacement = match replace_node(&retired, new_id, now, &self.config) {
            Ok(r) => r,
            Err(e) => {
                self.records.insert(old, retired);
                return Err(e);
            }
        };
        self.config.baseline.inherit(new_id, retired.baseline_us);
        self.records.insert(new_id, replacement.record.clone());
        Ok(replacement)
    }
}
