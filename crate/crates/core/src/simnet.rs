//! Seeded discrete-event simulation of a virtual node pool.
//!
//! Tick 0 is calibration: every node answers `calibration_rounds`
//! challenges and the supervisor admits the nodes whose digests match.
//! Injections scheduled for tick 0 take effect right after. Ticks `1..=H`
//! then run the monitoring loop: injections due at the tick are activated,
//! every node that falls due answers a challenge, and the supervisor
//! evaluates the replies in slot order. A node that is shut down is replaced
//! in the same tick by a fresh node that inherits the slot's baseline.
//!
//! Each node draws from its own random stream, so replies can be computed in
//! parallel without changing a single byte of the event log.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use thiserror::Error;

use crate::config::{ConfigError, ScenarioConfig};
use crate::delay::Micros;
use crate::digest::{md5_digest, ChallengeMessage, Digest128};
use crate::events::{EventKind, EventLog, FaultKind};
use crate::exec::{self, stream_rng, ExecMode, DOMAIN_NODE, DOMAIN_SCENARIO};
use crate::metrics::{MetricsReport, ReportContext};
use crate::state::NodeState;
use crate::supervisor::{
    precompute, Action, CheckpointTrigger, PrecomputeError, Probe, Reply, Supervisor, SupervisorConfig, Tick,
};
use crate::trace::TraceRecord;
use crate::NodeId;

/// Below this many due nodes a tick is answered sequentially; the pool
/// hand-off costs more than it saves.
const PARALLEL_MIN_DUE: usize = 64;

/// Active behaviour of a node and the tick it started.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FaultMode {
    pub kind: FaultKind,
    pub since: Tick,
}

impl FaultMode {
    pub fn healthy(since: Tick) -> Self {
        FaultMode { kind: FaultKind::Healthy, since }
    }
}

/// Lognormal reply latency: `median * exp(sigma * N(0, 1))`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LatencyModel {
    pub median_us: f64,
    pub sigma: f64,
}

impl LatencyModel {
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let z: f64 = StandardNormal.sample(rng);
        self.median_us * (self.sigma * z).exp()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VirtualNode {
    pub id: NodeId,
    pub mode: FaultMode,
    pub latency: LatencyModel,
    /// Latency multiplier while degraded, at least 1.
    pub degradation: f64,
    /// Bit of the challenge input flipped on a corrupted compute path.
    pub corrupt_bit: usize,
    /// Stall added by a concealed-malicious node; the supremum at injection.
    pub stall_us: Micros,
    /// Intra node (same host, no TCP/IP stack) or inter node.
    pub intra: bool,
    start_tick: Tick,
    start_position: u64,
}

impl VirtualNode {
    pub fn new(id: NodeId, latency: LatencyModel, intra: bool) -> Self {
        VirtualNode {
            id,
            mode: FaultMode::healthy(0),
            latency,
            degradation: 1.0,
            corrupt_bit: 0,
            stall_us: 0,
            intra,
            start_tick: 0,
            start_position: 0,
        }
    }

    /// Workload progress: one unit per tick since the node started, plus
    /// whatever it resumed from.
    pub fn position(&self, now: Tick) -> u64 {
        self.start_position + now.saturating_sub(self.start_tick)
    }
}

/// Transient corruption on the path from node to supervisor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransientLink {
    pub corruption_p: f64,
}

impl TransientLink {
    /// Flips one random digest bit with probability `corruption_p`.
    pub fn transmit<R: Rng + ?Sized>(&self, digest: Digest128, rng: &mut R) -> Digest128 {
        if self.corruption_p > 0.0 && rng.random_bool(self.corruption_p) {
            digest.with_bit_flipped(rng.random_range(0..128))
        } else {
            digest
        }
    }
}

/// One latency draw in whole microseconds, scaled by the degradation factor
/// of a degraded node. Never below 1 us.
pub fn sample_response_time<R: Rng + ?Sized>(node: &VirtualNode, rng: &mut R) -> Micros {
    let mut t = node.latency.sample(rng);
    if node.mode.kind == FaultKind::Degraded {
        t *= node.degradation;
    }
    (t.round() as Micros).max(1)
}

/// A node's answer to the challenge `message`.
pub fn node_respond_challenge<R: Rng + ?Sized>(
    node: &VirtualNode,
    message: &ChallengeMessage,
    link: &TransientLink,
    rng: &mut R,
) -> Reply {
    let (digest, latency_us) = match node.mode.kind {
        FaultKind::FailStop => return Reply::Timeout,
        FaultKind::ByzantineCorrupt => {
            (message.with_bit_flipped(node.corrupt_bit).digest(), sample_response_time(node, rng))
        }
        FaultKind::ConcealedMalicious => (message.digest(), node.stall_us + sample_response_time(node, rng)),
        FaultKind::Healthy | FaultKind::Degraded => (message.digest(), sample_response_time(node, rng)),
    };
    Reply::Digest { digest: link.transmit(digest, rng), latency_us }
}

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("calibration failed: {0}")]
    Calibration(#[from] PrecomputeError),
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum InjectError {
    #[error("node {0} has been retired")]
    Retired(NodeId),
    #[error("unknown node {0}")]
    Unknown(NodeId),
    #[error("tick {tick} is outside {now}..={horizon}")]
    OutsideHorizon { tick: Tick, now: Tick, horizon: Tick },
}

#[derive(Debug, Clone, Copy)]
enum Target {
    Slot(usize),
    Node(NodeId),
}

#[derive(Debug, Clone, Copy)]
struct Pending {
    at: Tick,
    target: Target,
    kind: FaultKind,
    degradation: f64,
}

#[derive(Debug, Clone)]
struct Slot {
    node: VirtualNode,
    rng: ChaCha8Rng,
    due: bool,
}

/// A scenario in progress.
#[derive(Debug, Clone)]
pub struct Simulation {
    config: ScenarioConfig,
    mode: ExecMode,
    message: ChallengeMessage,
    link: TransientLink,
    supervisor: Supervisor,
    slots: Vec<Slot>,
    active: BTreeMap<NodeId, usize>,
    retired: BTreeSet<NodeId>,
    origin: BTreeMap<NodeId, NodeId>,
    calibration: BTreeMap<NodeId, Vec<Micros>>,
    pending: Vec<Pending>,
    next_id: u32,
    now: Tick,
    log: EventLog,
}

impl Simulation {
    /// Validates the config, builds the pool and runs calibration.
    pub fn new(config: ScenarioConfig, mode: ExecMode) -> Result<Self, SimError> {
        config.validate()?;
        let message = config.message()?;
        let seed = config.scenario.seed;
        let n = config.scenario.nodes;
        let link = TransientLink { corruption_p: config.link.corruption_p };
        let mut scenario_rng = stream_rng(seed, DOMAIN_SCENARIO, 0);

        let mut slots: Vec<Slot> = (0..n)
            .map(|i| {
                let z: f64 = StandardNormal.sample(&mut scenario_rng);
                let latency = LatencyModel {
                    median_us: config.latency.median_us * (config.latency.node_spread * z).exp(),
                    sigma: config.latency.sigma,
                };
                let intra = scenario_rng.random_bool(config.link.intra_fraction);
                Slot {
                    node: VirtualNode::new(NodeId(i), latency, intra),
                    rng: stream_rng(seed, DOMAIN_NODE, u64::from(i)),
                    due: false,
                }
            })
            .collect();

        let ids: Vec<NodeId> = (0..n).map(NodeId).collect();
        let pre = precompute(message, &ids, config.scenario.calibration_rounds, &config.supervisor, |id, _| {
            let slot = &mut slots[id.0 as usize];
            node_respond_challenge(&slot.node, &message, &link, &mut slot.rng)
        })?;

        let mut log = EventLog::new();
        for &id in &pre.rejected {
            log::debug!("node {id} failed calibration");
            log.push(0, id, EventKind::Reject);
        }
        let admitted: BTreeSet<NodeId> = pre.admitted.iter().copied().collect();
        slots.retain(|s| admitted.contains(&s.node.id));
        let active = slots.iter().enumerate().map(|(i, s)| (s.node.id, i)).collect();
        let origin = pre.admitted.iter().map(|&id| (id, id)).collect();

        let mut order: Vec<usize> = (0..slots.len()).collect();
        order.shuffle(&mut scenario_rng);
        let mut pending = Vec::new();
        let mut cursor = 0;
        for inj in &config.injections {
            let count = ((inj.fraction * slots.len() as f64).round() as usize).min(order.len() - cursor);
            for &slot in &order[cursor..cursor + count] {
                pending.push(Pending { at: inj.at, target: Target::Slot(slot), kind: inj.mode, degradation: inj.degradation });
            }
            cursor += count;
        }
        pending.sort_by_key(|p| p.at);

        let supervisor = Supervisor::new(pre.config, &pre.admitted, 0);
        let mut sim = Simulation {
            mode,
            message,
            link,
            supervisor,
            slots,
            active,
            retired: BTreeSet::new(),
            origin,
            calibration: pre.samples,
            pending,
            next_id: n,
            now: 0,
            log,
            config,
        };
        sim.activate_injections();
        Ok(sim)
    }

    pub fn now(&self) -> Tick {
        self.now
    }

    pub fn horizon(&self) -> Tick {
        self.config.scenario.horizon
    }

    pub fn log(&self) -> &EventLog {
        &self.log
    }

    pub fn supervisor(&self) -> &Supervisor {
        &self.supervisor
    }

    pub fn active_count(&self) -> usize {
        self.active.len()
    }

    pub fn node(&self, id: NodeId) -> Option<&VirtualNode> {
        self.active.get(&id).map(|&i| &self.slots[i].node)
    }

    /// Active node ids in slot order.
    pub fn active_nodes(&self) -> Vec<NodeId> {
        self.slots.iter().map(|s| s.node.id).collect()
    }

    /// Schedules `node` to switch into `mode.kind` at tick `mode.since`.
    pub fn inject_fault(&mut self, node: NodeId, mode: FaultMode, degradation: f64) -> Result<(), InjectError> {
        if self.retired.contains(&node) {
            return Err(InjectError::Retired(node));
        }
        if !self.active.contains_key(&node) {
            return Err(InjectError::Unknown(node));
        }
        let horizon = self.horizon();
        if mode.since < self.now || mode.since > horizon {
            return Err(InjectError::OutsideHorizon { tick: mode.since, now: self.now, horizon });
        }
        let p = Pending { at: mode.since, target: Target::Node(node), kind: mode.kind, degradation: degradation.max(1.0) };
        let pos = self.pending.partition_point(|q| q.at <= p.at);
        self.pending.insert(pos, p);
        if mode.since == self.now {
            self.activate_injections();
        }
        Ok(())
    }

    fn activate_injections(&mut self) {
        let now = self.now;
        let due = self.pending.partition_point(|p| p.at <= now);
        let supremum = self.supervisor.config().baseline.supremum();
        for p in self.pending.drain(..due).collect::<Vec<_>>() {
            let idx = match p.target {
                Target::Slot(i) => i,
                Target::Node(id) => match self.active.get(&id) {
                    Some(&i) => i,
                    None => {
                        log::warn!("skipping injection into node {id}: retired before tick {now}");
                        continue;
                    }
                },
            };
            let slot = &mut self.slots[idx];
            let node = &mut slot.node;
            node.mode = FaultMode { kind: p.kind, since: now };
            node.degradation = 1.0;
            match p.kind {
                FaultKind::ByzantineCorrupt => node.corrupt_bit = slot.rng.random_range(0..ChallengeMessage::LEN * 8),
                FaultKind::Degraded => node.degradation = p.degradation,
                FaultKind::ConcealedMalicious => node.stall_us = supremum,
                FaultKind::Healthy | FaultKind::FailStop => {}
            }
            self.log.push(now, node.id, EventKind::Inject { mode: p.kind });
        }
    }

    /// Advances one tick. Returns false once the horizon has been reached.
    pub fn step(&mut self) -> bool {
        if self.now >= self.horizon() {
            return false;
        }
        self.now += 1;
        let now = self.now;
        self.activate_injections();

        let mut due = 0;
        for slot in &mut self.slots {
            slot.due = self.supervisor.is_due(slot.node.id, now);
            due += usize::from(slot.due);
        }
        if due == 0 {
            return true;
        }
        let mode = if due >= PARALLEL_MIN_DUE { self.mode } else { ExecMode::Sequential };
        let (message, link) = (self.message, self.link);
        let replies = exec::map_slice_mut(mode, &mut self.slots, |s| {
            s.due.then(|| node_respond_challenge(&s.node, &message, &link, &mut s.rng))
        });
        for (idx, reply) in replies.into_iter().enumerate() {
            if let Some(reply) = reply {
                self.apply_reply(idx, reply);
            }
        }
        true
    }

    fn apply_reply(&mut self, idx: usize, reply: Reply) {
        let now = self.now;
        let node = &self.slots[idx].node;
        let (id, intra, position) = (node.id, node.intra, node.position(now));
        let cfg = self.supervisor.config();
        let reply = reply.within(cfg.timeout_us);
        let checksum_ok = if cfg.checksum { reply.digest().map(|d| d == cfg.expected) } else { None };

        self.log.push(now, id, EventKind::Challenge { intra });
        self.log.push(now, id, EventKind::Reply { digest: reply.digest(), latency_us: reply.latency_us(), checksum_ok });

        let eval = self.supervisor.evaluate(id, reply, Probe { now, position }).expect("due nodes are live");
        let trail = eval.trail;
        if trail.checkpoint == Some(CheckpointTrigger::Qos) {
            self.log.push(now, id, EventKind::Checkpoint { trigger: CheckpointTrigger::Qos, position });
        }
        if let Some(class) = trail.class {
            let baseline_us = self.supervisor.record(id).expect("evaluated node").baseline_us;
            let latency_us = reply.latency_us().expect("classified replies carry a latency");
            self.log.push(now, id, EventKind::Classify { class, latency_us, baseline_us });
        }
        for c in trail.changes {
            self.log.push(now, id, EventKind::Transition { from: c.from, to: c.to, output: c.output, rule: c.rule });
        }
        if trail.checkpoint == Some(CheckpointTrigger::Interval) {
            self.log.push(now, id, EventKind::Checkpoint { trigger: CheckpointTrigger::Interval, position });
        }
        match eval.action {
            Action::ShutdownAndReplace(reason) => {
                log::debug!("tick {now}: node {id} shut down ({})", reason.as_str());
                self.log.push(now, id, EventKind::Shutdown { reason });
                self.replace_slot(idx);
            }
            Action::Continue | Action::Checkpoint | Action::SupervisorSuspect => {}
        }
    }

    fn replace_slot(&mut self, idx: usize) {
        let now = self.now;
        let old = self.slots[idx].node.id;
        let new_id = NodeId(self.next_id);
        self.next_id += 1;
        let rep = self.supervisor.replace(old, new_id, now).expect("shut-down node is fail-stop");
        let position = rep.resume_from.map_or(0, |t| t.position);

        let slot = &mut self.slots[idx];
        let mut node = VirtualNode::new(new_id, slot.node.latency, slot.node.intra);
        node.mode = FaultMode::healthy(now);
        node.start_tick = now;
        node.start_position = position;
        slot.node = node;
        slot.rng = stream_rng(self.config.scenario.seed, DOMAIN_NODE, u64::from(new_id.0));

        self.retired.insert(old);
        self.active.remove(&old);
        self.active.insert(new_id, idx);
        let origin = self.origin[&old];
        self.origin.insert(new_id, origin);
        self.log.push(
            now,
            old,
            EventKind::Replace { new_node: new_id, resume_tick: rep.resume_from.map(|t| t.captured_at), position },
        );
    }

    /// Runs the remaining ticks up to the horizon.
    pub fn run_to_horizon(&mut self) {
        while self.step() {}
    }

    /// Final state of every node that was ever admitted or started.
    pub fn node_states(&self) -> BTreeMap<NodeId, NodeState> {
        let mut states: BTreeMap<NodeId, NodeState> = self.retired.iter().map(|&id| (id, NodeState::S2)).collect();
        states.extend(self.supervisor.records().map(|r| (r.id, r.state)));
        states
    }

    pub fn report_context(&self) -> ReportContext {
        ReportContext {
            source: "simulate".into(),
            initial_nodes: self.config.scenario.nodes,
            horizon: Some(self.horizon()),
            interval: self.config.supervisor.interval,
            expected: Some(self.supervisor.config().expected),
            max_k: self.config.report.max_k,
        }
    }

    pub fn finish(self) -> ScenarioRun {
        let report = MetricsReport::from_log(&self.log, &self.report_context());
        ScenarioRun {
            final_states: self.node_states(),
            report,
            supervisor: self.supervisor.config().clone(),
            calibration: self.calibration,
            origin: self.origin,
            log: self.log,
        }
    }
}

/// Outcome of a complete scenario.
#[derive(Debug, Clone)]
pub struct ScenarioRun {
    pub log: EventLog,
    pub report: MetricsReport,
    pub final_states: BTreeMap<NodeId, NodeState>,
    pub supervisor: SupervisorConfig,
    /// Calibration latencies per originally admitted node.
    pub calibration: BTreeMap<NodeId, Vec<Micros>>,
    /// Original slot occupant of every node.
    pub origin: BTreeMap<NodeId, NodeId>,
}

impl ScenarioRun {
    /// Renders the run as trace records.
    ///
    /// Every node's trace starts with its calibration prefix. Replacement
    /// nodes repeat the prefix of the node whose slot they took, because
    /// they inherit that baseline. Monitoring replies follow at
    /// `tick * 1e6` microseconds; a timeout becomes a row slower than the
    /// challenge timeout with no digest.
    pub fn export_trace(&self) -> Vec<TraceRecord> {
        let expected = self.supervisor.expected;
        let row = |node: NodeId, ts: u64, response_us: Micros, digest: Option<Digest128>| TraceRecord {
            task_hash: task_hash(node, ts),
            node_id: node,
            timestamp_us: ts,
            response_us,
            sched_class: 0,
            digest,
        };
        let mut rows = Vec::new();
        for (&node, samples) in &self.calibration {
            for (r, &t) in samples.iter().enumerate() {
                rows.push(row(node, r as u64, t, Some(expected)));
            }
        }
        for e in self.log.events() {
            let ts = e.tick * 1_000_000;
            match e.kind {
                EventKind::Replace { new_node, .. } => {
                    for (r, &t) in self.calibration[&self.origin[&new_node]].iter().enumerate() {
                        rows.push(row(new_node, ts + r as u64, t, Some(expected)));
                    }
                }
                EventKind::Reply { digest, latency_us, .. } => {
                    let response = latency_us.unwrap_or(self.supervisor.timeout_us + 1);
                    rows.push(row(e.node, ts, response, digest));
                }
                _ => {}
            }
        }
        rows.sort_by_key(|r| (r.timestamp_us, r.node_id));
        rows
    }
}

fn task_hash(node: NodeId, ts: u64) -> String {
    md5_digest(format!("{node}:{ts}").as_bytes()).to_hex()[..16].to_string()
}

/// Runs one scenario to its horizon.
pub fn run_scenario(config: ScenarioConfig) -> Result<ScenarioRun, SimError> {
    run_scenario_with(config, ExecMode::default())
}

pub fn run_scenario_with(config: ScenarioConfig, mode: ExecMode) -> Result<ScenarioRun, SimError> {
    let mut sim = Simulation::new(config, mode)?;
    sim.run_to_horizon();
    Ok(sim.finish())
}

/// Runs independent scenarios, one per config, in parallel when `mode`
/// allows. Results come back in input order.
pub fn run_scenarios(configs: &[ScenarioConfig], mode: ExecMode) -> Vec<Result<ScenarioRun, SimError>> {
    exec::map_slice(mode, configs, |c| run_scenario_with(c.clone(), ExecMode::Sequential))
}
