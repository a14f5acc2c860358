//! Cluster-trace ingestion and offline replay through the detector.
//!
//! Trace files are CSV with the header
//!
//! ```text
//! task_hash,node_id,timestamp_us,response_us,sched_class,digest_hex
//! ```
//!
//! `digest_hex` may be empty. Each node's first `k` records are its
//! calibration prefix; every later record is classified for delay variation
//! and, when it carries a digest, checked against the expected digest.
//! Nodes are replayed as independent partitions and merged by tick.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use rand::seq::index;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use thiserror::Error;

use crate::config::{ConfigError, ScenarioConfig};
use crate::delay::{build_baseline, classify_delay, BaselineSet, DelayError, Micros};
use crate::digest::{ChallengeMessage, Digest128};
use crate::events::{Event, EventKind, EventLog};
use crate::exec::{self, stream_rng, ExecMode, DOMAIN_TRACE};
use crate::metrics::{MetricsReport, ReplayStats, ReportContext, SamplingSummary};
use crate::state::NodeState;
use crate::supervisor::{evaluate, Action, NodeRecord, Policy, Probe, Reply, SupervisorConfig};
use crate::NodeId;

pub const TRACE_HEADER: [&str; 6] = ["task_hash", "node_id", "timestamp_us", "response_us", "sched_class", "digest_hex"];

/// Loading aborts when more than this share of rows is malformed.
pub const MAX_MALFORMED_SHARE: f64 = 0.10;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TraceRecord {
    /// Opaque, already-hashed task identifier.
    pub task_hash: String,
    pub node_id: NodeId,
    pub timestamp_us: u64,
    pub response_us: Micros,
    pub sched_class: u8,
    pub digest: Option<Digest128>,
}

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("cannot open {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("trace CSV: {0}")]
    Csv(#[from] csv::Error),
    #[error("bad trace header `{found}`, expected `{}`", TRACE_HEADER.join(","))]
    BadHeader { found: String },
    #[error("{malformed} of {rows} rows are malformed (more than 10%)")]
    TooManyMalformed { malformed: usize, rows: usize },
}

/// Validated records in file order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LoadedTrace {
    pub records: Vec<TraceRecord>,
    /// Rows skipped as malformed.
    pub malformed: usize,
    /// True when at least one record carries a digest.
    pub has_digests: bool,
}

impl LoadedTrace {
    pub fn from_records(records: Vec<TraceRecord>) -> Self {
        let has_digests = records.iter().any(|r| r.digest.is_some());
        LoadedTrace { records, malformed: 0, has_digests }
    }
}

pub fn load_trace(path: &Path) -> Result<LoadedTrace, TraceError> {
    let file = File::open(path).map_err(|source| TraceError::Io { path: path.display().to_string(), source })?;
    read_trace(file)
}

fn parse_row(row: &csv::StringRecord) -> Option<TraceRecord> {
    if row.len() != TRACE_HEADER.len() {
        return None;
    }
    let response_us: Micros = row[3].trim().parse().ok()?;
    if response_us == 0 {
        return None;
    }
    let digest = match row[5].trim() {
        "" => None,
        hex => Some(hex.parse().ok()?),
    };
    Some(TraceRecord {
        task_hash: row[0].to_string(),
        node_id: NodeId(row[1].trim().parse().ok()?),
        timestamp_us: row[2].trim().parse().ok()?,
        response_us,
        sched_class: row[4].trim().parse().ok()?,
        digest,
    })
}

/// Reads a trace, skipping malformed rows: wrong field count, unparsable
/// fields, zero response time, a bad digest, or a timestamp earlier than the
/// node's previous record.
pub fn read_trace<R: Read>(input: R) -> Result<LoadedTrace, TraceError> {
    let mut reader = csv::ReaderBuilder::new().flexible(true).from_reader(input);
    let header = reader.headers()?.clone();
    if header.iter().map(str::trim).ne(TRACE_HEADER) {
        return Err(TraceError::BadHeader { found: header.iter().collect::<Vec<_>>().join(",") });
    }
    let mut records = Vec::new();
    let mut malformed = 0;
    let mut last_ts: BTreeMap<NodeId, u64> = BTreeMap::new();
    for row in reader.records() {
        let parsed = parse_row(&row?).filter(|r| last_ts.get(&r.node_id).is_none_or(|&t| r.timestamp_us >= t));
        match parsed {
            Some(r) => {
                last_ts.insert(r.node_id, r.timestamp_us);
                records.push(r);
            }
            None => malformed += 1,
        }
    }
    let rows = records.len() + malformed;
    if malformed as f64 > MAX_MALFORMED_SHARE * rows as f64 {
        return Err(TraceError::TooManyMalformed { malformed, rows });
    }
    if malformed > 0 {
        log::warn!("skipped {malformed} malformed trace rows of {rows}");
    }
    let mut trace = LoadedTrace::from_records(records);
    trace.malformed = malformed;
    Ok(trace)
}

pub fn write_trace<W: Write>(output: W, records: &[TraceRecord]) -> Result<(), TraceError> {
    let mut w = csv::Writer::from_writer(output);
    w.write_record(TRACE_HEADER)?;
    for r in records {
        let digest = r.digest.map(|d| d.to_hex()).unwrap_or_default();
        w.write_record([
            r.task_hash.as_str(),
            &r.node_id.to_string(),
            &r.timestamp_us.to_string(),
            &r.response_us.to_string(),
            &r.sched_class.to_string(),
            &digest,
        ])?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

/// Expected versus observed samples for one node.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SamplingRatio {
    pub expected: u64,
    pub observed: u64,
    /// `expected / observed`; `None` for a node with no samples.
    pub ratio: Option<f64>,
}

impl SamplingRatio {
    pub fn is_missing(&self) -> bool {
        self.observed == 0
    }
}

pub fn sampling_ratio(expected: u64, observed: u64) -> SamplingRatio {
    SamplingRatio { expected, observed, ratio: (observed > 0).then(|| expected as f64 / observed as f64) }
}

#[derive(Debug, Error)]
pub enum ReplayError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("no node has the {0} records needed for calibration")]
    NoCalibratedNodes(usize),
    #[error(transparent)]
    Baseline(#[from] DelayError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReplayConfig {
    pub policy: Policy,
    pub message: ChallengeMessage,
    /// Leading records per node used as calibration.
    pub calibration_k: usize,
    pub nominal_interval_us: u64,
    /// Span for the expected sample count; the trace's own span when absent.
    pub horizon_us: Option<u64>,
    pub max_k: u64,
}

impl Default for ReplayConfig {
    fn default() -> Self {
        ReplayConfig {
            policy: Policy::default(),
            message: ChallengeMessage::default(),
            calibration_k: 10,
            nominal_interval_us: 1_000_000,
            horizon_us: None,
            max_k: 3,
        }
    }
}

impl ReplayConfig {
    pub fn from_scenario(config: &ScenarioConfig) -> Result<Self, ConfigError> {
        config.validate()?;
        Ok(ReplayConfig {
            policy: config.supervisor.clone(),
            message: config.message()?,
            calibration_k: config.calibration_k(),
            nominal_interval_us: config.replay.nominal_interval_us,
            horizon_us: None,
            max_k: config.report.max_k,
        })
    }
}

#[derive(Debug, Clone)]
pub struct ReplayOutcome {
    pub log: EventLog,
    pub report: MetricsReport,
    pub final_states: BTreeMap<NodeId, NodeState>,
    pub baseline: BaselineSet,
    /// Nodes with fewer than `k` records.
    pub excluded: Vec<NodeId>,
    pub sampling: BTreeMap<NodeId, SamplingRatio>,
}

#[derive(Debug)]
struct NodeReplay {
    events: Vec<Event>,
    state: NodeState,
    timeouts: u64,
    post_retirement: u64,
}

fn replay_node(id: NodeId, rows: &[&TraceRecord], cfg: &SupervisorConfig) -> NodeReplay {
    let baseline_us = cfg.baseline.baseline(id).expect("calibrated node");
    let mut record = NodeRecord::admit(id, baseline_us, 0, cfg);
    let mut out = NodeReplay { events: Vec::new(), state: NodeState::S0, timeouts: 0, post_retirement: 0 };
    for (i, row) in rows.iter().enumerate() {
        let tick = row.timestamp_us / 1_000_000;
        let push = |out: &mut NodeReplay, kind| out.events.push(Event { tick, node: id, kind });
        let timed_out = row.response_us > cfg.timeout_us;
        let reply = if timed_out {
            Reply::Timeout
        } else {
            Reply::Digest { digest: row.digest.unwrap_or(cfg.expected), latency_us: row.response_us }
        };
        let checksum_ok = if cfg.checksum && !timed_out { row.digest.map(|d| d == cfg.expected) } else { None };
        push(&mut out, EventKind::Reply { digest: reply.digest().filter(|_| row.digest.is_some()), latency_us: reply.latency_us(), checksum_ok });
        if timed_out {
            out.timeouts += 1;
        } else {
            let class = classify_delay(row.response_us, baseline_us, &cfg.baseline, cfg.tolerance)
                .expect("positive response and validated tolerance");
            push(&mut out, EventKind::Classify { class, latency_us: row.response_us, baseline_us });
        }
        if record.state == NodeState::S2 {
            out.post_retirement += 1;
            continue;
        }
        let eval = evaluate(&mut record, reply, cfg, Probe { now: tick, position: i as u64 }).expect("node is live");
        for c in eval.trail.changes {
            push(&mut out, EventKind::Transition { from: c.from, to: c.to, output: c.output, rule: c.rule });
        }
        if let Action::ShutdownAndReplace(reason) = eval.action {
            push(&mut out, EventKind::Shutdown { reason });
        }
    }
    out.state = record.state;
    out
}

/// Replays `trace` through the detector.
pub fn replay(trace: &LoadedTrace, config: &ReplayConfig, mode: ExecMode) -> Result<ReplayOutcome, ReplayError> {
    config.policy.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
    if config.calibration_k == 0 || config.nominal_interval_us == 0 {
        return Err(ConfigError::Invalid("calibration_k and nominal_interval_us must be positive".into()).into());
    }
    let k = config.calibration_k;

    let mut by_node: BTreeMap<NodeId, Vec<&TraceRecord>> = BTreeMap::new();
    for r in &trace.records {
        by_node.entry(r.node_id).or_default().push(r);
    }
    let excluded: Vec<NodeId> = by_node.iter().filter(|(_, rows)| rows.len() < k).map(|(&id, _)| id).collect();
    let samples: BTreeMap<NodeId, Vec<Micros>> = by_node
        .iter()
        .filter(|(_, rows)| rows.len() >= k)
        .map(|(&id, rows)| (id, rows[..k].iter().map(|r| r.response_us).collect()))
        .collect();
    if samples.is_empty() {
        return Err(ReplayError::NoCalibratedNodes(k));
    }
    let baseline = build_baseline(&samples, config.policy.alpha)?;
    let cfg = SupervisorConfig::from_policy(config.message, baseline.clone(), &config.policy);

    let partitions: Vec<(NodeId, &[&TraceRecord])> =
        samples.keys().map(|id| (*id, &by_node[id][k..])).collect();
    let results = exec::map_slice(mode, &partitions, |(id, rows)| replay_node(*id, rows, &cfg));

    let mut events: Vec<Event> = Vec::new();
    let mut final_states = BTreeMap::new();
    let (mut timeouts, mut post_retirement) = (0, 0);
    for ((id, _), r) in partitions.iter().zip(results) {
        events.extend(r.events);
        final_states.insert(*id, r.state);
        timeouts += r.timeouts;
        post_retirement += r.post_retirement;
    }
    // Stable: within a tick, node order and per-node order are kept.
    events.sort_by_key(|e| e.tick);
    let log: EventLog = events.into_iter().collect();

    let span = match (trace.records.iter().map(|r| r.timestamp_us).min(), trace.records.iter().map(|r| r.timestamp_us).max())
    {
        (Some(lo), Some(hi)) => hi - lo + config.nominal_interval_us,
        _ => 0,
    };
    let expected = (config.horizon_us.unwrap_or(span) / config.nominal_interval_us).max(1);
    let sampling: BTreeMap<NodeId, SamplingRatio> =
        by_node.iter().map(|(&id, rows)| (id, sampling_ratio(expected, rows.len() as u64))).collect();

    let ctx = ReportContext {
        source: "replay".into(),
        initial_nodes: 0,
        horizon: None,
        interval: config.policy.interval,
        expected: trace.has_digests.then_some(cfg.expected),
        max_k: config.max_k,
    };
    let mut report = MetricsReport::from_log(&log, &ctx);
    report.final_states.values_mut().for_each(|v| *v = 0);
    for s in final_states.values() {
        *report.final_states.entry(s.as_str().to_string()).or_default() += 1;
    }
    if !trace.has_digests {
        report.checksum = None;
    }
    report.sampling = Some(summarize_sampling(config.nominal_interval_us, expected, &sampling));
    report.replay = Some(ReplayStats {
        records: trace.records.len() as u64,
        malformed_rows: trace.malformed as u64,
        calibration_records: (samples.len() * k) as u64,
        excluded_nodes: excluded.len() as u64,
        timeouts,
        post_retirement_records: post_retirement,
    });

    Ok(ReplayOutcome { log, report, final_states, baseline, excluded, sampling })
}

fn summarize_sampling(nominal: u64, expected: u64, ratios: &BTreeMap<NodeId, SamplingRatio>) -> SamplingSummary {
    let present: Vec<f64> = ratios.values().filter_map(|r| r.ratio).collect();
    let mut s = SamplingSummary {
        nominal_interval_us: nominal,
        expected_per_node: expected,
        nodes: ratios.len() as u64,
        missing_nodes: ratios.values().filter(|r| r.is_missing()).count() as u64,
        ..SamplingSummary::default()
    };
    if !present.is_empty() {
        s.mean_ratio = present.iter().sum::<f64>() / present.len() as f64;
        s.min_ratio = present.iter().copied().fold(f64::INFINITY, f64::min);
        s.max_ratio = present.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    }
    s
}

/// Parameters of a synthetic trace with configured delay-variation rates.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpec {
    pub nodes: u32,
    /// Monitoring records per node, one per second after calibration.
    pub ticks: u64,
    pub calibration_k: usize,
    pub base_us: f64,
    /// Relative half-width of healthy latencies around `base_us`.
    pub jitter: f64,
    /// Chance that a record reads high (between the upper bound and the supremum).
    pub high_rate: f64,
    /// Chance that a record reads extreme (beyond the supremum).
    pub extreme_rate: f64,
    /// When set, every tick draws an incidence `p ~ N(high_rate, sd)` and
    /// exactly `round(p * nodes)` nodes read high at that tick.
    pub high_incidence_sd: Option<f64>,
    /// Share of nodes that sometimes return wrong digests.
    pub checksum_error_nodes: f64,
    /// Chance that a record of such a node carries a wrong digest, computed
    /// over a challenge with one flipped bit.
    pub checksum_error_rate: f64,
    pub with_digests: bool,
    /// Must match the replay's `alpha` for the class placement to hold.
    pub alpha: f64,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            nodes: 100,
            ticks: 100,
            calibration_k: 10,
            base_us: 100.0,
            jitter: 0.05,
            high_rate: 0.0,
            extreme_rate: 0.0,
            high_incidence_sd: None,
            checksum_error_nodes: 0.0,
            checksum_error_rate: 0.0,
            with_digests: true,
            alpha: 0.5,
            seed: 0,
        }
    }
}

/// Generates a trace whose records fall into the configured classes.
///
/// High records sit halfway between the upper bound and the supremum of the
/// generated calibration data, extreme records a quarter of the upper bound
/// beyond the supremum, and healthy records within the jitter band but never
/// above the upper bound.
pub fn synthetic_trace(spec: &SyntheticSpec, message: &ChallengeMessage) -> Vec<TraceRecord> {
    let expected = message.digest();
    let nodes: Vec<NodeId> = (0..spec.nodes).map(NodeId).collect();
    let healthy = |rng: &mut rand_chacha::ChaCha8Rng| spec.base_us * (1.0 + spec.jitter * rng.random_range(-1.0..=1.0));

    let mut rngs: Vec<_> = nodes.iter().map(|id| stream_rng(spec.seed, DOMAIN_TRACE, u64::from(id.0))).collect();
    let calibration: BTreeMap<NodeId, Vec<Micros>> = nodes
        .iter()
        .zip(&mut rngs)
        .map(|(&id, rng)| (id, (0..spec.calibration_k).map(|_| (healthy(rng).round() as Micros).max(1)).collect()))
        .collect();
    let baseline = build_baseline(&calibration, spec.alpha).expect("non-empty positive calibration");
    let (u, sup) = (baseline.upper_bound(), baseline.supremum());
    let high_us = (u + sup) / 2;
    let extreme_us = sup + u / 4;

    // Per-tick high sets for the incidence mode.
    let high_sets: Option<Vec<Vec<bool>>> = spec.high_incidence_sd.map(|sd| {
        let mut rng = stream_rng(spec.seed, DOMAIN_TRACE, u64::MAX);
        let dist = Normal::new(spec.high_rate, sd).expect("finite sd");
        (0..spec.ticks)
            .map(|_| {
                let p: f64 = dist.sample(&mut rng).clamp(0.0, 1.0);
                let count = (p * f64::from(spec.nodes)).round() as usize;
                let mut mask = vec![false; spec.nodes as usize];
                for i in index::sample(&mut rng, spec.nodes as usize, count) {
                    mask[i] = true;
                }
                mask
            })
            .collect()
    });

    let bad_nodes = (spec.checksum_error_nodes * f64::from(spec.nodes)).round() as u32;
    let digest_for = |id: NodeId, rng: &mut rand_chacha::ChaCha8Rng| {
        if !spec.with_digests {
            return None;
        }
        if id.0 < bad_nodes && rng.random_bool(spec.checksum_error_rate) {
            Some(message.with_bit_flipped(rng.random_range(0..ChallengeMessage::LEN * 8)).digest())
        } else {
            Some(expected)
        }
    };

    let mut rows = Vec::new();
    for (&id, samples) in &calibration {
        for (r, &t) in samples.iter().enumerate() {
            let ts = r as u64;
            rows.push(TraceRecord {
                task_hash: format!("{:08x}{:08x}", id.0, ts),
                node_id: id,
                timestamp_us: ts,
                response_us: t,
                sched_class: 0,
                digest: spec.with_digests.then_some(expected),
            });
        }
    }
    for tick in 1..=spec.ticks {
        for (&id, rng) in nodes.iter().zip(&mut rngs) {
            let response_us = match &high_sets {
                Some(sets) if sets[(tick - 1) as usize][id.0 as usize] => high_us,
                _ => {
                    let x: f64 = rng.random();
                    if x < spec.extreme_rate {
                        extreme_us
                    } else if high_sets.is_none() && x < spec.extreme_rate + spec.high_rate {
                        high_us
                    } else {
                        (healthy(rng).round() as Micros).clamp(1, u)
                    }
                }
            };
            let ts = tick * 1_000_000;
            rows.push(TraceRecord {
                task_hash: format!("{:08x}{:08x}", id.0, ts),
                node_id: id,
                timestamp_us: ts,
                response_us,
                sched_class: 1,
                digest: digest_for(id, rng),
            });
        }
    }
    rows
}
