//! Aggregation of event logs into report figures.
//!
//! Every figure is a pure function of an [`EventLog`] plus a small
//! [`ReportContext`], so a report can be rebuilt from a saved log. Reports
//! render to JSON with sorted keys, or to CSV as flattened `key,value` rows.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use serde::{Serialize, Serializer};
use serde_json::Value;
use thiserror::Error;

use crate::delay::DelayClass;
use crate::digest::{hex_divergence, Digest128};
use crate::events::{EventKind, EventLog, FaultKind};
use crate::state::NodeState;
use crate::supervisor::{required_replicas, ReplicationMode, ShutdownReason, Tick};
use crate::NodeId;

/// Bumped whenever a report field is renamed, removed or changes meaning.
pub const SCHEMA_VERSION: u32 = 1;

/// Fewer ticks with classification data than this leave the observable range undefined.
pub const MIN_RANGE_TICKS: usize = 30;

fn na<T: Serialize, S: Serializer>(value: &Option<T>, s: S) -> Result<S::Ok, S::Error> {
    match value {
        Some(v) => v.serialize(s),
        None => s.serialize_str("n/a"),
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct DetectionStat {
    pub injected: u64,
    pub detected: u64,
    pub rate: f64,
    /// Mean ticks from activation to shutdown over detected nodes.
    pub mean_latency_ticks: f64,
}

/// Class counts over one partition of classify events.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ClassCounts {
    pub classified: u64,
    pub low: u64,
    pub normal: u64,
    pub high: u64,
    pub extreme: u64,
    /// (high + extreme) / classified.
    pub incidence: f64,
    /// high / (high + extreme), the Υ = 0 share.
    pub high_share: f64,
    /// extreme / (high + extreme), the Υ = 1 share.
    pub extreme_share: f64,
}

impl ClassCounts {
    fn add(&mut self, class: DelayClass) {
        self.classified += 1;
        match class {
            DelayClass::Low => self.low += 1,
            DelayClass::Normal => self.normal += 1,
            DelayClass::High => self.high += 1,
            DelayClass::Extreme => self.extreme += 1,
        }
    }

    fn finish(mut self) -> Self {
        let flagged = self.high + self.extreme;
        self.incidence = ratio(flagged, self.classified);
        self.high_share = ratio(self.high, flagged);
        self.extreme_share = ratio(self.extreme, flagged);
        self
    }
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct DelayBreakdown {
    pub overall: ClassCounts,
    /// Same counts without nodes that ever returned a wrong digest.
    pub excluding_checksum_errors: ClassCounts,
    pub checksum_error_nodes: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct DivergenceSummary {
    pub samples: u64,
    pub mean: f64,
    pub min: f64,
    pub max: f64,
}

/// Mean ± 2 sample standard deviations of per-tick Υ = 0 incidence, in percent.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ObservableRange {
    pub ticks: u64,
    pub defined: bool,
    pub mean_pct: f64,
    pub sd_pct: f64,
    pub low_pct: f64,
    pub high_pct: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct Overhead {
    pub adaptive_challenges: u64,
    /// Challenges a fixed every-`j` schedule would have sent over the same node lifetimes.
    pub fixed_challenges: u64,
    /// 1 - adaptive / fixed.
    pub reduction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReplicationRow {
    pub k: u64,
    pub crash: u64,
    pub byzantine_classic: u64,
    pub byzantine_with_checksum: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ChecksumStats {
    pub checked: u64,
    pub errors: u64,
    pub error_rate: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct SamplingSummary {
    pub nominal_interval_us: u64,
    pub expected_per_node: u64,
    pub nodes: u64,
    pub missing_nodes: u64,
    pub mean_ratio: f64,
    pub min_ratio: f64,
    pub max_ratio: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ReplayStats {
    pub records: u64,
    pub malformed_rows: u64,
    pub calibration_records: u64,
    pub excluded_nodes: u64,
    pub timeouts: u64,
    /// Records of nodes already in S2; classified, not evaluated.
    pub post_retirement_records: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsReport {
    pub schema_version: u32,
    pub source: String,
    pub detection: BTreeMap<String, DetectionStat>,
    pub challenges: u64,
    pub overhead: Overhead,
    pub shutdowns: BTreeMap<String, u64>,
    pub s1_entries: u64,
    pub final_states: BTreeMap<String, u64>,
    pub delay: DelayBreakdown,
    pub divergence: DivergenceSummary,
    pub observable_range: ObservableRange,
    pub replication: Vec<ReplicationRow>,
    #[serde(serialize_with = "na")]
    pub checksum: Option<ChecksumStats>,
    #[serde(serialize_with = "na")]
    pub sampling: Option<SamplingSummary>,
    #[serde(serialize_with = "na")]
    pub replay: Option<ReplayStats>,
}

impl Default for MetricsReport {
    fn default() -> Self {
        MetricsReport {
            schema_version: SCHEMA_VERSION,
            source: String::new(),
            detection: BTreeMap::new(),
            challenges: 0,
            overhead: Overhead::default(),
            shutdowns: empty_shutdowns(),
            s1_entries: 0,
            final_states: [NodeState::S0, NodeState::S1, NodeState::S2]
                .into_iter()
                .map(|s| (s.as_str().to_string(), 0))
                .collect(),
            delay: DelayBreakdown::default(),
            divergence: DivergenceSummary::default(),
            observable_range: ObservableRange::default(),
            replication: Vec::new(),
            checksum: None,
            sampling: None,
            replay: None,
        }
    }
}

fn empty_shutdowns() -> BTreeMap<String, u64> {
    [ShutdownReason::ChecksumError, ShutdownReason::ExtremeDelay, ShutdownReason::PersistentHigh, ShutdownReason::Timeout]
        .into_iter()
        .map(|r| (r.as_str().to_string(), 0))
        .collect()
}

/// Facts about the run that the log alone does not carry.
#[derive(Debug, Clone, PartialEq)]
pub struct ReportContext {
    pub source: String,
    /// Nodes `0..initial_nodes` were challenged at calibration.
    pub initial_nodes: u32,
    /// Needed for the fixed-schedule baseline; `None` skips it.
    pub horizon: Option<Tick>,
    pub interval: Tick,
    /// Needed for the divergence summary.
    pub expected: Option<Digest128>,
    pub max_k: u64,
}

/// Detection rate per injected mode. Healthy injections are not faults and
/// are left out.
pub fn detection_summary(log: &EventLog) -> BTreeMap<String, DetectionStat> {
    let mut shutdowns: BTreeMap<NodeId, Vec<Tick>> = BTreeMap::new();
    for e in log.of_kind("shutdown") {
        shutdowns.entry(e.node).or_default().push(e.tick);
    }
    let mut acc: BTreeMap<FaultKind, (u64, u64, u64)> = BTreeMap::new();
    for e in log.events() {
        let EventKind::Inject { mode } = e.kind else { continue };
        if mode == FaultKind::Healthy {
            continue;
        }
        let entry = acc.entry(mode).or_default();
        entry.0 += 1;
        let hit = shutdowns.get(&e.node).and_then(|ts| ts.iter().find(|&&t| t >= e.tick));
        if let Some(&t) = hit {
            entry.1 += 1;
            entry.2 += t - e.tick;
        }
    }
    acc.into_iter()
        .map(|(mode, (injected, detected, latency))| {
            let stat = DetectionStat {
                injected,
                detected,
                rate: ratio(detected, injected),
                mean_latency_ticks: ratio(latency, detected),
            };
            (mode.as_str().to_string(), stat)
        })
        .collect()
}

/// Nodes that returned at least one verified wrong digest.
pub fn checksum_error_nodes(log: &EventLog) -> BTreeSet<NodeId> {
    log.events()
        .iter()
        .filter(|e| matches!(e.kind, EventKind::Reply { checksum_ok: Some(false), .. }))
        .map(|e| e.node)
        .collect()
}

pub fn delay_variation_breakdown(log: &EventLog) -> DelayBreakdown {
    let bad = checksum_error_nodes(log);
    let mut overall = ClassCounts::default();
    let mut excluding = ClassCounts::default();
    for e in log.events() {
        if let EventKind::Classify { class, .. } = e.kind {
            overall.add(class);
            if !bad.contains(&e.node) {
                excluding.add(class);
            }
        }
    }
    DelayBreakdown {
        overall: overall.finish(),
        excluding_checksum_errors: excluding.finish(),
        checksum_error_nodes: bad.len() as u64,
    }
}

/// Per-tick Υ = 0 incidence: high readings over high, low and normal
/// readings, leaving out extreme readings and nodes with checksum errors.
/// Ticks without eligible readings are skipped.
pub fn per_tick_high_incidence(log: &EventLog) -> Vec<f64> {
    let bad = checksum_error_nodes(log);
    let mut ticks: BTreeMap<Tick, (u64, u64)> = BTreeMap::new();
    for e in log.events() {
        let EventKind::Classify { class, .. } = e.kind else { continue };
        if class == DelayClass::Extreme || bad.contains(&e.node) {
            continue;
        }
        let t = ticks.entry(e.tick).or_default();
        t.1 += 1;
        if class == DelayClass::High {
            t.0 += 1;
        }
    }
    ticks.values().map(|&(high, total)| high as f64 / total as f64).collect()
}

pub fn observable_range(log: &EventLog) -> ObservableRange {
    range_from_incidence(&per_tick_high_incidence(log))
}

/// Summarizes per-tick incidence fractions as mean ± 2σ in percent, clamped
/// to [0, 100].
pub fn range_from_incidence(incidence: &[f64]) -> ObservableRange {
    let n = incidence.len();
    if n < MIN_RANGE_TICKS {
        return ObservableRange { ticks: n as u64, ..ObservableRange::default() };
    }
    let pct: Vec<f64> = incidence.iter().map(|x| x * 100.0).collect();
    let mean = pct.iter().sum::<f64>() / n as f64;
    let var = pct.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    let sd = var.sqrt();
    ObservableRange {
        ticks: n as u64,
        defined: true,
        mean_pct: mean,
        sd_pct: sd,
        low_pct: (mean - 2.0 * sd).clamp(0.0, 100.0),
        high_pct: (mean + 2.0 * sd).clamp(0.0, 100.0),
    }
}

pub fn divergence_summary(log: &EventLog, expected: &Digest128) -> DivergenceSummary {
    let values: Vec<f64> = log
        .events()
        .iter()
        .filter_map(|e| match e.kind {
            EventKind::Reply { digest: Some(d), checksum_ok: Some(false), .. } => Some(hex_divergence(&d, expected)),
            _ => None,
        })
        .collect();
    if values.is_empty() {
        return DivergenceSummary::default();
    }
    DivergenceSummary {
        samples: values.len() as u64,
        mean: values.iter().sum::<f64>() / values.len() as f64,
        min: values.iter().copied().fold(f64::INFINITY, f64::min),
        max: values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
    }
}

/// Challenges sent versus a fixed every-`j` schedule over the same node
/// lifetimes. Original nodes live from tick 0, replacements from their
/// replace tick, and every node until its shutdown or the horizon.
pub fn challenge_overhead(log: &EventLog, initial_nodes: u32, horizon: Tick, interval: Tick) -> Overhead {
    let rejected: BTreeSet<NodeId> = log.of_kind("reject").map(|e| e.node).collect();
    let mut start: BTreeMap<NodeId, Tick> =
        (0..initial_nodes).map(NodeId).filter(|id| !rejected.contains(id)).map(|id| (id, 0)).collect();
    let mut end: BTreeMap<NodeId, Tick> = BTreeMap::new();
    for e in log.events() {
        match e.kind {
            EventKind::Shutdown { .. } => {
                end.entry(e.node).or_insert(e.tick);
            }
            EventKind::Replace { new_node, .. } => {
                start.insert(new_node, e.tick);
            }
            _ => {}
        }
    }
    let fixed = start
        .iter()
        .map(|(id, &s)| {
            let e = end.get(id).copied().unwrap_or(horizon).max(s);
            (e - s) / interval
        })
        .sum::<u64>();
    let adaptive = log.of_kind("challenge").count() as u64;
    Overhead {
        adaptive_challenges: adaptive,
        fixed_challenges: fixed,
        reduction: if fixed == 0 { 0.0 } else { 1.0 - adaptive as f64 / fixed as f64 },
    }
}

pub fn replication_table(max_k: u64) -> Vec<ReplicationRow> {
    (0..=max_k)
        .map(|k| ReplicationRow {
            k,
            crash: required_replicas(k, ReplicationMode::Crash),
            byzantine_classic: required_replicas(k, ReplicationMode::ByzantineClassic),
            byzantine_with_checksum: required_replicas(k, ReplicationMode::ByzantineWithChecksum),
        })
        .collect()
}

/// Final lifecycle state of every node that appears in the log: retired
/// nodes are S2, everybody else ends in the state of their last transition.
pub fn final_states(log: &EventLog, initial_nodes: u32) -> BTreeMap<NodeId, NodeState> {
    let rejected: BTreeSet<NodeId> = log.of_kind("reject").map(|e| e.node).collect();
    let mut states: BTreeMap<NodeId, NodeState> =
        (0..initial_nodes).map(NodeId).filter(|id| !rejected.contains(id)).map(|id| (id, NodeState::S0)).collect();
    for e in log.events() {
        match e.kind {
            EventKind::Transition { to, .. } => {
                states.insert(e.node, to);
            }
            EventKind::Replace { new_node, .. } => {
                states.insert(new_node, NodeState::S0);
            }
            _ => {}
        }
    }
    states
}

impl MetricsReport {
    pub fn from_log(log: &EventLog, ctx: &ReportContext) -> Self {
        let mut shutdowns = empty_shutdowns();
        for e in log.events() {
            if let EventKind::Shutdown { reason } = e.kind {
                *shutdowns.entry(reason.as_str().to_string()).or_default() += 1;
            }
        }
        let s1_entries = log
            .events()
            .iter()
            .filter(|e| matches!(e.kind, EventKind::Transition { to: NodeState::S1, .. }))
            .count() as u64;

        let (mut checked, mut errors) = (0, 0);
        for e in log.events() {
            if let EventKind::Reply { checksum_ok: Some(ok), .. } = e.kind {
                checked += 1;
                errors += u64::from(!ok);
            }
        }
        let checksum = (checked > 0).then(|| ChecksumStats { checked, errors, error_rate: ratio(errors, checked) });

        let mut report = MetricsReport {
            source: ctx.source.clone(),
            detection: detection_summary(log),
            challenges: log.of_kind("challenge").count() as u64,
            shutdowns,
            s1_entries,
            delay: delay_variation_breakdown(log),
            observable_range: observable_range(log),
            replication: replication_table(ctx.max_k),
            checksum,
            ..MetricsReport::default()
        };
        for (_, state) in final_states(log, ctx.initial_nodes) {
            *report.final_states.entry(state.as_str().to_string()).or_default() += 1;
        }
        if let Some(h) = ctx.horizon {
            report.overhead = challenge_overhead(log, ctx.initial_nodes, h, ctx.interval);
        }
        if let Some(expected) = &ctx.expected {
            report.divergence = divergence_summary(log, expected);
        }
        report
    }

    pub fn to_json_value(&self) -> Value {
        // Round-tripping through Value sorts object keys.
        serde_json::to_value(self).expect("report fields are plain data")
    }

    pub fn render(&self, format: ReportFormat) -> String {
        match format {
            ReportFormat::Json => {
                let mut s = serde_json::to_string_pretty(&self.to_json_value()).expect("value renders");
                s.push('\n');
                s
            }
            ReportFormat::Csv => render_csv(&self.to_json_value()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ReportFormat {
    #[default]
    Json,
    Csv,
}

impl ReportFormat {
    pub fn extension(self) -> &'static str {
        match self {
            ReportFormat::Json => "json",
            ReportFormat::Csv => "csv",
        }
    }
}

impl FromStr for ReportFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "json" => Ok(ReportFormat::Json),
            "csv" => Ok(ReportFormat::Csv),
            other => Err(format!("unknown report format `{other}` (expected json or csv)")),
        }
    }
}

impl fmt::Display for ReportFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.extension())
    }
}

/// Flattens a JSON value into `(dotted.key, scalar)` rows. Array elements
/// use their index as the key segment.
pub fn flatten(value: &Value) -> Vec<(String, String)> {
    fn walk(prefix: &str, v: &Value, out: &mut Vec<(String, String)>) {
        let join = |k: &str| if prefix.is_empty() { k.to_string() } else { format!("{prefix}.{k}") };
        match v {
            Value::Object(map) => {
                let mut keys: Vec<&String> = map.keys().collect();
                keys.sort();
                for k in keys {
                    walk(&join(k), &map[k], out);
                }
            }
            Value::Array(items) => {
                for (i, item) in items.iter().enumerate() {
                    walk(&join(&i.to_string()), item, out);
                }
            }
            Value::Null => out.push((prefix.to_string(), String::new())),
            Value::String(s) => out.push((prefix.to_string(), s.clone())),
            other => out.push((prefix.to_string(), other.to_string())),
        }
    }
    let mut out = Vec::new();
    walk("", value, &mut out);
    out
}

fn render_csv(value: &Value) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["key", "value"]).expect("in-memory write");
    for (k, v) in flatten(value) {
        w.write_record([k, v]).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("csv emits UTF-8")
}

#[derive(Debug, Error)]
#[error("cannot write report to {path}: {source}")]
pub struct EmitError {
    pub path: String,
    pub source: std::io::Error,
}

/// Writes the rendered report to `path`.
pub fn emit(report: &MetricsReport, format: ReportFormat, path: &Path) -> Result<(), EmitError> {
    let wrap = |source| EmitError { path: path.display().to_string(), source };
    let mut f = std::fs::File::create(path).map_err(wrap)?;
    f.write_all(report.render(format).as_bytes()).map_err(wrap)?;
    f.sync_all().map_err(wrap)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::supervisor::TransitionRule;

    fn classify(log: &mut EventLog, tick: Tick, node: u32, class: DelayClass) {
        log.push(tick, NodeId(node), EventKind::Classify { class, latency_us: 100, baseline_us: 100 });
    }

    #[test]
    fn range_examples() {
        assert!(!range_from_incidence(&[0.1; 29]).defined);
        let r = range_from_incidence(&[0.1; 40]);
        assert!(r.defined);
        assert!((r.low_pct - 10.0).abs() < 1e-9 && (r.high_pct - 10.0).abs() < 1e-9, "{r:?}");
        let r = range_from_incidence(&[0.0; 40]);
        assert_eq!((r.low_pct, r.high_pct), (0.0, 0.0));
        // Wide spread clamps at zero.
        let wide: Vec<f64> = (0..40).map(|i| if i % 2 == 0 { 0.0 } else { 0.5 }).collect();
        assert_eq!(range_from_incidence(&wide).low_pct, 0.0);
    }

    #[test]
    fn breakdown_partitions_and_exclusion() {
        let mut log = EventLog::new();
        for (node, class) in [(0, DelayClass::High), (0, DelayClass::Extreme), (1, DelayClass::Normal), (1, DelayClass::High)]
        {
            classify(&mut log, 1, node, class);
        }
        log.push(2, NodeId(0), EventKind::Reply { digest: None, latency_us: Some(5), checksum_ok: Some(false) });
        let b = delay_variation_breakdown(&log);
        assert_eq!((b.overall.classified, b.overall.high, b.overall.extreme), (4, 2, 1));
        assert!((b.overall.incidence - 0.75).abs() < 1e-12);
        assert!((b.overall.high_share + b.overall.extreme_share - 1.0).abs() < 1e-12);
        assert_eq!(b.excluding_checksum_errors.classified, 2);
        assert_eq!(b.excluding_checksum_errors.high_share, 1.0);
        assert_eq!(b.checksum_error_nodes, 1);
    }

    #[test]
    fn detection_counts_first_shutdown_after_activation() {
        let mut log = EventLog::new();
        log.push(5, NodeId(1), EventKind::Inject { mode: FaultKind::FailStop });
        log.push(5, NodeId(2), EventKind::Inject { mode: FaultKind::FailStop });
        log.push(5, NodeId(3), EventKind::Inject { mode: FaultKind::Healthy });
        log.push(12, NodeId(1), EventKind::Shutdown { reason: ShutdownReason::Timeout });
        log.push(12, NodeId(1), EventKind::Replace { new_node: NodeId(9), resume_tick: None, position: 0 });
        let d = detection_summary(&log);
        assert_eq!(d.len(), 1);
        let s = &d["fail-stop"];
        assert_eq!((s.injected, s.detected, s.rate, s.mean_latency_ticks), (2, 1, 0.5, 7.0));
        assert!(detection_summary(&EventLog::new()).is_empty());
    }

    #[test]
    fn overhead_uses_node_lifetimes() {
        let mut log = EventLog::new();
        log.push(0, NodeId(2), EventKind::Reject);
        log.push(10, NodeId(0), EventKind::Challenge { intra: false });
        log.push(30, NodeId(0), EventKind::Shutdown { reason: ShutdownReason::Timeout });
        log.push(30, NodeId(0), EventKind::Replace { new_node: NodeId(3), resume_tick: None, position: 0 });
        // node 0: 30/10 = 3, node 1: 100/10 = 10, node 3: 70/10 = 7.
        let o = challenge_overhead(&log, 3, 100, 10);
        assert_eq!((o.adaptive_challenges, o.fixed_challenges), (1, 20));
        let f = final_states(&log, 3);
        assert_eq!(f.len(), 3);
        assert_eq!(f[&NodeId(3)], NodeState::S0);
    }

    #[test]
    fn renderings_agree_and_are_stable() {
        let mut log = EventLog::new();
        classify(&mut log, 1, 0, DelayClass::High);
        log.push(1, NodeId(0), EventKind::Transition { from: NodeState::S0, to: NodeState::S1, output: 1, rule: TransitionRule::Combined });
        let ctx = ReportContext {
            source: "test".into(),
            initial_nodes: 2,
            horizon: Some(100),
            interval: 10,
            expected: None,
            max_k: 2,
        };
        let r = MetricsReport::from_log(&log, &ctx);
        assert_eq!(r.s1_entries, 1);
        assert_eq!(r.final_states["S1"], 1);
        let json = r.render(ReportFormat::Json);
        assert_eq!(json, MetricsReport::from_log(&log, &ctx).render(ReportFormat::Json));
        let value: Value = serde_json::from_str(&json).unwrap();
        assert_eq!(value["checksum"], "n/a");
        let csv = r.render(ReportFormat::Csv);
        let mut rows = csv::Reader::from_reader(csv.as_bytes());
        let parsed: Vec<(String, String)> = rows.deserialize().map(|r| r.unwrap()).collect();
        assert_eq!(parsed, flatten(&value));
        assert!(parsed.contains(&("replication.1.byzantine_classic".into(), "4".into())));
    }

    #[test]
    fn empty_report_is_zeroed() {
        let r = MetricsReport::default();
        let v = r.to_json_value();
        assert_eq!(v["schema_version"], SCHEMA_VERSION);
        assert_eq!(v["delay"]["overall"]["classified"], 0);
        assert_eq!(v["observable_range"]["defined"], false);
        assert!(!r.render(ReportFormat::Csv).is_empty());
    }
}
