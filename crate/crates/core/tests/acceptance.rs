//! Acceptance suite. Runs every criterion at its stated tolerance and prints
//! one PASS/FAIL line each. Exits non-zero if any criterion fails.

use std::collections::{BTreeMap, BTreeSet};
use std::time::{Duration, Instant};

use bsentinel::config::{Injection, ScenarioConfig};
use bsentinel::delay::DelayClass;
use bsentinel::digest::{avalanche_study, md5_digest};
use bsentinel::events::{EventKind, EventLog, FaultKind};
use bsentinel::exec::ExecMode;
use bsentinel::metrics::{detection_summary, range_from_incidence, per_tick_high_incidence};
use bsentinel::simnet::{run_scenario_with, ScenarioRun};
use bsentinel::state::{step_checksum, step_combined, step_delay, CombinedInput, LifecycleError, NodeState};
use bsentinel::supervisor::{required_replicas, ReplicationMode, ShutdownReason, Tick};
use bsentinel::trace::{read_trace, replay, synthetic_trace, write_trace, LoadedTrace, ReplayConfig, SyntheticSpec};
use bsentinel::NodeId;

type Outcome = Result<String, String>;

fn check(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn within_time(start: Instant, limit: Duration) -> Result<(), String> {
    let took = start.elapsed();
    check(took < limit, format!("took {:.2?}, limit {:.0?}", took, limit))
}

/// The large pool used by criteria 3, 5 and 6: 500 nodes, 10,000 ticks,
/// latencies tightly around 100 us.
fn large_pool(seed: u64) -> ScenarioConfig {
    let mut c = ScenarioConfig::default();
    c.scenario.nodes = 500;
    c.scenario.horizon = 10_000;
    c.scenario.seed = seed;
    c.latency.sigma = 0.02;
    c.supervisor.interval = 10;
    c.supervisor.m_cap = 16;
    c.supervisor.tolerance = 0.15;
    c
}

fn run(c: ScenarioConfig) -> Result<ScenarioRun, String> {
    run_scenario_with(c, ExecMode::Parallel).map_err(|e| e.to_string())
}

fn injections(log: &EventLog, mode: FaultKind) -> Vec<(NodeId, Tick)> {
    log.events()
        .iter()
        .filter(|e| e.kind == EventKind::Inject { mode })
        .map(|e| (e.node, e.tick))
        .collect()
}

fn c1_digest_conformance() -> Outcome {
    let start = Instant::now();
    let vectors = [
        ("", "d41d8cd98f00b204e9800998ecf8427e"),
        ("a", "0cc175b9c0f1b6a831c399e269772661"),
        ("abc", "900150983cd24fb0d6963f7d28e17f72"),
        ("message digest", "f96b697d7cb7938d525a2f31aaf161d0"),
        ("abcdefghijklmnopqrstuvwxyz", "c3fcd3d76192e4007dfb496cca67e13b"),
        ("ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789", "d174ab98d277d9f5a5611c2c9f419d9f"),
        (
            "12345678901234567890123456789012345678901234567890123456789012345678901234567890",
            "57edf4a22be3c955ac49da2e2107b67a",
        ),
    ];
    for (input, want) in vectors {
        let got = md5_digest(input.as_bytes()).to_hex();
        check(got == want, format!("md5({input:?}) = {got}, want {want}"))?;
    }
    within_time(start, Duration::from_secs(1))?;
    Ok(format!("{} published vectors match", vectors.len()))
}

fn c2_avalanche() -> Outcome {
    let start = Instant::now();
    let s = avalanche_study(10_000, 2024, None, ExecMode::Parallel).map_err(|e| e.to_string())?;
    check((0.90..=0.97).contains(&s.mean), format!("mean divergence {:.4} outside [0.90, 0.97]", s.mean))?;
    within_time(start, Duration::from_secs(5))?;
    Ok(format!("mean {:.4} (expected 15/16 = 0.9375), min {:.3}, max {:.3}", s.mean, s.min, s.max))
}

/// Each injected node must be shut down at its first reply after activation.
fn detected_at_first_challenge(log: &EventLog, node: NodeId, at: Tick, reason: ShutdownReason) -> Result<(), String> {
    let first_reply = log
        .events()
        .iter()
        .find(|e| e.node == node && e.tick >= at && e.kind.name() == "reply")
        .ok_or(format!("node {node} never challenged after tick {at}"))?;
    let shutdown = log
        .events()
        .iter()
        .find(|e| e.node == node && e.kind.name() == "shutdown")
        .ok_or(format!("node {node} never shut down"))?;
    check(shutdown.tick == first_reply.tick, format!("node {node}: shutdown at {} but first challenge at {}", shutdown.tick, first_reply.tick))?;
    check(
        shutdown.kind == EventKind::Shutdown { reason },
        format!("node {node}: shutdown {:?}, want {}", shutdown.kind, reason.as_str()),
    )
}

fn c3_checksum_contrast() -> Outcome {
    let start = Instant::now();
    let mut c = large_pool(3);
    c.injections.push(Injection { mode: FaultKind::ByzantineCorrupt, fraction: 0.05, at: 100, degradation: 1.5 });
    let with = run(c.clone())?;
    c.supervisor.checksum = false;
    let without = run(c)?;

    let injected = injections(&with.log, FaultKind::ByzantineCorrupt);
    check(injected.len() == 25, format!("{} nodes injected, want 25", injected.len()))?;
    check(injected == injections(&without.log, FaultKind::ByzantineCorrupt), "the two runs injected different nodes")?;
    for &(node, at) in &injected {
        detected_at_first_challenge(&with.log, node, at, ShutdownReason::ChecksumError)?;
    }
    let rate_on = detection_summary(&with.log)["byzantine-corrupt"].rate;
    let rate_off = detection_summary(&without.log)["byzantine-corrupt"].rate;
    check(rate_on == 1.0, format!("detection with challenges {rate_on}"))?;
    check(rate_off == 0.0, format!("detection without challenges {rate_off}"))?;
    let shut: BTreeSet<NodeId> = without.log.of_kind("shutdown").map(|e| e.node).collect();
    check(injected.iter().all(|(n, _)| !shut.contains(n)), "crash-only run shut down a corrupt node")?;
    within_time(start, Duration::from_secs(60))?;
    Ok(format!("25/25 detected at first challenge with checksum, 0/25 without ({:.1?})", start.elapsed()))
}

fn c4_concealed_and_persistent() -> Outcome {
    let mut c = large_pool(4);
    c.scenario.nodes = 200;
    c.scenario.horizon = 3000;
    c.injections.push(Injection { mode: FaultKind::ConcealedMalicious, fraction: 0.1, at: 50, degradation: 1.5 });
    c.injections.push(Injection { mode: FaultKind::Degraded, fraction: 0.1, at: 50, degradation: 1.3 });
    let r = run(c)?;
    let j = r.supervisor.interval;

    let concealed = injections(&r.log, FaultKind::ConcealedMalicious);
    check(!concealed.is_empty(), "no concealed-malicious nodes injected")?;
    for &(node, at) in &concealed {
        detected_at_first_challenge(&r.log, node, at, ShutdownReason::ExtremeDelay)?;
    }

    let degraded = injections(&r.log, FaultKind::Degraded);
    check(!degraded.is_empty(), "no degraded nodes injected")?;
    for &(node, at) in &degraded {
        let mine: Vec<_> = r.log.events().iter().filter(|e| e.node == node && e.tick >= at).collect();
        let classes: Vec<(Tick, DelayClass)> = mine
            .iter()
            .filter_map(|e| match e.kind {
                EventKind::Classify { class, .. } => Some((e.tick, class)),
                _ => None,
            })
            .collect();
        let shutdown = mine
            .iter()
            .find(|e| e.kind.name() == "shutdown")
            .ok_or(format!("degraded node {node} never shut down"))?;
        check(
            shutdown.kind == EventKind::Shutdown { reason: ShutdownReason::PersistentHigh },
            format!("degraded node {node}: {:?}", shutdown.kind),
        )?;
        check(classes.len() == 3, format!("degraded node {node}: {} readings before shutdown, want 3", classes.len()))?;
        check(classes.iter().all(|&(_, c)| c == DelayClass::High), format!("degraded node {node}: readings {classes:?}"))?;
        check(
            classes[1].0 == classes[0].0 + j && classes[2].0 == classes[1].0 + j,
            format!("degraded node {node}: readings not on successive S1 intervals: {classes:?}"),
        )?;
        check(shutdown.tick == classes[2].0, format!("degraded node {node}: shutdown not at third reading"))?;
    }

    let flagged: BTreeSet<NodeId> = concealed.iter().chain(&degraded).map(|&(n, _)| n).collect();
    let checksum_shutdowns = r
        .log
        .events()
        .iter()
        .filter(|e| flagged.contains(&e.node) && e.kind == EventKind::Shutdown { reason: ShutdownReason::ChecksumError })
        .count();
    check(checksum_shutdowns == 0, format!("{checksum_shutdowns} checksum-error shutdowns among them"))?;
    Ok(format!(
        "{} concealed shut down on extreme delay, {} degraded after 3 successive high readings, 0 checksum errors",
        concealed.len(),
        degraded.len()
    ))
}

fn c5_false_positives(healthy: &ScenarioRun, took: Duration) -> Outcome {
    let shutdowns = healthy.log.of_kind("shutdown").count();
    check(shutdowns == 0, format!("{shutdowns} shutdowns"))?;
    check(healthy.report.s1_entries == 0, format!("{} S1 entries", healthy.report.s1_entries))?;
    check(healthy.final_states.values().all(|&s| s == NodeState::S0), "some node did not end in S0")?;
    Ok(format!("500 nodes x 10,000 ticks: 0 shutdowns, 0 S1 entries ({took:.1?})"))
}

/// Brute-force schedule: evaluations at j, then gaps of 2j, 3j, ... capped at m_cap * j.
fn schedule_oracle(horizon: Tick, j: Tick, cap: u64) -> u64 {
    let (mut t, mut m, mut count) = (j, 1u64, 0);
    while t <= horizon {
        count += 1;
        m = (m + 1).min(cap);
        t += m * j;
    }
    count
}

fn c6_overhead(healthy: &ScenarioRun) -> Outcome {
    let (h, j, cap) = (10_000, 10, 16);
    let want = schedule_oracle(h, j, cap);
    let mut per_node: BTreeMap<NodeId, u64> = BTreeMap::new();
    for e in healthy.log.of_kind("challenge") {
        *per_node.entry(e.node).or_default() += 1;
    }
    check(per_node.len() == 500, format!("{} nodes challenged", per_node.len()))?;
    for (node, &n) in &per_node {
        check(n == want, format!("node {node}: {n} challenges, oracle {want}"))?;
    }
    check(want < h / j, format!("{want} not below fixed {}", h / j))?;

    // Uncapped triangular count: largest m with j*m(m+1)/2 <= H.
    for horizon in (3 * j + 1)..=400 {
        let tri = (1..).take_while(|m| j * m * (m + 1) / 2 <= horizon).last().unwrap_or(0);
        let oracle = schedule_oracle(horizon, j, u64::MAX);
        check(tri == oracle, format!("H={horizon}: triangular {tri} vs oracle {oracle}"))?;
        check(oracle < horizon / j, format!("H={horizon}: {oracle} not below {}", horizon / j))?;
    }

    let o = &healthy.report.overhead;
    check(o.fixed_challenges == 500 * (h / j), format!("fixed baseline {}", o.fixed_challenges))?;
    check(o.reduction >= 0.5, format!("reduction {:.3}", o.reduction))?;
    Ok(format!(
        "{want} challenges per node (oracle {want}, fixed {}); aggregate {} vs {}, reduction {:.1}%",
        h / j,
        o.adaptive_challenges,
        o.fixed_challenges,
        100.0 * o.reduction
    ))
}

fn c7_tables() -> Outcome {
    use NodeState::*;
    // Rows S0, S1; columns in input order.
    let delay = [[S0, S0, S1, S2], [S0, S0, S1, S2]];
    let checksum = [[S0, S2], [S0, S2]];
    let combined = [[S1, S2, S2, S2], [S1, S2, S2, S2]];
    let mut cells = 0;
    for (row, state) in [S0, S1].into_iter().enumerate() {
        for (col, class) in DelayClass::ALL.into_iter().enumerate() {
            let r = step_delay(state, class).map_err(|e| e.to_string())?;
            check(r.next == delay[row][col] && r.output == 0, format!("delay table {state}/{class}: {r:?}"))?;
            cells += 1;
        }
        for (col, err) in [false, true].into_iter().enumerate() {
            let r = step_checksum(state, err).map_err(|e| e.to_string())?;
            check(r.next == checksum[row][col] && r.output == 1, format!("checksum table {state}/{err}: {r:?}"))?;
            cells += 1;
        }
        for (col, (d, c)) in [(0, 0), (0, 1), (1, 0), (1, 1)].into_iter().enumerate() {
            let r = step_combined(state, CombinedInput::Bits { delay: d, checksum: c }).map_err(|e| e.to_string())?;
            check(r.next == combined[row][col] && r.output == 1, format!("combined table {state}/{d}{c}: {r:?}"))?;
            cells += 1;
        }
    }
    check(cells == 20, format!("{cells} cells"))?;
    let rec = step_combined(S1, CombinedInput::Quiescent).map_err(|e| e.to_string())?;
    check(rec.next == S0, "S1 does not recover to S0")?;
    check(step_delay(S2, DelayClass::Low) == Err(LifecycleError), "S2 is not absorbing")?;
    Ok("20 cells and the S1 -> S0 recovery rule".into())
}

fn c8_replicas() -> Outcome {
    for k in 0..=10u64 {
        let got = [ReplicationMode::Crash, ReplicationMode::ByzantineClassic, ReplicationMode::ByzantineWithChecksum]
            .map(|m| required_replicas(k, m));
        check(got == [k + 1, 3 * k + 1, k + 1], format!("k={k}: {got:?}"))?;
    }
    Ok("k+1 / 3k+1 / k+1 for k in 0..=10".into())
}

fn c9_breakdown_and_range() -> Outcome {
    let message = Default::default();
    let spec = SyntheticSpec {
        nodes: 100,
        ticks: 400,
        high_rate: 0.17 * 0.62,
        extreme_rate: 0.17 * 0.38,
        seed: 9,
        ..SyntheticSpec::default()
    };
    let out = replay(&LoadedTrace::from_records(synthetic_trace(&spec, &message)), &ReplayConfig::default(), ExecMode::Parallel)
        .map_err(|e| e.to_string())?;
    let b = &out.report.delay.overall;
    check(b.classified >= 10_000, format!("only {} classifications", b.classified))?;
    check((b.incidence - 0.17).abs() <= 0.02, format!("incidence {:.4}", b.incidence))?;
    check((b.high_share - 0.62).abs() <= 0.02, format!("high share {:.4}", b.high_share))?;
    check((b.extreme_share - 0.38).abs() <= 0.02, format!("extreme share {:.4}", b.extreme_share))?;
    for part in [&out.report.delay.overall, &out.report.delay.excluding_checksum_errors] {
        check(part.low + part.normal + part.high + part.extreme == part.classified, "class counts do not partition")?;
        check((part.high_share + part.extreme_share - 1.0).abs() <= 1e-6, "shares do not sum to 1")?;
    }

    let spec = SyntheticSpec {
        nodes: 200,
        ticks: 400,
        high_rate: 0.094,
        high_incidence_sd: Some(0.023),
        seed: 10,
        ..SyntheticSpec::default()
    };
    let out = replay(&LoadedTrace::from_records(synthetic_trace(&spec, &message)), &ReplayConfig::default(), ExecMode::Parallel)
        .map_err(|e| e.to_string())?;
    let r = &out.report.observable_range;
    check(r.defined, "range undefined")?;
    check((r.low_pct - 4.8).abs() <= 0.5, format!("low {:.2}%", r.low_pct))?;
    check((r.high_pct - 14.0).abs() <= 0.5, format!("high {:.2}%", r.high_pct))?;
    let recomputed = range_from_incidence(&per_tick_high_incidence(&out.log));
    check(&recomputed == r, "range differs when recomputed from the log")?;
    Ok(format!(
        "incidence {:.4}, split {:.4}/{:.4} over {} readings; range ({:.2}%, {:.2}%)",
        b.incidence, b.high_share, b.extreme_share, b.classified, r.low_pct, r.high_pct
    ))
}

fn mixed_scenario(seed: u64) -> ScenarioConfig {
    let mut c = large_pool(seed);
    c.scenario.nodes = 120;
    c.scenario.horizon = 2000;
    c.latency.node_spread = 0.05;
    c.link.corruption_p = 0.001;
    for (mode, at) in [
        (FaultKind::ByzantineCorrupt, 0),
        (FaultKind::ConcealedMalicious, 300),
        (FaultKind::Degraded, 500),
        (FaultKind::FailStop, 700),
    ] {
        c.injections.push(Injection { mode, fraction: 0.05, at, degradation: 1.3 });
    }
    c
}

fn c10_determinism() -> Outcome {
    let c = mixed_scenario(10);
    let a = run_scenario_with(c.clone(), ExecMode::Parallel).map_err(|e| e.to_string())?;
    let b = run_scenario_with(c.clone(), ExecMode::Parallel).map_err(|e| e.to_string())?;
    let s = run_scenario_with(c, ExecMode::Sequential).map_err(|e| e.to_string())?;
    let bytes = a.log.to_ndjson();
    check(bytes == b.log.to_ndjson(), "event logs differ between runs")?;
    check(bytes == s.log.to_ndjson(), "event logs differ between sequential and parallel")?;
    let json = a.report.render(Default::default());
    check(json == b.report.render(Default::default()), "reports differ between runs")?;
    check(json == s.report.render(Default::default()), "reports differ between modes")?;
    Ok(format!("{} events, {} byte log, identical across runs and modes", a.log.len(), bytes.len()))
}

fn c11_round_trip() -> Outcome {
    let c = mixed_scenario(11);
    let live = run(c.clone())?;
    let mut csv = Vec::new();
    write_trace(&mut csv, &live.export_trace()).map_err(|e| e.to_string())?;
    let trace = read_trace(csv.as_slice()).map_err(|e| e.to_string())?;
    let cfg = ReplayConfig::from_scenario(&c).map_err(|e| e.to_string())?;
    let replayed = replay(&trace, &cfg, ExecMode::Parallel).map_err(|e| e.to_string())?;
    check(trace.malformed == 0, format!("{} malformed rows", trace.malformed))?;
    check(replayed.excluded.is_empty(), format!("excluded nodes {:?}", replayed.excluded))?;
    for (node, live_state) in &live.final_states {
        let got = replayed.final_states.get(node);
        check(got == Some(live_state), format!("node {node}: live {live_state}, replay {got:?}"))?;
    }
    check(live.final_states.len() == replayed.final_states.len(), "node sets differ")?;
    let retired = live.final_states.values().filter(|&&s| s == NodeState::S2).count();
    check(retired > 0, "scenario retired no nodes, round trip is vacuous")?;
    Ok(format!("{} nodes ({retired} retired) match across {} trace rows", live.final_states.len(), trace.records.len()))
}

fn main() {
    let mut results: Vec<(&str, Outcome)> = Vec::new();
    results.push(("1 digest conformance", c1_digest_conformance()));
    results.push(("2 avalanche divergence", c2_avalanche()));
    results.push(("3 checksum vs crash-only detection", c3_checksum_contrast()));
    results.push(("4 concealed and persistent-high handling", c4_concealed_and_persistent()));

    let start = Instant::now();
    let healthy = run(large_pool(5));
    let took = start.elapsed();
    match &healthy {
        Ok(h) => {
            results.push(("5 false positives", c5_false_positives(h, took)));
            results.push(("6 overhead reduction", c6_overhead(h)));
        }
        Err(e) => {
            results.push(("5 false positives", Err(e.clone())));
            results.push(("6 overhead reduction", Err(e.clone())));
        }
    }
    results.push(("7 transition tables", c7_tables()));
    results.push(("8 replication", c8_replicas()));
    results.push(("9 delay breakdown and observable range", c9_breakdown_and_range()));
    results.push(("10 determinism", c10_determinism()));
    results.push(("11 trace round trip", c11_round_trip()));

    let mut failed = 0;
    for (name, outcome) in &results {
        match outcome {
            Ok(detail) => println!("PASS  [{name}] {detail}"),
            Err(why) => {
                failed += 1;
                println!("FAIL  [{name}] {why}");
            }
        }
    }
    println!("acceptance: {} passed, {} failed", results.len() - failed, failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
