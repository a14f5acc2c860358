use std::hint::black_box;

use bsentinel::config::{Injection, ScenarioConfig};
use bsentinel::digest::{avalanche_study, ChallengeMessage};
use bsentinel::events::FaultKind;
use bsentinel::exec::ExecMode;
use bsentinel::simnet::{run_scenario_with, run_scenarios};
use bsentinel::trace::{replay, synthetic_trace, LoadedTrace, ReplayConfig, SyntheticSpec};
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

const MODES: [(&str, ExecMode); 2] = [("sequential", ExecMode::Sequential), ("parallel", ExecMode::Parallel)];

fn scenario(seed: u64, nodes: u32, horizon: u64) -> ScenarioConfig {
    let mut c = ScenarioConfig::default();
    c.scenario.nodes = nodes;
    c.scenario.horizon = horizon;
    c.scenario.seed = seed;
    c.supervisor.tolerance = 0.15;
    c.injections.push(Injection { mode: FaultKind::ByzantineCorrupt, fraction: 0.05, at: 100, degradation: 1.5 });
    c.injections.push(Injection { mode: FaultKind::Degraded, fraction: 0.05, at: 200, degradation: 1.3 });
    c
}

fn avalanche(c: &mut Criterion) {
    let mut g = c.benchmark_group("avalanche_10k");
    for (name, mode) in MODES {
        g.bench_function(name, |b| b.iter(|| avalanche_study(black_box(10_000), 7, None, mode).unwrap()));
    }
    g.finish();
}

fn sweep(c: &mut Criterion) {
    let configs: Vec<_> = (0..8).map(|s| scenario(s, 100, 2000)).collect();
    let mut g = c.benchmark_group("scenario_sweep_8");
    g.sample_size(10);
    for (name, mode) in MODES {
        g.bench_function(name, |b| b.iter(|| run_scenarios(black_box(&configs), mode)));
    }
    g.finish();
}

fn single_run(c: &mut Criterion) {
    // Calibration and synchronized schedules put hundreds of nodes on the
    // same tick, which is where per-tick reply batches go parallel.
    let mut g = c.benchmark_group("scenario_2000_nodes");
    g.sample_size(10);
    for (name, mode) in MODES {
        g.bench_with_input(BenchmarkId::from_parameter(name), &mode, |b, &mode| {
            b.iter(|| run_scenario_with(scenario(1, 2000, 500), mode).unwrap())
        });
    }
    g.finish();
}

fn trace_replay(c: &mut Criterion) {
    let spec = SyntheticSpec { nodes: 400, ticks: 250, high_rate: 0.1, extreme_rate: 0.01, seed: 3, ..SyntheticSpec::default() };
    let trace = LoadedTrace::from_records(synthetic_trace(&spec, &ChallengeMessage::default()));
    let cfg = ReplayConfig::default();
    let mut g = c.benchmark_group("replay_100k_records");
    g.sample_size(10);
    for (name, mode) in MODES {
        g.bench_function(name, |b| b.iter(|| replay(black_box(&trace), &cfg, mode).unwrap()));
    }
    g.finish();
}

criterion_group!(benches, avalanche, sweep, single_run, trace_replay);
criterion_main!(benches);
