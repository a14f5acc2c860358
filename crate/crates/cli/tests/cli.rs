use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const SMALL: &str = r#"
[scenario]
nodes = 30
horizon = 400
seed = 5

[supervisor]
tolerance = 0.15

[[inject]]
mode = "byzantine-corrupt"
fraction = 0.1
at = 50
"#;

fn bsentinel(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bsentinel")).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn files_in(dir: &Path) -> Vec<String> {
    let mut names: Vec<String> = match fs::read_dir(dir) {
        Ok(rd) => rd.map(|e| e.unwrap().file_name().into_string().unwrap()).collect(),
        Err(_) => Vec::new(),
    };
    names.sort();
    names
}

#[test]
fn simulate_writes_log_and_report() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("small.toml");
    fs::write(&cfg, SMALL).unwrap();
    let out = dir.path().join("out");
    let o = bsentinel(&["simulate", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(files_in(&out), ["eventlog.ndjson", "report.json"]);
    let report: serde_json::Value = serde_json::from_slice(&fs::read(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["detection"]["byzantine-corrupt"]["injected"], 3);
    assert_eq!(report["detection"]["byzantine-corrupt"]["rate"], 1.0);
}

#[test]
fn malformed_config_exits_2_without_output() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    for (name, body) in [
        ("syntax.toml", "[scenario\nnodes = 3"),
        ("unknown.toml", "[scenario]\nnodez = 3\n"),
        ("invalid.toml", "[scenario]\nnodes = 0\n"),
        ("fraction.toml", "[[inject]]\nmode = \"degraded\"\nfraction = 1.5\nat = 0\n"),
    ] {
        let cfg = dir.path().join(name);
        fs::write(&cfg, body).unwrap();
        let o = bsentinel(&["simulate", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
        assert_eq!(o.status.code(), Some(2), "{name}");
        assert!(!o.stderr.is_empty(), "{name}");
        assert!(files_in(&out).is_empty(), "{name}");
    }
    let o = bsentinel(&["simulate", "--config", dir.path().join("absent.toml").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn seed_override_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("small.toml");
    fs::write(&cfg, SMALL).unwrap();
    let run = |sub: &str, extra: &[&str]| {
        let out = dir.path().join(sub);
        let mut args = vec!["simulate", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap(), "--export-trace"];
        args.extend_from_slice(extra);
        assert_eq!(bsentinel(&args).status.code(), Some(0));
        ["eventlog.ndjson", "report.json", "trace.csv"].map(|f| fs::read(out.join(f)).unwrap())
    };
    let a = run("a", &["--seed", "42"]);
    let b = run("b", &["--seed", "42", "--sequential"]);
    let c = run("c", &["--seed", "43"]);
    assert_eq!(a, b);
    assert_ne!(a[0], c[0]);
}

#[test]
fn exported_trace_replays_and_log_rebuilds_report() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("small.toml");
    fs::write(&cfg, SMALL).unwrap();
    let (cfg, sim, rep, rebuilt) = (
        cfg.to_str().unwrap(),
        dir.path().join("sim"),
        dir.path().join("replay"),
        dir.path().join("rebuilt"),
    );
    let o = bsentinel(&["simulate", "--config", cfg, "--out", sim.to_str().unwrap(), "--export-trace"]);
    assert_eq!(o.status.code(), Some(0));

    let trace = sim.join("trace.csv");
    let o = bsentinel(&["replay", "--trace", trace.to_str().unwrap(), "--config", cfg, "--out", rep.to_str().unwrap(), "--format", "csv"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(rep.join("report.csv")).unwrap();
    assert!(csv.starts_with("key,value\n"));
    assert!(csv.lines().any(|l| l == "final_states.S2,3"), "{csv}");

    let log = sim.join("eventlog.ndjson");
    let o = bsentinel(&["report", "--log", log.to_str().unwrap(), "--config", cfg, "--out", rebuilt.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(fs::read(rebuilt.join("report.json")).unwrap(), fs::read(sim.join("report.json")).unwrap());
}

#[test]
fn missing_trace_is_a_runtime_error() {
    let o = bsentinel(&["replay", "--trace", "/nonexistent/trace.csv"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn avalanche_trials() {
    let o = bsentinel(&["avalanche", "--json"]);
    assert_eq!(o.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["trials"], 10_000);
    let mean = v["mean"].as_f64().unwrap();
    assert!((0.90..=0.97).contains(&mean), "{mean}");

    let o = bsentinel(&["avalanche", "--trials", "1"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("mean"));

    assert_eq!(bsentinel(&["avalanche", "--trials", "0"]).status.code(), Some(2));
    assert_eq!(bsentinel(&["avalanche", "--trials", "-3"]).status.code(), Some(2));
}

#[test]
fn replica_counts() {
    let row = |k: &str| -> Vec<u64> {
        let o = bsentinel(&["replicas", "-k", k]);
        assert_eq!(o.status.code(), Some(0));
        stdout(&o).lines().skip(1).map(|l| l.split_whitespace().last().unwrap().parse().unwrap()).collect()
    };
    assert_eq!(row("1"), [2, 4, 2]);
    assert_eq!(row("0"), [1, 1, 1]);
    assert_eq!(row("5"), [6, 16, 6]);
    assert_eq!(bsentinel(&["replicas", "-k", "-1"]).status.code(), Some(2));
    assert_eq!(bsentinel(&["replicas"]).status.code(), Some(2));
}

#[test]
fn unknown_subcommand_and_format_are_usage_errors() {
    assert_eq!(bsentinel(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(bsentinel(&["avalanche", "--format", "xml"]).status.code(), Some(2));
    assert_eq!(bsentinel(&["--help"]).status.code(), Some(0));
}
