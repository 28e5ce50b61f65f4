//! Scenario output and CLI contract tests: file headers, cross-file
//! consistency, and documented exit codes.

use std::path::Path;
use std::process::Command;

use vanet_magent::config::parse_config_str;
use vanet_magent::scenario::run_scenario;

fn read(dir: &Path, name: &str) -> String {
    std::fs::read_to_string(dir.join(name)).unwrap()
}

#[test]
fn duration_zero_writes_headers_only() {
    let cfg = parse_config_str(r#"{"duration_ms": 0}"#).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let metrics = run_scenario(cfg, dir.path()).unwrap();

    assert_eq!(metrics.discovery_success_ratio, 1.0);
    assert_eq!(metrics.alert_coverage_ratio, 1.0);
    assert_eq!(metrics.total_agent_bytes, 0);

    for (file, header) in [
        ("lifelog.csv", "agent_id,kind,state,node,time_ms"),
        (
            "routes.csv",
            "owner_dfa,dst_dfa,node_sequence,hop_count,bottleneck_kbps,est_delay_ms,worst_loss_rate,discovered_at_ms",
        ),
        ("coverage_over_time.csv", "time_ms,alert_id,covered_count"),
        ("paths_per_pair.csv", "owner_dfa,dst_dfa,path_count"),
    ] {
        let text = read(dir.path(), file);
        assert_eq!(text.trim_end(), header, "{file} should be header-only");
    }
    // the trace still carries its header record and the end summary
    let trace = read(dir.path(), "trace.jsonl");
    let lines: Vec<&str> = trace.lines().collect();
    assert_eq!(lines.len(), 2);
    assert!(lines[0].contains("\"category\":\"header\""));
    assert!(lines[1].contains("\"category\":\"end\""));
}

#[test]
fn two_adjacent_dfas_discover_each_other() {
    let cfg = parse_config_str(
        r#"{
            "duration_ms": 2000,
            "grid": {"rows": 1, "cols": 2, "block_m": 200.0},
            "vehicles": {"count": 0},
            "dfa": {"placement": "all"}
        }"#,
    )
    .unwrap();
    let dir = tempfile::tempdir().unwrap();
    let metrics = run_scenario(cfg, dir.path()).unwrap();
    assert_eq!(metrics.discovery_success_ratio, 1.0);

    let routes = read(dir.path(), "routes.csv");
    let rows: Vec<&str> = routes.lines().skip(1).collect();
    assert_eq!(rows.len(), 2, "one direct path per direction");
    assert!(rows.iter().any(|r| r.starts_with("dfa:0,dfa:1,dfa:0;dfa:1,1,")));
    assert!(rows.iter().any(|r| r.starts_with("dfa:1,dfa:0,dfa:1;dfa:0,1,")));
}

#[test]
fn paths_per_pair_matches_routes() {
    let cfg = parse_config_str(r#"{"seed": 21, "duration_ms": 25000}"#).unwrap();
    let dir = tempfile::tempdir().unwrap();
    run_scenario(cfg, dir.path()).unwrap();

    let route_rows = read(dir.path(), "routes.csv").lines().skip(1).count();
    let pair_sum: usize = read(dir.path(), "paths_per_pair.csv")
        .lines()
        .skip(1)
        .map(|l| l.rsplit(',').next().unwrap().parse::<usize>().unwrap())
        .sum();
    assert!(route_rows > 0);
    assert_eq!(pair_sum, route_rows);

    // every route row is internally consistent
    for row in read(dir.path(), "routes.csv").lines().skip(1) {
        let fields: Vec<&str> = row.split(',').collect();
        let hops: usize = fields[3].parse().unwrap();
        assert_eq!(fields[2].split(';').count(), hops + 1);
        assert!(fields[2].starts_with(fields[0]));
        assert!(fields[2].ends_with(fields[1]));
    }
}

#[test]
fn coverage_is_monotone_per_alert() {
    let cfg = parse_config_str(
        r#"{
            "seed": 4,
            "duration_ms": 10000,
            "alerts": [
                {"time_ms": 1000, "origin": "dfa:0", "category": "accident",
                 "body": "crash ahead", "hop_budget": 8},
                {"time_ms": 2000, "origin": "dfa:2", "category": "weather",
                 "body": "ice", "hop_budget": 8}
            ]
        }"#,
    )
    .unwrap();
    let dir = tempfile::tempdir().unwrap();
    run_scenario(cfg, dir.path()).unwrap();

    let mut last: std::collections::BTreeMap<u64, u64> = Default::default();
    let mut rows = 0;
    for row in read(dir.path(), "coverage_over_time.csv").lines().skip(1) {
        let fields: Vec<&str> = row.split(',').collect();
        let alert: u64 = fields[1].parse().unwrap();
        let covered: u64 = fields[2].parse().unwrap();
        let prev = last.insert(alert, covered).unwrap_or(0);
        assert!(covered > prev, "covered count must grow: {row}");
        rows += 1;
    }
    assert!(rows > 0, "alerts should reach at least the origins");
}

fn cli() -> Command {
    Command::new(env!("CARGO_BIN_EXE_vanet-magent"))
}

#[test]
fn cli_exit_codes_follow_error_class() {
    let dir = tempfile::tempdir().unwrap();
    let good = dir.path().join("good.json");
    std::fs::write(&good, "{}").unwrap();
    let invalid = dir.path().join("invalid.json");
    std::fs::write(&invalid, r#"{"grid": {"rows": 0}}"#).unwrap();
    let garbled = dir.path().join("garbled.json");
    std::fs::write(&garbled, "{ nope").unwrap();

    let code = |mut cmd: Command| cmd.output().unwrap().status.code().unwrap();

    let mut ok = cli();
    ok.args(["validate-config", "--config"]).arg(&good);
    assert_eq!(code(ok), 0);

    let mut bad = cli();
    bad.args(["validate-config", "--config"]).arg(&invalid);
    assert_eq!(code(bad), 2, "validation error class");

    let mut parse = cli();
    parse.args(["validate-config", "--config"]).arg(&garbled);
    assert_eq!(code(parse), 3, "parse error class");

    let mut missing = cli();
    missing
        .args(["validate-config", "--config"])
        .arg(dir.path().join("nope.json"));
    assert_eq!(code(missing), 4, "missing file error class");
}

#[test]
fn cli_out_dir_falls_back_to_env() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    std::fs::write(&cfg, r#"{"duration_ms": 1000}"#).unwrap();
    let out = dir.path().join("from-env");

    let mut cmd = cli();
    cmd.args(["run", "--config"])
        .arg(&cfg)
        .env("VANET_MAGENT_OUT", &out);
    assert!(cmd.output().unwrap().status.success());
    assert!(out.join("metrics.json").exists());
    assert!(out.join("trace.jsonl").exists());

    // seed flag overrides the config seed in the trace header
    let mut seeded = cli();
    seeded
        .args(["run", "--config"])
        .arg(&cfg)
        .args(["--seed", "77"])
        .env("VANET_MAGENT_OUT", &out);
    assert!(seeded.output().unwrap().status.success());
    let first = std::fs::read_to_string(out.join("trace.jsonl")).unwrap();
    assert!(first.lines().next().unwrap().contains("\"seed\":77"));
}
