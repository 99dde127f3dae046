use std::fs;
use std::process::Command;

fn qwinsim() -> Command {
    Command::new(env!("CARGO_BIN_EXE_qwinsim"))
}

#[test]
fn validate_only_accepts_every_scenario() {
    let out = qwinsim().arg("--list-scenarios").output().unwrap();
    let list = String::from_utf8(out.stdout).unwrap();
    for name in list.lines() {
        let st = qwinsim().args(["--scenario", name, "--validate-only"]).status().unwrap();
        assert!(st.success(), "{name}");
    }
}

#[test]
fn bad_config_exits_nonzero_with_offending_keys() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.toml");
    let text = String::from_utf8(qwinsim().args(["--scenario", "single", "--print-config"]).output().unwrap().stdout).unwrap();
    fs::write(&path, text.replace("warmup = \"6s\"", "warmup = \"2m\"")).unwrap();
    let out = qwinsim().arg("--config").arg(&path).arg("--validate-only").output().unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("warmup"));
}

#[test]
fn run_writes_csvs_and_verdict_matches_latency_csv() {
    let dir = tempfile::tempdir().unwrap();
    let st = qwinsim()
        .args(["--scenario", "group1", "--duration", "2", "--warmup", "0.5", "--seed", "7", "--out"])
        .arg(dir.path())
        .status()
        .unwrap();
    assert!(st.success());
    let latency = fs::read_to_string(dir.path().join("latency.csv")).unwrap();
    let tenants: std::collections::BTreeSet<&str> = latency.lines().skip(1).map(|l| l.split(',').nth(1).unwrap()).collect();
    assert_eq!(tenants.len(), 6);

    // The SLO verdict follows from latency.csv and the configured SLOs alone.
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("report.json")).unwrap()).unwrap();
    for v in report["slo"].as_array().unwrap() {
        let tenant = v["tenant"].as_str().unwrap();
        let q = v["quantile"].as_f64().unwrap();
        let row = latency
            .lines()
            .map(|l| l.split(',').collect::<Vec<_>>())
            .find(|f| f[1] == tenant && f[3].parse::<f64>().unwrap() == q)
            .unwrap();
        let tail: u64 = row[4].parse().unwrap();
        assert_eq!(v["met"].as_bool().unwrap(), tail <= v["slo_ns"].as_u64().unwrap());
    }
}

#[test]
fn seed_range_sweeps_each_seed() {
    let out = qwinsim()
        .args(["--scenario", "single", "--duration", "1", "--warmup", "0.2", "--seeds", "3..6", "--allocator", "static"])
        .output()
        .unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    for seed in 3..6 {
        assert!(text.contains(&format!("T1,LC,{seed},")));
    }
    assert!(text.contains("T2,BE,mean,"));
}

#[test]
fn unknown_allocator_is_rejected() {
    let st = qwinsim().args(["--scenario", "single", "--allocator", "fifo"]).status().unwrap();
    assert!(!st.success());
}
