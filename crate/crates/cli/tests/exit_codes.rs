use std::path::Path;
use std::process::{Command, Output};

fn gosdpca(args: &[&str], env: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_gosdpca"));
    cmd.args(args).env_remove("GOSDPCA_THREADS");
    for (k, v) in env {
        cmd.env(k, v);
    }
    cmd.output().unwrap()
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let path = dir.join(name);
    std::fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_string()
}

fn error_kind(out: &Output) -> String {
    let stderr = String::from_utf8_lossy(&out.stderr);
    let line = stderr.lines().last().unwrap_or_default();
    let v: serde_json::Value = serde_json::from_str(line).unwrap_or_else(|_| panic!("stderr is not JSON: {stderr}"));
    v["error"]["kind"].as_str().unwrap().to_string()
}

const SMALL_SIM: &str = r#"{"mode": "simulate", "dgp": {"dgp_id": 1, "n": 80, "p": 20, "r_dgp": 2, "s": 6},
    "methods": [{"method": "go_sdpca"}, {"method": "ar"}], "q": [2], "r": [2], "replications": 3,
    "base_seed": 5, "output_dir": "out"}"#;

#[test]
fn missing_and_malformed_configs_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = gosdpca(&["simulate", "--config", "/nonexistent/config.json"], &[]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(error_kind(&out), "config");

    let bad = write(dir.path(), "bad.json", "{\"mode\": \"simulate\", ");
    assert_eq!(gosdpca(&["simulate", "--config", &bad], &[]).status.code(), Some(2));

    let unknown = write(dir.path(), "unknown.json", &SMALL_SIM.replace("\"q\"", "\"lags\""));
    assert_eq!(gosdpca(&["simulate", "--config", &unknown], &[]).status.code(), Some(2));

    let sim = write(dir.path(), "sim.json", SMALL_SIM);
    let wrong_mode = gosdpca(&["forecast", "--config", &sim], &[]);
    assert_eq!(wrong_mode.status.code(), Some(2));
}

#[test]
fn bad_thread_count_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let sim = write(dir.path(), "sim.json", SMALL_SIM);
    let out = gosdpca(&["simulate", "--config", &sim], &[("GOSDPCA_THREADS", "zero")]);
    assert_eq!(out.status.code(), Some(2));
    let ok = gosdpca(&["simulate", "--config", &sim], &[("GOSDPCA_THREADS", "2")]);
    assert_eq!(ok.status.code(), Some(0), "{}", String::from_utf8_lossy(&ok.stderr));
    assert!(dir.path().join("out/summary.csv").is_file());
}

#[test]
fn unreadable_data_is_a_runtime_error() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "data.csv", "y,x1\n1,2\n3,oops\n");
    let cfg = write(
        dir.path(),
        "forecast.json",
        r#"{"mode": "forecast", "dataset": {"path": "data.csv", "target_column": "y"},
            "methods": [{"method": "ar"}], "test_len": 1, "output_dir": "out"}"#,
    );
    let out = gosdpca(&["forecast", "--config", &cfg], &[]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(error_kind(&out), "runtime");
}

#[test]
fn dm_and_export_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let sim = write(dir.path(), "sim.json", SMALL_SIM);
    let csv = dir.path().join("panel.csv");
    let out = gosdpca(&["export-dgp", "--config", &sim, "--out", csv.to_str().unwrap()], &[]);
    assert_eq!(out.status.code(), Some(0));
    let text = std::fs::read_to_string(&csv).unwrap();
    assert_eq!(text.lines().count(), 82);
    assert!(text.starts_with("y,x1,"));

    let header = "method,q,r,seed,origin,horizon,predicted,realized,config_digest\n";
    let rows = |scale: f64| -> String {
        (0..30)
            .map(|t| {
                let realized = ((t * 7) % 11) as f64;
                format!("m,,,,{t},1,{},{realized},abc\n", realized + scale * (1.0 + (t % 3) as f64))
            })
            .collect()
    };
    let a = write(dir.path(), "a.csv", &(header.to_string() + &rows(0.5)));
    let b = write(dir.path(), "b.csv", &(header.to_string() + &rows(2.0)));
    let out = gosdpca(&["dm", "--a", &a, "--b", &b, "--h", "1"], &[]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(v["p_value"].as_f64().unwrap() < 0.05);

    let short = write(dir.path(), "short.csv", &(header.to_string() + "m,,,,0,1,1.0,2.0,abc\n"));
    let out = gosdpca(&["dm", "--a", &a, "--b", &short], &[]);
    assert_eq!(out.status.code(), Some(3));
}
