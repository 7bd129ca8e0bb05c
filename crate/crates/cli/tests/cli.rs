use std::process::{Command, Output};

fn antiviral(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_antiviral")).args(args).output().unwrap()
}

fn stdout_json(out: &Output) -> serde_json::Value {
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).unwrap()
}

#[test]
fn table2_prints_every_patient() {
    let out = antiviral(&["table2"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let ids: Vec<&str> = text.lines().skip(1).map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(ids, ["A", "B", "C", "D", "E", "F", "G", "H", "I"]);
}

#[test]
fn metrics_reports_effective_treatment() {
    let v = stdout_json(&antiviral(&["metrics", "--patient", "B", "--t-tr", "4", "--eta-p", "0.9", "--format", "json"]));
    assert_eq!(v["effective"], true);
    assert_eq!(v["t_peak"], 4.0);
    assert!(v["delta_v"].as_f64().unwrap() > 2.0);
}

#[test]
fn sweep_reads_a_scenario_file() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("scenario.toml");
    std::fs::write(&config, "patient = \"E\"\nhorizon = 150.0\n\n[sweep]\nt_tr = [\"t_dl\"]\neta_p = [0.2, 0.9]\n").unwrap();
    let out_path = dir.path().join("runs.json");
    let out = antiviral(&[
        "sweep",
        "--config",
        config.to_str().unwrap(),
        "--format",
        "json",
        "--out",
        out_path.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&out_path).unwrap()).unwrap();
    let runs = v["runs"].as_array().unwrap();
    assert_eq!(runs.len(), 2);
    assert_eq!(runs[0]["effective"], false);
    assert_eq!(runs[1]["effective"], true);
    assert_eq!(v["provenance"]["config_hash"].as_str().unwrap().len(), 64);
}

#[test]
fn errors_are_json_on_stderr() {
    let out = antiviral(&["metrics", "--patient", "Z"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(out.stdout.is_empty());
    let v: serde_json::Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(v["error"], "config");
    assert!(v["message"].as_str().unwrap().contains('Z'));

    let out = antiviral(&["metrics", "--patient", "B", "--eta-p", "1.5", "--t-tr", "3"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(serde_json::from_slice::<serde_json::Value>(&out.stderr).is_ok());
}

#[test]
fn usage_errors_exit_two() {
    let out = antiviral(&["metrics", "--bogus"]);
    assert_eq!(out.status.code(), Some(2));
    let v: serde_json::Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(v["error"], "usage");
    assert!(antiviral(&["--help"]).status.success());
}
