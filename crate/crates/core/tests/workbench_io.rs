use std::io::Write;

use antiviral::workbench::{
    export_results, load_results_json, load_viral_csv, run_scenario, run_scenario_serial, table2, write_results,
    write_rows, ExportFormat, ScenarioConfig,
};
use antiviral::metrics::MetricsOptions;

const SINGLE: &str = r#"
patient = "B"
horizon = 100.0

[schedule]
t_tr = "t_dl"
eta_beta = 0.0
eta_p = 0.9
"#;

const SWEEP: &str = r#"
patient = ["A", "E"]
horizon = 150.0
seed = 11

[sweep]
t_tr = ["t_dl", 5.0, 7.5]
eta_p = [0.0, 0.5, 0.95]

[outputs]
trajectory = true
trajectory_points = 50
"#;

fn csv_bytes(config: &ScenarioConfig) -> Vec<u8> {
    let mut out = Vec::new();
    write_results(&run_scenario(config).unwrap(), ExportFormat::Csv, &mut out).unwrap();
    out
}

#[test]
fn viral_csv_file_round_trip() {
    let mut file = tempfile::NamedTempFile::new().unwrap();
    writeln!(file, "t_dpi,viral_load\n1,<100\n3, 2.5e3\n2,40").unwrap();
    let obs = load_viral_csv(file.path()).unwrap();
    let times: Vec<f64> = obs.iter().map(|o| o.t).collect();
    assert_eq!(times, [1.0, 2.0, 3.0]);
    assert!(load_viral_csv(file.path().with_extension("missing")).is_err());
}

#[test]
fn single_run_csv_has_one_row() {
    let config = ScenarioConfig::from_toml_str(SINGLE).unwrap();
    let text = String::from_utf8(csv_bytes(&config)).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 2);
    assert_eq!(lines[0], "patient,t_tr,eta_beta,eta_p,t_peak,v_max,delta_v_log10,di,effective");
    assert!(lines[1].starts_with("B,"));
    assert!(lines[1].ends_with(",true"));
}

#[test]
fn csv_export_is_byte_identical_across_runs() {
    let config = ScenarioConfig::from_toml_str(SWEEP).unwrap();
    assert_eq!(csv_bytes(&config), csv_bytes(&config));
}

#[test]
fn json_export_round_trips() {
    let config = ScenarioConfig::from_toml_str(SWEEP).unwrap();
    let result = run_scenario(&config).unwrap();
    assert_eq!(result.runs.len(), 18);
    assert!(result.runs.iter().all(|r| r.trajectory.as_ref().is_some_and(|t| t.len() == 50)));
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("out.json");
    export_results(&result, ExportFormat::Json, &path).unwrap();
    let back = load_results_json(&path).unwrap();
    assert_eq!(back.provenance, result.provenance);
    assert_eq!(back.config, config);
    assert_eq!(back.runs.len(), result.runs.len());
    for (a, b) in back.runs.iter().zip(&result.runs) {
        assert_eq!(a.patient, b.patient);
        assert_eq!(a.t_tr_spec, b.t_tr_spec);
        assert_eq!(a.effective, b.effective);
        assert_eq!(a.error, b.error);
        let close = |x: Option<f64>, y: Option<f64>| match (x, y) {
            (Some(x), Some(y)) => (x - y).abs() <= 1e-12 * x.abs().max(1.0),
            (None, None) => true,
            _ => false,
        };
        assert!(close(a.t_peak, b.t_peak) && close(a.v_max, b.v_max) && close(a.di, b.di));
    }
}

#[test]
fn serial_and_parallel_runs_agree() {
    let config = ScenarioConfig::from_toml_str(SWEEP).unwrap();
    assert_eq!(run_scenario(&config).unwrap(), run_scenario_serial(&config).unwrap());
}

#[test]
fn config_hash_tracks_content() {
    let a = ScenarioConfig::from_toml_str(SWEEP).unwrap();
    let b = ScenarioConfig::from_toml_str(&SWEEP.replace("seed = 11", "seed = 12")).unwrap();
    assert_eq!(a.hash(), ScenarioConfig::from_toml_str(SWEEP).unwrap().hash());
    assert_ne!(a.hash(), b.hash());
    assert_eq!(run_scenario(&a).unwrap().provenance.config_hash, a.hash());
}

#[test]
fn table2_exports_nine_rows() {
    let rows = table2(&MetricsOptions::default()).unwrap();
    let mut out = Vec::new();
    write_rows(&rows, ExportFormat::Csv, &mut out).unwrap();
    let text = String::from_utf8(out).unwrap();
    assert_eq!(text.lines().count(), 10);
    assert!(text.lines().nth(1).unwrap().starts_with("A,"));
}

#[test]
fn invalid_configs_are_rejected() {
    let empty = SWEEP.replace("eta_p = [0.0, 0.5, 0.95]", "eta_p = []");
    assert!(ScenarioConfig::from_toml_str(&empty).is_err());
    let both = format!("{SINGLE}\n[sweep]\nt_tr = [3.0]\n");
    assert!(ScenarioConfig::from_toml_str(&both).is_err());
    let unknown = SINGLE.replace("horizon", "horizn");
    assert!(ScenarioConfig::from_toml_str(&unknown).is_err());
    let decreasing = SWEEP.replace("[\"t_dl\", 5.0, 7.5]", "[7.5, 5.0]");
    assert!(ScenarioConfig::from_toml_str(&decreasing).is_err());
}

#[test]
fn unresolvable_time_is_a_per_run_error() {
    // The detection limit is never reached, so t_dl cannot be resolved.
    let text = SINGLE.replace("horizon = 100.0", "horizon = 100.0\ndetection_limit = 1e15");
    let result = run_scenario(&ScenarioConfig::from_toml_str(&text).unwrap()).unwrap();
    assert_eq!(result.runs.len(), 1);
    let run = &result.runs[0];
    assert!(run.error.is_some() && run.t_tr.is_none() && run.t_peak.is_none());
}
