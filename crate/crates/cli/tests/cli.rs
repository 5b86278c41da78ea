use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use rhpert_core::records::normalise_json;
use serde_json::Value;

fn rhpert(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rhpert")).args(args).output().expect("binary runs")
}

fn write_config(dir: &Path, name: &str, body: &str) -> PathBuf {
    let path = dir.join(name);
    fs::write(&path, body).unwrap();
    path
}

fn model(e: f64, eps: f64, eta: f64, tau: f64, n: usize) -> String {
    format!(r#""model": {{"E": {e}, "eps": {eps}, "eta": {eta}, "tau": {tau}, "N": {n}, "beta0": 1.0986122886681098, "beta": 0.6931471805599453}}"#)
}

/// Parses CSV text into (header, rows).
fn table(text: &str) -> (Vec<String>, Vec<Vec<String>>) {
    let mut lines = text.lines();
    let header = lines.next().unwrap().split(',').map(str::to_string).collect();
    (header, lines.map(|l| l.split(',').map(str::to_string).collect()).collect())
}

fn column<'a>(header: &[String], rows: &'a [Vec<String>], name: &str) -> Vec<&'a str> {
    let i = header.iter().position(|h| h == name).unwrap_or_else(|| panic!("no column {name}"));
    rows.iter().map(|r| r[i].as_str()).collect()
}

#[test]
fn kernel_decoupled_and_resonant_rows() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "a.json", &format!(r#"{{"schema_version": 1, {}}}"#, model(2.0, 1.0, 0.0, 1.0, 3)));
    let out = rhpert(&["kernel", "--config", cfg.to_str().unwrap()]);
    assert!(out.status.success());
    let (h, rows) = table(&String::from_utf8(out.stdout).unwrap());
    assert_eq!(column(&h, &rows, "w_re")[0].parse::<f64>().unwrap(), 0.0);
    assert_eq!(column(&h, &rows, "w_im")[0].parse::<f64>().unwrap(), 0.0);
    assert_eq!(column(&h, &rows, "contracting")[0], "false");

    let body = format!(r#"{{"schema_version": 1, {}}}"#, model(1.0, 1.0, 1.0, std::f64::consts::FRAC_PI_4, 3));
    let cfg = write_config(dir.path(), "b.json", &body);
    let out = rhpert(&["kernel", "--config", cfg.to_str().unwrap()]);
    let (h, rows) = table(&String::from_utf8(out.stdout).unwrap());
    let w_im: f64 = column(&h, &rows, "w_im")[0].parse().unwrap();
    assert!((w_im - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-15);
    assert!(column(&h, &rows, "exp_deviation")[0].parse::<f64>().unwrap() < 1e-10);
}

#[test]
fn json_output_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("s.json");
    let out = rhpert(&["simulate", "--format", "json", "--output", path.to_str().unwrap()]);
    assert!(out.status.success());
    let text = fs::read_to_string(&path).unwrap();
    let doc: Value = serde_json::from_str(&text).unwrap();
    assert_eq!(normalise_json(&doc), text);
    assert_eq!(doc.as_array().unwrap().len(), 3);
}

#[test]
fn infinite_beta_is_written_as_inf() {
    let dir = tempfile::tempdir().unwrap();
    let body = r#"{"schema_version": 1, "model": {"E": 2, "eps": 1, "eta": 0.5, "tau": 1, "N": 2, "beta0": "inf", "beta": 1}}"#;
    let cfg = write_config(dir.path(), "c.json", body);
    let csv = rhpert(&["simulate", "--config", cfg.to_str().unwrap()]);
    assert!(csv.status.success());
    let (h, rows) = table(&String::from_utf8(csv.stdout).unwrap());
    assert_eq!(column(&h, &rows, "beta0"), vec!["inf"; 3]);
    assert!(!h.contains(&"relative_entropy".to_string()));
    let json = rhpert(&["simulate", "--config", cfg.to_str().unwrap(), "--format", "json"]);
    let doc: Value = serde_json::from_slice(&json.stdout).unwrap();
    assert_eq!(doc[0]["beta0"], Value::String("inf".into()));
    assert_eq!(doc[0]["beta_star"], Value::String("inf".into()));
}

#[test]
fn simulate_with_oracle() {
    let out = rhpert(&["simulate", "--oracle", "--cutoff", "20"]);
    assert!(out.status.success());
    let (h, rows) = table(&String::from_utf8(out.stdout).unwrap());
    for name in ["delta_char_fn", "delta_entropy", "delta_relative_entropy"] {
        for v in column(&h, &rows, name) {
            assert!(v.parse::<f64>().unwrap() < 1e-4, "{name} = {v}");
        }
    }
}

#[test]
fn simulate_relative_entropy_column_matches_closed_form() {
    let out = rhpert(&["simulate"]);
    let (h, rows) = table(&String::from_utf8(out.stdout).unwrap());
    let p = rhpert_cli::RunConfig::default().params().unwrap();
    for (m, v) in column(&h, &rows, "relative_entropy").iter().enumerate() {
        let expected = rhpert_core::dynamics::relative_entropy(&p, m).unwrap();
        assert_eq!(v.parse::<f64>().unwrap(), expected);
    }
}

#[test]
fn limit_columns() {
    let out = rhpert(&["limit"]);
    assert!(out.status.success());
    let (h, rows) = table(&String::from_utf8(out.stdout).unwrap());
    let thetas = column(&h, &rows, "theta_re");
    let errors = column(&h, &rows, "error");
    let limits = column(&h, &rows, "limit");
    for ((t, e), l) in thetas.iter().zip(&errors).zip(&limits) {
        if e.is_empty() {
            continue;
        }
        let theta: f64 = t.parse().unwrap();
        if theta == 0.0 {
            assert_eq!(e.parse::<f64>().unwrap(), 0.0);
        }
        let expected = (-0.75 * theta * theta).exp();
        assert!((l.parse::<f64>().unwrap() - expected).abs() < 1e-14);
    }
}

#[test]
fn bad_schedule_and_config_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let body = format!(
        r#"{{"schema_version": 1, {}, "schedule": {{"exponent": 0.6, "multiplier": 2, "checkpoints": [10, 100]}}}}"#,
        model(2.0, 1.0, 0.5, 1.0, 2)
    );
    let cfg = write_config(dir.path(), "s.json", &body);
    assert_eq!(rhpert(&["limit", "--config", cfg.to_str().unwrap()]).status.code(), Some(2));

    let cfg = write_config(dir.path(), "u.json", &format!(r#"{{"schema_version": 1, {}, "extra": 1}}"#, model(2.0, 1.0, 0.5, 1.0, 2)));
    assert_eq!(rhpert(&["kernel", "--config", cfg.to_str().unwrap()]).status.code(), Some(2));
    assert_eq!(rhpert(&["kernel", "--config", "/nonexistent/config.json"]).status.code(), Some(2));
    assert_eq!(rhpert(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(rhpert(&["kernel", "--format", "xml"]).status.code(), Some(2));
}

#[test]
fn unstable_model_rejected_before_verification() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "h.json", &format!(r#"{{"schema_version": 1, {}}}"#, model(1.0, 1.0, 1.5, 0.5, 2)));
    let out = rhpert(&["verify", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(out.stdout.is_empty());
    assert!(String::from_utf8_lossy(&out.stderr).contains("stability"));
}

#[test]
fn zero_tolerance_fails_verification() {
    let out = rhpert(&["verify", "--tolerance", "0", "--cutoff", "8"]);
    assert_eq!(out.status.code(), Some(1));
    let (h, rows) = table(&String::from_utf8(out.stdout).unwrap());
    let status = column(&h, &rows, "status");
    assert!(status.iter().all(|s| *s == "fail" || *s == "skipped"));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("FAIL oracle/char_fn"));
    let measured: Vec<f64> = column(&h, &rows, "measured").iter().map(|v| v.parse().unwrap()).collect();
    assert!(measured.iter().any(|&m| m > 0.0));
}

#[test]
fn sweep_records_in_grid_order() {
    let dir = tempfile::tempdir().unwrap();
    let body = format!(
        r#"{{"schema_version": 1, {}, "sweep": {{"E": [1.0], "eps": [1.0], "eta": [0.5, 1.5], "tau": [0.1, 0.2, 0.4, 0.6, 0.8, 1.0],
            "beta0": [1.0], "beta": ["inf"], "N": [4]}}}}"#,
        model(2.0, 1.0, 0.5, 1.0, 2)
    );
    let cfg = write_config(dir.path(), "g.json", &body);
    let out = rhpert(&["sweep", "--config", cfg.to_str().unwrap()]);
    assert!(out.status.success());
    let (h, rows) = table(&String::from_utf8(out.stdout).unwrap());
    assert_eq!(rows.len(), 12);
    let ok = column(&h, &rows, "ok");
    assert!(ok[..6].iter().all(|v| *v == "true"));
    assert!(ok[6..].iter().all(|v| *v == "false"));
    let z: Vec<f64> = column(&h, &rows, "z_abs2")[..6].iter().map(|v| v.parse().unwrap()).collect();
    assert!(z.windows(2).all(|w| w[1] < w[0]));
}

#[test]
fn subsystem_with_explicit_arguments_and_plot() {
    let dir = tempfile::tempdir().unwrap();
    let body = format!(
        r#"{{"schema_version": 1, {}, "subsystem": {{"selectors": [{{"kind": "S", "step": 2}}, {{"kind": "Smn_plus_Sm", "site": 2, "lag": 1}}],
            "alphas": [[{{"re": 0.3}}], [{{"re": 0.1, "im": 0.2}}, {{"re": -0.2}}]]}}}}"#,
        model(2.0, 1.0, 0.5, 1.0, 2)
    );
    let cfg = write_config(dir.path(), "sub.json", &body);
    let plot = dir.path().join("plot.csv");
    let out = rhpert(&["subsystem", "--config", cfg.to_str().unwrap(), "--oracle", "--cutoff", "20", "--plot", plot.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let (h, rows) = table(&String::from_utf8(out.stdout).unwrap());
    assert_eq!(rows.len(), 2);
    for d in column(&h, &rows, "delta_value") {
        assert!(d.parse::<f64>().unwrap() < 1e-5);
    }
    let long = fs::read_to_string(plot).unwrap();
    assert!(long.starts_with("run_id,quantity,value\n"));
    assert!(long.contains("subsystem-1-0,value,"));
}
