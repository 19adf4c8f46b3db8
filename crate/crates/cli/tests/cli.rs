use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn qser(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qser")).args(args).output().unwrap()
}

fn write_config(dir: &Path, name: &str, body: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, body).unwrap();
    p
}

fn base(extra: &str) -> String {
    format!(
        r#"{{
  "name": "t",
  "quantizer": {{"bits": 1, "step": 2.0}},
  "oversampling": 64,
  "constellation": {{"qam": 16}}{extra}
}}"#
    )
}

fn run_ok(cmd: &str, cfg: &Path, out: &Path, more: &[&str]) {
    let mut args = vec![cmd, "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()];
    args.extend_from_slice(more);
    let o = qser(&args);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
}

fn read_csv(p: &Path) -> Vec<Vec<String>> {
    std::fs::read_to_string(p)
        .unwrap()
        .lines()
        .map(|l| l.split(',').map(String::from).collect())
        .collect()
}

#[test]
fn empty_grid_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.json", &base(r#", "snr_grid": []"#));
    let o = qser(&["ser-sweep", "--config", cfg.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("snr_grid: empty"));
}

#[test]
fn unknown_key_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.json", &base(r#", "snr_grd": [0]"#));
    let o = qser(&["ser-sweep", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("snr_grd"));
}

#[test]
fn non_threshold_detector_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "c.json",
        &base(r#", "operating_snr_db": 0, "detectors": ["ml", "nofilt"]"#),
    );
    let o = qser(&["thresholds", "--config", cfg.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("detectors: nofilt"));
}

#[test]
fn budget_errors_exit_three() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "c.json",
        &base(
            r#", "snr_grid": {"start": 0, "stop": 10, "step": 1},
  "optimize": {"mode": "one_bit_fixed_inner", "grids": [{"min": 2, "max": 10, "step": 0.5}], "budget": 20}"#,
        ),
    );
    let o = qser(&["optimize", "--config", cfg.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));

    let cfg = write_config(
        dir.path(),
        "n.json",
        &base(r#", "snr_grid": [0], "detectors": ["nofilt"], "enumeration_cap": 10"#),
    );
    let o = qser(&["ser-sweep", "--config", cfg.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn missing_config_is_a_plain_failure() {
    let o = qser(&["power", "--config", "/nonexistent/c.json"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn power_table_three_rows() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.json", &base(r#", "power": {"base_bits": 1, "base_branches": 64}"#));
    run_ok("power", &cfg, dir.path(), &["--plot"]);
    let rows = read_csv(&dir.path().join("power.csv"));
    assert_eq!(rows[0], ["bits", "N", "power_watts"]);
    let pairs: Vec<(String, String)> = rows[1..].iter().map(|r| (r[0].clone(), r[1].clone())).collect();
    assert_eq!(
        pairs,
        [("1", "64"), ("2", "32"), ("3", "16")].map(|(a, b)| (a.to_string(), b.to_string()))
    );
    assert!(rows[1..].iter().all(|r| r[2] == rows[1][2]));
    assert!(dir.path().join("power.svg").exists());
}

#[test]
fn sweep_minimum_matches_known_value() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "c.json",
        &base(r#", "snr_grid": {"start": -10, "stop": 40, "step": 0.1}, "detectors": ["ml", "mindist"]"#),
    );
    run_ok("ser-sweep", &cfg, dir.path(), &["--plot"]);
    let rows = read_csv(&dir.path().join("ser-sweep.csv"));
    assert_eq!(rows[0], ["snr_db", "detector", "ser", "ser_component"]);
    assert_eq!(rows.len(), 1 + 2 * 501);
    let (ser, snr) = rows[1..]
        .iter()
        .filter(|r| r[1] == "ml")
        .map(|r| (r[2].parse::<f64>().unwrap(), r[0].parse::<f64>().unwrap()))
        .fold((f64::INFINITY, 0.0), |a, b| if b.0 < a.0 { b } else { a });
    assert!((ser - 9.8e-4).abs() / 9.8e-4 < 0.1, "{ser}");
    assert!((snr - 5.6).abs() <= 0.2, "{snr}");
    let svg = std::fs::read_to_string(dir.path().join("ser-sweep.svg")).unwrap();
    assert!(svg.starts_with("<svg") && svg.contains("polyline"));
}

#[test]
fn mc_is_reproducible_and_manifested() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.json", &base(r#", "snr_grid": [0, 5]"#));
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    run_ok("mc", &cfg, &a, &["--trials", "20000", "--seed", "9", "--threads", "1"]);
    run_ok("mc", &cfg, &b, &["--trials", "20000", "--seed", "9", "--threads", "3", "--dither", "off"]);
    let csv_a = std::fs::read(a.join("mc_ml.csv")).unwrap();
    assert_eq!(csv_a, std::fs::read(b.join("mc_ml.csv")).unwrap());
    let rows = read_csv(&a.join("mc_ml.csv"));
    assert_eq!(rows[0], ["snr_db", "ser_mc", "stderr", "ser_analytic"]);

    let m: serde_json::Value = serde_json::from_slice(&std::fs::read(a.join("mc.manifest.json")).unwrap()).unwrap();
    assert_eq!(m["seed"], 9);
    assert_eq!(m["config"]["mc"]["trials"], 20000);
    assert_eq!(m["threads"], 1);
    assert!(m["wall_time_s"].as_f64().unwrap() >= 0.0);
    assert_eq!(m["inputs_hash"].as_str().unwrap().len(), 64);
    assert!(m["version"].as_str().unwrap().starts_with(env!("CARGO_PKG_VERSION")));
    let files = m["outputs"].as_array().unwrap();
    assert_eq!(files[0]["file"], "mc_ml.csv");
    assert_eq!(files[0]["rows"], 2);

    run_ok("mc", &cfg, &b, &["--trials", "20000", "--seed", "10"]);
    assert_ne!(csv_a, std::fs::read(b.join("mc_ml.csv")).unwrap());
}

#[test]
fn pmf_files_per_amplitude() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.json", &base(r#", "operating_snr_db": 0"#));
    run_ok("pmf", &cfg, dir.path(), &["--plot"]);
    for x in ["-3", "-1", "1", "3"] {
        let rows = read_csv(&dir.path().join(format!("pmf_x{x}.csv")));
        assert_eq!(rows[0], ["d", "prob"]);
        assert_eq!(rows.len(), 1 + 65);
        let total: f64 = rows[1..].iter().map(|r| r[1].parse::<f64>().unwrap()).sum();
        assert!((total - 1.0).abs() < 1e-12);
    }
    assert!(dir.path().join("pmf.svg").exists());
}

#[test]
fn thresholds_and_per_symbol() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "c.json",
        &base(r#", "operating_snr_db": 0, "detectors": ["ml", "clt", "mindist"]"#),
    );
    run_ok("thresholds", &cfg, dir.path(), &[]);
    let rows = read_csv(&dir.path().join("thresholds.csv"));
    assert_eq!(rows[0], ["detector", "i", "b_i"]);
    assert_eq!(rows.len(), 1 + 9);
    assert_eq!(rows[3], ["ml", "3", "0.625"]);

    let cfg = write_config(
        dir.path(),
        "p.json",
        &base(r#", "operating_snr_db": "optimum", "snr_grid": {"start": -10, "stop": 40, "step": 0.1}"#),
    );
    run_ok("per-symbol", &cfg, dir.path(), &[]);
    let rows = read_csv(&dir.path().join("per-symbol_ml.csv"));
    assert_eq!(rows[0], ["level", "error_rate"]);
    let rates: Vec<f64> = rows[1..].iter().map(|r| r[1].parse().unwrap()).collect();
    for (r, w) in rates.iter().zip([3.9e-4, 6.0e-4, 6.0e-4, 3.9e-4]) {
        assert!((r - w).abs() / w < 0.1, "{rates:?}");
    }
}

#[test]
fn optimize_writes_landscape() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "c.json",
        &base(
            r#", "snr_grid": {"start": -10, "stop": 40, "step": 0.1},
  "optimize": {"mode": "one_bit_fixed_inner", "grids": [{"min": 2, "max": 10, "step": 1}]}"#,
        ),
    );
    run_ok("optimize", &cfg, dir.path(), &["--plot"]);
    let rows = read_csv(&dir.path().join("landscape.csv"));
    assert_eq!(rows[0], ["a1", "a2", "a3", "a4", "min_ser", "argmin_snr_db"]);
    assert_eq!(rows.len(), 1 + 9);
    assert_eq!(rows[2][..4], ["3", "", "", ""]);
    let v3: f64 = rows[2][4].parse().unwrap();
    assert!((v3 - 9.8e-4).abs() / 9.8e-4 < 0.1);
    let m: serde_json::Value =
        serde_json::from_slice(&std::fs::read(dir.path().join("optimize.manifest.json")).unwrap()).unwrap();
    assert_eq!(m["summary"]["cells"], 9);
    assert!(m["summary"]["plateaus"][0]["is_plateau"].as_bool().unwrap());
}
