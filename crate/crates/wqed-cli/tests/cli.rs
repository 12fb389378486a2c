use std::path::Path;
use std::process::Command;

use num_complex::Complex64 as C64;
use proptest::prelude::*;
use serde_json::{json, Value};
use wqed::AmplitudeMode;
use wqed_cli::{
    cache::{self, Cache},
    output::config_hash,
    CliError, Observable, Override, RunConfig,
};

/// Small grids so each run takes well under a second.
fn small(extra: Value) -> Value {
    let mut v = json!({
        "model": {"gamma": 1.0, "R": 1.0},
        "numerics": {"k_max": 10.0, "n_points": 201, "spectrum_points": 801,
                     "tolerances": {"power": 1.0}},
        "run": {"cache": false}
    });
    merge(&mut v, extra);
    v
}

fn merge(base: &mut Value, extra: Value) {
    match (base, extra) {
        (Value::Object(a), Value::Object(b)) => {
            for (k, v) in b {
                merge(a.entry(k).or_insert(Value::Null), v);
            }
        }
        (slot, v) => *slot = v,
    }
}

fn load(v: Value) -> Result<RunConfig, CliError> {
    RunConfig::from_value(v)
}

fn violations(err: CliError) -> Vec<String> {
    match err {
        CliError::Validation(list) => list,
        other => panic!("expected a validation error, got {other}"),
    }
}

#[test]
fn minimal_model_block_gets_defaults() {
    let c = load(json!({"model": {"gamma": 0.5, "R": 2.0}})).unwrap();
    assert_eq!(c.model.k0r_over_pi, 0.25);
    assert_eq!(c.model.delta, 0.0);
    assert_eq!(c.model.gamma1_fraction, 0.5);
    assert_eq!(c.numerics.k_max, 40.0);
    assert_eq!(c.numerics.n_points, 1601);
    assert_eq!(c.run.mode, AmplitudeMode::Exact);
    assert_eq!(c.run.observable, Observable::Spectrum);
    assert_eq!(c.run.branches, vec![-1, 0, 1]);
}

#[test]
fn carrier_phase_is_reduced() {
    let c = load(json!({"model": {"gamma": 1.0, "R": 1.0, "k0R_over_pi": 2.25}})).unwrap();
    assert!((c.model.k0r_over_pi - 0.25).abs() < 1e-15);
    let c = load(json!({"model": {"gamma": 1.0, "R": 1.0, "k0R_over_pi": -0.5}})).unwrap();
    assert!((c.model.k0r_over_pi - 1.5).abs() < 1e-15);
}

#[test]
fn every_violation_is_reported_by_field() {
    let err = load(json!({
        "model": {"gamma": -1.0, "R": -2.0},
        "numerics": {"n_points": 200}
    }))
    .unwrap_err();
    let list = violations(err);
    assert!(list.iter().any(|v| v.starts_with("model.gamma")), "{list:?}");
    assert!(list.iter().any(|v| v.starts_with("model.R")), "{list:?}");
    assert!(list.iter().any(|v| v.starts_with("numerics.n_points")), "{list:?}");
}

#[test]
fn unknown_keys_and_blocks_are_rejected() {
    let err = load(json!({"model": {"gamma": 1.0, "R": 1.0, "gama": 2.0}})).unwrap_err();
    assert!(
        matches!(&err, CliError::Parse { context, .. } if context == "model"),
        "{err}"
    );
    assert!(err.to_string().contains("gama"), "{err}");
    let err = load(json!({"model": {"gamma": 1.0, "R": 1.0}, "figure": {}})).unwrap_err();
    assert!(
        matches!(&err, CliError::Parse { context, .. } if context == "figure"),
        "{err}"
    );
    let err = load(json!({"numerics": {}})).unwrap_err();
    assert!(
        matches!(&err, CliError::Parse { context, .. } if context == "model"),
        "{err}"
    );
}

#[test]
fn overrides_apply_in_order_over_the_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("c.json");
    std::fs::write(
        &path,
        r#"{"model": {"gamma": 1.0, "R": 1.0}, "run": {"mode": "markovian"}}"#,
    )
    .unwrap();
    let overrides: Vec<Override> = [
        "model.R=3",
        "run.mode=weak_correlation",
        "model.R=4.5",
        "run.tau_points=11",
    ]
    .iter()
    .map(|s| s.parse().unwrap())
    .collect();
    let c = RunConfig::load(Some(&path), &overrides).unwrap();
    assert_eq!(c.model.r, 4.5);
    assert_eq!(c.run.mode, AmplitudeMode::WeakCorrelation);
    assert_eq!(c.run.tau_points, Some(11));
    assert!("model.R".parse::<Override>().is_err());
    assert!("model..R=1".parse::<Override>().is_err());
}

#[test]
fn syntax_errors_carry_the_position() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("c.json");
    std::fs::write(&path, "{\n  \"model\": {\"gamma\": 1.0,,}\n}").unwrap();
    let err = RunConfig::load(Some(&path), &[]).unwrap_err();
    assert_eq!(err.exit_code(), 2);
    assert!(
        matches!(&err, CliError::Parse { context, .. } if context.contains("line 2")),
        "{err}"
    );
}

#[test]
fn observable_names_accept_dashes() {
    assert_eq!("detuning-scan".parse::<Observable>().unwrap(), Observable::DetuningScan);
    assert_eq!("g3".parse::<Observable>().unwrap(), Observable::G3);
    assert!("g4".parse::<Observable>().is_err());
}

#[test]
fn delay_axis_defaults_scale_with_the_separation() {
    let c = load(small(json!({"model": {"R": 5.0}, "run": {"observable": "g2"}}))).unwrap();
    let t = c.taus();
    assert_eq!(t.len(), 401);
    assert_eq!(t[0], -20.0);
    assert_eq!(t[200], 0.0);
    let c = load(small(json!({"model": {"R": 0.0}, "run": {"observable": "g3"}}))).unwrap();
    let t = c.taus();
    assert_eq!(t.len(), 201);
    assert_eq!(t[200], 2.5);
}

#[test]
fn config_hash_ignores_the_output_directory() {
    let a = load(small(json!({"run": {"output_dir": "a"}}))).unwrap();
    let b = load(small(json!({"run": {"output_dir": "b"}}))).unwrap();
    let c = load(small(json!({"model": {"R": 2.0}}))).unwrap();
    assert_eq!(config_hash(&a), config_hash(&b));
    assert_ne!(config_hash(&a), config_hash(&c));
}

#[test]
fn cache_files_round_trip_and_reject_damage() {
    let dir = tempfile::tempdir().unwrap();
    let cache = Cache::new(dir.path());
    let key = cache::key("column", &json!({"x": 1}));
    let other = cache::key("column", &json!({"x": 2}));
    let data: Vec<C64> = (0..7).map(|i| C64::new(i as f64 / 3.0, -(i as f64).sqrt())).collect();
    assert!(cache.load("column", &key).is_none());
    cache.store("column", &key, &data).unwrap();
    assert_eq!(cache.load("column", &key).unwrap(), data);
    assert!(cache.load("column", &other).is_none());

    let bytes = cache::encode(&key, &data);
    assert!(cache::decode(&bytes, &other).is_none());
    assert!(cache::decode(&bytes[..bytes.len() - 1], &key).is_none());
    let mut bad = bytes.clone();
    bad[0] ^= 1;
    assert!(cache::decode(&bad, &key).is_none());
    let path = cache.path("column", &key).unwrap();
    std::fs::write(&path, b"garbage").unwrap();
    assert!(cache.load("column", &key).is_none());
    assert!(Cache::disabled().load("column", &key).is_none());
}

fn read(path: &Path) -> String {
    std::fs::read_to_string(path).unwrap()
}

#[test]
fn cached_rerun_reproduces_the_cold_run() {
    let dir = tempfile::tempdir().unwrap();
    let c = load(small(json!({"run": {"cache": true, "output_dir": dir.path()}}))).unwrap();
    let cold = wqed_cli::run(&c).unwrap();
    assert_eq!((cold.cache_hits, cold.cache_misses), (0, 1));
    let first = read(&dir.path().join("spectrum.csv"));
    let warm = wqed_cli::run(&c).unwrap();
    assert_eq!((warm.cache_hits, warm.cache_misses), (1, 0));
    assert_eq!(read(&dir.path().join("spectrum.csv")), first);
}

#[test]
fn spectrum_files_have_header_and_metadata() {
    let dir = tempfile::tempdir().unwrap();
    let c = load(small(json!({"run": {"output_dir": dir.path()}}))).unwrap();
    let out = wqed_cli::run(&c).unwrap();
    assert_eq!(out.files.len(), 2);
    let csv = read(&dir.path().join("spectrum.csv"));
    let lines: Vec<&str> = csv.lines().collect();
    assert!(lines[0].starts_with("# wqed "));
    assert_eq!(lines[3], "k,s_inel_1,s_inel_2,s_inel_total");
    assert_eq!(lines.len(), 4 + 801);
    let meta: Value = serde_json::from_str(&read(&dir.path().join("spectrum.meta.json"))).unwrap();
    assert_eq!(meta["observable"], "spectrum");
    assert_eq!(meta["rows"], 801);
    assert_eq!(meta["config_sha256"], config_hash(&c));
    assert!(lines[2].ends_with(&config_hash(&c)));
}

#[test]
fn poles_table_has_six_rows() {
    let dir = tempfile::tempdir().unwrap();
    let c = load(small(
        json!({"model": {"R": 5.0}, "run": {"observable": "poles", "output_dir": dir.path()}}),
    ))
    .unwrap();
    wqed_cli::run(&c).unwrap();
    let csv = read(&dir.path().join("poles.csv"));
    let rows: Vec<&str> = csv.lines().filter(|l| !l.starts_with('#')).skip(1).collect();
    assert_eq!(rows.len(), 6);
    for row in rows {
        let residual: f64 = row.rsplit(',').next().unwrap().parse().unwrap();
        assert!(residual < 1e-8, "{row}");
    }
}

#[test]
fn extinguished_channel_is_left_out_of_g2() {
    let dir = tempfile::tempdir().unwrap();
    let c = load(small(json!({
        "model": {"k0R_over_pi": 0.0},
        "run": {"observable": "g2", "tau_points": 21, "output_dir": dir.path()}
    })))
    .unwrap();
    wqed_cli::run(&c).unwrap();
    let csv = read(&dir.path().join("g2.csv"));
    let header = csv.lines().find(|l| !l.starts_with('#')).unwrap();
    assert_eq!(header, "tau,c2_22");
}

fn wqed(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_wqed")).args(args).output().unwrap()
}

#[test]
fn binary_reports_errors_as_json_with_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("c.json");
    std::fs::write(&path, r#"{"model": {"gamma": 0.0, "R": 1.0}}"#).unwrap();
    let out = wqed(&["poles", "--config", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let err: Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(err["error"], "validation_error");
    assert!(err["violations"][0].as_str().unwrap().starts_with("model.gamma"));

    let out = wqed(&["poles", "--config", dir.path().join("missing.json").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let err: Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(err["error"], "parse_error");

    // A coarse grid cannot close the power balance at a strict tolerance.
    std::fs::write(&path, r#"{"model": {"gamma": 1.0, "R": 1.0}}"#).unwrap();
    let out = wqed(&[
        "spectrum",
        "--config",
        path.to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
        "--set",
        "numerics={\"k_max\": 5, \"n_points\": 101, \"spectrum_points\": 101, \"tolerances\": {\"power\": 1e-12}}",
    ]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
    let err: Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(err["error"], "solver_error");
}

#[test]
fn binary_writes_poles_with_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("c.json");
    std::fs::write(&path, r#"{"model": {"gamma": 1.0, "R": 1.0}}"#).unwrap();
    let out_dir = dir.path().join("out");
    let out = wqed(&[
        "poles",
        "--config",
        path.to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
        "--set",
        "model.R=5",
        "--set",
        "run.branches=[0]",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = read(&out_dir.join("poles.csv"));
    assert!(csv.contains("R=5e0"));
    assert_eq!(csv.lines().filter(|l| !l.starts_with('#')).count(), 1 + 2);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn cache_encoding_is_lossless(values in prop::collection::vec((any::<f64>(), any::<f64>()), 0..40)) {
        let key = cache::key("q", &values.len());
        let data: Vec<C64> = values.iter().map(|&(a, b)| C64::new(a, b)).collect();
        let back = cache::decode(&cache::encode(&key, &data), &key).unwrap();
        prop_assert_eq!(back.len(), data.len());
        for (x, y) in back.iter().zip(&data) {
            prop_assert_eq!(x.re.to_bits(), y.re.to_bits());
            prop_assert_eq!(x.im.to_bits(), y.im.to_bits());
        }
    }

    #[test]
    fn reduced_phase_lies_in_range(phase in -100.0f64..100.0) {
        let c = load(json!({"model": {"gamma": 1.0, "R": 1.0, "k0R_over_pi": phase}})).unwrap();
        prop_assert!((0.0..2.0).contains(&c.model.k0r_over_pi));
    }
}
