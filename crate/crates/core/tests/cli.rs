//! The `voltcraft` binary end to end on a short synthetic window.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use voltcraft::dataset::{read_rows, write_rows, BaselineRow, CompareRow, InferRow, Subset};
use voltcraft::trainer::{init_policy, RunManifest};
use voltcraft::{bundled, load_timeseries, LossTrace, TrainConfig};

const NET: &str = "bundled:surrogate47";

fn voltcraft(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_voltcraft"))
        .args(args)
        .env_remove("VOLTCRAFT_SEED")
        .output()
        .unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = voltcraft(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Two hours around midday, 60 intervals.
fn short_day(dir: &Path) -> PathBuf {
    let profile = dir.join("profile.toml");
    std::fs::write(&profile, "n_intervals = 60\ninterval_s = 120\nstart_s = 39600\n").unwrap();
    let data = dir.join("day.csv");
    ok(&["synth", "--network", NET, "--out", s(&data), "--seed", "3", "--profile", s(&profile)]);
    data
}

fn quick_config(dir: &Path) -> PathBuf {
    let cfg = dir.join("train.toml");
    std::fs::write(&cfg, "epochs = 3\nbatch_size = 10\nhidden = [8, 8]\nseed = 5\n").unwrap();
    cfg
}

#[test]
fn validate_reports_and_fails_with_error_record() {
    let text = ok(&["validate", "--network", NET]);
    let v: serde_json::Value = serde_json::from_str(&text).unwrap();
    assert_eq!(v["ok"], true);
    assert_eq!(v["lines"], 46);

    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, r#"{"name": "x", "buses": [{"id": 0}, {"id": 1, "parent": 1, "r_pu": 0.1, "x_pu": 0.1}]}"#).unwrap();
    let out = voltcraft(&["validate", "--network", s(&bad)]);
    assert_eq!(out.status.code(), Some(1));
    let rec: serde_json::Value = serde_json::from_slice(&out.stderr).unwrap();
    assert!(rec["kind"].is_string() && rec["message"].is_string());

    let out = voltcraft(&["validate"]);
    assert_eq!(out.status.code(), Some(2));
    let rec: serde_json::Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(rec["kind"], "UsageError");
}

#[test]
fn timeseries_and_result_csvs_round_trip_bit_exactly() {
    let dir = tempfile::tempdir().unwrap();
    let data = short_day(dir.path());
    let net = bundled::surrogate_47();
    let ds = load_timeseries(&data, &net, 0.8).unwrap();
    let again = dir.path().join("again.csv");
    ds.write_csv(&net, &again).unwrap();
    assert_eq!(std::fs::read(&data).unwrap(), std::fs::read(&again).unwrap());

    let base = dir.path().join("baseline.csv");
    ok(&["baseline", "--network", NET, "--data", s(&data), "--out", s(&base)]);
    let rows: Vec<BaselineRow> = read_rows(&base).unwrap();
    assert_eq!(rows.len(), 60);
    assert!(rows.iter().all(|r| r.exact && r.max_cone_slack <= 1e-6));
    let copy = dir.path().join("baseline2.csv");
    write_rows(&copy, &rows).unwrap();
    assert_eq!(std::fs::read(&base).unwrap(), std::fs::read(&copy).unwrap());
}

#[test]
fn compare_on_untrained_model_has_positive_gap() {
    let dir = tempfile::tempdir().unwrap();
    let data = short_day(dir.path());
    let net = bundled::surrogate_47();
    let ds = load_timeseries(&data, &net, 0.8).unwrap();
    let model = init_policy(&net, &ds.subset(Subset::Train), &TrainConfig::default()).unwrap();
    let mpath = dir.path().join("untrained.json");
    model.save(&mpath).unwrap();

    let cmp = dir.path().join("cmp.csv");
    let text = ok(&["compare", "--network", NET, "--data", s(&data), "--model", s(&mpath), "--out", s(&cmp)]);
    let rows: Vec<CompareRow> = read_rows(&cmp).unwrap();
    assert_eq!(rows.len(), 18);
    let mean_gap = rows.iter().map(|r| r.gap).sum::<f64>() / rows.len() as f64;
    assert!(mean_gap > 0.0, "{mean_gap}");
    assert!(rows.iter().all(|r| r.gap >= -1e-6 * r.optimal_loss));
    let summary: serde_json::Value = serde_json::from_str(&text).unwrap();
    assert!(summary["relative_gap"].as_f64().unwrap() > 0.0);

    let inf = dir.path().join("inf.csv");
    ok(&["infer", "--network", NET, "--data", s(&data), "--model", s(&mpath), "--out", s(&inf), "--deterministic"]);
    let rows: Vec<InferRow> = read_rows(&inf).unwrap();
    let (lo, hi) = net.action_box();
    for r in &rows {
        assert!(r.q_g.iter().zip(lo.iter().zip(&hi)).all(|(q, (a, b))| a <= q && q <= b));
    }

    let bench = ok(&["bench", "--network", NET, "--data", s(&data), "--model", s(&mpath), "--min-intervals", "20"]);
    assert!(bench.contains("median ratio"));
}

#[test]
fn train_reruns_bit_identically_from_its_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let data = short_day(dir.path());
    let cfg = quick_config(dir.path());
    let m1 = dir.path().join("m1.json");
    ok(&["train", "--network", NET, "--data", s(&data), "--config", s(&cfg), "--out", s(&m1), "--quiet", "--with-baseline"]);
    let manifest_path = dir.path().join("m1.json.manifest.json");
    let manifest = RunManifest::from_json(&std::fs::read_to_string(&manifest_path).unwrap()).unwrap();
    assert_eq!(manifest.seed, 5);
    assert_eq!(manifest.n_train, 42);

    let trace = LossTrace::read_csv(dir.path().join("m1.json.trace.csv"), 200).unwrap();
    assert_eq!(trace.len(), 3 * 42);
    assert!(trace.baseline_opt.iter().all(Option::is_some));

    // The env override must not leak into a manifest rerun.
    let m2 = dir.path().join("m2.json");
    let out = Command::new(env!("CARGO_BIN_EXE_voltcraft"))
        .args(["train", "--manifest", s(&manifest_path), "--out", s(&m2), "--quiet"])
        .env("VOLTCRAFT_SEED", "99")
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(std::fs::read(&m1).unwrap(), std::fs::read(&m2).unwrap());

    let m3 = dir.path().join("m3.json");
    let out = Command::new(env!("CARGO_BIN_EXE_voltcraft"))
        .args(["train", "--network", NET, "--data", s(&data), "--config", s(&cfg), "--out", s(&m3), "--quiet"])
        .env("VOLTCRAFT_SEED", "99")
        .output()
        .unwrap();
    assert!(out.status.success());
    let m3_manifest = std::fs::read_to_string(dir.path().join("m3.json.manifest.json")).unwrap();
    assert_eq!(RunManifest::from_json(&m3_manifest).unwrap().seed, 99);
    assert_ne!(std::fs::read(&m1).unwrap(), std::fs::read(&m3).unwrap());
}

#[test]
fn manifest_rerun_rejects_changed_data() {
    let dir = tempfile::tempdir().unwrap();
    let data = short_day(dir.path());
    let cfg = quick_config(dir.path());
    let m1 = dir.path().join("m.json");
    ok(&["train", "--network", NET, "--data", s(&data), "--config", s(&cfg), "--out", s(&m1), "--quiet"]);
    let text = std::fs::read_to_string(&data).unwrap();
    let mut lines: Vec<String> = text.lines().map(String::from).collect();
    let mut fields: Vec<&str> = lines[1].split(',').collect();
    fields[2] = "0.0";
    lines[1] = fields.join(",");
    std::fs::write(&data, lines.join("\n") + "\n").unwrap();
    let out = voltcraft(&["train", "--manifest", s(&dir.path().join("m.json.manifest.json")), "--out", s(&m1)]);
    assert_eq!(out.status.code(), Some(1));
    let rec: serde_json::Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(rec["kind"], "InvalidParameter");
    assert!(rec["message"].as_str().unwrap().contains("manifest"));
}

#[test]
fn pf_prints_structured_solution() {
    let text = ok(&["pf", "--network", "bundled:six_bus", "--state", "nominal"]);
    let v: serde_json::Value = serde_json::from_str(&text).unwrap();
    assert!(v["loss"].as_f64().unwrap() > 0.0);
    assert_eq!(v["P"].as_array().unwrap().len(), 5);
}
