use std::path::{Path, PathBuf};
use std::process::Command;

use serde_json::{json, Value};

use sdsvar::model::LagMode;
use sdsvar::simulate::reference_spec;

fn sdvar(cmd: &str, config: &Path, seed: u64, out: &Path) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_sdvar"))
        .args([cmd, "--config"])
        .arg(config)
        .args(["--seed", &seed.to_string(), "--out"])
        .arg(out)
        .args(["--workers", "2"])
        .output()
        .unwrap()
}

fn write_config(dir: &Path, name: &str, v: &Value) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, serde_json::to_vec_pretty(v).unwrap()).unwrap();
    p
}

fn ok(o: &std::process::Output) {
    assert!(o.status.success(), "stderr: {}", String::from_utf8_lossy(&o.stderr));
}

fn manifest(dir: &Path) -> Value {
    serde_json::from_slice(&std::fs::read(dir.join("manifest.json")).unwrap()).unwrap()
}

fn simulated(dir: &Path, t_len: usize) -> PathBuf {
    let cfg = write_config(dir, "sim.json", &json!({"version": 1, "dgp": {"source": "preset", "name": "score_driven", "t_len": t_len}}));
    let out = dir.join("sim");
    ok(&sdvar("simulate", &cfg, 42, &out));
    out.join("y.csv")
}

#[test]
fn simulate_is_byte_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "sim.json", &json!({"version": 1, "dgp": {"source": "preset", "name": "score_driven", "t_len": 200}}));
    let (a, b, c) = (dir.path().join("a"), dir.path().join("b"), dir.path().join("c"));
    ok(&sdvar("simulate", &cfg, 7, &a));
    ok(&sdvar("simulate", &cfg, 7, &b));
    ok(&sdvar("simulate", &cfg, 8, &c));
    let (ma, mb, mc) = (manifest(&a), manifest(&b), manifest(&c));
    assert_eq!(ma["outputs"], mb["outputs"]);
    assert_ne!(ma["outputs"], mc["outputs"]);
    assert_eq!(std::fs::read(a.join("y.csv")).unwrap(), std::fs::read(b.join("y.csv")).unwrap());
    let y = std::fs::read_to_string(a.join("y.csv")).unwrap();
    assert_eq!(y.lines().next().unwrap(), "t,y1,y2,y3");
    assert_eq!(y.lines().count(), 201);
    let truth: Value = serde_json::from_slice(&std::fs::read(a.join("truth.json")).unwrap()).unwrap();
    assert_eq!(truth["theta_true"].as_array().unwrap().len(), 200);
    assert_eq!(truth["theta_labels"][0], "S11");
}

#[test]
fn estimate_filter_irf_chain() {
    let dir = tempfile::tempdir().unwrap();
    let y = simulated(dir.path(), 400);
    let spec = serde_json::to_value(reference_spec(LagMode::Plain { p: 2 })).unwrap();
    let est_cfg = write_config(
        dir.path(),
        "est.json",
        &json!({
            "version": 1,
            "model": spec,
            "data": {"path": y, "center": false},
            "statics": {"source": "integrated", "restriction": "by_matrix", "alpha": [0.005, 0.005, 0.0005, 0.0005]},
            "init": {"source": "ols", "window": 400},
            "estimate": {"starts": 1, "max_evals": 200}
        }),
    );
    let est = dir.path().join("est");
    ok(&sdvar("estimate", &est_cfg, 1, &est));
    let report = std::fs::read_to_string(est.join("estimate.txt")).unwrap();
    let header = report.lines().next().unwrap();
    for col in ["value", "robust s.e.", "t-stat"] {
        assert!(header.contains(col), "{header}");
    }
    let file: Value = serde_json::from_slice(&std::fs::read(est.join("estimate.json")).unwrap()).unwrap();
    assert_eq!(file["result"]["names"].as_array().unwrap().len(), 4);

    let filt_cfg = write_config(
        dir.path(),
        "filt.json",
        &json!({
            "version": 1,
            "data": {"path": y, "center": false},
            "statics": {"source": "estimate", "path": est.join("estimate.json")},
            "filter": {"band_draws": 12, "smoother": true}
        }),
    );
    let filt = dir.path().join("filt");
    ok(&sdvar("filter", &filt_cfg, 3, &filt));
    let csv = std::fs::read_to_string(filt.join("filtered.csv")).unwrap();
    let header: Vec<&str> = csv.lines().next().unwrap().split(',').collect();
    assert_eq!(&header[..3], ["t", "date", "S11"]);
    assert_eq!(*header.last().unwrap(), "loglik");
    assert_eq!(csv.lines().count(), 1 + 398);
    assert!(filt.join("smoothed.csv").exists() && filt.join("bands.csv").exists());

    let irf_cfg = write_config(
        dir.path(),
        "irf.json",
        &json!({
            "version": 1,
            "data": {"path": y, "center": false},
            "statics": {"source": "estimate", "path": est.join("estimate.json")},
            "irf": {"horizon": 60, "draws": 100, "repetitions": 3}
        }),
    );
    let out = dir.path().join("irf");
    ok(&sdvar("irf", &irf_cfg, 5, &out));
    let csv = std::fs::read_to_string(out.join("irf.csv")).unwrap();
    assert_eq!(csv.lines().next().unwrap(), "i,j,k,response,halfwidth");
    assert_eq!(csv.lines().count(), 1 + 9 * 61);
    let m = manifest(&out);
    assert_eq!(m["command"], "irf");
    assert_eq!(m["inputs"].as_array().unwrap().len(), 2);
}

#[test]
fn mc_study_writes_bands() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "mc.json",
        &json!({
            "version": 1,
            "dgp": {"source": "preset", "name": "score_driven", "t_len": 150},
            "mc": {"replications": 3, "components": ["S11", "A12"], "smoother": false}
        }),
    );
    let out = dir.path().join("mc");
    ok(&sdvar("mc-study", &cfg, 2, &out));
    let mc: Value = serde_json::from_slice(&std::fs::read(out.join("mc.json")).unwrap()).unwrap();
    assert_eq!(mc["replications"], 3);
    assert_eq!(mc["coverage"].as_array().unwrap().len(), 2);
    let bands = std::fs::read_to_string(out.join("mc_bands.csv")).unwrap();
    assert_eq!(bands.lines().count(), 1 + 2 * 2 * 148);
}

#[test]
fn config_errors_point_into_the_document() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "bad.json", &json!({"version": 1, "dgp": {"source": "preset", "name": "score_driven", "t_len": "long"}}));
    let o = sdvar("simulate", &cfg, 0, &dir.path().join("x"));
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("/dgp/t_len"), "{err}");

    let cfg = write_config(dir.path(), "nodata.json", &json!({"version": 1}));
    let o = sdvar("filter", &cfg, 0, &dir.path().join("y"));
    assert!(String::from_utf8_lossy(&o.stderr).contains("missing `data`"));
}

#[test]
fn ingest_errors_name_the_row() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("d.csv");
    std::fs::write(&data, "date,a,b,c\n2000-01,1,2,3\n2000-02,1,,3\n").unwrap();
    let spec = serde_json::to_value(reference_spec(LagMode::Plain { p: 1 })).unwrap();
    let cfg = write_config(
        dir.path(),
        "f.json",
        &json!({"version": 1, "model": spec, "data": {"path": "d.csv"}, "statics": {"source": "frozen"}}),
    );
    let o = sdvar("filter", &cfg, 0, &dir.path().join("out"));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("row 3") && err.contains("`b`"), "{err}");
}
