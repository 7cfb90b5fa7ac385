use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use hilbert_gp::cli::{Dataset, ModelArtifact};
use hilbert_gp::toy::toy_replica;
use serde_json::Value;
use tempfile::TempDir;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_hilbert-gp"));
    c.env("HILBERT_GP_THREADS", "1");
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

struct Workspace {
    dir: TempDir,
}

impl Workspace {
    fn new() -> Self {
        Workspace { dir: TempDir::new().unwrap() }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn write(&self, name: &str, text: &str) -> PathBuf {
        let path = self.path(name);
        fs::write(&path, text).unwrap();
        path
    }

    fn toy(&self, n: usize) -> PathBuf {
        let t = toy_replica(n, 1).unwrap();
        let mut s = String::from("x,y\n");
        for i in 0..n {
            s += &format!("{:e},{:e}\n", t.x[(i, 0)], t.y[i]);
        }
        self.write("toy.csv", &s)
    }

    fn grid(&self, name: &str, points: usize) -> PathBuf {
        let mut s = String::from("x\n");
        for i in 0..points {
            s += &format!("{}\n", -0.9 + 1.8 * i as f64 / (points - 1) as f64);
        }
        self.write(name, &s)
    }
}

const TOY_CONFIG: &str = r#"{
    "kernel": {"type": "se"},
    "hyperparams": {"components": [{"magnitude": 0.5, "lengthscale": 0.3}], "noise": 0.1},
    "basis": {"m": 32, "extension": 0.1},
    "optimizer": {"max_iters": 100}
}"#;

fn fit(ws: &Workspace, cfg: &Path, data: &Path, model: &str) -> Value {
    let out = ws.path(model);
    let o = run(&["fit", "--config", p(cfg), "--data", p(data), "--out", p(&out)]);
    assert!(o.status.success(), "{}", stderr(&o));
    serde_json::from_slice(&o.stdout).unwrap()
}

#[test]
fn fit_recovers_toy_hyperparameters() {
    let ws = Workspace::new();
    let data = ws.toy(256);
    let cfg = ws.write("cfg.json", TOY_CONFIG);
    let report = fit(&ws, &cfg, &data, "model.json");
    assert_eq!(report["method"], "reduced-rank");
    assert_eq!(report["n"], 256);
    assert_eq!(report["m"], 32);
    let ell = report["theta"]["components"][0]["lengthscale"].as_f64().unwrap();
    let noise = report["theta"]["noise"].as_f64().unwrap();
    assert!((0.07..=0.14).contains(&ell), "{ell}");
    assert!((0.17..=0.23).contains(&noise.sqrt()), "{noise}");
    assert!(report["nlml"].as_f64().unwrap().is_finite());
}

#[test]
fn predictions_match_the_library() {
    let ws = Workspace::new();
    let data = ws.toy(128);
    let cfg = ws.write("cfg.json", TOY_CONFIG);
    fit(&ws, &cfg, &data, "model.json");
    let grid = ws.grid("grid.csv", 41);
    let pred = ws.path("pred.csv");
    let o = run(&["predict", "--model", p(&ws.path("model.json")), "--data", p(&grid), "--out", p(&pred)]);
    assert!(o.status.success(), "{}", stderr(&o));

    let table = Dataset::read_path(&pred).unwrap();
    assert_eq!(table.columns, ["x", "mean", "var_latent", "var_observation"]);
    let artifact = ModelArtifact::read_path(&ws.path("model.json")).unwrap();
    let x = Dataset::read_path(&grid).unwrap().select(&["x".into()]).unwrap();
    let want = artifact.predict(&x).unwrap();
    for i in 0..x.nrows() {
        let row = table.values.row(i);
        assert!((row[1] - want.mean[i]).abs() <= 1e-12 * (1.0 + want.mean[i].abs()));
        assert!((row[2] - want.var_latent[i]).abs() <= 1e-12 * (1.0 + want.var_latent[i]));
        assert!((row[3] - want.var_observation[i]).abs() <= 1e-12 * (1.0 + want.var_observation[i]));
        assert!(row[3] > row[2] && row[2] >= 0.0);
    }
}

#[test]
fn refitting_is_bitwise_deterministic() {
    let ws = Workspace::new();
    let data = ws.toy(96);
    let cfg = ws.write(
        "cfg.json",
        r#"{"kernel": {"type": "matern", "nu": 1.5}, "basis": {"m": 24}, "optimizer": {"restarts": 3, "seed": 5}}"#,
    );
    fit(&ws, &cfg, &data, "a.json");
    fit(&ws, &cfg, &data, "b.json");
    let a: Value = serde_json::from_str(&fs::read_to_string(ws.path("a.json")).unwrap()).unwrap();
    let b: Value = serde_json::from_str(&fs::read_to_string(ws.path("b.json")).unwrap()).unwrap();
    assert_eq!(a["theta"], b["theta"]);
    assert_eq!(a["payload"], b["payload"]);
}

#[test]
fn unsupported_smoothness_exits_with_usage_error() {
    let ws = Workspace::new();
    let data = ws.toy(16);
    let cfg = ws.write("cfg.json", r#"{"kernel": {"type": "matern", "nu": 2.0}}"#);
    let o = run(&["fit", "--config", p(&cfg), "--data", p(&data), "--out", p(&ws.path("m.json"))]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("unsupported kernel"), "{}", stderr(&o));
}

#[test]
fn malformed_csv_reports_position() {
    let ws = Workspace::new();
    let cfg = ws.write("cfg.json", TOY_CONFIG);
    let bad = ws.write("bad.csv", "x,y\n0.1,0.2\n0.3,abc\n");
    let o = run(&["fit", "--config", p(&cfg), "--data", p(&bad), "--out", p(&ws.path("m.json"))]);
    assert_eq!(o.status.code(), Some(2));
    let e = stderr(&o);
    assert!(e.contains("line 3") && e.contains("column 2"), "{e}");

    for (name, text) in [("nan.csv", "x,y\n0.1,NaN\n"), ("dup.csv", "x,x\n0.1,0.2\n"), ("ragged.csv", "x,y\n0.1\n")] {
        let path = ws.write(name, text);
        let o = run(&["fit", "--config", p(&cfg), "--data", p(&path), "--out", p(&ws.path("m.json"))]);
        assert_eq!(o.status.code(), Some(2), "{name}: {}", stderr(&o));
    }
}

#[test]
fn unknown_flags_and_config_fields_are_usage_errors() {
    let ws = Workspace::new();
    assert_eq!(run(&["fit", "--bogus"]).status.code(), Some(2));
    let data = ws.toy(16);
    let cfg = ws.write("cfg.json", r#"{"basis": {"mm": 3}}"#);
    let o = run(&["fit", "--config", p(&cfg), "--data", p(&data), "--out", p(&ws.path("m.json"))]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn out_of_domain_prediction_names_the_row() {
    let ws = Workspace::new();
    let data = ws.toy(64);
    let cfg = ws.write("cfg.json", TOY_CONFIG);
    fit(&ws, &cfg, &data, "model.json");
    let test = ws.write("far.csv", "x\n0.0\n0.5\n5.0\n");
    let o = run(&["predict", "--model", p(&ws.path("model.json")), "--data", p(&test), "--out", p(&ws.path("p.csv"))]);
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("row 2"), "{}", stderr(&o));
}

#[test]
fn model_file_version_is_checked() {
    let ws = Workspace::new();
    let data = ws.toy(32);
    let cfg = ws.write("cfg.json", TOY_CONFIG);
    fit(&ws, &cfg, &data, "model.json");
    let mut v: Value = serde_json::from_str(&fs::read_to_string(ws.path("model.json")).unwrap()).unwrap();
    v["format_version"] = 99.into();
    let model = ws.write("future.json", &v.to_string());
    let grid = ws.grid("grid.csv", 3);
    let o = run(&["predict", "--model", p(&model), "--data", p(&grid), "--out", p(&ws.path("p.csv"))]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("version 99"), "{}", stderr(&o));
}

#[test]
fn cross_validation_compares_methods() {
    let ws = Workspace::new();
    let data = ws.toy(120);
    let cfg = ws.write("cfg.json", TOY_CONFIG);
    let out = ws.path("cv.json");
    let sweep = ws.path("cv.csv");
    let o = run(&[
        "cv",
        "--config",
        p(&cfg),
        "--data",
        p(&data),
        "--k",
        "4",
        "--seed",
        "1",
        "--methods",
        "reduced-rank,full,ssgp",
        "--out",
        p(&out),
        "--sweep",
        p(&sweep),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let table = String::from_utf8_lossy(&o.stdout);
    for m in ["reduced-rank", "full", "ssgp"] {
        assert!(table.contains(m), "{table}");
    }
    let report: Value = serde_json::from_str(&fs::read_to_string(&out).unwrap()).unwrap();
    let rows = report["comparison"].as_array().unwrap();
    assert_eq!(rows.len(), 3);
    for r in rows {
        let smse = r["smse"].as_f64().unwrap();
        assert!(smse > 0.0 && smse < 0.5, "{r}");
    }
    let csv = fs::read_to_string(&sweep).unwrap();
    assert!(csv.starts_with("method,m,seed,fold,smse,msll,seconds_precompute,seconds_train,seconds_predict"));
    assert_eq!(csv.lines().count(), 1 + 3 * 4);
}

#[test]
fn sphere_samples_are_seeded() {
    let ws = Workspace::new();
    let cfg = ws.write(
        "sphere.json",
        r#"{
            "kernel": {"type": "matern", "nu": 2.5},
            "hyperparams": {"components": [{"magnitude": 1.0, "lengthscale": 0.5}], "noise": 0.01},
            "basis": {"m": 64, "domain": {"type": "sphere"}},
            "sample": {"draws": 2}
        }"#,
    );
    let mut s = String::from("lat,lon\n");
    for i in 0..9 {
        for j in 0..12 {
            s += &format!("{},{}\n", -1.4 + 0.35 * i as f64, -3.0 + 0.5 * j as f64);
        }
    }
    let grid = ws.write("sphere_grid.csv", &s);
    let mut outputs = Vec::new();
    for (name, seed) in [("a.csv", "7"), ("b.csv", "7"), ("c.csv", "8")] {
        let out = ws.path(name);
        let o = run(&["sample", "--config", p(&cfg), "--grid", p(&grid), "--seed", seed, "--out", p(&out)]);
        assert!(o.status.success(), "{}", stderr(&o));
        outputs.push(fs::read_to_string(&out).unwrap());
    }
    assert_eq!(outputs[0], outputs[1]);
    assert_ne!(outputs[0], outputs[2]);
    let table = Dataset::read_path(&ws.path("a.csv")).unwrap();
    assert_eq!(table.columns, ["lat", "lon", "draw_1", "draw_2"]);
    assert_eq!(table.nrows(), 108);
}

#[test]
fn diagnose_reports_small_tail_on_toy_problem() {
    let ws = Workspace::new();
    let cfg = ws.write(
        "diag.json",
        r#"{
            "kernel": {"type": "se"},
            "hyperparams": {"components": [{"magnitude": 1.0, "lengthscale": 0.1}], "noise": 0.04},
            "basis": {"m": 32, "domain": {"type": "hyperrectangle", "center": [0.0], "half_widths": [1.0]}},
            "diagnose": {"m_values": [16, 32], "n_values": [10, 1000]}
        }"#,
    );
    let out = ws.path("diag.json.out");
    let o = run(&["diagnose", "--config", p(&cfg), "--out", p(&out)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let r: Value = serde_json::from_str(&fs::read_to_string(&out).unwrap()).unwrap();
    let tails = r["tails"].as_array().unwrap();
    assert_eq!(tails.len(), 2);
    let t16 = tails[0]["tail"].as_f64().unwrap();
    let t32 = tails[1]["tail"].as_f64().unwrap();
    assert!(t32 < 1e-6 && t32 < t16, "{t16} {t32}");
    assert_eq!(r["sup_error"].as_array().unwrap().len(), 2);
    assert_eq!(r["learning_curve"].as_array().unwrap().len(), 4);
}

#[test]
fn help_and_version_succeed() {
    assert_eq!(run(&["--help"]).status.code(), Some(0));
    assert_eq!(run(&["--version"]).status.code(), Some(0));
    assert_eq!(run(&[]).status.code(), Some(2));
}
