use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_kan-dfm"));
    c.env_remove("KAN_DFM_RULES");
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("spawn kan-dfm")
}

fn ok(args: &[&str]) -> Output {
    let out = run(args);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn file_digest(p: &Path) -> Vec<u8> {
    std::fs::read(p).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn generate_is_balanced_and_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    ok(&["generate", "--scenario", "drilling", "--n", "1000", "--seed", "7", "--out", s(&a)]);
    ok(&["generate", "--scenario", "drilling", "--n", "1000", "--seed", "7", "--out", s(&b)]);
    assert_eq!(file_digest(&a), file_digest(&b));
    let text = std::fs::read_to_string(&a).unwrap();
    let rows: Vec<&str> = text.lines().skip(1).collect();
    assert_eq!(rows.len(), 1000);
    let ones = rows.iter().filter(|r| r.ends_with(",1")).count();
    assert_eq!(ones, 500);
    assert!(dir.path().join("a.manifest.json").exists());
}

#[test]
fn missing_scenario_is_a_usage_error() {
    let out = run(&["generate", "--n", "10"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("--scenario"));
}

#[test]
fn corrupt_csv_names_the_line() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("d.csv");
    ok(&["generate", "--scenario", "drilling", "--n", "20", "--out", s(&data)]);
    let text = std::fs::read_to_string(&data).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    let bad = format!("{}\n{}\n{}\n", lines[0], lines[1], "1,2,x,4,5,6,7,0,0,0,0,0,0,0,0,1");
    std::fs::write(&data, bad).unwrap();
    let out = run(&["train", "--data", s(&data), "--out", s(&dir.path().join("m.json"))]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 3"), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn train_then_inspect_the_model() {
    let dir = tempfile::tempdir().unwrap();
    let p = |n: &str| dir.path().join(n);
    ok(&["generate", "--scenario", "drilling", "--n", "600", "--seed", "3", "--out", s(&p("d.csv"))]);
    let train = ok(&[
        "train", "--data", s(&p("d.csv")), "--arch", "8,2", "--grid", "5", "--k", "2", "--optimizer", "adam",
        "--max-steps", "5", "--out", s(&p("m.json")), "--trace", s(&p("trace.csv")),
    ]);
    let report: serde_json::Value = serde_json::from_slice(&train.stdout).unwrap();
    assert!(report["auc"].as_f64().unwrap() > 0.5);
    let trace = std::fs::read_to_string(p("trace.csv")).unwrap();
    assert!(trace.starts_with("step,split,loss,auc,f1,accuracy,precision,recall,lr"));
    assert!(p("m.background.csv").exists());

    let eval = ok(&["eval", "--model", s(&p("m.json")), "--data", s(&p("d.csv"))]);
    let m: serde_json::Value = serde_json::from_slice(&eval.stdout).unwrap();
    for key in ["auc", "f1", "accuracy", "precision", "recall", "log_loss"] {
        assert!(m[key].is_number(), "{key}");
    }

    let design = serde_json::json!({"scenario_id": "drilling", "params": {
        "B1": 100.0, "B2": 60.0, "B3": 40.0, "H1": 8.0, "H2": 20.0, "H3": 50.0, "H4": 30.0,
        "H1_UT": 0.1, "H1_LT": -0.1, "H2_UT": 0.1, "H2_LT": -0.1,
        "H3_UT": 0.1, "H3_LT": -0.1, "H4_UT": 0.1, "H4_LT": -0.1}});
    std::fs::write(p("design.json"), design.to_string()).unwrap();
    ok(&["explain", "--model", s(&p("m.json")), "--input", s(&p("design.json")), "--budget", "60", "--out", s(&p("a1.json"))]);
    ok(&["explain", "--model", s(&p("m.json")), "--input", s(&p("design.json")), "--budget", "60", "--out", s(&p("a2.json"))]);
    assert_eq!(file_digest(&p("a1.json")), file_digest(&p("a2.json")));
    let a: serde_json::Value = serde_json::from_slice(&std::fs::read(p("a1.json")).unwrap()).unwrap();
    assert!(a["efficiency_residual"].as_f64().unwrap() < 1e-9);
    let f = &a["features"][0];
    for key in ["feature", "value_mm", "contribution", "rank"] {
        assert!(!f[key].is_null(), "{key}");
    }

    ok(&["splines", "--model", s(&p("m.json")), "--points", "11", "--out", s(&p("sp.csv"))]);
    let sp = std::fs::read_to_string(p("sp.csv")).unwrap();
    assert!(sp.starts_with("layer,in_idx,out_idx,x,phi\n"));
    // 15 x 8 + 8 x 2 + 2 x 1 edges, 11 points each
    assert_eq!(sp.lines().count(), 1 + (15 * 8 + 8 * 2 + 2) * 11);

    ok(&["latent", "--model", s(&p("m.json")), "--data", s(&p("d.csv")), "--out", s(&p("lat.csv"))]);
    let lat = std::fs::read_to_string(p("lat.csv")).unwrap();
    assert!(lat.starts_with("u,v,true_label,pred_label,prob\n"));
    assert_eq!(lat.lines().count(), 601);
}

#[test]
fn curve_gridsearch_and_bench_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let p = |n: &str| dir.path().join(n);
    ok(&["generate", "--scenario", "drilling", "--n", "400", "--seed", "5", "--out", s(&p("d.csv"))]);
    ok(&["curve", "--data", s(&p("d.csv")), "--sizes", "100,200", "--optimizer", "adam", "--max-steps", "3", "--out", s(&p("c.csv"))]);
    let c = std::fs::read_to_string(p("c.csv")).unwrap();
    assert_eq!(c.lines().count(), 3);
    let hashes: Vec<&str> = c.lines().skip(1).map(|l| l.rsplit(',').next().unwrap()).collect();
    assert_eq!(hashes[0], hashes[1]);

    ok(&[
        "gridsearch", "--data", s(&p("d.csv")), "--archs", "4,2;8,2", "--grids", "3", "--ks", "2,3",
        "--optimizers", "adam", "--folds", "3", "--max-steps", "2", "--out", s(&p("g.csv")),
    ]);
    let g = std::fs::read_to_string(p("g.csv")).unwrap();
    assert_eq!(g.lines().count(), 5);
    assert!(g.lines().nth(1).unwrap().starts_with("1,"));

    ok(&["bench", "--data", s(&p("d.csv")), "--out", s(&p("b.csv"))]);
    let b = std::fs::read_to_string(p("b.csv")).unwrap();
    let models: Vec<&str> = b.lines().skip(1).map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(&models[..3], &["KAN", "MLP", "LR"]);
    assert!(b.contains("not implemented"));
}

#[test]
fn rules_env_overrides_flag() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin()
        .env("KAN_DFM_RULES", dir.path().join("missing.json"))
        .args(["generate", "--scenario", "drilling", "--n", "10", "--out"])
        .arg(dir.path().join("d.csv"))
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("missing.json"));
}
