use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_bayesmi"))
}

fn fixture() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../core/tests/fixtures/mini.conllu")
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn read_rows(path: &Path) -> Vec<csv::StringRecord> {
    let mut reader = csv::Reader::from_path(path).unwrap();
    let header = reader.headers().unwrap().clone();
    assert_eq!(
        header.iter().collect::<Vec<_>>(),
        ["repr", "task", "n", "trial", "layers", "hidden", "dropout", "seed", "bayesian_mi_bits"]
    );
    reader.records().map(Result::unwrap).collect()
}

fn gen_random(dir: &Path, name: &str, dim: &str, seed: &str) -> PathBuf {
    let prefix = dir.join(name);
    let fixture = fixture();
    let o = run(&[
        "gen-random",
        "--conllu",
        fixture.to_str().unwrap(),
        "--dim",
        dim,
        "--seed",
        seed,
        "--out",
        prefix.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    prefix.with_extension("bmie")
}

#[test]
fn example_two_classes_in_text() {
    let o = run(&["example", "--classes", "2"]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    assert!(text.contains("-0.08496"), "{text}");
    assert!(text.contains("+0.00000"), "{text}");
}

#[test]
fn example_json_has_the_three_quantities() {
    let o = run(&["example", "--classes", "4", "--format", "json"]);
    assert_eq!(o.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["classes"], 4);
    for key in ["mi", "belief_mi", "bayesian_mi_at_d0"] {
        assert!(v[key].is_f64(), "{key} missing in {v}");
    }
    assert_eq!(v["mi"].as_f64().unwrap(), 0.0);
}

#[test]
fn example_rejects_one_class() {
    assert_eq!(run(&["example", "--classes", "1"]).status.code(), Some(2));
}

#[test]
fn theorems_subset_passes_and_writes_report() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("report.json");
    let o = run(&["theorems", "--only", "t2,t1", "--seed", "3", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert_eq!(stdout(&o).lines().count(), 2);
    let report: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(report["all_passed"], true);
    assert_eq!(report["reports"].as_array().unwrap().len(), 2);
    assert!(dir.path().join("report.json.manifest.json").exists());
}

#[test]
fn theorems_full_run_passes() {
    let o = run(&["theorems"]);
    assert_eq!(o.status.code(), Some(0), "{}\n{}", stdout(&o), stderr(&o));
    assert!(stdout(&o).lines().all(|l| l.contains("PASS")));
}

#[test]
fn theorems_failure_prints_violation_and_exits_one() {
    let o = run(&["theorems", "--only", "t2", "--tolerance-scale", "0"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("violation: {"), "{}", stderr(&o));
}

#[test]
fn theorems_reject_unknown_ids() {
    assert_eq!(run(&["theorems", "--only", "t9"]).status.code(), Some(2));
}

#[test]
fn synthetic_noise_curve_is_near_zero() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("noise.csv");
    let spec = r#"{"kind":"noise","dim":2,"n_labels":2,"noise":1.0,"seed":3,"test_size":5000}"#;
    let o = run(&[
        "curve", "--spec", spec, "--size", "3000", "--points", "2", "--trials", "2", "--max-hidden", "32", "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let rows = read_rows(&out);
    assert_eq!(rows.len(), 4);
    let best = rows
        .iter()
        .filter(|r| &r[2] == "3000")
        .map(|r| r[8].parse::<f64>().unwrap())
        .fold(f64::NEG_INFINITY, f64::max);
    assert!(best.abs() < 0.02, "{best}");
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("noise.csv.manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["command"], "curve");
    assert_eq!(manifest["datasets"].as_object().unwrap().len(), 1);
}

#[test]
fn spec_file_and_sizes() {
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("spec.json");
    std::fs::write(&spec, r#"{"kind":"informative","dim":4,"n_labels":3,"noise":0.6,"seed":1,"test_size":200}"#).unwrap();
    let out = dir.path().join("c.csv");
    let o = run(&[
        "curve", "--spec", spec.to_str().unwrap(), "--size", "1000", "--points", "4", "--trials", "1", "--max-hidden",
        "32", "--max-epochs", "20", "--out", out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let sizes: Vec<String> = read_rows(&out).iter().map(|r| r[2].to_string()).collect();
    assert_eq!(sizes, ["1", "10", "100", "1000"]);
}

#[test]
fn two_embedding_files_share_architectures() {
    let dir = tempfile::tempdir().unwrap();
    let a = gen_random(dir.path(), "a", "8", "1");
    let b = gen_random(dir.path(), "b", "16", "2");
    let out = dir.path().join("pos.csv");
    let fixture = fixture();
    let o = run(&[
        "curve",
        "--task",
        "pos",
        "--conllu",
        fixture.to_str().unwrap(),
        "--embeddings",
        a.to_str().unwrap(),
        b.to_str().unwrap(),
        "--points",
        "3",
        "--trials",
        "2",
        "--max-hidden",
        "32",
        "--max-epochs",
        "30",
        "--test-fraction",
        "0.5",
        "--workers",
        "2",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let rows = read_rows(&out);
    let (ra, rb): (Vec<_>, Vec<_>) = rows.iter().partition(|r| &r[0] == "a");
    assert_eq!(ra.len(), 6);
    assert_eq!(ra.len(), rb.len());
    for (x, y) in ra.iter().zip(&rb) {
        // n, trial, layers, hidden, dropout and seed are paired
        assert_eq!(x.iter().skip(2).take(6).collect::<Vec<_>>(), y.iter().skip(2).take(6).collect::<Vec<_>>());
        assert_eq!(&x[1], "pos");
    }
}

#[test]
fn misaligned_sidecar_exits_one_naming_files() {
    let dir = tempfile::tempdir().unwrap();
    let a = gen_random(dir.path(), "a", "8", "1");
    let side = a.with_extension("jsonl");
    let text = std::fs::read_to_string(&side).unwrap().replace("\"vec\":0", "\"vec\":99");
    std::fs::write(&side, text).unwrap();
    let fixture = fixture();
    let o = run(&["curve", "--task", "pos", "--conllu", fixture.to_str().unwrap(), "--embeddings", a.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    let err = stderr(&o);
    assert!(err.contains("a.bmie") && err.contains("a.jsonl") && err.contains("mini.conllu"), "{err}");
}

#[test]
fn curve_input_modes_are_exclusive() {
    let fixture = fixture();
    let both = run(&["curve", "--spec", "{}", "--conllu", fixture.to_str().unwrap(), "--embeddings", "x.bmie"]);
    assert_eq!(both.status.code(), Some(2));
    assert_eq!(run(&["curve", "--task", "pos"]).status.code(), Some(2));
    assert_eq!(run(&["curve", "--task", "deprel", "--spec", "{}"]).status.code(), Some(2));
    assert_eq!(run(&["curve", "--spec", "{\"kind\":\"noise\"}"]).status.code(), Some(2));
}

#[test]
fn gen_random_is_deterministic_and_loadable() {
    let dir = tempfile::tempdir().unwrap();
    let a = gen_random(dir.path(), "a", "12", "9");
    let b = gen_random(dir.path(), "b", "12", "9");
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    assert_eq!(
        std::fs::read(a.with_extension("jsonl")).unwrap(),
        std::fs::read(b.with_extension("jsonl")).unwrap()
    );
    let store = bayesmi::data::read_embeddings(&a).unwrap();
    assert_eq!(store.dim(), 12);
    let records = bayesmi::data::read_conllu(fixture()).unwrap();
    let rows = bayesmi::data::read_sidecar(a.with_extension("jsonl")).unwrap();
    assert_eq!(bayesmi::data::align(&records, &rows, &store).unwrap().len(), 9);

    let c = gen_random(dir.path(), "c", "12", "10");
    assert_ne!(std::fs::read(&a).unwrap(), std::fs::read(&c).unwrap());
}

#[test]
fn gen_random_rejects_zero_width() {
    let dir = tempfile::tempdir().unwrap();
    let fixture = fixture();
    let prefix = dir.path().join("z");
    let o = run(&["gen-random", "--conllu", fixture.to_str().unwrap(), "--dim", "0", "--out", prefix.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(!prefix.with_extension("bmie").exists());
}
