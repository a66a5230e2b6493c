use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

const ISHIGAMI_S1: f64 = 0.3139;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_sensikit"))
}

fn run(dir: &Path, args: &[&str]) -> Output {
    bin().current_dir(dir).args(args).output().expect("spawn sensikit")
}

fn ok(dir: &Path, args: &[&str]) -> Output {
    let out = run(dir, args);
    assert!(
        out.status.success(),
        "sensikit {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn code(dir: &Path, args: &[&str]) -> i32 {
    run(dir, args).status.code().expect("exit code")
}

fn data_rows(path: &Path) -> usize {
    std::fs::read_to_string(path).unwrap().lines().count() - 1
}

fn ishigami_factors(dir: &Path) -> PathBuf {
    let path = dir.join("ishigami.csv");
    let pi = std::f64::consts::PI;
    let mut text = String::from("name,min,max\n");
    for i in 1..=3 {
        text.push_str(&format!("x{i},{},{}\n", -pi, pi));
    }
    std::fs::write(&path, text).unwrap();
    path
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn design_row_counts() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, &["design", "morris", "--uniform", "140", "-r", "25", "-o", "m.csv"]);
    assert_eq!(data_rows(&d.join("m.csv")), 3525);
    assert!(d.join("m.csv.meta.json").exists());
    ok(d, &["design", "sobol", "--uniform", "10", "-n", "1000", "--first-and-total-only", "-o", "s.csv"]);
    assert_eq!(data_rows(&d.join("s.csv")), 12_000);
    ok(d, &["design", "sobol", "--uniform", "23", "-n", "4000", "--second-order", "-o", "s2.csv"]);
    assert_eq!(data_rows(&d.join("s2.csv")), 192_000);
}

#[test]
fn dash_writes_to_stdout() {
    let dir = tempfile::tempdir().unwrap();
    let out = ok(dir.path(), &["design", "morris", "--uniform", "3", "-r", "2", "-o", "-"]);
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.starts_with("run_id,x1,x2,x3"));
    assert_eq!(text.lines().count(), 1 + 2 * 4);
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    // validation
    assert_eq!(code(d, &["design", "morris", "--uniform", "3", "-p", "3", "-o", "x.csv"]), 2);
    assert_eq!(code(d, &["run", "--design", "missing.csv", "--model", "builtin:ishigami", "-o", "e.csv"]), 2);
    // budget
    assert_eq!(code(d, &["design", "morris", "--uniform", "10", "-r", "10", "--max-runs", "50", "-o", "x.csv"]), 3);
    assert!(!d.join("x.csv").exists());

    // evaluations from a different design
    ok(d, &["design", "morris", "--uniform", "3", "-r", "4", "--seed", "1", "-o", "a.csv"]);
    ok(d, &["design", "morris", "--uniform", "3", "-r", "4", "--seed", "2", "-o", "b.csv"]);
    ok(d, &["run", "--design", "a.csv", "--model", "builtin:linear:1,2,3", "-o", "ea.csv"]);
    assert_eq!(code(d, &["analyze", "ee", "--design", "b.csv", "--evaluations", "ea.csv", "-o", "ee.csv"]), 4);

    // failed rows: the model emits NaN when x1 > 0.5
    let script = d.join("model.sh");
    std::fs::write(
        &script,
        "awk -F, 'NR==1 {print \"run_id,y\"; next} { if ($2 > 0.5) print $1\",nan\"; else print $1\",\"$2 }' \"$1\" > \"$2\"\n",
    )
    .unwrap();
    let model = format!("exec:sh {}", script.display());
    assert_eq!(code(d, &["run", "--design", "a.csv", "--model", &model, "-o", "ef.csv"]), 5);
    let text = std::fs::read_to_string(d.join("ef.csv")).unwrap();
    assert!(text.contains("failed"));

    // empty selection
    ok(d, &["analyze", "ee", "--design", "a.csv", "--evaluations", "ea.csv", "-o", "ee.csv"]);
    assert_eq!(code(d, &["screen", "--ee", "ee.csv", "--threshold", "1000", "-o", "sel.json"]), 6);
}

#[test]
fn screen_union_respects_top() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let factors = concat!(env!("CARGO_MANIFEST_DIR"), "/../core/fixtures/demo_factors.csv");
    ok(d, &["design", "morris", "--factors", factors, "-r", "8", "--seed", "4", "-o", "m.csv"]);
    ok(d, &[
        "run", "--design", "m.csv", "--model", "builtin:demo",
        "--metric", "peak=max_before:production:2040",
        "--metric", "final=value_at:production:2050",
        "--jobs", "4", "-o", "e.csv",
    ]);
    ok(d, &["analyze", "ee", "--design", "m.csv", "--evaluations", "e.csv", "-o", "ee.csv"]);

    let select = |extra: &[&str], name: &str| {
        let mut args = vec!["screen", "--ee", "ee.csv", "--factors", factors, "-o", name];
        args.extend_from_slice(extra);
        ok(d, &args);
        json(&d.join(name))["selected"].as_array().unwrap().clone()
    };
    let all = select(&["--threshold", "0"], "all.json");
    let top = select(&["--threshold", "0", "--top", "3"], "top.json");
    assert!(top.len() <= 3);
    assert!(all.len() >= top.len());
    // a factor is selected if it passes in any metric
    let metrics: Vec<_> = all.iter().flat_map(|f| f["metrics"].as_array().unwrap().clone()).collect();
    assert!(metrics.iter().any(|m| m == "peak") || metrics.iter().any(|m| m == "final"));

    ok(d, &["screen", "--ee", "ee.csv", "--factors", factors, "--top", "3", "--write-factors", "sub.csv", "-o", "-"]);
    let sub = std::fs::read_to_string(d.join("sub.csv")).unwrap();
    assert_eq!(sub.lines().filter(|l| !l.starts_with('#')).count(), 1 + top.len());
}

#[test]
fn ishigami_pipeline_and_report() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let factors = ishigami_factors(d);
    let factors = factors.to_str().unwrap();
    let pipeline = |out: &str| {
        ok(d, &[
            "pipeline", "--factors", factors, "--model", "builtin:ishigami", "-r", "10", "--seed", "3",
            "--top", "3", "-n", "2048", "--bootstrap", "500", "--jobs", "2", "-o", out,
        ]);
    };
    pipeline("p1.json");
    pipeline("p2.json");
    assert_eq!(std::fs::read(d.join("p1.json")).unwrap(), std::fs::read(d.join("p2.json")).unwrap());

    let report = json(&d.join("p1.json"));
    let s1 = report["first_total"]["metrics"][0]["first_order"]
        .as_array()
        .unwrap()
        .iter()
        .find(|e| e["factors"][0] == "x1")
        .unwrap()
        .clone();
    let (lo, hi) = (s1["ci_low"].as_f64().unwrap(), s1["ci_high"].as_f64().unwrap());
    assert!(lo <= ISHIGAMI_S1 && ISHIGAMI_S1 <= hi, "S1 interval [{lo}, {hi}]");

    ok(d, &["report", "--pipeline", "p1.json", "-o", "r1"]);
    ok(d, &["report", "--pipeline", "p2.json", "-o", "r2"]);
    let mut names: Vec<_> = std::fs::read_dir(d.join("r1")).unwrap().map(|e| e.unwrap().file_name()).collect();
    names.sort();
    assert!(names.iter().any(|n| n == "manifest.json"));
    for name in names {
        assert_eq!(
            std::fs::read(d.join("r1").join(&name)).unwrap(),
            std::fs::read(d.join("r2").join(&name)).unwrap(),
            "{name:?} differs"
        );
    }
}

#[test]
fn builtin_batch_as_external_model() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ishigami_factors(d);
    ok(d, &["design", "sobol", "--factors", "ishigami.csv", "-n", "64", "-o", "s.csv"]);
    ok(d, &["run", "--design", "s.csv", "--model", "builtin:ishigami", "-o", "direct.csv"]);
    let exec = format!("exec:{} models batch --model builtin:ishigami", env!("CARGO_BIN_EXE_sensikit"));
    ok(d, &["run", "--design", "s.csv", "--model", &exec, "--batch-size", "50", "--jobs", "3", "-o", "batch.csv"]);
    assert_eq!(
        std::fs::read_to_string(d.join("direct.csv")).unwrap(),
        std::fs::read_to_string(d.join("batch.csv")).unwrap()
    );
    ok(d, &["analyze", "vbsa", "--design", "s.csv", "--evaluations", "batch.csv", "--bootstrap", "100", "-o", "-"]);
}

#[test]
fn models_list_names_builtins() {
    let dir = tempfile::tempdir().unwrap();
    let text = String::from_utf8(ok(dir.path(), &["models", "list"]).stdout).unwrap();
    for name in ["ishigami", "gfunction", "linear", "demo"] {
        assert!(text.contains(name));
    }
}
