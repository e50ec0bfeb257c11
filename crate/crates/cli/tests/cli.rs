use std::path::PathBuf;
use std::process::{Command, Output};

fn firms() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data/firms")
}

fn mcsort(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mcsort"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn bundle() -> String {
    firms().join("problem.json").display().to_string()
}

#[test]
fn check_reports_zero() {
    let out = mcsort(&["check", "--bundle", &bundle()]);
    assert_eq!(out.status.code(), Some(0));
    assert!(stdout(&out).starts_with("optimum: 0\n"));
}

#[test]
fn check_flags_inconsistent_examples() {
    let dir = tempfile::tempdir().unwrap();
    let matrix = dir.path().join("m.csv");
    let examples = dir.path().join("e.csv");
    std::fs::write(&matrix, "alternative,g1\na,1\nb,1\nc,2\n").unwrap();
    std::fs::write(&examples, "a,1\nb,2\n").unwrap();
    let args = [
        "--matrix",
        matrix.to_str().unwrap(),
        "--examples",
        examples.to_str().unwrap(),
        "--categories",
        "2",
        "--subintervals",
        "1",
    ];
    let out = mcsort(&[&["check"][..], &args].concat());
    assert_eq!(out.status.code(), Some(2));

    let adjusted = dir.path().join("adjusted.csv");
    let out = mcsort(&[&["adjust"][..], &args, &["--out", adjusted.to_str().unwrap()]].concat());
    assert_eq!(out.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&out.stderr).contains("moves: 1"));
    let text = std::fs::read_to_string(&adjusted).unwrap();
    assert!(text == "a,1\nb,1\n" || text == "a,2\nb,2\n", "{text}");
}

#[test]
fn learn_approach2_then_sort() {
    let dir = tempfile::tempdir().unwrap();
    let model = dir.path().join("model.json");
    let out = mcsort(&[
        "learn",
        "--bundle",
        &bundle(),
        "--approach",
        "2",
        "--out",
        model.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0));
    let text = stdout(&out);
    let eps: f64 = text
        .lines()
        .find_map(|l| l.strip_prefix("eps*: "))
        .unwrap()
        .parse()
        .unwrap();
    assert!((eps - 0.2675).abs() <= 1e-3, "{eps}");

    let out = mcsort(&["sort", "--model", model.to_str().unwrap(), "--bundle", &bundle()]);
    assert_eq!(out.status.code(), Some(0));
    let lines: Vec<String> = stdout(&out).lines().map(String::from).collect();
    assert_eq!(lines.len(), 21);
    for expected in ["a2,4", "a3,2", "a9,3", "a10,2", "a12,1", "a17,3"] {
        assert!(lines.iter().any(|l| l == expected), "{expected}");
    }
}

#[test]
fn sort_rejects_category_mismatch() {
    let dir = tempfile::tempdir().unwrap();
    let model = dir.path().join("model.json");
    let out = mcsort(&["learn", "--bundle", &bundle(), "--out", model.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    let matrix = firms().join("matrix.csv");
    let out = mcsort(&[
        "sort",
        "--model",
        model.to_str().unwrap(),
        "--matrix",
        matrix.to_str().unwrap(),
        "--categories",
        "3",
    ]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn robustness_prints_apa() {
    let out = mcsort(&["robustness", "--bundle", &bundle()]);
    assert_eq!(out.status.code(), Some(0));
    let text = stdout(&out);
    assert!(text.ends_with("APA: 0\n"), "{text}");
    assert_eq!(text.matches(",1;2;3;4,").count(), 14);
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(mcsort(&["learn"]).status.code(), Some(1));
    assert_eq!(mcsort(&["check", "--bundle", "/nonexistent.json"]).status.code(), Some(1));
    assert_eq!(
        mcsort(&["learn", "--bundle", &bundle(), "--approach", "3"]).status.code(),
        Some(1)
    );
}

#[test]
fn slope_learner_without_slopes_is_a_usage_error() {
    let f = firms();
    let out = mcsort(&[
        "learn",
        "--matrix",
        f.join("matrix.csv").to_str().unwrap(),
        "--examples",
        f.join("examples.csv").to_str().unwrap(),
        "--categories",
        "4",
        "--subintervals",
        "1",
        "--approach",
        "1",
    ]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn dump_lp_writes_programs() {
    let dir = tempfile::tempdir().unwrap();
    let out = mcsort(&["check", "--bundle", &bundle(), "--dump-lp", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    let files: Vec<_> = std::fs::read_dir(dir.path()).unwrap().collect();
    assert_eq!(files.len(), 1);
    let text = std::fs::read_to_string(files[0].as_ref().unwrap().path()).unwrap();
    assert!(text.contains("Subject To") || text.contains("subject to"), "{text}");
}

#[test]
fn compare_is_deterministic() {
    let args = [
        "compare", "--n", "30", "--m", "2", "--datasets", "3", "--replications", "2", "--seed", "7",
    ];
    let dir = tempfile::tempdir().unwrap();
    let a = mcsort(&[&args[..], &["--jobs", "1"]].concat());
    let b = mcsort(&[&args[..], &["--jobs", "4", "--out", dir.path().to_str().unwrap()]].concat());
    assert_eq!(a.status.code(), Some(0));
    assert_eq!(b.status.code(), Some(0));
    let summary = std::fs::read_to_string(dir.path().join("summary.csv")).unwrap();
    assert_eq!(stdout(&a), summary);
    assert!(dir.path().join("report.json").exists());
    assert_eq!(
        std::fs::read_to_string(dir.path().join("tests.csv")).unwrap().lines().count(),
        4
    );
}

#[test]
fn simulate_writes_apa_report() {
    let dir = tempfile::tempdir().unwrap();
    let out = mcsort(&[
        "simulate", "--n", "20", "--m", "2", "--datasets", "2", "--replications", "2", "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0));
    let summary = std::fs::read_to_string(dir.path().join("summary.csv")).unwrap();
    assert!(summary.lines().nth(1).unwrap().starts_with("apa,true,"));
}
