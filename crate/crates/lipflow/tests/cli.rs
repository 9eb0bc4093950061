use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use lipflow::load_scenario;
use lipflow::scenario::CheckKind;

fn scenarios() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios")
}

fn lipflow(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lipflow"))
        .args(args)
        .output()
        .unwrap()
}

fn run(scenario: &Path, out: &Path) -> Output {
    lipflow(&[
        "run",
        scenario.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--jobs",
        "2",
    ])
}

#[test]
fn abs_kink_fixture_has_the_expected_shape() {
    let s = load_scenario(&scenarios().join("abs_kink.json")).unwrap();
    assert_eq!(
        s.function("f").to_string(),
        lipflow_core::Expression::parse("abs(x0)", 1)
            .unwrap()
            .to_string()
    );
    let x = s.field("X");
    assert_eq!(x.components()[0].evaluate(&[0.3]).unwrap(), 1.0);
    assert!(matches!(
        s.checks[0].kind,
        CheckKind::MainEquivalence { .. }
    ));
    assert!(matches!(s.checks[1].kind, CheckKind::UpperGradient { .. }));
}

#[test]
fn abs_kink_passes_with_error_t() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&scenarios().join("abs_kink.json"), dir.path());
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stdout)
    );
    let csv = fs::read_to_string(dir.path().join("abs_kink__main_equivalence.csv")).unwrap();
    let last: Vec<f64> = csv
        .lines()
        .last()
        .unwrap()
        .split(',')
        .map(|v| v.parse().unwrap())
        .collect();
    assert_eq!(last[0], 1e-3);
    // the exact error is t; allow round-off only
    assert!(last[1] <= 1e-3 * (1.0 + 1e-9), "{}", last[1]);
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout
        .lines()
        .nth(1)
        .unwrap()
        .starts_with("main_equivalence"));
    assert!(stdout.lines().nth(2).unwrap().starts_with("upper_gradient"));
}

#[test]
fn shipped_scenarios_pass_and_negatives_fail() {
    let mut seen = 0;
    for entry in fs::read_dir(scenarios()).unwrap() {
        let path = entry.unwrap().path();
        let dir = tempfile::tempdir().unwrap();
        let out = run(&path, dir.path());
        let negative = path
            .file_stem()
            .unwrap()
            .to_str()
            .unwrap()
            .ends_with("_neg");
        assert_eq!(
            out.status.success(),
            !negative,
            "{}: {}",
            path.display(),
            String::from_utf8_lossy(&out.stdout)
        );
        seen += 1;
    }
    assert!(seen >= 5);
}

#[test]
fn reports_are_deterministic() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let scenario = scenarios().join("rotation_group.json");
    run(&scenario, a.path());
    let out = lipflow(&[
        "run",
        scenario.to_str().unwrap(),
        "--out",
        b.path().to_str().unwrap(),
        "--jobs",
        "1",
    ]);
    assert!(out.status.success());
    let mut names: Vec<_> = fs::read_dir(a.path())
        .unwrap()
        .map(|e| e.unwrap().file_name())
        .collect();
    names.sort();
    assert_eq!(names.len(), 6);
    for n in names {
        assert_eq!(
            fs::read(a.path().join(&n)).unwrap(),
            fs::read(b.path().join(&n)).unwrap(),
            "{n:?}"
        );
    }
}

#[test]
fn empty_check_list_writes_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = dir.path().join("empty.json");
    fs::write(
        &scenario,
        r#"{"name": "empty", "region": {"dim": 1, "lower": [0], "upper": [1]},
            "fields": {}, "functions": {}, "checks": []}"#,
    )
    .unwrap();
    let out_dir = dir.path().join("reports");
    let out = run(&scenario, &out_dir);
    assert!(out.status.success());
    assert!(!out_dir.exists());
}

#[test]
fn escaping_check_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = dir.path().join("escape.json");
    fs::write(
        &scenario,
        r#"{"name": "escape", "region": {"dim": 1, "lower": [-1], "upper": [1]},
            "fields": {"X": {"components": ["1"], "lipschitz": 0}}, "functions": {"f": "x0"},
            "checks": [{"kind": "main_equivalence", "args": {"field": "X", "f": "f", "g": "f"},
                        "t_sequence": [3], "threshold": 1}]}"#,
    )
    .unwrap();
    let out = run(&scenario, dir.path());
    assert!(!out.status.success());
    let report = fs::read_to_string(dir.path().join("escape__main_equivalence.json")).unwrap();
    let v: serde_json::Value = serde_json::from_str(&report).unwrap();
    assert_eq!(v["verdict"], "error");
    assert!(String::from_utf8(out.stdout).unwrap().contains("error"));
}

#[test]
fn validate_reports_paths() {
    let ok = lipflow(&[
        "validate",
        scenarios().join("cutoff.json").to_str().unwrap(),
    ]);
    assert!(ok.status.success());
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    fs::write(
        &bad,
        r#"{"name": "bad", "region": {"dim": 1, "lower": [0], "upper": [1]},
            "fields": {"X": {"components": ["1"], "lipschitz": 0}}, "functions": {"f": "x0"},
            "checks": [{"kind": "semigroup", "args": {"field": "X", "f": "q", "pairs": []},
                        "t_sequence": [0.1], "threshold": 1}]}"#,
    )
    .unwrap();
    let out = lipflow(&["validate", bad.to_str().unwrap()]);
    assert!(!out.status.success());
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(
        err.contains("checks[0].args.f") && err.contains("`q`"),
        "{err}"
    );
}

#[test]
fn tol_scale_and_jobs_are_validated() {
    let s = scenarios().join("abs_kink.json");
    assert!(!lipflow(&["run", s.to_str().unwrap(), "--jobs", "0"])
        .status
        .success());
    assert!(!lipflow(&["run", s.to_str().unwrap(), "--tol-scale", "-1"])
        .status
        .success());
}

#[test]
fn oracles_lists_the_catalog() {
    let out = lipflow(&["oracles"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    for name in ["translation", "scaling", "rotation", "kink", "heisenberg"] {
        assert!(text.contains(&format!("{name}  (n = ")), "{name}");
    }
}
