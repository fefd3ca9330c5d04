use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn pcarpet(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pcarpet")).args(args).output().expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn check_passes_on_builtins() {
    for scheme in ["interval2", "square2", "sierpinski-carpet"] {
        let out = pcarpet(&["check", "--scheme", scheme, "--depth", "3"]);
        assert_eq!(code(&out), 0, "{scheme}: {}", String::from_utf8_lossy(&out.stderr));
        assert!(stdout(&out).contains("holds"));
    }
}

#[test]
fn bad_inputs_exit_with_code_2() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.txt");
    fs::write(&bad, "L=3\n1x1\n").unwrap();
    let cases: Vec<Vec<&str>> = vec![
        vec!["check", "--scheme", path(&bad)],
        vec!["check"],
        vec!["sigma-scan", "--scheme", "interval2", "--p", "2", "--m-min", "4", "--m-max", "2"],
        vec!["dimar", "--scheme", "interval2", "--tol-p", "0"],
        vec!["dimar", "--scheme", "interval2", "--tol-p", "-0.1"],
        vec!["conductance", "--scheme", "square2", "--p", "0.5", "--word", "0"],
        vec!["conductance", "--scheme", "square2", "--p", "2", "--word", "9"],
        vec!["conductance", "--scheme", "square2", "--p", "2", "--a1", "0", "--a2", "0"],
        vec!["construct", "--scheme", "square2", "--sigma", "abc"],
        vec!["cache", "compact"],
    ];
    for args in cases {
        let out = pcarpet(&args);
        assert_eq!(code(&out), 2, "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    }
}

#[test]
fn dimar_without_bracket_is_an_analytic_failure() {
    let out = pcarpet(&["dimar", "--scheme", "interval2", "--p-lo", "1.1", "--m-max", "4"]);
    assert_eq!(code(&out), 1);
    assert!(String::from_utf8_lossy(&out.stderr).contains("crossing outside"));
}

#[test]
fn dimar_rejects_p_at_most_one() {
    let out = pcarpet(&["dimar", "--scheme", "interval2", "--p-lo", "0.5", "--p-hi", "4"]);
    assert_eq!(code(&out), 2);
}

#[test]
fn identical_runs_write_identical_csv() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for dir in [&a, &b] {
        let out = pcarpet(&[
            "sigma-scan", "--scheme", "interval2", "--p", "1.5,3", "--m-max", "3", "--seed", "5", "--out",
            path(dir.path()),
        ]);
        assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    }
    let x = fs::read(a.path().join("sigma_scan.csv")).unwrap();
    let y = fs::read(b.path().join("sigma_scan.csv")).unwrap();
    assert_eq!(x, y);
    let text = String::from_utf8(x).unwrap();
    let header = text.lines().next().unwrap();
    assert_eq!(header, "scheme,p,m,source,value,sigma_hat,residual,seed,scheme_hash,depth");
    assert_eq!(text.lines().count(), 1 + 2 * 2 * 3);
}

#[test]
fn cached_results_match_fresh_ones() {
    let cache = tempfile::tempdir().unwrap();
    let args = ["conductance", "--scheme", "sierpinski-carpet", "--p", "1.7", "--word", "0.1", "--m", "1"];
    let fresh = pcarpet(&args);
    let mut with_cache: Vec<&str> = args.to_vec();
    with_cache.extend(["--cache-dir", path(cache.path())]);
    let first = pcarpet(&with_cache);
    let second = pcarpet(&with_cache);
    assert_eq!(code(&fresh), 0);
    assert_eq!(stdout(&fresh), stdout(&first));
    assert_eq!(stdout(&first), stdout(&second));
    assert!(String::from_utf8_lossy(&second.stderr).contains("1 results reused"));

    let records = || fs::read_to_string(cache.path().join("results.jsonl")).unwrap().lines().count();
    assert_eq!(records(), 1);
    fs::OpenOptions::new()
        .append(true)
        .open(cache.path().join("results.jsonl"))
        .and_then(|mut f| std::io::Write::write_all(&mut f, b"not json\n"))
        .unwrap();
    let out = pcarpet(&["cache", "compact", "--cache-dir", path(cache.path())]);
    assert_eq!(code(&out), 0);
    assert_eq!(records(), 1);
    assert_eq!(stdout(&pcarpet(&with_cache)), stdout(&fresh));
}

#[test]
fn short_construction_reports_harmonic_plateaus() {
    let dir = tempfile::tempdir().unwrap();
    let out = pcarpet(&[
        "construct", "--scheme", "square2", "--p", "2", "--sigma", "0.5", "--kmax", "2", "--out",
        path(dir.path()),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let plateau = fs::read_to_string(dir.path().join("plateau.csv")).unwrap();
    let rows: Vec<Vec<&str>> = plateau.lines().skip(1).map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 2);
    assert_eq!(&rows[0][..3], ["1", "1", "1"]);
    assert_eq!(&rows[1][..3], ["2", "1.5", "1.5"]);
    for name in ["construct_report.json", "scaled_energy.csv", "lp_norm.csv"] {
        assert!(dir.path().join(name).exists(), "{name}");
    }
}

#[test]
fn sigma_above_one_is_labelled_inapplicable() {
    let dir = tempfile::tempdir().unwrap();
    let out = pcarpet(&[
        "construct", "--scheme", "square2", "--p", "2", "--sigma", "2.5", "--kmax", "1", "--out",
        path(dir.path()),
    ]);
    assert_eq!(code(&out), 0);
    assert!(stdout(&out).contains("inapplicable"));
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("construct_report.json")).unwrap()).unwrap();
    assert!(report["report"]["energy_bound_holds"].is_null());
    assert_eq!(report["scheme"], "square2");
}

#[test]
fn disparity_of_a_level_names_its_argmax() {
    let out = pcarpet(&["disparity", "--scheme", "interval2", "--p", "2", "--m", "1", "--level", "2"]);
    assert_eq!(code(&out), 0);
    assert!(stdout(&out).contains("argmax"));
}
