use std::path::PathBuf;
use std::process::Command;

use vertexeuler::report::parse_report;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_vertexeuler"));
    c.env("VERTEXEULER_WORKERS", "2");
    c
}

fn scenario(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("scenarios").join(format!("{name}.toml"))
}

#[test]
fn verify_succeeds_and_writes_report() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("trivial.json");
    let status = bin().args(["verify", "--out"]).arg(&out).arg(scenario("trivial")).status().unwrap();
    assert_eq!(status.code(), Some(0));
    let report = parse_report(&std::fs::read(&out).unwrap()).unwrap();
    assert!(report.all_match());
    assert_eq!(report.vertices.len(), 8);
    assert!(report.vertices.iter().all(|v| v.nu.value == 0.0));
}

#[test]
fn reports_are_byte_identical_across_runs_and_worker_counts() {
    let run = |workers: &str| {
        let o = bin().env("VERTEXEULER_WORKERS", workers).args(["indices"]).arg(scenario("shear")).output().unwrap();
        assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
        o.stdout
    };
    let a = run("1");
    let b = run("4");
    let c = run("4");
    assert_eq!(a, b);
    assert_eq!(b, c);
}

#[test]
fn csv_has_one_row_per_vertex_and_time() {
    let o = bin().args(["indices", "--format", "csv"]).arg(scenario("shear")).output().unwrap();
    assert_eq!(o.status.code(), Some(0));
    let text = String::from_utf8(o.stdout).unwrap();
    let rows = text.lines().filter(|l| !l.trim().is_empty()).count() - 1;
    assert_eq!(rows, 8 * 6);
}

#[test]
fn mismatch_exits_with_one() {
    // at T this small the extrapolation is far from the scale-free value
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("early.toml");
    let text = std::fs::read_to_string(scenario("shear"))
        .unwrap()
        .replace("log_t = [2.0, 3.0, 4.0, 5.0, 6.0, 7.0]", "log_t = [0.5, 0.75, 1.0]")
        .replace("fit_tolerance = 0.05", "fit_tolerance = 10.0");
    std::fs::write(&path, text).unwrap();
    let o = bin().args(["indices"]).arg(&path).output().unwrap();
    assert_eq!(o.status.code(), Some(1));
    let report = parse_report(&o.stdout).unwrap();
    assert!(!report.agreement);
}

#[test]
fn line_bundle_rejects_flat_scenarios() {
    let o = bin().args(["line-bundle"]).arg(scenario("shear")).output().unwrap();
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("not a line-bundle scenario"));
}

#[test]
fn invalid_inputs_exit_with_two() {
    let o = bin().args(["verify", "/nonexistent/scenario.toml"]).output().unwrap();
    assert_eq!(o.status.code(), Some(2));

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.toml");
    std::fs::write(&path, "name = \"bad\"\nunknown_key = 1\n").unwrap();
    let o = bin().args(["verify"]).arg(&path).output().unwrap();
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn ordering_study_accepts_explicit_permutations() {
    let o = bin()
        .args(["ordering-study", "--format", "csv", "--perm", "1,2,3,4", "--perm", "4,3,2,1"])
        .arg(scenario("shear"))
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let text = String::from_utf8(o.stdout).unwrap();
    assert_eq!(text.lines().count(), 1 + 2 * 8);
}
