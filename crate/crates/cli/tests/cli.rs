use std::path::Path;
use std::process::{Command, Output};

fn dgprice(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dgprice")).args(args).output().unwrap()
}

fn run_3bus(out: &Path) -> Output {
    dgprice(&["run", "--scenario", "3bus", "--mode", "epec", "--out", out.to_str().unwrap()])
}

#[test]
fn three_bus_run_writes_reports_that_audit() {
    let dir = tempfile::tempdir().unwrap();
    let o = run_3bus(dir.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(stdout.contains("DG1") && stdout.contains("DG2"), "{stdout}");
    for f in ["prices.csv", "payments.csv", "computation.csv", "report.csv", "equilibrium.txt"] {
        assert!(dir.path().join(f).is_file(), "{f} missing");
    }
    let a = dgprice(&["audit", dir.path().to_str().unwrap()]);
    assert!(a.status.success(), "{}", String::from_utf8_lossy(&a.stdout));
}

#[test]
fn repeated_runs_give_identical_tables() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    assert!(run_3bus(a.path()).status.success());
    assert!(run_3bus(b.path()).status.success());
    for f in ["prices.csv", "payments.csv"] {
        let x = std::fs::read_to_string(a.path().join(f)).unwrap();
        let y = std::fs::read_to_string(b.path().join(f)).unwrap();
        assert_eq!(x, y, "{f}");
    }
}

#[test]
fn disco_only_reports_the_baseline() {
    let o = dgprice(&["run", "--scenario", "34bus", "--mode", "disco-only"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(stdout.contains("total_payment_eur"), "{stdout}");
}

#[test]
fn tampered_report_fails_audit() {
    let dir = tempfile::tempdir().unwrap();
    assert!(run_3bus(dir.path()).status.success());
    let path = dir.path().join("report.csv");
    let text = std::fs::read_to_string(&path).unwrap();
    let line = text.lines().find(|l| l.starts_with("dg,DG1,")).unwrap().to_string();
    let mut fields: Vec<String> = line.split(',').map(String::from).collect();
    let last = fields.len() - 1;
    fields[last] = "1.0".into();
    std::fs::write(&path, text.replace(&line, &fields.join(","))).unwrap();
    let a = dgprice(&["audit", path.to_str().unwrap()]);
    assert!(!a.status.success());
}

#[test]
fn bad_arguments_are_errors() {
    assert!(!dgprice(&["run", "--mode", "cournot"]).status.success());
    assert!(!dgprice(&["run", "--scenario", "/nonexistent/case.txt"]).status.success());
    assert!(!dgprice(&["audit", "/nonexistent/report.csv"]).status.success());
}
