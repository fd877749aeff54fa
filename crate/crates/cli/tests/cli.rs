use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn proxima(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_proxima"))
        .current_dir(dir)
        .args(args)
        .env_remove("PROXIMA_THREADS")
        .output()
        .expect("running proxima")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

const CONFIG: &str = "\
method = ols
restriction = 12-332
seed = 5

[paths]
fitting = fit.csv
model = ols.model
report = report.csv

[synthetic]
dim = 2
points = 300
validation_points = 40
validation_inner = 200

[sets]
v = v.csv
ns = ns.csv
cr = cr.csv
synthetic.scale.cr = 1.2
";

fn workspace() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("run.ini"), CONFIG).unwrap();
    let o = proxima(dir.path(), &["generate", "--config", "run.ini"]);
    assert!(o.status.success(), "{}", stderr(&o));
    dir
}

#[test]
fn generate_writes_every_set_deterministically() {
    let dir = workspace();
    let files = ["fit.csv", "v.csv", "ns.csv", "cr.csv"];
    let first: Vec<String> = files.iter().map(|f| fs::read_to_string(dir.path().join(f)).unwrap()).collect();
    assert_eq!(first[0].lines().count(), 301);
    assert!(first[1].lines().count() >= 41);
    let o = proxima(dir.path(), &["generate", "--config", "run.ini"]);
    assert!(o.status.success());
    for (f, before) in files.iter().zip(&first) {
        assert_eq!(&fs::read_to_string(dir.path().join(f)).unwrap(), before, "{f} changed on rerun");
    }
    assert_ne!(first[1], first[2]);
}

#[test]
fn generate_rejects_a_bad_dimension() {
    let dir = workspace();
    for d in ["0", "40", "two"] {
        let o = proxima(dir.path(), &["generate", "--config", "run.ini", "--set", &format!("synthetic.dim={d}")]);
        assert_eq!(o.status.code(), Some(1), "dim={d}");
        assert!(stderr(&o).starts_with("proxima: "));
    }
}

#[test]
fn calibrate_writes_model_and_decreasing_trace() {
    let dir = workspace();
    let o = proxima(dir.path(), &["calibrate", "--config", "run.ini"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(fs::read_to_string(dir.path().join("ols.model")).unwrap().starts_with("method=ols"));
    let trace = fs::read_to_string(dir.path().join("ols.model.trace.csv")).unwrap();
    let mut lines = trace.lines();
    assert_eq!(lines.next(), Some("iteration,k,candidates,aic,accepted"));
    let aic: Vec<f64> = lines.map(|l| l.split(',').nth(3).unwrap().parse().unwrap()).collect();
    assert!(aic.len() > 2);
    assert!(aic.windows(2).all(|w| w[1] < w[0]), "{aic:?}");
}

#[test]
fn calibrate_errors() {
    let dir = workspace();
    let o = proxima(dir.path(), &["calibrate", "--config", "run.ini", "--set", "method=kernel"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("kernel.basis required"), "{}", stderr(&o));

    let o = proxima(dir.path(), &["calibrate", "--config", "run.ini", "--set", "method=spline"]);
    assert_eq!(o.status.code(), Some(2));
    let o = proxima(dir.path(), &["calibrate", "--config", "run.ini", "--set", "gam.colour=red"]);
    assert_eq!(o.status.code(), Some(2));
    let o = proxima(dir.path(), &["calibrate", "--config", "run.ini", "--threads", "0"]);
    assert_eq!(o.status.code(), Some(2));
    let o = proxima(dir.path(), &["calibrate", "--config", "run.ini", "--set", "paths.fitting=missing.csv"]);
    assert_eq!(o.status.code(), Some(1));
    assert_eq!(stderr(&o).lines().count(), 1);
}

#[test]
fn validate_reports_one_row_per_set() {
    let dir = workspace();
    assert!(proxima(dir.path(), &["calibrate", "--config", "run.ini"]).status.success());
    let o = proxima(dir.path(), &["validate", "--config", "run.ini"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let report = fs::read_to_string(dir.path().join("report.csv")).unwrap();
    let rows: Vec<&str> = report.lines().collect();
    assert_eq!(rows[0], "model,set,mae,mae_a,res,mae0,res0,res_base");
    assert_eq!(rows.len(), 4);
    let labels: Vec<&str> = rows[1..].iter().map(|r| r.split(',').nth(1).unwrap()).collect();
    assert_eq!(labels, ["v", "ns", "cr"]);
    assert!(rows[1..].iter().all(|r| r.starts_with("ols,") && r.split(',').all(|c| !c.is_empty())));
}

#[test]
fn validate_without_base_leaves_base_columns_empty() {
    let dir = workspace();
    let o = proxima(dir.path(), &["generate", "--config", "run.ini", "--set", "synthetic.base=false"]);
    assert!(o.status.success());
    assert!(proxima(dir.path(), &["calibrate", "--config", "run.ini"]).status.success());
    let o = proxima(dir.path(), &["validate", "--config", "run.ini"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let report = fs::read_to_string(dir.path().join("report.csv")).unwrap();
    assert_eq!(report.lines().count(), 4);
    for row in report.lines().skip(1) {
        let cells: Vec<&str> = row.split(',').collect();
        assert_eq!(&cells[5..], ["", "", ""], "{row}");
    }
}

#[test]
fn validate_fails_on_a_missing_model() {
    let dir = workspace();
    let o = proxima(dir.path(), &["validate", "--config", "run.ini", "--set", "paths.model=nope.model"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("nope.model"), "{}", stderr(&o));
}
