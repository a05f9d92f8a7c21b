use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use hsas::harness::CLOSED_FORM_COLUMNS;
use hsas::io::{read_json, read_path, read_rows, ReportRecord};

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("hsas-cli-{}-{name}", std::process::id()));
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn hsas(out: &Path, args: &[&str]) -> Output {
    let o = Command::new(env!("CARGO_BIN_EXE_hsas")).arg("--out-dir").arg(out).args(args).output().unwrap();
    assert!(o.status.success(), "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
    o
}

#[test]
fn single_path_pipeline() {
    let dir = scratch("pipeline");
    hsas(&dir, &["--seed", "3", "simulate", "--alpha", "1.5", "--hurst", "0.75", "--n", "3000"]);
    let path = read_path(&dir.join("path.csv")).unwrap();
    assert_eq!(path.len(), 3000);
    assert_eq!(path.delta, 0.01);
    assert_eq!(path.t0, 0.01);
    assert!(path.meta.seed.is_some());

    hsas(&dir, &["mollify", "--input", dir.join("path.csv").to_str().unwrap(), "--theta", "20"]);
    let m = read_path(&dir.join("mollified.csv")).unwrap();
    assert_eq!(m.len(), 3000 - 100);
    let (header, kernel) = read_rows(&dir.join("kernel.csv")).unwrap();
    assert_eq!(header, ["l", "t", "v"]);
    assert_eq!(kernel.len(), 101);

    // mollifying inside the command and on the mollified file agree
    let input = dir.join("path.csv");
    hsas(&dir, &["periodogram", "--input", input.to_str().unwrap(), "--output", dir.join("a.csv").to_str().unwrap()]);
    hsas(
        &dir,
        &["periodogram", "--mollified", "--input", dir.join("mollified.csv").to_str().unwrap(), "--output", dir.join("b.csv").to_str().unwrap()],
    );
    assert_eq!(std::fs::read(dir.join("a.csv")).unwrap(), std::fs::read(dir.join("b.csv")).unwrap());
    let (header, pg) = read_rows(&dir.join("a.csv")).unwrap();
    assert_eq!(header, ["freq", "ordinate"]);
    assert_eq!(pg.len(), 2900 / 2);

    hsas(&dir, &["kde", "--input", input.to_str().unwrap(), "--n-peaks", "60", "--grid-max", "80", "--kde-points", "512"]);
    let (header, d) = read_rows(&dir.join("kde.csv")).unwrap();
    assert_eq!(header, ["z", "rho_hat"]);
    assert_eq!(d.len(), 512);
    assert_eq!(d[511][0], 80.0);

    let o = hsas(&dir, &["estimate-hfsm", "--input", input.to_str().unwrap(), "--n-peaks", "60"]);
    let r: ReportRecord = read_json(&dir.join("estimate_hfsm.json")).unwrap();
    assert!(r.alpha_hat.is_finite() && r.h_hat.is_some() && r.gamma_shape.is_some());
    assert_eq!(r.n_used, 60);
    assert_eq!(r.seed, path.meta.seed);
    let printed: ReportRecord = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(printed, r);

    hsas(&dir, &["estimate-alpha", "--input", input.to_str().unwrap(), "--n-peaks", "60"]);
    let r: ReportRecord = read_json(&dir.join("estimate_alpha.json")).unwrap();
    assert!(r.h_hat.is_none() && r.intercept.is_some() && r.interval.is_some());
}

#[test]
fn seed_selects_the_path() {
    let dir = scratch("seeds");
    let run = |seed: &str, name: &str| {
        let out = dir.join(name);
        hsas(&dir, &["--seed", seed, "simulate", "--alpha", "1.2", "--hurst", "0.4", "--n", "500", "--output", out.to_str().unwrap()]);
        read_path(&out).unwrap().values
    };
    assert_eq!(run("5", "a.csv"), run("5", "b.csv"));
    assert_ne!(run("5", "a.csv"), run("6", "c.csv"));
}

#[test]
fn experiment_is_reproducible_from_its_metadata() {
    let dir = scratch("experiment");
    let first = dir.join("first");
    let args = ["experiment", "table3", "--replicates", "3", "--alpha", "1.5", "--hurst", "0.75", "--n-peaks", "100", "--kernel", "v1"];
    hsas(&first, &[&["--workers", "1"], &args[..]].concat());
    let mut reader =
        csv::ReaderBuilder::new().comment(Some(b'#')).from_path(first.join("closed_form.csv")).unwrap();
    assert_eq!(reader.headers().unwrap().iter().collect::<Vec<_>>(), CLOSED_FORM_COLUMNS);
    let rows: Vec<csv::StringRecord> = reader.records().map(Result::unwrap).collect();
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0].iter().take(4).collect::<Vec<_>>(), ["1.5", "0.75", "100", "v1"]);
    assert_eq!(&rows[0][8], "3");
    let text = std::fs::read_to_string(first.join("closed_form.csv")).unwrap();
    assert!(text.starts_with("# config_digest: "));

    let second = dir.join("second");
    let meta = first.join("metadata.json");
    hsas(&second, &["--workers", "4", "--config", meta.to_str().unwrap(), "experiment", "custom"]);
    assert_eq!(std::fs::read(first.join("closed_form.csv")).unwrap(), std::fs::read(second.join("closed_form.csv")).unwrap());
}

#[test]
fn invalid_requests_fail_with_a_message() {
    let dir = scratch("errors");
    let run = |args: &[&str]| Command::new(env!("CARGO_BIN_EXE_hsas")).arg("--out-dir").arg(&dir).args(args).output().unwrap();
    let o = run(&["experiment", "custom"]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("--config"));
    let o = run(&["simulate", "--alpha", "2.5", "--hurst", "0.5"]);
    assert!(!o.status.success());
    let o = run(&["periodogram", "--input", dir.join("missing.csv").to_str().unwrap()]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("missing.csv"));
}
