use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn smoke_config() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/smoke.toml")
}

fn bihem(args: &[&str], out_dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bihem"))
        .args(args)
        .env("BIHEM_OUTPUT_DIR", out_dir)
        .output()
        .expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn usage_and_config_errors_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let o = bihem(&["bogus"], dir.path());
    assert_eq!(o.status.code(), Some(1));

    let o = bihem(&["validate", "no/such/config.toml"], dir.path());
    assert_eq!(o.status.code(), Some(1));

    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "[meta_train]\ntasks = [\"door-open\"]\n").unwrap();
    let o = bihem(&["validate", bad.to_str().unwrap()], dir.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("meta_train"), "{}", stderr(&o));

    let o = bihem(&["--help"], dir.path());
    assert_eq!(o.status.code(), Some(0));
}

#[test]
fn main_before_meta_train_names_the_missing_stage() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = smoke_config();
    let o = bihem(&["main", cfg.to_str().unwrap()], dir.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("meta-train"), "{}", stderr(&o));
}

#[test]
fn smoke_pipeline_runs_resumes_and_reports() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = smoke_config();
    let cfg = cfg.to_str().unwrap();
    for stage in ["validate", "meta-train", "main", "eval"] {
        let o = bihem(&[stage, cfg], dir.path());
        assert!(o.status.success(), "{stage}: {}", stderr(&o));
    }
    let again = bihem(&["main", cfg], dir.path());
    assert!(again.status.success());
    assert!(stderr(&again).contains("main: 0 cells run"), "{}", stderr(&again));

    let o = bihem(&["report", dir.path().to_str().unwrap()], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let report = dir.path().join("report");
    for f in ["summary.csv", "aggregate.csv", "gaps.txt", "plots/irr-vs-frr.svg"] {
        assert!(report.join(f).exists(), "missing {f}");
    }
}
