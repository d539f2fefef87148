//! End-to-end checks of the installed binary: exit codes, printed report
//! lines, and files left on disk.

use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_phenoflow"))
}

fn write_config(dir: &Path, name: &str, body: &str) -> std::path::PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, body).unwrap();
    path
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn run_config(dir: &Path) -> String {
    format!(
        "[grid]\npoints = 64\n[params]\nT = 0.2\nN = 2\n[snapshots]\ncount = 5\n\
         [output]\ndirectory = \"{}\"\n",
        dir.join("out").display()
    )
}

#[test]
fn run_writes_outputs_and_reports() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "run.toml", &run_config(dir.path()));
    let out = bin().arg("run").arg(&cfg).output().unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", stdout(&out));
    assert!(stdout(&out).contains("wrote "));
    for name in ["diagnostics.csv", "p_000.pfld", "p_004.pfld", "p_final.pfld"] {
        assert!(dir.path().join("out").join(name).is_file(), "missing {name}");
    }
}

#[test]
fn verify_reports_all_checks_passing() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "run.toml", &run_config(dir.path()));
    let out = bin().arg("verify").arg(&cfg).output().unwrap();
    let text = stdout(&out);
    assert_eq!(out.status.code(), Some(0), "{text}");
    for name in ["mass-growth", "pressure-cap", "positivity-clipping", "determinism-rerun"] {
        assert!(text.contains(&format!("check {name}: PASS")), "{text}");
    }
    assert!(!text.contains("FAIL"), "{text}");
}

#[test]
fn sweep_then_rates_fits_the_trait_resolution_slope() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path().join("sweep-out");
    let cfg = write_config(
        dir.path(),
        "sweep.toml",
        &format!(
            "[sweep]\nN = [8, 16, 32]\n[grid]\npoints = 64\n[params]\nT = 0.1\n\
             [snapshots]\ncount = 5\n[output]\ndirectory = \"{}\"\n",
            root.display()
        ),
    );
    let out = bin().arg("sweep").arg(&cfg).output().unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", stdout(&out));
    assert!(stdout(&out).contains("3 entries, 0 failed"));
    assert!(root.join("manifest").is_file());

    let out = bin().args(["rates"]).arg(&root).args(["--target", "riemann"]).output().unwrap();
    let text = stdout(&out);
    assert_eq!(out.status.code(), Some(0), "{text}");
    assert!(text.contains("slope -0.9"), "{text}");
    assert!(text.contains("threshold slope <= -0.9: PASS"), "{text}");

    // The sweep varies N, so a viscosity-axis fit must be refused.
    let out = bin().args(["rates"]).arg(&root).args(["--target", "wminusp"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn oracle_agrees_with_reference_integrator() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "run.toml", &run_config(dir.path()));
    let out = bin().arg("oracle").arg(&cfg).output().unwrap();
    let text = stdout(&out);
    assert_eq!(out.status.code(), Some(0), "{text}");
    assert!(text.contains("oracle comparison: PASS"), "{text}");
}

#[test]
fn usage_and_io_failures_use_distinct_exit_codes() {
    let no_args = bin().output().unwrap();
    assert_eq!(no_args.status.code(), Some(2));

    let unknown = bin().arg("frobnicate").output().unwrap();
    assert_eq!(unknown.status.code(), Some(2));

    let missing = bin().args(["run", "/nonexistent/config.toml"]).output().unwrap();
    assert_eq!(missing.status.code(), Some(3));

    let help = bin().arg("--help").output().unwrap();
    assert_eq!(help.status.code(), Some(0));
}
