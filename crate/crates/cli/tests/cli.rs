use std::path::Path;
use std::process::{Command, Output};

use rangeinv_cli::run::CSV_HEADER;

fn rangeinv(args: &[&str], root: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rangeinv"))
        .args(args)
        .env("RANGEINV_OUTPUT_ROOT", root)
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, body: &str) -> String {
    let path = dir.join("experiment.cfg");
    std::fs::write(&path, body).unwrap();
    path.to_string_lossy().into_owned()
}

fn summary(root: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(root.join("summary.json")).unwrap()).unwrap()
}

const MINIMAL: &str = "[problem]\nkind = \"potential\"\ndim = 1\n[solver]\nmethod = \"frozen_newton\"\nmax_iter = 30\n";

#[test]
fn minimal_noise_free_run() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), MINIMAL);
    let root = dir.path().join("out");
    let out = rangeinv(&["run", "--config", &cfg], &root);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));

    let csv = std::fs::read_to_string(root.join("frozen_newton_delta0e0_seed1/record.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some(CSV_HEADER));
    let rows: Vec<Vec<&str>> = lines.map(|l| l.split(',').collect()).collect();
    assert!(!rows.is_empty() && rows.len() <= 30);
    assert!(rows.iter().all(|r| r.len() == 7));
    assert!(rows[1][1].contains('e'), "scientific notation: {}", rows[1][1]);
    let final_error: f64 = rows.last().unwrap()[4].parse().unwrap();
    assert!(final_error < 1e-3, "{final_error:e}");
    assert!(!csv.contains('\r'));

    let s = summary(&root);
    assert_eq!(s["runs"].as_array().unwrap().len(), 1);
    assert_eq!(s["runs"][0]["stop_reason"], "max_iter");
    assert_eq!(s["config"]["problem"]["kind"], "potential");
    assert_eq!(s["version"], env!("CARGO_PKG_VERSION"));
    assert!(s["error"].is_null());
}

#[test]
fn zero_initial_guess_is_outside_the_domain() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "[problem]\nkind = \"potential\"\n[init]\nq0 = \"0\"\n");
    let root = dir.path().join("out");
    let out = rangeinv(&["run", "--config", &cfg], &root);
    assert!(!out.status.success());
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("D(F)"), "{stderr}");
    let s = summary(&root);
    assert!(s["error"].as_str().unwrap().contains("D(F)"));
}

#[test]
fn sweep_writes_one_directory_per_run() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "[problem]\nkind = \"potential\"\n[noise]\ndelta = 1e-2, 1e-3, 1e-4\nseed = 1, 2\n[solver]\nmax_iter = 20\n[output]\nworkers = 3\n",
    );
    let root = dir.path().join("out");
    let out = rangeinv(&["sweep", "--config", &cfg], &root);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let mut dirs: Vec<String> = std::fs::read_dir(&root)
        .unwrap()
        .flatten()
        .filter(|e| e.path().is_dir())
        .map(|e| e.file_name().to_string_lossy().into_owned())
        .collect();
    dirs.sort();
    assert_eq!(dirs.len(), 6, "{dirs:?}");
    assert!(dirs.contains(&"frozen_newton_delta1e-3_seed2".to_string()));
    let runs = summary(&root)["runs"].as_array().unwrap().clone();
    assert_eq!(runs.len(), 6);
    assert!(runs.iter().all(|r| r["error"].is_null() && r["iterations"].as_u64().unwrap() > 0));
}

#[test]
fn repeated_runs_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "[problem]\nkind = \"potential\"\n[noise]\ndelta = 1e-3\nseed = 5\n[solver]\nmethods = frozen_newton, variational\n[output]\nworkers = 2\n",
    );
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    assert!(rangeinv(&["sweep", "--config", &cfg], &a).status.success());
    assert!(rangeinv(&["sweep", "--config", &cfg], &b).status.success());
    for run in ["frozen_newton_delta1e-3_seed5", "variational_delta1e-3_seed5"] {
        let x = std::fs::read(a.join(run).join("record.csv")).unwrap();
        let y = std::fs::read(b.join(run).join("record.csv")).unwrap();
        assert_eq!(x, y, "{run}");
    }
    assert_eq!(
        std::fs::read(a.join("summary.json")).unwrap(),
        std::fs::read(b.join("summary.json")).unwrap()
    );
}

#[test]
fn run_rejects_several_methods_and_bad_configs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "[problem]\nkind = \"potential\"\n[solver]\nmethods = newton, variational\n",
    );
    assert_eq!(rangeinv(&["run", "--config", &cfg], dir.path()).status.code(), Some(2));
    let cfg = write_config(dir.path(), "[problem]\nkind = \"potential\"\n[truth]\nq = \"1 + qq\"\n");
    let out = rangeinv(&["run", "--config", &cfg], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("qq"));
    let missing = dir.path().join("nope.cfg");
    assert_eq!(
        rangeinv(&["run", "--config", missing.to_str().unwrap()], dir.path()).status.code(),
        Some(2)
    );
}

#[test]
fn unknown_verify_kind_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = rangeinv(&["verify", "--problem", "heat"], dir.path());
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn verify_robin_includes_the_nullspace_check() {
    let dir = tempfile::tempdir().unwrap();
    let json = dir.path().join("robin.json");
    let out = rangeinv(&["verify", "--problem", "robin", "--json", json.to_str().unwrap()], dir.path());
    let table = String::from_utf8_lossy(&out.stdout);
    assert!(table.contains("nullspace_joint"), "{table}");
    let file: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&json).unwrap()).unwrap();
    let reports = file["reports"].as_array().unwrap();
    let ns = reports.iter().find(|r| r["check"] == "nullspace_joint").unwrap();
    assert_eq!(ns["measured"]["expect_trivial"], "true");
    assert!(ns["measured"]["spectrum_k"].as_array().is_some());
    // Exit status follows the pass flags of the non-context audits.
    let all_pass = reports.iter().all(|r| r["pass"] == true || r["context_only"] == true);
    assert_eq!(out.status.success(), all_pass);
    assert_eq!(file["pass"], all_pass);
}

#[test]
fn verify_spectral_writes_audit_json_under_the_root() {
    let dir = tempfile::tempdir().unwrap();
    let out = rangeinv(&["verify", "--problem", "spectral"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stdout));
    let text = std::fs::read_to_string(dir.path().join("audit.json")).unwrap();
    assert!(text.ends_with('\n') && !text.contains('\r'));
    let file: serde_json::Value = serde_json::from_str(&text).unwrap();
    assert_eq!(file["problem"], "spectral");
}
