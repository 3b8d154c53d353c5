//! Acceptance criteria, one PASS/FAIL line each. Exits nonzero if any fails.

use std::process::ExitCode;
use std::time::{Duration, Instant};

use rangeinv::problems::{InverseProblem, ProblemKind};
use rangeinv::solvers::{solve, Method, StopRule};
use rangeinv::verify::{AuditReport, Measure};
use rangeinv::Record;
use rangeinv_cli::instance::build_from_config;
use rangeinv_cli::run::{record_csv, sweep};
use rangeinv_cli::suite::{audit_json, instances, range_invariance_audit, run_suite, AuditFile, Target};
use rangeinv_cli::{make_noise, ExperimentConfig};

struct Verdict {
    id: u32,
    title: &'static str,
    pass: bool,
    detail: String,
}

fn reports<'a>(file: &'a AuditFile, check: &'a str) -> impl Iterator<Item = &'a AuditReport> + 'a {
    file.reports.iter().filter(move |r| r.check == check)
}

fn failures<'a>(it: impl Iterator<Item = &'a AuditReport>) -> Vec<String> {
    it.filter(|r| !r.pass)
        .map(|r| format!("{} [{}]: {}", r.check, r.instance, r.message.clone().unwrap_or_default()))
        .collect()
}

fn verdict(id: u32, title: &'static str, failed: Vec<String>, detail: String) -> Verdict {
    let pass = failed.is_empty();
    let detail = if pass { detail } else { format!("{detail}; {}", failed.join("; ")) };
    Verdict { id, title, pass, detail }
}

fn c1_range_invariance() -> Verdict {
    let t = Instant::now();
    let mut failed = Vec::new();
    let mut worst = 0.0f64;
    let mut count = 0;
    for spec in instances(&ProblemKind::PDE) {
        let problem = match spec.build() {
            Ok(p) => p,
            Err(e) => {
                failed.push(format!("{}: {e}", spec.label));
                continue;
            }
        };
        for r in range_invariance_audit(&problem, &spec.label, spec.seed) {
            if r.context_only {
                continue;
            }
            worst = worst.max(r.scalar_value("rel_max").unwrap_or(f64::INFINITY));
            count += r.samples;
            if !r.pass {
                failed.push(format!("{}: {}", spec.label, r.message.unwrap_or_default()));
            }
        }
    }
    let elapsed = t.elapsed();
    if elapsed > Duration::from_secs(120) {
        failed.push(format!("runtime {elapsed:.1?} > 2 min"));
    }
    verdict(
        1,
        "exact range invariance",
        failed,
        format!("{count} draws, max rel {worst:.2e}, {elapsed:.1?}"),
    )
}

fn c2_frozen_vs_fd(file: &AuditFile) -> Verdict {
    let worst = reports(file, "frozen_vs_fd")
        .filter_map(|r| r.scalar_value("rel_frobenius"))
        .fold(0.0, f64::max);
    let n = reports(file, "frozen_vs_fd").count();
    verdict(
        2,
        "frozen operator vs finite differences",
        failures(reports(file, "frozen_vs_fd")),
        format!("{n} instances, max rel {worst:.2e}"),
    )
}

fn c3_spectral(file: &AuditFile) -> Verdict {
    let mut failed = failures(reports(file, "spectral_bounds_random").chain(reports(file, "spectral_precondition_rejects")));
    let random: usize = reports(file, "spectral_bounds_random").map(|r| r.samples).sum();
    let rejects = reports(file, "spectral_precondition_rejects").count();
    if random != 100 || rejects != 2 {
        failed.push(format!(
            "expected 2x50 random pairs and 2 violating pairs, got {random} and {rejects}"
        ));
    }
    verdict(
        3,
        "spectral bounds",
        failed,
        format!("{random} random pairs, {rejects} violating pairs rejected"),
    )
}

fn c4_rid(file: &AuditFile) -> Verdict {
    let rid: Vec<&AuditReport> = reports(file, "rid_constant").chain(reports(file, "rid_monotone")).collect();
    let values: Vec<String> = reports(file, "rid_monotone")
        .map(|r| {
            format!(
                "{} {:.3}/{:.3}",
                r.instance,
                r.scalar_value("c_hat_rho").unwrap_or(f64::NAN),
                r.scalar_value("c_hat_half_rho").unwrap_or(f64::NAN)
            )
        })
        .collect();
    verdict(
        4,
        "rid constant",
        failures(rid.into_iter()),
        format!("c_hat(rho)/c_hat(rho/2): {}", values.join(", ")),
    )
}

fn relative_error_series(record: &Record) -> Vec<f64> {
    record.entries.iter().map(|e| e.error.unwrap_or(f64::INFINITY)).collect()
}

fn potential_1d(delta: &str, method: &str, max_iter: usize, stop: &str) -> ExperimentConfig {
    ExperimentConfig::parse(&format!(
        "[problem]\nkind = \"potential\"\ndim = 1\nn = 33\nm = 4\n[noise]\ndelta = {delta}\nseed = 1\n[solver]\nmethod = \"{method}\"\nmax_iter = {max_iter}\nstop = \"{stop}\"\n"
    ))
    .expect("acceptance configuration parses")
}

fn c5_noise_free() -> Verdict {
    let mut failed = Vec::new();
    let mut details = Vec::new();
    for (method, budget) in [(Method::FrozenNewton, 30), (Method::AltFrozenNewton, 45), (Method::Newton, 45)] {
        let t = Instant::now();
        let cfg = potential_1d("0", method.name(), budget, "max_iter");
        let outcome = build_from_config(&cfg).and_then(|p| {
            let y = p.exact_data()?;
            let solver = cfg.solver.solver_config(method);
            assert_eq!(solver.stop, StopRule::None);
            solve(&p, &y, 0.0, &solver)
        });
        let record = match outcome {
            Ok(r) => r,
            Err(e) => {
                failed.push(format!("{method}: {e}"));
                continue;
            }
        };
        let errors = relative_error_series(&record);
        let reached = errors.iter().position(|&e| e < 1e-3).map(|i| record.entries[i].n);
        // Largest relative increase of the error between consecutive iterates from n = 5 on.
        let mut increase: Option<(usize, f64)> = None;
        for w in record.entries.windows(2).filter(|w| w[0].n >= 5) {
            let (a, b) = (w[0].error.unwrap_or(f64::INFINITY), w[1].error.unwrap_or(f64::INFINITY));
            let rel = (b - a) / a;
            if (b > a || b.is_nan()) && increase.is_none_or(|(_, worst)| rel > worst) {
                increase = Some((w[1].n, rel));
            }
        }
        let elapsed = t.elapsed();
        match reached {
            Some(n) if n <= budget => {}
            _ => failed.push(format!(
                "{method}: error {:.2e} after {budget} iterations",
                errors.last().unwrap_or(&f64::NAN)
            )),
        }
        if let Some((n, rel)) = increase {
            failed.push(format!(
                "{method}: error increases after n = 5 (largest relative increase {rel:.1e} at n = {n})"
            ));
        }
        if elapsed > Duration::from_secs(30) {
            failed.push(format!("{method}: runtime {elapsed:.1?} > 30 s"));
        }
        details.push(format!(
            "{method} < 1e-3 at n = {}, final {:.2e}, {elapsed:.1?}",
            reached.map_or("-".to_string(), |n| n.to_string()),
            errors.last().unwrap_or(&f64::NAN)
        ));
    }
    verdict(5, "noise-free convergence", failed, details.join("; "))
}

fn c6_regularization() -> Verdict {
    let deltas = [1e-2, 1e-3, 1e-4];
    let mut failed = Vec::new();
    let mut details = Vec::new();
    for method in [Method::FrozenNewton, Method::Variational] {
        let mut finals = Vec::new();
        for delta in deltas {
            let cfg = potential_1d(&format!("{delta:e}"), method.name(), 50, "discrepancy");
            let outcome = build_from_config(&cfg).and_then(|p| {
                let y = make_noise(&p.exact_data()?, p.data_space(), delta, 1)?;
                solve(&p, &y, delta, &cfg.solver.solver_config(method))
            });
            match outcome {
                Ok(r) => finals.push((
                    delta,
                    r.final_error().unwrap_or(f64::INFINITY),
                    r.final_j_spread().unwrap_or(f64::INFINITY),
                    r.stop_reason,
                )),
                Err(e) => failed.push(format!("{method} delta {delta:e}: {e}")),
            }
        }
        for w in finals.windows(2) {
            if w[1].1 > w[0].1 {
                failed.push(format!(
                    "{method}: error {:.3e} at delta {:e} exceeds {:.3e} at delta {:e}",
                    w[1].1, w[1].0, w[0].1, w[0].0
                ));
            }
            if w[1].2 > w[0].2 {
                failed.push(format!(
                    "{method}: j-spread {:.3e} at delta {:e} exceeds {:.3e} at delta {:e}",
                    w[1].2, w[1].0, w[0].2, w[0].0
                ));
            }
        }
        let fmt: Vec<String> = finals.iter().map(|f| format!("{:.3e}/{:.1e} ({})", f.1, f.2, f.3.name())).collect();
        details.push(format!("{method}: {}", fmt.join(", ")));
    }
    verdict(6, "regularization property", failed, details.join("; "))
}

fn c7_nullspace(file: &AuditFile) -> Verdict {
    let mut failed = failures(reports(file, "nullspace_joint"));
    let mut details = Vec::new();
    for kind in ProblemKind::PDE {
        let found: Vec<&AuditReport> = reports(file, "nullspace_joint")
            .filter(|r| r.instance.starts_with(kind.name()))
            .collect();
        if found.is_empty() {
            failed.push(format!("no nullspace report for {kind}"));
        }
        for r in found {
            let spectra = matches!(r.measured.get("spectrum_k"), Some(Measure::List(_)))
                && matches!(r.measured.get("spectrum_joint"), Some(Measure::List(_)));
            if !spectra {
                failed.push(format!("{}: spectra missing", r.instance));
            }
            details.push(format!(
                "{} {}->{}",
                r.instance,
                r.count_value("nullity_k").map_or("-".into(), |v| v.to_string()),
                r.count_value("nullity_joint").map_or("-".into(), |v| v.to_string())
            ));
        }
    }
    verdict(
        7,
        "nullspace diagnostics",
        failed,
        format!("nullity K->joint: {}", details.join(", ")),
    )
}

fn c8_adjoints(file: &AuditFile) -> Verdict {
    let worst = reports(file, "adjoints")
        .filter_map(|r| r.scalar_value("rel_max"))
        .fold(0.0, f64::max);
    let ops: usize = reports(file, "adjoints").map(|r| r.samples / 3).sum();
    verdict(
        8,
        "weighted adjoint identity",
        failures(reports(file, "adjoints")),
        format!("{ops} operators, max rel {worst:.2e}"),
    )
}

fn run_artifacts(dir: &std::path::Path) -> Vec<(String, Vec<u8>)> {
    let cfg = ExperimentConfig::parse(
        "[problem]\nkind = \"potential\"\n[noise]\ndelta = 1e-2, 1e-3\nseed = 1, 2\n[solver]\nmethods = frozen_newton, variational, newton\n[output]\nworkers = 3\n",
    )
    .expect("sweep configuration parses");
    let _ = sweep(&cfg, dir);
    let mut files = Vec::new();
    let mut entries: Vec<_> = std::fs::read_dir(dir)
        .map(|d| d.flatten().map(|e| e.path()).collect())
        .unwrap_or_default();
    entries.sort();
    for path in entries {
        let csv = path.join("record.csv");
        if let Ok(bytes) = std::fs::read(&csv) {
            files.push((path.file_name().unwrap().to_string_lossy().into_owned(), bytes));
        }
    }
    files
}

fn c9_determinism(first: &AuditFile) -> Verdict {
    let mut failed = Vec::new();
    let second = run_suite(Target::All);
    if audit_json(first) != audit_json(&second) {
        failed.push("audit.json differs between runs".into());
    }
    let (a, b) = (tempfile::tempdir().expect("tempdir"), tempfile::tempdir().expect("tempdir"));
    let (ra, rb) = (run_artifacts(a.path()), run_artifacts(b.path()));
    if ra.is_empty() || ra != rb {
        failed.push(format!("record.csv artifacts differ ({} vs {} files)", ra.len(), rb.len()));
    }
    // The library record itself must be bit-identical too.
    let cfg = potential_1d("1e-3", "frozen_newton", 50, "discrepancy");
    let once = || {
        let p = build_from_config(&cfg).expect("instance builds");
        let y = make_noise(&p.exact_data().expect("data"), p.data_space(), 1e-3, 1).expect("noise");
        record_csv(&solve(&p, &y, 1e-3, &cfg.solver.solver_config(Method::FrozenNewton)).expect("run"))
    };
    if once() != once() {
        failed.push("in-process records differ".into());
    }
    verdict(
        9,
        "determinism",
        failed,
        format!("audit.json {} bytes, {} record.csv files", audit_json(first).len(), ra.len()),
    )
}

fn main() -> ExitCode {
    let t = Instant::now();
    let mut verdicts = vec![c1_range_invariance()];
    let file = run_suite(Target::All);
    verdicts.push(c2_frozen_vs_fd(&file));
    verdicts.push(c3_spectral(&file));
    verdicts.push(c4_rid(&file));
    verdicts.push(c5_noise_free());
    verdicts.push(c6_regularization());
    verdicts.push(c7_nullspace(&file));
    verdicts.push(c8_adjoints(&file));
    verdicts.push(c9_determinism(&file));
    for v in &verdicts {
        println!("{} {}. {}: {}", if v.pass { "PASS" } else { "FAIL" }, v.id, v.title, v.detail);
    }
    let failed = verdicts.iter().filter(|v| !v.pass).count();
    println!(
        "{} of {} criteria passed ({:.1?})",
        verdicts.len() - failed,
        verdicts.len(),
        t.elapsed()
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
