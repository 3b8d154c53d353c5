//! The audit suite behind the `verify` verb.

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rangeinv::numerics::default_fd_step;
use rangeinv::problems::{Formulation, InverseProblem, ProblemInstance, ProblemKind};
use rangeinv::verify::{
    baseline_norm, check_adjoints, check_frozen_vs_fd, check_range_invariance, check_range_invariance_dual_sign, check_spectral_bounds,
    estimate_rid_constant, nullspace_audit, random_spectral_pair, sample_nonlinearity_constants, AuditReport, Measure, SpectralCase,
    SPECTRAL_SLACK,
};
use rangeinv::{LinOp, Problem};
use serde::Serialize;

use crate::config::ExperimentConfig;
use crate::instance::build_from_config;

pub const RANGE_DRAWS: usize = 20;
pub const RANGE_RADIUS: f64 = 0.3;
pub const RID_SAMPLES: usize = 50;
/// `ρ` of the rid audit relative to the norm of the initial coefficient.
pub const RID_RHO_FACTOR: f64 = 0.1;
pub const NONLINEARITY_SAMPLES: usize = 10;
pub const NULLSPACE_REL_TOL: f64 = 1e-6;
pub const FD_TOL: f64 = 1e-6;
pub const FD_TOL_TANH: f64 = 1e-5;
pub const SPECTRAL_PAIRS: usize = 50;
pub const SPECTRAL_ALPHAS: [f64; 6] = [1e-6, 1e-4, 1e-2, 1.0, 1e1, 1e2];
/// Dense `K` with more entries than this is left out of the adjoint audit
/// (it is never assembled by the other audits either).
pub const ADJOINT_MAX_ENTRIES: usize = 20_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Target {
    Potential,
    Robin,
    Diffabs,
    Spectral,
    All,
}

/// One default instance of the suite.
#[derive(Debug, Clone, PartialEq)]
pub struct InstanceSpec {
    pub label: String,
    pub kind: ProblemKind,
    pub dim: usize,
    pub phi: &'static str,
    pub formulation: Formulation,
    pub seed: u64,
}

impl InstanceSpec {
    fn config(&self) -> ExperimentConfig {
        let src = format!(
            "[problem]\nkind = \"{}\"\ndim = {}\nphi = \"{}\"\nformulation = \"{}\"\n",
            self.kind, self.dim, self.phi, self.formulation
        );
        ExperimentConfig::parse(&src).expect("default instance configuration parses")
    }

    pub fn build(&self) -> rangeinv::Result<Problem> {
        build_from_config(&self.config())
    }

    fn tanh(&self) -> bool {
        self.phi == "tanh"
    }

    /// The primary instances of each kind: reduced formulation, linear Φ.
    pub fn is_default(&self) -> bool {
        self.formulation == Formulation::Reduced && !self.tanh()
    }
}

pub fn instances(kinds: &[ProblemKind]) -> Vec<InstanceSpec> {
    let mut out = Vec::new();
    let mut seed = 100;
    for &kind in kinds {
        let variants: &[(usize, &'static str)] = match kind {
            ProblemKind::Potential => &[(1, "linear"), (2, "linear")],
            ProblemKind::Robin => &[(2, "linear"), (2, "tanh")],
            _ => &[(2, "linear")],
        };
        for &formulation in &[Formulation::Reduced, Formulation::AllAtOnce] {
            for &(dim, phi) in variants {
                let mut label = format!("{kind} {dim}d");
                if kind == ProblemKind::Robin {
                    label = format!("{kind} {phi}");
                }
                label.push_str(&format!(" {formulation}"));
                seed += 1;
                out.push(InstanceSpec {
                    label,
                    kind,
                    dim,
                    phi,
                    formulation,
                    seed,
                });
            }
        }
    }
    out
}

fn kinds_for(target: Target) -> Vec<ProblemKind> {
    match target {
        Target::Potential => vec![ProblemKind::Potential],
        Target::Robin => vec![ProblemKind::Robin],
        Target::Diffabs => vec![ProblemKind::DiffAbs],
        Target::Spectral => vec![],
        Target::All => ProblemKind::PDE.to_vec(),
    }
}

fn labelled(mut report: AuditReport, label: &str) -> AuditReport {
    report.instance = label.to_string();
    report
}

fn error_report(check: &str, label: &str, e: impl std::fmt::Display) -> AuditReport {
    let mut report = AuditReport::new(check, label);
    report.message = Some(e.to_string());
    report
}

/// Uniform draw with `|x - x0|_inf <= radius`, states included.
fn uniform_draw(problem: &Problem, rng: &mut ChaCha8Rng, radius: f64) -> DVector<f64> {
    let x0 = problem.x0();
    x0 + DVector::from_fn(x0.len(), |_, _| rng.random_range(-radius..=radius))
}

fn max_scalar<'a>(reports: impl Iterator<Item = &'a AuditReport>, key: &str) -> f64 {
    reports.filter_map(|r| r.scalar_value(key)).fold(0.0, f64::max)
}

/// Range identity over `RANGE_DRAWS` admissible draws, one aggregated report;
/// for diffabs also the context report of the opposite correction sign.
pub fn range_invariance_audit(problem: &Problem, label: &str, seed: u64) -> Vec<AuditReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut draws = Vec::new();
    let mut rejected = 0;
    while draws.len() < RANGE_DRAWS && rejected <= 10 * RANGE_DRAWS {
        let x = uniform_draw(problem, &mut rng, RANGE_RADIUS);
        // Draws outside the domain of the forward map are redrawn.
        if problem.forward(&x).is_err() {
            rejected += 1;
            continue;
        }
        draws.push(match problem {
            ProblemInstance::DiffAbs(d) => check_range_invariance_dual_sign(d, &x),
            _ => check_range_invariance(problem, &x),
        });
    }
    let mut report = AuditReport::new("range_invariance", label);
    report
        .threshold("rel", rangeinv::verify::RANGE_TOL)
        .scalar("radius_inf", RANGE_RADIUS);
    report.seed = Some(seed);
    report.samples = draws.len();
    report.scalar("rel_max", max_scalar(draws.iter(), "rel"));
    report.count("rejected", rejected);
    let failures: Vec<String> = draws.iter().filter(|d| !d.pass).filter_map(|d| d.message.clone()).collect();
    report.pass = draws.len() == RANGE_DRAWS && draws.iter().all(|d| d.pass);
    if !report.pass {
        report.message = Some(if failures.is_empty() {
            format!(
                "{} of {} draws above threshold",
                draws.iter().filter(|d| !d.pass).count(),
                draws.len()
            )
        } else {
            failures.join("; ")
        });
    }
    let mut out = vec![report];
    if matches!(problem, ProblemInstance::DiffAbs(_)) {
        let mut minus = AuditReport::new("range_invariance_minus_sign", label);
        minus.context_only = true;
        minus.pass = true;
        minus.seed = Some(seed);
        minus.samples = draws.len();
        let values: Vec<f64> = draws.iter().filter_map(|d| d.scalar_value("rel_minus_sign")).collect();
        minus.scalar("rel_max", values.iter().copied().fold(0.0, f64::max));
        minus.scalar("rel_min", values.iter().copied().fold(f64::INFINITY, f64::min));
        out.push(minus);
    }
    out
}

pub fn fd_audit(problem: &Problem, spec: &InstanceSpec) -> AuditReport {
    let tol = if spec.tanh() { FD_TOL_TANH } else { FD_TOL };
    labelled(check_frozen_vs_fd(problem, default_fd_step(problem.x0()), tol), &spec.label)
}

/// rid constant at `ρ` and `ρ/2`, and the monotonicity verdict.
pub fn rid_audits(problem: &Problem, label: &str, seed: u64) -> Vec<AuditReport> {
    let rho = match baseline_norm(problem) {
        Ok(norm) => RID_RHO_FACTOR * norm,
        Err(e) => return vec![error_report("rid_constant", label, e)],
    };
    let full = estimate_rid_constant(problem, rho, RID_SAMPLES, seed);
    let half = estimate_rid_constant(problem, rho / 2.0, RID_SAMPLES, seed);
    let (full, half) = match (full, half) {
        (Ok(a), Ok(b)) => (labelled(a, label), labelled(b, label)),
        (Err(e), _) | (_, Err(e)) => return vec![error_report("rid_constant", label, e)],
    };
    let mut mono = AuditReport::new("rid_monotone", label);
    mono.seed = Some(seed);
    mono.samples = 2 * RID_SAMPLES;
    match (full.scalar_value("c_hat"), half.scalar_value("c_hat")) {
        (Some(a), Some(b)) => {
            mono.scalar("c_hat_rho", a).scalar("c_hat_half_rho", b);
            mono.pass = b <= a;
            if !mono.pass {
                mono.message = Some(format!("c_hat(rho/2) = {b:e} > c_hat(rho) = {a:e}"));
            }
        }
        _ => mono.message = Some("c_hat unavailable".into()),
    }
    vec![full, half, mono]
}

pub fn nonlinearity_audit(problem: &Problem, label: &str, seed: u64) -> AuditReport {
    let outcome =
        baseline_norm(problem).and_then(|norm| sample_nonlinearity_constants(problem, RID_RHO_FACTOR * norm, NONLINEARITY_SAMPLES, seed));
    match outcome {
        Ok(report) => labelled(report, label),
        Err(e) => {
            let mut report = error_report("nonlinearity_constants", label, e);
            report.context_only = true;
            report
        }
    }
}

pub fn nullspace(problem: &Problem, label: &str) -> AuditReport {
    match nullspace_audit(problem, NULLSPACE_REL_TOL) {
        Ok(report) => labelled(report, label),
        Err(e) => error_report("nullspace_joint", label, e),
    }
}

/// Operators of one instance for the adjoint audit: `K` (when small enough
/// to be dense), `P` and the problem's building blocks.
pub fn instance_operators(problem: &Problem, label: &str) -> (Vec<(String, LinOp)>, Vec<String>) {
    let mut ops = Vec::new();
    let mut skipped = Vec::new();
    let entries = problem.data_space().dim() * problem.param_space().dim();
    if entries <= ADJOINT_MAX_ENTRIES {
        match problem.frozen_k() {
            Ok(k) => ops.push((format!("{label}: K"), k.clone())),
            Err(e) => skipped.push(format!("{label}: K ({e})")),
        }
    } else {
        skipped.push(format!("{label}: K ({entries} entries)"));
    }
    ops.push((format!("{label}: P"), problem.penalty_op().clone()));
    for (name, op) in problem.auxiliary_operators() {
        ops.push((format!("{label}: {name}"), op));
    }
    (ops, skipped)
}

pub fn adjoint_audit(ops: &[(String, LinOp)], skipped: &[String], label: &str, seed: u64) -> AuditReport {
    let refs: Vec<(String, &LinOp)> = ops.iter().map(|(n, o)| (n.clone(), o)).collect();
    let mut report = labelled(check_adjoints(&refs, seed), label);
    if !skipped.is_empty() {
        report.text("not_assembled", skipped.join("; "));
    }
    report
}

/// All audits of one instance, in a fixed order.
pub fn instance_audits(spec: &InstanceSpec) -> Vec<AuditReport> {
    let problem = match spec.build() {
        Ok(p) => p,
        Err(e) => return vec![error_report("build", &spec.label, e)],
    };
    let label = spec.label.as_str();
    let mut out = range_invariance_audit(&problem, label, spec.seed);
    out.push(fd_audit(&problem, spec));
    if spec.formulation == Formulation::Reduced {
        out.extend(rid_audits(&problem, label, spec.seed));
        out.push(nonlinearity_audit(&problem, label, spec.seed));
    }
    if spec.is_default() {
        out.push(nullspace(&problem, label));
    }
    let (ops, skipped) = instance_operators(&problem, label);
    out.push(adjoint_audit(&ops, &skipped, label, spec.seed));
    out
}

/// The (K, P) pair violating case (a), respectively (b).
pub fn violating_pair(case: SpectralCase) -> (LinOp, LinOp) {
    use nalgebra::DMatrix;
    use rangeinv::Space;
    let (k, p) = match case {
        SpectralCase::A => (DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]), DMatrix::identity(2, 2)),
        SpectralCase::B => (
            DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 0.0, 0.0]),
            DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]),
        ),
    };
    (
        LinOp::new(k, Space::unit(2), Space::unit(2)).expect("finite"),
        LinOp::new(p, Space::unit(2), Space::unit(2)).expect("finite"),
    )
}

/// Randomized spectral-bound checks per case, the violating pairs, and the
/// adjoint audit of every operator drawn.
pub fn spectral_audits(seed: u64) -> Vec<AuditReport> {
    let mut out = Vec::new();
    let mut ops = Vec::new();
    for (i, case) in [SpectralCase::A, SpectralCase::B].into_iter().enumerate() {
        let case_seed = seed + i as u64;
        let mut rng = ChaCha8Rng::seed_from_u64(case_seed);
        let mut report = AuditReport::new("spectral_bounds_random", format!("case {}", case_name(case)));
        report.seed = Some(case_seed);
        report.samples = SPECTRAL_PAIRS;
        report.threshold("constant", case.constant()).threshold("slack", SPECTRAL_SLACK);
        let mut failures = Vec::new();
        let (mut worst_kk, mut worst_k) = (0.0f64, 0.0f64);
        for j in 0..SPECTRAL_PAIRS {
            let (k, p) = random_spectral_pair(case, &mut rng);
            let r = check_spectral_bounds(&k, &p, &SPECTRAL_ALPHAS, case);
            if let (Some(Measure::List(a)), Some(Measure::List(b))) =
                (r.measured.get("norm_resolvent_kk"), r.measured.get("norm_resolvent_k"))
            {
                worst_kk = a.iter().copied().fold(worst_kk, f64::max);
                for (value, alpha) in b.iter().zip(SPECTRAL_ALPHAS) {
                    worst_k = worst_k.max(value / (case.constant() / alpha).sqrt());
                }
            }
            if !r.pass {
                failures.push(format!("pair {j}: {}", r.message.unwrap_or_default()));
            }
            ops.push((format!("case {} pair {j}: K", case_name(case)), k));
            ops.push((format!("case {} pair {j}: P", case_name(case)), p));
        }
        report
            .list("alphas", SPECTRAL_ALPHAS)
            .scalar("max_norm_resolvent_kk", worst_kk)
            .scalar("max_ratio_resolvent_k_to_bound", worst_k);
        report.pass = failures.is_empty();
        if !report.pass {
            report.message = Some(failures.join("; "));
        }
        out.push(report);

        let (k, p) = violating_pair(case);
        let inner = check_spectral_bounds(&k, &p, &SPECTRAL_ALPHAS, case);
        let mut rejects = AuditReport::new("spectral_precondition_rejects", format!("case {} violating pair", case_name(case)));
        if let Some(v) = inner.scalar_value("precondition_residual") {
            rejects.scalar("precondition_residual", v);
        }
        rejects.pass = !inner.pass && inner.measured.get("precondition") == Some(&Measure::Text("violated".into()));
        if !rejects.pass {
            rejects.message = Some("violating pair was accepted".into());
        }
        out.push(rejects);
        ops.push((format!("case {} violating: K", case_name(case)), k));
        ops.push((format!("case {} violating: P", case_name(case)), p));
    }
    out.push(adjoint_audit(&ops, &[], "spectral pairs", seed));
    out
}

fn case_name(case: SpectralCase) -> &'static str {
    match case {
        SpectralCase::A => "a",
        SpectralCase::B => "b",
    }
}

pub const SPECTRAL_SEED: u64 = 7;

#[derive(Debug, Clone, Serialize)]
pub struct AuditFile {
    pub version: &'static str,
    pub problem: String,
    pub pass: bool,
    pub reports: Vec<AuditReport>,
}

/// Runs the suite; instances are audited concurrently, reports keep a fixed
/// order.
pub fn run_suite(target: Target) -> AuditFile {
    let specs = instances(&kinds_for(target));
    let mut reports: Vec<AuditReport> = std::thread::scope(|scope| {
        let handles: Vec<_> = specs.iter().map(|spec| scope.spawn(move || instance_audits(spec))).collect();
        handles.into_iter().flat_map(|h| h.join().expect("audit thread panicked")).collect()
    });
    if matches!(target, Target::Spectral | Target::All) {
        reports.extend(spectral_audits(SPECTRAL_SEED));
    }
    let pass = reports.iter().all(|r| r.pass || r.context_only);
    let problem = format!("{target:?}").to_lowercase();
    AuditFile {
        version: env!("CARGO_PKG_VERSION"),
        problem,
        pass,
        reports,
    }
}

pub fn audit_json(file: &AuditFile) -> String {
    serde_json::to_string_pretty(file).expect("audit file serializes") + "\n"
}

/// Headline value of a report for the table.
fn headline(report: &AuditReport) -> String {
    const KEYS: [&str; 8] = [
        "rel_max",
        "rel_frobenius",
        "c_hat",
        "c_hat_half_rho",
        "tangential_cone",
        "max_norm_resolvent_kk",
        "precondition_residual",
        "rel_minus_sign",
    ];
    for key in KEYS {
        if let Some(v) = report.scalar_value(key) {
            return format!("{key} {v:.3e}");
        }
    }
    if let (Some(k), Some(j)) = (report.count_value("nullity_k"), report.count_value("nullity_joint")) {
        return format!("nullity K {k}, joint {j}");
    }
    String::new()
}

pub fn print_table(file: &AuditFile) {
    for r in &file.reports {
        let verdict = if r.context_only {
            "info"
        } else if r.pass {
            "PASS"
        } else {
            "FAIL"
        };
        println!("{verdict:<5} {:<30} {:<28} {}", r.check, r.instance, headline(r));
        if !r.pass && !r.context_only {
            if let Some(m) = &r.message {
                println!("      {m}");
            }
        }
    }
    let failed = file.reports.iter().filter(|r| !r.pass && !r.context_only).count();
    println!("{} audits, {failed} failed", file.reports.len());
}
