//! Numerical audits of the hypotheses behind the convergence theory.
//!
//! Every audit returns an [`AuditReport`]; failures of the audited code are
//! reported, not propagated, except for misuse (missing truth, bad
//! arguments).

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector, SymmetricEigen, SVD};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::numerics::{fd_columns, LinOpRep, WeightedSpace};
use crate::problems::{CorrectionSign, DiffAbsProblem, InverseProblem};
use crate::Real;

/// Relative threshold of the range-invariance identity.
pub const RANGE_TOL: f64 = 1e-9;
/// Relative threshold of the adjoint probe.
pub const ADJOINT_TOL: f64 = 1e-12;
/// Slack of the spectral bounds.
pub const SPECTRAL_SLACK: f64 = 1e-8;
/// Tolerance of the case (a)/(b) precondition checks.
pub const PRECONDITION_TOL: f64 = 1e-10;

/// A measured quantity.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(untagged)]
pub enum Measure {
    Scalar(f64),
    Count(usize),
    List(Vec<f64>),
    Text(String),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AuditReport {
    pub check: String,
    pub instance: String,
    pub measured: BTreeMap<String, Measure>,
    pub thresholds: BTreeMap<String, f64>,
    pub pass: bool,
    /// Reported for information; never affects an overall verdict.
    pub context_only: bool,
    pub samples: usize,
    pub seed: Option<u64>,
    pub message: Option<String>,
}

impl AuditReport {
    pub fn new(check: &str, instance: impl Into<String>) -> Self {
        Self {
            check: check.to_string(),
            instance: instance.into(),
            measured: BTreeMap::new(),
            thresholds: BTreeMap::new(),
            pass: false,
            context_only: false,
            samples: 0,
            seed: None,
            message: None,
        }
    }

    pub fn scalar(&mut self, key: &str, value: impl Real) -> &mut Self {
        self.measured.insert(key.into(), Measure::Scalar(value.as_f64()));
        self
    }

    pub fn count(&mut self, key: &str, value: usize) -> &mut Self {
        self.measured.insert(key.into(), Measure::Count(value));
        self
    }

    pub fn list<T: Real>(&mut self, key: &str, values: impl IntoIterator<Item = T>) -> &mut Self {
        self.measured
            .insert(key.into(), Measure::List(values.into_iter().map(|v| v.as_f64()).collect()));
        self
    }

    pub fn text(&mut self, key: &str, value: impl Into<String>) -> &mut Self {
        self.measured.insert(key.into(), Measure::Text(value.into()));
        self
    }

    pub fn threshold(&mut self, key: &str, value: f64) -> &mut Self {
        self.thresholds.insert(key.into(), value);
        self
    }

    fn failed(mut self, message: impl Into<String>) -> Self {
        self.pass = false;
        self.message = Some(message.into());
        self
    }

    pub fn scalar_value(&self, key: &str) -> Option<f64> {
        match self.measured.get(key) {
            Some(Measure::Scalar(v)) => Some(*v),
            Some(Measure::Count(c)) => Some(*c as f64),
            _ => None,
        }
    }

    pub fn count_value(&self, key: &str) -> Option<usize> {
        match self.measured.get(key) {
            Some(Measure::Count(c)) => Some(*c),
            _ => None,
        }
    }
}

fn rel_floor<T: Real>(num: T, den: T) -> T {
    let tiny = T::lit(f64::MIN_POSITIVE);
    let floor = if tiny > T::zero() { tiny } else { T::default_epsilon() };
    num / den.max(floor)
}

/// `|F(x) - F(x0) - K r(x)|_Y / max(|F(x) - F(x0)|_Y, ε)`.
pub fn range_identity_residual<T: Real, P: InverseProblem<T> + ?Sized>(problem: &P, x: &DVector<T>, r: &DVector<T>) -> Result<(T, T)> {
    let y = problem.data_space();
    let diff = problem.forward(x)? - problem.forward(problem.x0())?;
    let kr = problem.apply_k(r)?;
    let den = y.norm(&diff)?;
    Ok((rel_floor(y.norm(&(diff - kr))?, den), den))
}

pub fn check_range_invariance<T: Real, P: InverseProblem<T> + ?Sized>(problem: &P, x: &DVector<T>) -> AuditReport {
    let mut report = AuditReport::new("range_invariance", problem.describe());
    report.threshold("rel", RANGE_TOL);
    report.samples = 1;
    let outcome = problem.r_map(x).and_then(|r| range_identity_residual(problem, x, &r));
    match outcome {
        Ok((rel, den)) => {
            report.scalar("rel", rel).scalar("data_change", den);
            report.pass = rel <= T::lit(RANGE_TOL);
            report
        }
        Err(e) => report.failed(e.to_string()),
    }
}

/// Range identity with both correction signs of the diffusion/absorption
/// r-map; the verdict uses the plus sign only.
pub fn check_range_invariance_dual_sign<T: Real>(problem: &DiffAbsProblem<T>, x: &DVector<T>) -> AuditReport {
    let mut report = check_range_invariance(problem, x);
    let minus = problem
        .r_map_with_sign(x, CorrectionSign::Minus)
        .and_then(|r| range_identity_residual(problem, x, &r));
    match minus {
        Ok((rel, _)) => report.scalar("rel_minus_sign", rel),
        Err(e) => report.text("rel_minus_sign", e.to_string()),
    };
    report
}

fn standard_normal<T: Real>(rng: &mut ChaCha8Rng, n: usize) -> DVector<T> {
    DVector::from_fn(n, |_, _| T::lit(rng.sample::<f64, _>(StandardNormal)))
}

/// Random point at distance `radius * u` from `center` along the problem's
/// sampling direction, `u` uniform.
fn ball_point<T: Real, P: InverseProblem<T> + ?Sized>(
    problem: &P,
    rng: &mut ChaCha8Rng,
    center: &DVector<T>,
    radius: T,
) -> Result<DVector<T>> {
    let space = problem.param_space();
    loop {
        let d = problem.random_direction(rng);
        let norm = space.norm(&d)?;
        if norm > T::zero() {
            let u = T::lit(rng.random_range(0.0..1.0f64)).max(T::lit(1e-3));
            return Ok(center + d * (radius * u / norm));
        }
    }
}

/// Coefficient-space norm of the collapsed linearization point.
pub fn baseline_norm<T: Real, P: InverseProblem<T> + ?Sized>(problem: &P) -> Result<T> {
    problem.coefficient_space().norm(&problem.collapse(problem.x0())?)
}

/// Samples `c_hat = max |(r(x†) - r(x)) - (x† - x)| / |x† - x|` over
/// `samples` admissible points with `|x - x†| <= rho`; pass iff `c_hat < 1`.
pub fn estimate_rid_constant<T: Real, P: InverseProblem<T> + ?Sized>(
    problem: &P,
    rho: T,
    samples: usize,
    seed: u64,
) -> Result<AuditReport> {
    if !(rho > T::zero()) {
        return Err(Error::Argument(format!("rho must be positive, got {}", rho.as_f64())));
    }
    if samples < 10 {
        return Err(Error::Argument(format!("at least 10 samples required, got {samples}")));
    }
    let truth = problem
        .truth()
        .ok_or_else(|| Error::Configuration("rid audit needs a configured truth".into()))?;
    let mut report = AuditReport::new("rid_constant", problem.describe());
    report.samples = samples;
    report.seed = Some(seed);
    report.threshold("c_hat", 1.0).scalar("rho", rho);
    let space = problem.param_space();
    let r_truth = match problem.r_map(truth) {
        Ok(r) => r,
        Err(e) => return Ok(report.failed(format!("r-map at truth: {e}"))),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut c_hat = T::zero();
    let mut rejected = 0usize;
    let mut accepted = 0usize;
    while accepted < samples {
        if rejected > 10 * samples {
            return Ok(report.failed(format!("only {accepted} admissible samples after {rejected} rejections")));
        }
        let x = ball_point(problem, &mut rng, truth, rho)?;
        let r = match problem.r_map(&x) {
            Ok(r) => r,
            Err(_) => {
                rejected += 1;
                continue;
            }
        };
        let dx = truth - &x;
        let num = space.norm(&(&r_truth - r - &dx))?;
        c_hat = c_hat.max(num / space.norm(&dx)?);
        accepted += 1;
    }
    report.scalar("c_hat", c_hat).count("rejected", rejected);
    report.pass = c_hat < T::one();
    if !report.pass {
        report.message = Some(format!("c_hat = {:e} at rho = {:e}", c_hat.as_f64(), rho.as_f64()));
    }
    Ok(report)
}

/// Tangential-cone and Newton–Mysovskii ratios sampled around `x†`, with
/// directional derivatives by central differences. Context only.
pub fn sample_nonlinearity_constants<T: Real, P: InverseProblem<T> + ?Sized>(
    problem: &P,
    rho: T,
    samples: usize,
    seed: u64,
) -> Result<AuditReport> {
    let truth = problem
        .truth()
        .ok_or_else(|| Error::Configuration("nonlinearity audit needs a configured truth".into()))?;
    let mut report = AuditReport::new("nonlinearity_constants", problem.describe());
    report.context_only = true;
    report.samples = samples;
    report.seed = Some(seed);
    report.scalar("rho", rho);
    let y_space = problem.data_space();
    let f_truth = problem.forward(truth)?;
    let directional = |at: &DVector<T>, d: &DVector<T>| -> Result<DVector<T>> {
        let t = T::lit(1e-4);
        Ok((problem.forward(&(at + d * t))? - problem.forward(&(at - d * t))?) / (t + t))
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut tc, mut nm) = (T::zero(), T::zero());
    let mut used = 0usize;
    for _ in 0..samples {
        let x = ball_point(problem, &mut rng, truth, rho)?;
        let d = &x - truth;
        let Ok(fx) = problem.forward(&x) else { continue };
        let (Ok(dfx), Ok(dft)) = (directional(&x, &d), directional(truth, &d)) else {
            continue;
        };
        let change = y_space.norm(&(&fx - &f_truth))?;
        tc = tc.max(rel_floor(y_space.norm(&(&fx - &f_truth - &dfx))?, change));
        nm = nm.max(rel_floor(y_space.norm(&(&dfx - &dft))?, y_space.norm(&dft)?));
        used += 1;
    }
    report
        .scalar("tangential_cone", tc)
        .scalar("newton_mysovskii", nm)
        .count("used", used);
    report.pass = true;
    Ok(report)
}

/// Structural hypothesis on `(K, P)` under which the spectral bounds hold.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum SpectralCase {
    /// `N(K)^⊥ ⊆ N(P)`, bound constant 1.
    A,
    /// `P*P` commutes with `K*K`, bound constant 2.
    B,
}

impl SpectralCase {
    pub fn constant(self) -> f64 {
        match self {
            SpectralCase::A => 1.0,
            SpectralCase::B => 2.0,
        }
    }
}

fn spectral_norm<T: Real>(m: &DMatrix<T>) -> T {
    if m.is_empty() {
        return T::zero();
    }
    SVD::new(m.clone(), false, false)
        .singular_values
        .iter()
        .copied()
        .fold(T::zero(), T::max)
}

/// Precondition residual: `|P̂ V_r|` for case (a), `|[K̂ᵀK̂, P̂ᵀP̂]|` for case (b),
/// relative to the scale of the operators involved.
pub fn case_violation<T: Real>(k: &LinOpRep<T>, p: &LinOpRep<T>, case: SpectralCase) -> T {
    let kh = k.euclidean_matrix();
    let ph = p.euclidean_matrix();
    match case {
        SpectralCase::A => {
            let n = kh.ncols();
            let padded = if kh.nrows() < n {
                kh.clone().resize_vertically(n, T::zero())
            } else {
                kh.clone()
            };
            let svd = SVD::new(padded, false, true);
            let smax = svd.singular_values.iter().copied().fold(T::zero(), T::max);
            let v_t = svd.v_t.expect("right singular vectors requested");
            let rows: Vec<usize> = (0..svd.singular_values.len())
                .filter(|&i| svd.singular_values[i] > T::lit(PRECONDITION_TOL) * smax)
                .collect();
            if rows.is_empty() {
                return T::zero();
            }
            let v_r = DMatrix::from_fn(n, rows.len(), |i, j| v_t[(rows[j], i)]);
            spectral_norm(&(&ph * v_r)) / spectral_norm(&ph).max(T::one())
        }
        SpectralCase::B => {
            let kk = kh.transpose() * &kh;
            let pp = ph.transpose() * &ph;
            let comm = &pp * &kk - &kk * &pp;
            spectral_norm(&comm) / (spectral_norm(&kk) * spectral_norm(&pp)).max(T::one())
        }
    }
}

/// Checks `|(K*K + P*P + α)^{-1} K*K| <= C` and
/// `|(K*K + P*P + α)^{-1} K*| <= sqrt(C / α)` for every `α`, after verifying
/// the declared case.
pub fn check_spectral_bounds<T: Real>(k: &LinOpRep<T>, p: &LinOpRep<T>, alphas: &[T], case: SpectralCase) -> AuditReport {
    let mut report = AuditReport::new(
        "spectral_bounds",
        format!("K {}x{}, case {:?}", k.matrix().nrows(), k.matrix().ncols(), case),
    );
    let c = case.constant();
    report.threshold("constant", c).threshold("slack", SPECTRAL_SLACK);
    report.samples = alphas.len();
    if k.domain() != p.domain() {
        return report.failed("K and P must share a domain");
    }
    if alphas.iter().any(|a| !(*a > T::zero())) {
        return report.failed("alphas must be positive");
    }
    let violation = case_violation(k, p, case);
    report
        .scalar("precondition_residual", violation)
        .threshold("precondition", PRECONDITION_TOL);
    if !(violation <= T::lit(PRECONDITION_TOL)) {
        report.text("precondition", "violated");
        return report.failed(format!("declared case {case:?} does not hold (residual {:e})", violation.as_f64()));
    }
    let kh = k.euclidean_matrix();
    let ph = p.euclidean_matrix();
    let kk = kh.transpose() * &kh;
    let base = &kk + ph.transpose() * &ph;
    let (mut first, mut second) = (Vec::new(), Vec::new());
    let mut pass = true;
    for &alpha in alphas {
        let mut g = base.clone();
        for i in 0..g.nrows() {
            g[(i, i)] += alpha;
        }
        let Some(chol) = g.cholesky() else {
            return report.failed("regularized normal matrix is not positive definite");
        };
        let a = spectral_norm(&chol.solve(&kk));
        let b = spectral_norm(&chol.solve(&kh.transpose()));
        pass &= a.as_f64() <= c + SPECTRAL_SLACK && b.as_f64() <= (c / alpha.as_f64()).sqrt() + SPECTRAL_SLACK;
        first.push(a);
        second.push(b);
    }
    report
        .list("alphas", alphas.iter().copied())
        .list("norm_resolvent_kk", first)
        .list("norm_resolvent_k", second)
        .text("precondition", "holds");
    report.pass = pass;
    report
}

fn random_weights(rng: &mut ChaCha8Rng, n: usize) -> WeightedSpace<f64> {
    WeightedSpace::new(DVector::from_fn(n, |_, _| rng.random_range(0.5..2.0))).expect("positive weights")
}

fn gaussian(rng: &mut ChaCha8Rng, r: usize, c: usize) -> DMatrix<f64> {
    DMatrix::from_fn(r, c, |_, _| rng.sample(StandardNormal))
}

/// Maps a Euclidean representative back to weighted coordinates.
fn from_euclidean(m: DMatrix<f64>, domain: WeightedSpace<f64>, codomain: WeightedSpace<f64>) -> LinOpRep<f64> {
    let sd = domain.sqrt_weights();
    let sc = codomain.sqrt_weights();
    let m = DMatrix::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)] * sd[j] / sc[i]);
    LinOpRep::new(m, domain, codomain).expect("finite entries")
}

/// Random `(K, P)` on randomly weighted spaces satisfying the given case.
/// Case (a): `P` vanishes on the orthogonal complement of `N(K)`; case (b):
/// `K` and `P` are diagonal in a shared orthonormal basis.
pub fn random_spectral_pair(case: SpectralCase, rng: &mut ChaCha8Rng) -> (LinOpRep<f64>, LinOpRep<f64>) {
    let n = rng.random_range(3..=8);
    let m = rng.random_range(2..=8);
    let x = random_weights(rng, n);
    let yk = random_weights(rng, m);
    let yp = random_weights(rng, n);
    let (kh, ph) = match case {
        SpectralCase::A => {
            let rank = rng.random_range(1..n.min(m + 1));
            let kh = gaussian(rng, m, rank) * gaussian(rng, rank, n);
            let padded = kh.clone().resize_vertically(n.max(m), 0.0);
            let svd = SVD::new(padded, false, true);
            let v_t = svd.v_t.expect("right singular vectors requested");
            let smax = svd.singular_values.max();
            let mut proj = DMatrix::<f64>::zeros(n, n);
            for (i, &s) in svd.singular_values.iter().enumerate() {
                if s <= 1e-10 * smax {
                    let v = v_t.row(i).transpose();
                    proj += &v * v.transpose();
                }
            }
            (kh, gaussian(rng, n, n) * proj)
        }
        SpectralCase::B => {
            let q = gaussian(rng, n, n).qr().q();
            let dk = DVector::from_fn(n, |i, _| if i == 0 { 0.0 } else { rng.random_range(0.0..2.0) });
            let dp = DVector::from_fn(n, |_, _| rng.random_range(0.0..2.0));
            let kh = DMatrix::from_diagonal(&dk) * q.transpose();
            let ph = DMatrix::from_diagonal(&dp) * q.transpose();
            let kh = kh.resize_vertically(m.max(n), 0.0);
            return (
                from_euclidean(kh, x.clone(), random_weights(rng, m.max(n))),
                from_euclidean(ph, x, yp),
            );
        }
    };
    (from_euclidean(kh, x.clone(), yk), from_euclidean(ph, x, yp))
}

/// Weighted singular values, descending; Gram eigenvalues for large
/// operators.
pub fn spectrum<T: Real>(op: &LinOpRep<T>) -> DVector<T> {
    let m = op.euclidean_matrix();
    if m.nrows().min(m.ncols()) <= 400 {
        return crate::numerics::singular_values(op);
    }
    gram_spectrum(&m)
}

fn gram_spectrum<T: Real>(m: &DMatrix<T>) -> DVector<T> {
    let gram = if m.nrows() <= m.ncols() {
        m * m.transpose()
    } else {
        m.transpose() * m
    };
    let eig = SymmetricEigen::new(gram).eigenvalues;
    let mut sv: Vec<T> = eig.iter().map(|&l| l.max(T::zero()).sqrt()).collect();
    sv.sort_by(|a, b| b.partial_cmp(a).unwrap_or(std::cmp::Ordering::Equal));
    DVector::from_vec(sv)
}

fn nullity_at<T: Real>(sv: &DVector<T>, cols: usize, threshold: T) -> usize {
    cols.saturating_sub(sv.len()) + sv.iter().filter(|&&s| s <= threshold).count()
}

/// Compares the numerical nullspace of `K` stacked over `P` with that of `K`
/// alone; pass iff stacking does not enlarge it and, if `expect_trivial`,
/// the joint nullspace is `{0}`.
pub fn nullspace_joint_diag<T: Real>(k: &LinOpRep<T>, p: &LinOpRep<T>, rel_tol: T, expect_trivial: bool) -> AuditReport {
    let mut report = AuditReport::new("nullspace_joint", format!("K {}x{}", k.matrix().nrows(), k.matrix().ncols()));
    report.threshold("rel_tol", rel_tol.as_f64());
    let stacked = match k.stack(p) {
        Ok(s) => s,
        Err(e) => return report.failed(e.to_string()),
    };
    let cols = k.domain().dim();
    let sk = spectrum(k);
    let sj = spectrum(&stacked);
    let kmax = sk.iter().copied().fold(T::zero(), T::max);
    let jmax = sj.iter().copied().fold(T::zero(), T::max);
    let k_dim = if kmax == T::zero() {
        cols
    } else {
        nullity_at(&sk, cols, rel_tol * kmax)
    };
    let joint = if jmax == T::zero() {
        cols
    } else {
        nullity_at(&sj, cols, rel_tol * jmax)
    };
    finish_nullspace(&mut report, sk, sj, k_dim, joint, expect_trivial, "stacked");
    report
}

/// Nullspace audit of a problem's `(K, P)`. Large instances use
/// `N(K) ∩ N(P) = E N(K E)` with `E` an orthonormal basis of `N(P)`, which
/// avoids the SVD of the stacked operator.
pub fn nullspace_audit<T: Real, P: InverseProblem<T> + ?Sized>(problem: &P, rel_tol: T) -> Result<AuditReport> {
    let k = problem.frozen_k()?;
    let cols = k.domain().dim();
    if cols <= 1200 {
        let mut report = nullspace_joint_diag(k, problem.penalty_op(), rel_tol, problem.expects_trivial_nullspace());
        report.instance = problem.describe();
        return Ok(report);
    }
    let mut report = AuditReport::new("nullspace_joint", problem.describe());
    report.threshold("rel_tol", rel_tol.as_f64());
    let basis = problem.penalty().kernel_basis();
    let restricted = LinOpRep::new(k.matrix() * &basis, WeightedSpace::unit(basis.ncols()), k.codomain().clone())?;
    let sk = spectrum(k);
    let sr = spectrum(&restricted);
    let kmax = sk.iter().copied().fold(T::zero(), T::max);
    // |P| = 1 for the orthogonal projector penalty.
    let scale = kmax.max(if problem.penalty().is_zero() { T::zero() } else { T::one() });
    let k_dim = nullity_at(&sk, cols, rel_tol * kmax);
    let joint = nullity_at(&sr, basis.ncols(), rel_tol * scale);
    finish_nullspace(&mut report, sk, sr, k_dim, joint, problem.expects_trivial_nullspace(), "restricted");
    Ok(report)
}

fn finish_nullspace<T: Real>(
    report: &mut AuditReport,
    sk: DVector<T>,
    sj: DVector<T>,
    k_dim: usize,
    joint: usize,
    expect_trivial: bool,
    route: &str,
) {
    report
        .list("spectrum_k", sk.iter().copied())
        .list("spectrum_joint", sj.iter().copied())
        .count("nullity_k", k_dim)
        .count("nullity_joint", joint)
        .text("route", route)
        .text("expect_trivial", expect_trivial.to_string());
    report.pass = joint <= k_dim && (!expect_trivial || joint == 0);
    if !report.pass {
        report.message = Some(format!("joint nullity {joint}, K-alone nullity {k_dim}"));
    }
}

/// Relative Frobenius distance between `K` and the central-difference
/// Jacobian of the forward map at `x0`, one column at a time.
pub fn check_frozen_vs_fd<T: Real, P: InverseProblem<T> + ?Sized>(problem: &P, step: T, tol: T) -> AuditReport {
    let mut report = AuditReport::new("frozen_vs_fd", problem.describe());
    report.threshold("rel_frobenius", tol.as_f64()).scalar("step", step);
    let n = problem.param_space().dim();
    let (mut diff_sq, mut norm_sq) = (T::zero(), T::zero());
    let mut unit = DVector::zeros(n);
    let outcome = fd_columns(
        |x: &DVector<T>| problem.forward(x),
        problem.x0(),
        step,
        |i, col| {
            unit[i] = T::one();
            let kcol = problem.apply_k(&unit);
            unit[i] = T::zero();
            let kcol = kcol?;
            diff_sq += (&col - &kcol).norm_squared();
            norm_sq += kcol.norm_squared();
            Ok(())
        },
    );
    if let Err(e) = outcome {
        return report.failed(e.to_string());
    }
    let rel = rel_floor(diff_sq.sqrt(), norm_sq.sqrt());
    report.scalar("rel_frobenius", rel);
    report.samples = n;
    report.pass = rel <= tol;
    report
}

/// `|<Ax, y> - <x, By>| / max(|Ax||y|, |x||By|)` for one random probe pair.
pub fn adjoint_residual<T: Real>(op: &LinOpRep<T>, claimed: &LinOpRep<T>, rng: &mut ChaCha8Rng) -> Result<T> {
    let x: DVector<T> = standard_normal(rng, op.domain().dim());
    let y: DVector<T> = standard_normal(rng, op.codomain().dim());
    let ax = op.apply(&x)?;
    let by = claimed.apply(&y)?;
    let lhs = op.codomain().inner(&ax, &y)?;
    let rhs = op.domain().inner(&x, &by)?;
    let scale = (op.codomain().norm(&ax)? * op.codomain().norm(&y)?).max(op.domain().norm(&x)? * op.domain().norm(&by)?);
    Ok(rel_floor((lhs - rhs).abs(), scale))
}

/// Weighted adjoint identity for every operator, three probes each.
pub fn check_adjoints<T: Real>(ops: &[(String, &LinOpRep<T>)], seed: u64) -> AuditReport {
    let mut report = AuditReport::new("adjoints", format!("{} operators", ops.len()));
    report.threshold("rel", ADJOINT_TOL);
    report.seed = Some(seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = T::zero();
    let mut failures = Vec::new();
    for (name, op) in ops {
        let adj = op.adjoint();
        let mut op_worst = T::zero();
        for _ in 0..3 {
            match adjoint_residual(op, &adj, &mut rng) {
                Ok(r) => op_worst = op_worst.max(r),
                Err(e) => {
                    failures.push(format!("{name}: {e}"));
                    op_worst = T::lit(f64::INFINITY);
                }
            }
            report.samples += 1;
        }
        if !(op_worst <= T::lit(ADJOINT_TOL)) {
            failures.push(format!("{name}: {:e}", op_worst.as_f64()));
        }
        worst = worst.max(op_worst);
        report.scalar(&format!("rel.{name}"), op_worst);
    }
    report.scalar("rel_max", worst);
    report.pass = failures.is_empty();
    if !report.pass {
        report.message = Some(failures.join("; "));
    }
    report
}
