//! Regularized reconstruction algorithms and stopping rules.
//!
//! All methods iterate on the flattened unknown of an [`InverseProblem`],
//! with `α_n = alpha0 * theta^n`, and produce a [`RunRecord`] with one entry
//! per completed iteration.

use std::fmt;
use std::time::Instant;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::numerics::{default_fd_step, fd_jacobian, LinOpRep, NormalSystem};
use crate::problems::InverseProblem;
use crate::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    FrozenNewton,
    Newton,
    AltFrozenNewton,
    Variational,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::FrozenNewton, Method::Newton, Method::AltFrozenNewton, Method::Variational];

    pub fn name(self) -> &'static str {
        match self {
            Method::FrozenNewton => "frozen_newton",
            Method::Newton => "newton",
            Method::AltFrozenNewton => "alt_frozen_newton",
            Method::Variational => "variational",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::Configuration(format!("unknown method `{s}`")))
    }
}

/// Which stopping rule ends a run before `max_iter`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopRule {
    /// `|F(x_n) - y^δ| <= τ δ`.
    Discrepancy,
    /// Budget rule, see [`stop_apriori`].
    Apriori,
    /// Always run `max_iter` iterations.
    None,
}

impl std::str::FromStr for StopRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "discrepancy" => Ok(StopRule::Discrepancy),
            "apriori" => Ok(StopRule::Apriori),
            "none" | "max_iter" => Ok(StopRule::None),
            other => Err(Error::Configuration(format!("unknown stopping rule `{other}`"))),
        }
    }
}

/// Settings of the alternating variational method.
#[derive(Debug, Clone, PartialEq)]
pub struct VariationalConfig<T: Real> {
    /// Gauss–Newton steps per x-update.
    pub inner_iter: usize,
    /// Damping added to the Gauss–Newton normal matrix.
    pub mu: T,
    /// Objective-decrease tolerance; defaults to `δ²`.
    pub eta: Option<T>,
    /// Overrides `α = δ`.
    pub alpha: Option<T>,
    /// Overrides `β = √δ`.
    pub beta: Option<T>,
}

impl<T: Real> Default for VariationalConfig<T> {
    fn default() -> Self {
        Self {
            inner_iter: 5,
            mu: T::lit(1e-8),
            eta: None,
            alpha: None,
            beta: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig<T: Real> {
    pub method: Method,
    pub alpha0: T,
    pub theta: T,
    pub tau: T,
    pub tau_apriori: T,
    pub c_estimate: T,
    pub max_iter: usize,
    pub stop: StopRule,
    pub variational: VariationalConfig<T>,
    /// Finite-difference step for `r'`; defaults to `1e-5 (1 + |x|_inf)`.
    pub fd_step: Option<T>,
    /// Record wall time per iteration; off keeps records bit-reproducible.
    pub record_timing: bool,
}

impl<T: Real> Default for SolverConfig<T> {
    fn default() -> Self {
        Self {
            method: Method::FrozenNewton,
            alpha0: T::one(),
            theta: T::lit(0.5),
            tau: T::lit(1.5),
            tau_apriori: T::one(),
            c_estimate: T::lit(0.5),
            max_iter: 50,
            stop: StopRule::Discrepancy,
            variational: VariationalConfig::default(),
            fd_step: None,
            record_timing: false,
        }
    }
}

impl<T: Real> SolverConfig<T> {
    pub fn with_method(method: Method) -> Self {
        Self { method, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str, v: T| Err(Error::Configuration(format!("{what} out of range: {}", v.as_f64())));
        if !(self.alpha0 > T::zero() && self.alpha0.is_finite()) {
            return bad("alpha0", self.alpha0);
        }
        if !(self.theta > T::zero() && self.theta < T::one()) {
            return bad("theta", self.theta);
        }
        if !(self.tau > T::one()) {
            return bad("tau", self.tau);
        }
        if !(self.tau_apriori > T::zero()) {
            return bad("tau_apriori", self.tau_apriori);
        }
        if !(self.c_estimate > T::zero() && self.c_estimate < T::one()) {
            return bad("c_estimate", self.c_estimate);
        }
        if !(self.theta > self.c_estimate * self.c_estimate) {
            return Err(Error::Configuration(format!(
                "theta = {} must exceed c_estimate^2 = {}",
                self.theta.as_f64(),
                (self.c_estimate * self.c_estimate).as_f64()
            )));
        }
        if self.max_iter == 0 {
            return Err(Error::Configuration("max_iter must be at least 1".into()));
        }
        let v = &self.variational;
        if !(v.mu >= T::zero()) {
            return bad("variational mu", v.mu);
        }
        if v.inner_iter == 0 {
            return Err(Error::Configuration("variational inner_iter must be at least 1".into()));
        }
        for (name, value) in [("eta", v.eta), ("alpha", v.alpha), ("beta", v.beta), ("fd_step", self.fd_step)] {
            if let Some(value) = value {
                if !(value > T::zero()) {
                    return bad(name, value);
                }
            }
        }
        Ok(())
    }

    /// `α_n = alpha0 * theta^n`.
    pub fn alpha(&self, n: usize) -> T {
        self.alpha0 * self.theta.powi(n as i32)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    Discrepancy,
    Apriori,
    MaxIter,
    /// Variational objective decrease fell below `η`.
    Converged,
    Error,
}

impl StopReason {
    pub fn name(self) -> &'static str {
        match self {
            StopReason::Discrepancy => "discrepancy",
            StopReason::Apriori => "apriori",
            StopReason::MaxIter => "max_iter",
            StopReason::Converged => "converged",
            StopReason::Error => "error",
        }
    }
}

impl fmt::Display for StopReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Parts of the variational objective at the end of an outer iteration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObjectiveParts<T: Real> {
    /// `|K r̂ + F(x0) - y^δ|²`.
    pub data: T,
    /// `α |r̂|²`.
    pub regularization: T,
    /// `β |r(x) - r̂|²`.
    pub coupling: T,
    /// `|P x|²`.
    pub penalty: T,
}

impl<T: Real> ObjectiveParts<T> {
    pub fn total(&self) -> T {
        self.data + self.regularization + self.coupling + self.penalty
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IterationEntry<T: Real> {
    pub n: usize,
    /// Regularization parameter used to compute `x_n`.
    pub alpha: T,
    /// `|F(x_n) - y^δ|_Y`.
    pub residual: T,
    /// `|P x_n|_X`.
    pub penalty: T,
    /// `|collapse(x_n) - collapse(x†)| / |collapse(x†)|`.
    pub error: Option<T>,
    pub j_spread: T,
    /// Wall time of the iteration, zero unless timing is recorded.
    pub ms: f64,
    /// `|F(x_n) - F(x0) - K r(x_n)| / |F(x_n) - F(x0)|`, logged by the
    /// alternative frozen Newton method.
    pub identity_residual: Option<T>,
    pub objective: Option<ObjectiveParts<T>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord<T: Real> {
    pub method: Method,
    pub delta: T,
    pub entries: Vec<IterationEntry<T>>,
    pub stop_reason: StopReason,
    pub message: Option<String>,
    /// Final iterate.
    pub x: DVector<T>,
    /// `collapse` of the final iterate.
    pub reconstruction: DVector<T>,
}

impl<T: Real> RunRecord<T> {
    pub fn final_error(&self) -> Option<T> {
        self.entries.last().and_then(|e| e.error)
    }

    pub fn final_j_spread(&self) -> Option<T> {
        self.entries.last().map(|e| e.j_spread)
    }

    pub fn iterations(&self) -> usize {
        self.entries.len()
    }
}

/// True iff `residual <= tau * delta`; never for `delta = 0`.
pub fn stop_discrepancy<T: Real>(residual: T, delta: T, tau: T) -> bool {
    delta > T::zero() && residual <= tau * delta
}

/// True iff `δ Σ_{j=0}^{n-1} c^j α_{n-j-1}^{-1/2} > tau_apriori`.
pub fn stop_apriori<T: Real>(cfg: &SolverConfig<T>, delta: T, n: usize) -> bool {
    if !(delta > T::zero()) {
        return false;
    }
    let sum = (0..n).fold(T::zero(), |acc, j| {
        acc + cfg.c_estimate.powi(j as i32) / cfg.alpha(n - j - 1).sqrt()
    });
    delta * sum > cfg.tau_apriori
}

/// Shared bookkeeping of all methods.
struct Tracker<'a, T: Real, P: InverseProblem<T> + ?Sized> {
    problem: &'a P,
    y: &'a DVector<T>,
    delta: T,
    cfg: &'a SolverConfig<T>,
    truth: Option<(DVector<T>, T)>,
    entries: Vec<IterationEntry<T>>,
}

impl<'a, T: Real, P: InverseProblem<T> + ?Sized> Tracker<'a, T, P> {
    fn new(problem: &'a P, y: &'a DVector<T>, delta: T, cfg: &'a SolverConfig<T>) -> Result<Self> {
        cfg.validate()?;
        check_len(problem.data_space().dim(), y.len())?;
        if !(delta >= T::zero() && delta.is_finite()) {
            return Err(Error::Argument(format!("noise level must be non-negative, got {}", delta.as_f64())));
        }
        let truth = match problem.truth() {
            Some(t) => {
                let c = problem.collapse(t)?;
                let norm = problem.coefficient_space().norm(&c)?;
                Some((c, norm))
            }
            None => None,
        };
        Ok(Self {
            problem,
            y,
            delta,
            cfg,
            truth,
            entries: Vec::new(),
        })
    }

    fn residual(&self, fx: &DVector<T>) -> Result<T> {
        self.problem.data_space().norm(&(fx - self.y))
    }

    /// Records iterate `x_n` and reports whether the configured rule stops.
    fn record(
        &mut self,
        x: &DVector<T>,
        fx: &DVector<T>,
        alpha: T,
        started: Instant,
        extra: impl FnOnce(&mut IterationEntry<T>),
    ) -> Result<Option<StopReason>> {
        let p = self.problem;
        let residual = self.residual(fx)?;
        let penalty = p.param_space().norm(&p.penalty().apply(x)?)?;
        let error = match &self.truth {
            Some((c, norm)) => {
                let d = p.coefficient_space().norm(&(p.collapse(x)? - c))?;
                Some(if *norm > T::zero() { d / *norm } else { d })
            }
            None => None,
        };
        let mut entry = IterationEntry {
            n: self.entries.len() + 1,
            alpha,
            residual,
            penalty,
            error,
            j_spread: p.j_spread(x)?,
            ms: if self.cfg.record_timing {
                started.elapsed().as_secs_f64() * 1e3
            } else {
                0.0
            },
            identity_residual: None,
            objective: None,
        };
        extra(&mut entry);
        let n = entry.n;
        self.entries.push(entry);
        Ok(self.rule_fires(residual, n))
    }

    fn rule_fires(&self, residual: T, n: usize) -> Option<StopReason> {
        match self.cfg.stop {
            StopRule::Discrepancy if stop_discrepancy(residual, self.delta, self.cfg.tau) => Some(StopReason::Discrepancy),
            StopRule::Apriori if n > 0 && stop_apriori(self.cfg, self.delta, n) => Some(StopReason::Apriori),
            _ => None,
        }
    }

    fn finish(self, x: DVector<T>, stop_reason: StopReason, message: Option<String>) -> RunRecord<T> {
        let reconstruction = self.problem.collapse(&x).unwrap_or_else(|_| x.clone());
        RunRecord {
            method: self.cfg.method,
            delta: self.delta,
            entries: self.entries,
            stop_reason,
            message,
            x,
            reconstruction,
        }
    }
}

/// Runs the configured method.
pub fn solve<T: Real, P: InverseProblem<T> + ?Sized>(
    problem: &P,
    y_delta: &DVector<T>,
    delta: T,
    cfg: &SolverConfig<T>,
) -> Result<RunRecord<T>> {
    match cfg.method {
        Method::FrozenNewton => frozen_newton(problem, y_delta, delta, cfg),
        Method::Newton => newton(problem, y_delta, delta, cfg),
        Method::AltFrozenNewton => alt_frozen_newton(problem, y_delta, delta, cfg),
        Method::Variational => variational(problem, y_delta, delta, cfg),
    }
}

/// Normal system `K*K + P*P` shared by the frozen methods.
fn frozen_system<T: Real, P: InverseProblem<T> + ?Sized>(problem: &P) -> Result<(NormalSystem<T>, &LinOpRep<T>)> {
    let k = problem.frozen_k()?;
    let mut system = NormalSystem::new(problem.param_space().clone());
    system.add(k, T::one())?;
    if !problem.penalty().is_zero() {
        system.add(problem.penalty_op(), T::one())?;
    }
    Ok((system, k))
}

fn penalty_gradient<T: Real, P: InverseProblem<T> + ?Sized>(problem: &P, x: &DVector<T>) -> Result<DVector<T>> {
    if problem.penalty().is_zero() {
        return Ok(DVector::zeros(x.len()));
    }
    problem.penalty_op().apply_adjoint(&problem.penalty().apply(x)?)
}

/// Common driver of the three Newton-type methods; `step` maps
/// `(n, x_n, F(x_n))` to the increment.
fn newton_loop<T, P, S>(
    problem: &P,
    y: &DVector<T>,
    delta: T,
    cfg: &SolverConfig<T>,
    mut step: S,
    log_identity: bool,
) -> Result<RunRecord<T>>
where
    T: Real,
    P: InverseProblem<T> + ?Sized,
    S: FnMut(usize, &DVector<T>, &DVector<T>) -> Result<DVector<T>>,
{
    let mut tracker = Tracker::new(problem, y, delta, cfg)?;
    let mut x = problem.x0().clone();
    let f0 = match problem.forward(&x) {
        Ok(f) => f,
        Err(e) => return Ok(tracker.finish(x, StopReason::Error, Some(e.to_string()))),
    };
    if tracker.rule_fires(tracker.residual(&f0)?, 0).is_some() {
        return Ok(tracker.finish(x, StopReason::Discrepancy, None));
    }
    let mut fx = f0.clone();
    for n in 0..cfg.max_iter {
        let started = Instant::now();
        let outcome = step(n, &x, &fx).and_then(|s| {
            let next = &x + s;
            let f_next = problem.forward(&next)?;
            Ok((next, f_next))
        });
        let (next, f_next) = match outcome {
            Ok(v) => v,
            Err(e) => return Ok(tracker.finish(x, StopReason::Error, Some(e.to_string()))),
        };
        x = next;
        fx = f_next;
        let identity = if log_identity {
            let diff = &fx - &f0;
            let kr = problem.apply_k(&problem.r_map(&x)?)?;
            let space = problem.data_space();
            let denom = space.norm(&diff)?.max(T::lit(1e-300));
            Some(space.norm(&(diff - kr))? / denom)
        } else {
            None
        };
        if let Some(reason) = tracker.record(&x, &fx, cfg.alpha(n), started, |e| e.identity_residual = identity)? {
            return Ok(tracker.finish(x, reason, None));
        }
    }
    Ok(tracker.finish(x, StopReason::MaxIter, None))
}

/// `x_{n+1} = x_n + (K*K + P*P + α_n)^{-1} (K*(y^δ - F(x_n)) - P*P x_n + α_n (x0 - x_n))`.
pub fn frozen_newton<T: Real, P: InverseProblem<T> + ?Sized>(
    problem: &P,
    y_delta: &DVector<T>,
    delta: T,
    cfg: &SolverConfig<T>,
) -> Result<RunRecord<T>> {
    let (system, k) = frozen_system(problem)?;
    let x0 = problem.x0().clone();
    newton_loop(
        problem,
        y_delta,
        delta,
        cfg,
        |n, x, fx| {
            let alpha = cfg.alpha(n);
            let rhs = k.apply_adjoint(&(y_delta - fx))? - penalty_gradient(problem, x)? + (&x0 - x) * alpha;
            system.solve(alpha, &rhs)
        },
        false,
    )
}

/// Frozen Newton with predicted data `F(x0) + K r(x_n)` and pull `-α_n r(x_n)`.
pub fn alt_frozen_newton<T: Real, P: InverseProblem<T> + ?Sized>(
    problem: &P,
    y_delta: &DVector<T>,
    delta: T,
    cfg: &SolverConfig<T>,
) -> Result<RunRecord<T>> {
    let (system, k) = frozen_system(problem)?;
    let f0 = problem.forward(problem.x0())?;
    newton_loop(
        problem,
        y_delta,
        delta,
        cfg,
        |n, x, _| {
            let alpha = cfg.alpha(n);
            let r = problem.r_map(x)?;
            let predicted = &f0 + k.apply(&r)?;
            let rhs = k.apply_adjoint(&(y_delta - predicted))? - penalty_gradient(problem, x)? - r * alpha;
            system.solve(alpha, &rhs)
        },
        true,
    )
}

fn r_jacobian<T: Real, P: InverseProblem<T> + ?Sized>(problem: &P, x: &DVector<T>, cfg: &SolverConfig<T>) -> Result<LinOpRep<T>> {
    let step = cfg.fd_step.unwrap_or_else(|| default_fd_step(x));
    let space = problem.param_space();
    fd_jacobian(|v: &DVector<T>| problem.r_map(v), x, step, space, space)
}

/// Newton's method on `K r(x) = y^δ - F(x0)` with `R_n = r'(x_n)` by finite
/// differences: solves
/// `((K R_n)*(K R_n) + P*P + α_n R_n*R_n) s = (K R_n)*(y^δ - K r(x_n) - F(x0)) - P*P x_n - α_n R_n* r(x_n)`.
pub fn newton<T: Real, P: InverseProblem<T> + ?Sized>(
    problem: &P,
    y_delta: &DVector<T>,
    delta: T,
    cfg: &SolverConfig<T>,
) -> Result<RunRecord<T>> {
    let k = problem.frozen_k()?;
    let f0 = problem.forward(problem.x0())?;
    newton_loop(
        problem,
        y_delta,
        delta,
        cfg,
        |n, x, _| {
            let alpha = cfg.alpha(n);
            let r_n = r_jacobian(problem, x, cfg)?;
            let kr_n = k.compose(&r_n)?;
            let mut system = NormalSystem::new(problem.param_space().clone());
            system.add(&kr_n, T::one())?;
            if !problem.penalty().is_zero() {
                system.add(problem.penalty_op(), T::one())?;
            }
            system.add(&r_n, alpha)?;
            let r = problem.r_map(x)?;
            let misfit = y_delta - k.apply(&r)? - &f0;
            let rhs = kr_n.apply_adjoint(&misfit)? - penalty_gradient(problem, x)? - r_n.apply_adjoint(&r)? * alpha;
            system.solve_to(T::zero(), &rhs, T::lit(NEWTON_SOLVE_RTOL))
        },
        false,
    )
}

/// Step tolerance of [`newton`]; its normal matrix carries `α_n R_n*R_n`
/// instead of `α_n id` and loses a few digits once `α_n` is tiny.
pub const NEWTON_SOLVE_RTOL: f64 = 1e-8;

/// r̂-update: solves `(K*K + (α + β)) r̂ = K*(y^δ - F(x0)) + β r(x)`.
pub fn variational_rhat_step<T: Real>(k: &LinOpRep<T>, misfit0: &DVector<T>, r_x: &DVector<T>, alpha: T, beta: T) -> Result<DVector<T>> {
    let rhs = k.apply_adjoint(misfit0)? + r_x * beta;
    let mut system = NormalSystem::new(k.domain().clone());
    system.add(k, T::one())?;
    system.solve(alpha + beta, &rhs)
}

/// Alternating minimization of
/// `|K r̂ + F(x0) - y^δ|² + α|r̂|² + β|r(x) - r̂|² + |P x|²`
/// with `(α, β, η) = (δ, √δ, δ²)` unless overridden.
pub fn variational<T: Real, P: InverseProblem<T> + ?Sized>(
    problem: &P,
    y_delta: &DVector<T>,
    delta: T,
    cfg: &SolverConfig<T>,
) -> Result<RunRecord<T>> {
    let mut tracker = Tracker::new(problem, y_delta, delta, cfg)?;
    let vc = &cfg.variational;
    let alpha = vc.alpha.unwrap_or(delta);
    let beta = vc.beta.unwrap_or_else(|| delta.sqrt());
    let eta = vc.eta.unwrap_or(delta * delta);
    if !(alpha > T::zero() && beta > T::zero()) {
        return Err(Error::Argument(
            "variational method needs delta > 0 or explicit alpha and beta".into(),
        ));
    }
    let k = problem.frozen_k()?;
    let x_space = problem.param_space();
    let y_space = problem.data_space();
    let mut x = problem.x0().clone();
    let f0 = problem.forward(&x)?;
    let misfit0 = y_delta - &f0;
    let norm_sq = |s: &crate::numerics::WeightedSpace<T>, v: &DVector<T>| -> Result<T> {
        let n = s.norm(v)?;
        Ok(n * n)
    };
    let objective = |rhat: &DVector<T>, r: &DVector<T>, x: &DVector<T>| -> Result<ObjectiveParts<T>> {
        Ok(ObjectiveParts {
            data: norm_sq(y_space, &(k.apply(rhat)? - &misfit0))?,
            regularization: alpha * norm_sq(x_space, rhat)?,
            coupling: beta * norm_sq(x_space, &(r - rhat))?,
            penalty: norm_sq(x_space, &problem.penalty().apply(x)?)?,
        })
    };
    if tracker.rule_fires(tracker.residual(&f0)?, 0).is_some() {
        return Ok(tracker.finish(x, StopReason::Discrepancy, None));
    }
    let mut previous: Option<T> = None;
    for _ in 0..cfg.max_iter {
        let started = Instant::now();
        let outer = (|| -> Result<(DVector<T>, DVector<T>, ObjectiveParts<T>)> {
            let rhat = variational_rhat_step(k, &misfit0, &problem.r_map(&x)?, alpha, beta)?;
            let mut xn = x.clone();
            for _ in 0..vc.inner_iter {
                let r = problem.r_map(&xn)?;
                let jac = r_jacobian(problem, &xn, cfg)?;
                let mut system = NormalSystem::new(x_space.clone());
                system.add(&jac, beta)?;
                if !problem.penalty().is_zero() {
                    system.add(problem.penalty_op(), T::one())?;
                }
                let rhs = -(jac.apply_adjoint(&(&r - &rhat))? * beta) - penalty_gradient(problem, &xn)?;
                let s = system.solve(vc.mu, &rhs)?;
                let done = x_space.norm(&s)? <= T::lit(1e-14) * (T::one() + x_space.norm(&xn)?);
                xn += s;
                if done {
                    break;
                }
            }
            let parts = objective(&rhat, &problem.r_map(&xn)?, &xn)?;
            let fx = problem.forward(&xn)?;
            Ok((xn, fx, parts))
        })();
        let (xn, fx, parts) = match outer {
            Ok(v) => v,
            Err(e) => return Ok(tracker.finish(x, StopReason::Error, Some(e.to_string()))),
        };
        x = xn;
        let total = parts.total();
        let rule = tracker.record(&x, &fx, alpha, started, |e| e.objective = Some(parts))?;
        if let Some(reason) = rule {
            return Ok(tracker.finish(x, reason, None));
        }
        if let Some(prev) = previous {
            if prev - total <= eta {
                return Ok(tracker.finish(x, StopReason::Converged, None));
            }
        }
        previous = Some(total);
    }
    Ok(tracker.finish(x, StopReason::MaxIter, None))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn discrepancy_examples() {
        assert!(stop_discrepancy(1.4, 1.0, 1.5));
        assert!(!stop_discrepancy(1.6, 1.0, 1.5));
        assert!(!stop_discrepancy(0.0, 0.0, 1.5));
    }

    #[test]
    fn apriori_examples() {
        let cfg = SolverConfig::<f64>::default();
        assert!(!stop_apriori(&cfg, 0.0, 10));
        assert!(!stop_apriori(&cfg, 1.0, 1));
        assert!(stop_apriori(&cfg, 1.0, 2));
        for n in 1..20 {
            for d in [1e-4, 1e-3, 1e-2] {
                if stop_apriori(&cfg, d, n) {
                    assert!(stop_apriori(&cfg, 2.0 * d, n));
                }
            }
        }
    }

    #[test]
    fn config_validation() {
        let mut cfg = SolverConfig::<f64>::default();
        assert!(cfg.validate().is_ok());
        cfg.theta = 0.2;
        assert!(cfg.validate().is_err());
        cfg.theta = 0.5;
        cfg.tau = 1.0;
        assert!(cfg.validate().is_err());
        cfg.tau = 1.5;
        cfg.alpha0 = 0.0;
        assert!(cfg.validate().is_err());
        assert_eq!("alt_frozen_newton".parse::<Method>().unwrap(), Method::AltFrozenNewton);
        assert!("gradient".parse::<Method>().is_err());
    }
}
