use nalgebra::{DMatrix, DVector};
use rangeinv::numerics::{LinOpRep, WeightedSpace};
use rangeinv::pde::{make_grid, BoundaryPartition, Field};
use rangeinv::problems::*;
use rangeinv::solvers::*;

fn toy(x0: DVector<f64>, truth: DVector<f64>) -> LinearToy<f64> {
    let k = LinOpRep::new(
        DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 0.1])),
        WeightedSpace::unit(2),
        WeightedSpace::unit(2),
    )
    .unwrap();
    LinearToy::new(k, x0).unwrap().with_truth(truth).unwrap()
}

fn potential_1d() -> ProblemInstance<f64> {
    let g: rangeinv::Grid = make_grid(1, 33, &BoundaryPartition::Whole).unwrap();
    let q = Field::from_fn(&g, |x, _| 1.0 + 0.5 * (std::f64::consts::PI * x).sin()).unwrap();
    let mut p = build_potential_problem(g.clone(), 4, Field::constant(&g, 1.0), Formulation::Reduced).unwrap();
    p.set_truth(&Coefficients::single(q.into_values())).unwrap();
    p
}

fn noise(y: &DVector<f64>, space: &WeightedSpace<f64>, delta: f64) -> DVector<f64> {
    let e = DVector::from_fn(y.len(), |i, _| ((i * 7 + 3) as f64).sin());
    y + e * (delta / space.norm(&DVector::from_fn(y.len(), |i, _| ((i * 7 + 3) as f64).sin())).unwrap())
}

fn no_stop(method: Method, max_iter: usize) -> SolverConfig<f64> {
    SolverConfig {
        max_iter,
        stop: StopRule::None,
        ..SolverConfig::with_method(method)
    }
}

#[test]
fn linear_toy_frozen_newton_matches_closed_form() {
    let truth = DVector::from_vec(vec![1.0, 1.0]);
    let p = toy(DVector::zeros(2), truth.clone());
    let y = p.exact_data().unwrap();
    let cfg = no_stop(Method::FrozenNewton, 8);
    let rec = frozen_newton(&p, &y, 0.0, &cfg).unwrap();
    assert_eq!(rec.stop_reason, StopReason::MaxIter);
    assert_eq!(rec.entries.len(), 8);
    // Error of x_n is alpha_{n-1} / (k^2 + alpha_{n-1}) times the initial error.
    let e0 = -&truth;
    let mut previous = f64::INFINITY;
    for e in &rec.entries {
        let a = cfg.alpha(e.n - 1);
        let expected = DVector::from_vec(vec![a / (1.0 + a) * e0[0], a / (0.01 + a) * e0[1]]);
        let err = rec_error(&p, e.n, &cfg, &y);
        assert!((err - &expected).amax() < 1e-12);
        assert!(e.error.unwrap() < previous);
        previous = e.error.unwrap();
    }
}

fn rec_error(p: &LinearToy<f64>, n: usize, cfg: &SolverConfig<f64>, y: &DVector<f64>) -> DVector<f64> {
    let cfg = SolverConfig {
        max_iter: n,
        ..cfg.clone()
    };
    let rec = frozen_newton(p, y, 0.0, &cfg).unwrap();
    &rec.x - p.truth().unwrap()
}

#[test]
fn fixed_point_at_truth() {
    let truth = DVector::from_vec(vec![0.5, -2.0]);
    let p = toy(truth.clone(), truth.clone());
    let y = p.exact_data().unwrap();
    for method in [Method::FrozenNewton, Method::AltFrozenNewton, Method::Newton] {
        let rec = solve(&p, &y, 0.0, &no_stop(method, 1)).unwrap();
        assert!((&rec.x - &truth).amax() < 1e-15, "{method}");
    }
}

#[test]
fn newton_with_identity_r_equals_frozen_newton() {
    let p = toy(DVector::from_vec(vec![0.2, -0.3]), DVector::from_vec(vec![1.0, 1.0]));
    let y = p.exact_data().unwrap();
    for n in 1..=6 {
        let a = frozen_newton(&p, &y, 0.0, &no_stop(Method::FrozenNewton, n)).unwrap();
        let b = newton(&p, &y, 0.0, &no_stop(Method::Newton, n)).unwrap();
        assert!((&a.x - &b.x).amax() < 1e-12, "n = {n}");
    }
}

#[test]
fn frozen_newton_noise_free_potential() {
    let p = potential_1d();
    let y = p.exact_data().unwrap();
    let rec = frozen_newton(&p, &y, 0.0, &no_stop(Method::FrozenNewton, 30)).unwrap();
    let errors: Vec<f64> = rec.entries.iter().map(|e| e.error.unwrap()).collect();
    assert!(*errors.last().unwrap() < 1e-3, "{errors:?}");
    assert!(errors[4..].windows(2).all(|w| w[1] <= w[0]));
}

#[test]
fn newton_comparable_to_frozen_newton() {
    let p = potential_1d();
    let y = p.exact_data().unwrap();
    let frozen = frozen_newton(&p, &y, 0.0, &no_stop(Method::FrozenNewton, 45)).unwrap();
    let full = newton(&p, &y, 0.0, &no_stop(Method::Newton, 45)).unwrap();
    assert_eq!(full.stop_reason, StopReason::MaxIter, "{:?}", full.message);
    assert!(full.final_error().unwrap() <= 1.5 * frozen.final_error().unwrap());
}

#[test]
fn alt_frozen_newton_logs_exact_identity() {
    let p = potential_1d();
    let y = p.exact_data().unwrap();
    let rec = alt_frozen_newton(&p, &y, 0.0, &no_stop(Method::AltFrozenNewton, 30)).unwrap();
    assert!(rec.entries.iter().all(|e| e.identity_residual.unwrap() <= 1e-9));
    assert!(rec.final_error().unwrap() < 1e-3);
}

#[test]
fn discrepancy_rule_stops_below_tau_delta() {
    let p = potential_1d();
    let delta = 1e-3;
    let y = noise(&p.exact_data().unwrap(), p.data_space(), delta);
    let cfg = SolverConfig::with_method(Method::FrozenNewton);
    let rec = frozen_newton(&p, &y, delta, &cfg).unwrap();
    assert_eq!(rec.stop_reason, StopReason::Discrepancy);
    let last = rec.entries.last().unwrap();
    assert!(last.residual <= cfg.tau * delta);
    assert!(rec.entries[..rec.entries.len() - 1].iter().all(|e| e.residual > cfg.tau * delta));
}

#[test]
fn apriori_rule_stops_at_budget() {
    let p = potential_1d();
    let delta = 1e-3;
    let y = noise(&p.exact_data().unwrap(), p.data_space(), delta);
    let cfg = SolverConfig {
        stop: StopRule::Apriori,
        ..SolverConfig::with_method(Method::FrozenNewton)
    };
    let rec = frozen_newton(&p, &y, delta, &cfg).unwrap();
    assert_eq!(rec.stop_reason, StopReason::Apriori);
    let n = rec.entries.len();
    assert!(stop_apriori(&cfg, delta, n) && !stop_apriori(&cfg, delta, n - 1));
}

#[test]
fn variational_rhat_step_with_zero_operator() {
    let k = LinOpRep::zeros(WeightedSpace::unit(3), WeightedSpace::unit(2));
    let r = DVector::from_vec(vec![1.0, -2.0, 0.5]);
    let rhat = variational_rhat_step(&k, &DVector::zeros(2), &r, 0.3, 0.2).unwrap();
    assert!((rhat - &r * (0.2 / 0.5)).amax() < 1e-15);
}

#[test]
fn variational_keeps_truth() {
    let truth = DVector::from_vec(vec![1.0, 1.0]);
    let p = toy(truth.clone(), truth.clone());
    let y = p.exact_data().unwrap();
    let mut cfg = SolverConfig::with_method(Method::Variational);
    cfg.variational.alpha = Some(1e-8);
    cfg.variational.beta = Some(1e-8);
    cfg.variational.eta = Some(1e-16);
    let rec = variational(&p, &y, 0.0, &cfg).unwrap();
    assert_eq!(rec.stop_reason, StopReason::Converged);
    assert!((&rec.x - &truth).amax() < 1e-15);
    assert!(rec.entries[0].objective.unwrap().total() <= 1e-16);
}

#[test]
fn variational_requires_schedule() {
    let p = toy(DVector::zeros(2), DVector::from_vec(vec![1.0, 1.0]));
    let y = p.exact_data().unwrap();
    assert!(variational(&p, &y, 0.0, &SolverConfig::with_method(Method::Variational)).is_err());
}

#[test]
fn variational_improves_as_noise_drops() {
    let p = potential_1d();
    let y = p.exact_data().unwrap();
    let mut errors = Vec::new();
    for delta in [1e-2, 1e-3, 1e-4] {
        let yd = noise(&y, p.data_space(), delta);
        let rec = variational(&p, &yd, delta, &SolverConfig::with_method(Method::Variational)).unwrap();
        assert_ne!(rec.stop_reason, StopReason::Error);
        errors.push(rec.final_error().unwrap());
    }
    assert!(errors.windows(2).all(|w| w[1] <= w[0]), "{errors:?}");
}

#[test]
fn runs_are_deterministic() {
    let p = potential_1d();
    let delta = 1e-3;
    let y = noise(&p.exact_data().unwrap(), p.data_space(), delta);
    for method in Method::ALL {
        let cfg = SolverConfig {
            max_iter: 10,
            ..SolverConfig::with_method(method)
        };
        let a = solve(&p, &y, delta, &cfg).unwrap();
        let b = solve(&p, &y, delta, &cfg).unwrap();
        assert_eq!(a, b, "{method}");
    }
}

#[test]
fn wrong_data_length_is_rejected() {
    let p = potential_1d();
    let y = DVector::zeros(3);
    assert!(frozen_newton(&p, &y, 0.0, &SolverConfig::default()).is_err());
}

/// Toy whose forward map fails once the first component exceeds 0.5.
struct Fragile(LinearToy<f64>);

impl InverseProblem<f64> for Fragile {
    fn kind(&self) -> ProblemKind {
        self.0.kind()
    }
    fn formulation(&self) -> Formulation {
        self.0.formulation()
    }
    fn describe(&self) -> String {
        "fragile toy".into()
    }
    fn layout(&self) -> &Layout {
        self.0.layout()
    }
    fn param_space(&self) -> &WeightedSpace<f64> {
        self.0.param_space()
    }
    fn data_space(&self) -> &WeightedSpace<f64> {
        self.0.data_space()
    }
    fn coefficient_space(&self) -> &WeightedSpace<f64> {
        self.0.coefficient_space()
    }
    fn x0(&self) -> &DVector<f64> {
        self.0.x0()
    }
    fn truth(&self) -> Option<&DVector<f64>> {
        self.0.truth()
    }
    fn set_truth(&mut self, c: &Coefficients<f64>) -> rangeinv::Result<()> {
        self.0.set_truth(c)
    }
    fn extend(&self, c: &Coefficients<f64>) -> rangeinv::Result<DVector<f64>> {
        self.0.extend(c)
    }
    fn forward(&self, x: &DVector<f64>) -> rangeinv::Result<DVector<f64>> {
        if x[0] > 0.5 {
            return Err(rangeinv::Error::Solvability { pivot_ratio: 0.0 });
        }
        self.0.forward(x)
    }
    fn apply_k(&self, v: &DVector<f64>) -> rangeinv::Result<DVector<f64>> {
        self.0.apply_k(v)
    }
    fn frozen_k(&self) -> rangeinv::Result<&LinOpRep<f64>> {
        self.0.frozen_k()
    }
    fn r_map(&self, x: &DVector<f64>) -> rangeinv::Result<DVector<f64>> {
        self.0.r_map(x)
    }
    fn penalty(&self) -> &Penalty<f64> {
        self.0.penalty()
    }
}

#[test]
fn forward_failure_ends_run_with_error() {
    let truth = DVector::from_vec(vec![1.0, 1.0]);
    let p = Fragile(toy(DVector::zeros(2), truth.clone()));
    let y = p.0.exact_data().unwrap();
    let rec = frozen_newton(&p, &y, 0.0, &no_stop(Method::FrozenNewton, 10)).unwrap();
    assert_eq!(rec.stop_reason, StopReason::Error);
    assert!(rec.message.unwrap().contains("pivot"));
    assert!(rec.x[0] <= 0.5);
    assert!(!rec.entries.is_empty());
}
