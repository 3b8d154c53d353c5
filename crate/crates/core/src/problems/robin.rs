//! `-Δu = f` in `Ω`, `∂_ν u + q Φ(u) = 0` on `Γ_R` (bottom), `∂_ν u = h` on
//! `Γ_N` (top), `u = 0` on `Γ_D` (left and right, corners included).
//! Observation: `u` on `Γ_N`.

use std::sync::OnceLock;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{check_denominator, concat, Coefficients, Formulation, InverseProblem, Layout, Penalty, ProblemInstance, ProblemKind, EPS_U};
use crate::error::{check_len, Error, Result};
use crate::numerics::banded::BandedMatrix;
use crate::numerics::{LinOpRep, WeightedSpace};
use crate::pde::{self, EllipticSolver, Grid};
use crate::Real;

/// Boundary nonlinearity `Φ`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PhiKind {
    /// `Φ(s) = s`.
    Linear,
    /// `Φ(s) = s + tanh(s) / 2`, monotone with Lipschitz constant 3/2.
    Tanh,
}

impl PhiKind {
    pub fn value<T: Real>(self, s: T) -> T {
        match self {
            PhiKind::Linear => s,
            PhiKind::Tanh => s + s.tanh() * T::lit(0.5),
        }
    }

    pub fn derivative<T: Real>(self, s: T) -> T {
        match self {
            PhiKind::Linear => T::one(),
            PhiKind::Tanh => {
                let t = s.tanh();
                T::one() + (T::one() - t * t) * T::lit(0.5)
            }
        }
    }
}

impl std::str::FromStr for PhiKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "linear" => Ok(PhiKind::Linear),
            "tanh" => Ok(PhiKind::Tanh),
            other => Err(Error::Configuration(format!("unknown phi kind `{other}`"))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct RobinSetup<T: Real> {
    /// Robin coefficient at the `Γ_R` nodes.
    pub q0: DVector<T>,
    pub phi: PhiKind,
    pub formulation: Formulation,
    /// Volume source `f`.
    pub source: DVector<T>,
    /// Neumann flux on `Γ_N`, one value per node.
    pub flux: DVector<T>,
    pub eps_u: T,
}

impl<T: Real> RobinSetup<T> {
    /// `f = 1`, `h = 1`.
    pub fn new(grid: &Grid<T>, q0: DVector<T>, phi: PhiKind, formulation: Formulation) -> Result<Self> {
        let top = grid.segment(TOP)?.len();
        Ok(Self {
            q0,
            phi,
            formulation,
            source: DVector::from_element(grid.node_count(), T::one()),
            flux: DVector::from_element(top, T::one()),
            eps_u: T::lit(EPS_U),
        })
    }
}

const ROBIN: &str = "bottom";
const TOP: &str = "top";
const DIRICHLET: [&str; 2] = ["left", "right"];

#[derive(Debug)]
pub struct RobinProblem<T: Real> {
    grid: Grid<T>,
    phi: PhiKind,
    formulation: Formulation,
    stiffness: BandedMatrix<T>,
    /// `A` restricted to the free (non-Dirichlet) nodes.
    free_stiffness: BandedMatrix<T>,
    free: Vec<usize>,
    free_index: Vec<Option<usize>>,
    robin_nodes: Vec<usize>,
    robin_weights: DVector<T>,
    top_nodes: Vec<usize>,
    load: DVector<T>,
    q0: DVector<T>,
    u0: DVector<T>,
    phi0: DVector<T>,
    dphi0: DVector<T>,
    /// `C_top J0^{-1}` over the free nodes.
    z0: DMatrix<T>,
    layout: Layout,
    x_space: WeightedSpace<T>,
    y_space: WeightedSpace<T>,
    coef_space: WeightedSpace<T>,
    x0: DVector<T>,
    truth: Option<DVector<T>>,
    penalty: Penalty<T>,
    k: OnceLock<LinOpRep<T>>,
}

/// Robin problem with `f = 1` and unit flux on `Γ_N`. The grid must carry the
/// [`pde::BoundaryPartition::Sides`] segments.
pub fn build_robin_problem<T: Real>(grid: Grid<T>, q0: DVector<T>, phi: PhiKind, formulation: Formulation) -> Result<ProblemInstance<T>> {
    let setup = RobinSetup::new(&grid, q0, phi, formulation)?;
    Ok(ProblemInstance::Robin(RobinProblem::new(grid, setup)?))
}

const NEWTON_MAX_ITER: usize = 60;

impl<T: Real> RobinProblem<T> {
    pub fn new(grid: Grid<T>, setup: RobinSetup<T>) -> Result<Self> {
        if grid.dim() != 2 {
            return Err(Error::Configuration("the Robin problem needs a 2-D grid".into()));
        }
        let robin_nodes = grid.segment(ROBIN)?.to_vec();
        let top_nodes = grid.segment(TOP)?.to_vec();
        let mut dirichlet = vec![false; grid.node_count()];
        for name in DIRICHLET {
            for &k in grid.segment(name)? {
                dirichlet[k] = true;
            }
        }
        check_len(robin_nodes.len(), setup.q0.len())?;
        check_len(grid.node_count(), setup.source.len())?;
        check_len(top_nodes.len(), setup.flux.len())?;
        if let Some(q) = setup.q0.iter().find(|q| !(**q >= T::zero())) {
            return Err(Error::Admissibility(format!(
                "Robin coefficient must be non-negative, found {}",
                q.as_f64()
            )));
        }

        let n = grid.node_count();
        let free: Vec<usize> = (0..n).filter(|&k| !dirichlet[k]).collect();
        let mut free_index = vec![None; n];
        for (i, &k) in free.iter().enumerate() {
            free_index[k] = Some(i);
        }
        if robin_nodes.iter().chain(&top_nodes).any(|&k| dirichlet[k]) {
            return Err(Error::Configuration("Robin and Neumann segments must avoid Dirichlet nodes".into()));
        }

        let stiffness = pde::stiffness_band(&grid, None)?;
        let bw = grid.bandwidth();
        let mut free_stiffness = BandedMatrix::zeros(free.len(), bw, bw);
        for (i, &ki) in free.iter().enumerate() {
            for (j, &kj) in free.iter().enumerate().skip(i.saturating_sub(bw)).take(2 * bw + 1) {
                let v = stiffness.entry(ki, kj);
                if v != T::zero() {
                    free_stiffness.add(i, j, v);
                }
            }
        }
        let load = setup.source.component_mul(grid.volume_weights()) + pde::boundary_load(&grid, &setup.flux, TOP)?;
        let robin_weights = DVector::from_iterator(robin_nodes.len(), robin_nodes.iter().map(|&k| grid.boundary_weight(k)));

        let aao = setup.formulation == Formulation::AllAtOnce;
        let layout = Layout {
            experiments: 1,
            slice_len: robin_nodes.len(),
            shared: vec![],
            state_len: if aao { n } else { 0 },
        };
        let robin_space = grid.segment_space(ROBIN)?;
        let x_space = if aao {
            WeightedSpace::concat(&[&robin_space, &grid.volume_space()])
        } else {
            robin_space.clone()
        };
        let top_space = grid.segment_space(TOP)?;
        let residual_space = WeightedSpace::new(DVector::from_fn(n, |k, _| {
            let w = grid.volume_weights()[k];
            if dirichlet[k] {
                w
            } else {
                T::one() / w
            }
        }))?;
        let y_space = if aao {
            WeightedSpace::concat(&[&residual_space, &top_space])
        } else {
            top_space
        };
        let penalty = Penalty::new(layout.clone(), x_space.clone(), robin_space.weights().clone(), vec![T::one()])?;

        let mut problem = Self {
            grid,
            phi: setup.phi,
            formulation: setup.formulation,
            stiffness,
            free_stiffness,
            free,
            free_index,
            robin_nodes,
            robin_weights,
            top_nodes,
            load,
            q0: setup.q0.clone(),
            u0: DVector::zeros(n),
            phi0: DVector::zeros(0),
            dphi0: DVector::zeros(0),
            z0: DMatrix::zeros(0, 0),
            layout,
            x_space,
            y_space,
            coef_space: robin_space,
            x0: DVector::zeros(0),
            truth: None,
            penalty,
            k: OnceLock::new(),
        };
        let u0 = problem.solve_state(&setup.q0)?;
        let u0_r = problem.robin_trace(&u0);
        problem.phi0 = u0_r.map(|s| setup.phi.value(s));
        problem.dphi0 = u0_r.map(|s| setup.phi.derivative(s));
        check_denominator(&problem.phi0, setup.eps_u)?;
        problem.u0 = u0;

        let jac = problem.state_jacobian(&setup.q0, &u0_r)?;
        let mut selection = DMatrix::zeros(problem.free.len(), problem.top_nodes.len());
        for (r, &k) in problem.top_nodes.iter().enumerate() {
            selection[(problem.free_index[k].expect("top nodes are free"), r)] = T::one();
        }
        problem.z0 = jac.solve_matrix(&selection)?.transpose();
        problem.x0 = if aao { concat(&[&setup.q0, &problem.u0]) } else { setup.q0 };
        Ok(problem)
    }

    pub fn grid(&self) -> &Grid<T> {
        &self.grid
    }

    pub fn phi(&self) -> PhiKind {
        self.phi
    }

    pub fn baseline_state(&self) -> &DVector<T> {
        &self.u0
    }

    fn robin_trace(&self, u: &DVector<T>) -> DVector<T> {
        DVector::from_iterator(self.robin_nodes.len(), self.robin_nodes.iter().map(|&k| u[k]))
    }

    fn top_trace(&self, u: &DVector<T>) -> DVector<T> {
        DVector::from_iterator(self.top_nodes.len(), self.top_nodes.iter().map(|&k| u[k]))
    }

    fn free_position(&self, node: usize) -> usize {
        self.free_index[node].expect("free node")
    }

    /// `A_ff + diag(w q Φ'(u_R))` on `Γ_R`.
    fn state_jacobian(&self, q: &DVector<T>, u_r: &DVector<T>) -> Result<EllipticSolver<T>> {
        let mut diag = DVector::zeros(self.free.len());
        for (r, &k) in self.robin_nodes.iter().enumerate() {
            diag[self.free_position(k)] = self.robin_weights[r] * q[r] * self.phi.derivative(u_r[r]);
        }
        let mut m = self.free_stiffness.clone();
        m.add_diagonal(&diag)?;
        EllipticSolver::new(m)
    }

    /// Full nodal state for the Robin coefficient `q`, by Newton's method.
    pub fn solve_state(&self, q: &DVector<T>) -> Result<DVector<T>> {
        check_len(self.robin_nodes.len(), q.len())?;
        let load_f = DVector::from_iterator(self.free.len(), self.free.iter().map(|&k| self.load[k]));
        let mut u = DVector::from_iterator(self.free.len(), self.free.iter().map(|&k| self.u0[k]));
        let load_norm = load_f.norm();
        for _ in 0..NEWTON_MAX_ITER {
            let u_r = DVector::from_iterator(self.robin_nodes.len(), self.robin_nodes.iter().map(|&k| u[self.free_position(k)]));
            let mut g = self.free_stiffness.mul_vec(&u)? - &load_f;
            for (r, &k) in self.robin_nodes.iter().enumerate() {
                g[self.free_position(k)] += self.robin_weights[r] * q[r] * self.phi.value(u_r[r]);
            }
            if g.norm() <= T::lit(1e-14) * load_norm {
                return Ok(self.scatter(&u));
            }
            let du = self.state_jacobian(q, &u_r)?.solve(&(-g))?;
            u += &du;
            if du.norm() <= T::lit(1e-15) * (T::one() + u.norm()) {
                return Ok(self.scatter(&u));
            }
        }
        Err(Error::Numeric("Robin state iteration did not converge".into()))
    }

    fn scatter(&self, u_free: &DVector<T>) -> DVector<T> {
        let mut u = DVector::zeros(self.grid.node_count());
        for (i, &k) in self.free.iter().enumerate() {
            u[k] = u_free[i];
        }
        u
    }

    fn residual(&self, q: &DVector<T>, u: &DVector<T>) -> Result<DVector<T>> {
        let mut res = self.stiffness.mul_vec(u)? - &self.load;
        for (r, &k) in self.robin_nodes.iter().enumerate() {
            res[k] += self.robin_weights[r] * q[r] * self.phi.value(u[k]);
        }
        for k in 0..res.len() {
            if self.free_index[k].is_none() {
                res[k] = u[k];
            }
        }
        Ok(res)
    }
}

impl<T: Real> InverseProblem<T> for RobinProblem<T> {
    fn kind(&self) -> ProblemKind {
        ProblemKind::Robin
    }

    fn formulation(&self) -> Formulation {
        self.formulation
    }

    fn describe(&self) -> String {
        let phi = match self.phi {
            PhiKind::Linear => "linear",
            PhiKind::Tanh => "tanh",
        };
        format!("robin 2-D n={} phi={phi} {}", self.grid.n(), self.formulation)
    }

    fn layout(&self) -> &Layout {
        &self.layout
    }

    fn param_space(&self) -> &WeightedSpace<T> {
        &self.x_space
    }

    fn data_space(&self) -> &WeightedSpace<T> {
        &self.y_space
    }

    fn coefficient_space(&self) -> &WeightedSpace<T> {
        &self.coef_space
    }

    fn x0(&self) -> &DVector<T> {
        &self.x0
    }

    fn truth(&self) -> Option<&DVector<T>> {
        self.truth.as_ref()
    }

    fn set_truth(&mut self, coefficients: &Coefficients<T>) -> Result<()> {
        self.truth = Some(self.extend(coefficients)?);
        Ok(())
    }

    fn extend(&self, coefficients: &Coefficients<T>) -> Result<DVector<T>> {
        check_len(self.layout.slice_len, coefficients.extended.len())?;
        check_len(0, coefficients.shared.len())?;
        let q = &coefficients.extended;
        Ok(match self.formulation {
            Formulation::Reduced => q.clone(),
            Formulation::AllAtOnce => concat(&[q, &self.solve_state(q)?]),
        })
    }

    fn forward(&self, x: &DVector<T>) -> Result<DVector<T>> {
        check_len(self.layout.total(), x.len())?;
        let q = self.layout.slice(x, 0).into_owned();
        match self.formulation {
            Formulation::Reduced => Ok(self.top_trace(&self.solve_state(&q)?)),
            Formulation::AllAtOnce => {
                let u = self.layout.state(x, 0).into_owned();
                Ok(concat(&[&self.residual(&q, &u)?, &self.top_trace(&u)]))
            }
        }
    }

    fn apply_k(&self, v: &DVector<T>) -> Result<DVector<T>> {
        check_len(self.layout.total(), v.len())?;
        let dq = self.layout.slice(v, 0);
        match self.formulation {
            Formulation::Reduced => {
                let mut rhs = DVector::zeros(self.free.len());
                for (r, &k) in self.robin_nodes.iter().enumerate() {
                    rhs[self.free_position(k)] = self.robin_weights[r] * self.phi0[r] * dq[r];
                }
                Ok(-(&self.z0 * rhs))
            }
            Formulation::AllAtOnce => {
                let du = self.layout.state(v, 0).into_owned();
                let mut res = self.stiffness.mul_vec(&du)?;
                for (r, &k) in self.robin_nodes.iter().enumerate() {
                    res[k] += self.robin_weights[r] * (self.q0[r] * self.dphi0[r] * du[k] + self.phi0[r] * dq[r]);
                }
                for k in 0..res.len() {
                    if self.free_index[k].is_none() {
                        res[k] = du[k];
                    }
                }
                Ok(concat(&[&res, &self.top_trace(&du)]))
            }
        }
    }

    fn frozen_k(&self) -> Result<&LinOpRep<T>> {
        if let Some(k) = self.k.get() {
            return Ok(k);
        }
        let nr = self.robin_nodes.len();
        let mut k = DMatrix::zeros(self.y_space.dim(), self.x_space.dim());
        match self.formulation {
            Formulation::Reduced => {
                for (r, &node) in self.robin_nodes.iter().enumerate() {
                    let scale = -self.robin_weights[r] * self.phi0[r];
                    k.set_column(r, &(self.z0.column(self.free_position(node)) * scale));
                }
            }
            Formulation::AllAtOnce => {
                let n = self.grid.node_count();
                let dense = self.stiffness.to_dense();
                for i in 0..n {
                    if self.free_index[i].is_some() {
                        for j in 0..n {
                            k[(i, nr + j)] = dense[(i, j)];
                        }
                    } else {
                        k[(i, nr + i)] = T::one();
                    }
                }
                for (r, &node) in self.robin_nodes.iter().enumerate() {
                    let w = self.robin_weights[r];
                    k[(node, r)] = w * self.phi0[r];
                    k[(node, nr + node)] += w * self.q0[r] * self.dphi0[r];
                }
                for (t, &node) in self.top_nodes.iter().enumerate() {
                    k[(n + t, nr + node)] = T::one();
                }
            }
        }
        let op = LinOpRep::new(k, self.x_space.clone(), self.y_space.clone())?;
        Ok(self.k.get_or_init(|| op))
    }

    fn r_map(&self, x: &DVector<T>) -> Result<DVector<T>> {
        check_len(self.layout.total(), x.len())?;
        let q = self.layout.slice(x, 0).into_owned();
        let u = match self.formulation {
            Formulation::Reduced => self.solve_state(&q)?,
            Formulation::AllAtOnce => self.layout.state(x, 0).into_owned(),
        };
        let u_r = self.robin_trace(&u);
        let u0_r = self.robin_trace(&self.u0);
        let rq = DVector::from_fn(q.len(), |r, _| {
            let dphi = self.phi.value(u_r[r]) - self.phi0[r];
            q[r] - self.q0[r] + (dphi * q[r] - self.dphi0[r] * (u_r[r] - u0_r[r]) * self.q0[r]) / self.phi0[r]
        });
        Ok(match self.formulation {
            Formulation::Reduced => rq,
            Formulation::AllAtOnce => concat(&[&rq, &(&u - &self.u0)]),
        })
    }

    fn penalty(&self) -> &Penalty<T> {
        &self.penalty
    }

    fn expects_trivial_nullspace(&self) -> bool {
        true
    }

    fn random_direction(&self, rng: &mut dyn rand::RngCore) -> DVector<T> {
        super::smooth_direction(&self.grid, &self.layout, self.grid.segment(ROBIN).expect("bottom segment"), rng)
    }

    fn auxiliary_operators(&self) -> Vec<(String, LinOpRep<T>)> {
        let mut ops = vec![(
            "stiffness".to_string(),
            LinOpRep::new(self.stiffness.to_dense(), self.grid.volume_space(), self.grid.dual_space()).expect("finite stiffness"),
        )];
        for seg in [ROBIN, TOP] {
            if let Ok(trace) = pde::trace_op(&self.grid, seg) {
                ops.push((format!("trace_{seg}"), trace));
            }
        }
        ops
    }
}
