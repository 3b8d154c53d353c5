//! `-Δu + q u = f` in `Ω`, `∂_ν u = φ^j` on `∂Ω`, observed on the full boundary.

use std::sync::OnceLock;

use nalgebra::{DMatrix, DVector};

use super::{check_denominator, concat, Coefficients, Formulation, InverseProblem, Layout, Penalty, ProblemInstance, ProblemKind, EPS_U};
use crate::error::{check_len, Error, Result};
use crate::numerics::banded::BandedMatrix;
use crate::numerics::{LinOpRep, WeightedSpace};
use crate::pde::{self, EllipticSolver, Field, Grid, WHOLE_BOUNDARY};
use crate::Real;

/// Flux excitations `cos((j - 1) π s)` over normalized boundary arclength,
/// in boundary-node order.
pub fn cosine_excitations<T: Real>(grid: &Grid<T>, m: usize) -> Vec<DVector<T>> {
    let nodes = grid.boundary_nodes();
    (0..m)
        .map(|j| {
            let freq = T::from_usize_lossy(j) * T::pi();
            DVector::from_iterator(
                nodes.len(),
                nodes.iter().map(|&k| (freq * grid.arclength(k).expect("boundary node")).cos()),
            )
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct PotentialSetup<T: Real> {
    pub q0: DVector<T>,
    pub formulation: Formulation,
    /// Boundary fluxes per experiment, in boundary-node order.
    pub excitations: Vec<DVector<T>>,
    /// Volume source `f`.
    pub source: DVector<T>,
    pub eps_u: T,
}

impl<T: Real> PotentialSetup<T> {
    /// `m` cosine excitations, `f = 1`.
    pub fn new(grid: &Grid<T>, m: usize, q0: DVector<T>, formulation: Formulation) -> Self {
        Self {
            q0,
            formulation,
            excitations: cosine_excitations(grid, m),
            source: DVector::from_element(grid.node_count(), T::one()),
            eps_u: T::lit(EPS_U),
        }
    }
}

#[derive(Debug)]
pub struct PotentialProblem<T: Real> {
    grid: Grid<T>,
    formulation: Formulation,
    stiffness: BandedMatrix<T>,
    loads: Vec<DVector<T>>,
    q0: DVector<T>,
    u0: Vec<DVector<T>>,
    /// `C (A + M q0)^{-1}`.
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

/// Potential problem with `m` cosine excitations and `f = 1`.
pub fn build_potential_problem<T: Real>(grid: Grid<T>, m: usize, q0: Field<T>, formulation: Formulation) -> Result<ProblemInstance<T>> {
    let setup = PotentialSetup::new(&grid, m, q0.into_values(), formulation);
    Ok(ProblemInstance::Potential(PotentialProblem::new(grid, setup)?))
}

impl<T: Real> PotentialProblem<T> {
    pub fn new(grid: Grid<T>, setup: PotentialSetup<T>) -> Result<Self> {
        let m = setup.excitations.len();
        if m == 0 {
            return Err(Error::Configuration("at least one experiment required".into()));
        }
        let n = grid.node_count();
        check_len(n, setup.q0.len())?;
        check_len(n, setup.source.len())?;
        let nb = grid.boundary_nodes().len();
        for (i, phi) in setup.excitations.iter().enumerate() {
            check_len(nb, phi.len())?;
            if setup.excitations[..i].iter().any(|other| other == phi) {
                return Err(Error::Configuration("excitations must be pairwise distinct".into()));
            }
        }

        let stiffness = pde::stiffness_band(&grid, None)?;
        let mass_source = setup.source.component_mul(grid.volume_weights());
        let loads = setup
            .excitations
            .iter()
            .map(|phi| Ok(&mass_source + pde::boundary_load(&grid, phi, WHOLE_BOUNDARY)?))
            .collect::<Result<Vec<_>>>()?;

        let solver0 = pde::elliptic_solver(&grid, &stiffness, &setup.q0)?;
        let u0 = loads.iter().map(|b| solver0.solve(b)).collect::<Result<Vec<_>>>()?;
        for u in &u0 {
            check_denominator(u, setup.eps_u)?;
        }
        let mut selection = DMatrix::zeros(n, nb);
        for (r, &k) in grid.boundary_nodes().iter().enumerate() {
            selection[(k, r)] = T::one();
        }
        let z0 = solver0.solve_matrix(&selection)?.transpose();

        let aao = setup.formulation == Formulation::AllAtOnce;
        let layout = Layout {
            experiments: m,
            slice_len: n,
            shared: vec![],
            state_len: if aao { n } else { 0 },
        };
        let volume = grid.volume_space();
        let boundary = grid.segment_space(WHOLE_BOUNDARY)?;
        let x_space = volume.repeat(if aao { 2 * m } else { m });
        let y_space = if aao {
            WeightedSpace::concat(&[&grid.dual_space().repeat(m), &boundary.repeat(m)])
        } else {
            boundary.repeat(m)
        };
        let slices: Vec<&DVector<T>> = std::iter::repeat_n(&setup.q0, m).collect();
        let mut x0 = concat(&slices);
        if aao {
            let states: Vec<&DVector<T>> = u0.iter().collect();
            x0 = concat(&[&x0, &concat(&states)]);
        }
        let weights = (1..=m).map(|j| T::one() / T::from_usize_lossy(j * j)).collect();
        let penalty = Penalty::new(layout.clone(), x_space.clone(), grid.volume_weights().clone(), weights)?;

        Ok(Self {
            coef_space: volume,
            grid,
            formulation: setup.formulation,
            stiffness,
            loads,
            q0: setup.q0,
            u0,
            z0,
            layout,
            x_space,
            y_space,
            x0,
            truth: None,
            penalty,
            k: OnceLock::new(),
        })
    }

    pub fn grid(&self) -> &Grid<T> {
        &self.grid
    }

    /// Baseline states `u0^j`.
    pub fn baseline_states(&self) -> &[DVector<T>] {
        &self.u0
    }

    fn experiments(&self) -> usize {
        self.layout.experiments
    }

    fn trace(&self, u: &DVector<T>) -> DVector<T> {
        let nodes = self.grid.boundary_nodes();
        DVector::from_iterator(nodes.len(), nodes.iter().map(|&k| u[k]))
    }

    fn solver(&self, q: &DVector<T>) -> Result<EllipticSolver<T>> {
        pde::elliptic_solver(&self.grid, &self.stiffness, q)
    }

    /// `u^j = S^j(q^j)` for every experiment.
    pub fn states(&self, x: &DVector<T>) -> Result<Vec<DVector<T>>> {
        check_len(self.layout.total(), x.len())?;
        (0..self.experiments())
            .map(|j| {
                let q = self.layout.slice(x, j).into_owned();
                if q == self.q0 {
                    return Ok(self.u0[j].clone());
                }
                self.solver(&q)?.solve(&self.loads[j])
            })
            .collect()
    }

    /// `A u + M (q ⊙ u) - b`.
    fn residual(&self, q: &DVector<T>, u: &DVector<T>, b: &DVector<T>) -> Result<DVector<T>> {
        Ok(self.stiffness.mul_vec(u)? + q.component_mul(u).component_mul(self.grid.volume_weights()) - b)
    }
}

impl<T: Real> InverseProblem<T> for PotentialProblem<T> {
    fn kind(&self) -> ProblemKind {
        ProblemKind::Potential
    }

    fn formulation(&self) -> Formulation {
        self.formulation
    }

    fn describe(&self) -> String {
        format!(
            "potential {}-D n={} m={} {}",
            self.grid.dim(),
            self.grid.n(),
            self.experiments(),
            self.formulation
        )
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
        let slices: Vec<&DVector<T>> = std::iter::repeat_n(q, self.experiments()).collect();
        let x = concat(&slices);
        if self.formulation == Formulation::Reduced {
            return Ok(x);
        }
        let solver = self.solver(q)?;
        let states = self.loads.iter().map(|b| solver.solve(b)).collect::<Result<Vec<_>>>()?;
        let refs: Vec<&DVector<T>> = states.iter().collect();
        Ok(concat(&[&x, &concat(&refs)]))
    }

    fn forward(&self, x: &DVector<T>) -> Result<DVector<T>> {
        check_len(self.layout.total(), x.len())?;
        match self.formulation {
            Formulation::Reduced => {
                let traces: Vec<DVector<T>> = self.states(x)?.iter().map(|u| self.trace(u)).collect();
                Ok(concat(&traces.iter().collect::<Vec<_>>()))
            }
            Formulation::AllAtOnce => {
                let mut parts = Vec::with_capacity(2 * self.experiments());
                for j in 0..self.experiments() {
                    let q = self.layout.slice(x, j).into_owned();
                    let u = self.layout.state(x, j).into_owned();
                    parts.push(self.residual(&q, &u, &self.loads[j])?);
                }
                for j in 0..self.experiments() {
                    parts.push(self.trace(&self.layout.state(x, j).into_owned()));
                }
                Ok(concat(&parts.iter().collect::<Vec<_>>()))
            }
        }
    }

    fn apply_k(&self, v: &DVector<T>) -> Result<DVector<T>> {
        check_len(self.layout.total(), v.len())?;
        let w = self.grid.volume_weights();
        let m = self.experiments();
        let mut parts = Vec::with_capacity(2 * m);
        match self.formulation {
            Formulation::Reduced => {
                for j in 0..m {
                    let dq = self.layout.slice(v, j).component_mul(&self.u0[j]).component_mul(w);
                    parts.push(-(&self.z0 * dq));
                }
            }
            Formulation::AllAtOnce => {
                for j in 0..m {
                    let dq = self.layout.slice(v, j).into_owned();
                    let du = self.layout.state(v, j).into_owned();
                    let res = self.stiffness.mul_vec(&du)? + (du.component_mul(&self.q0) + dq.component_mul(&self.u0[j])).component_mul(w);
                    parts.push(res);
                }
                for j in 0..m {
                    parts.push(self.trace(&self.layout.state(v, j).into_owned()));
                }
            }
        }
        Ok(concat(&parts.iter().collect::<Vec<_>>()))
    }

    fn frozen_k(&self) -> Result<&LinOpRep<T>> {
        if let Some(k) = self.k.get() {
            return Ok(k);
        }
        let n = self.grid.node_count();
        let nb = self.grid.boundary_nodes().len();
        let m = self.experiments();
        let w = self.grid.volume_weights();
        let mut k = DMatrix::zeros(self.y_space.dim(), self.x_space.dim());
        match self.formulation {
            Formulation::Reduced => {
                for j in 0..m {
                    let scale = self.u0[j].component_mul(w);
                    let mut block = k.view_mut((j * nb, j * n), (nb, n));
                    for c in 0..n {
                        block.set_column(c, &(self.z0.column(c) * (-scale[c])));
                    }
                }
            }
            Formulation::AllAtOnce => {
                let mut shifted = self.stiffness.clone();
                shifted.add_diagonal(&self.q0.component_mul(w))?;
                let shifted = shifted.to_dense();
                let states = m * n;
                for j in 0..m {
                    for i in 0..n {
                        k[(j * n + i, j * n + i)] = w[i] * self.u0[j][i];
                    }
                    k.view_mut((j * n, states + j * n), (n, n)).copy_from(&shifted);
                    for (r, &node) in self.grid.boundary_nodes().iter().enumerate() {
                        k[(states + j * nb + r, states + j * n + node)] = T::one();
                    }
                }
            }
        }
        let op = LinOpRep::new(k, self.x_space.clone(), self.y_space.clone())?;
        Ok(self.k.get_or_init(|| op))
    }

    fn r_map(&self, x: &DVector<T>) -> Result<DVector<T>> {
        check_len(self.layout.total(), x.len())?;
        let m = self.experiments();
        let states = match self.formulation {
            Formulation::Reduced => self.states(x)?,
            Formulation::AllAtOnce => (0..m).map(|j| self.layout.state(x, j).into_owned()).collect(),
        };
        let mut parts = Vec::with_capacity(2 * m);
        for (j, u) in states.iter().enumerate() {
            let dq = self.layout.slice(x, j) - &self.q0;
            parts.push(dq.component_mul(u).component_div(&self.u0[j]));
        }
        if self.formulation == Formulation::AllAtOnce {
            for (u, u0) in states.iter().zip(&self.u0) {
                parts.push(u - u0);
            }
        }
        Ok(concat(&parts.iter().collect::<Vec<_>>()))
    }

    fn penalty(&self) -> &Penalty<T> {
        &self.penalty
    }

    fn random_direction(&self, rng: &mut dyn rand::RngCore) -> DVector<T> {
        let all: Vec<usize> = (0..self.grid.node_count()).collect();
        super::smooth_direction(&self.grid, &self.layout, &all, rng)
    }

    fn auxiliary_operators(&self) -> Vec<(String, LinOpRep<T>)> {
        let mut ops = vec![(
            "stiffness".to_string(),
            LinOpRep::new(self.stiffness.to_dense(), self.grid.volume_space(), self.grid.dual_space()).expect("finite stiffness"),
        )];
        if let Ok(trace) = pde::trace_op(&self.grid, WHOLE_BOUNDARY) {
            ops.push(("trace".to_string(), trace));
        }
        ops
    }
}
