//! `-∇·(a∇u) + (c - λ) u = 0` in `Ω`, `∂_ν u = φ^n` on `∂Ω`, for every shift
//! `λ` and excitation `n`; observed on the full boundary. Only `c` is
//! extended over `J = {λ} × {1..m}`; `a` stays experiment-independent.

use std::sync::OnceLock;

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use super::{check_denominator, concat, Coefficients, Formulation, InverseProblem, Layout, Penalty, ProblemInstance, ProblemKind, EPS_U};
use crate::error::{check_len, Error, Result};
use crate::numerics::banded::BandedMatrix;
use crate::numerics::{LinOpRep, WeightedSpace};
use crate::pde::{self, EllipticSolver, Field, Grid, WHOLE_BOUNDARY};
use crate::Real;

/// Default spectral shifts.
pub fn default_lambdas<T: Real>() -> Vec<T> {
    [0.0, 1.0, 2.0, 4.0].iter().map(|&l| T::lit(l)).collect()
}

/// Minimum distance of a shift from the spectrum of `(A_a0 + M c0, M)`.
pub const RESONANCE_GAP: f64 = 1e-6;

#[derive(Debug, Clone)]
pub struct DiffAbsSetup<T: Real> {
    pub lambdas: Vec<T>,
    pub c0: DVector<T>,
    pub a0: DVector<T>,
    pub formulation: Formulation,
    /// Boundary fluxes per excitation, in boundary-node order.
    pub excitations: Vec<DVector<T>>,
    pub eps_u: T,
}

impl<T: Real> DiffAbsSetup<T> {
    /// Fluxes `1 + cos((n - 1) π s) / 2`, positive so that every state stays
    /// away from zero.
    pub fn new(grid: &Grid<T>, lambdas: Vec<T>, m: usize, c0: DVector<T>, a0: DVector<T>, formulation: Formulation) -> Self {
        let excitations = super::cosine_excitations(grid, m)
            .into_iter()
            .map(|phi| phi.map(|v| T::one() + v * T::lit(0.5)))
            .collect();
        Self {
            lambdas,
            c0,
            a0,
            formulation,
            excitations,
            eps_u: T::lit(EPS_U),
        }
    }
}

#[derive(Debug)]
pub struct DiffAbsProblem<T: Real> {
    grid: Grid<T>,
    formulation: Formulation,
    lambdas: Vec<T>,
    loads: Vec<DVector<T>>,
    c0: DVector<T>,
    a0: DVector<T>,
    stiffness0: BandedMatrix<T>,
    /// `u0` per experiment, `λ`-major.
    u0: Vec<DVector<T>>,
    /// `C (A_a0 + M (c0 - λ))^{-1}` per shift.
    z0: Vec<DMatrix<T>>,
    layout: Layout,
    x_space: WeightedSpace<T>,
    y_space: WeightedSpace<T>,
    coef_space: WeightedSpace<T>,
    x0: DVector<T>,
    truth: Option<DVector<T>>,
    penalty: Penalty<T>,
    k: OnceLock<LinOpRep<T>>,
}

/// Sign of the correction term in the `c`-component of the r-map.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CorrectionSign {
    /// `r_c = c - c0 + (...) / u0`, which makes the range identity exact.
    Plus,
    /// `r_c = c - c0 - (...) / u0`.
    Minus,
}

pub fn build_diffabs_problem<T: Real>(
    grid: Grid<T>,
    lambdas: Vec<T>,
    m: usize,
    c0: Field<T>,
    a0: Field<T>,
    formulation: Formulation,
) -> Result<ProblemInstance<T>> {
    let setup = DiffAbsSetup::new(&grid, lambdas, m, c0.into_values(), a0.into_values(), formulation);
    Ok(ProblemInstance::DiffAbs(DiffAbsProblem::new(grid, setup)?))
}

impl<T: Real> DiffAbsProblem<T> {
    pub fn new(grid: Grid<T>, setup: DiffAbsSetup<T>) -> Result<Self> {
        let m = setup.excitations.len();
        if m == 0 || setup.lambdas.is_empty() {
            return Err(Error::Configuration("need at least one shift and one excitation".into()));
        }
        if let Some(l) = setup.lambdas.iter().find(|l| !(**l >= T::zero() && l.is_finite())) {
            return Err(Error::Configuration(format!("shifts must be non-negative, got {}", l.as_f64())));
        }
        let n = grid.node_count();
        check_len(n, setup.c0.len())?;
        check_len(n, setup.a0.len())?;
        let nb = grid.boundary_nodes().len();
        for (i, phi) in setup.excitations.iter().enumerate() {
            check_len(nb, phi.len())?;
            if setup.excitations[..i].iter().any(|other| other == phi) {
                return Err(Error::Configuration("excitations must be pairwise distinct".into()));
            }
        }

        let stiffness0 = pde::stiffness_band(&grid, Some(&setup.a0))?;
        check_resonance(&grid, &stiffness0, &setup.c0, &setup.lambdas)?;

        let loads = setup
            .excitations
            .iter()
            .map(|phi| pde::boundary_load(&grid, phi, WHOLE_BOUNDARY))
            .collect::<Result<Vec<_>>>()?;
        let mut selection = DMatrix::zeros(n, nb);
        for (r, &k) in grid.boundary_nodes().iter().enumerate() {
            selection[(k, r)] = T::one();
        }
        let mut u0 = Vec::with_capacity(setup.lambdas.len() * m);
        let mut z0 = Vec::with_capacity(setup.lambdas.len());
        for &lambda in &setup.lambdas {
            let solver = pde::elliptic_solver(&grid, &stiffness0, &setup.c0.map(|c| c - lambda))?;
            for b in &loads {
                let u = solver.solve(b)?;
                check_denominator(&u, setup.eps_u)?;
                u0.push(u);
            }
            z0.push(solver.solve_matrix(&selection)?.transpose());
        }

        let experiments = setup.lambdas.len() * m;
        let aao = setup.formulation == Formulation::AllAtOnce;
        let layout = Layout {
            experiments,
            slice_len: n,
            shared: vec![n],
            state_len: if aao { n } else { 0 },
        };
        let volume = grid.volume_space();
        let blocks = experiments + 1 + if aao { experiments } else { 0 };
        let x_space = volume.repeat(blocks);
        let boundary = grid.segment_space(WHOLE_BOUNDARY)?;
        let y_space = if aao {
            WeightedSpace::concat(&[&grid.dual_space().repeat(experiments), &boundary.repeat(experiments)])
        } else {
            boundary.repeat(experiments)
        };
        let mut weights = Vec::with_capacity(experiments);
        for &lambda in &setup.lambdas {
            for k in 1..=m {
                let l1 = T::one() + lambda;
                weights.push(T::one() / (l1 * l1 * T::from_usize_lossy(k * k)));
            }
        }
        let penalty = Penalty::new(layout.clone(), x_space.clone(), grid.volume_weights().clone(), weights)?;

        let mut parts: Vec<&DVector<T>> = std::iter::repeat_n(&setup.c0, experiments).collect();
        parts.push(&setup.a0);
        if aao {
            parts.extend(u0.iter());
        }
        let x0 = concat(&parts);

        Ok(Self {
            coef_space: volume.repeat(2),
            grid,
            formulation: setup.formulation,
            lambdas: setup.lambdas,
            loads,
            c0: setup.c0,
            a0: setup.a0,
            stiffness0,
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

    pub fn lambdas(&self) -> &[T] {
        &self.lambdas
    }

    fn excitations(&self) -> usize {
        self.loads.len()
    }

    /// `(λ index, excitation index)` of experiment `j`.
    fn split(&self, j: usize) -> (usize, usize) {
        (j / self.excitations(), j % self.excitations())
    }

    fn trace(&self, u: &DVector<T>) -> DVector<T> {
        let nodes = self.grid.boundary_nodes();
        DVector::from_iterator(nodes.len(), nodes.iter().map(|&k| u[k]))
    }

    fn shifted_solver(&self, stiffness: &BandedMatrix<T>, c: &DVector<T>, lambda: T) -> Result<EllipticSolver<T>> {
        pde::elliptic_solver(&self.grid, stiffness, &c.map(|v| v - lambda))
    }

    /// States for the coefficients in `x`.
    pub fn states(&self, x: &DVector<T>) -> Result<Vec<DVector<T>>> {
        check_len(self.layout.total(), x.len())?;
        let a = self.layout.shared_block(x, 0).into_owned();
        let baseline_a = a == self.a0;
        let stiffness = pde::stiffness_band(&self.grid, Some(&a))?;
        // Consecutive experiments with equal shift and slice share a factorization.
        let mut last: Option<(usize, DVector<T>, EllipticSolver<T>)> = None;
        let mut states = Vec::with_capacity(self.layout.experiments);
        for j in 0..self.layout.experiments {
            let (l, e) = self.split(j);
            let c = self.layout.slice(x, j).into_owned();
            if baseline_a && c == self.c0 {
                states.push(self.u0[j].clone());
                continue;
            }
            let reuse = matches!(&last, Some((ll, lc, _)) if *ll == l && *lc == c);
            if !reuse {
                let solver = self.shifted_solver(&stiffness, &c, self.lambdas[l])?;
                last = Some((l, c, solver));
            }
            let (_, _, solver) = last.as_ref().expect("solver set above");
            states.push(solver.solve(&self.loads[e])?);
        }
        Ok(states)
    }

    /// r-map with a chosen sign of the `c` correction term.
    pub fn r_map_with_sign(&self, x: &DVector<T>, sign: CorrectionSign) -> Result<DVector<T>> {
        check_len(self.layout.total(), x.len())?;
        let states = match self.formulation {
            Formulation::Reduced => self.states(x)?,
            Formulation::AllAtOnce => (0..self.layout.experiments).map(|j| self.layout.state(x, j).into_owned()).collect(),
        };
        let da = self.layout.shared_block(x, 0) - &self.a0;
        let w = self.grid.volume_weights();
        let s = match sign {
            CorrectionSign::Plus => T::one(),
            CorrectionSign::Minus => -T::one(),
        };
        let mut parts = Vec::with_capacity(2 * states.len() + 1);
        for (j, u) in states.iter().enumerate() {
            let dc = self.layout.slice(x, j) - &self.c0;
            let du = u - &self.u0[j];
            let correction = dc.component_mul(&du) + pde::stiffness_apply(&self.grid, &da, &du)?.component_div(w);
            parts.push(&dc + correction.component_div(&self.u0[j]) * s);
        }
        parts.push(da);
        if self.formulation == Formulation::AllAtOnce {
            for (u, u0) in states.iter().zip(&self.u0) {
                parts.push(u - u0);
            }
        }
        Ok(concat(&parts.iter().collect::<Vec<_>>()))
    }
}

fn check_resonance<T: Real>(grid: &Grid<T>, stiffness: &BandedMatrix<T>, c0: &DVector<T>, lambdas: &[T]) -> Result<()> {
    let w = grid.volume_weights();
    let s = w.map(|v| T::one() / v.sqrt());
    let mut m = stiffness.to_dense();
    for i in 0..m.nrows() {
        m[(i, i)] += w[i] * c0[i];
    }
    let sym = DMatrix::from_fn(m.nrows(), m.ncols(), |i, j| s[i] * m[(i, j)] * s[j]);
    let eig = SymmetricEigen::new(sym).eigenvalues;
    for &lambda in lambdas {
        if let Some(&mu) = eig.iter().find(|&&mu| (mu - lambda).abs() < T::lit(RESONANCE_GAP)) {
            return Err(Error::Resonance {
                lambda: lambda.as_f64(),
                eigenvalue: mu.as_f64(),
            });
        }
    }
    Ok(())
}

impl<T: Real> InverseProblem<T> for DiffAbsProblem<T> {
    fn kind(&self) -> ProblemKind {
        ProblemKind::DiffAbs
    }

    fn formulation(&self) -> Formulation {
        self.formulation
    }

    fn describe(&self) -> String {
        let lambdas: Vec<String> = self.lambdas.iter().map(|l| format!("{}", l.as_f64())).collect();
        format!(
            "diffabs {}-D n={} lambdas={{{}}} m={} {}",
            self.grid.dim(),
            self.grid.n(),
            lambdas.join(","),
            self.excitations(),
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
        let n = self.grid.node_count();
        check_len(n, coefficients.extended.len())?;
        check_len(1, coefficients.shared.len())?;
        check_len(n, coefficients.shared[0].len())?;
        let mut parts: Vec<&DVector<T>> = std::iter::repeat_n(&coefficients.extended, self.layout.experiments).collect();
        parts.push(&coefficients.shared[0]);
        let reduced = concat(&parts);
        if self.formulation == Formulation::Reduced {
            return Ok(reduced);
        }
        let zeros = DVector::zeros(self.layout.total() - reduced.len());
        let probe = concat(&[&reduced, &zeros]);
        let states = self.states(&probe)?;
        parts.extend(states.iter());
        Ok(concat(&parts))
    }

    fn forward(&self, x: &DVector<T>) -> Result<DVector<T>> {
        check_len(self.layout.total(), x.len())?;
        match self.formulation {
            Formulation::Reduced => {
                let traces: Vec<DVector<T>> = self.states(x)?.iter().map(|u| self.trace(u)).collect();
                Ok(concat(&traces.iter().collect::<Vec<_>>()))
            }
            Formulation::AllAtOnce => {
                let a = self.layout.shared_block(x, 0).into_owned();
                let w = self.grid.volume_weights();
                let mut parts = Vec::with_capacity(2 * self.layout.experiments);
                for j in 0..self.layout.experiments {
                    let (l, e) = self.split(j);
                    let c = self.layout.slice(x, j).map(|v| v - self.lambdas[l]);
                    let u = self.layout.state(x, j).into_owned();
                    let res = pde::stiffness_apply(&self.grid, &a, &u)? + c.component_mul(&u).component_mul(w) - &self.loads[e];
                    parts.push(res);
                }
                for j in 0..self.layout.experiments {
                    parts.push(self.trace(&self.layout.state(x, j).into_owned()));
                }
                Ok(concat(&parts.iter().collect::<Vec<_>>()))
            }
        }
    }

    fn apply_k(&self, v: &DVector<T>) -> Result<DVector<T>> {
        check_len(self.layout.total(), v.len())?;
        let da = self.layout.shared_block(v, 0).into_owned();
        let w = self.grid.volume_weights();
        let mut parts = Vec::with_capacity(2 * self.layout.experiments);
        for j in 0..self.layout.experiments {
            let dc = self.layout.slice(v, j);
            let source = dc.component_mul(&self.u0[j]).component_mul(w) + pde::stiffness_apply(&self.grid, &da, &self.u0[j])?;
            match self.formulation {
                Formulation::Reduced => parts.push(-(&self.z0[self.split(j).0] * source)),
                Formulation::AllAtOnce => {
                    let (l, _) = self.split(j);
                    let du = self.layout.state(v, j).into_owned();
                    let shifted = self.stiffness0.mul_vec(&du)? + du.component_mul(&self.c0.map(|c| c - self.lambdas[l])).component_mul(w);
                    parts.push(shifted + source);
                }
            }
        }
        if self.formulation == Formulation::AllAtOnce {
            for j in 0..self.layout.experiments {
                parts.push(self.trace(&self.layout.state(v, j).into_owned()));
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
        let experiments = self.layout.experiments;
        let a_col = self.layout.shared_offset(0);
        let w = self.grid.volume_weights();
        let mut k = DMatrix::zeros(self.y_space.dim(), self.x_space.dim());
        for j in 0..experiments {
            let (l, _) = self.split(j);
            let g = pde::stiffness_action_matrix(&self.grid, &self.u0[j])?;
            let mass_u0 = self.u0[j].component_mul(w);
            match self.formulation {
                Formulation::Reduced => {
                    let z = &self.z0[l];
                    let mut block = k.view_mut((j * nb, j * n), (nb, n));
                    for c in 0..n {
                        block.set_column(c, &(z.column(c) * (-mass_u0[c])));
                    }
                    k.view_mut((j * nb, a_col), (nb, n)).copy_from(&(-(z * g)));
                }
                Formulation::AllAtOnce => {
                    let states = self.layout.states_offset();
                    for i in 0..n {
                        k[(j * n + i, j * n + i)] = mass_u0[i];
                    }
                    k.view_mut((j * n, a_col), (n, n)).copy_from(&g);
                    let mut shifted = self.stiffness0.clone();
                    shifted.add_diagonal(&self.c0.map(|c| c - self.lambdas[l]).component_mul(w))?;
                    k.view_mut((j * n, states + j * n), (n, n)).copy_from(&shifted.to_dense());
                    let obs = experiments * n;
                    for (r, &node) in self.grid.boundary_nodes().iter().enumerate() {
                        k[(obs + j * nb + r, states + j * n + node)] = T::one();
                    }
                }
            }
        }
        let op = LinOpRep::new(k, self.x_space.clone(), self.y_space.clone())?;
        Ok(self.k.get_or_init(|| op))
    }

    fn r_map(&self, x: &DVector<T>) -> Result<DVector<T>> {
        self.r_map_with_sign(x, CorrectionSign::Plus)
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
            "weighted_stiffness".to_string(),
            LinOpRep::new(self.stiffness0.to_dense(), self.grid.volume_space(), self.grid.dual_space()).expect("finite stiffness"),
        )];
        if let Ok(trace) = pde::trace_op(&self.grid, WHOLE_BOUNDARY) {
            ops.push(("trace".to_string(), trace));
        }
        ops
    }
}
