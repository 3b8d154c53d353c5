//! PDE coefficient identification problems behind one forward-problem contract.
//!
//! Every problem works on a flattened unknown
//! `x = [q^1, ..., q^|J|, shared..., u^1, ..., u^|J|]`: one slice of the
//! extended coefficient per experiment, then experiment-independent
//! coefficients, then (all-at-once only) one state per experiment. The
//! forward map satisfies `F(x) - F(x0) = K r(x)` exactly, with `K = F'(x0)`.

mod diffabs;
mod penalty;
mod potential;
mod robin;
mod toy;

use std::fmt;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

pub use diffabs::{build_diffabs_problem, default_lambdas, CorrectionSign, DiffAbsProblem, DiffAbsSetup};
pub use penalty::Penalty;
pub use potential::{build_potential_problem, cosine_excitations, PotentialProblem, PotentialSetup};
pub use robin::{build_robin_problem, PhiKind, RobinProblem, RobinSetup};
pub use toy::LinearToy;

use rand::{Rng, RngCore};
use rand_distr::StandardNormal;

use crate::error::{check_len, Error, Result};
use crate::numerics::{LinOpRep, WeightedSpace};
use crate::pde::Grid;
use crate::Real;

/// Default lower bound on `|u0|` (and `|Phi(u0)|`) in r-map denominators.
pub const EPS_U: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProblemKind {
    Potential,
    Robin,
    #[serde(rename = "diffabs")]
    DiffAbs,
    Toy,
}

impl ProblemKind {
    pub const PDE: [ProblemKind; 3] = [ProblemKind::Potential, ProblemKind::Robin, ProblemKind::DiffAbs];

    pub fn name(self) -> &'static str {
        match self {
            ProblemKind::Potential => "potential",
            ProblemKind::Robin => "robin",
            ProblemKind::DiffAbs => "diffabs",
            ProblemKind::Toy => "toy",
        }
    }
}

impl fmt::Display for ProblemKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for ProblemKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "potential" => Ok(ProblemKind::Potential),
            "robin" => Ok(ProblemKind::Robin),
            "diffabs" => Ok(ProblemKind::DiffAbs),
            "toy" => Ok(ProblemKind::Toy),
            other => Err(Error::Configuration(format!("unknown problem kind `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Formulation {
    Reduced,
    AllAtOnce,
}

impl Formulation {
    pub fn name(self) -> &'static str {
        match self {
            Formulation::Reduced => "reduced",
            Formulation::AllAtOnce => "all_at_once",
        }
    }
}

impl fmt::Display for Formulation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Formulation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "reduced" => Ok(Formulation::Reduced),
            "all_at_once" | "aao" => Ok(Formulation::AllAtOnce),
            other => Err(Error::Configuration(format!("unknown formulation `{other}`"))),
        }
    }
}

/// Block structure of the flattened unknown.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Layout {
    pub experiments: usize,
    pub slice_len: usize,
    pub shared: Vec<usize>,
    /// Length of each state block; zero in the reduced formulation.
    pub state_len: usize,
}

impl Layout {
    pub fn extended_len(&self) -> usize {
        self.experiments * self.slice_len
    }

    pub fn shared_offset(&self, i: usize) -> usize {
        self.extended_len() + self.shared[..i].iter().sum::<usize>()
    }

    pub fn states_offset(&self) -> usize {
        self.extended_len() + self.shared.iter().sum::<usize>()
    }

    pub fn state_offset(&self, j: usize) -> usize {
        self.states_offset() + j * self.state_len
    }

    pub fn total(&self) -> usize {
        self.states_offset() + self.experiments * self.state_len
    }

    pub fn has_state(&self) -> bool {
        self.state_len > 0
    }

    /// Length of a collapsed coefficient: one slice plus the shared blocks.
    pub fn coefficient_len(&self) -> usize {
        self.slice_len + self.shared.iter().sum::<usize>()
    }

    pub fn slice<'a, T: Real>(&self, x: &'a DVector<T>, j: usize) -> nalgebra::DVectorView<'a, T> {
        x.rows(j * self.slice_len, self.slice_len)
    }

    pub fn shared_block<'a, T: Real>(&self, x: &'a DVector<T>, i: usize) -> nalgebra::DVectorView<'a, T> {
        x.rows(self.shared_offset(i), self.shared[i])
    }

    pub fn state<'a, T: Real>(&self, x: &'a DVector<T>, j: usize) -> nalgebra::DVectorView<'a, T> {
        x.rows(self.state_offset(j), self.state_len)
    }
}

/// Structured view of the unknown `x`.
#[derive(Debug, Clone, PartialEq)]
pub struct ExtendedParam<T: Real> {
    pub slices: Vec<DVector<T>>,
    pub shared: Vec<DVector<T>>,
    pub state: Option<Vec<DVector<T>>>,
}

impl<T: Real> ExtendedParam<T> {
    pub fn from_vector(layout: &Layout, x: &DVector<T>) -> Result<Self> {
        check_len(layout.total(), x.len())?;
        Ok(Self {
            slices: (0..layout.experiments).map(|j| layout.slice(x, j).into_owned()).collect(),
            shared: (0..layout.shared.len()).map(|i| layout.shared_block(x, i).into_owned()).collect(),
            state: layout
                .has_state()
                .then(|| (0..layout.experiments).map(|j| layout.state(x, j).into_owned()).collect()),
        })
    }

    pub fn to_vector(&self, layout: &Layout) -> Result<DVector<T>> {
        if self.slices.len() != layout.experiments || self.shared.len() != layout.shared.len() {
            return Err(Error::Argument("extended parameter does not match the layout".into()));
        }
        if self.state.is_some() != layout.has_state() {
            return Err(Error::Argument("state block present iff all-at-once".into()));
        }
        let mut parts: Vec<&DVector<T>> = Vec::new();
        for s in &self.slices {
            check_len(layout.slice_len, s.len())?;
            parts.push(s);
        }
        for (s, &len) in self.shared.iter().zip(&layout.shared) {
            check_len(len, s.len())?;
            parts.push(s);
        }
        if let Some(states) = &self.state {
            if states.len() != layout.experiments {
                return Err(Error::Argument("one state per experiment required".into()));
            }
            for s in states {
                check_len(layout.state_len, s.len())?;
                parts.push(s);
            }
        }
        Ok(concat(&parts))
    }
}

/// Original, experiment-independent coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct Coefficients<T: Real> {
    /// The coefficient that gets extended over `J`.
    pub extended: DVector<T>,
    /// Coefficients kept experiment-independent.
    pub shared: Vec<DVector<T>>,
}

impl<T: Real> Coefficients<T> {
    pub fn single(extended: DVector<T>) -> Self {
        Self {
            extended,
            shared: Vec::new(),
        }
    }

    pub fn to_vector(&self) -> DVector<T> {
        let mut parts = vec![&self.extended];
        parts.extend(self.shared.iter());
        concat(&parts)
    }
}

/// Highest cosine mode of [`smooth_field`].
const SMOOTH_MODES: usize = 4;

/// `sum_{k,l <= 4} ξ_kl cos(kπx) cos(lπy) / (1 + k² + l²)` at `nodes`, with
/// standard normal `ξ` (`l = 0` only on the unit interval).
pub fn smooth_field<T: Real>(grid: &Grid<T>, nodes: &[usize], rng: &mut dyn RngCore) -> DVector<T> {
    let pi = std::f64::consts::PI;
    let l_max = if grid.dim() == 1 { 0 } else { SMOOTH_MODES };
    let mut out = DVector::zeros(nodes.len());
    for k in 0..=SMOOTH_MODES {
        for l in 0..=l_max {
            let xi: f64 = rng.sample(StandardNormal);
            let amp = xi / (1 + k * k + l * l) as f64;
            for (i, &node) in nodes.iter().enumerate() {
                let (x, y) = grid.coord(node);
                let v = (k as f64 * pi * x.as_f64()).cos() * (l as f64 * pi * y.as_f64()).cos();
                out[i] += T::lit(amp * v);
            }
        }
    }
    out
}

/// Smooth random direction over every block of `layout`; slices live on
/// `slice_nodes`, shared and state blocks on all nodes.
pub(crate) fn smooth_direction<T: Real>(grid: &Grid<T>, layout: &Layout, slice_nodes: &[usize], rng: &mut dyn RngCore) -> DVector<T> {
    let all: Vec<usize> = (0..grid.node_count()).collect();
    let mut parts = Vec::new();
    for _ in 0..layout.experiments {
        parts.push(smooth_field(grid, slice_nodes, rng));
    }
    for &len in &layout.shared {
        debug_assert_eq!(len, all.len());
        parts.push(smooth_field(grid, &all, rng));
    }
    if layout.has_state() {
        for _ in 0..layout.experiments {
            parts.push(smooth_field(grid, &all, rng));
        }
    }
    concat(&parts.iter().collect::<Vec<_>>())
}

pub(crate) fn concat<T: Real>(parts: &[&DVector<T>]) -> DVector<T> {
    let total = parts.iter().map(|p| p.len()).sum();
    let mut out = DVector::zeros(total);
    let mut offset = 0;
    for p in parts {
        out.rows_mut(offset, p.len()).copy_from(p);
        offset += p.len();
    }
    out
}

pub(crate) fn check_denominator<T: Real>(values: &DVector<T>, eps: T) -> Result<()> {
    let min = values
        .iter()
        .map(|v| v.abs())
        .fold(T::max_value().unwrap_or_else(|| T::lit(f64::MAX)), T::min);
    if !(min >= eps) {
        return Err(Error::Denominator {
            min: min.as_f64(),
            threshold: eps.as_f64(),
        });
    }
    Ok(())
}

/// The forward-problem contract shared by all identification problems.
pub trait InverseProblem<T: Real>: Send + Sync {
    fn kind(&self) -> ProblemKind;

    fn formulation(&self) -> Formulation;

    /// Short human-readable instance description.
    fn describe(&self) -> String;

    fn layout(&self) -> &Layout;

    /// `X`: extended coefficient slices (counting measure over `J`), shared
    /// coefficients and states.
    fn param_space(&self) -> &WeightedSpace<T>;

    fn data_space(&self) -> &WeightedSpace<T>;

    /// Space of collapsed coefficients, where reconstruction errors are measured.
    fn coefficient_space(&self) -> &WeightedSpace<T>;

    /// Linearization point and initial guess.
    fn x0(&self) -> &DVector<T>;

    fn truth(&self) -> Option<&DVector<T>>;

    /// Installs the truth, extended constantly over `J`.
    fn set_truth(&mut self, coefficients: &Coefficients<T>) -> Result<()>;

    /// Embeds experiment-independent coefficients as an unknown `x`; in the
    /// all-at-once formulation the states are the exact PDE solutions.
    fn extend(&self, coefficients: &Coefficients<T>) -> Result<DVector<T>>;

    fn forward(&self, x: &DVector<T>) -> Result<DVector<T>>;

    /// `K v` without forming `K`.
    fn apply_k(&self, v: &DVector<T>) -> Result<DVector<T>>;

    /// Dense `K = F'(x0)`, assembled on first use.
    fn frozen_k(&self) -> Result<&LinOpRep<T>>;

    fn r_map(&self, x: &DVector<T>) -> Result<DVector<T>>;

    fn penalty(&self) -> &Penalty<T>;

    /// Dense penalty operator.
    fn penalty_op(&self) -> &LinOpRep<T> {
        self.penalty().op()
    }

    /// Reported reconstruction: weighted mean of the slices, then shared blocks.
    fn collapse(&self, x: &DVector<T>) -> Result<DVector<T>> {
        self.penalty().collapse(x)
    }

    /// `max_j |q^j - collapse|`.
    fn j_spread(&self, x: &DVector<T>) -> Result<T> {
        self.penalty().j_spread(x)
    }

    /// True when linearized uniqueness is expected without any penalty.
    fn expects_trivial_nullspace(&self) -> bool {
        false
    }

    /// Building-block operators exposed to the adjoint audit.
    fn auxiliary_operators(&self) -> Vec<(String, LinOpRep<T>)> {
        Vec::new()
    }

    /// Random perturbation direction for the sampling audits. Independent
    /// standard normal entries unless a problem supplies smooth fields.
    fn random_direction(&self, rng: &mut dyn RngCore) -> DVector<T> {
        DVector::from_fn(self.layout().total(), |_, _| T::lit(rng.sample::<f64, _>(StandardNormal)))
    }

    /// Noise-free data `F(x_dagger)`.
    fn exact_data(&self) -> Result<DVector<T>> {
        let truth = self.truth().ok_or_else(|| Error::Configuration("no truth configured".into()))?;
        self.forward(truth)
    }
}

/// One of the three PDE problems.
#[allow(clippy::large_enum_variant)]
#[derive(Debug)]
pub enum ProblemInstance<T: Real> {
    Potential(PotentialProblem<T>),
    Robin(RobinProblem<T>),
    DiffAbs(DiffAbsProblem<T>),
}

macro_rules! dispatch {
    ($self:ident, $p:ident => $e:expr) => {
        match $self {
            ProblemInstance::Potential($p) => $e,
            ProblemInstance::Robin($p) => $e,
            ProblemInstance::DiffAbs($p) => $e,
        }
    };
}

impl<T: Real> InverseProblem<T> for ProblemInstance<T> {
    fn kind(&self) -> ProblemKind {
        dispatch!(self, p => p.kind())
    }
    fn formulation(&self) -> Formulation {
        dispatch!(self, p => p.formulation())
    }
    fn describe(&self) -> String {
        dispatch!(self, p => p.describe())
    }
    fn layout(&self) -> &Layout {
        dispatch!(self, p => p.layout())
    }
    fn param_space(&self) -> &WeightedSpace<T> {
        dispatch!(self, p => p.param_space())
    }
    fn data_space(&self) -> &WeightedSpace<T> {
        dispatch!(self, p => p.data_space())
    }
    fn coefficient_space(&self) -> &WeightedSpace<T> {
        dispatch!(self, p => p.coefficient_space())
    }
    fn x0(&self) -> &DVector<T> {
        dispatch!(self, p => p.x0())
    }
    fn truth(&self) -> Option<&DVector<T>> {
        dispatch!(self, p => p.truth())
    }
    fn set_truth(&mut self, coefficients: &Coefficients<T>) -> Result<()> {
        dispatch!(self, p => p.set_truth(coefficients))
    }
    fn extend(&self, coefficients: &Coefficients<T>) -> Result<DVector<T>> {
        dispatch!(self, p => p.extend(coefficients))
    }
    fn forward(&self, x: &DVector<T>) -> Result<DVector<T>> {
        dispatch!(self, p => p.forward(x))
    }
    fn apply_k(&self, v: &DVector<T>) -> Result<DVector<T>> {
        dispatch!(self, p => p.apply_k(v))
    }
    fn frozen_k(&self) -> Result<&LinOpRep<T>> {
        dispatch!(self, p => p.frozen_k())
    }
    fn r_map(&self, x: &DVector<T>) -> Result<DVector<T>> {
        dispatch!(self, p => p.r_map(x))
    }
    fn penalty(&self) -> &Penalty<T> {
        dispatch!(self, p => p.penalty())
    }
    fn expects_trivial_nullspace(&self) -> bool {
        dispatch!(self, p => p.expects_trivial_nullspace())
    }
    fn auxiliary_operators(&self) -> Vec<(String, LinOpRep<T>)> {
        dispatch!(self, p => p.auxiliary_operators())
    }
    fn random_direction(&self, rng: &mut dyn RngCore) -> DVector<T> {
        dispatch!(self, p => p.random_direction(rng))
    }
}
