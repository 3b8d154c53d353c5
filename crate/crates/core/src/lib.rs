//! Regularized reconstruction of PDE coefficients from boundary data via
//! range invariance.
//!
//! The unknown coefficient is extended to depend on the experiment index so
//! that the forward map satisfies `F(x) - F(x0) = K r(x)` with a fixed linear
//! operator `K` and a nonlinear, near-identity map `r`. A penalty projection
//! `P` restores the original experiment-independent coefficient.
//!
//! Modules, bottom-up:
//!
//! * [`numerics`]: weighted inner-product linear algebra.
//! * [`pde`]: P1 finite elements on the unit interval / square.
//! * [`problems`]: the potential, Robin and diffusion/absorption problems.
//! * [`solvers`]: frozen Newton, Newton, alternative frozen Newton, variational.
//! * [`verify`]: numerical audits of the analytic convergence hypotheses.
//!
//! All numerical code is generic over the scalar type (any [`Real`]); the
//! aliases at the crate root fix it to `f64`.

// `!(a <= b)` comparisons deliberately reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod numerics;
pub mod pde;
pub mod problems;
pub mod scalar;
pub mod solvers;
pub mod verify;

pub use error::{Error, Result};
pub use scalar::Real;

/// `f64` weighted space.
pub type Space = numerics::WeightedSpace<f64>;
/// `f64` linear operator between weighted spaces.
pub type LinOp = numerics::LinOpRep<f64>;
/// `f64` grid.
pub type Grid = pde::Grid<f64>;
/// `f64` nodal field.
pub type Field = pde::Field<f64>;
/// `f64` problem instance.
pub type Problem = problems::ProblemInstance<f64>;
/// `f64` extended parameter.
pub type Param = problems::ExtendedParam<f64>;
/// `f64` solver configuration.
pub type Config = solvers::SolverConfig<f64>;
/// `f64` run record.
pub type Record = solvers::RunRecord<f64>;
