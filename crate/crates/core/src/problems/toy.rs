//! `F(x) = K x0 + K r(x)` with `r(x) = x - x0` or `r(x) = d + d²/2`, `d = x - x0`.

use nalgebra::DVector;

use super::{Coefficients, Formulation, InverseProblem, Layout, Penalty, ProblemKind};
use crate::error::{check_len, Result};
use crate::numerics::{LinOpRep, WeightedSpace};
use crate::Real;

/// Finite-dimensional model problem with a single experiment and `P = 0`.
#[derive(Debug)]
pub struct LinearToy<T: Real> {
    k: LinOpRep<T>,
    x0: DVector<T>,
    f0: DVector<T>,
    truth: Option<DVector<T>>,
    quadratic: bool,
    layout: Layout,
    penalty: Penalty<T>,
}

impl<T: Real> LinearToy<T> {
    pub fn new(k: LinOpRep<T>, x0: DVector<T>) -> Result<Self> {
        let f0 = k.apply(&x0)?;
        let layout = Layout {
            experiments: 1,
            slice_len: k.domain().dim(),
            shared: vec![],
            state_len: 0,
        };
        let penalty = Penalty::new(layout.clone(), k.domain().clone(), k.domain().weights().clone(), vec![T::one()])?;
        Ok(Self {
            k,
            x0,
            f0,
            truth: None,
            quadratic: false,
            layout,
            penalty,
        })
    }

    /// Switches to the componentwise quadratic r-map.
    pub fn with_quadratic_r(mut self) -> Self {
        self.quadratic = true;
        self
    }

    pub fn with_truth(mut self, truth: DVector<T>) -> Result<Self> {
        check_len(self.layout.total(), truth.len())?;
        self.truth = Some(truth);
        Ok(self)
    }
}

impl<T: Real> InverseProblem<T> for LinearToy<T> {
    fn kind(&self) -> ProblemKind {
        ProblemKind::Toy
    }

    fn formulation(&self) -> Formulation {
        Formulation::Reduced
    }

    fn describe(&self) -> String {
        format!(
            "toy dim={} r={}",
            self.layout.slice_len,
            if self.quadratic { "quadratic" } else { "identity" }
        )
    }

    fn layout(&self) -> &Layout {
        &self.layout
    }

    fn param_space(&self) -> &WeightedSpace<T> {
        self.k.domain()
    }

    fn data_space(&self) -> &WeightedSpace<T> {
        self.k.codomain()
    }

    fn coefficient_space(&self) -> &WeightedSpace<T> {
        self.k.domain()
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
        check_len(self.layout.total(), coefficients.extended.len())?;
        Ok(coefficients.extended.clone())
    }

    fn forward(&self, x: &DVector<T>) -> Result<DVector<T>> {
        Ok(&self.f0 + self.k.apply(&self.r_map(x)?)?)
    }

    fn apply_k(&self, v: &DVector<T>) -> Result<DVector<T>> {
        self.k.apply(v)
    }

    fn frozen_k(&self) -> Result<&LinOpRep<T>> {
        Ok(&self.k)
    }

    fn r_map(&self, x: &DVector<T>) -> Result<DVector<T>> {
        check_len(self.layout.total(), x.len())?;
        let d = x - &self.x0;
        Ok(if self.quadratic { d.map(|v| v + v * v * T::lit(0.5)) } else { d })
    }

    fn penalty(&self) -> &Penalty<T> {
        &self.penalty
    }
}
