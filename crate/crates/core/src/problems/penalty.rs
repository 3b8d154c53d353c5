use std::sync::OnceLock;

use nalgebra::{DMatrix, DVector};

use super::Layout;
use crate::error::{check_len, Error, Result};
use crate::numerics::{LinOpRep, WeightedSpace};
use crate::Real;

/// `(Pq)(j) = q(j) - sum_l w_l q(l) / sum_l w_l` on the extended block, zero
/// on shared coefficients and states.
#[derive(Debug)]
pub struct Penalty<T: Real> {
    layout: Layout,
    space: WeightedSpace<T>,
    slice_weights: DVector<T>,
    weights: Vec<T>,
    op: OnceLock<LinOpRep<T>>,
}

impl<T: Real> Penalty<T> {
    /// `space` is the full parameter space, `slice_weights` the quadrature
    /// weights of one slice and `weights` the per-experiment weights.
    pub fn new(layout: Layout, space: WeightedSpace<T>, slice_weights: DVector<T>, weights: Vec<T>) -> Result<Self> {
        check_len(layout.total(), space.dim())?;
        check_len(layout.slice_len, slice_weights.len())?;
        check_len(layout.experiments, weights.len())?;
        if weights.iter().any(|w| !(*w > T::zero() && w.is_finite())) {
            return Err(Error::Argument("penalty weights must be positive".into()));
        }
        Ok(Self {
            layout,
            space,
            slice_weights,
            weights,
            op: OnceLock::new(),
        })
    }

    pub fn weights(&self) -> &[T] {
        &self.weights
    }

    /// True when `P = 0`, i.e. a single experiment.
    pub fn is_zero(&self) -> bool {
        self.layout.experiments == 1
    }

    fn total_weight(&self) -> T {
        self.weights.iter().fold(T::zero(), |a, &w| a + w)
    }

    /// Weighted mean of the slices.
    pub fn mean(&self, x: &DVector<T>) -> Result<DVector<T>> {
        check_len(self.layout.total(), x.len())?;
        let mut mean = DVector::zeros(self.layout.slice_len);
        for (j, &w) in self.weights.iter().enumerate() {
            mean.axpy(w, &self.layout.slice(x, j), T::one());
        }
        Ok(mean / self.total_weight())
    }

    pub fn apply(&self, x: &DVector<T>) -> Result<DVector<T>> {
        let mean = self.mean(x)?;
        let mut out = DVector::zeros(x.len());
        let len = self.layout.slice_len;
        for j in 0..self.layout.experiments {
            out.rows_mut(j * len, len).copy_from(&(self.layout.slice(x, j) - &mean));
        }
        Ok(out)
    }

    /// Dense matrix of `P` on the parameter space.
    pub fn op(&self) -> &LinOpRep<T> {
        self.op.get_or_init(|| {
            let n = self.layout.total();
            let len = self.layout.slice_len;
            let total = self.total_weight();
            let mut m = DMatrix::zeros(n, n);
            for j in 0..self.layout.experiments {
                for (l, &w) in self.weights.iter().enumerate() {
                    let coef = if j == l { T::one() - w / total } else { -w / total };
                    for k in 0..len {
                        m[(j * len + k, l * len + k)] = coef;
                    }
                }
            }
            LinOpRep::new(m, self.space.clone(), self.space.clone()).expect("finite penalty")
        })
    }

    /// Mean slice followed by the shared blocks.
    pub fn collapse(&self, x: &DVector<T>) -> Result<DVector<T>> {
        let mean = self.mean(x)?;
        let shared_len: usize = self.layout.shared.iter().sum();
        let mut out = DVector::zeros(mean.len() + shared_len);
        out.rows_mut(0, mean.len()).copy_from(&mean);
        out.rows_mut(mean.len(), shared_len)
            .copy_from(&x.rows(self.layout.extended_len(), shared_len));
        Ok(out)
    }

    /// `max_j |q^j - mean|` in the slice norm.
    pub fn j_spread(&self, x: &DVector<T>) -> Result<T> {
        let mean = self.mean(x)?;
        Ok((0..self.layout.experiments)
            .map(|j| {
                let d = self.layout.slice(x, j) - &mean;
                d.component_mul(&d).dot(&self.slice_weights).sqrt()
            })
            .fold(T::zero(), T::max))
    }

    /// Columns form a basis of `N(P)` orthonormal in the parameter space:
    /// constants across `J` at each slice node, then every shared and state
    /// coordinate.
    pub fn kernel_basis(&self) -> DMatrix<T> {
        let layout = &self.layout;
        let len = layout.slice_len;
        let rest = layout.total() - layout.extended_len();
        let w = self.space.weights();
        let mut basis = DMatrix::zeros(layout.total(), len + rest);
        for k in 0..len {
            let norm_sq = (0..layout.experiments).fold(T::zero(), |a, j| a + w[j * len + k]);
            let v = T::one() / norm_sq.sqrt();
            for j in 0..layout.experiments {
                basis[(j * len + k, k)] = v;
            }
        }
        for i in 0..rest {
            let row = layout.extended_len() + i;
            basis[(row, len + i)] = T::one() / w[row].sqrt();
        }
        basis
    }
}
