//! Linear algebra in weighted inner-product spaces.
//!
//! Every vector space carries positive quadrature weights `w` and the inner
//! product `<x, y> = sum_i w_i x_i y_i`. Operators are dense matrices tagged
//! with their domain and codomain; adjoints are taken in the weighted sense,
//! `A* = W_dom^{-1} A^T W_cod`.

pub mod banded;

use nalgebra::{Cholesky, DMatrix, DVector, SVD};

use crate::error::{check_len, Error, Result};
use crate::Real;

/// Finite-dimensional Hilbert space `R^n` with weighted inner product.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedSpace<T: Real> {
    weights: DVector<T>,
}

impl<T: Real> WeightedSpace<T> {
    pub fn new(weights: DVector<T>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::Argument("space dimension must be at least 1".into()));
        }
        if let Some(w) = weights.iter().find(|w| !(**w > T::zero() && w.is_finite())) {
            return Err(Error::Argument(format!(
                "space weights must be positive and finite, found {}",
                w.as_f64()
            )));
        }
        Ok(Self { weights })
    }

    /// Euclidean space of the given dimension.
    pub fn unit(dim: usize) -> Self {
        assert!(dim >= 1, "space dimension must be at least 1");
        Self {
            weights: DVector::from_element(dim, T::one()),
        }
    }

    pub fn dim(&self) -> usize {
        self.weights.len()
    }

    pub fn weights(&self) -> &DVector<T> {
        &self.weights
    }

    pub fn inner(&self, x: &DVector<T>, y: &DVector<T>) -> Result<T> {
        check_len(self.dim(), x.len())?;
        check_len(self.dim(), y.len())?;
        Ok(self
            .weights
            .iter()
            .zip(x.iter().zip(y.iter()))
            .fold(T::zero(), |acc, (&w, (&a, &b))| acc + w * a * b))
    }

    pub fn norm(&self, x: &DVector<T>) -> Result<T> {
        Ok(self.inner(x, x)?.sqrt())
    }

    /// Orthogonal direct sum of the given spaces, in order.
    pub fn concat(spaces: &[&Self]) -> Self {
        let total = spaces.iter().map(|s| s.dim()).sum();
        let mut weights = DVector::zeros(total);
        let mut offset = 0;
        for s in spaces {
            weights.rows_mut(offset, s.dim()).copy_from(&s.weights);
            offset += s.dim();
        }
        Self { weights }
    }

    /// The same space repeated `count` times.
    pub fn repeat(&self, count: usize) -> Self {
        let parts: Vec<&Self> = std::iter::repeat_n(self, count).collect();
        Self::concat(&parts)
    }

    pub fn scaled(&self, factor: T) -> Result<Self> {
        Self::new(self.weights.map(|w| w * factor))
    }

    pub fn sqrt_weights(&self) -> DVector<T> {
        self.weights.map(|w| w.sqrt())
    }
}

/// `sum_i w_i x_i y_i`.
pub fn weighted_inner<T: Real>(space: &WeightedSpace<T>, x: &DVector<T>, y: &DVector<T>) -> Result<T> {
    space.inner(x, y)
}

/// Dense linear operator between two weighted spaces.
#[derive(Debug, Clone, PartialEq)]
pub struct LinOpRep<T: Real> {
    matrix: DMatrix<T>,
    domain: WeightedSpace<T>,
    codomain: WeightedSpace<T>,
}

impl<T: Real> LinOpRep<T> {
    pub fn new(matrix: DMatrix<T>, domain: WeightedSpace<T>, codomain: WeightedSpace<T>) -> Result<Self> {
        check_len(codomain.dim(), matrix.nrows())?;
        check_len(domain.dim(), matrix.ncols())?;
        if matrix.iter().any(|a| !a.is_finite()) {
            return Err(Error::Numeric("operator matrix has non-finite entries".into()));
        }
        Ok(Self { matrix, domain, codomain })
    }

    pub fn zeros(domain: WeightedSpace<T>, codomain: WeightedSpace<T>) -> Self {
        Self {
            matrix: DMatrix::zeros(codomain.dim(), domain.dim()),
            domain,
            codomain,
        }
    }

    pub fn identity(space: WeightedSpace<T>) -> Self {
        Self {
            matrix: DMatrix::identity(space.dim(), space.dim()),
            domain: space.clone(),
            codomain: space,
        }
    }

    pub fn matrix(&self) -> &DMatrix<T> {
        &self.matrix
    }

    pub fn into_matrix(self) -> DMatrix<T> {
        self.matrix
    }

    pub fn domain(&self) -> &WeightedSpace<T> {
        &self.domain
    }

    pub fn codomain(&self) -> &WeightedSpace<T> {
        &self.codomain
    }

    pub fn apply(&self, x: &DVector<T>) -> Result<DVector<T>> {
        check_len(self.domain.dim(), x.len())?;
        Ok(&self.matrix * x)
    }

    /// `A* y` without forming the adjoint matrix.
    pub fn apply_adjoint(&self, y: &DVector<T>) -> Result<DVector<T>> {
        check_len(self.codomain.dim(), y.len())?;
        let weighted = y.component_mul(self.codomain.weights());
        let mut out = self.matrix.tr_mul(&weighted);
        out.component_div_assign(self.domain.weights());
        Ok(out)
    }

    /// Hilbert-space adjoint with respect to the two weighted inner products.
    pub fn adjoint(&self) -> Self {
        let wd = self.domain.weights();
        let wc = self.codomain.weights();
        let matrix = DMatrix::from_fn(self.domain.dim(), self.codomain.dim(), |i, j| self.matrix[(j, i)] * wc[j] / wd[i]);
        Self {
            matrix,
            domain: self.codomain.clone(),
            codomain: self.domain.clone(),
        }
    }

    /// `self ∘ inner`.
    pub fn compose(&self, inner: &Self) -> Result<Self> {
        if inner.codomain != self.domain {
            return Err(Error::Argument("composition: codomain/domain mismatch".into()));
        }
        Ok(Self {
            matrix: &self.matrix * &inner.matrix,
            domain: inner.domain.clone(),
            codomain: self.codomain.clone(),
        })
    }

    /// Stacks `below` under `self`: `x ↦ (Ax, Bx)` into the direct-sum codomain.
    pub fn stack(&self, below: &Self) -> Result<Self> {
        if below.domain != self.domain {
            return Err(Error::Argument("stack: operators must share a domain".into()));
        }
        let (m1, m2, n) = (self.matrix.nrows(), below.matrix.nrows(), self.matrix.ncols());
        let mut matrix = DMatrix::zeros(m1 + m2, n);
        matrix.rows_mut(0, m1).copy_from(&self.matrix);
        matrix.rows_mut(m1, m2).copy_from(&below.matrix);
        Ok(Self {
            matrix,
            domain: self.domain.clone(),
            codomain: WeightedSpace::concat(&[&self.codomain, &below.codomain]),
        })
    }

    pub fn scaled(&self, factor: T) -> Self {
        Self {
            matrix: &self.matrix * factor,
            domain: self.domain.clone(),
            codomain: self.codomain.clone(),
        }
    }

    /// Euclidean representative `W_cod^{1/2} A W_dom^{-1/2}`; shares singular
    /// values and norms with the weighted operator.
    pub fn euclidean_matrix(&self) -> DMatrix<T> {
        let sc = self.codomain.sqrt_weights();
        let sd = self.domain.sqrt_weights();
        DMatrix::from_fn(self.matrix.nrows(), self.matrix.ncols(), |i, j| self.matrix[(i, j)] * sc[i] / sd[j])
    }

    /// Operator norm, exact via SVD.
    pub fn norm(&self) -> T {
        singular_values(self).iter().copied().fold(T::zero(), T::max)
    }

    /// Hilbert–Schmidt norm in the weighted geometry.
    pub fn hs_norm(&self) -> T {
        self.euclidean_matrix().norm()
    }

    /// `A^T W_cod A`, the normal matrix scaled by `W_dom`.
    pub fn weighted_gram(&self) -> DMatrix<T> {
        let sc = self.codomain.sqrt_weights();
        let mut b = self.matrix.clone();
        for (i, mut row) in b.row_iter_mut().enumerate() {
            row *= sc[i];
        }
        b.transpose() * &b
    }
}

/// Hilbert-space adjoint `A*` with `<Ax, y>_cod = <x, A*y>_dom`.
pub fn adjoint<T: Real>(op: &LinOpRep<T>) -> LinOpRep<T> {
    op.adjoint()
}

/// Accumulates `N = sum_i c_i A_i* A_i` over a common domain and solves
/// `(N + alpha id) z = rhs` by Cholesky factorization.
///
/// Internally the system is multiplied through by `W_dom`, which makes it
/// symmetric in the Euclidean sense.
#[derive(Debug, Clone)]
pub struct NormalSystem<T: Real> {
    domain: WeightedSpace<T>,
    gram: DMatrix<T>,
}

/// Required relative residual of every normal-equation solve.
pub const SOLVE_RTOL: f64 = 1e-10;

impl<T: Real> NormalSystem<T> {
    pub fn new(domain: WeightedSpace<T>) -> Self {
        let n = domain.dim();
        Self {
            domain,
            gram: DMatrix::zeros(n, n),
        }
    }

    pub fn domain(&self) -> &WeightedSpace<T> {
        &self.domain
    }

    pub fn add(&mut self, op: &LinOpRep<T>, coef: T) -> Result<&mut Self> {
        if op.domain() != &self.domain {
            return Err(Error::Argument("normal system: operator domain mismatch".into()));
        }
        self.gram += op.weighted_gram() * coef;
        Ok(self)
    }

    /// `(N + alpha id) z`.
    pub fn apply(&self, alpha: T, z: &DVector<T>) -> Result<DVector<T>> {
        check_len(self.domain.dim(), z.len())?;
        let mut out = &self.gram * z;
        out.component_div_assign(self.domain.weights());
        out.axpy(alpha, z, T::one());
        Ok(out)
    }

    pub fn solve(&self, alpha: T, rhs: &DVector<T>) -> Result<DVector<T>> {
        self.solve_to(alpha, rhs, T::lit(SOLVE_RTOL))
    }

    /// [`NormalSystem::solve`] with relative residual tolerance `rtol`.
    pub fn solve_to(&self, alpha: T, rhs: &DVector<T>, rtol: T) -> Result<DVector<T>> {
        check_len(self.domain.dim(), rhs.len())?;
        if alpha < T::zero() || !alpha.is_finite() {
            return Err(Error::Argument(format!("alpha must be non-negative, got {}", alpha.as_f64())));
        }
        if rhs.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("right-hand side has non-finite entries".into()));
        }
        let w = self.domain.weights();
        let mut system = self.gram.clone();
        for i in 0..system.nrows() {
            system[(i, i)] += alpha * w[i];
        }
        let chol = Cholesky::new(system).ok_or_else(|| Error::Numeric("normal matrix is not positive definite".into()))?;
        let scaled_rhs = rhs.component_mul(w);
        let mut z = chol.solve(&scaled_rhs);

        let rhs_norm = self.domain.norm(rhs)?;
        if rhs_norm == T::zero() {
            return Ok(z);
        }
        let tol = rtol * rhs_norm;
        // Iterative refinement for small alpha.
        for _ in 0..4 {
            let residual = rhs - self.apply(alpha, &z)?;
            if self.domain.norm(&residual)? <= tol * T::lit(1e-2) {
                break;
            }
            z += chol.solve(&residual.component_mul(w));
        }
        let residual = self.domain.norm(&(rhs - self.apply(alpha, &z)?))?;
        if !(residual <= tol) {
            return Err(Error::Numeric(format!(
                "normal equation residual {:e} exceeds {:e} relative",
                (residual / rhs_norm).as_f64(),
                rtol.as_f64()
            )));
        }
        Ok(z)
    }
}

/// Solves `(K*K + P*P + alpha id) z = rhs`.
pub fn solve_regularized<T: Real>(k: &LinOpRep<T>, p: Option<&LinOpRep<T>>, alpha: T, rhs: &DVector<T>) -> Result<DVector<T>> {
    if !(alpha > T::zero()) {
        return Err(Error::Argument(format!("alpha must be positive, got {}", alpha.as_f64())));
    }
    let mut system = NormalSystem::new(k.domain().clone());
    system.add(k, T::one())?;
    if let Some(p) = p {
        system.add(p, T::one())?;
    }
    system.solve(alpha, rhs)
}

/// Singular spectrum and numerical nullspace of an operator.
#[derive(Debug, Clone)]
pub struct Nullspace<T: Real> {
    /// Singular values, descending; `min(rows, cols)` of them.
    pub singular_values: DVector<T>,
    /// Orthonormal (in the domain geometry) basis of the right-singular
    /// subspace with `sigma <= rel_tol * sigma_max`, including the directions
    /// beyond the row count of a wide operator.
    pub basis: Vec<DVector<T>>,
}

impl<T: Real> Nullspace<T> {
    pub fn dim(&self) -> usize {
        self.basis.len()
    }
}

fn sorted_desc<T: Real>(values: &DVector<T>) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[b].partial_cmp(&values[a]).unwrap_or(std::cmp::Ordering::Equal));
    idx
}

/// Weighted singular values, descending.
pub fn singular_values<T: Real>(op: &LinOpRep<T>) -> DVector<T> {
    let m = op.euclidean_matrix();
    let sv = if m.nrows() >= m.ncols() {
        SVD::new(m, false, false).singular_values
    } else {
        SVD::new(m.transpose(), false, false).singular_values
    };
    let order = sorted_desc(&sv);
    DVector::from_iterator(sv.len(), order.iter().map(|&i| sv[i]))
}

/// Number of singular values at or below `rel_tol * sigma_max`, counting the
/// `cols - rows` structural zeros of a wide operator.
pub fn numerical_nullity<T: Real>(sv: &DVector<T>, cols: usize, rel_tol: T) -> usize {
    let smax = sv.iter().copied().fold(T::zero(), T::max);
    let structural = cols.saturating_sub(sv.len());
    if smax == T::zero() {
        return cols;
    }
    structural + sv.iter().filter(|&&s| s <= rel_tol * smax).count()
}

pub fn numerical_nullspace<T: Real>(op: &LinOpRep<T>, rel_tol: T) -> Result<Nullspace<T>> {
    if !(rel_tol > T::zero() && rel_tol < T::one()) {
        return Err(Error::Argument(format!("rel_tol must lie in (0, 1), got {}", rel_tol.as_f64())));
    }
    let n = op.domain().dim();
    let sd = op.domain().sqrt_weights();
    let to_domain = |v: DVector<T>| v.component_div(&sd);

    let mut m = op.euclidean_matrix();
    let rows = m.nrows();
    if rows < n {
        // Pad to square so that the SVD yields a complete right basis.
        m = m.resize_vertically(n, T::zero());
    }
    let svd = SVD::new(m, false, true);
    let v_t = svd
        .v_t
        .ok_or_else(|| Error::Numeric("SVD did not produce right singular vectors".into()))?;
    let order = sorted_desc(&svd.singular_values);
    let k = rows.min(n);
    let singular_values = DVector::from_iterator(k, order.iter().take(k).map(|&i| svd.singular_values[i]));
    let smax = singular_values.iter().copied().fold(T::zero(), T::max);

    let basis = if smax == T::zero() {
        (0..n)
            .map(|i| {
                let mut e = DVector::zeros(n);
                e[i] = T::one() / sd[i];
                e
            })
            .collect()
    } else {
        order
            .iter()
            .enumerate()
            .filter(|&(rank, &i)| rank >= k || svd.singular_values[i] <= rel_tol * smax)
            .map(|(_, &i)| to_domain(v_t.row(i).transpose()))
            .collect()
    };
    Ok(Nullspace { singular_values, basis })
}

/// Default central-difference step `1e-5 (1 + |x|_inf)`.
pub fn default_fd_step<T: Real>(x: &DVector<T>) -> T {
    T::lit(1e-5) * (T::one() + x.amax())
}

/// Central differences, one column at a time; `sink` receives each column.
pub fn fd_columns<T, F, S>(mut map: F, x: &DVector<T>, step: T, mut sink: S) -> Result<()>
where
    T: Real,
    F: FnMut(&DVector<T>) -> Result<DVector<T>>,
    S: FnMut(usize, DVector<T>) -> Result<()>,
{
    if !(step > T::zero()) {
        return Err(Error::Argument(format!(
            "finite-difference step must be positive, got {}",
            step.as_f64()
        )));
    }
    let two_h = step + step;
    let mut probe = x.clone();
    for i in 0..x.len() {
        probe[i] = x[i] + step;
        let plus = map(&probe)?;
        probe[i] = x[i] - step;
        let minus = map(&probe)?;
        probe[i] = x[i];
        sink(i, (plus - minus) / two_h)?;
    }
    Ok(())
}

/// Central-difference Jacobian of `map` at `x`.
pub fn fd_jacobian<T, F>(map: F, x: &DVector<T>, step: T, domain: &WeightedSpace<T>, codomain: &WeightedSpace<T>) -> Result<LinOpRep<T>>
where
    T: Real,
    F: FnMut(&DVector<T>) -> Result<DVector<T>>,
{
    check_len(domain.dim(), x.len())?;
    let mut jac = DMatrix::zeros(codomain.dim(), domain.dim());
    fd_columns(map, x, step, |i, col| {
        check_len(codomain.dim(), col.len())?;
        jac.set_column(i, &col);
        Ok(())
    })?;
    LinOpRep::new(jac, domain.clone(), codomain.clone())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn space(w: &[f64]) -> WeightedSpace<f64> {
        WeightedSpace::new(DVector::from_row_slice(w)).unwrap()
    }

    fn random_op(rng: &mut ChaCha8Rng, m: usize, n: usize) -> LinOpRep<f64> {
        let a = DMatrix::from_fn(m, n, |_, _| rng.random_range(-1.0..1.0));
        let wd = DVector::from_fn(n, |_, _| rng.random_range(0.1..3.0));
        let wc = DVector::from_fn(m, |_, _| rng.random_range(0.1..3.0));
        LinOpRep::new(a, WeightedSpace::new(wd).unwrap(), WeightedSpace::new(wc).unwrap()).unwrap()
    }

    #[test]
    fn inner_product_examples() {
        let s = space(&[1.0, 1.0]);
        let x = DVector::from_row_slice(&[1.0, 0.0]);
        let y = DVector::from_row_slice(&[0.0, 1.0]);
        assert_eq!(weighted_inner(&s, &x, &y).unwrap(), 0.0);

        let s = space(&[2.0, 3.0]);
        let one = DVector::from_row_slice(&[1.0, 1.0]);
        assert_eq!(weighted_inner(&s, &one, &one).unwrap(), 5.0);
    }

    #[test]
    fn inner_product_length_mismatch() {
        let s = space(&[1.0, 1.0]);
        let err = s.inner(&DVector::zeros(3), &DVector::zeros(2)).unwrap_err();
        assert_eq!(err, Error::Dimension { expected: 2, got: 3 });
    }

    #[test]
    fn rejects_bad_weights() {
        assert!(WeightedSpace::new(DVector::from_row_slice(&[1.0, 0.0])).is_err());
        assert!(WeightedSpace::<f64>::new(DVector::zeros(0)).is_err());
        assert!(WeightedSpace::new(DVector::from_row_slice(&[f64::NAN])).is_err());
    }

    #[test]
    fn adjoint_examples() {
        let a = DMatrix::from_row_slice(2, 3, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let op = LinOpRep::new(a.clone(), WeightedSpace::unit(3), WeightedSpace::unit(2)).unwrap();
        assert_eq!(op.adjoint().matrix(), &a.transpose());

        let op = LinOpRep::new(DMatrix::from_element(1, 1, 2.0), space(&[0.5]), space(&[2.0])).unwrap();
        assert_eq!(adjoint(&op).matrix()[(0, 0)], 8.0);
    }

    #[test]
    fn adjoint_identity_on_random_probes() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let op = random_op(&mut rng, 8, 5);
        let adj = op.adjoint();
        let norm = op.norm();
        for _ in 0..20 {
            let x = DVector::from_fn(5, |_, _| rng.random_range(-1.0..1.0));
            let y = DVector::from_fn(8, |_, _| rng.random_range(-1.0..1.0));
            let lhs = op.codomain().inner(&op.apply(&x).unwrap(), &y).unwrap();
            let rhs = op.domain().inner(&x, &adj.apply(&y).unwrap()).unwrap();
            let scale = norm * op.domain().norm(&x).unwrap() * op.codomain().norm(&y).unwrap();
            assert!((lhs - rhs).abs() <= 1e-12 * scale);
            let matrix_free = op.apply_adjoint(&y).unwrap();
            assert_relative_eq!(matrix_free, adj.apply(&y).unwrap(), epsilon = 1e-13);
        }
        let back = adj.adjoint();
        for (a, b) in back.matrix().iter().zip(op.matrix().iter()) {
            assert!((a - b).abs() <= 1e-14 * (1.0 + b.abs()));
        }
    }

    #[test]
    fn solve_regularized_examples() {
        let s = WeightedSpace::unit(1);
        let zero = LinOpRep::zeros(s.clone(), s.clone());
        let z = solve_regularized(&zero, Some(&zero), 2.0, &DVector::from_element(1, 4.0)).unwrap();
        assert_relative_eq!(z[0], 2.0, epsilon = 1e-15);

        let id = LinOpRep::identity(WeightedSpace::unit(2));
        let z = solve_regularized(&id, None, 1.0, &DVector::from_row_slice(&[2.0, 4.0])).unwrap();
        assert_relative_eq!(z, DVector::from_row_slice(&[1.0, 2.0]), epsilon = 1e-15);
    }

    #[test]
    fn solve_regularized_errors() {
        let id = LinOpRep::identity(WeightedSpace::<f64>::unit(2));
        let rhs = DVector::from_row_slice(&[1.0, 1.0]);
        assert!(matches!(solve_regularized(&id, None, 0.0, &rhs), Err(Error::Argument(_))));
        assert!(matches!(solve_regularized(&id, None, -1.0, &rhs), Err(Error::Argument(_))));
        let bad = DVector::from_row_slice(&[f64::INFINITY, 1.0]);
        assert!(matches!(solve_regularized(&id, None, 1.0, &bad), Err(Error::Numeric(_))));
        let bad_matrix = DMatrix::from_row_slice(1, 1, &[f64::NAN]);
        assert!(matches!(
            LinOpRep::new(bad_matrix, WeightedSpace::unit(1), WeightedSpace::unit(1)),
            Err(Error::Numeric(_))
        ));
    }

    #[test]
    fn solve_regularized_residual() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..10 {
            let k = random_op(&mut rng, 6, 4);
            let p = LinOpRep::new(
                DMatrix::from_fn(3, 4, |_, _| rng.random_range(-1.0..1.0)),
                k.domain().clone(),
                WeightedSpace::new(DVector::from_fn(3, |_, _| rng.random_range(0.5..2.0))).unwrap(),
            )
            .unwrap();
            let rhs = DVector::from_fn(4, |_, _| rng.random_range(-1.0..1.0));
            let alpha = rng.random_range(1e-3..1.0);
            let z = solve_regularized(&k, Some(&p), alpha, &rhs).unwrap();
            let applied = k.apply_adjoint(&k.apply(&z).unwrap()).unwrap() + p.apply_adjoint(&p.apply(&z).unwrap()).unwrap() + &z * alpha;
            let res = k.domain().norm(&(applied - &rhs)).unwrap();
            assert!(res <= 1e-10 * k.domain().norm(&rhs).unwrap());
        }
    }

    #[test]
    fn nullspace_examples() {
        let id = LinOpRep::identity(WeightedSpace::<f64>::unit(3));
        assert_eq!(numerical_nullspace(&id, 1e-8).unwrap().dim(), 0);

        let a = DMatrix::<f64>::from_row_slice(2, 2, &[1.0, 0.0, 1.0, 0.0]);
        let op = LinOpRep::new(a, WeightedSpace::unit(2), WeightedSpace::unit(2)).unwrap();
        let ns = numerical_nullspace(&op, 1e-8).unwrap();
        assert_eq!(ns.dim(), 1);
        assert!(ns.basis[0][0].abs() < 1e-14);
        assert_relative_eq!(ns.basis[0][1].abs(), 1.0, epsilon = 1e-14);

        let d = DMatrix::from_diagonal(&DVector::from_row_slice(&[1.0, 1e-12]));
        let op = LinOpRep::new(d, WeightedSpace::unit(2), WeightedSpace::unit(2)).unwrap();
        assert_eq!(numerical_nullspace(&op, 1e-8).unwrap().dim(), 1);

        let zero = LinOpRep::zeros(space(&[1.0, 4.0]), WeightedSpace::unit(2));
        let ns = numerical_nullspace(&zero, 1e-8).unwrap();
        assert_eq!(ns.dim(), 2);

        assert!(numerical_nullspace(&id, 0.0).is_err());
        assert!(numerical_nullspace(&id, 1.0).is_err());
    }

    #[test]
    fn nullspace_of_wide_weighted_operator() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let op = random_op(&mut rng, 3, 7);
        let rel_tol = 1e-8;
        let ns = numerical_nullspace(&op, rel_tol).unwrap();
        assert_eq!(ns.singular_values.len(), 3);
        assert_eq!(ns.dim(), 4);
        let smax = ns.singular_values[0];
        for (i, v) in ns.basis.iter().enumerate() {
            assert!(op.codomain().norm(&op.apply(v).unwrap()).unwrap() <= 2.0 * rel_tol * smax);
            for (j, u) in ns.basis.iter().enumerate() {
                let expected = if i == j { 1.0 } else { 0.0 };
                assert!((op.domain().inner(u, v).unwrap() - expected).abs() < 1e-12);
            }
        }
        assert_eq!(numerical_nullity(&singular_values(&op), 7, rel_tol), 4);
    }

    #[test]
    fn fd_jacobian_examples() {
        let x = DVector::from_row_slice(&[0.3, -1.2, 2.0]);
        let s3 = WeightedSpace::unit(3);
        let jac = fd_jacobian(|v: &DVector<f64>| Ok(v.clone()), &x, 1e-3, &s3, &s3).unwrap();
        assert_relative_eq!(jac.matrix(), &DMatrix::identity(3, 3), epsilon = 1e-12);

        let s1 = WeightedSpace::unit(1);
        let x = DVector::from_element(1, 3.0);
        let jac = fd_jacobian(|v: &DVector<f64>| Ok(v.map(|t| t * t)), &x, 1e-4, &s1, &s1).unwrap();
        assert!((jac.matrix()[(0, 0)] - 6.0).abs() < 1e-7);

        let a = DMatrix::from_row_slice(2, 3, &[1.0, -2.0, 0.5, 3.0, 0.0, 1.5]);
        let x = DVector::from_row_slice(&[1.0, 2.0, 3.0]);
        for step in [1e-4, 1e-2, 1.0, 10.0] {
            let jac = fd_jacobian(|v: &DVector<f64>| Ok(&a * v), &x, step, &s3, &WeightedSpace::unit(2)).unwrap();
            assert_relative_eq!(jac.matrix(), &a, epsilon = 1e-10);
        }
    }

    #[test]
    fn fd_propagates_map_failure() {
        let s = WeightedSpace::unit(1);
        let x = DVector::from_element(1, 0.0);
        let err = fd_jacobian(
            |v: &DVector<f64>| {
                if v[0] < 0.0 {
                    Err(Error::Numeric("outside".into()))
                } else {
                    Ok(v.clone())
                }
            },
            &x,
            1e-3,
            &s,
            &s,
        )
        .unwrap_err();
        assert_eq!(err, Error::Numeric("outside".into()));
        assert!(fd_jacobian(|v: &DVector<f64>| Ok(v.clone()), &x, 0.0, &s, &s).is_err());
    }
}
