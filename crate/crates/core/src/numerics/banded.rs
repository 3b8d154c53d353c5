//! Banded LU factorization with partial pivoting.
//!
//! Finite-element matrices on structured grids have bandwidth of order `n`
//! for `n^2` unknowns, so banded elimination costs `O(N n^2)` instead of a
//! dense `O(N^3)`.

use nalgebra::{DMatrix, DVector};

use crate::error::{check_len, Error, Result};
use crate::Real;

/// Square matrix stored by rows within a band, with room for pivoting fill.
#[derive(Debug, Clone)]
pub struct BandedMatrix<T: Real> {
    n: usize,
    kl: usize,
    ku: usize,
    width: usize,
    data: Vec<T>,
}

impl<T: Real> BandedMatrix<T> {
    pub fn zeros(n: usize, kl: usize, ku: usize) -> Self {
        let width = 2 * kl + ku + 1;
        Self {
            n,
            kl,
            ku,
            width,
            data: vec![T::zero(); n * width],
        }
    }

    /// Smallest band containing all nonzeros of `a`.
    pub fn from_dense(a: &DMatrix<T>) -> Result<Self> {
        if a.nrows() != a.ncols() {
            return Err(Error::Argument("banded matrix must be square".into()));
        }
        let n = a.nrows();
        let (mut kl, mut ku) = (0, 0);
        for j in 0..n {
            for i in 0..n {
                if a[(i, j)] != T::zero() {
                    if i > j {
                        kl = kl.max(i - j);
                    } else {
                        ku = ku.max(j - i);
                    }
                }
            }
        }
        let mut out = Self::zeros(n, kl, ku);
        for i in 0..n {
            for j in i.saturating_sub(kl)..(i + ku + 1).min(n) {
                *out.slot(i, j) = a[(i, j)];
            }
        }
        Ok(out)
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Entry `(i, j)`, zero outside the band.
    pub fn entry(&self, i: usize, j: usize) -> T {
        if j + self.kl >= i && j <= i + self.ku {
            self.get(i, j)
        } else {
            T::zero()
        }
    }

    pub fn to_dense(&self) -> DMatrix<T> {
        DMatrix::from_fn(self.n, self.n, |i, j| self.entry(i, j))
    }

    /// Adds `d` to the diagonal.
    pub fn add_diagonal(&mut self, d: &DVector<T>) -> Result<()> {
        check_len(self.n, d.len())?;
        for i in 0..self.n {
            *self.slot(i, i) += d[i];
        }
        Ok(())
    }

    fn offset(&self, i: usize, j: usize) -> usize {
        debug_assert!(j + self.kl >= i && j <= i + self.ku + self.kl);
        i * self.width + (j + self.kl - i)
    }

    fn slot(&mut self, i: usize, j: usize) -> &mut T {
        let o = self.offset(i, j);
        &mut self.data[o]
    }

    fn get(&self, i: usize, j: usize) -> T {
        self.data[self.offset(i, j)]
    }

    /// Adds `v` to entry `(i, j)`; panics outside the declared band.
    pub fn add(&mut self, i: usize, j: usize, v: T) {
        assert!(
            j + self.kl >= i && j <= i + self.ku,
            "entry ({i}, {j}) outside band kl={} ku={}",
            self.kl,
            self.ku
        );
        *self.slot(i, j) += v;
    }

    pub fn mul_vec(&self, x: &DVector<T>) -> Result<DVector<T>> {
        check_len(self.n, x.len())?;
        Ok(DVector::from_fn(self.n, |i, _| {
            let lo = i.saturating_sub(self.kl);
            let hi = (i + self.ku + 1).min(self.n);
            (lo..hi).fold(T::zero(), |acc, j| acc + self.get(i, j) * x[j])
        }))
    }

    /// LU factorization; fails when the smallest pivot is below `1e-12`
    /// relative to the largest entry.
    pub fn factor(mut self) -> Result<BandedLu<T>> {
        let n = self.n;
        let scale = self.data.iter().fold(T::zero(), |m, v| m.max(v.abs()));
        let mut perm = vec![0; n];
        let mut min_pivot = T::max_value().unwrap_or_else(|| T::lit(f64::MAX));
        #[allow(clippy::needless_range_loop)]
        for k in 0..n {
            let last_row = (k + self.kl).min(n - 1);
            let last_col = (k + self.ku + self.kl).min(n - 1);
            let mut p = k;
            let mut best = self.get(k, k).abs();
            for i in k + 1..=last_row {
                let v = self.get(i, k).abs();
                if v > best {
                    best = v;
                    p = i;
                }
            }
            perm[k] = p;
            if p != k {
                for j in k..=last_col {
                    let (a, b) = (self.offset(k, j), self.offset(p, j));
                    self.data.swap(a, b);
                }
            }
            let pivot = self.get(k, k);
            min_pivot = min_pivot.min(pivot.abs());
            if pivot == T::zero() {
                continue;
            }
            for i in k + 1..=last_row {
                let l = self.get(i, k) / pivot;
                *self.slot(i, k) = l;
                if l == T::zero() {
                    continue;
                }
                for j in k + 1..=last_col {
                    let u = self.get(k, j);
                    *self.slot(i, j) -= l * u;
                }
            }
        }
        let ratio = if scale > T::zero() { min_pivot / scale } else { T::zero() };
        if !(ratio >= T::lit(1e-12)) {
            return Err(Error::Solvability {
                pivot_ratio: ratio.as_f64(),
            });
        }
        Ok(BandedLu { lu: self, perm })
    }
}

/// Factorization produced by [`BandedMatrix::factor`].
#[derive(Debug, Clone)]
pub struct BandedLu<T: Real> {
    lu: BandedMatrix<T>,
    perm: Vec<usize>,
}

impl<T: Real> BandedLu<T> {
    pub fn dim(&self) -> usize {
        self.lu.n
    }

    pub fn solve(&self, b: &DVector<T>) -> Result<DVector<T>> {
        let a = &self.lu;
        let n = a.n;
        check_len(n, b.len())?;
        let mut x = b.clone();
        for k in 0..n {
            x.swap_rows(k, self.perm[k]);
            let xk = x[k];
            if xk == T::zero() {
                continue;
            }
            for i in k + 1..=(k + a.kl).min(n.saturating_sub(1)) {
                x[i] -= a.get(i, k) * xk;
            }
        }
        for i in (0..n).rev() {
            let hi = (i + a.ku + a.kl + 1).min(n);
            let mut s = x[i];
            for j in i + 1..hi {
                s -= a.get(i, j) * x[j];
            }
            x[i] = s / a.get(i, i);
        }
        Ok(x)
    }

    /// Solves for every column of `b`.
    pub fn solve_matrix(&self, b: &DMatrix<T>) -> Result<DMatrix<T>> {
        check_len(self.dim(), b.nrows())?;
        let mut out = DMatrix::zeros(b.nrows(), b.ncols());
        for (j, col) in b.column_iter().enumerate() {
            out.set_column(j, &self.solve(&col.into_owned())?);
        }
        Ok(out)
    }
}
