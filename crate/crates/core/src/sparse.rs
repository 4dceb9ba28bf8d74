//! Compressed-sparse-row operators on the many-spin Hilbert space.
//!
//! Spin `0` is the most significant bit of a basis index and bit value `0`
//! is spin up, so `|up, down>` on two spins is index `0b01 = 1`.

use nalgebra::DMatrix;
use num_complex::Complex;
use num_traits::Zero;
use thiserror::Error;

use crate::scalar::{Cplx, Real};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SparseError {
    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },
    #[error("entry ({row}, {col}) is outside a {dim}x{dim} operator")]
    OutOfBounds { row: usize, col: usize, dim: usize },
}

/// Single-spin 2x2 matrix in the `{|up>, |down>}` basis, indexed `[row][col]`.
pub type Local2<T> = [[Cplx<T>; 2]; 2];

/// Pauli and ladder matrices.
pub mod pauli {
    use super::Local2;
    use crate::scalar::{c, Real};

    pub fn identity<T: Real>() -> Local2<T> {
        [[c(1.0, 0.0), c(0.0, 0.0)], [c(0.0, 0.0), c(1.0, 0.0)]]
    }

    pub fn x<T: Real>() -> Local2<T> {
        [[c(0.0, 0.0), c(1.0, 0.0)], [c(1.0, 0.0), c(0.0, 0.0)]]
    }

    pub fn y<T: Real>() -> Local2<T> {
        [[c(0.0, 0.0), c(0.0, -1.0)], [c(0.0, 1.0), c(0.0, 0.0)]]
    }

    pub fn z<T: Real>() -> Local2<T> {
        [[c(1.0, 0.0), c(0.0, 0.0)], [c(0.0, 0.0), c(-1.0, 0.0)]]
    }

    /// Raising operator `(x + i y) / 2`, maps `|down>` to `|up>`.
    pub fn plus<T: Real>() -> Local2<T> {
        [[c(0.0, 0.0), c(1.0, 0.0)], [c(0.0, 0.0), c(0.0, 0.0)]]
    }

    /// Lowering operator `(x - i y) / 2`, maps `|up>` to `|down>`.
    pub fn minus<T: Real>() -> Local2<T> {
        [[c(0.0, 0.0), c(0.0, 0.0)], [c(1.0, 0.0), c(0.0, 0.0)]]
    }
}

/// Sparse complex square matrix in CSR layout.
///
/// Column indices inside a row are sorted and unique, and stored values are
/// never exactly zero.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrOperator<T> {
    dim: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<Cplx<T>>,
    hermitian: bool,
}

impl<T: Real> CsrOperator<T> {
    /// Assembles an operator from `(row, col, value)` triplets, summing duplicates.
    pub fn from_triplets<I>(dim: usize, triplets: I, hermitian: bool) -> Result<Self, SparseError>
    where
        I: IntoIterator<Item = (usize, usize, Cplx<T>)>,
    {
        let mut entries: Vec<(usize, usize, Cplx<T>)> = Vec::new();
        for (r, c, v) in triplets {
            if r >= dim || c >= dim {
                return Err(SparseError::OutOfBounds {
                    row: r,
                    col: c,
                    dim,
                });
            }
            entries.push((r, c, v));
        }
        entries.sort_unstable_by_key(|&(r, c, _)| (r, c));

        let mut row_ptr = vec![0usize; dim + 1];
        let mut cols = Vec::with_capacity(entries.len());
        let mut vals: Vec<Cplx<T>> = Vec::with_capacity(entries.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in entries {
            if last == Some((r, c)) {
                let tail = vals.last_mut().expect("duplicate follows an entry");
                *tail = *tail + v;
            } else {
                cols.push(c);
                vals.push(v);
                row_ptr[r + 1] += 1;
                last = Some((r, c));
            }
        }
        for r in 0..dim {
            row_ptr[r + 1] += row_ptr[r];
        }
        Ok(Self {
            dim,
            row_ptr,
            cols,
            vals,
            hermitian,
        }
        .pruned())
    }

    pub fn zeros(dim: usize) -> Self {
        Self {
            dim,
            row_ptr: vec![0; dim + 1],
            cols: Vec::new(),
            vals: Vec::new(),
            hermitian: true,
        }
    }

    pub fn identity(dim: usize) -> Self {
        Self::diagonal(&vec![Complex::new(T::one(), T::zero()); dim])
    }

    pub fn diagonal(diag: &[Cplx<T>]) -> Self {
        let hermitian = diag.iter().all(|d| d.im.is_zero());
        Self::from_triplets(
            diag.len(),
            diag.iter().enumerate().map(|(i, &d)| (i, i, d)),
            hermitian,
        )
        .expect("diagonal entries are in bounds")
    }

    /// Tensor product of single-spin matrices placed on `sites`, identity elsewhere.
    pub fn embed(n_spins: usize, factors: &[(usize, Local2<T>)]) -> Self {
        let dim = 1usize << n_spins;
        let mut triplets = Vec::new();
        for col in 0..dim {
            // Expand the column through each factor; every factor has at most
            // two nonzeros per column.
            let mut images: Vec<(usize, Cplx<T>)> = vec![(col, Complex::new(T::one(), T::zero()))];
            for &(site, m) in factors {
                assert!(
                    site < n_spins,
                    "site {site} out of range for {n_spins} spins"
                );
                let shift = n_spins - 1 - site;
                let mut next = Vec::with_capacity(images.len() * 2);
                for (idx, amp) in images {
                    let bit = (idx >> shift) & 1;
                    for (out_bit, row) in m.iter().enumerate() {
                        let coeff = row[bit];
                        if !coeff.is_zero() {
                            let out = (idx & !(1 << shift)) | (out_bit << shift);
                            next.push((out, amp * coeff));
                        }
                    }
                }
                images = next;
            }
            triplets.extend(images.into_iter().map(|(row, v)| (row, col, v)));
        }
        let hermitian = factors.iter().all(|(_, m)| is_hermitian2(m));
        Self::from_triplets(dim, triplets, hermitian).expect("embedding stays in bounds")
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    /// Whether the operator was constructed as Hermitian.
    pub fn hermitian_flag(&self) -> bool {
        self.hermitian
    }

    pub fn with_hermitian_flag(mut self, hermitian: bool) -> Self {
        self.hermitian = hermitian;
        self
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, Cplx<T>)> + '_ {
        (0..self.dim).flat_map(move |r| {
            (self.row_ptr[r]..self.row_ptr[r + 1]).map(move |k| (r, self.cols[k], self.vals[k]))
        })
    }

    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, Cplx<T>)> + '_ {
        (self.row_ptr[r]..self.row_ptr[r + 1]).map(move |k| (self.cols[k], self.vals[k]))
    }

    pub fn get(&self, r: usize, c: usize) -> Cplx<T> {
        let slice = &self.cols[self.row_ptr[r]..self.row_ptr[r + 1]];
        match slice.binary_search(&c) {
            Ok(k) => self.vals[self.row_ptr[r] + k],
            Err(_) => Complex::zero(),
        }
    }

    fn pruned(mut self) -> Self {
        if self.vals.iter().all(|v| !v.is_zero()) {
            return self;
        }
        let mut row_ptr = vec![0usize; self.dim + 1];
        let mut cols = Vec::with_capacity(self.cols.len());
        let mut vals = Vec::with_capacity(self.vals.len());
        for r in 0..self.dim {
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                if !self.vals[k].is_zero() {
                    cols.push(self.cols[k]);
                    vals.push(self.vals[k]);
                }
            }
            row_ptr[r + 1] = cols.len();
        }
        self.row_ptr = row_ptr;
        self.cols = cols;
        self.vals = vals;
        self
    }

    /// `y = A x`.
    #[inline]
    pub fn apply(&self, x: &[Cplx<T>], y: &mut [Cplx<T>]) {
        debug_assert_eq!(x.len(), self.dim);
        debug_assert_eq!(y.len(), self.dim);
        for (r, out) in y.iter_mut().enumerate() {
            let mut acc = Complex::zero();
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                acc = acc + self.vals[k] * x[self.cols[k]];
            }
            *out = acc;
        }
    }

    /// `y += alpha A x`.
    #[inline]
    pub fn apply_add(&self, alpha: Cplx<T>, x: &[Cplx<T>], y: &mut [Cplx<T>]) {
        for (r, out) in y.iter_mut().enumerate() {
            let mut acc = Complex::zero();
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                acc = acc + self.vals[k] * x[self.cols[k]];
            }
            *out = *out + alpha * acc;
        }
    }

    /// `<x|A|x>` without normalization.
    pub fn expectation(&self, x: &[Cplx<T>]) -> Cplx<T> {
        let mut acc = Complex::zero();
        for (r, xr) in x.iter().enumerate() {
            let mut row = Complex::zero();
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                row = row + self.vals[k] * x[self.cols[k]];
            }
            acc = acc + xr.conj() * row;
        }
        acc
    }

    /// `|A x|^2`.
    pub fn image_norm_sqr(&self, x: &[Cplx<T>]) -> T {
        let mut acc = T::zero();
        for r in 0..self.dim {
            let mut row = Complex::zero();
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                row = row + self.vals[k] * x[self.cols[k]];
            }
            acc = acc + row.norm_sqr();
        }
        acc
    }

    pub fn scale(&self, alpha: Cplx<T>) -> Self {
        let hermitian = self.hermitian && alpha.im.is_zero();
        Self {
            vals: self.vals.iter().map(|&v| v * alpha).collect(),
            hermitian,
            ..self.clone()
        }
        .pruned()
    }

    pub fn scale_real(&self, alpha: T) -> Self {
        self.scale(Complex::new(alpha, T::zero()))
    }

    pub fn adjoint(&self) -> Self {
        Self::from_triplets(
            self.dim,
            self.iter().map(|(r, c, v)| (c, r, v.conj())),
            self.hermitian,
        )
        .expect("adjoint stays in bounds")
    }

    pub fn transpose(&self) -> Self {
        Self::from_triplets(self.dim, self.iter().map(|(r, c, v)| (c, r, v)), false)
            .expect("transpose stays in bounds")
    }

    /// `alpha A + beta B`.
    pub fn linear_combination(
        &self,
        alpha: Cplx<T>,
        other: &Self,
        beta: Cplx<T>,
    ) -> Result<Self, SparseError> {
        self.check_dim(other)?;
        let hermitian =
            self.hermitian && other.hermitian && alpha.im.is_zero() && beta.im.is_zero();
        Self::from_triplets(
            self.dim,
            self.iter()
                .map(|(r, c, v)| (r, c, v * alpha))
                .chain(other.iter().map(|(r, c, v)| (r, c, v * beta))),
            hermitian,
        )
    }

    pub fn add(&self, other: &Self) -> Result<Self, SparseError> {
        let one = Complex::new(T::one(), T::zero());
        self.linear_combination(one, other, one)
    }

    pub fn sub(&self, other: &Self) -> Result<Self, SparseError> {
        let one = Complex::new(T::one(), T::zero());
        self.linear_combination(one, other, -one)
    }

    /// Sparse product `A B`.
    pub fn matmul(&self, other: &Self) -> Result<Self, SparseError> {
        self.check_dim(other)?;
        let mut triplets = Vec::new();
        let mut accum: Vec<Cplx<T>> = vec![Complex::zero(); self.dim];
        let mut touched: Vec<usize> = Vec::new();
        let mut seen = vec![false; self.dim];
        for r in 0..self.dim {
            for (k, a) in self.row(r) {
                for (c, b) in other.row(k) {
                    if !seen[c] {
                        seen[c] = true;
                        touched.push(c);
                    }
                    accum[c] = accum[c] + a * b;
                }
            }
            for &c in &touched {
                triplets.push((r, c, accum[c]));
                accum[c] = Complex::zero();
                seen[c] = false;
            }
            touched.clear();
        }
        Self::from_triplets(self.dim, triplets, false)
    }

    /// `[A, B] = A B - B A`.
    pub fn commutator(&self, other: &Self) -> Result<Self, SparseError> {
        self.matmul(other)?.sub(&other.matmul(self)?)
    }

    /// Splits into its diagonal and the remaining off-diagonal part.
    pub fn split_diagonal(&self) -> (Vec<Cplx<T>>, Self) {
        let diag: Vec<_> = (0..self.dim).map(|i| self.get(i, i)).collect();
        let off = Self::from_triplets(
            self.dim,
            self.iter().filter(|&(r, c, _)| r != c),
            self.hermitian,
        )
        .expect("subset of valid entries");
        (diag, off)
    }

    /// Largest absolute row sum; bounds the spectral norm of a Hermitian operator.
    pub fn max_row_abs_sum(&self) -> T {
        (0..self.dim)
            .map(|r| {
                self.row(r)
                    .map(|(_, v)| v.norm())
                    .fold(T::zero(), |a, b| a + b)
            })
            .fold(T::zero(), T::max)
    }

    /// Largest elementwise deviation `|A_ij - conj(A_ji)|`.
    pub fn hermiticity_defect(&self) -> T {
        let adj = self.adjoint();
        self.max_abs_diff(&adj).unwrap_or_else(|_| T::infinity())
    }

    pub fn is_hermitian(&self, tol: T) -> bool {
        self.hermiticity_defect() <= tol
    }

    pub fn max_abs_diff(&self, other: &Self) -> Result<T, SparseError> {
        let diff = self.sub(other)?;
        Ok(diff.vals.iter().map(|v| v.norm()).fold(T::zero(), T::max))
    }

    pub fn trace(&self) -> Cplx<T> {
        (0..self.dim).fold(Complex::zero(), |acc, i| acc + self.get(i, i))
    }

    pub fn to_dense(&self) -> DMatrix<Cplx<T>> {
        let mut m = DMatrix::from_element(self.dim, self.dim, Complex::zero());
        for (r, c, v) in self.iter() {
            m[(r, c)] = v;
        }
        m
    }

    pub fn from_dense(m: &DMatrix<Cplx<T>>, hermitian: bool) -> Result<Self, SparseError> {
        if m.nrows() != m.ncols() {
            return Err(SparseError::DimensionMismatch {
                left: m.nrows(),
                right: m.ncols(),
            });
        }
        let dim = m.nrows();
        Self::from_triplets(
            dim,
            (0..dim).flat_map(|r| (0..dim).map(move |c| (r, c, m[(r, c)]))),
            hermitian,
        )
    }

    /// Converts to another scalar precision.
    pub fn cast<U: Real>(&self) -> CsrOperator<U> {
        CsrOperator {
            dim: self.dim,
            row_ptr: self.row_ptr.clone(),
            cols: self.cols.clone(),
            vals: self
                .vals
                .iter()
                .map(|v| Complex::new(U::lit(v.re.as_f64()), U::lit(v.im.as_f64())))
                .collect(),
            hermitian: self.hermitian,
        }
    }

    fn check_dim(&self, other: &Self) -> Result<(), SparseError> {
        if self.dim != other.dim {
            return Err(SparseError::DimensionMismatch {
                left: self.dim,
                right: other.dim,
            });
        }
        Ok(())
    }
}

fn is_hermitian2<T: Real>(m: &Local2<T>) -> bool {
    m[0][0].im.is_zero() && m[1][1].im.is_zero() && m[0][1] == m[1][0].conj()
}
