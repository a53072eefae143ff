//! Truncated Fock-space operators and tensor-product embedding.
//!
//! Composite spaces use a fixed Kronecker order: slot 0 is the leftmost,
//! slowest-varying factor. With dims `[n0, n1, n2]` the basis state
//! `|k0, k1, k2>` sits at index `(k0 * n1 + k1) * n2 + k2`.

use std::ops::{Add, Mul, Sub};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type C64 = Complex64;

pub(crate) const ZERO: C64 = C64::new(0.0, 0.0);
pub(crate) const ONE: C64 = C64::new(1.0, 0.0);

/// Ordered truncation dimensions of the modes of a composite system.
///
/// Mode 0 is the cavity, mode 1 the vibration and modes 2.. are two-level
/// sensors.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModeSpace {
    dims: Vec<usize>,
}

impl ModeSpace {
    pub fn new(dims: Vec<usize>) -> Result<Self> {
        if dims.is_empty() {
            return Err(Error::InvalidDimension { dim: 0 });
        }
        if let Some(&dim) = dims.iter().find(|&&d| d < 2) {
            return Err(Error::InvalidDimension { dim });
        }
        Ok(ModeSpace { dims })
    }

    /// Cavity and vibration followed by `sensors` two-level slots.
    pub fn with_sensors(n_cavity: usize, n_vibration: usize, sensors: usize) -> Result<Self> {
        let mut dims = vec![n_cavity, n_vibration];
        dims.extend(std::iter::repeat_n(2, sensors));
        ModeSpace::new(dims)
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn modes(&self) -> usize {
        self.dims.len()
    }

    /// Number of sensor slots (modes beyond cavity and vibration).
    pub fn sensor_count(&self) -> usize {
        self.dims.len().saturating_sub(2)
    }

    /// Total Hilbert-space dimension D.
    pub fn total_dim(&self) -> usize {
        self.dims.iter().product()
    }

    /// Side length D² of the Liouvillian.
    pub fn liouville_dim(&self) -> usize {
        let d = self.total_dim();
        d * d
    }
}

/// Square sparse complex matrix in compressed-row form.
///
/// Column indices are sorted within each row and explicit zeros are dropped,
/// so two matrices with the same entries compare equal.
#[derive(Clone, Debug, PartialEq)]
pub struct OperatorMatrix {
    dim: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<C64>,
}

impl OperatorMatrix {
    /// Builds a matrix from `(row, col, value)` triplets, summing duplicates.
    pub fn from_triplets(dim: usize, triplets: impl IntoIterator<Item = (usize, usize, C64)>) -> Self {
        let mut entries: Vec<(usize, usize, C64)> = triplets.into_iter().collect();
        entries.sort_unstable_by_key(|&(r, c, _)| (r, c));
        let mut row_ptr = vec![0usize; dim + 1];
        let mut col_idx = Vec::with_capacity(entries.len());
        let mut values: Vec<C64> = Vec::with_capacity(entries.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in entries {
            assert!(r < dim && c < dim, "triplet ({r}, {c}) outside a {dim}x{dim} matrix");
            if last == Some((r, c)) {
                *values.last_mut().unwrap() += v;
                continue;
            }
            last = Some((r, c));
            row_ptr[r + 1] += 1;
            col_idx.push(c);
            values.push(v);
        }
        for r in 0..dim {
            row_ptr[r + 1] += row_ptr[r];
        }
        OperatorMatrix {
            dim,
            row_ptr,
            col_idx,
            values,
        }
        .pruned()
    }

    fn pruned(self) -> Self {
        if self.values.iter().all(|v| *v != ZERO) {
            return self;
        }
        let dim = self.dim;
        let triplets: Vec<_> = self.triplets().filter(|t| t.2 != ZERO).collect();
        let mut row_ptr = vec![0usize; dim + 1];
        for &(r, _, _) in &triplets {
            row_ptr[r + 1] += 1;
        }
        for r in 0..dim {
            row_ptr[r + 1] += row_ptr[r];
        }
        OperatorMatrix {
            dim,
            row_ptr,
            col_idx: triplets.iter().map(|t| t.1).collect(),
            values: triplets.iter().map(|t| t.2).collect(),
        }
    }

    pub fn zeros(dim: usize) -> Self {
        OperatorMatrix {
            dim,
            row_ptr: vec![0; dim + 1],
            col_idx: Vec::new(),
            values: Vec::new(),
        }
    }

    pub fn identity(dim: usize) -> Self {
        OperatorMatrix {
            dim,
            row_ptr: (0..=dim).collect(),
            col_idx: (0..dim).collect(),
            values: vec![ONE; dim],
        }
    }

    pub fn diagonal(values: impl IntoIterator<Item = C64>) -> Self {
        let values: Vec<C64> = values.into_iter().collect();
        OperatorMatrix::from_triplets(values.len(), values.iter().enumerate().map(|(i, &v)| (i, i, v)))
    }

    pub fn from_dense(dense: &DenseMatrix) -> Self {
        let n = dense.dim();
        OperatorMatrix::from_triplets(
            n,
            (0..n).flat_map(|i| (0..n).map(move |j| (i, j))).map(|(i, j)| (i, j, dense.get(i, j))),
        )
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// Iterates over stored entries in row-major order.
    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, C64)> + '_ {
        (0..self.dim).flat_map(move |r| {
            (self.row_ptr[r]..self.row_ptr[r + 1]).map(move |k| (r, self.col_idx[k], self.values[k]))
        })
    }

    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, C64)> + '_ {
        (self.row_ptr[r]..self.row_ptr[r + 1]).map(move |k| (self.col_idx[k], self.values[k]))
    }

    pub fn get(&self, r: usize, c: usize) -> C64 {
        let cols = &self.col_idx[self.row_ptr[r]..self.row_ptr[r + 1]];
        match cols.binary_search(&c) {
            Ok(k) => self.values[self.row_ptr[r] + k],
            Err(_) => ZERO,
        }
    }

    pub fn adjoint(&self) -> Self {
        OperatorMatrix::from_triplets(self.dim, self.triplets().map(|(r, c, v)| (c, r, v.conj())))
    }

    pub fn transpose(&self) -> Self {
        OperatorMatrix::from_triplets(self.dim, self.triplets().map(|(r, c, v)| (c, r, v)))
    }

    pub fn conj(&self) -> Self {
        let mut out = self.clone();
        out.values.iter_mut().for_each(|v| *v = v.conj());
        out
    }

    pub fn scale(&self, s: C64) -> Self {
        let mut out = self.clone();
        out.values.iter_mut().for_each(|v| *v *= s);
        out.pruned()
    }

    pub fn scale_real(&self, s: f64) -> Self {
        self.scale(C64::new(s, 0.0))
    }

    /// `self + s * other`.
    pub fn add_scaled(&self, other: &OperatorMatrix, s: C64) -> Self {
        assert_eq!(self.dim, other.dim, "operator dimensions differ");
        OperatorMatrix::from_triplets(
            self.dim,
            self.triplets().chain(other.triplets().map(|(r, c, v)| (r, c, v * s))),
        )
    }

    pub fn matmul(&self, other: &OperatorMatrix) -> Self {
        assert_eq!(self.dim, other.dim, "operator dimensions differ");
        let mut triplets = Vec::new();
        for r in 0..self.dim {
            for (k, a) in self.row(r) {
                for (c, b) in other.row(k) {
                    triplets.push((r, c, a * b));
                }
            }
        }
        OperatorMatrix::from_triplets(self.dim, triplets)
    }

    /// Kronecker product `self ⊗ other` (self is the slow index).
    pub fn kron(&self, other: &OperatorMatrix) -> Self {
        let n = other.dim;
        let mut triplets = Vec::with_capacity(self.nnz() * other.nnz());
        for (r1, c1, v1) in self.triplets() {
            for (r2, c2, v2) in other.triplets() {
                triplets.push((r1 * n + r2, c1 * n + c2, v1 * v2));
            }
        }
        OperatorMatrix::from_triplets(self.dim * n, triplets)
    }

    pub fn commutator(&self, other: &OperatorMatrix) -> Self {
        self.matmul(other).add_scaled(&other.matmul(self), -ONE)
    }

    /// max |M - M†| over all entries.
    pub fn hermiticity_defect(&self) -> f64 {
        self.triplets()
            .map(|(r, c, v)| (v - self.get(c, r).conj()).norm())
            .fold(0.0, f64::max)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    /// Induced 1-norm (maximum absolute column sum).
    pub fn norm_one(&self) -> f64 {
        let mut cols = vec![0.0; self.dim];
        for (_, c, v) in self.triplets() {
            cols[c] += v.norm();
        }
        cols.into_iter().fold(0.0, f64::max)
    }

    pub fn to_dense(&self) -> DenseMatrix {
        let mut out = DenseMatrix::zeros(self.dim);
        for (r, c, v) in self.triplets() {
            *out.get_mut(r, c) += v;
        }
        out
    }

    /// y = M x for a plain vector.
    pub fn apply_vec(&self, x: &[C64], y: &mut [C64]) {
        debug_assert_eq!(x.len(), self.dim);
        debug_assert_eq!(y.len(), self.dim);
        for (r, out) in y.iter_mut().enumerate() {
            let mut acc = ZERO;
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                acc += self.values[k] * x[self.col_idx[k]];
            }
            *out = acc;
        }
    }

    /// M X.
    pub fn mul_dense(&self, x: &DenseMatrix) -> DenseMatrix {
        assert_eq!(self.dim, x.dim(), "operator dimensions differ");
        let n = self.dim;
        let mut out = DenseMatrix::zeros(n);
        for j in 0..n {
            let col = &x.data[j * n..(j + 1) * n];
            self.apply_vec(col, &mut out.data[j * n..(j + 1) * n]);
        }
        out
    }

    /// X M.
    pub fn dense_mul(&self, x: &DenseMatrix) -> DenseMatrix {
        assert_eq!(self.dim, x.dim(), "operator dimensions differ");
        let n = self.dim;
        let mut out = DenseMatrix::zeros(n);
        for (k, c, v) in self.triplets() {
            // out[:, c] += X[:, k] * M[k, c]
            for i in 0..n {
                out.data[i + n * c] += x.data[i + n * k] * v;
            }
        }
        out
    }

    /// Tr{M X} without forming the product.
    pub fn trace_with(&self, x: &DenseMatrix) -> C64 {
        assert_eq!(self.dim, x.dim(), "operator dimensions differ");
        self.trace_with_vec(x.as_slice())
    }

    /// Tr{M X} where `x` is the column-stacked vector of X.
    pub fn trace_with_vec(&self, x: &[C64]) -> C64 {
        let n = self.dim;
        let mut acc = ZERO;
        for (r, c, v) in self.triplets() {
            // M[r, c] X[c, r]
            acc += v * x[c + n * r];
        }
        acc
    }
}

impl Add for &OperatorMatrix {
    type Output = OperatorMatrix;
    fn add(self, rhs: &OperatorMatrix) -> OperatorMatrix {
        self.add_scaled(rhs, ONE)
    }
}

impl Sub for &OperatorMatrix {
    type Output = OperatorMatrix;
    fn sub(self, rhs: &OperatorMatrix) -> OperatorMatrix {
        self.add_scaled(rhs, -ONE)
    }
}

impl Mul for &OperatorMatrix {
    type Output = OperatorMatrix;
    fn mul(self, rhs: &OperatorMatrix) -> OperatorMatrix {
        self.matmul(rhs)
    }
}

impl Mul<&OperatorMatrix> for C64 {
    type Output = OperatorMatrix;
    fn mul(self, rhs: &OperatorMatrix) -> OperatorMatrix {
        rhs.scale(self)
    }
}

impl Mul<&OperatorMatrix> for f64 {
    type Output = OperatorMatrix;
    fn mul(self, rhs: &OperatorMatrix) -> OperatorMatrix {
        rhs.scale_real(self)
    }
}

/// Dense square complex matrix stored column-major, so the storage is the
/// column-stacked vectorization vec(X).
#[derive(Clone, Debug, PartialEq)]
pub struct DenseMatrix {
    dim: usize,
    data: Vec<C64>,
}

impl DenseMatrix {
    pub fn zeros(dim: usize) -> Self {
        DenseMatrix {
            dim,
            data: vec![ZERO; dim * dim],
        }
    }

    pub fn identity(dim: usize) -> Self {
        let mut out = DenseMatrix::zeros(dim);
        for i in 0..dim {
            out.data[i + dim * i] = ONE;
        }
        out
    }

    /// Wraps a column-stacked vector of length dim².
    pub fn from_column_stacked(dim: usize, data: Vec<C64>) -> Result<Self> {
        if data.len() != dim * dim {
            return Err(Error::DimensionMismatch {
                expected: dim * dim,
                found: data.len(),
            });
        }
        Ok(DenseMatrix { dim, data })
    }

    pub fn from_fn(dim: usize, mut f: impl FnMut(usize, usize) -> C64) -> Self {
        let mut out = DenseMatrix::zeros(dim);
        for j in 0..dim {
            for i in 0..dim {
                out.data[i + dim * j] = f(i, j);
            }
        }
        out
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, i: usize, j: usize) -> C64 {
        self.data[i + self.dim * j]
    }

    pub fn get_mut(&mut self, i: usize, j: usize) -> &mut C64 {
        &mut self.data[i + self.dim * j]
    }

    pub fn as_slice(&self) -> &[C64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [C64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<C64> {
        self.data
    }

    pub fn trace(&self) -> C64 {
        (0..self.dim).map(|i| self.get(i, i)).sum()
    }

    pub fn adjoint(&self) -> Self {
        DenseMatrix::from_fn(self.dim, |i, j| self.get(j, i).conj())
    }

    pub fn scale(&self, s: C64) -> Self {
        DenseMatrix {
            dim: self.dim,
            data: self.data.iter().map(|v| v * s).collect(),
        }
    }

    /// `self + s * other`.
    pub fn add_scaled(&self, other: &DenseMatrix, s: C64) -> Self {
        assert_eq!(self.dim, other.dim, "matrix dimensions differ");
        DenseMatrix {
            dim: self.dim,
            data: self.data.iter().zip(&other.data).map(|(a, b)| a + b * s).collect(),
        }
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt()
    }

    /// max |X - X†|.
    pub fn hermiticity_defect(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for j in 0..self.dim {
            for i in 0..=j {
                worst = worst.max((self.get(i, j) - self.get(j, i).conj()).norm());
            }
        }
        worst
    }

    pub fn max_abs_diff(&self, other: &DenseMatrix) -> f64 {
        assert_eq!(self.dim, other.dim, "matrix dimensions differ");
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }

    /// Replaces X by (X + X†)/2.
    pub fn hermitize(&mut self) {
        let n = self.dim;
        for j in 0..n {
            for i in 0..=j {
                let avg = (self.get(i, j) + self.get(j, i).conj()) * 0.5;
                *self.get_mut(i, j) = avg;
                *self.get_mut(j, i) = avg.conj();
            }
        }
    }

    /// Eigenvalues of the Hermitian part, ascending.
    pub fn hermitian_eigenvalues(&self) -> Vec<f64> {
        let n = self.dim;
        let mat = faer::Mat::<C64>::from_fn(n, n, |i, j| (self.get(i, j) + self.get(j, i).conj()) * 0.5);
        let mut eig = mat
            .self_adjoint_eigenvalues(faer::Side::Lower)
            .expect("Hermitian eigenvalue iteration failed");
        eig.sort_by(f64::total_cmp);
        eig
    }
}

/// Annihilation operator on a `dim`-level truncation: a|n> = √n |n-1>.
pub fn ladder_operator(dim: usize) -> Result<OperatorMatrix> {
    if dim < 2 {
        return Err(Error::InvalidDimension { dim });
    }
    Ok(OperatorMatrix::from_triplets(
        dim,
        (1..dim).map(|n| (n - 1, n, C64::new((n as f64).sqrt(), 0.0))),
    ))
}

/// Embeds a single-mode operator into the composite space, acting as the
/// identity on every other mode.
pub fn embed_operator(op: &OperatorMatrix, slot: usize, space: &ModeSpace) -> Result<OperatorMatrix> {
    let dims = space.dims();
    if slot >= dims.len() {
        return Err(Error::SlotOutOfRange {
            slot,
            modes: dims.len(),
        });
    }
    if op.dim() != dims[slot] {
        return Err(Error::DimensionMismatch {
            expected: dims[slot],
            found: op.dim(),
        });
    }
    let left: usize = dims[..slot].iter().product();
    let right: usize = dims[slot + 1..].iter().product();
    let n = dims[slot];
    let mut triplets = Vec::with_capacity(left * right * op.nnz());
    for l in 0..left {
        for (i, j, v) in op.triplets() {
            for r in 0..right {
                triplets.push(((l * n + i) * right + r, (l * n + j) * right + r, v));
            }
        }
    }
    Ok(OperatorMatrix::from_triplets(space.total_dim(), triplets))
}
