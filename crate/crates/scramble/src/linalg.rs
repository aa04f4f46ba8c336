//! Dense complex matrices, Hermitian spectral factorizations and the
//! bipartite tensor-product helpers built on top of them.
//!
//! Storage is delegated to `faer`. Constructors and exports use row-major
//! order; the backing storage is column-major and never exposed as a slice.

use faer::{Accum, Mat, MatRef, Par, Side};

pub use faer::c64;

use crate::error::{Error, Result};

/// Largest |exponent| accepted when forming `exp(-i E z)`.
const MAX_EXPONENT: f64 = 700.0;

pub(crate) fn gemm(lhs: MatRef<'_, c64>, rhs: MatRef<'_, c64>) -> Mat<c64> {
    let mut out = Mat::<c64>::zeros(lhs.nrows(), rhs.ncols());
    faer::linalg::matmul::matmul(out.as_mut(), Accum::Replace, lhs, rhs, c64::new(1.0, 0.0), Par::Seq);
    out
}

/// `lhs^† rhs` without materializing the adjoint.
pub(crate) fn gemm_adj_lhs(lhs: MatRef<'_, c64>, rhs: MatRef<'_, c64>) -> Mat<c64> {
    let mut out = Mat::<c64>::zeros(lhs.ncols(), rhs.ncols());
    faer::linalg::matmul::matmul(
        out.as_mut(),
        Accum::Replace,
        lhs.adjoint(),
        rhs,
        c64::new(1.0, 0.0),
        Par::Seq,
    );
    out
}

/// `lhs rhs^†` without materializing the adjoint.
pub(crate) fn gemm_adj_rhs(lhs: MatRef<'_, c64>, rhs: MatRef<'_, c64>) -> Mat<c64> {
    let mut out = Mat::<c64>::zeros(lhs.nrows(), rhs.nrows());
    faer::linalg::matmul::matmul(
        out.as_mut(),
        Accum::Replace,
        lhs,
        rhs.adjoint(),
        c64::new(1.0, 0.0),
        Par::Seq,
    );
    out
}

/// `Tr(a b)` for conformable matrices, computed without forming the product.
pub(crate) fn trace_of_product(a: MatRef<'_, c64>, b: MatRef<'_, c64>) -> c64 {
    let mut acc = c64::new(0.0, 0.0);
    for j in 0..a.ncols() {
        for i in 0..a.nrows() {
            acc += a[(i, j)] * b[(j, i)];
        }
    }
    acc
}

#[derive(Clone, Debug, PartialEq)]
pub struct ComplexMatrix {
    inner: Mat<c64>,
}

impl ComplexMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { inner: Mat::zeros(rows, cols) }
    }

    pub fn identity(n: usize) -> Self {
        Self { inner: Mat::identity(n, n) }
    }

    pub fn from_fn(rows: usize, cols: usize, f: impl FnMut(usize, usize) -> c64) -> Self {
        Self { inner: Mat::from_fn(rows, cols, f) }
    }

    /// Builds a matrix from row-major entries.
    pub fn from_row_major(rows: usize, cols: usize, entries: &[c64]) -> Result<Self> {
        if rows.checked_mul(cols) != Some(entries.len()) {
            return Err(Error::DimensionMismatch(format!(
                "{} entries for a {rows}x{cols} matrix",
                entries.len()
            )));
        }
        Ok(Self::from_fn(rows, cols, |i, j| entries[i * cols + j]))
    }

    pub fn from_real_row_major(rows: usize, cols: usize, entries: &[f64]) -> Result<Self> {
        let cplx: Vec<c64> = entries.iter().map(|&x| c64::new(x, 0.0)).collect();
        Self::from_row_major(rows, cols, &cplx)
    }

    pub fn from_diagonal(diag: &[c64]) -> Self {
        let n = diag.len();
        Self::from_fn(n, n, |i, j| if i == j { diag[i] } else { c64::new(0.0, 0.0) })
    }

    pub fn from_real_diagonal(diag: &[f64]) -> Self {
        let n = diag.len();
        Self::from_fn(n, n, |i, j| if i == j { c64::new(diag[i], 0.0) } else { c64::new(0.0, 0.0) })
    }

    pub fn from_mat(inner: Mat<c64>) -> Self {
        Self { inner }
    }

    pub fn as_mat(&self) -> &Mat<c64> {
        &self.inner
    }

    pub fn as_ref(&self) -> MatRef<'_, c64> {
        self.inner.as_ref()
    }

    pub fn into_mat(self) -> Mat<c64> {
        self.inner
    }

    pub fn nrows(&self) -> usize {
        self.inner.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.inner.ncols()
    }

    pub fn is_square(&self) -> bool {
        self.nrows() == self.ncols()
    }

    pub fn get(&self, i: usize, j: usize) -> c64 {
        self.inner[(i, j)]
    }

    pub fn set(&mut self, i: usize, j: usize, value: c64) {
        self.inner[(i, j)] = value;
    }

    pub fn to_row_major(&self) -> Vec<c64> {
        let mut out = Vec::with_capacity(self.nrows() * self.ncols());
        for i in 0..self.nrows() {
            for j in 0..self.ncols() {
                out.push(self.inner[(i, j)]);
            }
        }
        out
    }

    pub fn adjoint(&self) -> Self {
        Self { inner: self.inner.adjoint().to_owned() }
    }

    pub fn transpose(&self) -> Self {
        Self { inner: self.inner.transpose().to_owned() }
    }

    fn same_shape(&self, other: &Self, what: &str) -> Result<()> {
        if self.nrows() != other.nrows() || self.ncols() != other.ncols() {
            return Err(Error::DimensionMismatch(format!(
                "{what}: {}x{} vs {}x{}",
                self.nrows(),
                self.ncols(),
                other.nrows(),
                other.ncols()
            )));
        }
        Ok(())
    }

    pub fn matmul(&self, other: &Self) -> Result<Self> {
        if self.ncols() != other.nrows() {
            return Err(Error::DimensionMismatch(format!(
                "matmul: {}x{} times {}x{}",
                self.nrows(),
                self.ncols(),
                other.nrows(),
                other.ncols()
            )));
        }
        Ok(Self { inner: gemm(self.as_ref(), other.as_ref()) })
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.same_shape(other, "add")?;
        Ok(Self { inner: &self.inner + &other.inner })
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.same_shape(other, "sub")?;
        Ok(Self { inner: &self.inner - &other.inner })
    }

    pub fn scale(&self, factor: c64) -> Self {
        Self::from_fn(self.nrows(), self.ncols(), |i, j| self.inner[(i, j)] * factor)
    }

    pub fn scale_real(&self, factor: f64) -> Self {
        self.scale(c64::new(factor, 0.0))
    }

    pub fn trace(&self) -> Result<c64> {
        if !self.is_square() {
            return Err(Error::DimensionMismatch("trace of a non-square matrix".into()));
        }
        Ok((0..self.nrows()).map(|i| self.inner[(i, i)]).sum())
    }

    pub fn max_abs(&self) -> f64 {
        let mut m = 0.0f64;
        for j in 0..self.ncols() {
            for i in 0..self.nrows() {
                m = m.max(self.inner[(i, j)].norm());
            }
        }
        m
    }

    pub fn max_abs_diff(&self, other: &Self) -> Result<f64> {
        self.same_shape(other, "max_abs_diff")?;
        let mut m = 0.0f64;
        for j in 0..self.ncols() {
            for i in 0..self.nrows() {
                m = m.max((self.inner[(i, j)] - other.inner[(i, j)]).norm());
            }
        }
        Ok(m)
    }

    pub fn frobenius_norm(&self) -> f64 {
        let mut s = 0.0;
        for j in 0..self.ncols() {
            for i in 0..self.nrows() {
                s += self.inner[(i, j)].norm_sqr();
            }
        }
        s.sqrt()
    }

    pub fn is_finite(&self) -> bool {
        (0..self.ncols()).all(|j| (0..self.nrows()).all(|i| self.inner[(i, j)].is_finite()))
    }

    pub fn apply(&self, v: &[c64]) -> Result<Vec<c64>> {
        if v.len() != self.ncols() {
            return Err(Error::DimensionMismatch(format!(
                "apply: {} columns, vector of length {}",
                self.ncols(),
                v.len()
            )));
        }
        let mut out = vec![c64::new(0.0, 0.0); self.nrows()];
        for (j, &vj) in v.iter().enumerate() {
            for (i, o) in out.iter_mut().enumerate() {
                *o += self.inner[(i, j)] * vj;
            }
        }
        Ok(out)
    }

    /// Largest entrywise deviation from Hermiticity, |M_ij - conj(M_ji)|.
    pub fn max_asymmetry(&self) -> f64 {
        let n = self.nrows().min(self.ncols());
        let mut m = 0.0f64;
        for j in 0..n {
            for i in 0..=j {
                m = m.max((self.inner[(i, j)] - self.inner[(j, i)].conj()).norm());
            }
        }
        m
    }
}

/// Square matrix that equals its conjugate transpose.
#[derive(Clone, Debug, PartialEq)]
pub struct HermitianOperator {
    matrix: ComplexMatrix,
}

impl HermitianOperator {
    pub const TOLERANCE: f64 = 1e-10;

    /// Accepts `m` if it is Hermitian within [`Self::TOLERANCE`] and stores (m + m^†)/2.
    pub fn new(m: ComplexMatrix) -> Result<Self> {
        if !m.is_square() {
            return Err(Error::DimensionMismatch(format!(
                "Hermitian operator must be square, got {}x{}",
                m.nrows(),
                m.ncols()
            )));
        }
        if m.nrows() == 0 {
            return Err(Error::InvalidArgument("empty operator".into()));
        }
        if !m.is_finite() {
            return Err(Error::NonFinite("HermitianOperator::new"));
        }
        let asym = m.max_asymmetry();
        if asym > Self::TOLERANCE {
            return Err(Error::NotHermitian { max_asymmetry: asym });
        }
        let n = m.nrows();
        let sym = ComplexMatrix::from_fn(n, n, |i, j| (m.get(i, j) + m.get(j, i).conj()) * 0.5);
        Ok(Self { matrix: sym })
    }

    pub fn zeros(d: usize) -> Self {
        Self { matrix: ComplexMatrix::zeros(d, d) }
    }

    pub fn identity(d: usize) -> Self {
        Self { matrix: ComplexMatrix::identity(d) }
    }

    pub fn from_real_diagonal(diag: &[f64]) -> Self {
        Self { matrix: ComplexMatrix::from_real_diagonal(diag) }
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &ComplexMatrix {
        &self.matrix
    }

    pub fn into_matrix(self) -> ComplexMatrix {
        self.matrix
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self { matrix: self.matrix.scale_real(factor) }
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        Ok(Self { matrix: self.matrix.add(&other.matrix)? })
    }

    pub fn hs_norm(&self) -> f64 {
        self.matrix.frobenius_norm()
    }

    pub fn eig(&self) -> Result<EigenDecomposition> {
        let evd = self
            .matrix
            .as_mat()
            .self_adjoint_eigen(Side::Lower)
            .map_err(|e| Error::Decomposition(format!("{e:?}")))?;
        let s = evd.S().column_vector();
        let eigenvalues: Vec<f64> = (0..self.dim()).map(|i| s[i].re).collect();
        let vectors = ComplexMatrix::from_mat(evd.U().to_owned());
        if !vectors.is_finite() || eigenvalues.iter().any(|e| !e.is_finite()) {
            return Err(Error::NonFinite("eig_hermitian"));
        }
        Ok(EigenDecomposition { eigenvalues, vectors })
    }
}

pub fn eig_hermitian(h: &HermitianOperator) -> Result<EigenDecomposition> {
    h.eig()
}

/// `H = U diag(E) U^†` with ascending `E`.
#[derive(Clone, Debug)]
pub struct EigenDecomposition {
    eigenvalues: Vec<f64>,
    vectors: ComplexMatrix,
}

impl EigenDecomposition {
    /// Assembles a decomposition from parts, e.g. for diagonal Hamiltonians.
    pub fn from_parts(eigenvalues: Vec<f64>, vectors: ComplexMatrix) -> Result<Self> {
        if !vectors.is_square() || vectors.nrows() != eigenvalues.len() {
            return Err(Error::DimensionMismatch("eigenvector matrix vs eigenvalue count".into()));
        }
        if eigenvalues.windows(2).any(|w| w[0] > w[1]) {
            return Err(Error::InvalidArgument("eigenvalues must be ascending".into()));
        }
        Ok(Self { eigenvalues, vectors })
    }

    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn vectors(&self) -> &ComplexMatrix {
        &self.vectors
    }

    /// `U diag(f) U^†` for eigenbasis values `f`.
    pub fn apply_function(&self, diag: &[c64]) -> ComplexMatrix {
        let u = self.vectors.as_mat();
        let scaled = Mat::<c64>::from_fn(self.dim(), self.dim(), |i, j| u[(i, j)] * diag[j]);
        ComplexMatrix::from_mat(gemm_adj_rhs(scaled.as_ref(), u.as_ref()))
    }

    pub fn reconstruct(&self) -> ComplexMatrix {
        let diag: Vec<c64> = self.eigenvalues.iter().map(|&e| c64::new(e, 0.0)).collect();
        self.apply_function(&diag)
    }

    /// Diagonal of `exp(-i E z)`; rejects exponents that would overflow.
    pub fn phases(&self, z: c64) -> Result<Vec<c64>> {
        let worst = self
            .eigenvalues
            .iter()
            .map(|&e| e * z.im)
            .fold(0.0f64, |m, x| if x.abs() > m.abs() { x } else { m });
        if worst.abs() > MAX_EXPONENT || !worst.is_finite() {
            return Err(Error::Overflow { exponent: worst });
        }
        Ok(self.eigenvalues.iter().map(|&e| (c64::new(0.0, -1.0) * z * e).exp()).collect())
    }

    /// `exp(-i H z)` for complex `z`.
    pub fn propagator(&self, z: c64) -> Result<ComplexMatrix> {
        let ph = self.phases(z)?;
        Ok(self.apply_function(&ph))
    }

    /// `U^† M U`.
    pub fn to_eigenbasis(&self, m: &ComplexMatrix) -> Result<ComplexMatrix> {
        if m.nrows() != self.dim() || m.ncols() != self.dim() {
            return Err(Error::DimensionMismatch("to_eigenbasis".into()));
        }
        let u = self.vectors.as_ref();
        let mu = gemm(m.as_ref(), u);
        Ok(ComplexMatrix::from_mat(gemm_adj_lhs(u, mu.as_ref())))
    }

    /// `U M U^†`.
    pub fn from_eigenbasis(&self, m: &ComplexMatrix) -> Result<ComplexMatrix> {
        if m.nrows() != self.dim() || m.ncols() != self.dim() {
            return Err(Error::DimensionMismatch("from_eigenbasis".into()));
        }
        let u = self.vectors.as_ref();
        let um = gemm(u, m.as_ref());
        Ok(ComplexMatrix::from_mat(gemm_adj_rhs(um.as_ref(), u)))
    }

    /// `ln Tr exp(-beta H)`, evaluated with a ground-state shift.
    pub fn log_partition(&self, beta: f64) -> f64 {
        let e0 = self.eigenvalues[0];
        let s: f64 = self.eigenvalues.iter().map(|&e| (-beta * (e - e0)).exp()).sum();
        -beta * e0 + s.ln()
    }

    /// Eigenbasis diagonal of `(exp(-beta H) / Z)^power`.
    pub fn thermal_weights(&self, beta: f64, power: f64) -> Result<Vec<f64>> {
        if !(beta >= 0.0) || !beta.is_finite() {
            return Err(Error::InvalidArgument(format!("beta must be finite and >= 0, got {beta}")));
        }
        if !(power > 0.0) || !power.is_finite() {
            return Err(Error::InvalidArgument(format!("power must be positive, got {power}")));
        }
        let e0 = self.eigenvalues[0];
        let ln_z_shifted = self
            .eigenvalues
            .iter()
            .map(|&e| (-beta * (e - e0)).exp())
            .sum::<f64>()
            .ln();
        let w: Vec<f64> = self
            .eigenvalues
            .iter()
            .map(|&e| (power * (-beta * (e - e0) - ln_z_shifted)).exp())
            .collect();
        if w.iter().all(|&x| x == 0.0) {
            let spread = beta * (self.eigenvalues[self.dim() - 1] - e0) * power;
            return Err(Error::Underflow { spread });
        }
        Ok(w)
    }

    /// `(exp(-beta H) / Z)^power` in the original basis.
    pub fn thermal_weight(&self, beta: f64, power: f64) -> Result<ComplexMatrix> {
        let w: Vec<c64> = self.thermal_weights(beta, power)?.into_iter().map(|x| c64::new(x, 0.0)).collect();
        Ok(self.apply_function(&w))
    }
}

pub fn propagator(decomp: &EigenDecomposition, z: c64) -> Result<ComplexMatrix> {
    decomp.propagator(z)
}

pub fn thermal_weight(decomp: &EigenDecomposition, beta: f64, power: f64) -> Result<ComplexMatrix> {
    decomp.thermal_weight(beta, power)
}

/// Kronecker product; entry `(i*dB + k, j*dB + l)` is `a_ij b_kl`.
pub fn kron(a: &ComplexMatrix, b: &ComplexMatrix) -> Result<ComplexMatrix> {
    let rows = a.nrows().checked_mul(b.nrows());
    let cols = a.ncols().checked_mul(b.ncols());
    let (rows, cols) = match (rows, cols) {
        (Some(r), Some(c)) if r.checked_mul(c).and_then(|n| n.checked_mul(16)).is_some() => (r, c),
        _ => return Err(Error::InvalidArgument("kron: product dimensions overflow".into())),
    };
    let (br, bc) = (b.nrows(), b.ncols());
    let am = a.as_mat();
    let bm = b.as_mat();
    Ok(ComplexMatrix::from_fn(rows, cols, |r, c| am[(r / br, c / bc)] * bm[(r % br, c % bc)]))
}

/// Tr(A^† B).
pub fn hs_inner(a: &ComplexMatrix, b: &ComplexMatrix) -> Result<c64> {
    a.same_shape(b, "hs_inner")?;
    let (am, bm) = (a.as_mat(), b.as_mat());
    let mut acc = c64::new(0.0, 0.0);
    for j in 0..a.ncols() {
        for i in 0..a.nrows() {
            acc += am[(i, j)].conj() * bm[(i, j)];
        }
    }
    Ok(acc)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum Subsystem {
    A,
    B,
}

/// Dimensions of the factors in `H = H_A ⊗ H_B`; the full index is `i_a * d_b + i_b`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct BipartitePartition {
    pub d_a: usize,
    pub d_b: usize,
}

impl BipartitePartition {
    pub fn new(d_a: usize, d_b: usize) -> Result<Self> {
        if d_a == 0 || d_b == 0 {
            return Err(Error::InvalidArgument("subsystem dimensions must be positive".into()));
        }
        d_a.checked_mul(d_b)
            .ok_or_else(|| Error::InvalidArgument("total dimension overflows".into()))?;
        Ok(Self { d_a, d_b })
    }

    pub fn dim(&self) -> usize {
        self.d_a * self.d_b
    }

    fn check_square(&self, m: &ComplexMatrix, expected: usize, what: &str) -> Result<()> {
        if m.nrows() != expected || m.ncols() != expected {
            return Err(Error::DimensionMismatch(format!(
                "{what}: expected {expected}x{expected}, got {}x{}",
                m.nrows(),
                m.ncols()
            )));
        }
        Ok(())
    }

    /// `a ⊗ I_B`.
    pub fn embed_a(&self, a: &ComplexMatrix) -> Result<ComplexMatrix> {
        self.check_square(a, self.d_a, "embed_a")?;
        kron(a, &ComplexMatrix::identity(self.d_b))
    }

    /// `I_A ⊗ b`.
    pub fn embed_b(&self, b: &ComplexMatrix) -> Result<ComplexMatrix> {
        self.check_square(b, self.d_b, "embed_b")?;
        kron(&ComplexMatrix::identity(self.d_a), b)
    }
}

pub fn partial_trace(m: &ComplexMatrix, part: BipartitePartition, over: Subsystem) -> Result<ComplexMatrix> {
    part.check_square(m, part.dim(), "partial_trace")?;
    let (da, db) = (part.d_a, part.d_b);
    let mm = m.as_mat();
    Ok(match over {
        Subsystem::A => ComplexMatrix::from_fn(db, db, |k, l| (0..da).map(|i| mm[(i * db + k, i * db + l)]).sum()),
        Subsystem::B => ComplexMatrix::from_fn(da, da, |i, j| (0..db).map(|k| mm[(i * db + k, j * db + k)]).sum()),
    })
}
