//! Small dense complex-matrix kernel.
//!
//! Everything in this crate lives in spaces of dimension 2, 3, 4 or 9, so the
//! matrices here are plain row-major `Vec<C64>` with no blocking or sparse
//! storage. Hermitian eigendecomposition uses cyclic Jacobi rotations.

use std::fmt;
use std::ops::{Add, Index, IndexMut, Mul, Neg, Sub};

use num_complex::Complex64;
use thiserror::Error;

/// Double-precision complex scalar used throughout the crate.
pub type C64 = Complex64;

pub const ZERO: C64 = C64::new(0.0, 0.0);
pub const ONE: C64 = C64::new(1.0, 0.0);
pub const I: C64 = C64::new(0.0, 1.0);

/// Largest dimension the eigensolver accepts.
pub const MAX_DIM: usize = 16;

const HERMITIAN_REL_TOL: f64 = 1e-12;
const JACOBI_MAX_SWEEPS: usize = 64;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LinalgError {
    #[error("matrix is not Hermitian (max deviation {deviation:e}, allowed {allowed:e})")]
    NotHermitian { deviation: f64, allowed: f64 },
    #[error("dimension mismatch: {op} of {lhs:?} and {rhs:?}")]
    DimensionMismatch {
        op: &'static str,
        lhs: (usize, usize),
        rhs: (usize, usize),
    },
    #[error("matrix must be square, got {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },
    #[error("dimension {0} exceeds the supported maximum of {MAX_DIM}")]
    TooLarge(usize),
    #[error("Jacobi iteration did not converge (off-diagonal norm {0:e})")]
    NoConvergence(f64),
}

/// Dense complex matrix stored row-major.
#[derive(Clone, PartialEq)]
pub struct ComplexMatrix {
    rows: usize,
    cols: usize,
    data: Vec<C64>,
}

impl ComplexMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![ZERO; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = ONE;
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> C64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    /// Builds a matrix from row-major entries.
    ///
    /// Panics if `data.len() != rows * cols`.
    pub fn from_row_major(rows: usize, cols: usize, data: Vec<C64>) -> Self {
        assert_eq!(data.len(), rows * cols, "row-major data has wrong length");
        Self { rows, cols, data }
    }

    pub fn from_real(rows: usize, cols: usize, data: &[f64]) -> Self {
        assert_eq!(data.len(), rows * cols, "row-major data has wrong length");
        Self {
            rows,
            cols,
            data: data.iter().map(|&x| C64::new(x, 0.0)).collect(),
        }
    }

    pub fn diag(entries: &[C64]) -> Self {
        let n = entries.len();
        let mut m = Self::zeros(n, n);
        for (i, &d) in entries.iter().enumerate() {
            m.data[i * n + i] = d;
        }
        m
    }

    /// Outer product |a⟩⟨b|.
    pub fn outer(a: &StateVector, b: &StateVector) -> Self {
        Self::from_fn(a.dim(), b.dim(), |i, j| a[i] * b[j].conj())
    }

    /// Matrix unit |i⟩⟨j| of size n×n.
    pub fn unit(n: usize, i: usize, j: usize) -> Self {
        let mut m = Self::zeros(n, n);
        m.data[i * n + j] = ONE;
        m
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    #[inline]
    pub fn as_slice(&self) -> &[C64] {
        &self.data
    }

    #[inline]
    pub fn as_mut_slice(&mut self) -> &mut [C64] {
        &mut self.data
    }

    pub fn adjoint(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self[(j, i)].conj())
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self[(j, i)])
    }

    pub fn trace(&self) -> C64 {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).sum()
    }

    pub fn scale(&self, s: C64) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&x| x * s).collect(),
        }
    }

    pub fn scale_real(&self, s: f64) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&x| x * s).collect(),
        }
    }

    /// Largest entry modulus.
    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    /// Largest entrywise modulus of `self - other`.
    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        assert_eq!(self.shape(), other.shape(), "max_abs_diff shape mismatch");
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }

    /// max_ij |M_ij - conj(M_ji)|.
    pub fn hermitian_deviation(&self) -> f64 {
        if !self.is_square() {
            return f64::INFINITY;
        }
        let n = self.rows;
        let mut dev: f64 = 0.0;
        for i in 0..n {
            for j in i..n {
                dev = dev.max((self[(i, j)] - self[(j, i)].conj()).norm());
            }
        }
        dev
    }

    /// Hermitian within `1e-12 * max|M|`.
    pub fn is_hermitian(&self) -> bool {
        self.hermitian_deviation() <= HERMITIAN_REL_TOL * self.max_abs().max(f64::MIN_POSITIVE)
    }

    fn check_hermitian(&self) -> Result<(), LinalgError> {
        if !self.is_square() {
            return Err(LinalgError::NotSquare {
                rows: self.rows,
                cols: self.cols,
            });
        }
        let deviation = self.hermitian_deviation();
        let allowed = HERMITIAN_REL_TOL * self.max_abs();
        if deviation > allowed && deviation > 0.0 {
            return Err(LinalgError::NotHermitian { deviation, allowed });
        }
        Ok(())
    }

    /// (M + M†)/2
    pub fn hermitian_part(&self) -> Self {
        assert!(self.is_square());
        let n = self.rows;
        let mut out = self.clone();
        for i in 0..n {
            out.data[i * n + i] = C64::new(self.data[i * n + i].re, 0.0);
            for j in (i + 1)..n {
                let avg = (self.data[i * n + j] + self.data[j * n + i].conj()) * 0.5;
                out.data[i * n + j] = avg;
                out.data[j * n + i] = avg.conj();
            }
        }
        out
    }

    pub fn try_add(&self, rhs: &Self) -> Result<Self, LinalgError> {
        self.check_same_shape("add", rhs)?;
        Ok(Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&rhs.data).map(|(a, b)| a + b).collect(),
        })
    }

    pub fn try_sub(&self, rhs: &Self) -> Result<Self, LinalgError> {
        self.check_same_shape("sub", rhs)?;
        Ok(Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&rhs.data).map(|(a, b)| a - b).collect(),
        })
    }

    pub fn try_matmul(&self, rhs: &Self) -> Result<Self, LinalgError> {
        if self.cols != rhs.rows {
            return Err(LinalgError::DimensionMismatch {
                op: "matmul",
                lhs: self.shape(),
                rhs: rhs.shape(),
            });
        }
        let mut out = Self::zeros(self.rows, rhs.cols);
        matmul_into(self, rhs, &mut out);
        Ok(out)
    }

    pub fn try_apply(&self, v: &StateVector) -> Result<StateVector, LinalgError> {
        if self.cols != v.dim() {
            return Err(LinalgError::DimensionMismatch {
                op: "apply",
                lhs: self.shape(),
                rhs: (v.dim(), 1),
            });
        }
        let mut out = vec![ZERO; self.rows];
        for (i, o) in out.iter_mut().enumerate() {
            let row = &self.data[i * self.cols..(i + 1) * self.cols];
            *o = row.iter().zip(v.as_slice()).map(|(a, b)| a * b).sum();
        }
        Ok(StateVector::new(out))
    }

    /// Restriction to the given row/column indices.
    pub fn submatrix(&self, indices: &[usize]) -> Self {
        Self::from_fn(indices.len(), indices.len(), |i, j| self[(indices[i], indices[j])])
    }

    fn check_same_shape(&self, op: &'static str, rhs: &Self) -> Result<(), LinalgError> {
        if self.shape() != rhs.shape() {
            return Err(LinalgError::DimensionMismatch {
                op,
                lhs: self.shape(),
                rhs: rhs.shape(),
            });
        }
        Ok(())
    }
}

/// `out = a * b`, skipping zero entries of `a`.
///
/// Shapes are checked with debug assertions only; this is the hot path of the
/// master-equation right-hand side.
pub fn matmul_into(a: &ComplexMatrix, b: &ComplexMatrix, out: &mut ComplexMatrix) {
    debug_assert_eq!(a.cols, b.rows);
    debug_assert_eq!(out.rows, a.rows);
    debug_assert_eq!(out.cols, b.cols);
    let (n, m, p) = (a.rows, a.cols, b.cols);
    out.data.iter_mut().for_each(|z| *z = ZERO);
    for i in 0..n {
        let out_row = &mut out.data[i * p..(i + 1) * p];
        for k in 0..m {
            let aik = a.data[i * m + k];
            if aik.re == 0.0 && aik.im == 0.0 {
                continue;
            }
            let b_row = &b.data[k * p..(k + 1) * p];
            for (o, &bkj) in out_row.iter_mut().zip(b_row) {
                *o += aik * bkj;
            }
        }
    }
}

impl Index<(usize, usize)> for ComplexMatrix {
    type Output = C64;

    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &C64 {
        debug_assert!(i < self.rows && j < self.cols);
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for ComplexMatrix {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut C64 {
        debug_assert!(i < self.rows && j < self.cols);
        &mut self.data[i * self.cols + j]
    }
}

impl fmt::Debug for ComplexMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "ComplexMatrix {}x{} [", self.rows, self.cols)?;
        for i in 0..self.rows {
            write!(f, "  ")?;
            for j in 0..self.cols {
                let z = self[(i, j)];
                write!(f, "{:+.6}{:+.6}i ", z.re, z.im)?;
            }
            writeln!(f)?;
        }
        write!(f, "]")
    }
}

// Operator impls panic on shape mismatch; use the `try_*` methods when the
// shapes come from user input.

impl Add for &ComplexMatrix {
    type Output = ComplexMatrix;
    fn add(self, rhs: &ComplexMatrix) -> ComplexMatrix {
        self.try_add(rhs).expect("matrix add")
    }
}

impl Sub for &ComplexMatrix {
    type Output = ComplexMatrix;
    fn sub(self, rhs: &ComplexMatrix) -> ComplexMatrix {
        self.try_sub(rhs).expect("matrix sub")
    }
}

impl Mul for &ComplexMatrix {
    type Output = ComplexMatrix;
    fn mul(self, rhs: &ComplexMatrix) -> ComplexMatrix {
        self.try_matmul(rhs).expect("matrix mul")
    }
}

impl Mul<&StateVector> for &ComplexMatrix {
    type Output = StateVector;
    fn mul(self, rhs: &StateVector) -> StateVector {
        self.try_apply(rhs).expect("matrix-vector mul")
    }
}

impl Neg for &ComplexMatrix {
    type Output = ComplexMatrix;
    fn neg(self) -> ComplexMatrix {
        self.scale_real(-1.0)
    }
}

/// Tensor (Kronecker) product.
///
/// Entry `(i*b.rows + k, j*b.cols + l)` equals `a[i][j] * b[k][l]`.
pub fn kron(a: &ComplexMatrix, b: &ComplexMatrix) -> ComplexMatrix {
    let rows = a.rows * b.rows;
    let cols = a.cols * b.cols;
    let mut out = ComplexMatrix::zeros(rows, cols);
    for i in 0..a.rows {
        for j in 0..a.cols {
            let aij = a[(i, j)];
            if aij == ZERO {
                continue;
            }
            for k in 0..b.rows {
                for l in 0..b.cols {
                    out[(i * b.rows + k, j * b.cols + l)] = aij * b[(k, l)];
                }
            }
        }
    }
    out
}

/// Eigendecomposition of a Hermitian matrix.
#[derive(Debug, Clone)]
pub struct HermitianEigen {
    /// Ascending.
    pub values: Vec<f64>,
    /// Column `i` is the eigenvector for `values[i]`.
    pub vectors: ComplexMatrix,
}

impl HermitianEigen {
    /// Σ f(λ_i) v_i v_i†
    pub fn map_spectrum(&self, mut f: impl FnMut(f64) -> C64) -> ComplexMatrix {
        let n = self.values.len();
        let weights: Vec<C64> = self.values.iter().map(|&l| f(l)).collect();
        let v = &self.vectors;
        ComplexMatrix::from_fn(n, n, |i, j| {
            (0..n).map(|k| v[(i, k)] * weights[k] * v[(j, k)].conj()).sum()
        })
    }
}

/// Cyclic Jacobi eigendecomposition of a Hermitian matrix.
pub fn hermitian_eig(m: &ComplexMatrix) -> Result<HermitianEigen, LinalgError> {
    m.check_hermitian()?;
    let n = m.rows;
    if n > MAX_DIM {
        return Err(LinalgError::TooLarge(n));
    }
    let mut a = m.hermitian_part();
    let mut v = ComplexMatrix::identity(n);
    let scale = a.max_abs();
    if n <= 1 || scale == 0.0 {
        return Ok(finish(a, v));
    }
    let off_norm = |a: &ComplexMatrix| -> f64 {
        let mut s = 0.0;
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    s += a[(i, j)].norm_sqr();
                }
            }
        }
        s.sqrt()
    };
    let target = f64::EPSILON * scale * (n as f64);
    for _ in 0..JACOBI_MAX_SWEEPS {
        if off_norm(&a) <= target {
            return Ok(finish(a, v));
        }
        for p in 0..n - 1 {
            for q in (p + 1)..n {
                let apq = a[(p, q)];
                let mag = apq.norm();
                if mag <= f64::MIN_POSITIVE {
                    continue;
                }
                let app = a[(p, p)].re;
                let aqq = a[(q, q)].re;
                // Skip rotations that are below the diagonal's resolution.
                if mag < f64::EPSILON * 1e-3 * (app.abs() + aqq.abs()) {
                    a[(p, q)] = ZERO;
                    a[(q, p)] = ZERO;
                    continue;
                }
                let phase = apq / mag;
                let theta = (aqq - app) / (2.0 * mag);
                let t = theta.signum() / (theta.abs() + (1.0 + theta * theta).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;
                // G = diag(1, conj(phase)) * [[c, s], [-s, c]] acting on (p, q).
                let g_pp = C64::new(c, 0.0);
                let g_pq = C64::new(s, 0.0);
                let g_qp = -phase.conj() * s;
                let g_qq = phase.conj() * c;
                // A <- A G (columns p, q)
                for k in 0..n {
                    let akp = a[(k, p)];
                    let akq = a[(k, q)];
                    a[(k, p)] = akp * g_pp + akq * g_qp;
                    a[(k, q)] = akp * g_pq + akq * g_qq;
                }
                // A <- G^† A (rows p, q)
                for k in 0..n {
                    let apk = a[(p, k)];
                    let aqk = a[(q, k)];
                    a[(p, k)] = g_pp.conj() * apk + g_qp.conj() * aqk;
                    a[(q, k)] = g_pq.conj() * apk + g_qq.conj() * aqk;
                }
                a[(p, q)] = ZERO;
                a[(q, p)] = ZERO;
                a[(p, p)] = C64::new(a[(p, p)].re, 0.0);
                a[(q, q)] = C64::new(a[(q, q)].re, 0.0);
                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = vkp * g_pp + vkq * g_qp;
                    v[(k, q)] = vkp * g_pq + vkq * g_qq;
                }
            }
        }
    }
    let residual = off_norm(&a);
    if residual <= 1e3 * target {
        Ok(finish(a, v))
    } else {
        Err(LinalgError::NoConvergence(residual))
    }
}

fn finish(a: ComplexMatrix, v: ComplexMatrix) -> HermitianEigen {
    let n = a.rows;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[(i, i)].re.total_cmp(&a[(j, j)].re));
    let values = order.iter().map(|&i| a[(i, i)].re).collect();
    let vectors = ComplexMatrix::from_fn(n, n, |r, c| v[(r, order[c])]);
    HermitianEigen { values, vectors }
}

/// exp(-i * scale * h) for Hermitian `h`.
pub fn expm_unitary(h: &ComplexMatrix, scale: f64) -> Result<ComplexMatrix, LinalgError> {
    let eig = hermitian_eig(h)?;
    Ok(eig.map_spectrum(|lambda| C64::from_polar(1.0, -scale * lambda)))
}

/// ‖U†U − I‖_max
pub fn unitarity_defect(u: &ComplexMatrix) -> f64 {
    let n = u.cols();
    (&u.adjoint() * u).max_abs_diff(&ComplexMatrix::identity(n))
}

/// Column state vector.
#[derive(Clone, PartialEq)]
pub struct StateVector {
    amplitudes: Vec<C64>,
}

impl StateVector {
    pub fn new(amplitudes: Vec<C64>) -> Self {
        Self { amplitudes }
    }

    pub fn zeros(dim: usize) -> Self {
        Self::new(vec![ZERO; dim])
    }

    pub fn basis(dim: usize, index: usize) -> Self {
        let mut v = Self::zeros(dim);
        v.amplitudes[index] = ONE;
        v
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.amplitudes.len()
    }

    #[inline]
    pub fn as_slice(&self) -> &[C64] {
        &self.amplitudes
    }

    #[inline]
    pub fn as_mut_slice(&mut self) -> &mut [C64] {
        &mut self.amplitudes
    }

    pub fn norm(&self) -> f64 {
        self.amplitudes.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn normalized(&self) -> Self {
        let n = self.norm();
        Self::new(self.amplitudes.iter().map(|z| z / n).collect())
    }

    pub fn is_normalized(&self) -> bool {
        (self.norm() - 1.0).abs() <= 1e-10
    }

    /// ⟨self|other⟩
    pub fn inner(&self, other: &Self) -> C64 {
        assert_eq!(self.dim(), other.dim(), "inner product dimension mismatch");
        self.amplitudes
            .iter()
            .zip(&other.amplitudes)
            .map(|(a, b)| a.conj() * b)
            .sum()
    }

    pub fn kron(&self, other: &Self) -> Self {
        let mut out = Vec::with_capacity(self.dim() * other.dim());
        for a in &self.amplitudes {
            for b in &other.amplitudes {
                out.push(a * b);
            }
        }
        Self::new(out)
    }

    /// |ψ⟩⟨ψ|
    pub fn projector(&self) -> ComplexMatrix {
        ComplexMatrix::outer(self, self)
    }
}

impl Index<usize> for StateVector {
    type Output = C64;
    #[inline]
    fn index(&self, i: usize) -> &C64 {
        &self.amplitudes[i]
    }
}

impl IndexMut<usize> for StateVector {
    #[inline]
    fn index_mut(&mut self, i: usize) -> &mut C64 {
        &mut self.amplitudes[i]
    }
}

impl fmt::Debug for StateVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list()
            .entries(self.amplitudes.iter().map(|z| (z.re, z.im)))
            .finish()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn pauli_x() -> ComplexMatrix {
        ComplexMatrix::from_real(2, 2, &[0.0, 1.0, 1.0, 0.0])
    }

    fn random_hermitian(n: usize, rng: &mut impl Rng) -> ComplexMatrix {
        let mut m = ComplexMatrix::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = C64::new(rng.gen_range(-1.0..1.0), 0.0);
            for j in (i + 1)..n {
                let z = C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
                m[(i, j)] = z;
                m[(j, i)] = z.conj();
            }
        }
        m
    }

    #[test]
    fn kron_of_identities_is_identity() {
        let k = kron(&ComplexMatrix::identity(3), &ComplexMatrix::identity(3));
        assert_eq!(k, ComplexMatrix::identity(9));
    }

    #[test]
    fn kron_basis_ordering() {
        // diag(1,0,0) ⊗ |2⟩⟨2| = |0e⟩⟨0e| at index 3*0 + 2.
        let k = kron(&ComplexMatrix::diag(&[ONE, ZERO, ZERO]), &ComplexMatrix::unit(3, 2, 2));
        for i in 0..9 {
            for j in 0..9 {
                let expected = if (i, j) == (2, 2) { ONE } else { ZERO };
                assert_eq!(k[(i, j)], expected, "entry ({i},{j})");
            }
        }
    }

    #[test]
    fn embedded_flip_on_control_maps_00_to_10() {
        // σx on the {0,1} levels of the control qutrit.
        let mut sx3 = ComplexMatrix::zeros(3, 3);
        sx3[(0, 1)] = ONE;
        sx3[(1, 0)] = ONE;
        let op = kron(&sx3, &ComplexMatrix::identity(3));
        let out = &op * &StateVector::basis(9, 0);
        // |10⟩ is index 3*1 + 0.
        assert_eq!(out, StateVector::basis(9, 3));
    }

    #[test]
    fn eig_of_diagonal() {
        let m = ComplexMatrix::from_real(3, 3, &[3.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 2.0]);
        let e = hermitian_eig(&m).unwrap();
        assert_eq!(e.values, vec![1.0, 2.0, 3.0]);
    }

    #[test]
    fn eig_of_pauli_x() {
        let e = hermitian_eig(&pauli_x()).unwrap();
        assert!((e.values[0] + 1.0).abs() < 1e-14);
        assert!((e.values[1] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn eig_rejects_non_hermitian() {
        let m = ComplexMatrix::from_real(2, 2, &[0.0, 1.0, 0.0, 0.0]);
        assert!(matches!(hermitian_eig(&m), Err(LinalgError::NotHermitian { .. })));
    }

    #[test]
    fn eig_reconstructs_random_hermitian() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for n in [2usize, 3, 4, 9, 16] {
            let m = random_hermitian(n, &mut rng);
            let e = hermitian_eig(&m).unwrap();
            let rebuilt = e.map_spectrum(|l| C64::new(l, 0.0));
            assert!(rebuilt.max_abs_diff(&m) < 1e-9, "n = {n}");
            // Residual and orthonormality.
            let scale = m.max_abs();
            for k in 0..n {
                let vk = StateVector::new((0..n).map(|i| e.vectors[(i, k)]).collect());
                let mv = &m * &vk;
                for i in 0..n {
                    assert!((mv[i] - vk[i] * e.values[k]).norm() <= 1e-10 * scale);
                }
            }
            assert!(unitarity_defect(&e.vectors) < 1e-10);
            assert!(e.values.windows(2).all(|w| w[0] <= w[1]));
        }
    }

    #[test]
    fn expm_of_zero_is_identity() {
        let u = expm_unitary(&ComplexMatrix::zeros(4, 4), 3.7).unwrap();
        assert_eq!(u, ComplexMatrix::identity(4));
    }

    #[test]
    fn expm_pauli_rotation() {
        let u = expm_unitary(&pauli_x(), PI / 2.0).unwrap();
        let expected = pauli_x().scale(-I);
        assert!(u.max_abs_diff(&expected) < 1e-14);
    }

    #[test]
    fn expm_forward_then_backward_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let h = random_hermitian(9, &mut rng);
        let u = expm_unitary(&h, 0.83).unwrap();
        let w = expm_unitary(&h, -0.83).unwrap();
        assert!((&u * &w).max_abs_diff(&ComplexMatrix::identity(9)) < 1e-9);
        assert!(unitarity_defect(&u) < 1e-10);
    }

    #[test]
    fn matmul_dimension_mismatch() {
        let a = ComplexMatrix::zeros(2, 3);
        let b = ComplexMatrix::zeros(2, 3);
        assert!(matches!(a.try_matmul(&b), Err(LinalgError::DimensionMismatch { .. })));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn int_matrix(n: usize, m: usize) -> impl Strategy<Value = ComplexMatrix> {
            proptest::collection::vec((-5i32..=5, -5i32..=5), n * m).prop_map(move |v| {
                ComplexMatrix::from_row_major(
                    n,
                    m,
                    v.into_iter().map(|(re, im)| C64::new(re as f64, im as f64)).collect(),
                )
            })
        }

        fn bounded_matrix(n: usize) -> impl Strategy<Value = ComplexMatrix> {
            proptest::collection::vec((-1.0f64..1.0, -1.0f64..1.0), n * n).prop_map(move |v| {
                ComplexMatrix::from_row_major(n, n, v.into_iter().map(|(re, im)| C64::new(re, im)).collect())
            })
        }

        fn hermitian(n: usize) -> impl Strategy<Value = ComplexMatrix> {
            bounded_matrix(n).prop_map(|m| m.hermitian_part())
        }

        proptest! {
            #[test]
            fn kron_is_associative(a in int_matrix(2, 3), b in int_matrix(3, 2), c in int_matrix(2, 2)) {
                let left = kron(&kron(&a, &b), &c);
                let right = kron(&a, &kron(&b, &c));
                prop_assert_eq!(left, right);
            }

            #[test]
            fn kron_trace_factorizes(a in bounded_matrix(3), b in bounded_matrix(3)) {
                let lhs = kron(&a, &b).trace();
                let rhs = a.trace() * b.trace();
                prop_assert!((lhs - rhs).norm() <= 1e-12);
            }

            #[test]
            fn expm_composes_additively(h in hermitian(4), s1 in -2.0f64..2.0, s2 in -2.0f64..2.0) {
                let a = expm_unitary(&h, s1).unwrap();
                let b = expm_unitary(&h, s2).unwrap();
                let ab = expm_unitary(&h, s1 + s2).unwrap();
                prop_assert!((&a * &b).max_abs_diff(&ab) <= 1e-9);
                prop_assert!(unitarity_defect(&ab) <= 1e-10);
            }
        }
    }
}
