//! Dense complex-matrix primitives.
//!
//! Matrices are `nalgebra` dense matrices of `Complex64`. Bipartite indices
//! follow the usual Kronecker convention: basis vector `|i⟩⊗|j⟩` of an
//! `dA·dB` space sits at position `i·dB + j`.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::tolerance::Tolerances;

pub type C64 = Complex64;
pub type CMatrix = DMatrix<C64>;
pub type CVector = DVector<C64>;

pub const ZERO: C64 = C64::new(0.0, 0.0);
pub const ONE: C64 = C64::new(1.0, 0.0);

pub fn c(re: f64) -> C64 {
    C64::new(re, 0.0)
}

pub fn identity(n: usize) -> CMatrix {
    CMatrix::identity(n, n)
}

pub fn diag_real(values: &[f64]) -> CMatrix {
    CMatrix::from_diagonal(&CVector::from_iterator(values.len(), values.iter().map(|&v| c(v))))
}

/// `|v⟩⟨v|`
pub fn outer(v: &CVector) -> CMatrix {
    v * v.adjoint()
}

/// `tr(AB)` without forming the product.
pub fn trace_product(a: &CMatrix, b: &CMatrix) -> C64 {
    debug_assert_eq!(a.ncols(), b.nrows());
    debug_assert_eq!(a.nrows(), b.ncols());
    let mut acc = ZERO;
    for i in 0..a.nrows() {
        for k in 0..a.ncols() {
            acc += a[(i, k)] * b[(k, i)];
        }
    }
    acc
}

/// Largest entrywise modulus of `M − M†`.
pub fn hermitian_deviation(m: &CMatrix) -> f64 {
    if !m.is_square() {
        return f64::INFINITY;
    }
    let n = m.nrows();
    let mut worst = 0.0_f64;
    for i in 0..n {
        for j in i..n {
            worst = worst.max((m[(i, j)] - m[(j, i)].conj()).norm());
        }
    }
    worst
}

/// `(M + M†)/2`
pub fn symmetrize(m: &CMatrix) -> CMatrix {
    (m + m.adjoint()) * c(0.5)
}

pub fn max_abs_diff(a: &CMatrix, b: &CMatrix) -> f64 {
    assert_eq!(a.shape(), b.shape(), "shape mismatch");
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y).norm())
        .fold(0.0, f64::max)
}

/// Numerical rank: number of eigenvalues of a Hermitian matrix above `threshold`.
pub fn hermitian_rank(m: &CMatrix, threshold: f64) -> usize {
    let eig = eigh_unchecked(m);
    eig.values.iter().filter(|&&v| v > threshold).count()
}

#[derive(Debug, Clone, PartialEq)]
pub struct HermitianMatrix(CMatrix);

impl HermitianMatrix {
    pub fn new(m: CMatrix, tol: &Tolerances) -> Result<Self> {
        if !m.is_square() || m.nrows() == 0 {
            return Err(Error::DimensionMismatch(format!(
                "Hermitian matrix must be square and nonempty, got {}x{}",
                m.nrows(),
                m.ncols()
            )));
        }
        let deviation = hermitian_deviation(&m);
        if deviation > tol.herm {
            return Err(Error::NotHermitian { deviation });
        }
        Ok(Self(m))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn as_matrix(&self) -> &CMatrix {
        &self.0
    }

    pub fn into_matrix(self) -> CMatrix {
        self.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PsdMatrix(CMatrix);

impl PsdMatrix {
    pub fn new(m: CMatrix, tol: &Tolerances) -> Result<Self> {
        let h = HermitianMatrix::new(m, tol)?;
        let min_eigenvalue = eigh_unchecked(h.as_matrix()).values[0];
        if min_eigenvalue < -tol.psd {
            return Err(Error::NotPsd { min_eigenvalue });
        }
        Ok(Self(h.into_matrix()))
    }

    /// Wraps a matrix that is PSD by construction (e.g. `G G†`).
    pub(crate) fn from_trusted(m: CMatrix) -> Self {
        Self(m)
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn as_matrix(&self) -> &CMatrix {
        &self.0
    }

    pub fn into_matrix(self) -> CMatrix {
        self.0
    }
}

/// Eigendecomposition `M = V diag(values) V†` with eigenvalues ascending.
#[derive(Debug, Clone)]
pub struct Eigen {
    pub values: DVector<f64>,
    pub vectors: CMatrix,
}

impl Eigen {
    /// Rebuilds `V f(diag(values)) V†`.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> CMatrix {
        let mut scaled = self.vectors.clone();
        for (j, &v) in self.values.iter().enumerate() {
            let s = c(f(v));
            scaled.column_mut(j).iter_mut().for_each(|e| *e *= s);
        }
        scaled * self.vectors.adjoint()
    }
}

pub fn hermitian_eig(m: &HermitianMatrix) -> Eigen {
    eigh_unchecked(m.as_matrix())
}

/// Checks Hermiticity, then decomposes.
pub fn eigh(m: &CMatrix, tol: &Tolerances) -> Result<Eigen> {
    let h = HermitianMatrix::new(m.clone(), tol)?;
    Ok(hermitian_eig(&h))
}

pub(crate) fn eigh_unchecked(m: &CMatrix) -> Eigen {
    let sym = symmetrize(m);
    let decomposition = sym.symmetric_eigen();
    let n = decomposition.eigenvalues.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| decomposition.eigenvalues[a].total_cmp(&decomposition.eigenvalues[b]));
    let values = DVector::from_iterator(n, order.iter().map(|&i| decomposition.eigenvalues[i]));
    let vectors = CMatrix::from_columns(
        &order
            .iter()
            .map(|&i| decomposition.eigenvectors.column(i).into_owned())
            .collect::<Vec<_>>(),
    );
    Eigen { values, vectors }
}

/// `M^p` for PSD `M`, via the spectral map `λ → λ^p`.
///
/// Eigenvalues in `[-tol.psd, 0)` are clipped to zero. Negative exponents
/// need every eigenvalue above `tol.rank`.
pub fn psd_power(m: &PsdMatrix, p: f64, tol: &Tolerances) -> Result<PsdMatrix> {
    let eig = eigh_unchecked(m.as_matrix());
    let min_eigenvalue = eig.values[0];
    if min_eigenvalue < -tol.psd {
        return Err(Error::NotPsd { min_eigenvalue });
    }
    if p < 0.0 && min_eigenvalue <= tol.rank {
        return Err(Error::SingularMatrix { min_eigenvalue });
    }
    let powered = eig.map(|v| v.max(0.0).powf(p));
    Ok(PsdMatrix(symmetrize(&powered)))
}

pub fn kron(a: &CMatrix, b: &CMatrix) -> CMatrix {
    a.kronecker(b)
}

pub fn kron_vec(a: &CVector, b: &CVector) -> CVector {
    a.kronecker(b)
}

/// Which subsystem survives a partial trace.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Keep {
    A,
    B,
}

/// Traces out one factor of a bipartite operator on `dA·dB`.
///
/// `Keep::A` returns `tr_B(M)`, `Keep::B` returns `tr_A(M)`.
pub fn partial_trace(m: &CMatrix, dims: (usize, usize), keep: Keep) -> Result<CMatrix> {
    let (da, db) = dims;
    let n = da * db;
    if m.nrows() != n || m.ncols() != n {
        return Err(Error::DimensionMismatch(format!(
            "partial trace over {da}x{db} needs a {n}x{n} matrix, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    let out = match keep {
        Keep::A => CMatrix::from_fn(da, da, |i, k| (0..db).map(|j| m[(i * db + j, k * db + j)]).sum()),
        Keep::B => CMatrix::from_fn(db, db, |j, l| (0..da).map(|i| m[(i * db + j, i * db + l)]).sum()),
    };
    Ok(out)
}

/// `v = Σ_k coeffs[k] · basis_a[k] ⊗ basis_b[k]`, coefficients descending.
#[derive(Debug, Clone)]
pub struct Schmidt {
    pub coeffs: Vec<f64>,
    pub basis_a: Vec<CVector>,
    pub basis_b: Vec<CVector>,
}

impl Schmidt {
    pub fn reconstruct(&self) -> CVector {
        let da = self.basis_a[0].len();
        let db = self.basis_b[0].len();
        let mut v = CVector::zeros(da * db);
        for ((&s, a), b) in self.coeffs.iter().zip(&self.basis_a).zip(&self.basis_b) {
            v += kron_vec(a, b) * c(s);
        }
        v
    }
}

/// Schmidt decomposition of a unit vector on `dA·dB` via the SVD of its
/// `dA×dB` coefficient matrix. Returns `min(dA, dB)` terms.
pub fn schmidt_decompose(v: &CVector, dims: (usize, usize), tol: &Tolerances) -> Result<Schmidt> {
    let (da, db) = dims;
    if v.len() != da * db || da == 0 || db == 0 {
        return Err(Error::DimensionMismatch(format!(
            "vector of length {} cannot be split as {da}x{db}",
            v.len()
        )));
    }
    let norm = v.norm();
    if (norm - 1.0).abs() > tol.norm {
        return Err(Error::NotNormalized { norm });
    }
    let coefficients = CMatrix::from_fn(da, db, |i, j| v[i * db + j]);
    let svd = coefficients.svd(true, true);
    let u = svd.u.expect("requested U");
    let v_t = svd.v_t.expect("requested V^T");
    let k = da.min(db);
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    Ok(Schmidt {
        coeffs: order.iter().map(|&i| svd.singular_values[i]).collect(),
        basis_a: order.iter().map(|&i| u.column(i).into_owned()).collect(),
        basis_b: order
            .iter()
            .map(|&i| v_t.row(i).transpose().into_owned())
            .collect(),
    })
}
