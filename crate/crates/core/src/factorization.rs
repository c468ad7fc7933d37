//! PSD factorizations `P_xy = tr(C_x D_y)`, their canonical form, the
//! closed-form factorizations of `P` and `Q`, and the passage from a
//! canonical factorization back to a state and two POVMs.

use std::f64::consts::PI;

use nalgebra::DMatrix;

use crate::design::{Correlation, ProtocolParameters};
use crate::error::{Error, Result};
use crate::linalg::{
    c, eigh_unchecked, outer, psd_power, symmetrize, trace_product, CMatrix, CVector, PsdMatrix, C64,
};
use crate::quantum::{Povm, PureState};
use crate::tolerance::Tolerances;

/// Two families of `r×r` PSD matrices.
#[derive(Debug, Clone, PartialEq)]
pub struct PsdFactorization {
    r: usize,
    c: Vec<PsdMatrix>,
    d: Vec<PsdMatrix>,
}

impl PsdFactorization {
    pub fn new(c: Vec<CMatrix>, d: Vec<CMatrix>, tol: &Tolerances) -> Result<Self> {
        if c.is_empty() || c.len() != d.len() {
            return Err(Error::DimensionMismatch(format!(
                "factor families have {} and {} elements",
                c.len(),
                d.len()
            )));
        }
        let r = c[0].nrows();
        let check = |m: CMatrix, side: char, i: usize| -> Result<PsdMatrix> {
            if m.nrows() != r || m.ncols() != r {
                return Err(Error::DimensionMismatch(format!(
                    "{side}[{i}] is {}x{}, expected {r}x{r}",
                    m.nrows(),
                    m.ncols()
                )));
            }
            PsdMatrix::new(m, tol)
        };
        let c = c
            .into_iter()
            .enumerate()
            .map(|(i, m)| check(m, 'C', i))
            .collect::<Result<Vec<_>>>()?;
        let d = d
            .into_iter()
            .enumerate()
            .map(|(i, m)| check(m, 'D', i))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { r, c, d })
    }

    pub(crate) fn from_trusted(c: Vec<CMatrix>, d: Vec<CMatrix>) -> Self {
        let r = c[0].nrows();
        Self {
            r,
            c: c.into_iter().map(PsdMatrix::from_trusted).collect(),
            d: d.into_iter().map(PsdMatrix::from_trusted).collect(),
        }
    }

    pub fn r(&self) -> usize {
        self.r
    }

    pub fn m(&self) -> usize {
        self.c.len()
    }

    pub fn c(&self) -> &[PsdMatrix] {
        &self.c
    }

    pub fn d(&self) -> &[PsdMatrix] {
        &self.d
    }

    pub fn sum_c(&self) -> CMatrix {
        sum(&self.c, self.r)
    }

    pub fn sum_d(&self) -> CMatrix {
        sum(&self.d, self.r)
    }

    /// The matrix `[Re tr(C_x D_y)]`.
    pub fn pairings(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.m(), self.m(), |x, y| {
            trace_product(self.c[x].as_matrix(), self.d[y].as_matrix()).re
        })
    }
}

fn sum(items: &[PsdMatrix], r: usize) -> CMatrix {
    items.iter().fold(CMatrix::zeros(r, r), |acc, m| acc + m.as_matrix())
}

/// A factorization whose two element sums both equal `diag(lambda)`.
#[derive(Debug, Clone, PartialEq)]
pub struct CanonicalFactorization {
    pub base: PsdFactorization,
    pub lambda: Vec<f64>,
}

impl CanonicalFactorization {
    /// Largest deviation of either element sum from `diag(lambda)`.
    pub fn sum_deviation(&self) -> f64 {
        let target = crate::linalg::diag_real(&self.lambda);
        crate::linalg::max_abs_diff(&self.base.sum_c(), &target)
            .max(crate::linalg::max_abs_diff(&self.base.sum_d(), &target))
    }
}

/// `max_xy |tr(C_x D_y) − target_xy|`.
pub fn verify_factorization(f: &PsdFactorization, target: &Correlation) -> Result<f64> {
    if f.m() != target.m() {
        return Err(Error::DimensionMismatch(format!(
            "factorization has {} elements, correlation is {}x{}",
            f.m(),
            target.m(),
            target.m()
        )));
    }
    Ok(crate::design::max_abs_diff(&f.pairings(), target.entries()))
}

/// Brings a factorization with full-rank element sums into canonical form.
///
/// With `S_C = Σ C_x`, `S_D = Σ D_y` and `W = S_C^{1/2} S_D S_C^{1/2}`:
///
/// ```text
/// C'_x = W^{1/4} S_C^{-1/2} C_x S_C^{-1/2} W^{1/4}
/// D'_y = W^{-1/4} S_C^{1/2} D_y S_C^{1/2} W^{-1/4}
/// ```
///
/// so both sums become `W^{1/2}`; conjugating by the eigenbasis of `W`
/// makes them diagonal. `Λ` comes out sorted descending.
pub fn canonicalize(f: &PsdFactorization, tol: &Tolerances) -> Result<CanonicalFactorization> {
    let s_c = f.sum_c();
    let s_d = f.sum_d();
    for (side, s) in [('C', &s_c), ('D', &s_d)] {
        let min_eigenvalue = eigh_unchecked(s).values[0];
        if min_eigenvalue <= tol.rank {
            return Err(Error::SingularSum { side, min_eigenvalue });
        }
    }
    let s_c = PsdMatrix::from_trusted(symmetrize(&s_c));
    let sc_half = psd_power(&s_c, 0.5, tol)?.into_matrix();
    let sc_inv_half = psd_power(&s_c, -0.5, tol)?.into_matrix();
    let w = symmetrize(&(&sc_half * &s_d * &sc_half));
    let eig = eigh_unchecked(&w);

    // Eigenbasis ordered by descending eigenvalue.
    let r = f.r();
    let order: Vec<usize> = (0..r).rev().collect();
    let basis = CMatrix::from_columns(&order.iter().map(|&i| eig.vectors.column(i).into_owned()).collect::<Vec<_>>());
    let w_values: Vec<f64> = order.iter().map(|&i| eig.values[i].max(0.0)).collect();
    let quarter = CMatrix::from_diagonal(&CVector::from_iterator(r, w_values.iter().map(|v| c(v.powf(0.25)))));
    let inv_quarter = CMatrix::from_diagonal(&CVector::from_iterator(r, w_values.iter().map(|v| c(v.powf(-0.25)))));

    // U W^{±1/4} = diag(w^{±1/4}) U with U = basis†.
    let left_c = &quarter * basis.adjoint() * &sc_inv_half;
    let left_d = &inv_quarter * basis.adjoint() * &sc_half;
    let c_new = f
        .c()
        .iter()
        .map(|m| symmetrize(&(&left_c * m.as_matrix() * left_c.adjoint())))
        .collect();
    let d_new = f
        .d()
        .iter()
        .map(|m| symmetrize(&(&left_d * m.as_matrix() * left_d.adjoint())))
        .collect();
    Ok(CanonicalFactorization {
        base: PsdFactorization::from_trusted(c_new, d_new),
        lambda: w_values.iter().map(|v| v.sqrt()).collect(),
    })
}

/// Column `x` of the `d×d` Fourier matrix: entries `ω^{xk}/√d`, `ω = e^{2πi/d}`.
pub fn fourier_column(d: usize, x: usize) -> CVector {
    let norm = 1.0 / (d as f64).sqrt();
    CVector::from_fn(d, |k, _| {
        let angle = 2.0 * PI * ((x * k) % d) as f64 / d as f64;
        C64::from_polar(norm, angle)
    })
}

fn basis_projector(d: usize, i: usize) -> CMatrix {
    let mut m = CMatrix::zeros(d, d);
    m[(i, i)] = c(1.0);
    m
}

/// Closed-form canonical factorization of `build_p(d)`:
/// `C'_x = D'_x = √d/(d+1)·|f_x⟩⟨f_x|` (Fourier columns) and
/// `C'_{d+x} = D'_{d+x} = 1/(√d(d+1))·|x⟩⟨x|`, with `Λ = I/√d`.
pub fn analytic_factorization_p(d: usize) -> CanonicalFactorization {
    scaled_p_factorization(d, 1.0)
}

fn scaled_p_factorization(d: usize, root_a: f64) -> CanonicalFactorization {
    assert!(d >= 2, "analytic factorization needs d >= 2");
    let df = d as f64;
    let fourier_weight = root_a * df.sqrt() / (df + 1.0);
    let basis_weight = root_a / (df.sqrt() * (df + 1.0));
    let elements: Vec<CMatrix> = (0..d)
        .map(|x| outer(&fourier_column(d, x)) * c(fourier_weight))
        .chain((0..d).map(|x| basis_projector(d, x) * c(basis_weight)))
        .collect();
    CanonicalFactorization {
        base: PsdFactorization::from_trusted(elements.clone(), elements),
        lambda: vec![root_a / df.sqrt(); d],
    }
}

/// Closed-form canonical factorization of `build_q(params)`: the `P`
/// factorization scaled by `√a`, followed by
/// `C'_{2d+x} = √d(d+1)/√a · z_x |x⟩⟨x|`; `Λ = γ`.
pub fn analytic_factorization_q(params: &ProtocolParameters, tol: &Tolerances) -> Result<CanonicalFactorization> {
    params.validate(tol)?;
    let d = params.d;
    let df = d as f64;
    let root_a = params.a.sqrt();
    let mut cf = scaled_p_factorization(d, root_a);
    let mut elements: Vec<CMatrix> = cf.base.c.iter().map(|m| m.as_matrix().clone()).collect();
    let tail_weight = df.sqrt() * (df + 1.0) / root_a;
    elements.extend((0..d).map(|x| basis_projector(d, x) * c(tail_weight * params.z[x])));
    cf.base = PsdFactorization::from_trusted(elements.clone(), elements);
    cf.lambda = params.gamma.clone();
    Ok(cf)
}

/// A state and two POVMs realizing the correlation of a canonical factorization.
#[derive(Debug, Clone, PartialEq)]
pub struct Realization {
    pub psi: PureState,
    pub povm_a: Povm,
    pub povm_b: Povm,
}

/// `|ψ⟩ = Σ_i Λ_i |ii⟩`, `A_x = (Λ^{-1/2} C'_x Λ^{-1/2})ᵀ`, `B_y = Λ^{-1/2} D'_y Λ^{-1/2}`.
///
/// Then `⟨ψ|A_x ⊗ B_y|ψ⟩ = tr(C'_x D'_y)`, and both POVMs are complete
/// because the element sums equal `diag(Λ)`.
pub fn realization_from_canonical(cf: &CanonicalFactorization, tol: &Tolerances) -> Result<Realization> {
    let r = cf.base.r();
    if cf.lambda.len() != r {
        return Err(Error::DimensionMismatch(format!(
            "lambda has {} entries for factors of size {r}",
            cf.lambda.len()
        )));
    }
    if let Some(&value) = cf.lambda.iter().find(|&&v| !(v > tol.rank)) {
        return Err(Error::SingularLambda { value });
    }
    let norm = cf.lambda.iter().map(|v| v * v).sum::<f64>().sqrt();
    if (norm - 1.0).abs() > tol.norm {
        return Err(Error::NotNormalized { norm });
    }
    let mut amplitudes = CVector::zeros(r * r);
    for (i, l) in cf.lambda.iter().enumerate() {
        amplitudes[i * r + i] = c(*l);
    }
    let psi = PureState::new(amplitudes, (r, r), tol)?;
    let scale = CMatrix::from_diagonal(&CVector::from_iterator(r, cf.lambda.iter().map(|l| c(l.powf(-0.5)))));
    let conj = |m: &PsdMatrix| symmetrize(&(&scale * m.as_matrix() * &scale));
    let povm_a = Povm::new(cf.base.c().iter().map(|m| conj(m).transpose()).collect(), tol)?;
    let povm_b = Povm::new(cf.base.d().iter().map(conj).collect(), tol)?;
    Ok(Realization { psi, povm_a, povm_b })
}

/// Gauge action `C_x → M C_x M†`, `D_y → M^{-†} D_y M^{-1}`; preserves every pairing.
pub fn apply_gauge(f: &PsdFactorization, m: &CMatrix) -> Result<PsdFactorization> {
    let inv = m
        .clone()
        .try_inverse()
        .ok_or(Error::SingularMatrix { min_eigenvalue: 0.0 })?;
    let inv_adj = inv.adjoint();
    let c_new = f.c().iter().map(|x| symmetrize(&(m * x.as_matrix() * m.adjoint()))).collect();
    let d_new = f.d().iter().map(|y| symmetrize(&(&inv_adj * y.as_matrix() * &inv))).collect();
    Ok(PsdFactorization::from_trusted(c_new, d_new))
}

/// Scales a factorization so both sides carry the same weight; used to
/// present canonical inputs with `Λ = I`.
pub fn rescale(f: &PsdFactorization, c_scale: f64, d_scale: f64) -> PsdFactorization {
    PsdFactorization::from_trusted(
        f.c().iter().map(|m| m.as_matrix() * c(c_scale)).collect(),
        f.d().iter().map(|m| m.as_matrix() * c(d_scale)).collect(),
    )
}
