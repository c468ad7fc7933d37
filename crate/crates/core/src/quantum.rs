//! Bipartite states, POVMs and the correlations they generate.

use nalgebra::DMatrix;

use crate::design::{validate_spectrum, Correlation};
use crate::error::{Error, Result};
use crate::linalg::{c, identity, max_abs_diff, outer, CMatrix, CVector, PsdMatrix, ONE, ZERO};
use crate::tolerance::Tolerances;

/// Unit vector on `C^dA ⊗ C^dB`.
#[derive(Debug, Clone, PartialEq)]
pub struct PureState {
    dims: (usize, usize),
    amplitudes: CVector,
}

impl PureState {
    pub fn new(amplitudes: CVector, dims: (usize, usize), tol: &Tolerances) -> Result<Self> {
        if amplitudes.len() != dims.0 * dims.1 || amplitudes.is_empty() {
            return Err(Error::DimensionMismatch(format!(
                "{} amplitudes for a {}x{} system",
                amplitudes.len(),
                dims.0,
                dims.1
            )));
        }
        let norm = amplitudes.norm();
        if (norm - 1.0).abs() > tol.norm {
            return Err(Error::NotNormalized { norm });
        }
        Ok(Self { dims, amplitudes })
    }

    pub fn dims(&self) -> (usize, usize) {
        self.dims
    }

    pub fn amplitudes(&self) -> &CVector {
        &self.amplitudes
    }

    pub fn density(&self) -> DensityMatrix {
        DensityMatrix {
            dims: self.dims,
            matrix: PsdMatrix::from_trusted(outer(&self.amplitudes)),
        }
    }
}

/// Unit-trace PSD operator on `C^dA ⊗ C^dB`.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    dims: (usize, usize),
    matrix: PsdMatrix,
}

impl DensityMatrix {
    pub fn new(matrix: CMatrix, dims: (usize, usize), tol: &Tolerances) -> Result<Self> {
        let n = dims.0 * dims.1;
        if matrix.nrows() != n || matrix.ncols() != n {
            return Err(Error::DimensionMismatch(format!(
                "{}x{} matrix for a {}x{} system",
                matrix.nrows(),
                matrix.ncols(),
                dims.0,
                dims.1
            )));
        }
        let matrix = PsdMatrix::new(matrix, tol)?;
        let trace = matrix.as_matrix().trace();
        if (trace.re - 1.0).abs() > tol.norm || trace.im.abs() > tol.norm {
            return Err(Error::NotNormalized { norm: trace.re });
        }
        Ok(Self { dims, matrix })
    }

    pub fn dims(&self) -> (usize, usize) {
        self.dims
    }

    pub fn as_matrix(&self) -> &CMatrix {
        self.matrix.as_matrix()
    }
}

/// Measurement operators on `C^dim` summing to the identity.
#[derive(Debug, Clone, PartialEq)]
pub struct Povm {
    dim: usize,
    elements: Vec<PsdMatrix>,
}

impl Povm {
    pub fn new(elements: Vec<CMatrix>, tol: &Tolerances) -> Result<Self> {
        let Some(first) = elements.first() else {
            return Err(Error::InvalidPovm("no elements".into()));
        };
        let dim = first.nrows();
        let mut checked = Vec::with_capacity(elements.len());
        for (x, m) in elements.into_iter().enumerate() {
            if m.nrows() != dim || m.ncols() != dim {
                return Err(Error::InvalidPovm(format!(
                    "element {x} is {}x{}, expected {dim}x{dim}",
                    m.nrows(),
                    m.ncols()
                )));
            }
            checked.push(PsdMatrix::new(m, tol).map_err(|e| Error::InvalidPovm(format!("element {x}: {e}")))?);
        }
        let povm = Self { dim, elements: checked };
        let deviation = max_abs_diff(&povm.sum(), &identity(dim));
        if deviation > tol.eig {
            return Err(Error::InvalidPovm(format!(
                "elements sum to the identity only within {deviation:.3e}"
            )));
        }
        Ok(povm)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    pub fn elements(&self) -> &[PsdMatrix] {
        &self.elements
    }

    pub fn sum(&self) -> CMatrix {
        self.elements
            .iter()
            .fold(CMatrix::zeros(self.dim, self.dim), |acc, e| acc + e.as_matrix())
    }
}

/// An entry that came out slightly negative and was clipped to zero.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClippedEntry {
    pub x: usize,
    pub y: usize,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Measurement {
    pub correlation: Correlation,
    pub clipped: Vec<ClippedEntry>,
}

/// `P_xy = tr(ρ (A_x ⊗ B_y))`.
pub fn correlation_from_measurement(
    rho: &DensityMatrix,
    povm_a: &Povm,
    povm_b: &Povm,
    tol: &Tolerances,
) -> Result<Measurement> {
    let (da, db) = rho.dims();
    if povm_a.dim() != da || povm_b.dim() != db {
        return Err(Error::DimensionMismatch(format!(
            "state is {da}x{db} but POVMs act on {} and {}",
            povm_a.dim(),
            povm_b.dim()
        )));
    }
    let r = rho.as_matrix();
    let mut entries = DMatrix::zeros(povm_a.len(), povm_b.len());
    let mut clipped = Vec::new();
    for (x, ax) in povm_a.elements().iter().enumerate() {
        let ax = ax.as_matrix();
        for (y, by) in povm_b.elements().iter().enumerate() {
            let by = by.as_matrix();
            // Σ ρ[(i,j),(k,l)] A[k,i] B[l,j]
            let mut acc = ZERO;
            for i in 0..da {
                for k in 0..da {
                    let a_ki = ax[(k, i)];
                    if a_ki == ZERO {
                        continue;
                    }
                    for j in 0..db {
                        for l in 0..db {
                            acc += r[(i * db + j, k * db + l)] * a_ki * by[(l, j)];
                        }
                    }
                }
            }
            let mut value = acc.re;
            if value < 0.0 {
                if value < -tol.psd {
                    return Err(Error::InvalidCorrelation(format!(
                        "probability ({x}, {y}) = {value:.3e} is negative"
                    )));
                }
                clipped.push(ClippedEntry { x, y, value });
                value = 0.0;
            }
            entries[(x, y)] = value;
        }
    }
    Ok(Measurement {
        correlation: Correlation::new(entries, tol)?,
        clipped,
    })
}

/// `Σ_i |ii⟩ / √d`.
pub fn maximally_entangled(d: usize) -> PureState {
    assert!(d >= 2, "maximally entangled state needs d >= 2");
    let mut v = CVector::zeros(d * d);
    let amp = c(1.0 / (d as f64).sqrt());
    for i in 0..d {
        v[i * d + i] = amp;
    }
    PureState { dims: (d, d), amplitudes: v }
}

/// `Σ_i √λ_i |ii⟩` in the computational bases.
pub fn schmidt_state(lambdas: &[f64], d: usize, tol: &Tolerances) -> Result<PureState> {
    validate_spectrum(lambdas, d, tol)?;
    let mut v = CVector::zeros(d * d);
    for (i, l) in lambdas.iter().enumerate() {
        v[i * d + i] = c(l.sqrt());
    }
    PureState::new(v, (d, d), tol)
}

/// `⟨ψ|ρ|ψ⟩`, clipped to `[0, 1]`.
pub fn fidelity_with_pure(rho: &DensityMatrix, psi: &PureState, tol: &Tolerances) -> Result<f64> {
    if rho.dims() != psi.dims() {
        return Err(Error::DimensionMismatch(format!(
            "state dims {:?} vs {:?}",
            rho.dims(),
            psi.dims()
        )));
    }
    let v = psi.amplitudes();
    let value = v.dotc(&(rho.as_matrix() * v));
    if value.im.abs() > tol.herm {
        return Err(Error::NotHermitian { deviation: value.im.abs() });
    }
    Ok(value.re.clamp(0.0, 1.0))
}

fn check_probability(p: f64) -> Result<()> {
    if (0.0..=1.0).contains(&p) {
        Ok(())
    } else {
        Err(Error::InvalidProbability(p))
    }
}

/// `(1−p)ρ + p·I/dim`.
pub fn depolarize(rho: &DensityMatrix, p: f64) -> Result<DensityMatrix> {
    check_probability(p)?;
    let n = rho.as_matrix().nrows();
    let mixed = rho.as_matrix() * c(1.0 - p) + identity(n) * c(p / n as f64);
    Ok(DensityMatrix {
        dims: rho.dims(),
        matrix: PsdMatrix::from_trusted(mixed),
    })
}

/// Mixes every element toward identity: `(1−p)A_x + p·tr(A_x)/dim · I`.
pub fn perturb_povm(povm: &Povm, p: f64) -> Result<Povm> {
    check_probability(p)?;
    let dim = povm.dim();
    let elements = povm
        .elements()
        .iter()
        .map(|e| {
            let m = e.as_matrix();
            let flat = m.trace() * c(p / dim as f64);
            PsdMatrix::from_trusted(m * c(1.0 - p) + identity(dim) * flat)
        })
        .collect();
    Ok(Povm { dim, elements })
}

/// Projective measurement in the computational basis.
pub fn computational_basis(dim: usize) -> Povm {
    let elements = (0..dim)
        .map(|i| {
            let mut m = CMatrix::zeros(dim, dim);
            m[(i, i)] = ONE;
            PsdMatrix::from_trusted(m)
        })
        .collect();
    Povm { dim, elements }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{kron, partial_trace, schmidt_decompose, symmetrize, Keep};
    use crate::random;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn tol() -> Tolerances {
        Tolerances::default()
    }

    fn random_povm(rng: &mut ChaCha8Rng, dim: usize, outcomes: usize) -> Povm {
        Povm::new(random::povm_elements(rng, dim, outcomes, 1), &tol()).unwrap()
    }

    fn random_density(rng: &mut ChaCha8Rng, dims: (usize, usize)) -> DensityMatrix {
        let n = dims.0 * dims.1;
        DensityMatrix::new(random::density(rng, n, n), dims, &tol()).unwrap()
    }

    #[test]
    fn trivial_measurement_gives_unit_correlation() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let rho = random_density(&mut rng, (2, 3));
        let a = Povm::new(vec![identity(2)], &tol()).unwrap();
        let b = Povm::new(vec![identity(3)], &tol()).unwrap();
        let m = correlation_from_measurement(&rho, &a, &b, &tol()).unwrap();
        assert_eq!(m.correlation.m(), 1);
        assert!((m.correlation.get(0, 0) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn maximally_mixed_state_gives_uniform_correlation() {
        let rho = DensityMatrix::new(identity(4) * c(0.25), (2, 2), &tol()).unwrap();
        let z = computational_basis(2);
        let m = correlation_from_measurement(&rho, &z, &z, &tol()).unwrap();
        assert!(m.correlation.entries().iter().all(|v| (v - 0.25).abs() < 1e-15));
        assert!(m.clipped.is_empty());
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let rho = maximally_entangled(2).density();
        let z3 = computational_basis(3);
        assert!(matches!(
            correlation_from_measurement(&rho, &z3, &z3, &tol()),
            Err(Error::DimensionMismatch(_))
        ));
    }

    #[test]
    fn invalid_povms_are_rejected() {
        let half = identity(2) * c(0.5);
        assert!(matches!(Povm::new(vec![half.clone()], &tol()), Err(Error::InvalidPovm(_))));
        let neg = crate::linalg::diag_real(&[2.0, -1.0]);
        assert!(matches!(
            Povm::new(vec![neg, crate::linalg::diag_real(&[-1.0, 2.0])], &tol()),
            Err(Error::InvalidPovm(_))
        ));
        assert!(matches!(Povm::new(vec![], &tol()), Err(Error::InvalidPovm(_))));
    }

    #[test]
    fn maximally_entangled_examples() {
        let phi = maximally_entangled(2);
        let h = 0.5_f64.sqrt();
        let expected = [h, 0.0, 0.0, h];
        for (a, e) in phi.amplitudes().iter().zip(expected) {
            assert!((a.re - e).abs() < 1e-15 && a.im == 0.0);
        }
        let s = schmidt_decompose(maximally_entangled(3).amplitudes(), (3, 3), &tol()).unwrap();
        assert!(s.coeffs.iter().all(|v| (v - 1.0 / 3f64.sqrt()).abs() < 1e-14));
        for d in 2..=6 {
            let rho = maximally_entangled(d).density();
            let reduced = partial_trace(rho.as_matrix(), (d, d), Keep::A).unwrap();
            assert!(max_abs_diff(&reduced, &(identity(d) / c(d as f64))) < 1e-15);
        }
    }

    #[test]
    fn schmidt_state_examples() {
        let s = schmidt_state(&[0.5, 0.5], 2, &tol()).unwrap();
        assert!((s.amplitudes() - maximally_entangled(2).amplitudes()).norm() < 1e-15);
        let s = schmidt_state(&[0.75, 0.25], 2, &tol()).unwrap();
        let expected = [3f64.sqrt() / 2.0, 0.0, 0.0, 0.5];
        for (a, e) in s.amplitudes().iter().zip(expected) {
            assert!((a.re - e).abs() < 1e-16);
        }
        assert!(matches!(schmidt_state(&[0.25, 0.75], 2, &tol()), Err(Error::InvalidSpectrum(_))));
    }

    #[test]
    fn schmidt_state_round_trips_spectrum() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for d in 2..=6 {
            for _ in 0..10 {
                let mut l: Vec<f64> = (0..d).map(|_| rand::Rng::gen_range(&mut rng, 0.01..1.0)).collect();
                let total: f64 = l.iter().sum();
                l.iter_mut().for_each(|v| *v /= total);
                l.sort_by(|a, b| b.total_cmp(a));
                let psi = schmidt_state(&l, d, &tol()).unwrap();
                let s = schmidt_decompose(psi.amplitudes(), (d, d), &tol()).unwrap();
                for (coef, lam) in s.coeffs.iter().zip(&l) {
                    assert!((coef * coef - lam).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn fidelity_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let psi = PureState::new(random::unit_vector(&mut rng, 4), (2, 2), &tol()).unwrap();
        assert!((fidelity_with_pure(&psi.density(), &psi, &tol()).unwrap() - 1.0).abs() < 1e-14);
        let mixed = DensityMatrix::new(identity(4) * c(0.25), (2, 2), &tol()).unwrap();
        assert!((fidelity_with_pure(&mixed, &psi, &tol()).unwrap() - 0.25).abs() < 1e-15);

        let phi = maximally_entangled(2);
        for p in [0.0, 0.1, 0.37, 1.0] {
            let noisy = depolarize(&phi.density(), p).unwrap();
            let f = fidelity_with_pure(&noisy, &phi, &tol()).unwrap();
            assert!((f - ((1.0 - p) + p / 4.0)).abs() < 1e-14);
        }
        assert!(matches!(
            fidelity_with_pure(&mixed, &maximally_entangled(3), &tol()),
            Err(Error::DimensionMismatch(_))
        ));
    }

    #[test]
    fn depolarize_endpoints_and_invariants() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let rho = random_density(&mut rng, (2, 3));
        assert_eq!(depolarize(&rho, 0.0).unwrap().as_matrix(), rho.as_matrix());
        let full = depolarize(&rho, 1.0).unwrap();
        assert!(max_abs_diff(full.as_matrix(), &(identity(6) / c(6.0))) < 1e-15);
        for i in 0..=10 {
            let p = i as f64 / 10.0;
            let out = depolarize(&rho, p).unwrap();
            // re-validating checks PSD and unit trace
            DensityMatrix::new(out.as_matrix().clone(), (2, 3), &tol()).unwrap();
        }
        assert!(matches!(depolarize(&rho, 1.5), Err(Error::InvalidProbability(_))));
        assert!(matches!(depolarize(&rho, -0.1), Err(Error::InvalidProbability(_))));
    }

    #[test]
    fn perturb_povm_behaviour() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let povm = random_povm(&mut rng, 3, 5);
        assert_eq!(perturb_povm(&povm, 0.0).unwrap(), povm);
        let flat = perturb_povm(&povm, 1.0).unwrap();
        for (e, orig) in flat.elements().iter().zip(povm.elements()) {
            let t = orig.as_matrix().trace() / c(3.0);
            assert!(max_abs_diff(e.as_matrix(), &(identity(3) * t)) < 1e-14);
        }
        for p in [0.1, 0.5, 0.9] {
            let noisy = perturb_povm(&povm, p).unwrap();
            assert!(max_abs_diff(&noisy.sum(), &identity(3)) < 1e-13);
        }
        assert!(matches!(perturb_povm(&povm, 2.0), Err(Error::InvalidProbability(_))));
    }

    #[test]
    fn marginals_follow_reduced_states() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let rho = random_density(&mut rng, (3, 2));
        let a = random_povm(&mut rng, 3, 4);
        let b = random_povm(&mut rng, 2, 4);
        let m = correlation_from_measurement(&rho, &a, &b, &tol()).unwrap();
        let rho_a = partial_trace(rho.as_matrix(), (3, 2), Keep::A).unwrap();
        for (x, ax) in a.elements().iter().enumerate() {
            let expected = (&rho_a * ax.as_matrix()).trace().re;
            assert!((m.correlation.row_marginals()[x] - expected).abs() < tol().eig);
        }
    }

    #[test]
    fn product_states_give_product_correlations() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let ra = random::density(&mut rng, 2, 2);
        let rb = random::density(&mut rng, 3, 3);
        let rho = DensityMatrix::new(symmetrize(&kron(&ra, &rb)), (2, 3), &tol()).unwrap();
        let a = random_povm(&mut rng, 2, 4);
        let b = random_povm(&mut rng, 3, 4);
        let m = correlation_from_measurement(&rho, &a, &b, &tol()).unwrap();
        let rows = m.correlation.row_marginals();
        let cols = m.correlation.column_marginals();
        for x in 0..4 {
            for y in 0..4 {
                assert!((m.correlation.get(x, y) - rows[x] * cols[y]).abs() < 1e-12);
            }
        }
    }
}
