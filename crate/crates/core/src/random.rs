//! Seeded random ensembles used by experiments and tests.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::linalg::{c, eigh_unchecked, symmetrize, CMatrix, CVector, C64};

fn gaussian<R: Rng + ?Sized>(rng: &mut R) -> C64 {
    C64::new(rng.sample(StandardNormal), rng.sample(StandardNormal))
}

/// Matrix with i.i.d. standard complex Gaussian entries.
pub fn ginibre<R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize) -> CMatrix {
    CMatrix::from_fn(rows, cols, |_, _| gaussian(rng))
}

pub fn unit_vector<R: Rng + ?Sized>(rng: &mut R, n: usize) -> CVector {
    let v = CVector::from_fn(n, |_, _| gaussian(rng));
    let norm = v.norm();
    v / c(norm)
}

/// Haar-distributed unitary (QR of a Ginibre matrix with phase correction).
pub fn unitary<R: Rng + ?Sized>(rng: &mut R, n: usize) -> CMatrix {
    let qr = ginibre(rng, n, n).qr();
    let mut q = qr.q();
    let r = qr.r();
    for j in 0..n {
        let d = r[(j, j)];
        let phase = if d.norm() > 0.0 { d / d.norm() } else { c(1.0) };
        q.column_mut(j).iter_mut().for_each(|e| *e *= phase);
    }
    q
}

/// Invertible matrix with condition number at most `max_condition`.
pub fn invertible<R: Rng + ?Sized>(rng: &mut R, n: usize, max_condition: f64) -> CMatrix {
    loop {
        let m = ginibre(rng, n, n);
        let sv = m.singular_values();
        let (lo, hi) = sv.iter().fold((f64::INFINITY, 0.0_f64), |(lo, hi), &s| (lo.min(s), hi.max(s)));
        if lo > 0.0 && hi / lo <= max_condition {
            return m;
        }
    }
}

/// `G G†` with `G` of shape `n×rank`.
pub fn psd<R: Rng + ?Sized>(rng: &mut R, n: usize, rank: usize) -> CMatrix {
    let g = ginibre(rng, n, rank);
    &g * g.adjoint()
}

/// Random density matrix of the given rank (induced measure).
pub fn density<R: Rng + ?Sized>(rng: &mut R, n: usize, rank: usize) -> CMatrix {
    let m = psd(rng, n, rank);
    let t = m.trace();
    m / t
}

/// Random POVM with `outcomes` elements on `C^dim`, each of rank `rank`:
/// `A_x = S^{-1/2} G_x G_x† S^{-1/2}` with `S = Σ G_x G_x†`.
pub fn povm_elements<R: Rng + ?Sized>(rng: &mut R, dim: usize, outcomes: usize, rank: usize) -> Vec<CMatrix> {
    loop {
        let raw: Vec<CMatrix> = (0..outcomes).map(|_| psd(rng, dim, rank)).collect();
        let sum = raw.iter().fold(CMatrix::zeros(dim, dim), |acc, m| acc + m);
        let eig = eigh_unchecked(&sum);
        if eig.values[0] <= 1e-8 * eig.values[dim - 1] {
            continue;
        }
        let inv_sqrt = eig.map(|v| v.powf(-0.5));
        return raw
            .iter()
            .map(|m| symmetrize(&(&inv_sqrt * m * &inv_sqrt)))
            .collect();
    }
}
