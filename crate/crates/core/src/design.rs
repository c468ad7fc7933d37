//! Target correlations and protocol parameters.
//!
//! `build_p` is the `2d×2d` correlation that pins down the maximally
//! entangled state, `build_q` the `3d×3d` correlation for an arbitrary
//! Schmidt spectrum. `solve_parameters` chooses `(a, z)` so that the
//! canonical diagonal of `Q` equals `√λ`, and `recover_spectrum` reads the
//! spectrum back out of an observed `Q`.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::tolerance::Tolerances;

/// Square matrix of joint outcome probabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct Correlation {
    entries: DMatrix<f64>,
}

impl Correlation {
    /// Validates squareness, nonnegativity and normalization (within `tol.norm`).
    pub fn new(entries: DMatrix<f64>, tol: &Tolerances) -> Result<Self> {
        if !entries.is_square() || entries.nrows() == 0 {
            return Err(Error::InvalidCorrelation(format!(
                "must be square and nonempty, got {}x{}",
                entries.nrows(),
                entries.ncols()
            )));
        }
        if let Some(bad) = entries.iter().find(|v| !v.is_finite() || **v < 0.0) {
            return Err(Error::InvalidCorrelation(format!("entry {bad} is negative or not finite")));
        }
        let total = entries.sum();
        if (total - 1.0).abs() > tol.norm {
            return Err(Error::InvalidCorrelation(format!("entries sum to {total:.17}, not 1")));
        }
        Ok(Self { entries })
    }

    pub fn m(&self) -> usize {
        self.entries.nrows()
    }

    pub fn entries(&self) -> &DMatrix<f64> {
        &self.entries
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.entries[(x, y)]
    }

    pub fn row_marginals(&self) -> Vec<f64> {
        self.entries.row_iter().map(|r| r.sum()).collect()
    }

    pub fn column_marginals(&self) -> Vec<f64> {
        self.entries.column_iter().map(|c| c.sum()).collect()
    }

    pub fn max_abs_diff(&self, other: &Correlation) -> f64 {
        max_abs_diff(&self.entries, &other.entries)
    }

    /// Total-variation distance `½ Σ |P − Q|`.
    pub fn total_variation(&self, other: &Correlation) -> f64 {
        0.5 * self
            .entries
            .iter()
            .zip(other.entries.iter())
            .map(|(a, b)| (a - b).abs())
            .sum::<f64>()
    }
}

pub(crate) fn max_abs_diff(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Protocol parameters for the `3d×3d` correlation.
#[derive(Debug, Clone, PartialEq)]
pub struct ProtocolParameters {
    pub d: usize,
    pub a: f64,
    pub z: Vec<f64>,
    pub gamma: Vec<f64>,
}

/// `γ_i = √(a/d) + √(d/a)·(d+1)·z_i`
pub fn canonical_diagonal(d: usize, a: f64, z: &[f64]) -> Vec<f64> {
    let df = d as f64;
    z.iter()
        .map(|&zi| (a / df).sqrt() + (df / a).sqrt() * (df + 1.0) * zi)
        .collect()
}

/// `a + 2(d+1)‖z‖₁ + (d(d+1)²/a)‖z‖₂²`, the total mass of `Q`.
pub fn normalization(d: usize, a: f64, z: &[f64]) -> f64 {
    let df = d as f64;
    let l1: f64 = z.iter().sum();
    let l2: f64 = z.iter().map(|v| v * v).sum();
    a + 2.0 * (df + 1.0) * l1 + df * (df + 1.0).powi(2) / a * l2
}

impl ProtocolParameters {
    /// Builds parameters from `(d, a, z)`, deriving `γ`.
    pub fn new(d: usize, a: f64, z: Vec<f64>, tol: &Tolerances) -> Result<Self> {
        let gamma = canonical_diagonal(d, a, &z);
        let params = Self { d, a, z, gamma };
        params.validate(tol)?;
        Ok(params)
    }

    pub fn validate(&self, tol: &Tolerances) -> Result<()> {
        let d = self.d;
        if d < 2 {
            return Err(Error::InvalidParameters(format!("d = {d} must be at least 2")));
        }
        if self.z.len() != d || self.gamma.len() != d {
            return Err(Error::InvalidParameters(format!(
                "z and gamma must have length d = {d}, got {} and {}",
                self.z.len(),
                self.gamma.len()
            )));
        }
        if !(self.a > 0.0 && self.a < 1.0) {
            return Err(Error::InvalidParameters(format!("a = {} must lie in (0, 1)", self.a)));
        }
        if let Some(zi) = self.z.iter().find(|v| !(**v > 0.0)) {
            return Err(Error::InvalidParameters(format!("z entry {zi} is not positive")));
        }
        let expected = canonical_diagonal(d, self.a, &self.z);
        let gamma_err = expected
            .iter()
            .zip(&self.gamma)
            .map(|(e, g)| (e - g).abs())
            .fold(0.0, f64::max);
        if gamma_err > tol.eig {
            return Err(Error::InvalidParameters(format!(
                "gamma disagrees with (a, z) by {gamma_err:.3e}"
            )));
        }
        let total = normalization(d, self.a, &self.z);
        if (total - 1.0).abs() > tol.norm {
            return Err(Error::InvalidParameters(format!(
                "normalization a + 2(d+1)|z|_1 + d(d+1)^2/a |z|_2^2 = {total:.17}, not 1"
            )));
        }
        Ok(())
    }

    /// `λ_i = γ_i²`
    pub fn spectrum(&self) -> Vec<f64> {
        self.gamma.iter().map(|g| g * g).collect()
    }
}

/// Checks that `lambdas` is a length-`d`, strictly positive, nonincreasing
/// probability vector.
pub fn validate_spectrum(lambdas: &[f64], d: usize, tol: &Tolerances) -> Result<()> {
    if d < 2 {
        return Err(Error::InvalidSpectrum(format!("d = {d} must be at least 2")));
    }
    if lambdas.len() != d {
        return Err(Error::InvalidSpectrum(format!(
            "expected {d} Schmidt weights, got {}",
            lambdas.len()
        )));
    }
    if let Some(v) = lambdas.iter().find(|v| !(v.is_finite() && **v > 0.0)) {
        return Err(Error::InvalidSpectrum(format!(
            "weight {v} is not positive (the Schmidt rank must equal d)"
        )));
    }
    if lambdas.windows(2).any(|w| w[0] < w[1]) {
        return Err(Error::InvalidSpectrum("weights must be sorted in descending order".into()));
    }
    let total: f64 = lambdas.iter().sum();
    if (total - 1.0).abs() > tol.norm {
        return Err(Error::InvalidSpectrum(format!("weights sum to {total:.17}, not 1")));
    }
    Ok(())
}

/// `P = 1/(d(d+1)²) · [[d² I, e eᵀ], [e eᵀ, I]]`, of size `2d`.
pub fn build_p(d: usize) -> Correlation {
    assert!(d >= 2, "build_p needs d >= 2");
    Correlation {
        entries: p_entries(d),
    }
}

fn p_entries(d: usize) -> DMatrix<f64> {
    let df = d as f64;
    let scale = 1.0 / (df * (df + 1.0).powi(2));
    DMatrix::from_fn(2 * d, 2 * d, |x, y| {
        let top = x < d;
        let left = y < d;
        let v = match (top, left) {
            (true, true) => {
                if x == y {
                    df * df
                } else {
                    0.0
                }
            }
            (false, false) => {
                if x == y {
                    1.0
                } else {
                    0.0
                }
            }
            _ => 1.0,
        };
        v * scale
    })
}

fn q_entries(d: usize, a: f64, z: &[f64]) -> DMatrix<f64> {
    let df = d as f64;
    let p = p_entries(d);
    let corner = df * (df + 1.0).powi(2) / a;
    DMatrix::from_fn(3 * d, 3 * d, |x, y| {
        match (x / d, y / d) {
            (0..=1, 0..=1) => a * p[(x, y)],
            // e zᵀ and its transpose
            (0, 2) => z[y - 2 * d],
            (2, 0) => z[x - 2 * d],
            // diag(z) blocks
            (1, 2) => {
                if x - d == y - 2 * d {
                    z[x - d]
                } else {
                    0.0
                }
            }
            (2, 1) => {
                if y - d == x - 2 * d {
                    z[y - d]
                } else {
                    0.0
                }
            }
            _ => {
                if x == y {
                    corner * z[x - 2 * d].powi(2)
                } else {
                    0.0
                }
            }
        }
    })
}

/// `Q = [[a·P, (e zᵀ; diag z)], [(z eᵀ, diag z), d(d+1)²/a · diag(z)²]]`, of size `3d`.
pub fn build_q(params: &ProtocolParameters, tol: &Tolerances) -> Result<Correlation> {
    params.validate(tol)?;
    Correlation::new(q_entries(params.d, params.a, &params.z), tol)
}

/// Chooses `a = dλ_d/4`, `z_i = √λ_d/(2(d+1)) · (√λ_i − √λ_d/2)`, giving `γ_i = √λ_i`.
pub fn solve_parameters(lambdas: &[f64], d: usize, tol: &Tolerances) -> Result<ProtocolParameters> {
    validate_spectrum(lambdas, d, tol)?;
    let df = d as f64;
    let smallest = lambdas[d - 1];
    let root_smallest = smallest.sqrt();
    let a = df / 4.0 * smallest;
    let z: Vec<f64> = lambdas
        .iter()
        .map(|&l| root_smallest / (2.0 * (df + 1.0)) * (l.sqrt() - 0.5 * root_smallest))
        .collect();
    // √λ_i ≥ √λ_d > √λ_d/2, so every z_i is positive.
    assert!(z.iter().all(|&v| v > 0.0), "z must be positive for a positive spectrum");
    ProtocolParameters::new(d, a, z, tol)
}

/// Output of [`recover_spectrum`].
#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumRecovery {
    /// `γ_i²`, sorted descending.
    pub lambdas: Vec<f64>,
    /// Max of the entrywise rebuild error and the spread of the per-index `a` estimates.
    pub residual: f64,
    pub a: f64,
    pub z: Vec<f64>,
    pub a_spread: f64,
}

/// Reads `z` from the `diag(z)` blocks and `a` from the bottom-right corner,
/// without judging how well the structure matches.
pub fn estimate_structure(q: &Correlation, d: usize) -> Result<SpectrumRecovery> {
    if d < 2 || q.m() != 3 * d {
        return Err(Error::DimensionMismatch(format!(
            "expected a {}x{} correlation for d = {d}, got {}x{}",
            3 * d,
            3 * d,
            q.m(),
            q.m()
        )));
    }
    let df = d as f64;
    let e = q.entries();
    let z: Vec<f64> = (0..d)
        .map(|i| 0.5 * (e[(d + i, 2 * d + i)] + e[(2 * d + i, d + i)]))
        .collect();
    if let Some((i, zi)) = z.iter().enumerate().find(|(_, v)| !(**v > 0.0)) {
        return Err(Error::StructureMismatch(format!("diag(z) entry {i} is {zi}, not positive")));
    }
    let mut estimates = Vec::with_capacity(d);
    for i in 0..d {
        let corner = e[(2 * d + i, 2 * d + i)];
        if !(corner > 0.0) {
            return Err(Error::StructureMismatch(format!(
                "bottom-right diagonal entry {i} is {corner}, not positive"
            )));
        }
        estimates.push(df * (df + 1.0).powi(2) * z[i] * z[i] / corner);
    }
    let a = estimates.iter().sum::<f64>() / df;
    let a_spread = estimates.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
        - estimates.iter().cloned().fold(f64::INFINITY, f64::min);
    let rebuilt = q_entries(d, a, &z);
    let residual = max_abs_diff(&rebuilt, e).max(a_spread);
    let mut lambdas: Vec<f64> = canonical_diagonal(d, a, &z).iter().map(|g| g * g).collect();
    lambdas.sort_by(|x, y| y.total_cmp(x));
    Ok(SpectrumRecovery {
        lambdas,
        residual,
        a,
        z,
        a_spread,
    })
}

/// Inverts the block structure of `Q`; fails when the `a` estimates disagree
/// beyond `tol.cert`.
pub fn recover_spectrum(q: &Correlation, d: usize, tol: &Tolerances) -> Result<SpectrumRecovery> {
    let recovery = estimate_structure(q, d)?;
    if recovery.a_spread > tol.cert {
        return Err(Error::StructureMismatch(format!(
            "per-index estimates of a spread by {:.3e}",
            recovery.a_spread
        )));
    }
    Ok(recovery)
}

/// `Σ √P_xy √Q_xy`, clipped to `[0, 1]`.
pub fn bhattacharyya(p: &Correlation, q: &Correlation) -> Result<f64> {
    if p.m() != q.m() {
        return Err(Error::DimensionMismatch(format!(
            "correlations of size {} and {}",
            p.m(),
            q.m()
        )));
    }
    let s: f64 = p
        .entries
        .iter()
        .zip(q.entries.iter())
        .map(|(a, b)| (a * b).sqrt())
        .sum();
    Ok(s.clamp(0.0, 1.0))
}
