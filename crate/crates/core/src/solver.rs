//! Numerical search for PSD factorizations.
//!
//! Factors are stored as Gram matrices, `C_x = G_x G_x†` and
//! `D_y = H_y H_y†`. The search first alternates between the two families:
//! with `D` fixed the objective `Σ_xy (tr(C_x D_y) − T_xy)²` is convex in
//! `C`, and each block is solved by accelerated projected gradient over the
//! PSD cone. First-order steps slow to a crawl once the residual is small,
//! so the run finishes with a damped Gauss-Newton polish on the Gram factors,
//! truncated to their numerical rank.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::design::Correlation;
use crate::factorization::PsdFactorization;
use nalgebra::{DMatrix, DVector};

use crate::linalg::{c, eigh_unchecked, symmetrize, trace_product, CMatrix, C64};
use crate::random;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    /// Stop once `max_xy |tr(C_x D_y) − T_xy|` drops to this value.
    pub tol: f64,
    /// Outer iterations; one iteration updates both families.
    pub max_iters: usize,
    /// Projected-gradient steps per block per iteration.
    pub inner_steps: usize,
    /// Alternating iterations before switching to the joint polish.
    pub alternating_iters: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tol: 1e-7,
            max_iters: 5000,
            inner_steps: 20,
            alternating_iters: 200,
        }
    }
}

#[derive(Debug, Clone)]
pub struct FactorizationRun {
    pub factorization: PsdFactorization,
    /// Max-abs entrywise error of the returned factorization.
    pub residual: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Searches for an `r×r` PSD factorization of `target` from a seeded random start.
///
/// Initial Gram factors have standard complex Gaussian entries, rescaled so
/// that `tr C_x = √r·p_x` and `tr D_y = √r·q_y` for the row and column
/// marginals `p`, `q`. Non-convergence is reported in the result.
pub fn numerical_factorize(target: &Correlation, r: usize, seed: u64, opts: &SolverOptions) -> FactorizationRun {
    assert!(r >= 1, "factor size must be at least 1");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scale = (r as f64).sqrt();
    let mut init_side = |marginals: Vec<f64>| -> Vec<CMatrix> {
        marginals
            .into_iter()
            .map(|p| {
                let g = random::ginibre(&mut rng, r, r);
                let t = g.norm_squared();
                g * c((scale * p.max(1e-12) / t).sqrt())
            })
            .collect()
    };
    let g = init_side(target.row_marginals());
    let h = init_side(target.column_marginals());
    run(target, g, h, opts)
}

/// Runs the same search starting from a given factorization.
pub fn refine_factorization(target: &Correlation, init: &PsdFactorization, opts: &SolverOptions) -> FactorizationRun {
    let g = init.c().iter().map(|m| gram_factor(m.as_matrix())).collect();
    let h = init.d().iter().map(|m| gram_factor(m.as_matrix())).collect();
    run(target, g, h, opts)
}

/// `G` with `G G† = P`, where `P` is the PSD projection of `m`
/// (symmetrize, then clip negative eigenvalues at zero).
fn gram_factor(m: &CMatrix) -> CMatrix {
    let eig = eigh_unchecked(&symmetrize(m));
    let mut g = eig.vectors.clone();
    for (j, &v) in eig.values.iter().enumerate() {
        let s = c(v.max(0.0).sqrt());
        g.column_mut(j).iter_mut().for_each(|e| *e *= s);
    }
    g
}

fn gram(factors: &[CMatrix]) -> Vec<CMatrix> {
    factors.iter().map(|g| g * g.adjoint()).collect()
}

fn max_residual(target: &Correlation, cs: &[CMatrix], ds: &[CMatrix]) -> f64 {
    let mut worst = 0.0_f64;
    for (x, cx) in cs.iter().enumerate() {
        for (y, dy) in ds.iter().enumerate() {
            worst = worst.max((trace_product(cx, dy).re - target.get(x, y)).abs());
        }
    }
    worst
}

fn run(target: &Correlation, g: Vec<CMatrix>, h: Vec<CMatrix>, opts: &SolverOptions) -> FactorizationRun {
    let mut cs = gram(&g);
    let mut ds = gram(&h);
    let mut iterations = 0;
    let mut residual = max_residual(target, &cs, &ds);
    let mut polish_pending = true;
    while residual > opts.tol && iterations < opts.max_iters {
        if polish_pending && iterations >= opts.alternating_iters {
            polish_pending = false;
            let budget = opts.max_iters - iterations;
            let (polished_c, polished_d, used) = polish(target, &cs, &ds, opts.tol, budget);
            iterations += used;
            let polished = max_residual(target, &polished_c, &polished_d);
            if polished < residual {
                cs = polished_c;
                ds = polished_d;
                residual = polished;
            }
            continue;
        }
        alternate(target, &mut cs, &mut ds, opts.inner_steps);
        iterations += 1;
        residual = max_residual(target, &cs, &ds);
    }
    FactorizationRun {
        residual,
        converged: residual <= opts.tol,
        iterations,
        factorization: PsdFactorization::from_trusted(cs, ds),
    }
}

/// One sweep: re-solve every `C_x` with `D` fixed, then every `D_y` with `C` fixed.
fn alternate(target: &Correlation, cs: &mut [CMatrix], ds: &mut [CMatrix], inner_steps: usize) {
    let m = target.m();
    for (x, cx) in cs.iter_mut().enumerate() {
        let row: Vec<f64> = (0..m).map(|y| target.get(x, y)).collect();
        solve_block(cx, ds, &row, inner_steps);
    }
    for (y, dy) in ds.iter_mut().enumerate() {
        let col: Vec<f64> = (0..m).map(|x| target.get(x, y)).collect();
        solve_block(dy, cs, &col, inner_steps);
    }
}

/// Gram factor keeping only eigenvalues above `1e-10 · λ_max`.
fn truncated_factor(m: &CMatrix) -> CMatrix {
    let eig = eigh_unchecked(m);
    let top = eig.values.max().max(0.0);
    let keep: Vec<usize> = (0..eig.values.len())
        .filter(|&j| eig.values[j] > 1e-10 * top)
        .collect();
    if keep.is_empty() {
        return CMatrix::zeros(m.nrows(), 1);
    }
    CMatrix::from_columns(
        &keep
            .iter()
            .map(|&j| eig.vectors.column(j) * c(eig.values[j].sqrt()))
            .collect::<Vec<_>>(),
    )
}

/// Joint damped Gauss-Newton on all Gram factors at their current numerical
/// ranks. Zero targets make the square loss flat to second order, where
/// alternating first-order sweeps slow to `O(1/t)`; Gauss-Newton keeps a
/// linear rate there. Returns the new factors and the iterations spent.
fn polish(
    target: &Correlation,
    cs: &[CMatrix],
    ds: &[CMatrix],
    tol: f64,
    budget: usize,
) -> (Vec<CMatrix>, Vec<CMatrix>, usize) {
    let m = target.m();
    let mut factors: Vec<CMatrix> = cs.iter().chain(ds).map(truncated_factor).collect();
    let offsets: Vec<usize> = factors
        .iter()
        .scan(0, |acc, f| {
            let start = *acc;
            *acc += 2 * f.len();
            Some(start)
        })
        .collect();
    let unknowns: usize = factors.iter().map(|f| 2 * f.len()).sum();
    let residuals = |fs: &[CMatrix]| -> (Vec<CMatrix>, DVector<f64>) {
        let grams = gram(fs);
        let e = DVector::from_fn(m * m, |k, _| {
            let (x, y) = (k / m, k % m);
            pairing(&grams[x], &grams[m + y]) - target.get(x, y)
        });
        (grams, e)
    };
    let (mut grams, mut errors) = residuals(&factors);
    let mut value = errors.norm_squared();
    let mut mu = 1e-6 * value.max(1e-300);
    let mut used = 0;
    while used < budget && errors.amax() > tol {
        used += 1;
        let mut jac = DMatrix::<f64>::zeros(m * m, unknowns);
        for x in 0..m {
            for y in 0..m {
                let row = x * m + y;
                // d tr(G G† D) = 2 Re tr(Δ† D G)
                let blocks = [(x, &grams[m + y]), (m + y, &grams[x])];
                for (owner, other) in blocks {
                    let grad = other * &factors[owner] * c(2.0);
                    for (k, v) in grad.iter().enumerate() {
                        jac[(row, offsets[owner] + 2 * k)] = v.re;
                        jac[(row, offsets[owner] + 2 * k + 1)] = v.im;
                    }
                }
            }
        }
        let normal = &jac * jac.transpose();
        let mut accepted = false;
        for _ in 0..40 {
            let damped = &normal + DMatrix::<f64>::identity(m * m, m * m) * mu;
            let Some(chol) = damped.cholesky() else {
                mu *= 4.0;
                continue;
            };
            let delta = jac.transpose() * chol.solve(&errors);
            let candidate: Vec<CMatrix> = factors
                .iter()
                .zip(&offsets)
                .map(|(f, &off)| {
                    CMatrix::from_fn(f.nrows(), f.ncols(), |i, j| {
                        let k = i + j * f.nrows();
                        f[(i, j)] - C64::new(delta[off + 2 * k], delta[off + 2 * k + 1])
                    })
                })
                .collect();
            let (next_grams, next_errors) = residuals(&candidate);
            let next_value = next_errors.norm_squared();
            if next_value < value {
                factors = candidate;
                grams = next_grams;
                errors = next_errors;
                value = next_value;
                mu = (mu / 3.0).max(1e-300);
                accepted = true;
                break;
            }
            mu *= 4.0;
        }
        if !accepted {
            break;
        }
    }
    let (c_part, d_part) = grams.split_at(m);
    (c_part.to_vec(), d_part.to_vec(), used)
}

/// Symmetrize, then clip negative eigenvalues at zero.
fn project_psd(m: &CMatrix) -> CMatrix {
    let eig = eigh_unchecked(m);
    symmetrize(&eig.map(|v| v.max(0.0)))
}

fn pairing(a: &CMatrix, b: &CMatrix) -> f64 {
    trace_product(a, b).re
}

/// Minimizes `Σ_y (tr(C D_y) − t_y)²` over PSD `C` by accelerated
/// projected gradient with step `1/L`, `L = 2 λ_max([tr(D_y D_y')])`.
fn solve_block(cx: &mut CMatrix, others: &[CMatrix], targets: &[f64], steps: usize) {
    let k = others.len();
    let kernel = DMatrix::<f64>::from_fn(k, k, |i, j| pairing(&others[i], &others[j]));
    let lipschitz = 2.0 * kernel.symmetric_eigenvalues().max();
    if !(lipschitz > 0.0) {
        return;
    }
    let gradient = |c_: &CMatrix| -> CMatrix {
        others
            .iter()
            .zip(targets)
            .fold(CMatrix::zeros(c_.nrows(), c_.nrows()), |acc, (o, t)| {
                acc + o * c(2.0 * (pairing(c_, o) - t))
            })
    };
    let mut current = cx.clone();
    let mut lookahead = cx.clone();
    let mut momentum = 1.0_f64;
    for _ in 0..steps {
        let next = project_psd(&(&lookahead - gradient(&lookahead) * c(1.0 / lipschitz)));
        let next_momentum = 0.5 * (1.0 + (1.0 + 4.0 * momentum * momentum).sqrt());
        lookahead = &next + (&next - &current) * c((momentum - 1.0) / next_momentum);
        current = next;
        momentum = next_momentum;
    }
    *cx = current;
}
