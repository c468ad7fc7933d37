//! End-to-end workflows: designing a protocol for a target spectrum,
//! certifying an observed correlation, and the empirical experiments
//! (noise sweeps, factorization uniqueness, randomized falsification).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::design::{
    bhattacharyya, build_p, build_q, estimate_structure, recover_spectrum, solve_parameters, Correlation,
    ProtocolParameters,
};
use crate::error::{Error, Result};
use crate::factorization::{analytic_factorization_p, analytic_factorization_q, canonicalize, realization_from_canonical};
use crate::quantum::{
    correlation_from_measurement, depolarize, fidelity_with_pure, maximally_entangled, perturb_povm, DensityMatrix,
    Measurement, Povm, PureState,
};
use crate::random;
use crate::solver::{numerical_factorize, SolverOptions};
use crate::tolerance::Tolerances;

/// Everything needed to run the protocol for one target state.
#[derive(Debug, Clone, PartialEq)]
pub struct ProtocolSpec {
    pub params: ProtocolParameters,
    pub q_ideal: Correlation,
    pub psi_ideal: PureState,
    pub povm_a: Povm,
    pub povm_b: Povm,
}

impl ProtocolSpec {
    pub fn d(&self) -> usize {
        self.params.d
    }
}

/// Builds `Q`, its canonical factorization and the realizing state and POVMs
/// for the Schmidt weights `lambdas` (descending, summing to one).
pub fn design_protocol(lambdas: &[f64], d: usize, tol: &Tolerances) -> Result<ProtocolSpec> {
    let params = solve_parameters(lambdas, d, tol)?;
    let q_ideal = build_q(&params, tol)?;
    let canonical = analytic_factorization_q(&params, tol)?;
    let realization = realization_from_canonical(&canonical, tol)?;
    let spec = ProtocolSpec {
        params,
        q_ideal,
        psi_ideal: realization.psi,
        povm_a: realization.povm_a,
        povm_b: realization.povm_b,
    };
    let simulated = simulate(&spec, 0.0, 0.0, tol)?.correlation;
    let deviation = simulated.max_abs_diff(&spec.q_ideal);
    if deviation > tol.eig {
        return Err(Error::InvalidParameters(format!(
            "designed measurements reproduce Q only within {deviation:.3e}"
        )));
    }
    Ok(spec)
}

/// Measures the designed state after depolarizing it with probability
/// `state_noise`, using POVMs mixed toward identity with `povm_noise`.
pub fn simulate(spec: &ProtocolSpec, state_noise: f64, povm_noise: f64, tol: &Tolerances) -> Result<Measurement> {
    let rho = depolarize(&spec.psi_ideal.density(), state_noise)?;
    let povm_a = perturb_povm(&spec.povm_a, povm_noise)?;
    let povm_b = perturb_povm(&spec.povm_b, povm_noise)?;
    correlation_from_measurement(&rho, &povm_a, &povm_b, tol)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Pass,
    Fail,
}

impl Verdict {
    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::Pass => "pass",
            Verdict::Fail => "fail",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CertificationReport {
    /// `Σ √(Q_obs Q_ideal)`; equals one only when the correlations coincide.
    pub saturation: f64,
    pub recovered_spectrum: Vec<f64>,
    pub structure_residual: f64,
    pub verdict: Verdict,
    pub diagnostics: Vec<String>,
}

/// Checks an observed `3d×3d` correlation against the one designed for `lambdas`.
///
/// Passes iff the Bhattacharyya coefficient is at least `1 − tol.cert` and
/// the block structure of `Q` is recovered with residual at most `tol.cert`.
pub fn certify(q_obs: &Correlation, lambdas: &[f64], d: usize, tol: &Tolerances) -> Result<CertificationReport> {
    if q_obs.m() != 3 * d {
        return Err(Error::DimensionMismatch(format!(
            "observed correlation is {}x{}, expected {}x{} for d = {d}",
            q_obs.m(),
            q_obs.m(),
            3 * d,
            3 * d
        )));
    }
    let q_ideal = build_q(&solve_parameters(lambdas, d, tol)?, tol)?;
    let saturation = bhattacharyya(q_obs, &q_ideal)?;
    let mut diagnostics = Vec::new();
    let (recovered_spectrum, structure_residual) = match recover_spectrum(q_obs, d, tol) {
        Ok(r) => (r.lambdas, r.residual),
        Err(strict) => {
            diagnostics.push(format!("structure check failed: {strict}"));
            match estimate_structure(q_obs, d) {
                Ok(r) => (r.lambdas, r.residual),
                Err(_) => (Vec::new(), f64::INFINITY),
            }
        }
    };
    if !recovered_spectrum.is_empty() {
        let gap = recovered_spectrum
            .iter()
            .zip(lambdas)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        diagnostics.push(format!("max |recovered - target| spectrum deviation {gap:.3e}"));
    }
    let verdict = if saturation >= 1.0 - tol.cert && structure_residual <= tol.cert {
        Verdict::Pass
    } else {
        Verdict::Fail
    };
    diagnostics.push(format!(
        "saturation deficit {:.3e}, structure residual {structure_residual:.3e}, threshold {:.1e}",
        1.0 - saturation,
        tol.cert
    ));
    Ok(CertificationReport {
        saturation,
        recovered_spectrum,
        structure_residual,
        verdict,
        diagnostics,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepRow {
    pub p: f64,
    pub saturation: f64,
    pub fidelity: f64,
}

/// For each depolarizing strength `p`, the saturation against the ideal `Q`
/// and the fidelity of the noisy state with the ideal one.
///
/// The channels are deterministic, so `seed` does not change the result; it
/// is accepted so sweeps share the experiment-driver signature.
pub fn robustness_sweep(
    lambdas: &[f64],
    d: usize,
    noise_grid: &[f64],
    _seed: u64,
    tol: &Tolerances,
) -> Result<Vec<SweepRow>> {
    if let Some(&p) = noise_grid.iter().find(|p| !(0.0..=1.0).contains(*p)) {
        return Err(Error::InvalidProbability(p));
    }
    let spec = design_protocol(lambdas, d, tol)?;
    noise_grid
        .par_iter()
        .map(|&p| {
            let observed = simulate(&spec, p, 0.0, tol)?.correlation;
            let noisy = depolarize(&spec.psi_ideal.density(), p)?;
            Ok(SweepRow {
                p,
                saturation: bhattacharyya(&observed, &spec.q_ideal)?,
                fidelity: fidelity_with_pure(&noisy, &spec.psi_ideal, tol)?,
            })
        })
        .collect()
}

/// Where the reference `Λ` of a uniqueness experiment came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LambdaReference {
    /// The target is `build_p(r)` or a designed `Q` for dimension `r`.
    Analytic,
    /// No closed form is known; spread is measured against the first converged run.
    FirstConverged,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialOutcome {
    pub seed: u64,
    pub residual: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Canonical diagonal (descending), when the run converged and canonicalized.
    pub lambda: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct UniquenessSummary {
    pub trials: usize,
    pub converged: usize,
    /// Max over converged runs of `‖Λ_run − Λ_ref‖∞`; zero when nothing converged.
    pub lambda_spread: f64,
    pub reference_lambda: Option<Vec<f64>>,
    pub reference: LambdaReference,
    pub runs: Vec<TrialOutcome>,
}

/// Solver settings for uniqueness runs. The canonical diagonal moves like the
/// square root of the factorization residual near rank-one solutions, so a
/// `1e-4` agreement in `Λ` needs residuals far below the default `1e-7`.
pub fn uniqueness_solver_options() -> SolverOptions {
    SolverOptions {
        tol: 1e-12,
        ..SolverOptions::default()
    }
}

/// Closed-form canonical diagonal when `target` is one of the designed correlations.
pub fn analytic_lambda(target: &Correlation, r: usize, tol: &Tolerances) -> Option<Vec<f64>> {
    if r >= 2 && target.m() == 2 * r && target.max_abs_diff(&build_p(r)) <= tol.cert {
        return Some(analytic_factorization_p(r).lambda);
    }
    if r >= 2 && target.m() == 3 * r {
        let recovery = recover_spectrum(target, r, tol).ok()?;
        if recovery.residual <= tol.cert {
            return Some(recovery.lambdas.iter().map(|l| l.sqrt()).collect());
        }
    }
    None
}

/// Runs `trials` seeded factorization searches (seeds `seed, seed+1, …`),
/// canonicalizes every converged run and reports how far the canonical
/// diagonals stray from the reference.
pub fn uniqueness_experiment(
    target: &Correlation,
    r: usize,
    trials: usize,
    seed: u64,
    opts: &SolverOptions,
    tol: &Tolerances,
) -> Result<UniquenessSummary> {
    if trials == 0 {
        return Err(Error::Precondition("trials must be at least 1".into()));
    }
    if r == 0 {
        return Err(Error::Precondition("factor size r must be at least 1".into()));
    }
    let runs: Vec<TrialOutcome> = (0..trials as u64)
        .into_par_iter()
        .map(|i| {
            let trial_seed = seed.wrapping_add(i);
            let run = numerical_factorize(target, r, trial_seed, opts);
            let lambda = if run.converged {
                canonicalize(&run.factorization, tol).ok().map(|cf| cf.lambda)
            } else {
                None
            };
            TrialOutcome {
                seed: trial_seed,
                residual: run.residual,
                iterations: run.iterations,
                converged: run.converged,
                lambda,
            }
        })
        .collect();
    let (reference_lambda, reference) = match analytic_lambda(target, r, tol) {
        Some(l) => (Some(l), LambdaReference::Analytic),
        None => (
            runs.iter().find_map(|t| t.lambda.clone()),
            LambdaReference::FirstConverged,
        ),
    };
    let converged = runs.iter().filter(|t| t.converged).count();
    let lambda_spread = match &reference_lambda {
        Some(reference) => runs
            .iter()
            .filter_map(|t| t.lambda.as_ref())
            .map(|l| {
                l.iter()
                    .zip(reference)
                    .map(|(a, b)| (a - b).abs())
                    .fold(0.0, f64::max)
            })
            .fold(0.0, f64::max),
        None => 0.0,
    };
    Ok(UniquenessSummary {
        trials,
        converged,
        lambda_spread,
        reference_lambda,
        reference,
        runs,
    })
}

/// Thresholds for the randomized search for alternative realizations of `P`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FalsificationOptions {
    pub draws: usize,
    /// A draw "reproduces" `P` when its total-variation distance is at most this.
    pub tv_threshold: f64,
    /// A reproducing draw is a counterexample when its fidelity with `Φ_d`
    /// is below `1 − fidelity_gap`.
    pub fidelity_gap: f64,
}

impl Default for FalsificationOptions {
    fn default() -> Self {
        Self {
            draws: 1000,
            tv_threshold: 1e-3,
            fidelity_gap: 1e-3,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FalsificationDraw {
    pub index: usize,
    pub total_variation: f64,
    pub fidelity: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FalsificationSummary {
    pub draws: usize,
    /// Closest approach to `P` over all draws.
    pub min_total_variation: f64,
    /// Draws reproducing `P` with a state far from `Φ_d`; must be empty.
    pub counterexamples: Vec<FalsificationDraw>,
}

/// Draws random states and POVMs with `2d` outcomes and checks that none
/// reproduces `build_p(d)` unless the state is close to `Φ_d`.
///
/// Draws alternate between three families: random state with random
/// rank-one POVMs, random state with random full-rank POVMs, and random
/// state with the designed POVMs for `P`. States have random rank.
pub fn falsification_search(d: usize, seed: u64, opts: &FalsificationOptions, tol: &Tolerances) -> Result<FalsificationSummary> {
    let target = build_p(d);
    let phi = maximally_entangled(d);
    let designed = realization_from_canonical(&analytic_factorization_p(d), tol)?;
    let outcomes = 2 * d;
    let draws: Vec<Result<FalsificationDraw>> = (0..opts.draws)
        .into_par_iter()
        .map(|index| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(index as u64));
            let rank = rng.gen_range(1..=d * d);
            let rho = DensityMatrix::new(random::density(&mut rng, d * d, rank), (d, d), tol)?;
            let (povm_a, povm_b) = match index % 3 {
                0 => (
                    Povm::new(random::povm_elements(&mut rng, d, outcomes, 1), tol)?,
                    Povm::new(random::povm_elements(&mut rng, d, outcomes, 1), tol)?,
                ),
                1 => (
                    Povm::new(random::povm_elements(&mut rng, d, outcomes, d), tol)?,
                    Povm::new(random::povm_elements(&mut rng, d, outcomes, d), tol)?,
                ),
                _ => (designed.povm_a.clone(), designed.povm_b.clone()),
            };
            let observed = correlation_from_measurement(&rho, &povm_a, &povm_b, tol)?.correlation;
            Ok(FalsificationDraw {
                index,
                total_variation: observed.total_variation(&target),
                fidelity: fidelity_with_pure(&rho, &phi, tol)?,
            })
        })
        .collect();
    let draws = draws.into_iter().collect::<Result<Vec<_>>>()?;
    let min_total_variation = draws.iter().map(|d| d.total_variation).fold(f64::INFINITY, f64::min);
    let counterexamples = draws
        .into_iter()
        .filter(|d| d.total_variation <= opts.tv_threshold && d.fidelity < 1.0 - opts.fidelity_gap)
        .collect();
    Ok(FalsificationSummary {
        draws: opts.draws,
        min_total_variation,
        counterexamples,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{hermitian_rank, partial_trace, schmidt_decompose, Keep};

    fn tol() -> Tolerances {
        Tolerances::default()
    }

    // Independently evaluated (numpy re-derivation of the realization).
    const SATURATION_DEPOLARIZED_005: f64 = 0.992_322_932_847_014_4;

    #[test]
    fn design_for_maximally_entangled_qubits() {
        let spec = design_protocol(&[0.5, 0.5], 2, &tol()).unwrap();
        assert!((spec.params.a - 0.25).abs() < 1e-15);
        assert!(spec.params.z.iter().all(|z| (z - 1.0 / 24.0).abs() < 1e-15));
        assert!((spec.psi_ideal.amplitudes() - maximally_entangled(2).amplitudes()).norm() < 1e-15);
        assert_eq!(spec.povm_a.len(), 6);
        assert_eq!(spec.povm_b.len(), 6);
    }

    #[test]
    fn design_schmidt_coefficients_and_rank_one_elements() {
        let spec = design_protocol(&[0.75, 0.25], 2, &tol()).unwrap();
        let s = schmidt_decompose(spec.psi_ideal.amplitudes(), (2, 2), &tol()).unwrap();
        assert!((s.coeffs[0] - 3f64.sqrt() / 2.0).abs() < 1e-14);
        assert!((s.coeffs[1] - 0.5).abs() < 1e-14);
        for d in 2..=4 {
            let spec = design_protocol(&vec![1.0 / d as f64; d], d, &tol()).unwrap();
            for e in spec.povm_a.elements().iter().chain(spec.povm_b.elements()) {
                assert_eq!(hermitian_rank(e.as_matrix(), tol().rank), 1);
            }
            assert_eq!(spec.povm_a.len(), 3 * d);
        }
    }

    #[test]
    fn designed_reduced_states_are_diagonal_spectra() {
        let l = [0.5, 0.3, 0.2];
        let spec = design_protocol(&l, 3, &tol()).unwrap();
        let rho = spec.psi_ideal.density();
        let diag = crate::linalg::diag_real(&l);
        for keep in [Keep::A, Keep::B] {
            let reduced = partial_trace(rho.as_matrix(), (3, 3), keep).unwrap();
            assert!(crate::linalg::max_abs_diff(&reduced, &diag) < 1e-14);
        }
    }

    #[test]
    fn certify_ideal_passes() {
        let spec = design_protocol(&[0.75, 0.25], 2, &tol()).unwrap();
        let report = certify(&spec.q_ideal, &[0.75, 0.25], 2, &tol()).unwrap();
        assert_eq!(report.verdict, Verdict::Pass);
        assert!((report.saturation - 1.0).abs() < 1e-12);
        assert!((report.recovered_spectrum[0] - 0.75).abs() < 1e-12);
    }

    #[test]
    fn certify_depolarized_fails() {
        let spec = design_protocol(&[0.75, 0.25], 2, &tol()).unwrap();
        let observed = simulate(&spec, 0.05, 0.0, &tol()).unwrap().correlation;
        let report = certify(&observed, &[0.75, 0.25], 2, &tol()).unwrap();
        assert_eq!(report.verdict, Verdict::Fail);
        assert!(report.saturation < 1.0 - tol().cert);
        assert!((report.saturation - SATURATION_DEPOLARIZED_005).abs() < 1e-12, "{:.17}", report.saturation);
    }

    #[test]
    fn certify_other_spectrum_fails() {
        let other = build_q(&solve_parameters(&[0.5, 0.5], 2, &tol()).unwrap(), &tol()).unwrap();
        let report = certify(&other, &[0.75, 0.25], 2, &tol()).unwrap();
        assert_eq!(report.verdict, Verdict::Fail);
        assert!(report.saturation < 1.0);
        // The structure itself is intact; only the saturation fails.
        assert!(report.structure_residual < 1e-12);
    }

    #[test]
    fn certify_rejects_wrong_size() {
        assert!(matches!(
            certify(&build_p(2), &[0.5, 0.5], 2, &tol()),
            Err(Error::DimensionMismatch(_))
        ));
    }

    #[test]
    fn sweep_rows() {
        let grid: Vec<f64> = (0..=10).map(|i| i as f64 / 10.0).collect();
        let rows = robustness_sweep(&[0.5, 0.5], 2, &grid, 0, &tol()).unwrap();
        assert!((rows[0].saturation - 1.0).abs() < 1e-12);
        assert!((rows[0].fidelity - 1.0).abs() < 1e-12);
        for row in &rows {
            assert!((row.fidelity - ((1.0 - row.p) + row.p / 4.0)).abs() < 1e-10);
        }
        assert!(rows.windows(2).all(|w| w[1].saturation <= w[0].saturation));
        assert!(matches!(
            robustness_sweep(&[0.5, 0.5], 2, &[0.1, 1.2], 0, &tol()),
            Err(Error::InvalidProbability(_))
        ));
    }

    #[test]
    fn uniqueness_rejects_zero_trials() {
        assert!(matches!(
            uniqueness_experiment(&build_p(2), 2, 0, 0, &uniqueness_solver_options(), &tol()),
            Err(Error::Precondition(_))
        ));
    }

    #[test]
    fn uniqueness_on_q() {
        let q = build_q(&solve_parameters(&[0.75, 0.25], 2, &tol()).unwrap(), &tol()).unwrap();
        let summary = uniqueness_experiment(&q, 2, 5, 0, &uniqueness_solver_options(), &tol()).unwrap();
        assert_eq!(summary.reference, LambdaReference::Analytic);
        assert!(summary.converged >= 1);
        assert!(summary.lambda_spread <= 1e-4);
        let reference = summary.reference_lambda.unwrap();
        assert!((reference[0] - 3f64.sqrt() / 2.0).abs() < 1e-12);
    }

    #[test]
    fn analytic_lambda_is_none_for_unstructured_targets() {
        let uniform = Correlation::new(nalgebra::DMatrix::from_element(4, 4, 1.0 / 16.0), &tol()).unwrap();
        assert!(analytic_lambda(&uniform, 2, &tol()).is_none());
    }

    #[test]
    fn falsification_small_run_finds_nothing() {
        let opts = FalsificationOptions {
            draws: 60,
            ..FalsificationOptions::default()
        };
        let summary = falsification_search(2, 0, &opts, &tol()).unwrap();
        assert!(summary.counterexamples.is_empty());
        assert!(summary.min_total_variation > 0.0);
    }
}
