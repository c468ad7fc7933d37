//! JSON documents exchanged by the command-line tool.
//!
//! Field names are fixed:
//!
//! | document            | fields                                                        |
//! |---------------------|---------------------------------------------------------------|
//! | Correlation         | `m`, `entries` (row-major rows)                                |
//! | ProtocolParameters  | `d`, `a`, `z`, `gamma`                                         |
//! | ProtocolSpec        | `params`, `Q_ideal`, `psi`, `povmA`, `povmB`                   |
//! | PsdFactorization    | `r`, `C`, `D`                                                  |
//! | CertificationReport | `saturation`, `recovered_spectrum`, `structure_residual`, `verdict` |
//!
//! Complex numbers are `[re, im]` pairs and matrices are arrays of rows.
//! Floats are written in the shortest form that parses back to the same
//! `f64`, so every document round-trips exactly.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::certify::{CertificationReport, LambdaReference, ProtocolSpec, SweepRow, UniquenessSummary, Verdict};
use crate::design::{Correlation, ProtocolParameters};
use crate::error::{Error, Result};
use crate::factorization::PsdFactorization;
use crate::linalg::{CMatrix, CVector, C64};
use crate::quantum::{Povm, PureState};
use crate::solver::FactorizationRun;
use crate::tolerance::Tolerances;

/// Inputs are rejected beyond this magnitude so downstream eigensolvers
/// never see overflow.
const MAX_MAGNITUDE: f64 = 1e100;

/// Largest matrix side accepted from a document.
pub const MAX_DIMENSION: usize = 512;

pub type JsonComplex = [f64; 2];
pub type JsonMatrix = Vec<Vec<JsonComplex>>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorrelationDoc {
    pub m: usize,
    pub entries: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParametersDoc {
    pub d: usize,
    pub a: f64,
    pub z: Vec<f64>,
    pub gamma: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StateDoc {
    pub dims: [usize; 2],
    pub amplitudes: Vec<JsonComplex>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProtocolSpecDoc {
    pub params: ParametersDoc,
    #[serde(rename = "Q_ideal")]
    pub q_ideal: CorrelationDoc,
    pub psi: StateDoc,
    #[serde(rename = "povmA")]
    pub povm_a: Vec<JsonMatrix>,
    #[serde(rename = "povmB")]
    pub povm_b: Vec<JsonMatrix>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactorizationDoc {
    pub r: usize,
    #[serde(rename = "C")]
    pub c: Vec<JsonMatrix>,
    #[serde(rename = "D")]
    pub d: Vec<JsonMatrix>,
}

/// Output of `factorize`: the factorization plus solver diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactorizeDoc {
    #[serde(flatten)]
    pub factorization: FactorizationDoc,
    pub residual: f64,
    pub iterations: usize,
    pub converged: bool,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportDoc {
    pub saturation: f64,
    pub recovered_spectrum: Vec<f64>,
    /// `null` when no structure could be read at all.
    pub structure_residual: Option<f64>,
    pub verdict: String,
    #[serde(default)]
    pub diagnostics: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialDoc {
    pub seed: u64,
    pub residual: f64,
    pub iterations: usize,
    pub converged: bool,
    pub lambda: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UniquenessDoc {
    pub r: usize,
    pub trials: usize,
    pub converged: usize,
    pub lambda_spread: f64,
    pub reference: String,
    pub reference_lambda: Option<Vec<f64>>,
    pub runs: Vec<TrialDoc>,
}

fn parse_error(e: serde_json::Error) -> Error {
    Error::Parse(e.to_string())
}

fn check_number(v: f64, what: &str) -> Result<f64> {
    if v.is_finite() && v.abs() <= MAX_MAGNITUDE {
        Ok(v)
    } else {
        Err(Error::Parse(format!("{what}: {v} is not a finite number of sane magnitude")))
    }
}

fn check_dimension(n: usize, what: &str) -> Result<usize> {
    if n == 0 || n > MAX_DIMENSION {
        return Err(Error::Parse(format!("{what}: size {n} outside 1..={MAX_DIMENSION}")));
    }
    Ok(n)
}

fn complex_from_json(v: &JsonComplex) -> Result<C64> {
    Ok(C64::new(check_number(v[0], "real part")?, check_number(v[1], "imaginary part")?))
}

pub fn matrix_to_json(m: &CMatrix) -> JsonMatrix {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| [m[(i, j)].re, m[(i, j)].im]).collect())
        .collect()
}

pub fn matrix_from_json(rows: &JsonMatrix) -> Result<CMatrix> {
    let n = check_dimension(rows.len(), "matrix")?;
    let cols = rows[0].len();
    check_dimension(cols, "matrix row")?;
    if rows.iter().any(|r| r.len() != cols) {
        return Err(Error::Parse("matrix rows have different lengths".into()));
    }
    let mut m = CMatrix::zeros(n, cols);
    for (i, row) in rows.iter().enumerate() {
        for (j, v) in row.iter().enumerate() {
            m[(i, j)] = complex_from_json(v)?;
        }
    }
    Ok(m)
}

impl From<&Correlation> for CorrelationDoc {
    fn from(c: &Correlation) -> Self {
        let e = c.entries();
        Self {
            m: c.m(),
            entries: (0..c.m()).map(|i| (0..c.m()).map(|j| e[(i, j)]).collect()).collect(),
        }
    }
}

impl CorrelationDoc {
    pub fn to_domain(&self, tol: &Tolerances) -> Result<Correlation> {
        let m = check_dimension(self.m, "correlation")?;
        if self.entries.len() != m || self.entries.iter().any(|r| r.len() != m) {
            return Err(Error::Parse(format!("entries must be an {m}x{m} array")));
        }
        let mut e = DMatrix::zeros(m, m);
        for (i, row) in self.entries.iter().enumerate() {
            for (j, v) in row.iter().enumerate() {
                e[(i, j)] = check_number(*v, "correlation entry")?;
            }
        }
        Correlation::new(e, tol)
    }
}

impl From<&ProtocolParameters> for ParametersDoc {
    fn from(p: &ProtocolParameters) -> Self {
        Self {
            d: p.d,
            a: p.a,
            z: p.z.clone(),
            gamma: p.gamma.clone(),
        }
    }
}

impl ParametersDoc {
    pub fn to_domain(&self, tol: &Tolerances) -> Result<ProtocolParameters> {
        check_dimension(self.d, "parameters")?;
        let params = ProtocolParameters {
            d: self.d,
            a: check_number(self.a, "a")?,
            z: self.z.iter().map(|v| check_number(*v, "z")).collect::<Result<_>>()?,
            gamma: self.gamma.iter().map(|v| check_number(*v, "gamma")).collect::<Result<_>>()?,
        };
        params.validate(tol)?;
        Ok(params)
    }
}

impl From<&PureState> for StateDoc {
    fn from(s: &PureState) -> Self {
        let (da, db) = s.dims();
        Self {
            dims: [da, db],
            amplitudes: s.amplitudes().iter().map(|a| [a.re, a.im]).collect(),
        }
    }
}

impl StateDoc {
    pub fn to_domain(&self, tol: &Tolerances) -> Result<PureState> {
        let [da, db] = self.dims;
        check_dimension(da, "state")?;
        check_dimension(db, "state")?;
        let amplitudes = self
            .amplitudes
            .iter()
            .map(complex_from_json)
            .collect::<Result<Vec<_>>>()?;
        PureState::new(CVector::from_vec(amplitudes), (da, db), tol)
    }
}

fn povm_to_json(p: &Povm) -> Vec<JsonMatrix> {
    p.elements().iter().map(|e| matrix_to_json(e.as_matrix())).collect()
}

fn povm_from_json(elements: &[JsonMatrix], tol: &Tolerances) -> Result<Povm> {
    if elements.len() > MAX_DIMENSION {
        return Err(Error::Parse(format!("{} POVM elements is too many", elements.len())));
    }
    Povm::new(elements.iter().map(matrix_from_json).collect::<Result<_>>()?, tol)
}

impl From<&ProtocolSpec> for ProtocolSpecDoc {
    fn from(s: &ProtocolSpec) -> Self {
        Self {
            params: (&s.params).into(),
            q_ideal: (&s.q_ideal).into(),
            psi: (&s.psi_ideal).into(),
            povm_a: povm_to_json(&s.povm_a),
            povm_b: povm_to_json(&s.povm_b),
        }
    }
}

impl ProtocolSpecDoc {
    pub fn to_domain(&self, tol: &Tolerances) -> Result<ProtocolSpec> {
        let spec = ProtocolSpec {
            params: self.params.to_domain(tol)?,
            q_ideal: self.q_ideal.to_domain(tol)?,
            psi_ideal: self.psi.to_domain(tol)?,
            povm_a: povm_from_json(&self.povm_a, tol)?,
            povm_b: povm_from_json(&self.povm_b, tol)?,
        };
        let d = spec.params.d;
        if spec.q_ideal.m() != 3 * d
            || spec.psi_ideal.dims() != (d, d)
            || spec.povm_a.dim() != d
            || spec.povm_b.dim() != d
            || spec.povm_a.len() != 3 * d
            || spec.povm_b.len() != 3 * d
        {
            return Err(Error::DimensionMismatch(format!(
                "protocol for d = {d} needs a {0}x{0} Q_ideal, a {d}x{d} state and {0}-outcome POVMs on C^{d}",
                3 * d
            )));
        }
        Ok(spec)
    }
}

impl From<&PsdFactorization> for FactorizationDoc {
    fn from(f: &PsdFactorization) -> Self {
        Self {
            r: f.r(),
            c: f.c().iter().map(|m| matrix_to_json(m.as_matrix())).collect(),
            d: f.d().iter().map(|m| matrix_to_json(m.as_matrix())).collect(),
        }
    }
}

impl FactorizationDoc {
    pub fn to_domain(&self, tol: &Tolerances) -> Result<PsdFactorization> {
        check_dimension(self.r, "factor size")?;
        if self.c.len() > MAX_DIMENSION || self.d.len() > MAX_DIMENSION {
            return Err(Error::Parse("too many factors".into()));
        }
        let c = self.c.iter().map(matrix_from_json).collect::<Result<Vec<_>>>()?;
        let d = self.d.iter().map(matrix_from_json).collect::<Result<Vec<_>>>()?;
        let f = PsdFactorization::new(c, d, tol)?;
        if f.r() != self.r {
            return Err(Error::DimensionMismatch(format!("r = {} but factors are {}x{}", self.r, f.r(), f.r())));
        }
        Ok(f)
    }
}

impl FactorizeDoc {
    pub fn new(run: &FactorizationRun, seed: u64) -> Self {
        Self {
            factorization: (&run.factorization).into(),
            residual: run.residual,
            iterations: run.iterations,
            converged: run.converged,
            seed,
        }
    }
}

impl From<&CertificationReport> for ReportDoc {
    fn from(r: &CertificationReport) -> Self {
        Self {
            saturation: r.saturation,
            recovered_spectrum: r.recovered_spectrum.clone(),
            structure_residual: r.structure_residual.is_finite().then_some(r.structure_residual),
            verdict: r.verdict.as_str().to_string(),
            diagnostics: r.diagnostics.clone(),
        }
    }
}

impl ReportDoc {
    pub fn to_domain(&self) -> Result<CertificationReport> {
        let verdict = match self.verdict.as_str() {
            "pass" => Verdict::Pass,
            "fail" => Verdict::Fail,
            other => return Err(Error::Parse(format!("unknown verdict {other:?}"))),
        };
        Ok(CertificationReport {
            saturation: self.saturation,
            recovered_spectrum: self.recovered_spectrum.clone(),
            structure_residual: self.structure_residual.unwrap_or(f64::INFINITY),
            verdict,
            diagnostics: self.diagnostics.clone(),
        })
    }
}

impl UniquenessDoc {
    pub fn new(summary: &UniquenessSummary, r: usize) -> Self {
        Self {
            r,
            trials: summary.trials,
            converged: summary.converged,
            lambda_spread: summary.lambda_spread,
            reference: match summary.reference {
                LambdaReference::Analytic => "analytic",
                LambdaReference::FirstConverged => "first-converged",
            }
            .to_string(),
            reference_lambda: summary.reference_lambda.clone(),
            runs: summary
                .runs
                .iter()
                .map(|t| TrialDoc {
                    seed: t.seed,
                    residual: t.residual,
                    iterations: t.iterations,
                    converged: t.converged,
                    lambda: t.lambda.clone(),
                })
                .collect(),
        }
    }
}

pub fn to_json<T: Serialize>(doc: &T) -> String {
    let mut s = serde_json::to_string_pretty(doc).expect("documents contain only finite numbers");
    s.push('\n');
    s
}

pub fn parse_correlation(text: &str, tol: &Tolerances) -> Result<Correlation> {
    serde_json::from_str::<CorrelationDoc>(text).map_err(parse_error)?.to_domain(tol)
}

pub fn parse_protocol_spec(text: &str, tol: &Tolerances) -> Result<ProtocolSpec> {
    serde_json::from_str::<ProtocolSpecDoc>(text).map_err(parse_error)?.to_domain(tol)
}

pub fn parse_factorization(text: &str, tol: &Tolerances) -> Result<PsdFactorization> {
    serde_json::from_str::<FactorizationDoc>(text).map_err(parse_error)?.to_domain(tol)
}

pub fn parse_report(text: &str) -> Result<CertificationReport> {
    serde_json::from_str::<ReportDoc>(text).map_err(parse_error)?.to_domain()
}

/// Comma-separated descending weights, e.g. `0.6,0.3,0.1`. Only syntax is
/// checked here; ordering and normalization are checked against `d` later.
pub fn parse_spectrum(text: &str) -> Result<Vec<f64>> {
    let values = text
        .split(',')
        .map(|s| {
            let s = s.trim();
            s.parse::<f64>()
                .map_err(|e| Error::Parse(format!("spectrum entry {s:?}: {e}")))
                .and_then(|v| check_number(v, "spectrum entry"))
        })
        .collect::<Result<Vec<_>>>()?;
    if values.len() > MAX_DIMENSION {
        return Err(Error::Parse(format!("{} spectrum entries is too many", values.len())));
    }
    Ok(values)
}

/// Comma-separated noise strengths.
pub fn parse_grid(text: &str) -> Result<Vec<f64>> {
    parse_spectrum(text)
}

/// `p,saturation,fidelity` table.
pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from("p,saturation,fidelity\n");
    for r in rows {
        out.push_str(&format!("{:?},{:?},{:?}\n", r.p, r.saturation, r.fidelity));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::certify::{certify, design_protocol};
    use crate::design::build_p;
    use crate::factorization::analytic_factorization_p;
    use proptest::prelude::*;

    fn tol() -> Tolerances {
        Tolerances::default()
    }

    #[test]
    fn protocol_spec_round_trips_exactly() {
        let spec = design_protocol(&[0.6, 0.3, 0.1], 3, &tol()).unwrap();
        let text = to_json(&ProtocolSpecDoc::from(&spec));
        let back = parse_protocol_spec(&text, &tol()).unwrap();
        assert_eq!(back, spec);
        assert_eq!(to_json(&ProtocolSpecDoc::from(&back)), text);
    }

    #[test]
    fn field_names_are_fixed() {
        let spec = design_protocol(&[0.5, 0.5], 2, &tol()).unwrap();
        let v: serde_json::Value = serde_json::from_str(&to_json(&ProtocolSpecDoc::from(&spec))).unwrap();
        for key in ["params", "Q_ideal", "psi", "povmA", "povmB"] {
            assert!(v.get(key).is_some(), "{key}");
        }
        for key in ["d", "a", "z", "gamma"] {
            assert!(v["params"].get(key).is_some(), "{key}");
        }
        assert!(v["Q_ideal"].get("m").is_some() && v["Q_ideal"].get("entries").is_some());

        let f: serde_json::Value =
            serde_json::from_str(&to_json(&FactorizationDoc::from(&analytic_factorization_p(2).base))).unwrap();
        for key in ["r", "C", "D"] {
            assert!(f.get(key).is_some(), "{key}");
        }
        // complex entries are [re, im] pairs
        assert_eq!(f["C"][0][0][0].as_array().unwrap().len(), 2);

        let report = certify(&spec.q_ideal, &[0.5, 0.5], 2, &tol()).unwrap();
        let r: serde_json::Value = serde_json::from_str(&to_json(&ReportDoc::from(&report))).unwrap();
        for key in ["saturation", "recovered_spectrum", "structure_residual", "verdict"] {
            assert!(r.get(key).is_some(), "{key}");
        }
        assert_eq!(r["verdict"], "pass");
    }

    #[test]
    fn factorization_and_report_round_trip() {
        let f = analytic_factorization_p(3).base;
        let back = parse_factorization(&to_json(&FactorizationDoc::from(&f)), &tol()).unwrap();
        assert_eq!(back, f);

        let spec = design_protocol(&[0.75, 0.25], 2, &tol()).unwrap();
        let report = certify(&spec.q_ideal, &[0.75, 0.25], 2, &tol()).unwrap();
        assert_eq!(parse_report(&to_json(&ReportDoc::from(&report))).unwrap(), report);
    }

    #[test]
    fn malformed_documents_are_rejected() {
        let t = tol();
        for bad in [
            "",
            "{}",
            r#"{"m": 2, "entries": [[0.5, 0.5]]}"#,
            r#"{"m": 1, "entries": [[0.5]]}"#,
            r#"{"m": 1, "entries": [[-1.0]]}"#,
            r#"{"m": 1, "entries": [[1e400]]}"#,
            r#"{"m": 0, "entries": []}"#,
            r#"{"m": 99999999999, "entries": []}"#,
            r#"{"m": 1, "entries": [[1.0]], "extra": 1}"#,
        ] {
            assert!(parse_correlation(bad, &t).is_err(), "{bad}");
        }
        assert!(parse_factorization(r#"{"r": 2, "C": [[[[1,0]]]], "D": []}"#, &t).is_err());
        assert!(parse_report(r#"{"saturation": 1, "recovered_spectrum": [], "structure_residual": 0, "verdict": "maybe"}"#).is_err());
    }

    #[test]
    fn spectrum_parsing() {
        assert_eq!(parse_spectrum("0.5,0.5").unwrap(), vec![0.5, 0.5]);
        assert_eq!(parse_spectrum(" 0.75 , 0.25").unwrap(), vec![0.75, 0.25]);
        assert!(parse_spectrum("0.5,,0.5").is_err());
        assert!(parse_spectrum("inf").is_err());
        assert!(parse_spectrum("NaN,0.5").is_err());
    }

    #[test]
    fn csv_header() {
        let csv = sweep_csv(&[SweepRow { p: 0.0, saturation: 1.0, fidelity: 1.0 }]);
        assert_eq!(csv, "p,saturation,fidelity\n0.0,1.0,1.0\n");
    }

    proptest! {
        #[test]
        fn correlation_documents_round_trip(raw in proptest::collection::vec(0.0f64..1.0, 1..=36)) {
            let m = (raw.len() as f64).sqrt() as usize;
            let mut e = DMatrix::from_iterator(m, m, raw.into_iter().take(m * m));
            let total = e.sum();
            if total > 0.0 {
                e /= total;
                if let Ok(c) = Correlation::new(e, &tol()) {
                    let text = to_json(&CorrelationDoc::from(&c));
                    prop_assert_eq!(parse_correlation(&text, &tol()).unwrap(), c);
                }
            }
        }

        #[test]
        fn arbitrary_text_never_panics(s in ".{0,200}") {
            let _ = parse_correlation(&s, &tol());
            let _ = parse_protocol_spec(&s, &tol());
            let _ = parse_factorization(&s, &tol());
            let _ = parse_spectrum(&s);
        }
    }

    #[test]
    fn p_document_has_expected_shape() {
        let doc = CorrelationDoc::from(&build_p(2));
        assert_eq!(doc.m, 4);
        assert_eq!(doc.entries[0][0], 4.0 / 18.0);
    }
}
