/// Numerical tolerances threaded through every check in the crate.
///
/// All fields are absolute thresholds on double-precision quantities.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerances {
    /// Max entrywise deviation from Hermiticity.
    pub herm: f64,
    /// Eigenvalues in `[-psd, 0)` are rounding noise and get clipped to zero.
    pub psd: f64,
    /// Reconstruction and identity residuals of eigendecompositions.
    pub eig: f64,
    /// Eigenvalues at or below this count as zero when testing rank.
    pub rank: f64,
    /// Normalization of states, traces and probability sums.
    pub norm: f64,
    /// Pass/fail threshold for certification and structural matching.
    pub cert: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            herm: 1e-9,
            psd: 1e-9,
            eig: 1e-8,
            rank: 1e-10,
            norm: 1e-9,
            cert: 1e-8,
        }
    }
}

impl Tolerances {
    pub fn with_cert(mut self, cert: f64) -> Self {
        self.cert = cert;
        self
    }
}
