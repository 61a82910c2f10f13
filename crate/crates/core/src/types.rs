//! Shared numeric types, solver configuration, and the per-iteration record
//! schema.

use std::fmt;
use std::ops::{Add, Index, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative tolerance used throughout: `tol * (1 + magnitude)`.
pub const REL_TOL: f64 = 1e-9;

/// Scale `REL_TOL` by `1 + |magnitude|`.
pub fn scaled_tol(magnitude: f64) -> f64 {
    REL_TOL * (1.0 + magnitude.abs())
}

/// A dense real vector of fixed dimension.
///
/// Constructors reject empty and non-finite input. Arithmetic does not
/// re-check finiteness; the solver driver does that once per iteration.
#[derive(Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct DenseVector(Vec<f64>);

impl DenseVector {
    pub fn new(coords: Vec<f64>) -> Result<Self> {
        if coords.is_empty() {
            return Err(Error::EmptyVector);
        }
        if coords.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite);
        }
        Ok(Self(coords))
    }

    pub fn zeros(dim: usize) -> Self {
        assert!(dim > 0, "DenseVector dimension must be positive");
        Self(vec![0.0; dim])
    }

    pub fn from_fn(dim: usize, f: impl FnMut(usize) -> f64) -> Self {
        assert!(dim > 0, "DenseVector dimension must be positive");
        Self((0..dim).map(f).collect())
    }

    /// Wrap coordinates computed internally; finiteness is the caller's concern.
    pub(crate) fn from_vec_unchecked(coords: Vec<f64>) -> Self {
        debug_assert!(!coords.is_empty());
        Self(coords)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn iter(&self) -> std::slice::Iter<'_, f64> {
        self.0.iter()
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|x| x.is_finite())
    }

    pub fn check_dim(&self, other: &DenseVector) -> Result<()> {
        if self.dim() != other.dim() {
            return Err(Error::DimMismatch { expected: self.dim(), found: other.dim() });
        }
        Ok(())
    }

    pub fn dot(&self, other: &DenseVector) -> f64 {
        assert_eq!(self.dim(), other.dim(), "dot: dimension mismatch");
        self.0.iter().zip(&other.0).map(|(a, b)| a * b).sum()
    }

    pub fn norm_sq(&self) -> f64 {
        self.0.iter().map(|x| x * x).sum()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    pub fn dist(&self, other: &DenseVector) -> f64 {
        assert_eq!(self.dim(), other.dim(), "dist: dimension mismatch");
        self.0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> DenseVector {
        DenseVector(self.0.iter().map(|&x| f(x)).collect())
    }

    pub fn zip_map(&self, other: &DenseVector, f: impl Fn(f64, f64) -> f64) -> DenseVector {
        assert_eq!(self.dim(), other.dim(), "zip_map: dimension mismatch");
        DenseVector(self.0.iter().zip(&other.0).map(|(&a, &b)| f(a, b)).collect())
    }

    pub fn scale(&self, s: f64) -> DenseVector {
        self.map(|x| s * x)
    }

    /// `self + s * other`
    pub fn add_scaled(&self, s: f64, other: &DenseVector) -> DenseVector {
        self.zip_map(other, |a, b| a + s * b)
    }

    pub fn max_abs(&self) -> f64 {
        self.0.iter().fold(0.0, |m, x| m.max(x.abs()))
    }
}

impl fmt::Debug for DenseVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list().entries(&self.0).finish()
    }
}

impl TryFrom<Vec<f64>> for DenseVector {
    type Error = Error;

    fn try_from(v: Vec<f64>) -> Result<Self> {
        DenseVector::new(v)
    }
}

impl From<DenseVector> for Vec<f64> {
    fn from(v: DenseVector) -> Self {
        v.0
    }
}

impl Index<usize> for DenseVector {
    type Output = f64;

    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

impl<'a> Add<&'a DenseVector> for &'a DenseVector {
    type Output = DenseVector;

    fn add(self, rhs: &DenseVector) -> DenseVector {
        self.zip_map(rhs, |a, b| a + b)
    }
}

impl<'a> Sub<&'a DenseVector> for &'a DenseVector {
    type Output = DenseVector;

    fn sub(self, rhs: &DenseVector) -> DenseVector {
        self.zip_map(rhs, |a, b| a - b)
    }
}

impl Add for DenseVector {
    type Output = DenseVector;

    fn add(self, rhs: DenseVector) -> DenseVector {
        &self + &rhs
    }
}

impl Sub for DenseVector {
    type Output = DenseVector;

    fn sub(self, rhs: DenseVector) -> DenseVector {
        &self - &rhs
    }
}

impl Mul<&DenseVector> for f64 {
    type Output = DenseVector;

    fn mul(self, rhs: &DenseVector) -> DenseVector {
        rhs.scale(self)
    }
}

impl Mul<DenseVector> for f64 {
    type Output = DenseVector;

    fn mul(self, rhs: DenseVector) -> DenseVector {
        rhs.scale(self)
    }
}

impl Neg for &DenseVector {
    type Output = DenseVector;

    fn neg(self) -> DenseVector {
        self.scale(-1.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Algorithm {
    /// Projected extra anchored gradient.
    Eag,
    /// Accelerated forward-backward splitting.
    As,
    /// Classical extragradient (baseline).
    Eg,
}

impl Algorithm {
    pub const ALL: [Algorithm; 3] = [Algorithm::Eag, Algorithm::As, Algorithm::Eg];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Eag => "EAG",
            Algorithm::As => "AS",
            Algorithm::Eg => "EG",
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub algorithm: Algorithm,
    /// Step size.
    pub eta: f64,
    /// Anchoring shift (EAG only).
    #[serde(default)]
    pub delta: f64,
    /// Comonotonicity modulus used by the AS update (<= 0).
    #[serde(default)]
    pub rho: f64,
    pub max_iters: usize,
    /// Zero means run exactly `max_iters` iterations.
    #[serde(default)]
    pub target_residual: f64,
}

impl SolverConfig {
    /// Default step size: `1/(3L)` for EAG and EG, midpoint of
    /// `(max(0, -2 rho), 1/L)` for AS.
    pub fn default_eta(algorithm: Algorithm, lipschitz: f64, rho: f64) -> f64 {
        match algorithm {
            Algorithm::Eag | Algorithm::Eg => 1.0 / (3.0 * lipschitz),
            Algorithm::As => 0.5 * ((-2.0 * rho).max(0.0) + 1.0 / lipschitz),
        }
    }

    pub fn with_defaults(algorithm: Algorithm, lipschitz: f64, rho: f64, max_iters: usize) -> Self {
        Self {
            algorithm,
            eta: Self::default_eta(algorithm, lipschitz, rho),
            delta: 0.0,
            rho,
            max_iters,
            target_residual: 0.0,
        }
    }

    /// Checks the hard constraints every run must satisfy. Rate-envelope
    /// preconditions are softer and are reported by the diagnostics instead.
    pub fn validate(&self) -> Result<()> {
        if !(self.eta.is_finite() && self.eta > 0.0) {
            return Err(Error::InvalidParameter(format!("eta must be positive, got {}", self.eta)));
        }
        if !(self.delta.is_finite() && self.delta >= 0.0) {
            return Err(Error::InvalidParameter(format!("delta must be >= 0, got {}", self.delta)));
        }
        if !(self.rho.is_finite() && self.rho <= 0.0) {
            return Err(Error::InvalidParameter(format!("rho must be <= 0, got {}", self.rho)));
        }
        if !(self.target_residual.is_finite() && self.target_residual >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "target_residual must be >= 0, got {}",
                self.target_residual
            )));
        }
        if self.algorithm == Algorithm::As && self.eta <= -2.0 * self.rho {
            return Err(Error::StepSizeViolation { eta: self.eta, lower: -2.0 * self.rho });
        }
        Ok(())
    }
}

/// One row of a run trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterateRecord {
    pub k: usize,
    /// `||F(z_k) + c_k||` for the algorithm's own certificate.
    pub cert_residual: f64,
    pub natural_residual: f64,
    /// `V_k` (EAG) or `U_k` (AS); absent for EG.
    pub potential: Option<f64>,
    /// Allowed minus observed potential increase from `k-1` to `k`.
    pub descent_slack: Option<f64>,
    pub distance_to_solution: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum Termination {
    MaxIters,
    TargetReached { k: usize },
    Diverged { k: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "verdict", rename_all = "snake_case")]
pub enum EnvelopeVerdict {
    /// Every recorded iterate is inside the envelope. `margin` is the
    /// smallest relative gap `(bound - residual) / bound`.
    Holds { margin: f64 },
    Violated { first_k: usize, margin: f64 },
    NotAssessable { reason: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub records: Vec<IterateRecord>,
    pub fitted_rate_exponent: Option<f64>,
    pub envelope: EnvelopeVerdict,
    pub envelope_ok: bool,
    pub envelope_margin: f64,
    pub termination: Termination,
    pub config_echo: SolverConfig,
}

/// Minimum number of records `fit_rate_exponent` needs.
pub const MIN_FIT_RECORDS: usize = 10;

/// Least-squares slope of `log(cert_residual)` against `log(k)` over records
/// with `k >= k_min`.
pub fn fit_rate_exponent(records: &[IterateRecord], k_min: usize) -> Result<f64> {
    let pts: Vec<&IterateRecord> = records.iter().filter(|r| r.k >= k_min && r.k > 0).collect();
    if let Some(r) = pts.iter().find(|r| r.cert_residual == 0.0) {
        return Err(Error::DegenerateResidual { k: r.k });
    }
    let pts: Vec<(f64, f64)> = pts
        .iter()
        .filter(|r| r.cert_residual > 0.0 && r.cert_residual.is_finite())
        .map(|r| ((r.k as f64).ln(), r.cert_residual.ln()))
        .collect();
    if pts.len() < MIN_FIT_RECORDS {
        return Err(Error::InsufficientData { needed: MIN_FIT_RECORDS, found: pts.len() });
    }
    let n = pts.len() as f64;
    let mean_x = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let mean_y = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for &(x, y) in &pts {
        sxy += (x - mean_x) * (y - mean_y);
        sxx += (x - mean_x) * (x - mean_x);
    }
    Ok(sxy / sxx)
}

/// Like [`fit_rate_exponent`] but maps a zero residual to `-inf`.
pub fn fit_rate_exponent_or_sentinel(records: &[IterateRecord], k_min: usize) -> Result<f64> {
    match fit_rate_exponent(records, k_min) {
        Err(Error::DegenerateResidual { .. }) => Ok(f64::NEG_INFINITY),
        other => other,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn recs(f: impl Fn(f64) -> f64, ks: std::ops::RangeInclusive<usize>) -> Vec<IterateRecord> {
        ks.map(|k| IterateRecord {
            k,
            cert_residual: f(k as f64),
            natural_residual: 0.0,
            potential: None,
            descent_slack: None,
            distance_to_solution: None,
        })
        .collect()
    }

    #[test]
    fn dense_vector_rejects_bad_input() {
        assert_eq!(DenseVector::new(vec![]), Err(Error::EmptyVector));
        assert_eq!(DenseVector::new(vec![1.0, f64::NAN]), Err(Error::NonFinite));
        assert_eq!(DenseVector::new(vec![f64::INFINITY]), Err(Error::NonFinite));
        let v = DenseVector::new(vec![3.0, 4.0]).unwrap();
        assert_eq!(v.dim(), 2);
        assert_eq!(v.norm(), 5.0);
    }

    #[test]
    fn slope_of_exact_power_laws() {
        let s = fit_rate_exponent(&recs(|k| 1.0 / k, 10..=100), 10).unwrap();
        assert!((s + 1.0).abs() < 1e-9, "{s}");
        let s = fit_rate_exponent(&recs(|k| 1.0 / k.sqrt(), 10..=100), 10).unwrap();
        assert!((s + 0.5).abs() < 1e-9, "{s}");
    }

    #[test]
    fn slope_needs_ten_points() {
        let r = recs(|k| 1.0 / k, 1..=20);
        assert_eq!(
            fit_rate_exponent(&r, 12),
            Err(Error::InsufficientData { needed: 10, found: 9 })
        );
        assert!(fit_rate_exponent(&r, 11).is_ok());
    }

    #[test]
    fn zero_residual_is_degenerate() {
        let mut r = recs(|k| 1.0 / k, 1..=30);
        r[20].cert_residual = 0.0;
        assert_eq!(fit_rate_exponent(&r, 1), Err(Error::DegenerateResidual { k: 21 }));
        assert_eq!(fit_rate_exponent_or_sentinel(&r, 1), Ok(f64::NEG_INFINITY));
    }

    #[test]
    fn as_default_eta_is_interval_midpoint() {
        let eta = SolverConfig::default_eta(Algorithm::As, 2.0, -0.1);
        assert!((eta - 0.5 * (0.2 + 0.5)).abs() < 1e-15);
        let eta = SolverConfig::default_eta(Algorithm::As, 1.0, 0.0);
        assert!((eta - 0.5).abs() < 1e-15);
    }

    #[test]
    fn validate_rejects_as_step_below_comonotone_floor() {
        let mut cfg = SolverConfig::with_defaults(Algorithm::As, 1.0, -0.2, 10);
        cfg.eta = 0.4;
        assert!(matches!(cfg.validate(), Err(Error::StepSizeViolation { .. })));
        cfg.eta = 0.41;
        assert!(cfg.validate().is_ok());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn slope_is_scale_invariant(
                exps in -2.0f64..0.5,
                scale in 1e-6f64..1e6,
                noise in proptest::collection::vec(0.5f64..2.0, 60),
            ) {
                let base: Vec<IterateRecord> = recs(|k| k.powf(exps) * noise[(k as usize) % 60], 1..=60);
                let scaled: Vec<IterateRecord> = base
                    .iter()
                    .map(|r| IterateRecord { cert_residual: r.cert_residual * scale, ..r.clone() })
                    .collect();
                let a = fit_rate_exponent(&base, 5).unwrap();
                let b = fit_rate_exponent(&scaled, 5).unwrap();
                prop_assert!((a - b).abs() <= 1e-12, "{} vs {}", a, b);
            }
        }
    }
}
