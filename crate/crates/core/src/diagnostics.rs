//! Numerical checks of the convergence analysis: the potentials `V_k`
//! (EAG) and `U_k` (AS), their descent inequalities, the last-iterate rate
//! envelopes, the two algebraic identities behind the descent proofs, and
//! the sequence bound that turns descent into a rate.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::operators::{ConvexSet, MaxMonotoneOperator};
use crate::problems::ProblemInstance;
use crate::solvers::{StepObserver, StepView};
use crate::types::{Algorithm, DenseVector, EnvelopeVerdict, IterateRecord, SolverConfig};

/// Relative tolerance for potential descent: `1e-8 * (1 + |P_k|)`.
pub const DESCENT_TOL: f64 = 1e-8;
/// Relative inflation applied to rate envelopes.
pub const ENVELOPE_TOL: f64 = 1e-9;
/// Relative tolerance for the algebraic identities.
pub const IDENTITY_TOL: f64 = 1e-9;

fn check_dims(vs: &[&DenseVector]) -> Result<()> {
    let n = vs[0].dim();
    for v in &vs[1..] {
        if v.dim() != n {
            return Err(Error::DimMismatch { expected: n, found: v.dim() });
        }
    }
    Ok(())
}

/// `V_k = (k(k+1)/2) ||eta F + eta c||^2 + k <eta F + eta c, z - z0>`.
pub fn potential_v(
    k: usize,
    eta: f64,
    fz: &DenseVector,
    c: &DenseVector,
    z: &DenseVector,
    z0: &DenseVector,
) -> Result<f64> {
    if k == 0 {
        return Err(Error::InvalidParameter("V_k is defined for k >= 1".into()));
    }
    potential_v_shifted(k as f64, eta, fz, c, z, z0)
}

/// `V` with a real index; `index = k + delta` for delta-shifted anchoring.
pub fn potential_v_shifted(
    index: f64,
    eta: f64,
    fz: &DenseVector,
    c: &DenseVector,
    z: &DenseVector,
    z0: &DenseVector,
) -> Result<f64> {
    check_dims(&[fz, c, z, z0])?;
    let g = (fz + c).scale(eta);
    Ok(0.5 * index * (index + 1.0) * g.norm_sq() + index * g.dot(&(z - z0)))
}

/// `U_k = ((k^2/2)(1 + 2 rho/eta) - (rho/eta) k) ||eta F + eta c||^2 + k <eta F + eta c, z - z0>`.
pub fn potential_u(
    k: usize,
    eta: f64,
    rho: f64,
    fz: &DenseVector,
    c: &DenseVector,
    z: &DenseVector,
    z0: &DenseVector,
) -> Result<f64> {
    if k == 0 {
        return Err(Error::InvalidParameter("U_k is defined for k >= 1".into()));
    }
    if !(eta > 0.0) {
        return Err(Error::InvalidParameter(format!("eta must be positive, got {eta}")));
    }
    check_dims(&[fz, c, z, z0])?;
    let kf = k as f64;
    let r = rho / eta;
    let g = (fz + c).scale(eta);
    Ok((0.5 * kf * kf * (1.0 + 2.0 * r) - r * kf) * g.norm_sq() + kf * g.dot(&(z - z0)))
}

/// Allowed increase `V_{k+1} - V_k` given `||F(z_{k+1}) + c_{k+1}||`;
/// `None` unless `0 < eta L < 1`.
pub fn v_allowed_increase(eta: f64, lipschitz: f64, next_cert_residual: f64) -> Option<f64> {
    let p = (eta * lipschitz).powi(2);
    (p > 0.0 && p < 1.0).then(|| p / (1.0 - p) * (eta * next_cert_residual).powi(2))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PotentialKind {
    V,
    U,
}

/// Transition from `k` to `k + 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PotentialEntry {
    pub k: usize,
    /// Potential at `k`.
    pub potential: f64,
    pub allowed_increase: f64,
    pub observed_increase: f64,
}

impl PotentialEntry {
    pub fn violates(&self) -> bool {
        self.observed_increase > self.allowed_increase + DESCENT_TOL * (1.0 + self.potential.abs())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PotentialTrace {
    pub kind: PotentialKind,
    pub entries: Vec<PotentialEntry>,
    /// Whether the step-size precondition of the descent inequality holds.
    pub precondition_met: bool,
}

impl PotentialTrace {
    /// Indices `k` whose transition to `k + 1` breaks the inequality.
    pub fn violations(&self) -> Vec<usize> {
        self.entries.iter().filter(|e| e.violates()).map(|e| e.k).collect()
    }

    pub fn holds(&self) -> bool {
        self.entries.iter().all(|e| !e.violates())
    }
}

fn potential_pairs(records: &[IterateRecord]) -> impl Iterator<Item = (&IterateRecord, &IterateRecord, f64, f64)> {
    records.windows(2).filter_map(|w| match (w[0].potential, w[1].potential) {
        (Some(a), Some(b)) if w[1].k == w[0].k + 1 => Some((&w[0], &w[1], a, b)),
        _ => None,
    })
}

/// Checks `V_{k+1} <= V_k + (eta^2 L^2 / (1 - eta^2 L^2)) ||eta F(z_{k+1}) + eta c_{k+1}||^2`
/// along an EAG trace. With `eta L >= 1` the allowed increase is taken as 0
/// and `precondition_met` is false.
pub fn check_v_descent(records: &[IterateRecord], eta: f64, lipschitz: f64) -> PotentialTrace {
    let p = (eta * lipschitz).powi(2);
    let precondition_met = p > 0.0 && p < 1.0;
    let entries = potential_pairs(records)
        .map(|(cur, next, v, v_next)| PotentialEntry {
            k: cur.k,
            potential: v,
            allowed_increase: v_allowed_increase(eta, lipschitz, next.cert_residual).unwrap_or(0.0),
            observed_increase: v_next - v,
        })
        .collect();
    PotentialTrace { kind: PotentialKind::V, entries, precondition_met }
}

/// Checks `U_{k+1} <= U_k` along an AS trace.
pub fn check_u_descent(records: &[IterateRecord], eta: f64, rho: f64) -> PotentialTrace {
    let entries = potential_pairs(records)
        .map(|(cur, _, u, u_next)| PotentialEntry {
            k: cur.k,
            potential: u,
            allowed_increase: 0.0,
            observed_increase: u_next - u,
        })
        .collect();
    PotentialTrace { kind: PotentialKind::U, entries, precondition_met: eta > -2.0 * rho && eta > 0.0 }
}

fn require_eag_step(eta: f64, lipschitz: f64) -> Result<f64> {
    let x = eta * lipschitz;
    if !(x > 0.0 && 3.0 * x * x < 1.0) {
        return Err(Error::PreconditionViolation(format!(
            "EAG envelope needs 0 < eta L < 1/sqrt(3), got eta L = {x}"
        )));
    }
    Ok(x)
}

fn require_t(t: usize) -> Result<f64> {
    if t == 0 {
        return Err(Error::InvalidParameter("envelope needs T >= 1".into()));
    }
    Ok(t as f64)
}

/// Bound on `||F(z_T)||^2` for unconstrained EAG.
pub fn envelope_eag_unconstrained(t: usize, eta: f64, lipschitz: f64, d: f64) -> Result<f64> {
    let x = require_eag_step(eta, lipschitz)?;
    let t = require_t(t)?;
    Ok(4.0 * (1.0 + x).powi(2) / (x * x * (1.0 - 3.0 * x * x)) * (d * d * lipschitz * lipschitz) / (t * t))
}

/// Bound on `||F(z_T) + c_T||^2` for constrained EAG.
pub fn envelope_eag_constrained(t: usize, eta: f64, lipschitz: f64, d: f64) -> Result<f64> {
    let x = require_eag_step(eta, lipschitz)?;
    let t = require_t(t)?;
    Ok(44.0 / (x * x * (1.0 - 3.0 * x * x)) * (d * d * lipschitz * lipschitz) / (t * t))
}

/// Bound on the squared tangent residual at `z_T` for AS, with
/// `H_0^2 = 4 ||z_1 - z_0||^2 + ||z_0 - z*||^2`.
pub fn envelope_as(t: usize, eta: f64, rho: f64, lipschitz: f64, h0: f64) -> Result<f64> {
    if !(eta > (-2.0 * rho).max(0.0) && eta * lipschitz < 1.0 && rho <= 0.0) {
        return Err(Error::PreconditionViolation(format!(
            "AS envelope needs rho <= 0 and eta in (max(0, -2 rho), 1/L), got eta = {eta}, rho = {rho}, L = {lipschitz}"
        )));
    }
    let t = require_t(t)?;
    let s = eta + 2.0 * rho;
    Ok(4.0 / (s * s * lipschitz * lipschitz) * (h0 * h0 * lipschitz * lipschitz) / (t * t))
}

/// `H_0 = sqrt(4 ||z_1 - z_0||^2 + ||z_0 - z*||^2)`.
pub fn h0(z0: &DenseVector, z1: &DenseVector, z_star: &DenseVector) -> f64 {
    (4.0 * z1.dist(z0).powi(2) + z0.dist(z_star).powi(2)).sqrt()
}

/// Upper bound on `V_1` for constrained EAG.
pub fn v1_bound(eta: f64, lipschitz: f64, d: f64) -> f64 {
    let x = eta * lipschitz;
    (1.0 + x + x * x) * (2.0 + 2.0 * x + x * x) / (1.0 - x * x) * d * d
}

/// Upper bound on `V_1` for unconstrained EAG: `(eta^2 L^2 + 2 eta L) D^2`.
pub fn v1_bound_unconstrained(eta: f64, lipschitz: f64, d: f64) -> f64 {
    let x = eta * lipschitz;
    (x * x + 2.0 * x) * d * d
}

/// Upper bound on `U_1` in terms of `||z_1 - z_0||`.
pub fn u1_bound(eta: f64, lipschitz: f64, step: f64) -> f64 {
    let x = eta * lipschitz;
    (1.0 + x) * (3.0 + x) / 2.0 * step * step
}

/// Indices where `V_k >= (k(k+1)/4) ||eta F + eta c||^2 - D^2` fails.
pub fn check_v_lower_bound(records: &[IterateRecord], eta: f64, d: f64) -> Vec<usize> {
    records
        .iter()
        .filter_map(|r| {
            let v = r.potential?;
            let k = r.k as f64;
            let lower = k * (k + 1.0) / 4.0 * (eta * r.cert_residual).powi(2) - d * d;
            (v < lower - DESCENT_TOL * (1.0 + v.abs())).then_some(r.k)
        })
        .collect()
}

fn is_unconstrained(a: &MaxMonotoneOperator) -> bool {
    matches!(
        a,
        MaxMonotoneOperator::Zero { .. } | MaxMonotoneOperator::NormalCone(ConvexSet::FullSpace { .. })
    )
}

/// Pointwise check of the applicable last-iterate envelope for every record.
pub fn assess_envelope(
    problem: &ProblemInstance,
    config: &SolverConfig,
    z0: &DenseVector,
    z1: Option<&DenseVector>,
    records: &[IterateRecord],
) -> EnvelopeVerdict {
    let not = |reason: &str| EnvelopeVerdict::NotAssessable { reason: reason.to_string() };
    if records.is_empty() {
        return EnvelopeVerdict::Holds { margin: 1.0 };
    }
    let Some(z_star) = problem.z_star.as_ref() else {
        return not("no known solution");
    };
    let d = z0.dist(z_star);
    let lip = problem.lipschitz;
    let eta = config.eta;
    let bound_sq: Box<dyn Fn(usize) -> Result<f64>> = match config.algorithm {
        Algorithm::Eg => return not("EG has no last-iterate envelope"),
        Algorithm::Eag if config.delta != 0.0 => return not("no envelope for delta > 0"),
        Algorithm::Eag if is_unconstrained(&problem.resolvent) => {
            Box::new(move |t| envelope_eag_unconstrained(t, eta, lip, d))
        }
        Algorithm::Eag => Box::new(move |t| envelope_eag_constrained(t, eta, lip, d)),
        Algorithm::As => {
            if config.rho > problem.rho {
                return not("solver rho exceeds the problem's comonotonicity modulus");
            }
            let Some(z1) = z1 else {
                return not("z_1 unavailable");
            };
            let h = h0(z0, z1, z_star);
            let rho = config.rho;
            Box::new(move |t| envelope_as(t, eta, rho, lip, h))
        }
    };
    let mut margin = f64::INFINITY;
    let mut first_violation = None;
    for r in records {
        let bound = match bound_sq(r.k) {
            Ok(b) => b.sqrt(),
            Err(e) => return not(&e.to_string()),
        };
        let (ok, m) = if bound > 0.0 {
            (r.cert_residual <= bound * (1.0 + ENVELOPE_TOL), (bound - r.cert_residual) / bound)
        } else {
            (r.cert_residual == 0.0, if r.cert_residual == 0.0 { 1.0 } else { f64::NEG_INFINITY })
        };
        margin = margin.min(m);
        if !ok && first_violation.is_none() {
            first_violation = Some(r.k);
        }
    }
    match first_violation {
        Some(first_k) => EnvelopeVerdict::Violated { first_k, margin },
        None => EnvelopeVerdict::Holds { margin },
    }
}

/// Residual of an algebraic identity: `|LHS - RHS|` and the largest
/// magnitude among the summed terms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IdentityResidual {
    pub abs: f64,
    pub max_term: f64,
}

impl IdentityResidual {
    pub fn relative(&self) -> f64 {
        self.abs / (1.0 + self.max_term)
    }

    pub fn balances(&self) -> bool {
        self.relative() <= IDENTITY_TOL
    }
}

fn residual_of(lhs: &[f64], rhs: &[f64]) -> IdentityResidual {
    let l: f64 = lhs.iter().sum();
    let r: f64 = rhs.iter().sum();
    let max_term = lhs.iter().chain(rhs).fold(0.0_f64, |m, t| m.max(t.abs()));
    IdentityResidual { abs: (l - r).abs(), max_term }
}

/// Inputs to the EAG identity; `u3` is derived from its defining constraint.
#[derive(Debug, Clone, PartialEq)]
pub struct EagIdentityInputs {
    pub x0: DenseVector,
    pub x1: DenseVector,
    pub x2: DenseVector,
    pub x3: DenseVector,
    pub y1: DenseVector,
    pub y2: DenseVector,
    pub y3: DenseVector,
    pub u1: DenseVector,
}

/// Inputs to the AS identity; `u1` and `u3` are derived.
#[derive(Debug, Clone, PartialEq)]
pub struct AsIdentityInputs {
    pub x0: DenseVector,
    pub x1: DenseVector,
    pub x2: DenseVector,
    pub x3: DenseVector,
    pub y1: DenseVector,
    pub y2: DenseVector,
    pub y3: DenseVector,
}

/// EAG identity with `u3 = x1 - y2 + (x0 - x1)/(q+1) - x3`.
pub fn verify_identity_eag(inp: &EagIdentityInputs, p: f64, q: f64) -> Result<IdentityResidual> {
    eag_identity(inp, p, q, 0.0)
}

/// Same as [`verify_identity_eag`] with the leading coefficient multiplied
/// by `1 + perturbation`. A nonzero perturbation must unbalance the identity.
pub fn verify_identity_eag_perturbed(
    inp: &EagIdentityInputs,
    p: f64,
    q: f64,
    perturbation: f64,
) -> Result<IdentityResidual> {
    eag_identity(inp, p, q, perturbation)
}

fn eag_identity(inp: &EagIdentityInputs, p: f64, q: f64, perturbation: f64) -> Result<IdentityResidual> {
    if !(p > 0.0 && q > 0.0) {
        return Err(Error::InvalidParameter(format!("identity needs p > 0 and q > 0, got p = {p}, q = {q}")));
    }
    let EagIdentityInputs { x0, x1, x2, x3, y1, y2, y3, u1 } = inp;
    check_dims(&[x0, x1, x2, x3, y1, y2, y3, u1])?;
    let a = 1.0 / (q + 1.0);
    let qq = q * (q + 1.0);
    let u3 = &(&x1.add_scaled(a, &(x0 - x1)) - y2) - x3;
    let s1 = y1 + u1;
    let s3 = y3 + &u3;
    let dy23 = y2 - y3;
    let dx23 = x2 - x3;
    let lhs = [
        (1.0 + perturbation) * qq / 2.0 * s1.norm_sq(),
        q * s1.dot(&(x1 - x0)),
        -(q + 1.0) * (q + 2.0) / 2.0 * s3.norm_sq(),
        -(q + 1.0) * s3.dot(&(x3 - x0)),
        -qq / (2.0 * p) * (p * dx23.norm_sq() - dy23.norm_sq()),
        -qq * (y3 - y1).dot(&(x3 - x1)),
        -qq * (&(x1 - y1) - x2).add_scaled(a, &(x0 - x1)).dot(&dx23),
        -qq * u3.dot(&(x3 - x1)),
        -qq * u1.dot(&(x1 - x2)),
    ];
    let rhs = [
        qq / 2.0 * (&(&(x2 - x1) + &s1)).add_scaled(a, &(x1 - x0)).norm_sq(),
        (1.0 - p) * qq / (2.0 * p) * dy23.norm_sq(),
        (q + 1.0) * dy23.dot(&s3),
    ];
    Ok(residual_of(&lhs, &rhs))
}

/// AS identity with `u1`, `u3` derived from their defining constraints.
pub fn verify_identity_as(inp: &AsIdentityInputs, p: f64, q: f64, r: f64) -> Result<IdentityResidual> {
    as_identity(inp, p, q, r, 0.0).map(|(res, _)| res)
}

pub fn verify_identity_as_perturbed(
    inp: &AsIdentityInputs,
    p: f64,
    q: f64,
    r: f64,
    perturbation: f64,
) -> Result<IdentityResidual> {
    as_identity(inp, p, q, r, perturbation).map(|(res, _)| res)
}

/// `u1` implied by the AS identity's first constraint.
pub fn as_identity_u1(inp: &AsIdentityInputs, q: f64, r: f64) -> Result<DenseVector> {
    if (1.0 + 2.0 * r).abs() < 1e-12 {
        return Err(Error::DegenerateR((1.0 + 2.0 * r).abs()));
    }
    if !(q > 0.0) {
        return Err(Error::InvalidParameter(format!("identity needs q > 0, got {q}")));
    }
    let AsIdentityInputs { x0, x1, x2, y1, .. } = inp;
    let s = q / (q + 1.0) * (1.0 + 2.0 * r);
    let num = &x1.add_scaled(1.0 / (q + 1.0), &(x0 - x1)).add_scaled(-s, y1) - x2;
    Ok(num.scale(1.0 / s))
}

fn as_identity(
    inp: &AsIdentityInputs,
    p: f64,
    q: f64,
    r: f64,
    perturbation: f64,
) -> Result<(IdentityResidual, DenseVector)> {
    if (1.0 + 2.0 * r).abs() < 1e-12 {
        return Err(Error::DegenerateR((1.0 + 2.0 * r).abs()));
    }
    if !(p > 0.0 && q > 0.0) {
        return Err(Error::InvalidParameter(format!("identity needs p > 0 and q > 0, got p = {p}, q = {q}")));
    }
    let AsIdentityInputs { x0, x1, x2, x3, y1, y2, y3 } = inp;
    check_dims(&[x0, x1, x2, x3, y1, y2, y3])?;
    let u1 = as_identity_u1(inp, q, r)?;
    let s1 = y1 + &u1;
    let u3 = (&(&x1.add_scaled(1.0 / (q + 1.0), &(x0 - x1)) - y2) - x3)
        .add_scaled(-2.0 * r * q / (q + 1.0), &s1);
    let s3 = y3 + &u3;
    let dx23 = x2 - x3;
    let ds = &s3 - &s1;
    let q1 = q + 1.0;
    let lhs = [
        (1.0 + perturbation) * (q * q / 2.0 * (1.0 + 2.0 * r) - r * q) * s1.norm_sq(),
        q * s1.dot(&(x1 - x0)),
        -(q1 * q1 / 2.0 * (1.0 + 2.0 * r) - r * q1) * s3.norm_sq(),
        -q1 * s3.dot(&(x3 - x0)),
        -q1 * q1 / 2.0 * (p * dx23.norm_sq() - (y2 - y3).norm_sq()),
        -q * q1 * (ds.dot(&(x3 - x1)) - r * ds.norm_sq()),
    ];
    let rhs = [(1.0 - p) * q1 * q1 / 2.0 * dx23.norm_sq()];
    Ok((residual_of(&lhs, &rhs), u1))
}

/// Substitutes each solver step into the matching identity.
///
/// EAG steps use `x_t = z_{k+(t-1)/2}`, `y_t = eta F(x_t)`, `u1 = eta c_k`,
/// `p = eta^2 L^2`, `q = k + delta`. AS steps use the same substitution with
/// `r = rho/eta`; there `u1` is rebuilt from the iterates, and its distance
/// to the solver's own `eta c_k` is tracked as well. Steps with `q = 0` are
/// skipped.
#[derive(Debug, Clone)]
pub struct IdentityTraceObserver {
    pub p: f64,
    pub delta: f64,
    pub rho: f64,
    pub checked: usize,
    pub worst_relative: f64,
    pub worst_certificate_gap: f64,
    pub errors: Vec<String>,
}

impl IdentityTraceObserver {
    pub fn new(eta: f64, lipschitz: f64, delta: f64, rho: f64) -> Self {
        Self {
            p: (eta * lipschitz).powi(2),
            delta,
            rho,
            checked: 0,
            worst_relative: 0.0,
            worst_certificate_gap: 0.0,
            errors: Vec::new(),
        }
    }

    pub fn all_balance(&self) -> bool {
        self.errors.is_empty() && self.worst_relative <= IDENTITY_TOL
    }
}

impl StepObserver for IdentityTraceObserver {
    fn on_step(&mut self, v: &StepView<'_>) {
        let k_prev = v.k - 1;
        let eta = v.eta;
        let result = match v.algorithm {
            Algorithm::Eag => {
                let q = k_prev as f64 + self.delta;
                let Some(prev_c) = v.prev_c else { return };
                if q <= 0.0 {
                    return;
                }
                let inp = EagIdentityInputs {
                    x0: v.z0.clone(),
                    x1: v.prev_z.clone(),
                    x2: v.half.clone(),
                    x3: v.z.clone(),
                    y1: v.prev_fz.scale(eta),
                    y2: v.f_half.scale(eta),
                    y3: v.fz.scale(eta),
                    u1: prev_c.scale(eta),
                };
                verify_identity_eag(&inp, self.p, q)
            }
            Algorithm::As => {
                if k_prev == 0 {
                    return;
                }
                let q = k_prev as f64;
                let r = self.rho / eta;
                let inp = AsIdentityInputs {
                    x0: v.z0.clone(),
                    x1: v.prev_z.clone(),
                    x2: v.half.clone(),
                    x3: v.z.clone(),
                    y1: v.prev_fz.scale(eta),
                    y2: v.f_half.scale(eta),
                    y3: v.fz.scale(eta),
                };
                if let (Some(prev_c), Ok(u1)) = (v.prev_c, as_identity_u1(&inp, q, r)) {
                    let gap = u1.dist(&prev_c.scale(eta)) / (1.0 + u1.norm());
                    self.worst_certificate_gap = self.worst_certificate_gap.max(gap);
                }
                verify_identity_as(&inp, self.p, q, r)
            }
            Algorithm::Eg => return,
        };
        match result {
            Ok(res) => {
                self.checked += 1;
                self.worst_relative = self.worst_relative.max(res.relative());
            }
            Err(e) => self.errors.push(format!("k = {}: {e}", v.k)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequenceVerdict {
    /// First `k` where the hypothesis fails, if any.
    pub hypothesis_failure: Option<usize>,
    /// `None` when the hypothesis failed (conclusion not asserted).
    pub conclusion_holds: Option<bool>,
    pub conclusion_failure: Option<usize>,
    /// Smallest `(bound_k - a_k) / bound_k` over the checked range.
    pub min_margin: f64,
}

impl SequenceVerdict {
    pub fn passed(&self) -> bool {
        self.hypothesis_failure.is_none() && self.conclusion_holds == Some(true)
    }
}

/// For `a[i] = a_{i+2}`: verify `(k^2/4) a_k <= C1 + (p/(1-p)) sum_{t=2}^{k-1} a_t`
/// for every `k`, then assert `a_k <= 4 C1 / ((1 - 3p) k^2)`.
pub fn check_sequence_bound(a: &[f64], c1: f64, p: f64) -> Result<SequenceVerdict> {
    if !(c1 >= 0.0) {
        return Err(Error::InvalidParameter(format!("C1 must be >= 0, got {c1}")));
    }
    if !(p > 0.0 && p < 1.0 / 3.0) {
        return Err(Error::PreconditionViolation(format!("p must lie in (0, 1/3), got {p}")));
    }
    let ratio = p / (1.0 - p);
    let mut partial = 0.0;
    for (i, &ak) in a.iter().enumerate() {
        let k = (i + 2) as f64;
        let rhs = c1 + ratio * partial;
        if k * k / 4.0 * ak > rhs + 1e-12 * (1.0 + rhs.abs()) {
            return Ok(SequenceVerdict {
                hypothesis_failure: Some(i + 2),
                conclusion_holds: None,
                conclusion_failure: None,
                min_margin: f64::NAN,
            });
        }
        partial += ak;
    }
    let mut min_margin = f64::INFINITY;
    let mut conclusion_failure = None;
    for (i, &ak) in a.iter().enumerate() {
        let k = (i + 2) as f64;
        let bound = 4.0 * c1 / ((1.0 - 3.0 * p) * k * k);
        if ak > bound + 1e-12 && conclusion_failure.is_none() {
            conclusion_failure = Some(i + 2);
        }
        if bound > 0.0 {
            min_margin = min_margin.min((bound - ak) / bound);
        }
    }
    Ok(SequenceVerdict {
        hypothesis_failure: None,
        conclusion_holds: Some(conclusion_failure.is_none()),
        conclusion_failure,
        min_margin,
    })
}

/// `a_k = ||eta F(z_k) + eta c_k||^2 / ||z_0 - z*||^2` for `k >= 2`.
pub fn eag_sequence(records: &[IterateRecord], eta: f64, d: f64) -> Vec<f64> {
    records
        .iter()
        .filter(|r| r.k >= 2)
        .map(|r| (eta * r.cert_residual).powi(2) / (d * d))
        .collect()
}
