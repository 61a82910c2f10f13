//! Projected EAG, accelerated forward-backward splitting (AS), and the
//! extragradient baseline, as pure step functions plus a driver loop.
//!
//! Every scheme caches `F(z_k)` in its state, so a step costs exactly two
//! evaluations of `F`: one at the half-step and one at the new iterate.

use crate::diagnostics;
use crate::error::{Error, Result};
use crate::operators::{
    extract_certificate, ConeCertificate, ConvexSet, LipschitzOperator, MaxMonotoneOperator,
};
use crate::problems::ProblemInstance;
use crate::residuals::natural_residual_with;
use crate::types::{
    fit_rate_exponent_or_sentinel, Algorithm, DenseVector, EnvelopeVerdict, IterateRecord, RunReport,
    SolverConfig, Termination,
};

/// `k_min` used for the fitted rate exponent stored in a [`RunReport`].
pub const FIT_K_MIN: usize = 50;

/// Iterate bundle of projected EAG.
#[derive(Debug, Clone, PartialEq)]
pub struct EagState {
    pub k: usize,
    pub z0: DenseVector,
    pub z: DenseVector,
    /// `F(z)`.
    pub fz: DenseVector,
    /// `c_k`; defined for `k >= 1`.
    pub cert: Option<ConeCertificate>,
    pub half: Option<DenseVector>,
    pub f_half: Option<DenseVector>,
}

impl EagState {
    pub fn new(f: &LipschitzOperator, set: &ConvexSet, z0: DenseVector) -> Result<Self> {
        if !set.contains(&z0) {
            return Err(Error::InfeasibleStart);
        }
        let fz = f.eval(&z0)?;
        Ok(Self { k: 0, z: z0.clone(), z0, fz, cert: None, half: None, f_half: None })
    }
}

/// One EAG step with anchor weight `1/(k + delta + 1)`.
pub fn eag_step(
    state: &EagState,
    f: &LipschitzOperator,
    set: &ConvexSet,
    eta: f64,
    delta: f64,
) -> Result<EagState> {
    let a = 1.0 / (state.k as f64 + delta + 1.0);
    // z_k + a (z_0 - z_k)
    let anchored = state.z.add_scaled(a, &(&state.z0 - &state.z));
    let half = set.project(&anchored.add_scaled(-eta, &state.fz))?;
    let f_half = f.eval(&half)?;
    let w = anchored.add_scaled(-eta, &f_half);
    let z = set.project(&w)?;
    let c = (&w - &z).scale(1.0 / eta);
    let fz = f.eval(&z)?;
    let k = state.k + 1;
    if !(z.is_finite() && fz.is_finite() && c.is_finite() && half.is_finite()) {
        return Err(Error::NonFiniteIterate { k });
    }
    Ok(EagState {
        k,
        z0: state.z0.clone(),
        cert: Some(ConeCertificate { c, at: z.clone(), eta }),
        z,
        fz,
        half: Some(half),
        f_half: Some(f_half),
    })
}

/// Iterate bundle of AS. `c_0 = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct AsState {
    pub k: usize,
    pub z0: DenseVector,
    pub z: DenseVector,
    pub fz: DenseVector,
    pub cert: ConeCertificate,
    pub half: Option<DenseVector>,
    pub f_half: Option<DenseVector>,
}

impl AsState {
    pub fn new(f: &LipschitzOperator, z0: DenseVector, eta: f64) -> Result<Self> {
        let fz = f.eval(&z0)?;
        Ok(Self {
            k: 0,
            cert: ConeCertificate::zero(z0.clone(), eta),
            z: z0.clone(),
            z0,
            fz,
            half: None,
            f_half: None,
        })
    }
}

pub fn as_step(
    state: &AsState,
    f: &LipschitzOperator,
    a: &MaxMonotoneOperator,
    eta: f64,
    rho: f64,
) -> Result<AsState> {
    if !(eta > 0.0 && eta > -2.0 * rho) {
        return Err(Error::StepSizeViolation { eta, lower: (-2.0 * rho).max(0.0) });
    }
    let kf = state.k as f64;
    let anchored = state.z.add_scaled(1.0 / (kf + 1.0), &(&state.z0 - &state.z));
    let tangent = &state.fz + &state.cert.c;
    let half = anchored.add_scaled(-kf * (eta + 2.0 * rho) / (kf + 1.0), &tangent);
    let f_half = f.eval(&half)?;
    let w = anchored
        .add_scaled(-eta, &f_half)
        .add_scaled(-2.0 * kf * rho / (kf + 1.0), &tangent);
    let (z, cert) = extract_certificate(a, eta, &w)?;
    let fz = f.eval(&z)?;
    let k = state.k + 1;
    if !(z.is_finite() && fz.is_finite() && cert.c.is_finite() && half.is_finite()) {
        return Err(Error::NonFiniteIterate { k });
    }
    Ok(AsState { k, z0: state.z0.clone(), z, fz, cert, half: Some(half), f_half: Some(f_half) })
}

/// Iterate bundle of the extragradient baseline.
#[derive(Debug, Clone, PartialEq)]
pub struct EgState {
    pub k: usize,
    pub z: DenseVector,
    pub fz: DenseVector,
    /// Normal-cone element produced by the second projection.
    pub cert: Option<ConeCertificate>,
    pub half: Option<DenseVector>,
    pub f_half: Option<DenseVector>,
}

impl EgState {
    pub fn new(f: &LipschitzOperator, set: &ConvexSet, z0: DenseVector) -> Result<Self> {
        if !set.contains(&z0) {
            return Err(Error::InfeasibleStart);
        }
        let fz = f.eval(&z0)?;
        Ok(Self { k: 0, z: z0, fz, cert: None, half: None, f_half: None })
    }
}

pub fn eg_step(state: &EgState, f: &LipschitzOperator, set: &ConvexSet, eta: f64) -> Result<EgState> {
    let half = set.project(&state.z.add_scaled(-eta, &state.fz))?;
    let f_half = f.eval(&half)?;
    let w = state.z.add_scaled(-eta, &f_half);
    let z = set.project(&w)?;
    let c = (&w - &z).scale(1.0 / eta);
    let fz = f.eval(&z)?;
    let k = state.k + 1;
    if !(z.is_finite() && fz.is_finite() && c.is_finite() && half.is_finite()) {
        return Err(Error::NonFiniteIterate { k });
    }
    Ok(EgState {
        k,
        cert: Some(ConeCertificate { c, at: z.clone(), eta }),
        z,
        fz,
        half: Some(half),
        f_half: Some(f_half),
    })
}

/// Everything a diagnostics hook may want to see about the transition
/// from `z_{k-1}` to `z_k`.
#[derive(Debug, Clone, Copy)]
pub struct StepView<'a> {
    pub algorithm: Algorithm,
    /// Index of the new iterate.
    pub k: usize,
    pub eta: f64,
    pub z0: &'a DenseVector,
    pub prev_z: &'a DenseVector,
    pub prev_fz: &'a DenseVector,
    /// `c_{k-1}`; `None` when the scheme has no certificate there yet.
    pub prev_c: Option<&'a DenseVector>,
    pub half: &'a DenseVector,
    pub f_half: &'a DenseVector,
    pub z: &'a DenseVector,
    pub fz: &'a DenseVector,
    pub c: &'a DenseVector,
}

/// Per-step callback used by the driver.
pub trait StepObserver {
    fn on_step(&mut self, view: &StepView<'_>);
}

impl StepObserver for () {
    fn on_step(&mut self, _view: &StepView<'_>) {}
}

impl<F: FnMut(&StepView<'_>)> StepObserver for F {
    fn on_step(&mut self, view: &StepView<'_>) {
        self(view)
    }
}

/// Read access shared by the three iterate bundles.
pub trait IterateState {
    fn k(&self) -> usize;
    fn z(&self) -> &DenseVector;
    fn fz(&self) -> &DenseVector;
    fn certificate(&self) -> Option<&DenseVector>;
    fn half(&self) -> Option<&DenseVector>;
    fn f_half(&self) -> Option<&DenseVector>;
}

macro_rules! iterate_state {
    ($ty:ty, |$s:ident| $cert:expr) => {
        impl IterateState for $ty {
            fn k(&self) -> usize {
                self.k
            }
            fn z(&self) -> &DenseVector {
                &self.z
            }
            fn fz(&self) -> &DenseVector {
                &self.fz
            }
            fn certificate(&self) -> Option<&DenseVector> {
                let $s = self;
                $cert
            }
            fn half(&self) -> Option<&DenseVector> {
                self.half.as_ref()
            }
            fn f_half(&self) -> Option<&DenseVector> {
                self.f_half.as_ref()
            }
        }
    };
}

iterate_state!(EagState, |s| s.cert.as_ref().map(|c| &c.c));
iterate_state!(AsState, |s| Some(&s.cert.c));
iterate_state!(EgState, |s| s.cert.as_ref().map(|c| &c.c));

fn notify<S: IterateState>(
    observer: &mut dyn StepObserver,
    algorithm: Algorithm,
    eta: f64,
    z0: &DenseVector,
    prev: &S,
    next: &S,
) {
    let (Some(half), Some(f_half), Some(c)) = (next.half(), next.f_half(), next.certificate()) else {
        return;
    };
    observer.on_step(&StepView {
        algorithm,
        k: next.k(),
        eta,
        z0,
        prev_z: prev.z(),
        prev_fz: prev.fz(),
        prev_c: prev.certificate(),
        half,
        f_half,
        z: next.z(),
        fz: next.fz(),
        c,
    });
}

enum Scheme {
    Eag(EagState),
    As(AsState),
    Eg(EgState),
}

impl Scheme {
    fn state(&self) -> &dyn IterateState {
        match self {
            Scheme::Eag(s) => s,
            Scheme::As(s) => s,
            Scheme::Eg(s) => s,
        }
    }
}

/// Run `config.algorithm` on `problem` from `z0`.
///
/// Divergence is not an error: the partial trace is returned with
/// [`Termination::Diverged`]. Invalid configurations are rejected before
/// the first iteration.
pub fn run(
    problem: &ProblemInstance,
    config: &SolverConfig,
    z0: &DenseVector,
    observer: &mut dyn StepObserver,
) -> Result<RunReport> {
    config.validate()?;
    problem.check_admissible(config.algorithm)?;
    if z0.dim() != problem.dim() {
        return Err(Error::DimMismatch { expected: problem.dim(), found: z0.dim() });
    }
    if !z0.is_finite() {
        return Err(Error::NonFinite);
    }
    let alg = config.algorithm;
    let f = &problem.operator;
    let a = &problem.resolvent;
    let eta = config.eta;
    let set = match alg {
        Algorithm::Eag | Algorithm::Eg => Some(problem.feasible_set().ok_or_else(|| {
            Error::Inadmissible { algorithm: alg.to_string(), problem: problem.name.clone() }
        })?),
        Algorithm::As => None,
    };
    let mut scheme = match (alg, &set) {
        (Algorithm::Eag, Some(set)) => Scheme::Eag(EagState::new(f, set, z0.clone())?),
        (Algorithm::Eg, Some(set)) => Scheme::Eg(EgState::new(f, set, z0.clone())?),
        _ => Scheme::As(AsState::new(f, z0.clone(), eta)?),
    };

    let mut records: Vec<IterateRecord> = Vec::with_capacity(config.max_iters);
    let mut termination = Termination::MaxIters;
    let mut z1: Option<DenseVector> = None;
    let mut prev_potential: Option<f64> = None;

    for _ in 0..config.max_iters {
        let step = match (&scheme, &set) {
            (Scheme::Eag(s), Some(set)) => eag_step(s, f, set, eta, config.delta).map(|n| {
                notify(observer, alg, eta, z0, s, &n);
                Scheme::Eag(n)
            }),
            (Scheme::Eg(s), Some(set)) => eg_step(s, f, set, eta).map(|n| {
                notify(observer, alg, eta, z0, s, &n);
                Scheme::Eg(n)
            }),
            (Scheme::As(s), _) => as_step(s, f, a, eta, config.rho).map(|n| {
                notify(observer, alg, eta, z0, s, &n);
                Scheme::As(n)
            }),
            _ => unreachable!("projection schemes always carry a feasible set"),
        };
        scheme = match step {
            Ok(next) => next,
            Err(Error::NonFiniteIterate { k }) => {
                termination = Termination::Diverged { k };
                break;
            }
            Err(e) => return Err(e),
        };

        let state = scheme.state();
        let (k, z, fz) = (state.k(), state.z(), state.fz());
        let c = state.certificate().expect("certificate exists after a step");
        if k == 1 {
            z1 = Some(z.clone());
        }
        let cert_residual = (fz + c).norm();
        let natural_residual = natural_residual_with(fz, a, z)?;
        let potential = match alg {
            Algorithm::Eag => {
                Some(diagnostics::potential_v_shifted(k as f64 + config.delta, eta, fz, c, z, z0)?)
            }
            Algorithm::As => Some(diagnostics::potential_u(k, eta, config.rho, fz, c, z, z0)?),
            Algorithm::Eg => None,
        };
        let descent_slack = match (prev_potential, potential) {
            (Some(prev), Some(cur)) => {
                let allowed = match alg {
                    Algorithm::Eag => diagnostics::v_allowed_increase(eta, problem.lipschitz, cert_residual),
                    _ => Some(0.0),
                };
                allowed.map(|al| al - (cur - prev))
            }
            _ => None,
        };
        prev_potential = potential;
        if !cert_residual.is_finite()
            || !natural_residual.is_finite()
            || potential.is_some_and(|p| !p.is_finite())
        {
            termination = Termination::Diverged { k };
            break;
        }
        records.push(IterateRecord {
            k,
            cert_residual,
            natural_residual,
            potential,
            descent_slack,
            distance_to_solution: problem.z_star.as_ref().map(|zs| z.dist(zs)),
        });
        if config.target_residual > 0.0 && cert_residual <= config.target_residual {
            termination = Termination::TargetReached { k };
            break;
        }
    }

    let envelope = diagnostics::assess_envelope(problem, config, z0, z1.as_ref(), &records);
    let (envelope_ok, envelope_margin) = match &envelope {
        EnvelopeVerdict::Holds { margin } => (true, *margin),
        EnvelopeVerdict::Violated { margin, .. } => (false, *margin),
        EnvelopeVerdict::NotAssessable { .. } => (false, f64::NAN),
    };
    Ok(RunReport {
        fitted_rate_exponent: fit_rate_exponent_or_sentinel(&records, FIT_K_MIN).ok(),
        records,
        envelope,
        envelope_ok,
        envelope_margin,
        termination,
        config_echo: config.clone(),
    })
}
