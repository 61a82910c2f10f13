//! Subcommand implementations. Each returns an [`Outcome`] whose
//! `failures` decide the exit code, or a [`CliError`] for bad input.

use std::path::{Path, PathBuf};

use inclusion_accel::diagnostics::{
    check_sequence_bound, check_u_descent, check_v_descent, eag_sequence, verify_identity_as,
    verify_identity_as_perturbed, verify_identity_eag, verify_identity_eag_perturbed, AsIdentityInputs,
    EagIdentityInputs, IdentityTraceObserver, IDENTITY_TOL,
};
use inclusion_accel::operators::SetKind;
use inclusion_accel::problems::{make_identity_1d, ProblemInstance, ZOO};
use inclusion_accel::residuals::{gap_mvi_grid, gap_svi, natural_residual, GapQuery, GapVariant};
use inclusion_accel::solvers::{run, StepObserver, StepView};
use inclusion_accel::{Algorithm, DenseVector, EnvelopeVerdict, Error, SolverConfig, Termination};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{expand_template, Checks, ExperimentConfig};
use crate::output::{render_trace, write_atomic};
use crate::CliError;

pub const THREADS_ENV: &str = "INCLUSION_ACCEL_THREADS";
/// Slope every anchored method must reach in `compare`.
pub const SLOPE_THRESHOLD: f64 = -0.9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckStatus {
    Pass,
    Fail,
    Skipped,
}

#[derive(Debug, Clone, Serialize)]
pub struct CheckOutcome {
    pub check: &'static str,
    pub status: CheckStatus,
    pub detail: String,
}

impl CheckOutcome {
    fn new(check: &'static str, ok: bool, detail: String) -> Self {
        Self { check, status: if ok { CheckStatus::Pass } else { CheckStatus::Fail }, detail }
    }

    fn skipped(check: &'static str, detail: impl Into<String>) -> Self {
        Self { check, status: CheckStatus::Skipped, detail: detail.into() }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct RunSummary {
    pub problem: String,
    pub algorithm: Algorithm,
    pub seed: u64,
    pub z0: Vec<f64>,
    pub config: SolverConfig,
    pub termination: Termination,
    pub iterations: usize,
    pub final_cert_residual: Option<f64>,
    pub fitted_rate_exponent: Option<f64>,
    pub envelope: EnvelopeVerdict,
    pub checks: Vec<CheckOutcome>,
    pub trace: PathBuf,
    pub report: PathBuf,
}

#[derive(Debug, Clone, Serialize)]
pub struct Failure {
    pub problem: String,
    pub algorithm: Option<Algorithm>,
    pub seed: Option<u64>,
    pub check: String,
    pub detail: String,
}

/// Result of a subcommand that ran to completion.
#[derive(Debug, Clone, Serialize)]
pub struct Outcome {
    pub status: &'static str,
    pub failures: Vec<Failure>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub runs: Vec<RunSummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub identities: Option<IdentityBattery>,
}

impl Outcome {
    fn new(runs: Vec<RunSummary>, identities: Option<IdentityBattery>, extra: Vec<Failure>) -> Self {
        let mut failures: Vec<Failure> = runs
            .iter()
            .flat_map(|r| {
                r.checks.iter().filter(|c| c.status == CheckStatus::Fail).map(|c| Failure {
                    problem: r.problem.clone(),
                    algorithm: Some(r.algorithm),
                    seed: Some(r.seed),
                    check: c.check.to_string(),
                    detail: c.detail.clone(),
                })
            })
            .collect();
        failures.extend(extra);
        Self { status: if failures.is_empty() { "pass" } else { "fail" }, failures, runs, identities }
    }

    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }
}

/// Worker pool capped by `INCLUSION_ACCEL_THREADS` when set.
pub fn worker_pool() -> Result<rayon::ThreadPool, CliError> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Ok(raw) = std::env::var(THREADS_ENV) {
        let n: usize = raw
            .trim()
            .parse()
            .ok()
            .filter(|n| *n >= 1)
            .ok_or_else(|| CliError::Config(format!("{THREADS_ENV} must be a positive integer, got {raw:?}")))?;
        builder = builder.num_threads(n);
    }
    builder.build().map_err(|e| CliError::Config(format!("thread pool: {e}")))
}

#[derive(Default)]
struct Recorder {
    identities: Option<IdentityTraceObserver>,
    last_z: Option<DenseVector>,
}

impl StepObserver for Recorder {
    fn on_step(&mut self, view: &StepView<'_>) {
        if let Some(obs) = self.identities.as_mut() {
            obs.on_step(view);
        }
        self.last_z = Some(view.z.clone());
    }
}

struct Job<'a> {
    problem: &'a ProblemInstance,
    config: SolverConfig,
    seed: u64,
    trace: PathBuf,
    report: PathBuf,
}

fn resolve(out_dir: &Path, rel: String) -> PathBuf {
    let p = PathBuf::from(rel);
    if p.is_absolute() {
        p
    } else {
        out_dir.join(p)
    }
}

fn plan<'a>(
    cfg: &ExperimentConfig,
    problem: &'a ProblemInstance,
    algorithms: &[Algorithm],
    out_dir: &Path,
) -> Result<Vec<Job<'a>>, CliError> {
    let distinguish = algorithms.len() * cfg.seeds.len() > 1;
    let mut jobs = Vec::new();
    for &alg in algorithms {
        let config = cfg.solver_config(alg, problem)?;
        for &seed in &cfg.seeds {
            jobs.push(Job {
                problem,
                config: config.clone(),
                seed,
                trace: resolve(out_dir, expand_template(&cfg.outputs.trace, alg, seed, distinguish)),
                report: resolve(out_dir, expand_template(&cfg.outputs.report, alg, seed, distinguish)),
            });
        }
    }
    let mut paths: Vec<&PathBuf> = jobs.iter().flat_map(|j| [&j.trace, &j.report]).collect();
    paths.sort();
    if paths.windows(2).any(|w| w[0] == w[1]) {
        return Err(CliError::Config("output templates map two runs to the same file".into()));
    }
    Ok(jobs)
}

fn execute(cfg: &ExperimentConfig, job: &Job<'_>) -> Result<RunSummary, CliError> {
    let problem = job.problem;
    let config = &job.config;
    let checks = &cfg.checks;
    let z0 = cfg.initial_point(problem, job.seed)?;
    let mut recorder = Recorder {
        identities: (checks.identities && config.algorithm != Algorithm::Eg)
            .then(|| IdentityTraceObserver::new(config.eta, problem.lipschitz, config.delta, config.rho)),
        last_z: None,
    };
    let report = run(problem, config, &z0, &mut recorder).map_err(|e| match e {
        Error::InfeasibleStart => CliError::Config(format!("seed {}: starting point outside the feasible set", job.seed)),
        e => CliError::Config(e.to_string()),
    })?;
    let outcomes = evaluate_checks(checks, problem, config, &z0, &report, &recorder);

    let summary = RunSummary {
        problem: problem.name.clone(),
        algorithm: config.algorithm,
        seed: job.seed,
        z0: z0.as_slice().to_vec(),
        config: config.clone(),
        termination: report.termination.clone(),
        iterations: report.records.len(),
        final_cert_residual: report.records.last().map(|r| r.cert_residual),
        fitted_rate_exponent: report.fitted_rate_exponent,
        envelope: report.envelope.clone(),
        checks: outcomes,
        trace: job.trace.clone(),
        report: job.report.clone(),
    };
    write_atomic(&job.trace, render_trace(&report.records).as_bytes())?;
    let json = serde_json::to_string_pretty(&summary).map_err(|e| CliError::Io(e.to_string()))?;
    write_atomic(&job.report, json.as_bytes())?;
    Ok(summary)
}

fn list_ks(ks: &[usize]) -> String {
    let shown: Vec<String> = ks.iter().take(10).map(usize::to_string).collect();
    if ks.len() > 10 {
        format!("{} ... ({} total)", shown.join(", "), ks.len())
    } else {
        shown.join(", ")
    }
}

fn evaluate_checks(
    checks: &Checks,
    problem: &ProblemInstance,
    config: &SolverConfig,
    z0: &DenseVector,
    report: &inclusion_accel::RunReport,
    recorder: &Recorder,
) -> Vec<CheckOutcome> {
    let alg = config.algorithm;
    let records = &report.records;
    let mut out = Vec::new();
    if let Termination::Diverged { k } = report.termination {
        out.push(CheckOutcome::new("finite_iterates", false, format!("non-finite iterate at k = {k}")));
    }
    if checks.v_descent {
        out.push(if alg == Algorithm::Eag {
            let trace = check_v_descent(records, config.eta, problem.lipschitz);
            let bad = trace.violations();
            CheckOutcome::new("v_descent", bad.is_empty(), format!(
                "{} transitions, violations at k = [{}]",
                trace.entries.len(),
                list_ks(&bad)
            ))
        } else {
            CheckOutcome::skipped("v_descent", "applies to EAG only")
        });
    }
    if checks.u_descent {
        out.push(if alg == Algorithm::As {
            let trace = check_u_descent(records, config.eta, config.rho);
            let bad = trace.violations();
            CheckOutcome::new("u_descent", bad.is_empty(), format!(
                "{} transitions, violations at k = [{}]",
                trace.entries.len(),
                list_ks(&bad)
            ))
        } else {
            CheckOutcome::skipped("u_descent", "applies to AS only")
        });
    }
    if checks.identities {
        out.push(match &recorder.identities {
            Some(obs) => {
                let cert_ok = alg != Algorithm::As || obs.worst_certificate_gap <= IDENTITY_TOL;
                CheckOutcome::new("identities", obs.all_balance() && cert_ok, format!(
                    "{} steps substituted, worst relative residual {:.3e}, certificate gap {:.3e}, errors {:?}",
                    obs.checked, obs.worst_relative, obs.worst_certificate_gap, obs.errors
                ))
            }
            None => CheckOutcome::skipped("identities", "EG has no identity"),
        });
    }
    if checks.envelopes {
        out.push(match &report.envelope {
            EnvelopeVerdict::Holds { margin } => {
                CheckOutcome::new("envelopes", true, format!("holds at every k, min margin {margin:.3e}"))
            }
            EnvelopeVerdict::Violated { first_k, margin } => {
                CheckOutcome::new("envelopes", false, format!("first violation at k = {first_k}, margin {margin:.3e}"))
            }
            EnvelopeVerdict::NotAssessable { reason } => CheckOutcome::skipped("envelopes", reason.clone()),
        });
    }
    if checks.sequence_bound {
        out.push(match (alg, problem.z_star.as_ref()) {
            (Algorithm::Eag, Some(zs)) if z0.dist(zs) > 0.0 => {
                let a = eag_sequence(records, config.eta, z0.dist(zs));
                let p = (config.eta * problem.lipschitz).powi(2);
                match check_sequence_bound(&a, 11.0, p) {
                    Ok(v) => CheckOutcome::new("sequence_bound", v.passed(), format!(
                        "hypothesis failure {:?}, conclusion failure {:?}, min margin {:.3e}",
                        v.hypothesis_failure, v.conclusion_failure, v.min_margin
                    )),
                    Err(e) => CheckOutcome::new("sequence_bound", false, e.to_string()),
                }
            }
            (Algorithm::Eag, Some(_)) => CheckOutcome::skipped("sequence_bound", "z_0 = z*"),
            (Algorithm::Eag, None) => CheckOutcome::skipped("sequence_bound", "no known solution"),
            _ => CheckOutcome::skipped("sequence_bound", "applies to EAG only"),
        });
    }
    if checks.gap_examples {
        out.push(gap_example());
        out.push(gap_at_last_iterate(problem, records.last().map(|r| r.cert_residual), recorder.last_z.as_ref()));
    }
    out
}

/// `F(x) = x` on `[0, 1]` at `x = 1/2`: natural residual `1/2`,
/// `Gap^SVI = 1/4`, `Gap^MVI = 1/16`.
fn gap_example() -> CheckOutcome {
    let result = (|| -> inclusion_accel::Result<(f64, f64, f64)> {
        let p = make_identity_1d()?;
        let set = p.feasible_set().expect("identity problem has a box");
        let x = DenseVector::new(vec![0.5])?;
        let nat = natural_residual(&p.operator, &p.resolvent, &x)?;
        let svi = gap_svi(&p.operator, &set, &GapQuery::new(&set, x.clone(), 1.0, GapVariant::Svi)?)?;
        let mvi = gap_mvi_grid(&p.operator, &set, &GapQuery::new(&set, x, 1.0, GapVariant::Mvi)?, 2001)?;
        Ok((nat, svi, mvi.value))
    })();
    match result {
        Ok((nat, svi, mvi)) => CheckOutcome::new(
            "gap_example",
            nat == 0.5 && (svi - 0.25).abs() <= 1e-10 && (mvi - 0.0625).abs() <= 1e-3,
            format!("natural {nat}, Gap^SVI {svi:.12}, Gap^MVI grid {mvi:.6}"),
        ),
        Err(e) => CheckOutcome::new("gap_example", false, e.to_string()),
    }
}

/// `Gap^SVI_{F,1}(z_T) <= cert_residual(z_T) + 1e-8` on monotone projection problems.
fn gap_at_last_iterate(problem: &ProblemInstance, cert: Option<f64>, z: Option<&DenseVector>) -> CheckOutcome {
    const NAME: &str = "gap_residual_bound";
    let (Some(cert), Some(z)) = (cert, z) else {
        return CheckOutcome::skipped(NAME, "empty trace");
    };
    let Some(set) = problem.feasible_set() else {
        return CheckOutcome::skipped(NAME, "A is not a normal cone");
    };
    if problem.rho != 0.0 || set.kind() == SetKind::Simplex {
        return CheckOutcome::skipped(NAME, "needs a monotone problem over a box, ball or full space");
    }
    let gap = GapQuery::new(&set, z.clone(), 1.0, GapVariant::Svi).and_then(|q| gap_svi(&problem.operator, &set, &q));
    match gap {
        Ok(g) => CheckOutcome::new(NAME, g <= cert + 1e-8, format!("Gap^SVI(z_T) {g:.6e} vs residual {cert:.6e}")),
        Err(e) => CheckOutcome::new(NAME, false, e.to_string()),
    }
}

pub fn cmd_run(config_path: &Path, out_dir: &Path) -> Result<Outcome, CliError> {
    let cfg = ExperimentConfig::load(config_path)?;
    let problem = cfg.problem()?;
    let alg = cfg
        .solver
        .algorithm
        .ok_or_else(|| CliError::Config("solver.algorithm is required for run".into()))?;
    let jobs = plan(&cfg, &problem, &[alg], out_dir)?;
    let runs = worker_pool()?.install(|| jobs.par_iter().map(|j| execute(&cfg, j)).collect::<Result<Vec<_>, _>>())?;
    Ok(Outcome::new(runs, None, Vec::new()))
}

/// Per-solver fitted exponents side by side.
#[derive(Debug, Clone, Serialize)]
pub struct CompareRow {
    pub algorithm: Algorithm,
    pub seed: u64,
    pub fitted_rate_exponent: Option<f64>,
    pub asserted: bool,
    pub final_cert_residual: Option<f64>,
    pub termination: Termination,
}

pub fn cmd_compare(config_path: &Path, out_dir: &Path) -> Result<(Outcome, Vec<CompareRow>), CliError> {
    let cfg = ExperimentConfig::load(config_path)?;
    let problem = cfg.problem()?;
    let algorithms = cfg.compare.clone().unwrap_or_else(|| problem.admissible.clone());
    if algorithms.is_empty() {
        return Err(CliError::Config("compare needs at least one solver".into()));
    }
    let jobs = plan(&cfg, &problem, &algorithms, out_dir)?;
    let runs = worker_pool()?.install(|| jobs.par_iter().map(|j| execute(&cfg, j)).collect::<Result<Vec<_>, _>>())?;
    let mut rows = Vec::new();
    let mut extra = Vec::new();
    for r in &runs {
        let asserted = r.algorithm != Algorithm::Eg;
        if asserted {
            let detail = match r.fitted_rate_exponent {
                Some(s) if s <= SLOPE_THRESHOLD => None,
                Some(s) => Some(format!("fitted exponent {s:.4} above {SLOPE_THRESHOLD}")),
                None => Some("too few iterates past k = 50 to fit an exponent".to_string()),
            };
            if let Some(detail) = detail {
                extra.push(Failure {
                    problem: r.problem.clone(),
                    algorithm: Some(r.algorithm),
                    seed: Some(r.seed),
                    check: "slope".into(),
                    detail,
                });
            }
        }
        rows.push(CompareRow {
            algorithm: r.algorithm,
            seed: r.seed,
            fitted_rate_exponent: r.fitted_rate_exponent,
            asserted,
            final_cert_residual: r.final_cert_residual,
            termination: r.termination.clone(),
        });
    }
    let json = serde_json::to_string_pretty(&rows).map_err(|e| CliError::Io(e.to_string()))?;
    write_atomic(&out_dir.join("compare.json"), json.as_bytes())?;
    Ok((Outcome::new(runs, None, extra), rows))
}

#[derive(Debug, Clone, Serialize)]
pub struct IdentityBattery {
    pub trials: usize,
    pub seed: u64,
    pub mutated: bool,
    pub max_relative_residual_eag: f64,
    pub max_relative_residual_as: f64,
}

fn draw(rng: &mut ChaCha8Rng, n: usize) -> DenseVector {
    DenseVector::from_fn(n, |_| rng.random_range(-1.0..1.0))
}

/// Both identities on `trials` random draws plus the all-zero draw. With
/// `mutate`, one coefficient is perturbed by `1e-3`, which must fail.
pub fn cmd_verify_identities(trials: usize, seed: u64, mutate: bool) -> Result<Outcome, CliError> {
    if trials == 0 {
        return Err(CliError::Config("--trials must be at least 1".into()));
    }
    let eps = if mutate { 1e-3 } else { 0.0 };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut worst_eag, mut worst_as) = (0.0_f64, 0.0_f64);
    let mut errors = Vec::new();
    for i in 0..=trials {
        let n = [1, 3, 8][i % 3];
        let zero = i == trials;
        let vec = |rng: &mut ChaCha8Rng| if zero { DenseVector::zeros(n) } else { draw(rng, n) };
        let eag = EagIdentityInputs {
            x0: vec(&mut rng),
            x1: vec(&mut rng),
            x2: vec(&mut rng),
            x3: vec(&mut rng),
            y1: vec(&mut rng),
            y2: vec(&mut rng),
            y3: vec(&mut rng),
            u1: vec(&mut rng),
        };
        let as_inp = AsIdentityInputs {
            x0: vec(&mut rng),
            x1: vec(&mut rng),
            x2: vec(&mut rng),
            x3: vec(&mut rng),
            y1: vec(&mut rng),
            y2: vec(&mut rng),
            y3: vec(&mut rng),
        };
        let p = rng.random_range(0.01..0.99);
        let q = rng.random_range(1.0..100.0);
        let r = rng.random_range(-0.45..0.5);
        let (e, a) = if mutate {
            (verify_identity_eag_perturbed(&eag, p, q, eps), verify_identity_as_perturbed(&as_inp, p, q, r, eps))
        } else {
            (verify_identity_eag(&eag, p, q), verify_identity_as(&as_inp, p, q, r))
        };
        match (e, a) {
            (Ok(e), Ok(a)) => {
                worst_eag = worst_eag.max(e.relative());
                worst_as = worst_as.max(a.relative());
            }
            (Err(e), _) | (_, Err(e)) => errors.push(format!("draw {i}: {e}")),
        }
    }
    let battery = IdentityBattery {
        trials,
        seed,
        mutated: mutate,
        max_relative_residual_eag: worst_eag,
        max_relative_residual_as: worst_as,
    };
    let mut failures = Vec::new();
    for (name, worst) in [("identity_eag", worst_eag), ("identity_as", worst_as)] {
        if worst > IDENTITY_TOL {
            failures.push(Failure {
                problem: "random draws".into(),
                algorithm: None,
                seed: Some(seed),
                check: name.into(),
                detail: format!("max relative residual {worst:.3e} exceeds {IDENTITY_TOL:e}"),
            });
        }
    }
    failures.extend(errors.into_iter().map(|detail| Failure {
        problem: "random draws".into(),
        algorithm: None,
        seed: Some(seed),
        check: "identity_error".into(),
        detail,
    }));
    Ok(Outcome::new(Vec::new(), Some(battery), failures))
}

pub fn cmd_list_problems() -> Vec<(&'static str, &'static str)> {
    ZOO.to_vec()
}
