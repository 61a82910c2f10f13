//! Experiment configuration (JSON).

use std::path::Path;

use inclusion_accel::diagnostics::{self};
use inclusion_accel::problems::{ProblemInstance, ProblemSpec};
use inclusion_accel::{Algorithm, DenseVector, SolverConfig};
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub problem: ProblemSpec,
    pub solver: SolverSection,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    /// Overrides the seed-derived starting point for every seed.
    #[serde(default)]
    pub initial_point: Option<Vec<f64>>,
    #[serde(default)]
    pub outputs: Outputs,
    #[serde(default)]
    pub checks: Checks,
    /// Solvers run by `compare`; defaults to every admissible one.
    #[serde(default)]
    pub compare: Option<Vec<Algorithm>>,
}

fn default_seeds() -> Vec<u64> {
    vec![0]
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSection {
    /// Required by `run`; ignored by `compare`.
    #[serde(default)]
    pub algorithm: Option<Algorithm>,
    /// Defaults to `1/(3L)` for EAG and EG and the AS interval midpoint.
    #[serde(default)]
    pub eta: Option<f64>,
    #[serde(default)]
    pub delta: f64,
    /// Defaults to the problem's modulus.
    #[serde(default)]
    pub rho: Option<f64>,
    pub max_iters: usize,
    #[serde(default)]
    pub target_residual: f64,
}

/// Output path templates. `{algorithm}` and `{seed}` are substituted;
/// relative paths resolve against `--out`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Outputs {
    #[serde(default = "default_trace")]
    pub trace: String,
    #[serde(default = "default_report")]
    pub report: String,
}

fn default_trace() -> String {
    "trace-{algorithm}-seed{seed}.csv".into()
}

fn default_report() -> String {
    "report-{algorithm}-seed{seed}.json".into()
}

impl Default for Outputs {
    fn default() -> Self {
        Self { trace: default_trace(), report: default_report() }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checks {
    #[serde(default)]
    pub v_descent: bool,
    #[serde(default)]
    pub u_descent: bool,
    #[serde(default)]
    pub identities: bool,
    #[serde(default)]
    pub envelopes: bool,
    #[serde(default)]
    pub sequence_bound: bool,
    #[serde(default)]
    pub gap_examples: bool,
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| CliError::Config(format!("config: {e}")))?;
        if cfg.seeds.is_empty() {
            return Err(CliError::Config("seeds must not be empty".into()));
        }
        Ok(cfg)
    }

    /// Builds and validates the problem instance.
    pub fn problem(&self) -> Result<ProblemInstance, CliError> {
        self.problem.build().map_err(|e| CliError::Config(format!("problem: {e}")))
    }

    pub fn solver_config(&self, algorithm: Algorithm, problem: &ProblemInstance) -> Result<SolverConfig, CliError> {
        problem.check_admissible(algorithm).map_err(|e| CliError::Config(e.to_string()))?;
        let s = &self.solver;
        let rho = s.rho.unwrap_or(problem.rho);
        let config = SolverConfig {
            algorithm,
            eta: s.eta.unwrap_or_else(|| SolverConfig::default_eta(algorithm, problem.lipschitz, rho)),
            delta: s.delta,
            rho,
            max_iters: s.max_iters,
            target_residual: s.target_residual,
        };
        config.validate().map_err(|e| CliError::Config(e.to_string()))?;
        if algorithm == Algorithm::As && rho > problem.rho {
            return Err(CliError::Config(format!(
                "solver rho {rho} exceeds the problem's comonotonicity modulus {}",
                problem.rho
            )));
        }
        check_preconditions(&config, problem, &self.checks)?;
        Ok(config)
    }

    pub fn initial_point(&self, problem: &ProblemInstance, seed: u64) -> Result<DenseVector, CliError> {
        use rand::{Rng, SeedableRng};
        match &self.initial_point {
            Some(z) => {
                let z = DenseVector::new(z.clone()).map_err(|e| CliError::Config(format!("initial_point: {e}")))?;
                if z.dim() != problem.dim() {
                    return Err(CliError::Config(format!(
                        "initial_point has dimension {}, problem has {}",
                        z.dim(),
                        problem.dim()
                    )));
                }
                Ok(z)
            }
            None => {
                let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
                Ok(match problem.feasible_set() {
                    Some(set) => set.sample(&mut rng, 1.0),
                    None => DenseVector::from_fn(problem.dim(), |_| rng.random_range(-1.0..=1.0)),
                })
            }
        }
    }
}

/// Rejects enabled checks whose theorem preconditions fail, before any
/// iteration runs.
fn check_preconditions(config: &SolverConfig, problem: &ProblemInstance, checks: &Checks) -> Result<(), CliError> {
    let x = config.eta * problem.lipschitz;
    let violation = |what: &str, why: String| Err(CliError::Config(format!("precondition violated for {what}: {why}")));
    match config.algorithm {
        Algorithm::Eag => {
            if checks.envelopes {
                if config.delta != 0.0 {
                    return violation("envelopes", format!("no envelope for delta = {} > 0", config.delta));
                }
                if 3.0 * x * x >= 1.0 {
                    return violation("envelopes", format!("eta L = {x} must be below 1/sqrt(3)"));
                }
            }
            if checks.v_descent && x >= 1.0 {
                return violation("v_descent", format!("eta L = {x} must be below 1"));
            }
            if checks.sequence_bound && (config.delta != 0.0 || 3.0 * x * x >= 1.0) {
                return violation("sequence_bound", format!("needs delta = 0 and eta^2 L^2 < 1/3, got eta L = {x}"));
            }
        }
        Algorithm::As => {
            if checks.envelopes {
                if let Err(e) = diagnostics::envelope_as(1, config.eta, config.rho, problem.lipschitz, 1.0) {
                    return violation("envelopes", e.to_string());
                }
            }
            if checks.identities && (1.0 + 2.0 * config.rho / config.eta).abs() < 1e-12 {
                return violation("identities", "1 + 2 rho/eta vanishes".into());
            }
        }
        Algorithm::Eg => {}
    }
    Ok(())
}

/// Substitute `{algorithm}` and `{seed}`. When several runs share a template
/// without those placeholders, a `-{algorithm}-seed{seed}` suffix is added
/// before the extension so outputs never collide.
pub fn expand_template(template: &str, algorithm: Algorithm, seed: u64, distinguish: bool) -> String {
    let has_placeholders = template.contains("{algorithm}") || template.contains("{seed}");
    let template = if distinguish && !has_placeholders {
        let path = Path::new(template);
        let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("out");
        let name = match path.extension().and_then(|e| e.to_str()) {
            Some(ext) => format!("{stem}-{{algorithm}}-seed{{seed}}.{ext}"),
            None => format!("{stem}-{{algorithm}}-seed{{seed}}"),
        };
        path.with_file_name(name).to_string_lossy().into_owned()
    } else {
        template.to_string()
    };
    template.replace("{algorithm}", algorithm.name()).replace("{seed}", &seed.to_string())
}
