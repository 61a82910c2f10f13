//! Problem zoo: instances with analytically known `L`, `rho` and, where
//! available, a solution `z*`.

use std::path::Path;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::operators::{ConvexSet, LipschitzOperator, MaxMonotoneOperator};
use crate::residuals::natural_residual_with;
use crate::types::{Algorithm, DenseVector};

/// Seed of the power iteration start vector.
pub const POWER_ITERATION_SEED: u64 = 0x5eed;
pub const POWER_ITERATION_MAX_ITERS: usize = 200;
pub const POWER_ITERATION_TOL: f64 = 1e-10;
/// Eigenvalue floor for the symmetric part of a monotone matrix.
pub const PSD_TOL: f64 = 1e-10;
/// Slack for the sampled monotonicity, comonotonicity and solution checks.
pub const INVARIANT_TOL: f64 = 1e-9;
/// Pairs drawn by [`ProblemInstance::validate`].
pub const INVARIANT_PAIRS: usize = 1000;

/// A monotone (or `rho`-comonotone) inclusion `0 in F(z) + A(z)`.
#[derive(Debug, Clone)]
pub struct ProblemInstance {
    pub name: String,
    pub operator: LipschitzOperator,
    pub resolvent: MaxMonotoneOperator,
    pub lipschitz: f64,
    /// Comonotonicity modulus of `F + A`; 0 for monotone instances.
    pub rho: f64,
    pub z_star: Option<DenseVector>,
    pub admissible: Vec<Algorithm>,
}

impl ProblemInstance {
    pub fn dim(&self) -> usize {
        self.operator.dim()
    }

    /// `Z` for instances whose `A` is a normal cone or zero.
    pub fn feasible_set(&self) -> Option<ConvexSet> {
        self.resolvent.feasible_set()
    }

    pub fn check_admissible(&self, algorithm: Algorithm) -> Result<()> {
        if self.admissible.contains(&algorithm) {
            Ok(())
        } else {
            Err(Error::Inadmissible { algorithm: algorithm.to_string(), problem: self.name.clone() })
        }
    }

    pub fn solution(&self) -> Result<&DenseVector> {
        self.z_star.as_ref().ok_or(Error::InfeasibleSolution)
    }

    fn sample_point(&self, rng: &mut ChaCha8Rng) -> DenseVector {
        match self.feasible_set() {
            Some(set) => set.sample(rng, 2.0),
            None => DenseVector::from_fn(self.dim(), |_| rng.random_range(-2.0..=2.0)),
        }
    }

    /// Invariant battery: solution certificate, sampled Lipschitz bound, and
    /// sampled monotonicity of `F` (`rho = 0`) or comonotonicity of `F + A`
    /// on graph pairs (`rho < 0`).
    pub fn validate(&self, rng: &mut ChaCha8Rng) -> Result<()> {
        if let Some(zs) = &self.z_star {
            let fz = self.operator.eval(zs)?;
            let r = natural_residual_with(&fz, &self.resolvent, zs)?;
            if r > INVARIANT_TOL {
                return Err(Error::ParameterViolation(format!(
                    "{}: natural residual {r:e} at the stated solution",
                    self.name
                )));
            }
        }
        for _ in 0..INVARIANT_PAIRS {
            let (z, zp) = (self.sample_point(rng), self.sample_point(rng));
            let (fz, fzp) = (self.operator.eval(&z)?, self.operator.eval(&zp)?);
            let dz = &z - &zp;
            let df = &fz - &fzp;
            if df.norm() > self.lipschitz * dz.norm() * (1.0 + INVARIANT_TOL) + 1e-12 {
                return Err(Error::ParameterViolation(format!(
                    "{}: sampled Lipschitz ratio {} exceeds L = {}",
                    self.name,
                    df.norm() / dz.norm(),
                    self.lipschitz
                )));
            }
            if self.rho == 0.0 {
                let inner = df.dot(&dz);
                if inner < -INVARIANT_TOL {
                    return Err(Error::ParameterViolation(format!(
                        "{}: <F(z) - F(z'), z - z'> = {inner:e}",
                        self.name
                    )));
                }
            } else {
                // graph points of A from resolvent evaluations: w - J(w) in A(J(w))
                let (a, ap) = (self.resolvent.resolvent(1.0, &z)?, self.resolvent.resolvent(1.0, &zp)?);
                let (ea, eap) = (
                    &self.operator.eval(&a)? + &(&z - &a),
                    &self.operator.eval(&ap)? + &(&zp - &ap),
                );
                let de = &ea - &eap;
                let lhs = de.dot(&(&a - &ap));
                let rhs = self.rho * de.norm_sq();
                if lhs < rhs - INVARIANT_TOL {
                    return Err(Error::ParameterViolation(format!(
                        "{}: comonotonicity fails, {lhs:e} < {rhs:e}",
                        self.name
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Largest singular value by power iteration on `B^T B`.
pub fn sigma_max(b: &DMatrix<f64>) -> f64 {
    let n = b.ncols();
    if n == 0 || b.nrows() == 0 {
        return 0.0;
    }
    let btb = b.transpose() * b;
    let mut rng = ChaCha8Rng::seed_from_u64(POWER_ITERATION_SEED);
    let mut v = nalgebra::DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
    let mut lambda = 0.0;
    for _ in 0..POWER_ITERATION_MAX_ITERS {
        let norm = v.norm();
        if norm == 0.0 {
            return 0.0;
        }
        v /= norm;
        let w = &btb * &v;
        let next = v.dot(&w);
        let done = (next - lambda).abs() <= POWER_ITERATION_TOL * next.abs();
        lambda = next;
        v = w;
        if done {
            break;
        }
    }
    lambda.max(0.0).sqrt()
}

/// Feasible region for zoo instances.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Constraint {
    #[default]
    None,
    /// `[lo, hi]^n`
    Box { lo: f64, hi: f64 },
    /// Ball of radius `radius` about the origin.
    Ball { radius: f64 },
}

impl Constraint {
    fn operator(&self, dim: usize) -> Result<MaxMonotoneOperator> {
        Ok(match self {
            Constraint::None => MaxMonotoneOperator::Zero { dim },
            Constraint::Box { lo, hi } => MaxMonotoneOperator::NormalCone(ConvexSet::uniform_box(dim, *lo, *hi)?),
            Constraint::Ball { radius } => {
                MaxMonotoneOperator::NormalCone(ConvexSet::ball(DenseVector::zeros(dim), *radius)?)
            }
        })
    }

    fn label(&self) -> String {
        match self {
            Constraint::None => "unconstrained".into(),
            Constraint::Box { lo, hi } => format!("box[{lo},{hi}]"),
            Constraint::Ball { radius } => format!("ball({radius})"),
        }
    }
}

fn origin_if_feasible(a: &MaxMonotoneOperator) -> Option<DenseVector> {
    let zero = DenseVector::zeros(a.dim());
    match a.feasible_set() {
        Some(set) if !set.contains(&zero) => None,
        _ => Some(zero),
    }
}

fn skew_block(b: &DMatrix<f64>) -> DMatrix<f64> {
    let (nx, ny) = b.shape();
    let mut m = DMatrix::zeros(nx + ny, nx + ny);
    m.view_mut((0, nx), (nx, ny)).copy_from(b);
    m.view_mut((nx, 0), (ny, nx)).copy_from(&(-b.transpose()));
    m
}

fn check_matrix(b: &DMatrix<f64>) -> Result<()> {
    if b.is_empty() {
        return Err(Error::EmptyVector);
    }
    if b.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite);
    }
    if b.iter().all(|x| *x == 0.0) {
        return Err(Error::InvalidParameter("matrix must be nonzero".into()));
    }
    Ok(())
}

/// `f(x, y) = x^T B y`, so `F(x, y) = (B y, -B^T x)`. When the constraint
/// excludes the origin, `z_star` is left empty.
pub fn make_bilinear(b: &DMatrix<f64>, constraint: Constraint) -> Result<ProblemInstance> {
    check_matrix(b)?;
    let l = sigma_max(b);
    let m = skew_block(b);
    let a = constraint.operator(m.nrows())?;
    Ok(ProblemInstance {
        name: format!("bilinear-{}x{}-{}", b.nrows(), b.ncols(), constraint.label()),
        operator: LipschitzOperator::linear(m, l)?,
        z_star: origin_if_feasible(&a),
        resolvent: a,
        lipschitz: l,
        rho: 0.0,
        admissible: Algorithm::ALL.to_vec(),
    })
}

/// `F = mu I + nu J` on `R^{2 dim_pairs}`, `J` the block rotation by 90 degrees.
/// For `mu < 0` the instance is `mu/(mu^2+nu^2)`-comonotone but not
/// monotone, so only AS is admissible. For `mu > 0` it is monotone and
/// `rho` is stored as 0.
pub fn make_rotation_family(mu: f64, nu: f64, dim_pairs: usize) -> Result<ProblemInstance> {
    if !(mu.is_finite() && nu.is_finite()) {
        return Err(Error::NonFinite);
    }
    if mu == 0.0 && nu == 0.0 {
        return Err(Error::ParameterViolation("(mu, nu) must be nonzero".into()));
    }
    if dim_pairs == 0 {
        return Err(Error::EmptyVector);
    }
    let s = mu * mu + nu * nu;
    let l = s.sqrt();
    let rho = mu / s;
    if rho <= -1.0 / (2.0 * l) {
        return Err(Error::ParameterViolation(format!(
            "rho = {rho} must exceed -1/(2L) = {}",
            -1.0 / (2.0 * l)
        )));
    }
    let n = 2 * dim_pairs;
    let mut m = DMatrix::from_diagonal_element(n, n, mu);
    for p in 0..dim_pairs {
        m[(2 * p, 2 * p + 1)] = nu;
        m[(2 * p + 1, 2 * p)] = -nu;
    }
    let admissible = if mu < 0.0 { vec![Algorithm::As] } else { Algorithm::ALL.to_vec() };
    Ok(ProblemInstance {
        name: format!("rotation-mu{mu}-nu{nu}-x{dim_pairs}"),
        operator: LipschitzOperator::linear(m, l)?,
        resolvent: MaxMonotoneOperator::Zero { dim: n },
        lipschitz: l,
        rho: rho.min(0.0),
        z_star: Some(DenseVector::zeros(n)),
        admissible,
    })
}

/// `F(x) = x` on `Z = [0, 1]`.
pub fn make_identity_1d() -> Result<ProblemInstance> {
    Ok(ProblemInstance {
        name: "identity-1d".into(),
        operator: LipschitzOperator::linear(DMatrix::identity(1, 1), 1.0)?,
        resolvent: MaxMonotoneOperator::NormalCone(ConvexSet::uniform_box(1, 0.0, 1.0)?),
        lipschitz: 1.0,
        rho: 0.0,
        z_star: Some(DenseVector::zeros(1)),
        admissible: Algorithm::ALL.to_vec(),
    })
}

/// `min_x max_y x^T B y + lambda_g ||x||_1 - lambda_h ||y||_1`.
pub fn make_l1_regularized_minmax(b: &DMatrix<f64>, lambda_g: f64, lambda_h: f64) -> Result<ProblemInstance> {
    check_matrix(b)?;
    if !(lambda_g >= 0.0 && lambda_h >= 0.0) {
        return Err(Error::InvalidParameter("regularization weights must be >= 0".into()));
    }
    let (nx, ny) = b.shape();
    let l = sigma_max(b);
    let lambdas = DenseVector::from_fn(nx + ny, |i| if i < nx { lambda_g } else { lambda_h });
    Ok(ProblemInstance {
        name: format!("l1-minmax-{nx}x{ny}-g{lambda_g}-h{lambda_h}"),
        operator: LipschitzOperator::linear(skew_block(b), l)?,
        resolvent: MaxMonotoneOperator::soft_threshold(lambdas)?,
        lipschitz: l,
        rho: 0.0,
        z_star: Some(DenseVector::zeros(nx + ny)),
        admissible: vec![Algorithm::As],
    })
}

/// Smallest eigenvalue of `(M + M^T)/2`.
pub fn symmetric_part_min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    let sym = (m + m.transpose()) * 0.5;
    sym.symmetric_eigenvalues().min()
}

/// `F(z) = M z` with `M + M^T` positive semidefinite.
pub fn make_monotone_linear(m: &DMatrix<f64>, constraint: Constraint) -> Result<ProblemInstance> {
    check_matrix(m)?;
    if m.nrows() != m.ncols() {
        return Err(Error::DimMismatch { expected: m.nrows(), found: m.ncols() });
    }
    let min_eigenvalue = symmetric_part_min_eigenvalue(m);
    if min_eigenvalue < -PSD_TOL {
        return Err(Error::NotMonotone { min_eigenvalue });
    }
    let l = sigma_max(m);
    let a = constraint.operator(m.nrows())?;
    Ok(ProblemInstance {
        name: format!("monotone-linear-{}-{}", m.nrows(), constraint.label()),
        operator: LipschitzOperator::linear(m.clone(), l)?,
        z_star: origin_if_feasible(&a),
        resolvent: a,
        lipschitz: l,
        rho: 0.0,
        admissible: Algorithm::ALL.to_vec(),
    })
}

/// `M = G^T G / n + (K - K^T)/2` with standard normal `G`, `K`.
pub fn random_monotone_matrix<R: Rng + ?Sized>(n: usize, rng: &mut R) -> DMatrix<f64> {
    use rand_distr::StandardNormal;
    let g = DMatrix::<f64>::from_fn(n, n, |_, _| rng.sample(StandardNormal));
    let k = DMatrix::<f64>::from_fn(n, n, |_, _| rng.sample(StandardNormal));
    g.transpose() * &g / n as f64 + (&k - k.transpose()) * 0.5
}

/// Parses `rows cols` on the first line followed by `rows` lines of
/// whitespace-separated decimals.
pub fn parse_matrix(text: &str) -> Result<DMatrix<f64>> {
    let bad = |msg: String| Error::InvalidParameter(format!("matrix text: {msg}"));
    let mut lines = text.lines().map(str::trim).filter(|l| !l.is_empty());
    let header = lines.next().ok_or_else(|| bad("empty input".into()))?;
    let dims: Vec<usize> = header
        .split_whitespace()
        .map(|t| t.parse().map_err(|_| bad(format!("bad header {header:?}"))))
        .collect::<Result<_>>()?;
    let [rows, cols] = dims[..] else {
        return Err(bad(format!("header must be \"rows cols\", got {header:?}")));
    };
    let mut data = Vec::with_capacity(rows * cols);
    for r in 0..rows {
        let line = lines.next().ok_or_else(|| bad(format!("expected {rows} rows, found {r}")))?;
        let row: Vec<f64> = line
            .split_whitespace()
            .map(|t| t.parse().map_err(|_| bad(format!("bad entry {t:?} in row {r}"))))
            .collect::<Result<_>>()?;
        if row.len() != cols {
            return Err(bad(format!("row {r} has {} entries, expected {cols}", row.len())));
        }
        data.extend(row);
    }
    if lines.next().is_some() {
        return Err(bad(format!("more than {rows} rows")));
    }
    Ok(DMatrix::from_row_slice(rows, cols, &data))
}

pub fn load_matrix(path: &Path) -> Result<DMatrix<f64>> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::InvalidParameter(format!("cannot read {}: {e}", path.display())))?;
    parse_matrix(&text)
}

/// A matrix given inline as rows, or as a path to the plain-text format.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MatrixSource {
    Rows(Vec<Vec<f64>>),
    File { path: String },
}

impl MatrixSource {
    pub fn load(&self) -> Result<DMatrix<f64>> {
        match self {
            MatrixSource::Rows(rows) => {
                let r = rows.len();
                let c = rows.first().map_or(0, Vec::len);
                if r == 0 || c == 0 {
                    return Err(Error::EmptyVector);
                }
                if rows.iter().any(|row| row.len() != c) {
                    return Err(Error::InvalidParameter("ragged matrix rows".into()));
                }
                Ok(DMatrix::from_row_iterator(r, c, rows.iter().flatten().copied()))
            }
            MatrixSource::File { path } => load_matrix(Path::new(path)),
        }
    }
}

fn one() -> usize {
    1
}

/// Zoo entry addressable by name from experiment configs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case")]
pub enum ProblemSpec {
    Bilinear {
        b: MatrixSource,
        #[serde(default)]
        constraint: Constraint,
    },
    RotationFamily {
        mu: f64,
        nu: f64,
        #[serde(default = "one")]
        dim_pairs: usize,
    },
    #[serde(rename = "identity_1d")]
    Identity1d,
    L1RegularizedMinmax {
        b: MatrixSource,
        lambda_g: f64,
        lambda_h: f64,
    },
    MonotoneLinear {
        m: MatrixSource,
        #[serde(default)]
        constraint: Constraint,
    },
    RandomMonotoneLinear {
        dim: usize,
        seed: u64,
        #[serde(default)]
        constraint: Constraint,
    },
}

/// `(name, description)` of every zoo entry.
pub const ZOO: &[(&str, &str)] = &[
    ("bilinear", "x^T B y with optional box or ball constraint; params: b, constraint"),
    ("rotation_family", "mu I + nu J, rho-comonotone for mu < 0; params: mu, nu, dim_pairs"),
    ("identity_1d", "F(x) = x on [0, 1]"),
    ("l1_regularized_minmax", "bilinear plus l1 terms, AS only; params: b, lambda_g, lambda_h"),
    ("monotone_linear", "M z with PSD symmetric part; params: m, constraint"),
    ("random_monotone_linear", "seeded random monotone M z; params: dim, seed, constraint"),
];

impl ProblemSpec {
    /// Construct the instance without running the invariant battery.
    pub fn instantiate(&self) -> Result<ProblemInstance> {
        match self {
            ProblemSpec::Bilinear { b, constraint } => make_bilinear(&b.load()?, constraint.clone()),
            ProblemSpec::RotationFamily { mu, nu, dim_pairs } => make_rotation_family(*mu, *nu, *dim_pairs),
            ProblemSpec::Identity1d => make_identity_1d(),
            ProblemSpec::L1RegularizedMinmax { b, lambda_g, lambda_h } => {
                make_l1_regularized_minmax(&b.load()?, *lambda_g, *lambda_h)
            }
            ProblemSpec::MonotoneLinear { m, constraint } => make_monotone_linear(&m.load()?, constraint.clone()),
            ProblemSpec::RandomMonotoneLinear { dim, seed, constraint } => {
                if *dim == 0 {
                    return Err(Error::EmptyVector);
                }
                let mut rng = ChaCha8Rng::seed_from_u64(*seed);
                let mut p = make_monotone_linear(&random_monotone_matrix(*dim, &mut rng), constraint.clone())?;
                p.name = format!("random-{}-seed{seed}", p.name);
                Ok(p)
            }
        }
    }

    /// Construct and validate with a fixed seed.
    pub fn build(&self) -> Result<ProblemInstance> {
        let p = self.instantiate()?;
        p.validate(&mut ChaCha8Rng::seed_from_u64(0))?;
        Ok(p)
    }
}
