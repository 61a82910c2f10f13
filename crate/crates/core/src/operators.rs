//! Single-valued Lipschitz operators, convex sets with Euclidean projection,
//! and resolvents of maximally monotone operators.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::DenseVector;

/// Absolute tolerance for set membership.
pub const MEMBERSHIP_TOL: f64 = 1e-9;

type FieldFn = dyn Fn(&DenseVector) -> DenseVector + Send + Sync;

/// A single-valued operator `F` with a known Lipschitz constant.
#[derive(Clone)]
pub struct LipschitzOperator {
    field: Arc<FieldFn>,
    lipschitz_constant: f64,
    dim: usize,
    matrix: Option<Arc<DMatrix<f64>>>,
}

impl LipschitzOperator {
    pub fn from_fn<F>(dim: usize, lipschitz_constant: f64, f: F) -> Result<Self>
    where
        F: Fn(&DenseVector) -> DenseVector + Send + Sync + 'static,
    {
        if dim == 0 {
            return Err(Error::EmptyVector);
        }
        if !(lipschitz_constant.is_finite() && lipschitz_constant > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "Lipschitz constant must be positive, got {lipschitz_constant}"
            )));
        }
        Ok(Self { field: Arc::new(f), lipschitz_constant, dim, matrix: None })
    }

    /// `F(z) = M z`.
    pub fn linear(matrix: DMatrix<f64>, lipschitz_constant: f64) -> Result<Self> {
        if matrix.nrows() != matrix.ncols() {
            return Err(Error::DimMismatch { expected: matrix.nrows(), found: matrix.ncols() });
        }
        let m = Arc::new(matrix);
        let inner = Arc::clone(&m);
        let mut op = Self::from_fn(m.nrows(), lipschitz_constant, move |z| mat_vec(&inner, z))?;
        op.matrix = Some(m);
        Ok(op)
    }

    pub fn eval(&self, z: &DenseVector) -> Result<DenseVector> {
        if z.dim() != self.dim {
            return Err(Error::DimMismatch { expected: self.dim, found: z.dim() });
        }
        let out = (self.field)(z);
        debug_assert_eq!(out.dim(), self.dim);
        Ok(out)
    }

    pub fn lipschitz_constant(&self) -> f64 {
        self.lipschitz_constant
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// The matrix when `F` is linear.
    pub fn matrix(&self) -> Option<&DMatrix<f64>> {
        self.matrix.as_deref()
    }
}

impl fmt::Debug for LipschitzOperator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("LipschitzOperator")
            .field("dim", &self.dim)
            .field("lipschitz_constant", &self.lipschitz_constant)
            .field("linear", &self.matrix.is_some())
            .finish()
    }
}

pub(crate) fn mat_vec(m: &DMatrix<f64>, z: &DenseVector) -> DenseVector {
    let out = m * DVector::from_column_slice(z.as_slice());
    DenseVector::from_vec_unchecked(out.as_slice().to_vec())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SetKind {
    FullSpace,
    Box,
    Ball,
    Simplex,
}

impl SetKind {
    pub fn name(self) -> &'static str {
        match self {
            SetKind::FullSpace => "full-space",
            SetKind::Box => "box",
            SetKind::Ball => "ball",
            SetKind::Simplex => "simplex",
        }
    }
}

/// Closed convex feasible set.
#[derive(Debug, Clone, PartialEq)]
pub enum ConvexSet {
    FullSpace { dim: usize },
    Box { lo: DenseVector, hi: DenseVector },
    Ball { center: DenseVector, radius: f64 },
    /// `{z >= 0, sum z = total}`
    Simplex { dim: usize, total: f64 },
}

impl ConvexSet {
    pub fn full_space(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::EmptyVector);
        }
        Ok(ConvexSet::FullSpace { dim })
    }

    pub fn boxed(lo: DenseVector, hi: DenseVector) -> Result<Self> {
        lo.check_dim(&hi)?;
        if lo.iter().zip(hi.iter()).any(|(l, h)| l > h) {
            return Err(Error::InvalidParameter("box requires lo <= hi".into()));
        }
        Ok(ConvexSet::Box { lo, hi })
    }

    /// The box `[lo, hi]^dim`.
    pub fn uniform_box(dim: usize, lo: f64, hi: f64) -> Result<Self> {
        Self::boxed(DenseVector::new(vec![lo; dim])?, DenseVector::new(vec![hi; dim])?)
    }

    pub fn ball(center: DenseVector, radius: f64) -> Result<Self> {
        if !(radius.is_finite() && radius > 0.0) {
            return Err(Error::InvalidParameter(format!("ball radius must be positive, got {radius}")));
        }
        Ok(ConvexSet::Ball { center, radius })
    }

    pub fn simplex(dim: usize, total: f64) -> Result<Self> {
        if dim == 0 {
            return Err(Error::EmptyVector);
        }
        if !(total.is_finite() && total > 0.0) {
            return Err(Error::InvalidParameter(format!("simplex total must be positive, got {total}")));
        }
        Ok(ConvexSet::Simplex { dim, total })
    }

    pub fn kind(&self) -> SetKind {
        match self {
            ConvexSet::FullSpace { .. } => SetKind::FullSpace,
            ConvexSet::Box { .. } => SetKind::Box,
            ConvexSet::Ball { .. } => SetKind::Ball,
            ConvexSet::Simplex { .. } => SetKind::Simplex,
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            ConvexSet::FullSpace { dim } | ConvexSet::Simplex { dim, .. } => *dim,
            ConvexSet::Box { lo, .. } => lo.dim(),
            ConvexSet::Ball { center, .. } => center.dim(),
        }
    }

    pub fn project(&self, z: &DenseVector) -> Result<DenseVector> {
        match self {
            ConvexSet::FullSpace { dim } => {
                check_len(*dim, z)?;
                Ok(z.clone())
            }
            ConvexSet::Box { lo, hi } => project_box(lo, hi, z),
            ConvexSet::Ball { center, radius } => project_ball(center, *radius, z),
            ConvexSet::Simplex { dim, total } => {
                check_len(*dim, z)?;
                Ok(project_simplex(z, *total))
            }
        }
    }

    pub fn contains(&self, z: &DenseVector) -> bool {
        if z.dim() != self.dim() || !z.is_finite() {
            return false;
        }
        let tol = MEMBERSHIP_TOL;
        match self {
            ConvexSet::FullSpace { .. } => true,
            ConvexSet::Box { lo, hi } => z
                .iter()
                .zip(lo.iter().zip(hi.iter()))
                .all(|(x, (l, h))| *x >= l - tol && *x <= h + tol),
            ConvexSet::Ball { center, radius } => z.dist(center) <= radius + tol,
            ConvexSet::Simplex { total, .. } => {
                z.iter().all(|x| *x >= -tol) && (z.iter().sum::<f64>() - total).abs() <= tol
            }
        }
    }

    /// Draw a point of the set. `FullSpace` draws from `[-spread, spread]^n`.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R, spread: f64) -> DenseVector {
        match self {
            ConvexSet::FullSpace { dim } => {
                DenseVector::from_fn(*dim, |_| rng.random_range(-spread..=spread))
            }
            ConvexSet::Box { lo, hi } => DenseVector::from_fn(lo.dim(), |i| {
                if lo[i] == hi[i] {
                    lo[i]
                } else {
                    rng.random_range(lo[i]..=hi[i])
                }
            }),
            ConvexSet::Ball { center, radius } => {
                let n = center.dim();
                let dir = DenseVector::from_fn(n, |_| StandardNormal.sample(rng));
                let norm = dir.norm().max(f64::MIN_POSITIVE);
                let r = radius * rng.random::<f64>().powf(1.0 / n as f64);
                center.add_scaled(r / norm, &dir)
            }
            ConvexSet::Simplex { dim, total } => {
                let e = DenseVector::from_fn(*dim, |_| -(1.0 - rng.random::<f64>()).ln());
                let s: f64 = e.iter().sum();
                e.scale(total / s)
            }
        }
    }
}

fn check_len(dim: usize, z: &DenseVector) -> Result<()> {
    if z.dim() != dim {
        return Err(Error::DimMismatch { expected: dim, found: z.dim() });
    }
    Ok(())
}

/// Componentwise clamp of `z` to `[lo, hi]`.
pub fn project_box(lo: &DenseVector, hi: &DenseVector, z: &DenseVector) -> Result<DenseVector> {
    lo.check_dim(hi)?;
    lo.check_dim(z)?;
    Ok(DenseVector::from_fn(z.dim(), |i| z[i].max(lo[i]).min(hi[i])))
}

pub fn project_ball(center: &DenseVector, radius: f64, z: &DenseVector) -> Result<DenseVector> {
    center.check_dim(z)?;
    if !(radius > 0.0) {
        return Err(Error::InvalidParameter(format!("ball radius must be positive, got {radius}")));
    }
    let d = z.dist(center);
    if d <= radius {
        return Ok(z.clone());
    }
    let diff = z - center;
    Ok(center.add_scaled(radius / d, &diff))
}

/// Projection onto `{x >= 0, sum x = total}` by sort-and-threshold.
pub fn project_simplex(z: &DenseVector, total: f64) -> DenseVector {
    let mut u: Vec<f64> = z.as_slice().to_vec();
    u.sort_by(|a, b| b.total_cmp(a));
    let mut cumsum = 0.0;
    let mut theta = 0.0;
    for (j, &uj) in u.iter().enumerate() {
        cumsum += uj;
        let t = (cumsum - total) / (j + 1) as f64;
        if uj - t > 0.0 {
            theta = t;
        }
    }
    z.map(|x| (x - theta).max(0.0))
}

/// Resolvent of `eta * d(lambda ||.||_1)`: componentwise shrinkage.
pub fn resolvent_soft_threshold(lambda: f64, eta: f64, w: &DenseVector) -> Result<DenseVector> {
    if !(lambda.is_finite() && lambda > 0.0) {
        return Err(Error::InvalidParameter(format!("lambda must be positive, got {lambda}")));
    }
    if !(eta.is_finite() && eta > 0.0) {
        return Err(Error::InvalidParameter(format!("eta must be positive, got {eta}")));
    }
    Ok(w.map(|x| shrink(x, eta * lambda)))
}

fn shrink(x: f64, t: f64) -> f64 {
    x.signum() * (x.abs() - t).max(0.0)
}

/// Maximally monotone operator `A`, represented through its resolvent.
#[derive(Debug, Clone, PartialEq)]
pub enum MaxMonotoneOperator {
    Zero { dim: usize },
    NormalCone(ConvexSet),
    /// Subdifferential of `sum_i lambda_i |z_i|`; `lambda_i >= 0`.
    SoftThreshold { lambdas: DenseVector },
    /// `A(z) = M z` with `M + M^T` positive semidefinite.
    LinearMonotone { matrix: DMatrix<f64> },
}

impl MaxMonotoneOperator {
    pub fn soft_threshold(lambdas: DenseVector) -> Result<Self> {
        if lambdas.iter().any(|l| *l < 0.0) {
            return Err(Error::InvalidParameter("soft-threshold weights must be >= 0".into()));
        }
        Ok(MaxMonotoneOperator::SoftThreshold { lambdas })
    }

    pub fn dim(&self) -> usize {
        match self {
            MaxMonotoneOperator::Zero { dim } => *dim,
            MaxMonotoneOperator::NormalCone(set) => set.dim(),
            MaxMonotoneOperator::SoftThreshold { lambdas } => lambdas.dim(),
            MaxMonotoneOperator::LinearMonotone { matrix } => matrix.nrows(),
        }
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            MaxMonotoneOperator::Zero { .. } => "zero",
            MaxMonotoneOperator::NormalCone(_) => "normal-cone",
            MaxMonotoneOperator::SoftThreshold { .. } => "soft-threshold",
            MaxMonotoneOperator::LinearMonotone { .. } => "linear-monotone",
        }
    }

    /// The feasible set when `A` is the zero operator or a normal cone.
    pub fn feasible_set(&self) -> Option<ConvexSet> {
        match self {
            MaxMonotoneOperator::Zero { dim } => Some(ConvexSet::FullSpace { dim: *dim }),
            MaxMonotoneOperator::NormalCone(set) => Some(set.clone()),
            _ => None,
        }
    }

    /// `J_{eta A}(w) = (I + eta A)^{-1} w`.
    pub fn resolvent(&self, eta: f64, w: &DenseVector) -> Result<DenseVector> {
        if !(eta.is_finite() && eta > 0.0) {
            return Err(Error::InvalidParameter(format!("eta must be positive, got {eta}")));
        }
        check_len(self.dim(), w)?;
        match self {
            MaxMonotoneOperator::Zero { .. } => Ok(w.clone()),
            MaxMonotoneOperator::NormalCone(set) => set.project(w),
            MaxMonotoneOperator::SoftThreshold { lambdas } => {
                Ok(w.zip_map(lambdas, |x, l| shrink(x, eta * l)))
            }
            MaxMonotoneOperator::LinearMonotone { matrix } => {
                let n = matrix.nrows();
                let system = DMatrix::<f64>::identity(n, n) + matrix * eta;
                let rhs = DVector::from_column_slice(w.as_slice());
                let sol = system.lu().solve(&rhs).ok_or(Error::SingularResolvent)?;
                Ok(DenseVector::from_vec_unchecked(sol.as_slice().to_vec()))
            }
        }
    }
}

/// An element `c` of `A(at)` obtained from a resolvent evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct ConeCertificate {
    pub c: DenseVector,
    pub at: DenseVector,
    pub eta: f64,
}

impl ConeCertificate {
    /// The trivial certificate `c = 0` at `at`.
    pub fn zero(at: DenseVector, eta: f64) -> Self {
        Self { c: DenseVector::zeros(at.dim()), at, eta }
    }
}

/// `z = J_{eta A}(w)` together with `c = (w - z)/eta`, which lies in `A(z)`.
pub fn extract_certificate(
    a: &MaxMonotoneOperator,
    eta: f64,
    w: &DenseVector,
) -> Result<(DenseVector, ConeCertificate)> {
    let z = a.resolvent(eta, w)?;
    let c = (w - &z).scale(1.0 / eta);
    Ok((z.clone(), ConeCertificate { c, at: z, eta }))
}

/// Diagnostic estimate of a Lipschitz constant: the largest sampled ratio
/// `||F(z) - F(z')|| / ||z - z'||`, inflated by 10%.
pub fn estimate_lipschitz<F, S>(f: F, mut sampler: S, n_pairs: usize) -> Result<f64>
where
    F: Fn(&DenseVector) -> DenseVector,
    S: FnMut() -> DenseVector,
{
    if n_pairs < 100 {
        return Err(Error::InvalidParameter(format!("n_pairs must be >= 100, got {n_pairs}")));
    }
    let mut best: f64 = 0.0;
    for _ in 0..n_pairs {
        let (a, b) = (sampler(), sampler());
        a.check_dim(&b)?;
        let dz = a.dist(&b);
        if dz == 0.0 {
            continue;
        }
        best = best.max(f(&a).dist(&f(&b)) / dz);
    }
    Ok(1.1 * best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn v(x: &[f64]) -> DenseVector {
        DenseVector::new(x.to_vec()).unwrap()
    }

    fn rng() -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(7)
    }

    fn zoo_sets() -> Vec<ConvexSet> {
        vec![
            ConvexSet::full_space(3).unwrap(),
            ConvexSet::boxed(v(&[-1.0, 0.0, 2.0]), v(&[1.0, 0.5, 2.0])).unwrap(),
            ConvexSet::ball(v(&[0.5, -1.0, 0.0]), 1.5).unwrap(),
            ConvexSet::simplex(3, 1.0).unwrap(),
        ]
    }

    #[test]
    fn box_clamps() {
        let lo = v(&[0.0, 0.0]);
        let hi = v(&[1.0, 1.0]);
        assert_eq!(project_box(&lo, &hi, &v(&[2.0, -1.0])).unwrap(), v(&[1.0, 0.0]));
        let inside = v(&[0.3, 0.9]);
        assert_eq!(project_box(&lo, &hi, &inside).unwrap(), inside);
        let r = project_box(&v(&[0.0]), &v(&[1.0]), &v(&[2.0 / 3.0])).unwrap();
        assert_eq!(r[0], 2.0 / 3.0);
        assert!(matches!(
            project_box(&lo, &hi, &v(&[1.0])),
            Err(Error::DimMismatch { .. })
        ));
    }

    #[test]
    fn ball_scales_radially() {
        let c = v(&[0.0, 0.0]);
        let p = project_ball(&c, 1.0, &v(&[3.0, 4.0])).unwrap();
        assert!((p[0] - 0.6).abs() < 1e-15 && (p[1] - 0.8).abs() < 1e-15);
        assert_eq!(project_ball(&c, 1.0, &c).unwrap(), c);
        let mut r = rng();
        let ball = ConvexSet::ball(c.clone(), 2.0).unwrap();
        for _ in 0..100 {
            let z = ball.sample(&mut r, 1.0);
            assert_eq!(project_ball(&c, 2.0, &z).unwrap(), z);
        }
    }

    #[test]
    fn simplex_projection_known_values() {
        let p = project_simplex(&v(&[0.5, 0.5, 0.5]), 1.0);
        for i in 0..3 {
            assert!((p[i] - 1.0 / 3.0).abs() < 1e-15);
        }
        let p = project_simplex(&v(&[2.0, 0.0, -1.0]), 1.0);
        assert_eq!(p, v(&[1.0, 0.0, 0.0]));
    }

    #[test]
    fn projection_invariants_hold_for_every_set_kind() {
        let mut r = rng();
        for set in zoo_sets() {
            for _ in 0..1000 {
                let z = DenseVector::from_fn(3, |_| r.random_range(-4.0..4.0));
                let z2 = DenseVector::from_fn(3, |_| r.random_range(-4.0..4.0));
                let p = set.project(&z).unwrap();
                let p2 = set.project(&z2).unwrap();
                assert!(set.contains(&p), "{:?} does not contain {:?}", set.kind(), p);
                assert!(set.project(&p).unwrap().dist(&p) <= 1e-12);
                assert!(p.dist(&p2) <= z.dist(&z2) + 1e-12);
                let zp = set.sample(&mut r, 4.0);
                assert!(set.contains(&zp));
                // variational characterization
                assert!((&z - &p).dot(&(&zp - &p)) <= 1e-9, "{:?}", set.kind());
            }
        }
    }

    #[test]
    fn soft_threshold_textbook() {
        let z = resolvent_soft_threshold(1.0, 1.0, &v(&[2.0, -0.5, 0.0])).unwrap();
        assert_eq!(z, v(&[1.0, 0.0, 0.0]));
        // (w - z)/eta must be a subgradient of lambda ||.||_1 at z
        let w = v(&[2.0, -0.5, 0.0]);
        let g = &w - &z;
        assert_eq!(g[0], 1.0);
        assert!(g[1].abs() <= 1.0 && g[2].abs() <= 1.0);
        let tiny = resolvent_soft_threshold(1e-300, 1.0, &w).unwrap();
        assert_eq!(tiny, w);
        assert!(resolvent_soft_threshold(0.0, 1.0, &w).is_err());
    }

    #[test]
    fn soft_threshold_matches_grid_argmin() {
        // argmin_z 0.5 (z - 3)^2 + 2 * 0.5 |z| by grid search
        let (lambda, eta, w) = (0.5, 2.0, 3.0);
        let mut best = (f64::INFINITY, 0.0);
        let n = 2_000_000;
        for i in 0..=n {
            let z = -5.0 + 10.0 * i as f64 / n as f64;
            let obj = 0.5 * (z - w) * (z - w) + eta * lambda * f64::abs(z);
            if obj < best.0 {
                best = (obj, z);
            }
        }
        let z = resolvent_soft_threshold(lambda, eta, &v(&[w])).unwrap();
        assert!((z[0] - best.1).abs() < 1e-5);
        assert_eq!(z[0], 2.0);
    }

    #[test]
    fn certificates_from_known_resolvents() {
        let w = v(&[0.3, -2.0]);
        let (z, cert) = extract_certificate(&MaxMonotoneOperator::Zero { dim: 2 }, 0.7, &w).unwrap();
        assert_eq!(z, w);
        assert_eq!(cert.c, DenseVector::zeros(2));

        let unit = MaxMonotoneOperator::NormalCone(ConvexSet::uniform_box(1, 0.0, 1.0).unwrap());
        let (z, cert) = extract_certificate(&unit, 1.0, &v(&[7.0 / 9.0])).unwrap();
        assert_eq!(z[0], 7.0 / 9.0);
        assert_eq!(cert.c[0], 0.0);
        let (z, cert) = extract_certificate(&unit, 1.0, &v(&[1.5])).unwrap();
        assert_eq!(z[0], 1.0);
        assert_eq!(cert.c[0], 0.5);
        assert_eq!(cert.at, z);
    }

    #[test]
    fn normal_cone_resolvent_is_projection_for_every_eta() {
        let mut r = rng();
        for set in zoo_sets() {
            let a = MaxMonotoneOperator::NormalCone(set.clone());
            for eta in [0.01, 0.5, 3.0, 100.0] {
                let w = DenseVector::from_fn(3, |_| r.random_range(-3.0..3.0));
                assert_eq!(a.resolvent(eta, &w).unwrap(), set.project(&w).unwrap());
            }
        }
    }

    #[test]
    fn normal_cone_certificates_are_outward_normals() {
        let mut r = rng();
        for set in zoo_sets() {
            let a = MaxMonotoneOperator::NormalCone(set.clone());
            for _ in 0..50 {
                let w = DenseVector::from_fn(3, |_| r.random_range(-4.0..4.0));
                let (_, cert) = extract_certificate(&a, 0.8, &w).unwrap();
                for _ in 0..20 {
                    let zp = set.sample(&mut r, 4.0);
                    let lhs = cert.c.dot(&(&zp - &cert.at));
                    assert!(lhs <= 1e-9 * (1.0 + cert.c.norm()), "{:?}: {lhs}", set.kind());
                }
            }
        }
    }

    fn monotone_matrix(r: &mut ChaCha8Rng, n: usize) -> DMatrix<f64> {
        let s = DMatrix::from_fn(n, n, |_, _| r.random_range(-1.0..1.0));
        let k = DMatrix::from_fn(n, n, |_, _| r.random_range(-1.0..1.0));
        &s * s.transpose() * 0.3 + (&k - k.transpose())
    }

    #[test]
    fn resolvents_are_firmly_nonexpansive() {
        let mut r = rng();
        let ops = vec![
            MaxMonotoneOperator::Zero { dim: 4 },
            MaxMonotoneOperator::NormalCone(ConvexSet::uniform_box(4, -0.5, 1.0).unwrap()),
            MaxMonotoneOperator::NormalCone(ConvexSet::ball(DenseVector::zeros(4), 1.0).unwrap()),
            MaxMonotoneOperator::NormalCone(ConvexSet::simplex(4, 2.0).unwrap()),
            MaxMonotoneOperator::soft_threshold(v(&[0.5, 0.0, 1.0, 2.0])).unwrap(),
            MaxMonotoneOperator::LinearMonotone { matrix: monotone_matrix(&mut r, 4) },
        ];
        for a in &ops {
            for _ in 0..1000 {
                let eta = r.random_range(0.05..3.0);
                let w = DenseVector::from_fn(4, |_| r.random_range(-3.0..3.0));
                let w2 = DenseVector::from_fn(4, |_| r.random_range(-3.0..3.0));
                let j = a.resolvent(eta, &w).unwrap();
                let j2 = a.resolvent(eta, &w2).unwrap();
                let dj = &j - &j2;
                assert!(dj.norm() <= w.dist(&w2) + 1e-12, "{}", a.kind_name());
                assert!(dj.norm_sq() <= dj.dot(&(&w - &w2)) + 1e-9, "{}", a.kind_name());
            }
        }
    }

    #[test]
    fn linear_resolvent_solves_the_system() {
        let mut r = rng();
        let m = monotone_matrix(&mut r, 5);
        let a = MaxMonotoneOperator::LinearMonotone { matrix: m.clone() };
        let w = DenseVector::from_fn(5, |_| r.random_range(-1.0..1.0));
        let (z, cert) = extract_certificate(&a, 0.4, &w).unwrap();
        // (w - z)/eta = M z
        let mz = mat_vec(&m, &z);
        assert!(cert.c.dist(&mz) < 1e-10);
    }

    fn sigma_max_svd(m: &DMatrix<f64>) -> f64 {
        m.clone().svd(false, false).singular_values.max()
    }

    #[test]
    fn lipschitz_estimate_brackets_spectral_norm() {
        let mut r = rng();
        let m = DMatrix::from_fn(4, 4, |_, _| r.random_range(-1.0..1.0));
        let smax = sigma_max_svd(&m);
        let op = LipschitzOperator::linear(m, smax).unwrap();
        let mut sr = ChaCha8Rng::seed_from_u64(99);
        let est = estimate_lipschitz(
            |z| op.eval(z).unwrap(),
            || DenseVector::from_fn(4, |_| sr.random_range(-1.0..1.0)),
            5000,
        )
        .unwrap();
        assert!(est <= 1.1 * smax * (1.0 + 1e-12));
        assert!(est >= smax, "{est} vs {smax}");

        let mut sr = ChaCha8Rng::seed_from_u64(1);
        let zero = estimate_lipschitz(
            |z| DenseVector::zeros(z.dim()),
            || DenseVector::from_fn(2, |_| sr.random_range(-1.0..1.0)),
            100,
        )
        .unwrap();
        assert_eq!(zero, 0.0);

        let mut sr = ChaCha8Rng::seed_from_u64(2);
        let three = estimate_lipschitz(
            |z| z.scale(3.0),
            || DenseVector::from_fn(2, |_| sr.random_range(-1.0..1.0)),
            100,
        )
        .unwrap();
        assert!((3.0..=3.3 + 1e-12).contains(&three), "{three}");
        assert!(estimate_lipschitz(|z| z.clone(), || DenseVector::zeros(1), 99).is_err());
    }

    #[test]
    fn lipschitz_operator_checks_dimensions() {
        let op = LipschitzOperator::from_fn(2, 1.0, |z| z.clone()).unwrap();
        assert!(matches!(op.eval(&v(&[1.0])), Err(Error::DimMismatch { .. })));
        assert!(LipschitzOperator::from_fn(2, 0.0, |z| z.clone()).is_err());
    }
}
