//! Convergence measures: certificate (tangent) residual, natural residual,
//! and the restricted gap functions.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::operators::{ConvexSet, LipschitzOperator, MaxMonotoneOperator};
use crate::types::DenseVector;

/// `||F(z) + c||`. Upper-bounds the tangent residual at `z` whenever
/// `c` lies in `A(z)`.
pub fn cert_residual(fz: &DenseVector, c: &DenseVector) -> Result<f64> {
    fz.check_dim(c)?;
    Ok(fz.iter().zip(c.iter()).map(|(a, b)| (a + b) * (a + b)).sum::<f64>().sqrt())
}

/// `||z - J_A(z - F(z))||` with unit resolvent parameter.
pub fn natural_residual(
    f: &LipschitzOperator,
    a: &MaxMonotoneOperator,
    z: &DenseVector,
) -> Result<f64> {
    let fz = f.eval(z)?;
    natural_residual_with(&fz, a, z)
}

/// Natural residual when `F(z)` is already known.
pub fn natural_residual_with(
    fz: &DenseVector,
    a: &MaxMonotoneOperator,
    z: &DenseVector,
) -> Result<f64> {
    fz.check_dim(z)?;
    let j = a.resolvent(1.0, &(z - fz))?;
    Ok(z.dist(&j))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum GapVariant {
    Svi,
    Mvi,
}

/// Query point and restriction radius for the restricted gap functions.
#[derive(Debug, Clone, PartialEq)]
pub struct GapQuery {
    pub z: DenseVector,
    pub radius: f64,
    pub variant: GapVariant,
}

impl GapQuery {
    pub fn new(set: &ConvexSet, z: DenseVector, radius: f64, variant: GapVariant) -> Result<Self> {
        if !(radius.is_finite() && radius > 0.0) {
            return Err(Error::InvalidParameter(format!("gap radius must be positive, got {radius}")));
        }
        if z.dim() != set.dim() {
            return Err(Error::DimMismatch { expected: set.dim(), found: z.dim() });
        }
        if !set.contains(&z) {
            return Err(Error::InvalidParameter("gap query point must lie in Z".into()));
        }
        Ok(Self { z, radius, variant })
    }
}

const BISECTION_ITERS: usize = 200;
const MULTIPLIER_TOL: f64 = 1e-10;

/// `max <F(z), z - z'>` over `z' in Z ∩ B(z, D)`, computed exactly.
pub fn gap_svi(f: &LipschitzOperator, set: &ConvexSet, query: &GapQuery) -> Result<f64> {
    if query.variant != GapVariant::Svi {
        return Err(Error::InvalidParameter("gap_svi needs an SVI query".into()));
    }
    let z = &query.z;
    let d = query.radius;
    let g = f.eval(z)?;
    let gnorm = g.norm();
    if gnorm == 0.0 {
        return Ok(0.0);
    }
    match set {
        ConvexSet::FullSpace { .. } => Ok(d * gnorm),
        ConvexSet::Ball { center, radius } => Ok(ball_gap(&g, z, d, center, *radius)),
        ConvexSet::Box { lo, hi } => Ok(box_gap(&g, z, d, lo, hi)),
        ConvexSet::Simplex { .. } => Err(Error::UnsupportedSet("simplex")),
    }
}

// Minimize <g, z'> over the intersection of B(z, d) and B(u, r), z inside B(u, r).
fn ball_gap(g: &DenseVector, z: &DenseVector, d: f64, u: &DenseVector, r: f64) -> f64 {
    let gn = g.norm();
    let ghat = g.scale(1.0 / gn);
    let cand = z.add_scaled(-d, &ghat);
    if cand.dist(u) <= r {
        return d * gn;
    }
    let cand = u.add_scaled(-r, &ghat);
    if cand.dist(z) <= d {
        return g.dot(&(z - &cand));
    }
    // Both spheres active: the optimum lies on their intersection, an
    // (n-2)-sphere centred on the line through z and u.
    let v = u - z;
    let dv = v.norm();
    let vhat = v.scale(1.0 / dv);
    let t = (d * d - r * r + dv * dv) / (2.0 * dv);
    let c0 = z.add_scaled(t, &vhat);
    let h = (d * d - t * t).max(0.0).sqrt();
    let g_perp = g.add_scaled(-g.dot(&vhat), &vhat);
    let gp = g_perp.norm();
    let opt = if gp > 0.0 { c0.add_scaled(-h / gp, &g_perp) } else { c0 };
    g.dot(&(z - &opt))
}

// Lagrangian bisection on the ball constraint:
// d(mu) = clamp(-g/mu, lo - z, hi - z) has norm decreasing in mu.
fn box_gap(g: &DenseVector, z: &DenseVector, d: f64, lo: &DenseVector, hi: &DenseVector) -> f64 {
    let n = z.dim();
    let step_at = |mu: f64| -> DenseVector {
        DenseVector::from_fn(n, |i| {
            let (a, b) = (lo[i] - z[i], hi[i] - z[i]);
            if mu == 0.0 {
                if g[i] > 0.0 {
                    a
                } else if g[i] < 0.0 {
                    b
                } else {
                    0.0
                }
            } else {
                (-g[i] / mu).clamp(a.min(0.0), b.max(0.0))
            }
        })
    };
    let corner = step_at(0.0);
    if corner.norm() <= d {
        return -g.dot(&corner);
    }
    let (mut mu_lo, mut mu_hi) = (0.0, g.norm() / d);
    for _ in 0..BISECTION_ITERS {
        let mid = 0.5 * (mu_lo + mu_hi);
        if step_at(mid).norm() > d {
            mu_lo = mid;
        } else {
            mu_hi = mid;
        }
        if mu_hi - mu_lo <= MULTIPLIER_TOL * mu_hi.max(f64::MIN_POSITIVE) {
            break;
        }
    }
    // mu_hi keeps the step inside the ball, so the value is attained.
    -g.dot(&step_at(mu_hi))
}

/// Grid lower bound on `Gap^MVI`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridGap {
    pub value: f64,
    /// Spacing of the grid along each axis.
    pub spacing: f64,
    /// Always true: grid enumeration only certifies a lower bound.
    pub lower_bound: bool,
}

/// `max <F(z'), z - z'>` over grid points of `Z ∩ B(z, D)`; `dim <= 2`.
/// `grid_points` is the number of points per axis.
pub fn gap_mvi_grid(
    f: &LipschitzOperator,
    set: &ConvexSet,
    query: &GapQuery,
    grid_points: usize,
) -> Result<GridGap> {
    let z = &query.z;
    let n = z.dim();
    if n > 2 {
        return Err(Error::DimTooLarge { dim: n });
    }
    if grid_points < 2 {
        return Err(Error::InvalidParameter("grid needs at least 2 points per axis".into()));
    }
    let d = query.radius;
    let (lo, hi) = bounding_box(set, z, d);
    let spacing = (0..n).map(|i| (hi[i] - lo[i]) / (grid_points - 1) as f64).fold(0.0, f64::max);
    let mut best = 0.0_f64; // z' = z
    let mut visit = |p: DenseVector| -> Result<()> {
        if set.contains(&p) && p.dist(z) <= d {
            let val = f.eval(&p)?.dot(&(z - &p));
            best = best.max(val);
        }
        Ok(())
    };
    let coord = |i: usize, j: usize| lo[i] + (hi[i] - lo[i]) * j as f64 / (grid_points - 1) as f64;
    if n == 1 {
        for j in 0..grid_points {
            visit(DenseVector::from_vec_unchecked(vec![coord(0, j)]))?;
        }
    } else {
        for j in 0..grid_points {
            for l in 0..grid_points {
                visit(DenseVector::from_vec_unchecked(vec![coord(0, j), coord(1, l)]))?;
            }
        }
    }
    Ok(GridGap { value: best, spacing, lower_bound: true })
}

fn bounding_box(set: &ConvexSet, z: &DenseVector, d: f64) -> (Vec<f64>, Vec<f64>) {
    let n = z.dim();
    let mut lo: Vec<f64> = z.iter().map(|x| x - d).collect();
    let mut hi: Vec<f64> = z.iter().map(|x| x + d).collect();
    let (slo, shi): (Vec<f64>, Vec<f64>) = match set {
        ConvexSet::FullSpace { .. } => (lo.clone(), hi.clone()),
        ConvexSet::Box { lo, hi } => (lo.as_slice().to_vec(), hi.as_slice().to_vec()),
        ConvexSet::Ball { center, radius } => (
            center.iter().map(|c| c - radius).collect(),
            center.iter().map(|c| c + radius).collect(),
        ),
        ConvexSet::Simplex { total, .. } => (vec![0.0; n], vec![*total; n]),
    };
    for i in 0..n {
        lo[i] = lo[i].max(slo[i]);
        hi[i] = hi[i].min(shi[i]);
    }
    (lo, hi)
}
