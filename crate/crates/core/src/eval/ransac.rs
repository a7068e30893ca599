//! RANSAC fitting of planes, spheres and cylinders with least-squares refinement.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector, Matrix3, Vector4};
use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::geom::{any_perpendicular, Vec3};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum PrimitiveKind {
    Plane,
    Sphere,
    Cylinder,
}

impl PrimitiveKind {
    pub fn minimal_sample(self) -> usize {
        match self {
            PrimitiveKind::Plane => 3,
            PrimitiveKind::Sphere => 4,
            PrimitiveKind::Cylinder => 5,
        }
    }
}

impl fmt::Display for PrimitiveKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PrimitiveKind::Plane => "plane",
            PrimitiveKind::Sphere => "sphere",
            PrimitiveKind::Cylinder => "cylinder",
        })
    }
}

impl FromStr for PrimitiveKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "plane" => Ok(PrimitiveKind::Plane),
            "sphere" => Ok(PrimitiveKind::Sphere),
            "cylinder" => Ok(PrimitiveKind::Cylinder),
            _ => Err(Error::Config(format!("unknown primitive '{s}' (plane, sphere, cylinder)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Primitive {
    /// Points with `normal . p = offset`.
    Plane { normal: Vec3, offset: f64 },
    Sphere { center: Vec3, radius: f64 },
    /// Infinite cylinder around the line through `point` along unit `axis`.
    Cylinder { point: Vec3, axis: Vec3, radius: f64 },
}

impl Primitive {
    pub fn kind(&self) -> PrimitiveKind {
        match self {
            Primitive::Plane { .. } => PrimitiveKind::Plane,
            Primitive::Sphere { .. } => PrimitiveKind::Sphere,
            Primitive::Cylinder { .. } => PrimitiveKind::Cylinder,
        }
    }

    pub fn distance(&self, p: Vec3) -> f64 {
        match *self {
            Primitive::Plane { normal, offset } => (normal.dot(&p) - offset).abs(),
            Primitive::Sphere { center, radius } => ((p - center).norm() - radius).abs(),
            Primitive::Cylinder { point, axis, radius } => (radial(p, point, axis).norm() - radius).abs(),
        }
    }

    /// Normal of the nearest surface point, pointing away from the centre or
    /// axis (along `normal` for planes).
    pub fn normal_at(&self, p: Vec3) -> Result<Vec3> {
        let v = match *self {
            Primitive::Plane { normal, .. } => return Ok(normal),
            Primitive::Sphere { center, .. } => p - center,
            Primitive::Cylinder { point, axis, .. } => radial(p, point, axis),
        };
        if v.norm() == 0.0 {
            return Err(Error::Fit(format!("no unique normal at {p:?}")));
        }
        Ok(v.normalize())
    }

    fn is_finite(&self) -> bool {
        match self {
            Primitive::Plane { normal, offset } => normal.iter().all(|x| x.is_finite()) && offset.is_finite(),
            Primitive::Sphere { center, radius } => center.iter().all(|x| x.is_finite()) && radius.is_finite() && *radius > 0.0,
            Primitive::Cylinder { point, axis, radius } => {
                point.iter().chain(axis.iter()).all(|x| x.is_finite()) && radius.is_finite() && *radius > 0.0
            }
        }
    }
}

fn radial(p: Vec3, point: Vec3, axis: Vec3) -> Vec3 {
    let w = p - point;
    w - axis * w.dot(&axis)
}

fn centroid(points: &[Vec3]) -> Vec3 {
    points.iter().sum::<Vec3>() / points.len() as f64
}

/// Total least-squares plane through the centroid.
pub fn fit_plane(points: &[Vec3]) -> Result<Primitive> {
    if points.len() < 3 {
        return Err(Error::Fit(format!("plane needs 3 points, got {}", points.len())));
    }
    let c = centroid(points);
    let cov: Matrix3<f64> = points.iter().map(|p| (p - c) * (p - c).transpose()).sum();
    let eig = cov.symmetric_eigen();
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    // collinear or coincident points leave two vanishing eigenvalues
    if eig.eigenvalues[order[1]] <= 1e-12 * eig.eigenvalues[order[2]].max(f64::MIN_POSITIVE) {
        return Err(Error::Fit("points are collinear".into()));
    }
    let n: Vec3 = eig.eigenvectors.column(order[0]).into_owned().normalize();
    Ok(Primitive::Plane { normal: n, offset: n.dot(&c) })
}

/// Algebraic sphere fit refined by geometric least squares.
pub fn fit_sphere(points: &[Vec3]) -> Result<Primitive> {
    if points.len() < 4 {
        return Err(Error::Fit(format!("sphere needs 4 points, got {}", points.len())));
    }
    // |p|^2 = 2 c . p + k with k = r^2 - |c|^2, in coordinates centred on the centroid
    let c0 = centroid(points);
    let a = DMatrix::from_fn(points.len(), 4, |i, j| {
        let q = points[i] - c0;
        if j < 3 {
            2.0 * q[j]
        } else {
            1.0
        }
    });
    let b = DVector::from_iterator(points.len(), points.iter().map(|p| (p - c0).norm_squared()));
    let x = a.svd(true, true).solve(&b, 1e-12).map_err(|e| Error::Fit(e.to_string()))?;
    let center = c0 + Vec3::new(x[0], x[1], x[2]);
    let r2 = x[3] + Vec3::new(x[0], x[1], x[2]).norm_squared();
    if !(r2 > 0.0) {
        return Err(Error::Fit("points do not determine a sphere".into()));
    }
    let guess = Vector4::new(center.x, center.y, center.z, r2.sqrt());
    let refined = levenberg_marquardt(DVector::from_column_slice(guess.as_slice()), |v| {
        let c = Vec3::new(v[0], v[1], v[2]);
        DVector::from_iterator(points.len(), points.iter().map(|p| (p - c).norm() - v[3]))
    });
    let sphere = Primitive::Sphere { center: Vec3::new(refined[0], refined[1], refined[2]), radius: refined[3].abs() };
    if !sphere.is_finite() {
        return Err(Error::Fit("sphere fit diverged".into()));
    }
    Ok(sphere)
}

/// Geometric least-squares cylinder starting from `initial`.
pub fn fit_cylinder(points: &[Vec3], initial: &Primitive) -> Result<Primitive> {
    let Primitive::Cylinder { point, axis, radius } = *initial else {
        return Err(Error::Fit("cylinder refinement needs a cylinder".into()));
    };
    if points.len() < 5 {
        return Err(Error::Fit(format!("cylinder needs 5 points, got {}", points.len())));
    }
    let d0 = axis.normalize();
    let e1 = any_perpendicular(d0);
    let e2 = d0.cross(&e1);
    // anchor the axis point near the data so the offsets stay small
    let c0 = point + d0 * (centroid(points) - point).dot(&d0);
    let unpack = |v: &DVector<f64>| {
        let d = (d0 + e1 * v[0] + e2 * v[1]).normalize();
        (c0 + e1 * v[2] + e2 * v[3], d, v[4])
    };
    let refined = levenberg_marquardt(DVector::from_column_slice(&[0.0, 0.0, 0.0, 0.0, radius]), |v| {
        let (c, d, r) = unpack(v);
        DVector::from_iterator(points.len(), points.iter().map(|p| radial(*p, c, d).norm() - r))
    });
    let (point, axis, radius) = unpack(&refined);
    let cyl = Primitive::Cylinder { point, axis, radius: radius.abs() };
    if !cyl.is_finite() {
        return Err(Error::Fit("cylinder fit diverged".into()));
    }
    Ok(cyl)
}

/// Minimises the squared residuals from `x0` with a numerically differentiated
/// Levenberg-Marquardt iteration.
fn levenberg_marquardt(x0: DVector<f64>, residuals: impl Fn(&DVector<f64>) -> DVector<f64>) -> DVector<f64> {
    let mut x = x0;
    let mut r = residuals(&x);
    let mut cost = r.norm_squared();
    let mut lambda = 1e-3;
    for _ in 0..100 {
        if cost == 0.0 {
            break;
        }
        let mut jac = DMatrix::zeros(r.len(), x.len());
        for k in 0..x.len() {
            let h = 1e-7 * (1.0 + x[k].abs());
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[k] += h;
            xm[k] -= h;
            jac.set_column(k, &((residuals(&xp) - residuals(&xm)) / (2.0 * h)));
        }
        let jtj = jac.transpose() * &jac;
        let jtr = jac.transpose() * &r;
        let mut improved = false;
        while lambda < 1e12 {
            let mut a = jtj.clone();
            for k in 0..x.len() {
                a[(k, k)] += lambda * jtj[(k, k)].max(1e-12);
            }
            let Some(step) = a.cholesky().map(|c| c.solve(&(-&jtr))) else {
                lambda *= 10.0;
                continue;
            };
            let xn = &x + &step;
            let rn = residuals(&xn);
            let cn = rn.norm_squared();
            if cn.is_finite() && cn < cost {
                let small = step.norm() <= 1e-14 * (1.0 + x.norm());
                x = xn;
                r = rn;
                let done = small || cost - cn <= 1e-15 * cost;
                cost = cn;
                lambda = (lambda / 10.0).max(1e-12);
                improved = !done;
                break;
            }
            lambda *= 10.0;
        }
        if !improved {
            break;
        }
    }
    x
}

/// Unit normal of the local plane at `points[k]` from its nearest neighbours.
fn local_normal(points: &[Vec3], k: usize, neighbours: usize) -> Option<Vec3> {
    let p = points[k];
    let mut d: Vec<(f64, usize)> = points.iter().enumerate().map(|(i, q)| ((q - p).norm_squared(), i)).collect();
    let m = (neighbours + 1).min(d.len());
    if m < 3 {
        return None;
    }
    d.select_nth_unstable_by(m - 1, |a, b| a.0.total_cmp(&b.0));
    let near: Vec<Vec3> = d[..m].iter().map(|&(_, i)| points[i]).collect();
    match fit_plane(&near).ok()? {
        Primitive::Plane { normal, .. } => Some(normal),
        _ => None,
    }
}

/// Circle through points projected onto the plane normal to `axis`.
fn circle_about(points: &[Vec3], axis: Vec3) -> Option<Primitive> {
    let e1 = any_perpendicular(axis);
    let e2 = axis.cross(&e1);
    let o = points[0];
    let a = DMatrix::from_fn(points.len(), 3, |i, j| {
        let q = points[i] - o;
        [2.0 * q.dot(&e1), 2.0 * q.dot(&e2), 1.0][j]
    });
    let b = DVector::from_iterator(points.len(), points.iter().map(|p| {
        let q = p - o;
        q.dot(&e1).powi(2) + q.dot(&e2).powi(2)
    }));
    let x = a.svd(true, true).solve(&b, 1e-12).ok()?;
    let r2 = x[2] + x[0] * x[0] + x[1] * x[1];
    let cyl = Primitive::Cylinder { point: o + e1 * x[0] + e2 * x[1], axis, radius: r2.max(0.0).sqrt() };
    (r2 > 0.0 && cyl.is_finite()).then_some(cyl)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RansacOptions {
    pub threshold: f64,
    pub iterations: usize,
    pub seed: u64,
    /// Neighbourhood size for the local normals that seed cylinder axes.
    pub normal_neighbours: usize,
}

impl Default for RansacOptions {
    fn default() -> Self {
        Self { threshold: 0.5, iterations: 1000, seed: 0, normal_neighbours: 10 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub primitive: Primitive,
    /// Indices of points within the threshold of the refined primitive.
    pub inliers: Vec<usize>,
}

impl FitResult {
    pub fn inlier_fraction(&self, total: usize) -> f64 {
        self.inliers.len() as f64 / total as f64
    }
}

fn inliers_of(points: &[Vec3], prim: &Primitive, threshold: f64) -> Vec<usize> {
    (0..points.len()).filter(|&i| prim.distance(points[i]) <= threshold).collect()
}

fn hypothesis(points: &[Vec3], sample: &[usize], kind: PrimitiveKind, opts: &RansacOptions) -> Option<Primitive> {
    let pts: Vec<Vec3> = sample.iter().map(|&i| points[i]).collect();
    match kind {
        PrimitiveKind::Plane => fit_plane(&pts).ok(),
        PrimitiveKind::Sphere => fit_sphere(&pts).ok(),
        PrimitiveKind::Cylinder => {
            // axis across two local normals, radius from a circle through all five
            let n1 = local_normal(points, sample[0], opts.normal_neighbours)?;
            let n2 = local_normal(points, sample[1], opts.normal_neighbours)?;
            let axis = n1.cross(&n2);
            if axis.norm() < 1e-3 {
                return None;
            }
            circle_about(&pts, axis.normalize())
        }
    }
}

fn refine(points: &[Vec3], inliers: &[usize], prim: &Primitive) -> Option<Primitive> {
    let pts: Vec<Vec3> = inliers.iter().map(|&i| points[i]).collect();
    match prim.kind() {
        PrimitiveKind::Plane => fit_plane(&pts).ok(),
        PrimitiveKind::Sphere => fit_sphere(&pts).ok(),
        PrimitiveKind::Cylinder => fit_cylinder(&pts, prim).ok(),
    }
}

/// Robust primitive fit. The hypothesis with the most inliers wins (the
/// earliest on ties); it is then refit by least squares over its inliers.
/// Deterministic for a given seed.
pub fn ransac_fit(points: &[Vec3], kind: PrimitiveKind, opts: &RansacOptions) -> Result<FitResult> {
    let m = kind.minimal_sample();
    if points.len() < m {
        return Err(Error::Fit(format!("{kind} needs at least {m} points, got {}", points.len())));
    }
    if !(opts.threshold >= 0.0) {
        return Err(Error::Config(format!("inlier threshold must be non-negative, got {}", opts.threshold)));
    }
    let mut rng = ChaCha20Rng::seed_from_u64(opts.seed);
    let mut best: Option<(Primitive, usize)> = None;
    for _ in 0..opts.iterations.max(1) {
        let sample = index::sample(&mut rng, points.len(), m).into_vec();
        let Some(h) = hypothesis(points, &sample, kind, opts) else { continue };
        let count = points.iter().filter(|p| h.distance(**p) <= opts.threshold).count();
        if best.is_none_or(|(_, c)| count > c) {
            best = Some((h, count));
        }
    }
    let (h, _) = best.ok_or_else(|| Error::Fit(format!("no non-degenerate {kind} hypothesis")))?;
    let inliers = inliers_of(points, &h, opts.threshold);
    let primitive = if inliers.len() >= m { refine(points, &inliers, &h).unwrap_or(h) } else { h };
    let inliers = inliers_of(points, &primitive, opts.threshold);
    Ok(FitResult { primitive, inliers })
}
