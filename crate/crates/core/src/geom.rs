//! Vector geometry shared by the forward tracer and the inverse pipeline:
//! refraction, reflection, axis-angle rotation and line-line closest points.
//!
//! Angles are radians throughout.

use nalgebra::{Unit, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Vec3 = Vector3<f64>;

/// Inputs whose norm deviates from one by more than this are rejected.
pub const UNIT_TOLERANCE: f64 = 1e-6;

/// Lines whose directions satisfy `|cos| > 1 - PARALLEL_EPS` are treated as parallel.
pub const PARALLEL_EPS: f64 = 1e-9;

/// A half-line with unit direction. Also used as an infinite line where noted.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ray3 {
    origin: Vec3,
    dir: Vec3,
}

impl Ray3 {
    /// Builds a ray, normalizing `dir`. Fails on a zero or non-finite direction.
    pub fn new(origin: Vec3, dir: Vec3) -> Result<Self> {
        let n = dir.norm();
        if !(n.is_finite() && n > 0.0) || !origin.iter().all(|c| c.is_finite()) {
            return Err(Error::Contract(format!("degenerate ray direction {dir:?}")));
        }
        Ok(Self { origin, dir: dir / n })
    }

    pub fn through(from: Vec3, to: Vec3) -> Result<Self> {
        Self::new(from, to - from)
    }

    #[inline]
    pub fn origin(&self) -> Vec3 {
        self.origin
    }

    #[inline]
    pub fn dir(&self) -> Vec3 {
        self.dir
    }

    #[inline]
    pub fn at(&self, t: f64) -> Vec3 {
        self.origin + self.dir * t
    }

    pub fn reversed(&self) -> Self {
        Self { origin: self.origin, dir: -self.dir }
    }
}

/// Refractive index of a homogeneous medium (always >= 1).
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct MediumIndex(f64);

impl MediumIndex {
    pub const AIR: MediumIndex = MediumIndex(1.0);

    pub fn new(value: f64) -> Result<Self> {
        if value.is_finite() && value >= 1.0 {
            Ok(Self(value))
        } else {
            Err(Error::Contract(format!("refractive index must be >= 1, got {value}")))
        }
    }

    #[inline]
    pub fn value(self) -> f64 {
        self.0
    }
}

impl TryFrom<f64> for MediumIndex {
    type Error = Error;
    fn try_from(v: f64) -> Result<Self> {
        Self::new(v)
    }
}

impl From<MediumIndex> for f64 {
    fn from(m: MediumIndex) -> f64 {
        m.0
    }
}

/// Outcome of a refraction attempt. Total internal reflection is a value, not an error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Refraction {
    Transmitted(Vec3),
    TotalInternalReflection,
}

impl Refraction {
    pub fn transmitted(self) -> Option<Vec3> {
        match self {
            Refraction::Transmitted(d) => Some(d),
            Refraction::TotalInternalReflection => None,
        }
    }

    pub fn is_tir(self) -> bool {
        matches!(self, Refraction::TotalInternalReflection)
    }
}

fn checked_unit(v: Vec3, what: &str) -> Result<Vec3> {
    let n = v.norm();
    if !n.is_finite() || (n - 1.0).abs() > UNIT_TOLERANCE {
        return Err(Error::Contract(format!("{what} must be unit length, |v| = {n}")));
    }
    Ok(v / n)
}

/// Refracts `incident` crossing from index `n1` into `n2` at a surface with `normal`.
///
/// The normal may face either side; it is flipped internally so that it opposes
/// the incident direction. Both inputs must be unit within [`UNIT_TOLERANCE`].
pub fn refract(incident: Vec3, normal: Vec3, n1: MediumIndex, n2: MediumIndex) -> Result<Refraction> {
    let d = checked_unit(incident, "incident direction")?;
    let mut n = checked_unit(normal, "surface normal")?;
    let mut cos_i = -n.dot(&d);
    if cos_i < 0.0 {
        n = -n;
        cos_i = -cos_i;
    }
    let eta = n1.0 / n2.0;
    let sin2_i = (1.0 - cos_i * cos_i).max(0.0);
    let sin2_t = eta * eta * sin2_i;
    if sin2_t > 1.0 {
        return Ok(Refraction::TotalInternalReflection);
    }
    let cos_t = (1.0 - sin2_t).sqrt();
    let t = d * eta + n * (eta * cos_i - cos_t);
    Ok(Refraction::Transmitted(t.normalize()))
}

/// Mirror reflection of `incident` about the plane with `normal`.
pub fn reflect(incident: Vec3, normal: Vec3) -> Result<Vec3> {
    let d = checked_unit(incident, "incident direction")?;
    let n = checked_unit(normal, "surface normal")?;
    Ok(d - n * (2.0 * d.dot(&n)))
}

/// `asin(n2 / n1)` when light can be totally internally reflected going from n1 to n2.
pub fn critical_angle(n1: MediumIndex, n2: MediumIndex) -> Option<f64> {
    (n1.0 > n2.0).then(|| (n2.0 / n1.0).asin())
}

/// Rotates `v` by `angle` about the unit `axis` (right-hand rule).
pub fn rodrigues_rotate(v: Vec3, axis: Vec3, angle: f64) -> Result<Vec3> {
    let k = checked_unit(axis, "rotation axis")?;
    let (s, c) = angle.sin_cos();
    Ok(v * c + k.cross(&v) * s + k * (k.dot(&v) * (1.0 - c)))
}

/// Angle between two unit vectors, robust near 0 and pi.
pub fn angle_between(a: Vec3, b: Vec3) -> f64 {
    a.cross(&b).norm().atan2(a.dot(&b))
}

/// Parameters of the mutually closest points of two non-parallel lines.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClosestPair {
    pub s: f64,
    pub t: f64,
    pub midpoint: Vec3,
}

/// Result of intersecting two lines in the least-squares sense.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TriangulationResult {
    /// Minimum distance between the two lines.
    pub gap: f64,
    /// `None` when the lines are parallel (no unique closest pair).
    pub closest: Option<ClosestPair>,
}

impl TriangulationResult {
    pub fn is_parallel(&self) -> bool {
        self.closest.is_none()
    }

    pub fn midpoint(&self) -> Option<Vec3> {
        self.closest.map(|c| c.midpoint)
    }
}

/// Closest points between the infinite lines through `lm` and `ln`.
pub fn closest_points(lm: &Ray3, ln: &Ray3) -> TriangulationResult {
    let (u, v) = (lm.dir, ln.dir);
    let w0 = lm.origin - ln.origin;
    let b = u.dot(&v);
    if b.abs() > 1.0 - PARALLEL_EPS {
        // distance from ln's origin to line lm
        let perp = w0 - u * w0.dot(&u);
        return TriangulationResult { gap: perp.norm(), closest: None };
    }
    let d = u.dot(&w0);
    let e = v.dot(&w0);
    let denom = 1.0 - b * b;
    let s = (b * e - d) / denom;
    let t = (e - b * d) / denom;
    let pm = lm.at(s);
    let pn = ln.at(t);
    TriangulationResult {
        gap: (pm - pn).norm(),
        closest: Some(ClosestPair { s, t, midpoint: (pm + pn) * 0.5 }),
    }
}

/// Any unit vector perpendicular to `v`.
pub fn any_perpendicular(v: Vec3) -> Vec3 {
    let a = if v.x.abs() < 0.9 { Vec3::x() } else { Vec3::y() };
    v.cross(&a).normalize()
}

pub fn unit(v: Vec3) -> Unit<Vec3> {
    Unit::new_normalize(v)
}
