use serde::Serialize;

use crate::error::{Error, Result};
use crate::geom::Vec3;
use crate::scene::shape::Shape;

use super::Primitive;

/// Summary statistics of a set of non-negative errors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ErrorSummary {
    pub count: usize,
    pub mean: f64,
    pub median: f64,
    pub rms: f64,
    pub max: f64,
}

impl ErrorSummary {
    /// `None` for an empty input or any non-finite value.
    pub fn from_values(values: &[f64]) -> Option<Self> {
        if values.is_empty() || values.iter().any(|v| !v.is_finite()) {
            return None;
        }
        let n = values.len() as f64;
        Some(Self {
            count: values.len(),
            mean: values.iter().sum::<f64>() / n,
            median: median(values),
            rms: (values.iter().map(|v| v * v).sum::<f64>() / n).sqrt(),
            max: values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        })
    }
}

pub fn median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}

/// What reconstructed points are compared against.
#[derive(Debug, Clone, PartialEq)]
pub enum Reference<'a> {
    /// Implicit surface, distance to first order `|f| / |grad f|`.
    Surface(&'a Shape),
    Primitive(&'a Primitive),
}

impl Reference<'_> {
    pub fn distance(&self, p: Vec3) -> Result<f64> {
        match self {
            Reference::Surface(shape) => {
                let (f, g) = shape.eval(p);
                let gn = g.norm();
                if gn == 0.0 {
                    return Err(Error::Fit(format!("implicit gradient vanishes at {p:?}")));
                }
                Ok(f.abs() / gn)
            }
            Reference::Primitive(prim) => Ok(prim.distance(p)),
        }
    }

    /// Outward reference normal at the reference point nearest to `p`.
    pub fn normal(&self, p: Vec3) -> Result<Vec3> {
        match self {
            Reference::Surface(shape) => {
                let g = shape.gradient(p);
                if g.norm() == 0.0 {
                    return Err(Error::Fit(format!("implicit gradient vanishes at {p:?}")));
                }
                Ok(g.normalize())
            }
            Reference::Primitive(prim) => prim.normal_at(p),
        }
    }
}

/// Angle between two unit vectors in degrees, from the clamped dot product.
pub fn angle_deg(a: Vec3, b: Vec3) -> f64 {
    a.dot(&b).clamp(-1.0, 1.0).acos().to_degrees()
}

/// Distance of every point from the reference, plus their summary.
pub fn position_errors(points: &[Vec3], reference: &Reference) -> Result<(Vec<f64>, Option<ErrorSummary>)> {
    let d = points.iter().map(|p| reference.distance(*p)).collect::<Result<Vec<_>>>()?;
    let s = ErrorSummary::from_values(&d);
    Ok((d, s))
}

/// Angle in degrees between each recovered normal and the reference normal.
pub fn normal_errors(points: &[(Vec3, Vec3)], reference: &Reference) -> Result<(Vec<f64>, Option<ErrorSummary>)> {
    let a = points
        .iter()
        .map(|(p, n)| Ok(angle_deg(n.normalize(), reference.normal(*p)?)))
        .collect::<Result<Vec<_>>>()?;
    let s = ErrorSummary::from_values(&a);
    Ok((a, s))
}
