use nalgebra::{Matrix3, Rotation3, Vector2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{Ray3, Vec3};

/// Side length of the simulated reference pattern, in scene units.
pub const PATTERN_EXTENT: f64 = 32.0;
/// Display texels per scene unit; one texel is also the default stripe width.
pub const PATTERN_TEXELS_PER_UNIT: f64 = 32.0;

/// A calibrated reference plane. Pattern coordinates `(u, v)` are measured in
/// scene units along the pose's local x and y axes from the plane center, so
/// the displayed area is `[-w/2, w/2] x [-h/2, h/2]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PatternPlane {
    pub rotation: Rotation3<f64>,
    pub center: Vec3,
    pub extent: Vector2<f64>,
    #[serde(default = "default_texels")]
    pub texels_per_unit: f64,
}

fn default_texels() -> f64 {
    PATTERN_TEXELS_PER_UNIT
}

/// Where a ray meets a pattern plane.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PatternHit {
    pub t: f64,
    pub position: Vec3,
    pub uv: Vector2<f64>,
}

impl PatternPlane {
    pub fn new(rotation: Rotation3<f64>, center: Vec3, extent: Vector2<f64>) -> Result<Self> {
        let p = Self { rotation, center, extent, texels_per_unit: PATTERN_TEXELS_PER_UNIT };
        p.validate()?;
        Ok(p)
    }

    /// Fronto-parallel 32 x 32 plane centered on the z axis at depth `z`.
    pub fn at_z(z: f64) -> Self {
        Self {
            rotation: Rotation3::identity(),
            center: Vec3::new(0.0, 0.0, z),
            extent: Vector2::new(PATTERN_EXTENT, PATTERN_EXTENT),
            texels_per_unit: PATTERN_TEXELS_PER_UNIT,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let m = self.rotation.matrix();
        if (m.transpose() * m - Matrix3::identity()).norm() > 1e-12 {
            return Err(Error::Config("pattern rotation is not orthonormal".into()));
        }
        if !(self.extent.x > 0.0 && self.extent.y > 0.0) {
            return Err(Error::Config("pattern extent must be positive".into()));
        }
        if !(self.texels_per_unit > 0.0) {
            return Err(Error::Config("pattern resolution must be positive".into()));
        }
        Ok(())
    }

    pub fn normal(&self) -> Vec3 {
        self.rotation * Vec3::z()
    }

    pub fn point(&self, uv: Vector2<f64>) -> Vec3 {
        self.center + self.rotation * Vec3::new(uv.x, uv.y, 0.0)
    }

    pub fn to_local(&self, p: Vec3) -> Vector2<f64> {
        let l = self.rotation.inverse() * (p - self.center);
        Vector2::new(l.x, l.y)
    }

    /// Signed distance of `p` from the plane along its normal.
    pub fn signed_distance(&self, p: Vec3) -> f64 {
        (p - self.center).dot(&self.normal())
    }

    pub fn in_extent(&self, uv: Vector2<f64>) -> bool {
        uv.x.abs() <= self.extent.x / 2.0 && uv.y.abs() <= self.extent.y / 2.0
    }

    /// Intersection of the ray with the infinite plane beyond `min_t`.
    pub fn intersect(&self, ray: &Ray3, min_t: f64) -> Option<PatternHit> {
        let n = self.normal();
        let dn = ray.dir().dot(&n);
        if dn.abs() < 1e-15 {
            return None;
        }
        let t = (self.center - ray.origin()).dot(&n) / dn;
        if t <= min_t {
            return None;
        }
        let position = ray.at(t);
        Some(PatternHit { t, position, uv: self.to_local(position) })
    }
}
