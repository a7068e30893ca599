use nalgebra::{Rotation3, Vector2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{Ray3, Vec3};

/// Ideal pinhole camera. Camera axes follow the usual computer-vision frame:
/// x to the right, y down the image, z forward. Pixel `(i, j)` covers
/// `[i, i+1) x [j, j+1)` so its center is `(i + 0.5, j + 0.5)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PinholeCamera {
    pub position: Vec3,
    /// Camera-to-world rotation.
    pub rotation: Rotation3<f64>,
    pub focal: f64,
    pub principal: Vector2<f64>,
    pub width: u32,
    pub height: u32,
}

impl PinholeCamera {
    pub fn new(position: Vec3, rotation: Rotation3<f64>, focal: f64, width: u32, height: u32) -> Result<Self> {
        let cam = Self {
            position,
            rotation,
            focal,
            principal: Vector2::new(width as f64 / 2.0, height as f64 / 2.0),
            width,
            height,
        };
        cam.validate()?;
        Ok(cam)
    }

    /// Square-pixel camera whose horizontal field of view is `fov` radians.
    pub fn with_fov(position: Vec3, rotation: Rotation3<f64>, fov: f64, width: u32, height: u32) -> Result<Self> {
        if !(fov > 0.0 && fov < std::f64::consts::PI) {
            return Err(Error::Config(format!("field of view must be in (0, pi), got {fov}")));
        }
        let focal = width as f64 / 2.0 / (fov / 2.0).tan();
        Self::new(position, rotation, focal, width, height)
    }

    /// Camera at `position` looking along world +z with image x along world +x.
    pub fn looking_along_z(position: Vec3, fov: f64, width: u32, height: u32) -> Result<Self> {
        Self::with_fov(position, Rotation3::identity(), fov, width, height)
    }

    pub fn validate(&self) -> Result<()> {
        if self.width < 1 || self.height < 1 {
            return Err(Error::Config("image size must be at least 1x1".into()));
        }
        if !(self.focal > 0.0 && self.focal.is_finite()) {
            return Err(Error::Config(format!("focal length must be positive, got {}", self.focal)));
        }
        let m = self.rotation.matrix();
        if (m.transpose() * m - nalgebra::Matrix3::identity()).norm() > 1e-12 {
            return Err(Error::Config("camera rotation is not orthonormal".into()));
        }
        Ok(())
    }

    pub fn pixel_count(&self) -> usize {
        self.width as usize * self.height as usize
    }

    pub fn pixel_center(i: u32, j: u32) -> Vector2<f64> {
        Vector2::new(i as f64 + 0.5, j as f64 + 0.5)
    }

    pub fn contains(&self, px: Vector2<f64>) -> bool {
        px.x >= 0.0 && px.y >= 0.0 && px.x <= self.width as f64 && px.y <= self.height as f64
    }

    pub fn forward(&self) -> Vec3 {
        self.rotation * Vec3::z()
    }

    /// Visual ray through an image position (continuous pixel coordinates).
    pub fn pixel_ray(&self, px: Vector2<f64>) -> Ray3 {
        let d = Vec3::new((px.x - self.principal.x) / self.focal, (px.y - self.principal.y) / self.focal, 1.0);
        Ray3::new(self.position, self.rotation * d).expect("camera rays are finite")
    }

    /// Projects a world point; `None` behind the camera.
    pub fn project(&self, p: Vec3) -> Option<Vector2<f64>> {
        let c = self.rotation.inverse() * (p - self.position);
        (c.z > 0.0).then(|| Vector2::new(self.focal * c.x / c.z + self.principal.x, self.focal * c.y / c.z + self.principal.y))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn center_ray_is_optical_axis() {
        let cam = PinholeCamera::looking_along_z(Vec3::new(0.0, 0.0, -50.0), 0.5, 64, 64).unwrap();
        let r = cam.pixel_ray(Vector2::new(32.0, 32.0));
        assert_abs_diff_eq!((r.dir() - Vec3::z()).norm(), 0.0, epsilon = 1e-15);
    }

    #[test]
    fn project_inverts_pixel_ray() {
        let rot = Rotation3::from_euler_angles(0.1, -0.2, 0.3);
        let cam = PinholeCamera::with_fov(Vec3::new(1.0, 2.0, -30.0), rot, 0.7, 100, 80).unwrap();
        for px in [Vector2::new(3.5, 7.25), Vector2::new(99.0, 0.5), Vector2::new(50.0, 40.0)] {
            let p = cam.pixel_ray(px).at(17.0);
            assert_abs_diff_eq!((cam.project(p).unwrap() - px).norm(), 0.0, epsilon = 1e-9);
        }
    }

    #[test]
    fn fov_sets_focal() {
        let cam = PinholeCamera::looking_along_z(Vec3::zeros(), std::f64::consts::FRAC_PI_2, 200, 100).unwrap();
        assert_abs_diff_eq!(cam.focal, 100.0, epsilon = 1e-12);
        let edge = cam.pixel_ray(Vector2::new(200.0, 50.0));
        assert_abs_diff_eq!(edge.dir().x, edge.dir().z, epsilon = 1e-12);
    }

    #[test]
    fn rejects_bad_intrinsics() {
        assert!(PinholeCamera::new(Vec3::zeros(), Rotation3::identity(), 0.0, 10, 10).is_err());
        assert!(PinholeCamera::new(Vec3::zeros(), Rotation3::identity(), 10.0, 0, 10).is_err());
    }
}
