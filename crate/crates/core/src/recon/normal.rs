use crate::error::{Error, Result};
use crate::geom::{angle_between, rodrigues_rotate, MediumIndex, Vec3, PARALLEL_EPS};

/// Incidence angle `theta1` in the denser medium `lambda1` given the angle
/// `delta_theta` between the two incoming paths, from
/// `lambda1 sin(theta1) = lambda2 sin(theta1 + delta_theta)`:
///
/// `theta1 = atan(lambda2 sin(dt) / (lambda1 - lambda2 cos(dt)))`.
pub fn recover_incident_angle(delta_theta: f64, lambda1: MediumIndex, lambda2: MediumIndex) -> Result<f64> {
    let (l1, l2) = (lambda1.value(), lambda2.value());
    if l1 <= l2 {
        return Err(Error::UnsupportedMedia(format!(
            "the first medium must be denser than the second ({l1} <= {l2})"
        )));
    }
    if !(delta_theta > 0.0) {
        return Err(Error::Degenerate(format!("path angle must be positive, got {delta_theta}")));
    }
    if delta_theta >= std::f64::consts::FRAC_PI_2 {
        return Err(Error::Degenerate(format!("path angle must be below 90 degrees, got {delta_theta}")));
    }
    Ok((l2 * delta_theta.sin()).atan2(l1 - l2 * delta_theta.cos()))
}

/// Outward surface normal at an entry point from the directions of light
/// arriving through two media.
///
/// `u` travels through the denser medium `lambda1`, `v` through `lambda2`;
/// both point along the propagation of light, toward the surface. Rotating `u`
/// by the incidence angle about `v x u` gives the inward normal (the
/// transmitted side); the outward normal is its opposite.
pub fn recover_normal(u: Vec3, v: Vec3, lambda1: MediumIndex, lambda2: MediumIndex) -> Result<Vec3> {
    let axis = v.cross(&u);
    if axis.norm() < 1e-300 || u.dot(&v).abs() > 1.0 - PARALLEL_EPS {
        return Err(Error::Degenerate("paths are parallel".into()));
    }
    let theta1 = recover_incident_angle(angle_between(u, v), lambda1, lambda2)?;
    let inward = rodrigues_rotate(u, axis.normalize(), theta1)?;
    Ok(-inward.normalize())
}

/// Mismatch of the tangential components `lambda1 u_t` and `lambda2 v_t` about
/// `normal`. Both paths refract into the same transmitted direction exactly
/// when this vanishes, whatever the index on the far side.
pub fn snell_residual(u: Vec3, v: Vec3, normal: Vec3, lambda1: f64, lambda2: f64) -> f64 {
    let tangential = |d: Vec3| d - normal * d.dot(&normal);
    (tangential(u) * lambda1 - tangential(v) * lambda2).norm()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::{refract, Refraction};
    use proptest::prelude::*;

    fn idx(v: f64) -> MediumIndex {
        MediumIndex::new(v).unwrap()
    }

    #[test]
    fn five_degrees_water_air() {
        let t = recover_incident_angle(5f64.to_radians(), idx(1.33), idx(1.0)).unwrap();
        assert!((t.to_degrees() - 14.63).abs() < 0.01, "{}", t.to_degrees());
        assert!((1.33 * t.sin() - (t + 5f64.to_radians()).sin()).abs() < 1e-10);
    }

    #[test]
    fn ten_degrees_glass_air_residual() {
        let dt = 10f64.to_radians();
        let t = recover_incident_angle(dt, idx(1.5), idx(1.0)).unwrap();
        assert!((1.5 * t.sin() - (t + dt).sin()).abs() < 1e-10);
    }

    #[test]
    fn small_angle_limit() {
        let t = recover_incident_angle(1e-9, idx(1.5), idx(1.0)).unwrap();
        assert!(t > 0.0 && t < 1e-8);
    }

    #[test]
    fn rejects_bad_media_and_angles() {
        assert!(matches!(recover_incident_angle(0.1, idx(1.0), idx(1.33)), Err(Error::UnsupportedMedia(_))));
        assert!(matches!(recover_incident_angle(0.1, idx(1.2), idx(1.2)), Err(Error::UnsupportedMedia(_))));
        assert!(matches!(recover_incident_angle(0.0, idx(1.5), idx(1.0)), Err(Error::Degenerate(_))));
        let u = Vec3::new(0.0, 0.0, -1.0);
        assert!(matches!(recover_normal(u, u, idx(1.33), idx(1.0)), Err(Error::Degenerate(_))));
    }

    /// Builds the two incoming directions that refract into `t` at a surface
    /// with outward normal `n`, by running the refraction backwards.
    fn incoming_pair(n: Vec3, t: Vec3, l0: f64, l1: f64, l2: f64) -> Option<(Vec3, Vec3)> {
        // reverse transmitted ray leaves the object against its travel direction
        let back = |l: f64| match refract(-t, -n, idx(l0), idx(l)).ok()? {
            Refraction::Transmitted(d) => Some(-d),
            Refraction::TotalInternalReflection => None,
        };
        Some((back(l1)?, back(l2)?))
    }

    #[test]
    fn known_geometry_sign_convention() {
        // light in the xz-plane hitting a surface whose outward normal is +z
        let n = Vec3::z();
        let t = Vec3::new(0.3, 0.0, -1.0).normalize();
        let (u, v) = incoming_pair(n, t, 1.5, 1.33, 1.0).unwrap();
        assert!(u.z < 0.0 && v.z < 0.0);
        let got = recover_normal(u, v, idx(1.33), idx(1.0)).unwrap();
        assert!((got - n).norm() < 1e-12, "{got:?}");
    }

    proptest! {
        #[test]
        fn recovers_random_normals(
            nx in -0.6f64..0.6, ny in -0.6f64..0.6,
            tx in -0.5f64..0.5, ty in -0.5f64..0.5,
            l0 in 1.4f64..1.8, l1 in 1.2f64..1.4,
        ) {
            let n = Vec3::new(nx, ny, 1.0).normalize();
            let t = Vec3::new(tx, ty, -1.0).normalize();
            prop_assume!(t.dot(&n) < -0.2);
            let Some((u, v)) = incoming_pair(n, t, l0, l1, 1.0) else { return Ok(()) };
            prop_assume!(u.angle(&v) > 1e-4);
            let got = recover_normal(u, v, idx(l1), idx(1.0)).unwrap();
            prop_assert!((got.norm() - 1.0).abs() < 1e-12);
            prop_assert!(got.angle(&n) < 1e-7, "angle {}", got.angle(&n));
            prop_assert!(snell_residual(u, v, got, l1, 1.0) < 1e-9);
        }
    }
}
