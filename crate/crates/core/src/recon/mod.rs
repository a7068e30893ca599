//! Surface recovery by triangulating altered incident light paths.
//!
//! For every pixel, the path before contact (PBC) is the line through the two
//! pattern points seen at the two pattern poses. Immersion changes that line
//! but not the path after contact, so the PBCs recorded in the liquid and in
//! the ambient medium meet at the first entry point (FEP). With known indices,
//! the angle between them fixes the surface normal there.
//!
//! Orientation convention: PBC directions are flipped where needed so they
//! point toward the camera, i.e. along the propagation of light.

mod normal;

use bitflags::bitflags;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geom::{angle_between, closest_points, MediumIndex, Ray3, Vec3};
use crate::scene::{AcquisitionScene, CorrespondenceMap, PatternPlane};

pub use normal::{recover_incident_angle, recover_normal, snell_residual};

/// Minimum separation of the two pattern points of a PBC (pattern units).
pub const MIN_SEPARATION: f64 = 1e-6;
pub const DEFAULT_MIN_ANGLE_DEG: f64 = 1.0;
/// Default gap threshold as a fraction of the object's bounding-box diagonal.
pub const DEFAULT_GAP_FRACTION: f64 = 0.01;

bitflags! {
    #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
    pub struct Quality: u8 {
        const LOW_ANGLE = 1;
        const LARGE_GAP = 1 << 1;
        const PARALLEL = 1 << 2;
        const OUT_OF_RANGE = 1 << 3;
        /// Thin-object mode: the visual ray and PBC are parallel, so the path
        /// was not bent.
        const NO_REFRACTION = 1 << 4;
    }
}

impl Quality {
    pub fn is_ok(self) -> bool {
        self.is_empty()
    }
}

/// Pattern points seen by one pixel. `m` were recorded with the liquid (or,
/// for thin objects, through the object), `n` without it (or directly).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CorrespondenceRecord {
    pub pixel: (u32, u32),
    pub m: [Option<Vec3>; 2],
    pub n: [Option<Vec3>; 2],
}

impl CorrespondenceRecord {
    pub fn is_complete(&self) -> bool {
        self.m.iter().chain(self.n.iter()).all(Option::is_some)
    }

    fn points(&self) -> Option<[Vec3; 4]> {
        Some([self.m[0]?, self.m[1]?, self.n[0]?, self.n[1]?])
    }
}

/// Lifts per-pose pattern coordinates to 3D points on the calibrated planes.
///
/// `m` and `n` hold the maps for poses 0 and 1 of each acquisition. Pixels
/// valid in none of the four maps produce no record.
pub fn records_from_maps(
    calib: &[PatternPlane; 2],
    m: [&CorrespondenceMap; 2],
    n: [&CorrespondenceMap; 2],
) -> Result<Vec<CorrespondenceRecord>> {
    let first = m[0];
    if ![m[1], n[0], n[1]].iter().all(|x| x.same_shape(first)) {
        return Err(Error::Config("correspondence maps differ in size".into()));
    }
    let lift = |map: &CorrespondenceMap, pose: usize, k: usize| map.get(k).map(|uv| calib[pose].point(uv));
    Ok((0..first.len())
        .filter_map(|k| {
            let r = CorrespondenceRecord {
                pixel: first.pixel(k),
                m: [lift(m[0], 0, k), lift(m[1], 1, k)],
                n: [lift(n[0], 0, k), lift(n[1], 1, k)],
            };
            (r.m.iter().chain(r.n.iter()).any(Option::is_some)).then_some(r)
        })
        .collect())
}

/// Line through two pattern points, directed from `p0` to `p1`.
pub fn build_pbc(p0: Vec3, p1: Vec3) -> Result<Ray3> {
    let d = p1 - p0;
    if !(d.norm() > MIN_SEPARATION) {
        return Err(Error::Degenerate(format!("pattern points {p0:?} and {p1:?} coincide")));
    }
    Ray3::new(p0, d)
}

fn toward(ray: Ray3, target: Vec3) -> Ray3 {
    if ray.dir().dot(&(target - ray.origin())) < 0.0 {
        ray.reversed()
    } else {
        ray
    }
}

/// Acceptance thresholds for triangulated points.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Filters {
    /// Radians.
    pub min_angle: f64,
    pub max_gap: f64,
    pub camera: Vec3,
    /// Unit viewing direction; depth is measured along it from the camera.
    pub view_dir: Vec3,
    /// Largest admissible depth (the nearest pattern plane).
    pub max_depth: f64,
}

impl Filters {
    /// Defaults for a scene: a one-degree angle gate, a gap gate of 1% of the
    /// object's bounding-box diagonal, and depths between the camera and the
    /// nearer pattern plane.
    pub fn for_scene(scene: &AcquisitionScene) -> Self {
        let diag = scene.object_bounds().diagonal();
        let max_gap = if diag.is_finite() && diag > 0.0 { DEFAULT_GAP_FRACTION * diag } else { f64::INFINITY };
        Self::new(scene.camera.position, scene.camera.forward(), &scene.patterns, DEFAULT_MIN_ANGLE_DEG.to_radians(), max_gap)
    }

    pub fn new(camera: Vec3, view_dir: Vec3, patterns: &[PatternPlane; 2], min_angle: f64, max_gap: f64) -> Self {
        let view_dir = view_dir.normalize();
        let max_depth = patterns.iter().map(|p| (p.center - camera).dot(&view_dir)).fold(f64::INFINITY, f64::min);
        Self { min_angle, max_gap, camera, view_dir, max_depth }
    }

    fn depth(&self, p: Vec3) -> f64 {
        (p - self.camera).dot(&self.view_dir)
    }
}

/// A reconstructed first entry point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReconPoint {
    pub pixel: (u32, u32),
    /// Midpoint of the closest points of the two lines; absent when parallel.
    pub fep: Option<Vec3>,
    /// Outward unit normal, when the media are known and the lines not parallel.
    pub normal: Option<Vec3>,
    /// Angle between the two paths (radians).
    pub delta_theta: f64,
    pub gap: f64,
    pub quality: Quality,
    /// The two paths, oriented toward the camera: `[denser medium, rarer medium]`.
    pub paths: [Ray3; 2],
}

impl ReconPoint {
    pub fn is_ok(&self) -> bool {
        self.quality.is_ok()
    }
}

/// Intersects two PBCs (in the least-squares sense) and grades the result.
pub fn triangulate_fep(pbc_liquid: &Ray3, pbc_air: &Ray3, filters: &Filters) -> ReconPoint {
    let tri = closest_points(pbc_liquid, pbc_air);
    let delta_theta = angle_between(pbc_liquid.dir(), pbc_air.dir());
    let mut quality = Quality::empty();
    if tri.is_parallel() {
        quality |= Quality::PARALLEL;
    }
    if delta_theta < filters.min_angle {
        quality |= Quality::LOW_ANGLE;
    }
    if tri.gap > filters.max_gap {
        quality |= Quality::LARGE_GAP;
    }
    let fep = tri.midpoint();
    match fep {
        Some(p) => {
            let depth = filters.depth(p);
            if !(depth > 0.0 && depth <= filters.max_depth) {
                quality |= Quality::OUT_OF_RANGE;
            }
        }
        None => quality |= Quality::OUT_OF_RANGE,
    }
    ReconPoint { pixel: (0, 0), fep, normal: None, delta_theta, gap: tri.gap, quality, paths: [*pbc_liquid, *pbc_air] }
}

fn finish(mut point: ReconPoint, media: Option<(MediumIndex, MediumIndex)>) -> ReconPoint {
    if let (Some((l1, l2)), false) = (media, point.quality.contains(Quality::PARALLEL)) {
        point.normal = recover_normal(point.paths[0].dir(), point.paths[1].dir(), l1, l2).ok();
    }
    point
}

/// Full pipeline over a record set: PBC pair, triangulation and, when
/// `media = Some((liquid, ambient))`, normal recovery. Every complete record
/// yields one point, flagged rather than dropped when it fails a filter.
/// Results are ordered as the records.
pub fn reconstruct_surface(
    records: &[CorrespondenceRecord],
    filters: &Filters,
    media: Option<(MediumIndex, MediumIndex)>,
) -> Result<Vec<ReconPoint>> {
    if records.is_empty() {
        return Err(Error::Config("no correspondence records".into()));
    }
    Ok(records
        .par_iter()
        .with_min_len(256)
        .filter_map(|r| {
            let [m0, m1, n0, n1] = r.points()?;
            let lm = toward(build_pbc(m0, m1).ok()?, filters.camera);
            let ln = toward(build_pbc(n0, n1).ok()?, filters.camera);
            let mut p = triangulate_fep(&lm, &ln, filters);
            p.pixel = r.pixel;
            Some(finish(p, media))
        })
        .collect())
}

/// Single-refraction variant for thin objects. In each record `m` holds the
/// pattern points seen through the object and `n` those seen directly; the
/// direct pair gives the visual ray and the other the PBC. The normal uses
/// `(lambda_object, lambda_ambient)` with the visual ray as the denser path.
/// Pixels whose two rays are parallel are flagged as unrefracted.
pub fn reconstruct_thin(
    records: &[CorrespondenceRecord],
    filters: &Filters,
    lambda_object: MediumIndex,
    lambda_ambient: MediumIndex,
) -> Result<Vec<ReconPoint>> {
    if records.is_empty() {
        return Err(Error::Config("no correspondence records".into()));
    }
    Ok(records
        .par_iter()
        .with_min_len(256)
        .filter_map(|r| {
            let [m0, m1, d0, d1] = r.points()?;
            let pbc = toward(build_pbc(m0, m1).ok()?, filters.camera);
            let visual = toward(build_pbc(d0, d1).ok()?, filters.camera);
            let mut p = triangulate_fep(&visual, &pbc, filters);
            p.pixel = r.pixel;
            if p.quality.contains(Quality::PARALLEL) {
                p.quality |= Quality::NO_REFRACTION;
            }
            Some(finish(p, Some((lambda_object, lambda_ambient))))
        })
        .collect())
}
