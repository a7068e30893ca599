use nalgebra::Vector2;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use super::trace::{trace_camera_ray, EscapeReason, LightPathTrace, PathEvent};
use super::{AcquisitionScene, PinholeCamera, View};
use crate::error::{Error, Result};
use crate::geom::Vec3;

/// Two first entry points closer than this are taken to be the same surface
/// point when checking that immersion left the path after contact unchanged.
const PAC_MATCH_TOLERANCE: f64 = 1e-6;

/// Dense per-pixel pattern coordinates, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrespondenceMap {
    pub width: u32,
    pub height: u32,
    pub valid: Vec<bool>,
    pub uv: Vec<Vector2<f64>>,
}

impl CorrespondenceMap {
    pub fn empty(width: u32, height: u32) -> Self {
        let n = width as usize * height as usize;
        Self { width, height, valid: vec![false; n], uv: vec![Vector2::zeros(); n] }
    }

    pub fn len(&self) -> usize {
        self.valid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.valid.is_empty()
    }

    pub fn index(&self, i: u32, j: u32) -> usize {
        j as usize * self.width as usize + i as usize
    }

    pub fn pixel(&self, k: usize) -> (u32, u32) {
        ((k % self.width as usize) as u32, (k / self.width as usize) as u32)
    }

    pub fn get(&self, k: usize) -> Option<Vector2<f64>> {
        self.valid[k].then_some(self.uv[k])
    }

    pub fn valid_count(&self) -> usize {
        self.valid.iter().filter(|v| **v).count()
    }

    pub fn same_shape(&self, other: &CorrespondenceMap) -> bool {
        self.width == other.width && self.height == other.height
    }
}

/// Ground truth first entry point of a pixel's path.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FepTruth {
    pub position: Vec3,
    /// Outward surface normal.
    pub normal: Vec3,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RenderStats {
    pub pixels: usize,
    pub valid: usize,
    pub missed: usize,
    pub outside_pattern: usize,
    pub bounce_cap: usize,
    /// Paths that touched the object and underwent total internal reflection.
    pub with_tir: usize,
    /// Medium A paths masked because they cross the liquid surface.
    pub liquid_crossing: usize,
    /// Medium A paths masked because immersion changed the path after contact.
    pub pac_changed: usize,
}

#[derive(Debug, Clone)]
pub struct Render {
    pub map: CorrespondenceMap,
    pub fep: Vec<Option<FepTruth>>,
    pub stats: RenderStats,
}

enum PixelOutcome {
    Valid(Vector2<f64>, Option<FepTruth>, bool),
    Missed,
    OutsidePattern,
    BounceCap,
    LiquidCrossing,
    PacChanged,
}

fn fep_truth(t: &LightPathTrace) -> Option<FepTruth> {
    t.fep().map(|e| FepTruth { position: e.position, normal: -e.normal })
}

fn render_pixel(scene: &AcquisitionScene, px: Vector2<f64>, pose: usize, view: View) -> PixelOutcome {
    let trace = trace_camera_ray(scene, px, pose, view);
    let Some(uv) = trace.pattern else {
        return match trace.escape_reason() {
            Some(EscapeReason::OutsidePattern) => PixelOutcome::OutsidePattern,
            Some(EscapeReason::BounceCap) => PixelOutcome::BounceCap,
            _ => PixelOutcome::Missed,
        };
    };
    if view == View::Liquid {
        if trace.crosses_liquid_surface() {
            return PixelOutcome::LiquidCrossing;
        }
        // The method assumes immersion only alters the path before contact.
        let dry = trace_camera_ray(scene, px, pose, View::Ambient);
        if !same_path_after_contact(&trace, &dry) {
            return PixelOutcome::PacChanged;
        }
        // an index-matched liquid hides the entry interface, so the truth
        // comes from the dry path
        return PixelOutcome::Valid(uv, fep_truth(&dry), trace.tir_count() > 0);
    }
    // the event at the first entry point stores the normal facing the
    // camera-side medium; the outward normal faces the pattern side
    PixelOutcome::Valid(uv, fep_truth(&trace), trace.tir_count() > 0)
}

/// Whether the wet path follows the dry path up to the dry first entry point:
/// identical events before it, then either the same refraction there or (for
/// an index-matched liquid) no event before reaching it.
fn same_path_after_contact(wet: &LightPathTrace, dry: &LightPathTrace) -> bool {
    let Some(b) = dry.fep_index() else {
        return wet.fep_index().is_none();
    };
    if wet.events.len() <= b {
        return false;
    }
    let close = |x: &PathEvent, y: &PathEvent| x.kind == y.kind && (x.position - y.position).norm() < PAC_MATCH_TOLERANCE;
    if !wet.events[..b].iter().zip(&dry.events[..b]).all(|(x, y)| close(x, y)) {
        return false;
    }
    let (next, fep) = (&wet.events[b], &dry.events[b]);
    if close(next, fep) {
        return true;
    }
    let start = if b == 0 { dry.origin } else { dry.events[b - 1].position };
    (next.position - start).norm() > (fep.position - start).norm() + PAC_MATCH_TOLERANCE
}

/// Renders the pattern coordinates seen by every pixel at pattern pose `pose`
/// (0 or 1) in the given view. Pixels whose path escapes, leaves the
/// displayed pattern area or exceeds the bounce cap are invalid. In the liquid
/// view, paths crossing the liquid surface or whose path after contact differs
/// from the dry acquisition are masked as well.
pub fn render_correspondence_map(scene: &AcquisitionScene, pose: usize, view: View) -> Result<Render> {
    if pose > 1 {
        return Err(Error::Config(format!("pattern pose must be 0 or 1, got {pose}")));
    }
    if view == View::Liquid && scene.liquid.is_none() {
        return Err(Error::Config("scene has no liquid".into()));
    }
    let cam = &scene.camera;
    let outcomes: Vec<PixelOutcome> = (0..cam.pixel_count())
        .into_par_iter()
        .with_min_len(256)
        .map(|k| {
            let (i, j) = ((k % cam.width as usize) as u32, (k / cam.width as usize) as u32);
            render_pixel(scene, PinholeCamera::pixel_center(i, j), pose, view)
        })
        .collect();

    let mut map = CorrespondenceMap::empty(cam.width, cam.height);
    let mut fep = vec![None; outcomes.len()];
    let mut stats = RenderStats { pixels: outcomes.len(), ..Default::default() };
    for (k, o) in outcomes.into_iter().enumerate() {
        match o {
            PixelOutcome::Valid(uv, truth, tir) => {
                map.valid[k] = true;
                map.uv[k] = uv;
                fep[k] = truth;
                stats.valid += 1;
                stats.with_tir += tir as usize;
            }
            PixelOutcome::Missed => stats.missed += 1,
            PixelOutcome::OutsidePattern => stats.outside_pattern += 1,
            PixelOutcome::BounceCap => stats.bounce_cap += 1,
            PixelOutcome::LiquidCrossing => stats.liquid_crossing += 1,
            PixelOutcome::PacChanged => stats.pac_changed += 1,
        }
    }
    Ok(Render { map, fep, stats })
}

/// Adds i.i.d. zero-mean Gaussian noise of standard deviation `sigma` to both
/// pattern coordinates of every valid pixel.
///
/// Draws are made for every pixel in row-major order (u then v) whether or not
/// it is valid, so maps of the same size share their noise realization under
/// the same seed.
pub fn add_correspondence_noise(map: &CorrespondenceMap, sigma: f64, seed: u64) -> Result<CorrespondenceMap> {
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(Error::Config(format!("noise sigma must be non-negative, got {sigma}")));
    }
    let mut out = map.clone();
    if sigma == 0.0 {
        return Ok(out);
    }
    let normal = Normal::new(0.0, sigma).expect("valid sigma");
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    for (valid, uv) in out.valid.iter().zip(out.uv.iter_mut()) {
        let du = normal.sample(&mut rng);
        let dv = normal.sample(&mut rng);
        if *valid {
            uv.x += du;
            uv.y += dv;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::MediumIndex;
    use crate::scene::{build_paper_scene, PaperScene, SceneOptions, DEFAULT_HEMISPHERE_TILT};

    fn small(p: PaperScene, res: u32) -> AcquisitionScene {
        build_paper_scene(p, &SceneOptions { resolution: Some(res), ..Default::default() }).unwrap()
    }

    #[test]
    fn direct_maps_related_by_plane_homography() {
        let scene = small(PaperScene::ThinCone { h: 0.0 }, 24);
        let m0 = render_correspondence_map(&scene, 0, View::Direct).unwrap().map;
        let m1 = render_correspondence_map(&scene, 1, View::Direct).unwrap().map;
        let c = scene.camera.position;
        let (z0, z1) = (scene.patterns[0].center.z, scene.patterns[1].center.z);
        // central projection from the camera center maps plane z0 onto plane z1
        let s = (z1 - c.z) / (z0 - c.z);
        assert_eq!(m0.valid_count(), m0.len());
        for k in 0..m0.len() {
            let p0 = Vec3::new(m0.uv[k].x, m0.uv[k].y, z0);
            let p1 = c + (p0 - c) * s;
            assert!((m1.uv[k] - Vector2::new(p1.x, p1.y)).norm() < 1e-9);
        }
    }

    #[test]
    fn background_pixels_match_direct_view() {
        let scene = small(PaperScene::ThinCone { h: 0.0 }, 32);
        let seen = render_correspondence_map(&scene, 1, View::Ambient).unwrap();
        let direct = render_correspondence_map(&scene, 1, View::Direct).unwrap().map;
        let mut background = 0;
        for k in 0..seen.map.len() {
            if seen.fep[k].is_none() && seen.map.valid[k] {
                assert!((seen.map.uv[k] - direct.uv[k]).norm() < 1e-12);
                background += 1;
            }
        }
        assert!(background > 0);
    }

    #[test]
    fn unit_liquid_index_leaves_maps_unchanged() {
        let scene = small(PaperScene::SemiEllipsoid, 48).with_liquid_index(MediumIndex::AIR);
        for pose in 0..2 {
            let a = render_correspondence_map(&scene, pose, View::Liquid).unwrap().map;
            let b = render_correspondence_map(&scene, pose, View::Ambient).unwrap().map;
            assert_eq!(a.valid, b.valid);
            for k in 0..a.len() {
                assert!((a.uv[k] - b.uv[k]).norm() < 1e-10);
            }
        }
    }

    #[test]
    fn index_matched_liquid_keeps_entry_point() {
        let scene = small(PaperScene::SemiEllipsoid, 32).with_liquid_index(MediumIndex::new(1.5).unwrap());
        let wet = render_correspondence_map(&scene, 0, View::Liquid).unwrap();
        let dry = render_correspondence_map(&scene, 0, View::Ambient).unwrap();
        assert!(wet.map.valid_count() > dry.map.valid_count() / 2, "{:?}", wet.stats);
        for k in 0..wet.fep.len() {
            if let (Some(a), true) = (wet.fep[k], wet.map.valid[k]) {
                assert_eq!(Some(a), dry.fep[k]);
            }
        }
    }

    #[test]
    fn liquid_matching_ambient_gives_identical_maps() {
        let scene = small(PaperScene::Hemisphere { tilt: DEFAULT_HEMISPHERE_TILT }, 32).with_liquid_index(MediumIndex::AIR);
        for pose in 0..2 {
            let wet = render_correspondence_map(&scene, pose, View::Liquid).unwrap();
            let dry = render_correspondence_map(&scene, pose, View::Ambient).unwrap();
            assert_eq!(wet.map.valid, dry.map.valid);
            assert_eq!(wet.map.uv, dry.map.uv);
        }
    }

    #[test]
    fn ground_truth_fep_on_surface() {
        let scene = small(PaperScene::SemiEllipsoid, 32);
        let r = render_correspondence_map(&scene, 0, View::Liquid).unwrap();
        let solid = &scene.solids[0];
        let mut n = 0;
        for f in r.fep.iter().flatten() {
            assert!(solid.value(f.position).abs() < 1e-9);
            assert!((f.normal - solid.normal(f.position)).norm() < 1e-9);
            n += 1;
        }
        assert!(n > 100);
    }

    #[test]
    fn rendering_is_deterministic() {
        let scene = small(PaperScene::ConcaveCone, 32);
        let a = render_correspondence_map(&scene, 1, View::Liquid).unwrap();
        let b = render_correspondence_map(&scene, 1, View::Liquid).unwrap();
        assert_eq!(a.map, b.map);
        assert_eq!(a.stats, b.stats);
    }

    #[test]
    fn noise_examples() {
        let mut map = CorrespondenceMap::empty(1000, 1000);
        map.valid.iter_mut().for_each(|v| *v = true);
        assert_eq!(add_correspondence_noise(&map, 0.0, 3).unwrap(), map);
        let a = add_correspondence_noise(&map, 0.5, 3).unwrap();
        let b = add_correspondence_noise(&map, 0.5, 3).unwrap();
        assert_eq!(a, b);
        let n = a.len() as f64;
        let mean = a.uv.iter().map(|p| p.x).sum::<f64>() / n;
        let var = a.uv.iter().map(|p| (p.x - mean).powi(2)).sum::<f64>() / (n - 1.0);
        assert!((var.sqrt() - 0.5).abs() < 0.005, "std {}", var.sqrt());
        let var_v = a.uv.iter().map(|p| p.y * p.y).sum::<f64>() / n;
        assert!((var_v.sqrt() - 0.5).abs() < 0.005);
        assert!(add_correspondence_noise(&map, -1.0, 3).is_err());
    }

    #[test]
    fn noise_skips_invalid_pixels() {
        let mut map = CorrespondenceMap::empty(4, 4);
        map.valid[5] = true;
        let noisy = add_correspondence_noise(&map, 1.0, 1).unwrap();
        for k in 0..16 {
            assert_eq!(noisy.uv[k] == map.uv[k], k != 5);
        }
    }
}
