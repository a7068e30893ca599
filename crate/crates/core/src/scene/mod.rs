//! Forward model of the acquisition rig: refractive solids, an optional
//! liquid bath, a reference pattern at two poses and a pinhole camera.

mod camera;
pub mod config;
mod paper;
mod pattern;
mod render;
pub mod shape;
mod stripes;
mod trace;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{MediumIndex, Vec3};

pub use camera::PinholeCamera;
pub use paper::{build_paper_scene, PaperScene, SceneOptions, DEFAULT_HEMISPHERE_TILT};
pub use pattern::{PatternHit, PatternPlane, PATTERN_EXTENT, PATTERN_TEXELS_PER_UNIT};
pub use render::{add_correspondence_noise, render_correspondence_map, CorrespondenceMap, FepTruth, Render, RenderStats};
pub use shape::{Aabb, ImplicitSolid, Shape, SurfaceHit};
pub use stripes::{stripe_profile, synthesize_stripe_stack, StripeAxis, StripeStack, DEFAULT_PSF_SIGMA};
pub use trace::{
    trace_camera_ray, trace_ray, EscapeReason, EventKind, LightPathTrace, PathEvent, Surface, MAX_BOUNCES,
};

/// Which of the four acquisitions is simulated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum View {
    /// Medium A: the object partially immersed in the liquid.
    Liquid,
    /// Medium B: the object in the ambient medium only.
    Ambient,
    /// The pattern seen without the object (thin-object protocol).
    Direct,
}

impl View {
    pub fn name(self) -> &'static str {
        match self {
            View::Liquid => "liquid",
            View::Ambient => "ambient",
            View::Direct => "direct",
        }
    }
}

/// Liquid filling the half-space `normal . p > level`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Liquid {
    pub index: MediumIndex,
    pub level: f64,
    #[serde(default = "up")]
    pub normal: Vec3,
}

fn up() -> Vec3 {
    Vec3::z()
}

impl Liquid {
    pub fn new(index: MediumIndex, level: f64) -> Self {
        Self { index, level, normal: Vec3::z() }
    }

    pub fn submerged(&self, p: Vec3) -> bool {
        self.normal.dot(&p) > self.level
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AcquisitionScene {
    pub camera: PinholeCamera,
    pub solids: Vec<ImplicitSolid>,
    pub ambient: MediumIndex,
    pub liquid: Option<Liquid>,
    pub patterns: [PatternPlane; 2],
}

impl AcquisitionScene {
    pub fn new(
        camera: PinholeCamera,
        solids: Vec<ImplicitSolid>,
        ambient: MediumIndex,
        liquid: Option<Liquid>,
        patterns: [PatternPlane; 2],
    ) -> Result<Self> {
        let mut scene = Self { camera, solids, ambient, liquid, patterns };
        scene.solids = std::mem::take(&mut scene.solids).into_iter().map(|s| s.refresh()).collect::<Result<_>>()?;
        scene.validate()?;
        Ok(scene)
    }

    /// Checks that the camera sits outside every solid and that both pattern
    /// planes lie behind every solid as seen from the camera.
    pub fn validate(&self) -> Result<()> {
        self.camera.validate()?;
        for p in &self.patterns {
            p.validate()?;
        }
        if let Some(l) = &self.liquid {
            if (l.normal.norm() - 1.0).abs() > 1e-9 {
                return Err(Error::Config("liquid surface normal must be unit length".into()));
            }
        }
        for (k, s) in self.solids.iter().enumerate() {
            if s.contains(self.camera.position) {
                return Err(Error::Config(format!("camera is inside solid {k}")));
            }
            let b = s.bounds();
            if !b.is_finite() {
                return Err(Error::Config(format!("solid {k} is unbounded")));
            }
            for (pi, p) in self.patterns.iter().enumerate() {
                let cam_side = p.signed_distance(self.camera.position).signum();
                // bounding boxes may touch the plane (e.g. a solid cut flush with it)
                for c in 0..8 {
                    let corner = Vec3::new(
                        if c & 1 == 0 { b.min.x } else { b.max.x },
                        if c & 2 == 0 { b.min.y } else { b.max.y },
                        if c & 4 == 0 { b.min.z } else { b.max.z },
                    );
                    if p.signed_distance(corner) * cam_side < -1e-9 {
                        return Err(Error::Config(format!("pattern {pi} is not behind solid {k}")));
                    }
                }
            }
        }
        Ok(())
    }

    /// Union of the solids' bounding boxes.
    pub fn object_bounds(&self) -> Aabb {
        self.solids.iter().fold(Aabb::empty(), |acc, s| acc.union(&s.bounds()))
    }

    /// Refractive index at `p` for the given view.
    pub fn medium_at(&self, p: Vec3, view: View) -> MediumIndex {
        if view != View::Direct {
            if let Some(s) = self.solids.iter().find(|s| s.contains(p)) {
                return s.index;
            }
        }
        match (&self.liquid, view) {
            (Some(l), View::Liquid) if l.submerged(p) => l.index,
            _ => self.ambient,
        }
    }

    /// Copy of the scene with the liquid index replaced.
    pub fn with_liquid_index(&self, index: MediumIndex) -> Self {
        let mut s = self.clone();
        if let Some(l) = &mut s.liquid {
            l.index = index;
        }
        s
    }
}
