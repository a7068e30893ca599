//! TOML scene descriptions.
//!
//! A file names either one of the built-in scenes:
//!
//! ```toml
//! [paper]
//! name = "thin_cone"
//! param = 0.5            # h, s, tilt, thickness or d depending on the scene
//! [paper.options]
//! resolution = 256
//! pattern_z = [20.0, 30.0]
//! ```
//!
//! or a custom arrangement of CSG solids:
//!
//! ```toml
//! [custom]
//! ambient_index = 1.0
//! camera = { position = [0.0, 0.0, -60.0], fov_deg = 20.0, resolution = [256, 256] }
//! liquid = { index = 1.33, level = 0.0 }
//! patterns = [{ center = [0.0, 0.0, 10.0] }, { center = [0.0, 0.0, 25.0] }]
//!
//! [[custom.solids]]
//! index = 1.5
//! shape = { kind = "sphere", center = [0.0, 0.0, 2.0], radius = 5.0 }
//! ```
//!
//! Camera and pattern orientations are optional XYZ Euler angles in degrees
//! applied to the default pose (looking along +z, fronto-parallel).

use nalgebra::{Rotation3, Vector2};
use serde::{Deserialize, Serialize};

use super::{build_paper_scene, AcquisitionScene, ImplicitSolid, Liquid, PaperScene, PatternPlane, PinholeCamera, SceneOptions};
use crate::error::{Error, Result};
use crate::geom::{MediumIndex, Vec3};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneConfig {
    pub paper: Option<PaperSceneConfig>,
    pub custom: Option<CustomScene>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PaperSceneConfig {
    pub name: String,
    pub param: Option<f64>,
    #[serde(default)]
    pub options: SceneOptions,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CameraConfig {
    pub position: [f64; 3],
    pub fov_deg: f64,
    pub resolution: [u32; 2],
    #[serde(default)]
    pub euler_deg: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PatternConfig {
    pub center: [f64; 3],
    #[serde(default)]
    pub euler_deg: [f64; 3],
    #[serde(default = "default_extent")]
    pub extent: [f64; 2],
}

fn default_extent() -> [f64; 2] {
    [super::PATTERN_EXTENT, super::PATTERN_EXTENT]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CustomScene {
    #[serde(default = "one")]
    pub ambient_index: f64,
    pub camera: CameraConfig,
    pub liquid: Option<Liquid>,
    pub patterns: [PatternConfig; 2],
    pub solids: Vec<ImplicitSolid>,
}

fn one() -> f64 {
    1.0
}

fn euler(deg: [f64; 3]) -> Rotation3<f64> {
    Rotation3::from_euler_angles(deg[0].to_radians(), deg[1].to_radians(), deg[2].to_radians())
}

impl SceneConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: SceneConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        if cfg.paper.is_some() == cfg.custom.is_some() {
            return Err(Error::Config("scene config needs exactly one of [paper] or [custom]".into()));
        }
        Ok(cfg)
    }

    pub fn paper(scene: PaperScene, options: SceneOptions) -> Self {
        Self {
            paper: Some(PaperSceneConfig { name: scene.name().into(), param: scene.param(), options }),
            custom: None,
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scene config serializes")
    }

    /// The built-in scene this config names, if any.
    pub fn paper_scene(&self) -> Result<Option<PaperScene>> {
        self.paper.as_ref().map(|p| PaperScene::parse(&p.name, p.param)).transpose()
    }

    pub fn build(&self) -> Result<AcquisitionScene> {
        match (&self.paper, &self.custom) {
            (Some(p), None) => build_paper_scene(PaperScene::parse(&p.name, p.param)?, &p.options),
            (None, Some(c)) => c.build(),
            _ => Err(Error::Config("scene config needs exactly one of [paper] or [custom]".into())),
        }
    }
}

impl CustomScene {
    pub fn build(&self) -> Result<AcquisitionScene> {
        let c = &self.camera;
        let camera = PinholeCamera::with_fov(
            Vec3::from(c.position),
            euler(c.euler_deg),
            c.fov_deg.to_radians(),
            c.resolution[0],
            c.resolution[1],
        )?;
        let pattern = |p: &PatternConfig| PatternPlane::new(euler(p.euler_deg), Vec3::from(p.center), Vector2::from(p.extent));
        let patterns = [pattern(&self.patterns[0])?, pattern(&self.patterns[1])?];
        if let Some(l) = &self.liquid {
            if (l.normal.norm() - 1.0).abs() > 1e-9 {
                return Err(Error::Config("liquid normal must be unit length".into()));
            }
        }
        AcquisitionScene::new(camera, self.solids.clone(), MediumIndex::new(self.ambient_index)?, self.liquid, patterns)
    }
}
