//! The synthetic scenes of the evaluation, plus a few auxiliary test solids.

use std::fmt;
use std::str::FromStr;

use nalgebra::Rotation3;
use serde::{Deserialize, Serialize};

use super::{AcquisitionScene, ImplicitSolid, Liquid, PatternPlane, PinholeCamera, Shape};
use crate::error::{Error, Result};
use crate::geom::{MediumIndex, Vec3};

/// Default hemisphere rotation. It leaves the flat face nearly parallel to
/// the optical axis, so many camera rays reflect totally off it before
/// leaving through the dome toward the pattern.
pub const DEFAULT_HEMISPHERE_TILT: f64 = 100.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case", deny_unknown_fields)]
pub enum PaperScene {
    /// `(x/12.5)^2 + (y/12.5)^2 + (z/5)^2 <= 1, z >= 0`.
    SemiEllipsoid,
    /// Cylinder (r 5, h 10) minus a cone (h 4, r 10) opening upward.
    ConcaveCone,
    /// Cone (h 1, r 4) padded underneath by a cylinder of height `h`.
    ThinCone { h: f64 },
    /// Radius-10 sphere minus a radius-10 sphere offset by `s` along z.
    SphericalShell { s: f64 },
    /// Radius-10 glass hemisphere on `z >= 0`, rotated about x by `tilt` degrees.
    Hemisphere { tilt: f64 },
    /// Hexagonal frustum with planar facets.
    FacetSolid,
    /// Slab of the given thickness facing the camera.
    ParallelPlate { thickness: f64 },
    /// Spherical front surface with a planar, tilted back surface offset `d` from the front apex.
    PlanoCurved { d: f64 },
}

impl PaperScene {
    pub const NAMES: [&'static str; 8] = [
        "semi_ellipsoid",
        "concave_cone",
        "thin_cone",
        "spherical_shell",
        "hemisphere",
        "facet_solid",
        "parallel_plate",
        "plano_curved",
    ];

    /// Builds a scene from its name and optional scalar parameter (`h`, `s`,
    /// tilt, thickness or `d`); scenes without a parameter reject one.
    pub fn parse(name: &str, param: Option<f64>) -> Result<Self> {
        let no_param = |s: PaperScene| match param {
            Some(_) => Err(Error::Config(format!("scene {name} takes no parameter"))),
            None => Ok(s),
        };
        match name {
            "semi_ellipsoid" => no_param(PaperScene::SemiEllipsoid),
            "concave_cone" => no_param(PaperScene::ConcaveCone),
            "facet_solid" => no_param(PaperScene::FacetSolid),
            "thin_cone" => Ok(PaperScene::ThinCone { h: param.unwrap_or(0.0) }),
            "spherical_shell" => Ok(PaperScene::SphericalShell { s: param.unwrap_or(3.0) }),
            "hemisphere" => Ok(PaperScene::Hemisphere { tilt: param.unwrap_or(DEFAULT_HEMISPHERE_TILT) }),
            "parallel_plate" => Ok(PaperScene::ParallelPlate { thickness: param.unwrap_or(0.5) }),
            "plano_curved" => Ok(PaperScene::PlanoCurved { d: param.unwrap_or(0.5) }),
            _ => Err(Error::Config(format!("unknown scene '{name}' (expected one of {})", Self::NAMES.join(", ")))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            PaperScene::SemiEllipsoid => "semi_ellipsoid",
            PaperScene::ConcaveCone => "concave_cone",
            PaperScene::ThinCone { .. } => "thin_cone",
            PaperScene::SphericalShell { .. } => "spherical_shell",
            PaperScene::Hemisphere { .. } => "hemisphere",
            PaperScene::FacetSolid => "facet_solid",
            PaperScene::ParallelPlate { .. } => "parallel_plate",
            PaperScene::PlanoCurved { .. } => "plano_curved",
        }
    }

    pub fn param(&self) -> Option<f64> {
        match *self {
            PaperScene::ThinCone { h } => Some(h),
            PaperScene::SphericalShell { s } => Some(s),
            PaperScene::Hemisphere { tilt } => Some(tilt),
            PaperScene::ParallelPlate { thickness } => Some(thickness),
            PaperScene::PlanoCurved { d } => Some(d),
            _ => None,
        }
    }

    /// Scenes reconstructed with the single-refraction (no liquid) protocol.
    pub fn is_thin(&self) -> bool {
        matches!(
            self,
            PaperScene::ThinCone { .. }
                | PaperScene::SphericalShell { .. }
                | PaperScene::ParallelPlate { .. }
                | PaperScene::PlanoCurved { .. }
        )
    }

    /// The solid's shape in scene coordinates.
    pub fn shape(&self) -> Result<Shape> {
        Ok(match *self {
            PaperScene::SemiEllipsoid => Shape::intersection(vec![
                Shape::ellipsoid(Vec3::zeros(), Vec3::new(12.5, 12.5, 5.0)),
                Shape::half_space(-Vec3::z(), 0.0),
            ]),
            PaperScene::ConcaveCone => Shape::difference(
                Shape::cylinder(Vec3::zeros(), Vec3::z(), 5.0, 10.0),
                Shape::cone(Vec3::new(0.0, 0.0, 6.0), Vec3::z(), 4.0, 10.0),
            ),
            PaperScene::ThinCone { h } => {
                if !(h >= 0.0) {
                    return Err(Error::Config(format!("cone padding must be non-negative, got {h}")));
                }
                let cone = Shape::cone(Vec3::new(0.0, 0.0, h + 1.0), -Vec3::z(), 1.0, 4.0);
                if h > 0.0 {
                    Shape::union(vec![cone, Shape::cylinder(Vec3::zeros(), Vec3::z(), 4.0, h)])
                } else {
                    cone
                }
            }
            PaperScene::SphericalShell { s } => {
                if !(s > 0.0 && s < 20.0) {
                    return Err(Error::Config(format!("shell offset must be in (0, 20), got {s}")));
                }
                Shape::difference(Shape::sphere(Vec3::zeros(), 10.0), Shape::sphere(Vec3::new(0.0, 0.0, s), 10.0))
            }
            PaperScene::Hemisphere { tilt } => {
                let hemi = Shape::intersection(vec![Shape::sphere(Vec3::zeros(), 10.0), Shape::half_space(-Vec3::z(), 0.0)]);
                let r = Rotation3::from_axis_angle(&Vec3::x_axis(), tilt.to_radians());
                hemi.transformed(&r, Vec3::zeros())
            }
            PaperScene::FacetSolid => {
                let tilt = 25f64.to_radians();
                // the clipping cylinder only bounds the solid; it clears the facet corners at radius 9.24
                let mut children = vec![Shape::cylinder(Vec3::zeros(), Vec3::z(), 9.5, 2.5)];
                for k in 0..6 {
                    let phi = k as f64 * std::f64::consts::FRAC_PI_3;
                    let n = Vec3::new(phi.cos() * tilt.cos(), phi.sin() * tilt.cos(), tilt.sin());
                    // facet passes through the point at distance 8 from the axis on z = 0
                    let foot = Vec3::new(phi.cos() * 8.0, phi.sin() * 8.0, 0.0);
                    children.push(Shape::half_space(n, n.dot(&foot)));
                }
                Shape::intersection(children)
            }
            PaperScene::ParallelPlate { thickness } => {
                if !(thickness > 0.0) {
                    return Err(Error::Config(format!("plate thickness must be positive, got {thickness}")));
                }
                Shape::cuboid(Vec3::new(-8.0, -8.0, 0.0), Vec3::new(8.0, 8.0, thickness))
            }
            PaperScene::PlanoCurved { d } => {
                if !(d > 0.0 && d <= 4.0) {
                    return Err(Error::Config(format!("thickness offset must be in (0, 4], got {d}")));
                }
                // front apex at the origin facing the camera, back plane offset by d along its own normal;
                // the z <= 12 slab never cuts the lens and only bounds it
                let n = Vec3::new(20f64.to_radians().sin(), 0.0, 20f64.to_radians().cos());
                Shape::intersection(vec![
                    Shape::sphere(Vec3::new(0.0, 0.0, 20.0), 20.0),
                    Shape::half_space(n, d),
                    Shape::half_space(Vec3::z(), 12.0),
                ])
            }
        })
    }

    fn defaults(&self) -> Defaults {
        let thin = |half_width| Defaults {
            object_index: 1.7,
            liquid: None,
            patterns: [20.0, 30.0],
            camera_distance: 60.0,
            half_width,
        };
        match *self {
            PaperScene::SemiEllipsoid => Defaults {
                object_index: 1.5,
                liquid: Some(1.3),
                patterns: [10.0, 25.0],
                camera_distance: 60.0,
                half_width: 12.6,
            },
            PaperScene::ConcaveCone => Defaults {
                object_index: 1.7,
                liquid: Some(1.33),
                patterns: [10.0, 25.0],
                camera_distance: 40.0,
                half_width: 5.2,
            },
            PaperScene::ThinCone { .. } => thin(4.2),
            PaperScene::SphericalShell { .. } => thin(10.2),
            PaperScene::Hemisphere { .. } => Defaults {
                object_index: 1.5,
                liquid: Some(1.33),
                patterns: [15.0, 30.0],
                camera_distance: 60.0,
                half_width: 10.5,
            },
            PaperScene::FacetSolid => Defaults {
                object_index: 1.5,
                liquid: Some(1.33),
                patterns: [10.0, 25.0],
                camera_distance: 50.0,
                half_width: 8.5,
            },
            PaperScene::ParallelPlate { .. } => Defaults { object_index: 1.5, ..thin(6.0) },
            PaperScene::PlanoCurved { .. } => Defaults { object_index: 1.5, ..thin(1.5) },
        }
    }
}

impl fmt::Display for PaperScene {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.param() {
            Some(p) => write!(f, "{}({p})", self.name()),
            None => f.write_str(self.name()),
        }
    }
}

impl FromStr for PaperScene {
    type Err = Error;

    /// Accepts `name` or `name(param)`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        match s.split_once('(') {
            Some((name, rest)) => {
                let inner = rest
                    .strip_suffix(')')
                    .ok_or_else(|| Error::Config(format!("unbalanced parenthesis in scene '{s}'")))?;
                let inner = inner.split_once('=').map_or(inner, |(_, v)| v).trim();
                let value = inner.parse::<f64>().map_err(|e| Error::Config(format!("bad scene parameter '{inner}': {e}")))?;
                Self::parse(name.trim(), Some(value))
            }
            None => Self::parse(s, None),
        }
    }
}

struct Defaults {
    object_index: f64,
    liquid: Option<f64>,
    patterns: [f64; 2],
    camera_distance: f64,
    /// Half of the field of view's width at z = 0.
    half_width: f64,
}

/// Overrides applied on top of a scene's defaults.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SceneOptions {
    /// Image width and height in pixels (default 1024).
    pub resolution: Option<u32>,
    pub pattern_z: Option<[f64; 2]>,
    pub liquid_index: Option<f64>,
    pub object_index: Option<f64>,
    pub ambient_index: Option<f64>,
    /// Camera distance from the z = 0 plane (camera sits on the negative z axis).
    pub camera_distance: Option<f64>,
    /// Half-width of the field of view at z = 0.
    pub half_width: Option<f64>,
}

/// Instantiates one of the evaluation scenes.
///
/// The camera sits on the negative z axis looking along +z, the pattern planes
/// are fronto-parallel 32 x 32 unit planes on the positive side, and a liquid,
/// when present, fills `z > 0`.
pub fn build_paper_scene(scene: PaperScene, options: &SceneOptions) -> Result<AcquisitionScene> {
    let d = scene.defaults();
    let res = options.resolution.unwrap_or(1024);
    let object_index = MediumIndex::new(options.object_index.unwrap_or(d.object_index))?;
    let ambient = MediumIndex::new(options.ambient_index.unwrap_or(1.0))?;
    let liquid = match (d.liquid, options.liquid_index) {
        (Some(default), over) => Some(Liquid::new(MediumIndex::new(over.unwrap_or(default))?, 0.0)),
        (None, Some(_)) => return Err(Error::Config(format!("scene {} has no liquid", scene.name()))),
        (None, None) => None,
    };
    let [z0, z1] = options.pattern_z.unwrap_or(d.patterns);
    if !(z0 < z1) {
        return Err(Error::Config(format!("pattern poses must satisfy z0 < z1, got {z0} and {z1}")));
    }
    let distance = options.camera_distance.unwrap_or(d.camera_distance);
    let half_width = options.half_width.unwrap_or(d.half_width);
    if !(distance > 0.0 && half_width > 0.0) {
        return Err(Error::Config("camera distance and field of view must be positive".into()));
    }
    let fov = 2.0 * (half_width / distance).atan();
    let camera = PinholeCamera::looking_along_z(Vec3::new(0.0, 0.0, -distance), fov, res, res)?;
    let solid = ImplicitSolid::new(scene.shape()?, object_index)?;
    AcquisitionScene::new(camera, vec![solid], ambient, liquid, [PatternPlane::at_z(z0), PatternPlane::at_z(z1)])
}
