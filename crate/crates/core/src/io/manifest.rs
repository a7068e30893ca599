//! The TOML manifest written next to a simulated acquisition.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::MediumIndex;
use crate::scene::{PatternPlane, PinholeCamera, StripeAxis, View};

pub const MANIFEST_VERSION: u32 = 1;

/// What reconstruction needs to know about the rig. Object geometry is
/// deliberately absent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Calibration {
    pub camera: PinholeCamera,
    pub patterns: [PatternPlane; 2],
    pub ambient_index: f64,
    pub liquid_index: Option<f64>,
    pub object_index: Option<f64>,
    /// Suggested gap gate; absent means unbounded.
    pub max_gap: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MapEntry {
    pub view: View,
    pub pose: usize,
    /// Relative to the manifest's directory.
    pub file: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StackEntry {
    pub view: View,
    pub pose: usize,
    pub axis: StripeAxis,
    /// Directory holding the stack's own manifest, relative to this one.
    pub dir: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AcquisitionManifest {
    pub version: u32,
    /// Free-form scene label.
    pub scene: String,
    pub thin: bool,
    pub calibration: Option<Calibration>,
    #[serde(default)]
    pub maps: Vec<MapEntry>,
    #[serde(default)]
    pub stacks: Vec<StackEntry>,
}

impl AcquisitionManifest {
    pub fn from_toml(text: &str) -> Result<Self> {
        let m: Self = toml::from_str(text).map_err(|e| Error::Config(format!("manifest: {e}")))?;
        if m.version != MANIFEST_VERSION {
            return Err(Error::Config(format!("manifest version {} is not {MANIFEST_VERSION}", m.version)));
        }
        Ok(m)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("manifest serializes")
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_toml())?;
        Ok(())
    }

    pub fn calibration(&self) -> Result<&Calibration> {
        self.calibration.as_ref().ok_or_else(|| Error::Config("manifest has no calibration".into()))
    }

    /// File of the map for `view` at `pose`.
    pub fn map_file(&self, view: View, pose: usize) -> Result<&str> {
        self.maps
            .iter()
            .find(|m| m.view == view && m.pose == pose)
            .map(|m| m.file.as_str())
            .ok_or_else(|| Error::Config(format!("manifest lists no {} map for pose {pose}", view.name())))
    }

    /// The two views of the acquisition in the order reconstruction pairs them.
    pub fn views(&self) -> [View; 2] {
        if self.thin {
            [View::Ambient, View::Direct]
        } else {
            [View::Liquid, View::Ambient]
        }
    }
}

impl Calibration {
    fn index(value: Option<f64>, what: &str) -> Result<MediumIndex> {
        let v = value.ok_or_else(|| Error::Config(format!("calibration has no {what} index")))?;
        MediumIndex::new(v)
    }

    pub fn ambient(&self) -> Result<MediumIndex> {
        MediumIndex::new(self.ambient_index)
    }

    pub fn liquid(&self) -> Result<MediumIndex> {
        Self::index(self.liquid_index, "liquid")
    }

    pub fn object(&self) -> Result<MediumIndex> {
        Self::index(self.object_index, "object")
    }
}
