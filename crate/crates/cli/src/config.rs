//! Run configuration file. Keys mirror the command-line flags (with `_` for
//! `-`); a flag given on the command line wins over the file.
//!
//! ```toml
//! scene = "thin_cone(0.5)"
//! res = 256
//! noise = 0.1
//! seed = 7
//! out = "runs/cone"
//! ```

use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::Context;
use lightpath::scene::config::SceneConfig;
use lightpath::scene::{AcquisitionScene, PaperScene, SceneOptions};
use lightpath::Error;
use serde::Deserialize;

use crate::args::SceneArgs;

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub scene: Option<String>,
    pub scene_file: Option<PathBuf>,
    pub param: Option<f64>,
    pub res: Option<u32>,
    pub pattern_z0: Option<f64>,
    pub pattern_z1: Option<f64>,
    pub liquid_index: Option<f64>,
    pub object_index: Option<f64>,
    pub thin: Option<bool>,
    pub unknown_media: Option<bool>,
    pub noise: Option<f64>,
    pub seed: Option<u64>,
    pub stacks: Option<bool>,
    pub stripe_width: Option<f64>,
    pub min_angle: Option<f64>,
    pub max_gap: Option<f64>,
    pub threads: Option<usize>,
    pub input: Option<PathBuf>,
    pub manifest: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub experiment: Option<String>,
    pub trials: Option<usize>,
    pub sigmas: Option<Vec<f64>>,
    pub values: Option<Vec<f64>>,
    pub reference: Option<String>,
    pub threshold: Option<f64>,
    pub iterations: Option<usize>,
}

impl RunConfig {
    /// Reads and validates a configuration. Relative paths in the file are
    /// resolved against the file's directory and must exist.
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let mut cfg: RunConfig = toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        for p in [&mut cfg.scene_file, &mut cfg.input, &mut cfg.manifest].into_iter().flatten() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
            if !p.exists() {
                return Err(Error::Config(format!("{} does not exist", p.display())).into());
            }
        }
        if let Some(out) = cfg.out.as_mut().filter(|o| o.is_relative()) {
            *out = base.join(&*out);
        }
        Ok(cfg)
    }
}

pub fn out_dir(flag: &Option<PathBuf>, cfg: &RunConfig) -> anyhow::Result<PathBuf> {
    let out = flag.clone().or_else(|| cfg.out.clone()).unwrap_or_else(|| PathBuf::from("."));
    std::fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
    Ok(out)
}

/// Scene description from the flags, falling back to the configuration.
pub fn scene_config(a: &SceneArgs, cfg: &RunConfig) -> anyhow::Result<SceneConfig> {
    let options = SceneOptions {
        resolution: a.res.or(cfg.res),
        pattern_z: match (a.pattern_z0.or(cfg.pattern_z0), a.pattern_z1.or(cfg.pattern_z1)) {
            (None, None) => None,
            (Some(z0), Some(z1)) => Some([z0, z1]),
            _ => return Err(Error::Config("--pattern-z0 and --pattern-z1 go together".into()).into()),
        },
        liquid_index: a.liquid_index.or(cfg.liquid_index),
        object_index: a.object_index.or(cfg.object_index),
        ..Default::default()
    };
    let name = a.scene.clone().or_else(|| cfg.scene.clone());
    let file = a.scene_file.clone().or_else(|| cfg.scene_file.clone());
    match (name, file) {
        (Some(_), Some(_)) => Err(Error::Config("give either a scene name or a scene file, not both".into()).into()),
        (None, None) => Err(Error::Config("no scene given (--scene or --scene-file)".into()).into()),
        (Some(name), None) => {
            let mut scene = PaperScene::from_str(&name)?;
            if let Some(p) = a.param.or(cfg.param) {
                scene = PaperScene::parse(scene.name(), Some(p))?;
            }
            // built-in scenes default to full resolution
            let options = SceneOptions { resolution: options.resolution.or(Some(256)), ..options };
            Ok(SceneConfig::paper(scene, options))
        }
        (None, Some(path)) => {
            let text = std::fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
            let mut sc = SceneConfig::from_toml(&text)?;
            if let Some(p) = sc.paper.as_mut() {
                merge_options(&mut p.options, &options);
                if let Some(v) = a.param.or(cfg.param) {
                    p.param = Some(v);
                }
            } else if options != SceneOptions::default() {
                return Err(Error::Config("scene overrides only apply to built-in scenes".into()).into());
            }
            Ok(sc)
        }
    }
}

fn merge_options(base: &mut SceneOptions, over: &SceneOptions) {
    base.resolution = over.resolution.or(base.resolution);
    base.pattern_z = over.pattern_z.or(base.pattern_z);
    base.liquid_index = over.liquid_index.or(base.liquid_index);
    base.object_index = over.object_index.or(base.object_index);
}

pub fn build_scene(a: &SceneArgs, cfg: &RunConfig) -> anyhow::Result<(SceneConfig, AcquisitionScene)> {
    let sc = scene_config(a, cfg)?;
    let scene = sc.build()?;
    Ok((sc, scene))
}
