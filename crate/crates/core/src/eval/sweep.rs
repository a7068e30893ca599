//! Monte-Carlo noise sweeps over the synthetic scenes.
//!
//! Each grid cell renders its four noise-free correspondence maps once; every
//! trial then perturbs them with Gaussian noise and reconstructs. Noise seeds
//! depend only on the base seed, the trial and the map, so all cells and noise
//! levels of a sweep share one set of standard-normal draws (common random
//! numbers) and trends across the grid are not masked by sampling jitter.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rayon::prelude::*;
use serde::Serialize;

use super::metrics::{angle_deg, median, Reference};
use crate::error::{Error, Result};
use crate::recon::{records_from_maps, reconstruct_surface, reconstruct_thin, CorrespondenceRecord, Filters, ReconPoint};
use crate::scene::{
    add_correspondence_noise, build_paper_scene, render_correspondence_map, AcquisitionScene, CorrespondenceMap, FepTruth,
    PaperScene, SceneOptions, View,
};

/// Mixes words into a seed (SplitMix64 finalizer).
pub fn derive_seed(base: u64, words: &[u64]) -> u64 {
    let mix = |mut z: u64| {
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        z ^ (z >> 31)
    };
    words.iter().fold(mix(base.wrapping_add(0x9e37_79b9_7f4a_7c15)), |h, w| mix(h ^ w.wrapping_add(0x9e37_79b9_7f4a_7c15)))
}

/// A scene with its four noise-free correspondence maps and per-pixel truth.
#[derive(Debug, Clone)]
pub struct Acquisition {
    pub scene: AcquisitionScene,
    /// Thin-object protocol: maps through the object and direct views.
    pub thin: bool,
    /// `[m0, m1, n0, n1]`: poses 0 and 1 of the first view, then of the second.
    pub maps: [CorrespondenceMap; 4],
    /// Ground-truth first entry point of each pixel in the first view.
    pub truth: Vec<Option<FepTruth>>,
    /// Triangulation filters (the scene defaults unless changed).
    pub filters: Filters,
}

impl Acquisition {
    /// Liquid scenes use the liquid and ambient views; scenes without a liquid
    /// the through-object and direct views.
    pub fn simulate(scene: AcquisitionScene) -> Result<Self> {
        let thin = scene.liquid.is_none();
        let views = if thin { [View::Ambient, View::Direct] } else { [View::Liquid, View::Ambient] };
        let m0 = render_correspondence_map(&scene, 0, views[0])?;
        let m1 = render_correspondence_map(&scene, 1, views[0])?;
        let n0 = render_correspondence_map(&scene, 0, views[1])?;
        let n1 = render_correspondence_map(&scene, 1, views[1])?;
        let filters = Filters::for_scene(&scene);
        Ok(Self { scene, thin, truth: m0.fep, maps: [m0.map, m1.map, n0.map, n1.map], filters })
    }

    pub fn views(&self) -> [View; 2] {
        if self.thin {
            [View::Ambient, View::Direct]
        } else {
            [View::Liquid, View::Ambient]
        }
    }

    /// Maps with noise; map `k` uses the seed derived from `(seed, k)`.
    pub fn noisy_maps(&self, sigma: f64, seed: u64) -> Result<Vec<CorrespondenceMap>> {
        self.maps.iter().enumerate().map(|(k, m)| add_correspondence_noise(m, sigma, derive_seed(seed, &[k as u64]))).collect()
    }

    pub fn records(&self, sigma: f64, seed: u64) -> Result<Vec<CorrespondenceRecord>> {
        let m = self.noisy_maps(sigma, seed)?;
        records_from_maps(&self.scene.patterns, [&m[0], &m[1]], [&m[2], &m[3]])
    }

    /// Reconstruction with known media and the scene's default filters.
    pub fn reconstruct(&self, sigma: f64, seed: u64) -> Result<Vec<ReconPoint>> {
        let records = self.records(sigma, seed)?;
        let filters = &self.filters;
        if self.thin {
            reconstruct_thin(&records, filters, self.scene.solids[0].index, self.scene.ambient)
        } else {
            let liquid = self.scene.liquid.expect("liquid scene");
            reconstruct_surface(&records, filters, Some((liquid.index, self.scene.ambient)))
        }
    }

    /// Errors of the ok-quality points: distance of each entry point to the
    /// nearest solid surface, and angle (degrees) between each normal and the
    /// true normal at the pixel's own first entry point.
    pub fn errors(&self, points: &[ReconPoint]) -> Result<TrialErrors> {
        let mut out = TrialErrors::default();
        for p in points.iter().filter(|p| p.is_ok()) {
            let k = self.maps[0].index(p.pixel.0, p.pixel.1);
            let (Some(fep), Some(truth)) = (p.fep, self.truth[k]) else { continue };
            let mut d = f64::INFINITY;
            for s in &self.scene.solids {
                d = d.min(Reference::Surface(&s.shape).distance(fep)?);
            }
            out.position.push(d);
            if let Some(n) = p.normal {
                out.normal.push(angle_deg(n, truth.normal));
            }
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrialErrors {
    pub position: Vec<f64>,
    /// Degrees.
    pub normal: Vec<f64>,
}

pub fn rms(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    (values.iter().map(|v| v * v).sum::<f64>() / values.len() as f64).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Experiment {
    /// Semi-ellipsoid, noise x distance between the two pattern poses.
    Separation,
    /// Semi-ellipsoid, noise x liquid index.
    Medium,
    /// Thin cone, noise x cylinder padding height.
    Thickness,
    /// Spherical shell, noise x sphere-centre offset.
    Shell,
}

impl Experiment {
    pub const ALL: [Experiment; 4] = [Experiment::Separation, Experiment::Medium, Experiment::Thickness, Experiment::Shell];

    pub fn name(self) -> &'static str {
        match self {
            Experiment::Separation => "separation",
            Experiment::Medium => "medium",
            Experiment::Thickness => "thickness",
            Experiment::Shell => "shell",
        }
    }

    /// Default grid of the swept scene parameter.
    pub fn default_values(self) -> Vec<f64> {
        match self {
            Experiment::Separation => vec![5.0, 10.0, 15.0, 20.0],
            Experiment::Medium => vec![1.3, 1.5, 1.7],
            Experiment::Thickness => vec![0.0, 0.5, 1.0, 2.0],
            Experiment::Shell => vec![1.0, 2.0, 3.0, 4.0, 5.0],
        }
    }

    pub fn scene(self, value: f64, resolution: u32) -> Result<AcquisitionScene> {
        let base = SceneOptions { resolution: Some(resolution), ..Default::default() };
        match self {
            Experiment::Separation => {
                build_paper_scene(PaperScene::SemiEllipsoid, &SceneOptions { pattern_z: Some([10.0, 10.0 + value]), ..base })
            }
            Experiment::Medium => {
                build_paper_scene(PaperScene::SemiEllipsoid, &SceneOptions { liquid_index: Some(value), ..base })
            }
            Experiment::Thickness => build_paper_scene(PaperScene::ThinCone { h: value }, &base),
            Experiment::Shell => build_paper_scene(PaperScene::SphericalShell { s: value }, &base),
        }
    }
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Experiment {
    type Err = Error;
    /// Accepts the experiment names and the figure aliases `fig6`
    /// (separation), `fig6-medium`, `fig10` (thickness) and `fig11` (shell).
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "separation" | "fig6" => Ok(Experiment::Separation),
            "medium" | "fig6-medium" => Ok(Experiment::Medium),
            "thickness" | "fig10" => Ok(Experiment::Thickness),
            "shell" | "fig11" => Ok(Experiment::Shell),
            _ => Err(Error::Config(format!(
                "unknown experiment '{s}' (separation/fig6, medium/fig6-medium, thickness/fig10, shell/fig11)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepConfig {
    pub experiment: Experiment,
    pub sigmas: Vec<f64>,
    pub values: Vec<f64>,
    pub trials: usize,
    pub seed: u64,
    pub resolution: u32,
    /// Overrides the scene's default gap threshold.
    pub max_gap: Option<f64>,
}

impl SweepConfig {
    /// Noise levels 0.1 to 1.0, the experiment's default grid, 50 trials at 128 x 128.
    pub fn new(experiment: Experiment) -> Self {
        Self {
            experiment,
            sigmas: (1..=10).map(|k| k as f64 / 10.0).collect(),
            values: experiment.default_values(),
            trials: 50,
            seed: 0,
            resolution: 128,
            max_gap: None,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.trials == 0 || self.sigmas.is_empty() || self.values.is_empty() {
            return Err(Error::Config("sweep needs at least one trial, noise level and grid value".into()));
        }
        if let Some(s) = self.sigmas.iter().find(|s| !(**s >= 0.0 && s.is_finite())) {
            return Err(Error::Config(format!("noise level must be non-negative, got {s}")));
        }
        Ok(())
    }
}

/// One grid cell of a sweep. Exactly one of the scene-parameter columns is set.
/// `pos_*` are scene units and `nrm_*` degrees; `*_rms_median`/`*_rms_mean`
/// aggregate the per-trial RMS errors, `*_mean`/`*_median` pool the errors of
/// all trials.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub experiment: String,
    pub sigma: f64,
    pub separation: Option<f64>,
    pub medium_index: Option<f64>,
    pub thickness: Option<f64>,
    pub trials: usize,
    /// Mean number of evaluated points per trial.
    pub points: usize,
    pub pos_rms_median: f64,
    pub pos_rms_mean: f64,
    pub pos_mean: f64,
    pub pos_median: f64,
    pub nrm_rms_median: f64,
    pub nrm_rms_mean: f64,
    pub nrm_mean: f64,
    pub nrm_median: f64,
}

impl SweepRow {
    /// The swept scene parameter of this row.
    pub fn value(&self) -> f64 {
        self.separation.or(self.medium_index).or(self.thickness).unwrap_or(f64::NAN)
    }
}

fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        f64::NAN
    } else {
        v.iter().sum::<f64>() / v.len() as f64
    }
}

fn summarize(experiment: Experiment, sigma: f64, value: f64, trials: &[TrialErrors]) -> SweepRow {
    let pos_rms: Vec<f64> = trials.iter().map(|t| rms(&t.position)).filter(|v| v.is_finite()).collect();
    let nrm_rms: Vec<f64> = trials.iter().map(|t| rms(&t.normal)).filter(|v| v.is_finite()).collect();
    let pos: Vec<f64> = trials.iter().flat_map(|t| t.position.iter().copied()).collect();
    let nrm: Vec<f64> = trials.iter().flat_map(|t| t.normal.iter().copied()).collect();
    let (separation, medium_index, thickness) = match experiment {
        Experiment::Separation => (Some(value), None, None),
        Experiment::Medium => (None, Some(value), None),
        Experiment::Thickness | Experiment::Shell => (None, None, Some(value)),
    };
    SweepRow {
        experiment: experiment.name().to_string(),
        sigma,
        separation,
        medium_index,
        thickness,
        trials: trials.len(),
        points: pos.len() / trials.len().max(1),
        pos_rms_median: median(&pos_rms),
        pos_rms_mean: mean(&pos_rms),
        pos_mean: mean(&pos),
        pos_median: median(&pos),
        nrm_rms_median: median(&nrm_rms),
        nrm_rms_mean: mean(&nrm_rms),
        nrm_mean: mean(&nrm),
        nrm_median: median(&nrm),
    }
}

/// Runs the full grid. Rows are ordered by grid value, then noise level; the
/// output depends only on the configuration.
pub fn run_sweep(config: &SweepConfig) -> Result<Vec<SweepRow>> {
    config.validate()?;
    let mut rows = Vec::new();
    for &value in &config.values {
        let mut acq = Acquisition::simulate(config.experiment.scene(value, config.resolution)?)?;
        if let Some(g) = config.max_gap {
            acq.filters.max_gap = g;
        }
        for &sigma in &config.sigmas {
            let trials = (0..config.trials)
                .into_par_iter()
                .map(|t| {
                    let points = acq.reconstruct(sigma, derive_seed(config.seed, &[t as u64]))?;
                    acq.errors(&points)
                })
                .collect::<Result<Vec<_>>>()?;
            let row = summarize(config.experiment, sigma, value, &trials);
            log::info!(
                "event=sweep_cell experiment={} value={value} sigma={sigma} points={} pos_rms_median={:e} nrm_rms_median={:e}",
                config.experiment,
                row.points,
                row.pos_rms_median,
                row.nrm_rms_median
            );
            rows.push(row);
        }
    }
    Ok(rows)
}

pub fn write_sweep_csv<W: Write>(rows: &[SweepRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Plain-text plot data: one block per grid value (blank-line separated) with
/// columns `sigma pos_rms_median nrm_rms_median`.
pub fn write_plot_data<W: Write>(rows: &[SweepRow], mut out: W) -> Result<()> {
    let mut last: Option<f64> = None;
    for r in rows {
        let v = r.value();
        if last != Some(v) {
            if last.is_some() {
                writeln!(out, "\n")?;
            }
            writeln!(out, "# {} = {v}", r.experiment)?;
            writeln!(out, "# sigma pos_rms_median nrm_rms_median")?;
            last = Some(v);
        }
        writeln!(out, "{} {:e} {:e}", r.sigma, r.pos_rms_median, r.nrm_rms_median)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny(experiment: Experiment) -> SweepConfig {
        SweepConfig { sigmas: vec![0.0, 0.3], values: experiment.default_values()[..2].to_vec(), trials: 3, seed: 11, resolution: 32, max_gap: None, experiment }
    }

    #[test]
    fn seeds_differ() {
        assert_ne!(derive_seed(0, &[0]), derive_seed(0, &[1]));
        assert_ne!(derive_seed(0, &[1]), derive_seed(1, &[0]));
        assert_eq!(derive_seed(7, &[2, 3]), derive_seed(7, &[2, 3]));
    }

    #[test]
    fn experiment_names() {
        for e in Experiment::ALL {
            assert_eq!(e.name().parse::<Experiment>().unwrap(), e);
        }
        assert_eq!("fig11".parse::<Experiment>().unwrap(), Experiment::Shell);
        assert!("fig7".parse::<Experiment>().is_err());
    }

    #[test]
    fn noiseless_column_is_exact() {
        let rows = run_sweep(&tiny(Experiment::Separation)).unwrap();
        assert_eq!(rows.len(), 4);
        for r in rows.iter().filter(|r| r.sigma == 0.0) {
            assert!(r.points > 0);
            assert!(r.pos_rms_median < 1e-6 && r.nrm_rms_median < 1e-4, "{r:?}");
        }
        for r in rows.iter().filter(|r| r.sigma > 0.0) {
            assert!(r.pos_rms_median > 1e-3);
        }
    }

    #[test]
    fn csv_is_deterministic() {
        let cfg = tiny(Experiment::Thickness);
        let mut a = Vec::new();
        let mut b = Vec::new();
        write_sweep_csv(&run_sweep(&cfg).unwrap(), &mut a).unwrap();
        write_sweep_csv(&run_sweep(&cfg).unwrap(), &mut b).unwrap();
        assert_eq!(a, b);
        let text = String::from_utf8(a).unwrap();
        assert!(text.starts_with(
            "experiment,sigma,separation,medium_index,thickness,trials,points,pos_rms_median,pos_rms_mean,pos_mean,pos_median,nrm_rms_median,nrm_rms_mean,nrm_mean,nrm_median"
        ));
        let mut plot = Vec::new();
        write_plot_data(&run_sweep(&cfg).unwrap(), &mut plot).unwrap();
        assert!(String::from_utf8(plot).unwrap().contains("# thickness = 0.5"));
    }

    #[test]
    fn rejects_empty_grid() {
        let mut cfg = tiny(Experiment::Shell);
        cfg.trials = 0;
        assert!(matches!(run_sweep(&cfg), Err(Error::Config(_))));
    }
}
