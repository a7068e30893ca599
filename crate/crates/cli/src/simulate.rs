use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use lightpath::eval::sweep::Acquisition;
use lightpath::io::{write_corr_file, write_stack, AcquisitionManifest, Calibration, MapEntry, StackEntry, MANIFEST_VERSION};
use lightpath::scene::{
    synthesize_stripe_stack, CorrespondenceMap, FepTruth, StripeAxis, DEFAULT_PSF_SIGMA, PATTERN_TEXELS_PER_UNIT,
};
use serde::Serialize;

use crate::args::SimulateArgs;
use crate::config::{build_scene, out_dir, RunConfig};

#[derive(Serialize)]
struct TruthRow {
    i: u32,
    j: u32,
    x: f64,
    y: f64,
    z: f64,
    nx: f64,
    ny: f64,
    nz: f64,
}

/// Stripe positions covering every valid coordinate on one axis, with a
/// margin of a few blurred stripe widths.
fn stripe_range(map: &CorrespondenceMap, axis: StripeAxis, width: f64) -> (f64, f64) {
    let coords = map.uv.iter().zip(&map.valid).filter(|(_, v)| **v).map(|(uv, _)| match axis {
        StripeAxis::U => uv.x,
        StripeAxis::V => uv.y,
    });
    let (lo, hi) = coords.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), x| (a.min(x), b.max(x)));
    if lo > hi {
        return (0.0, 0.0);
    }
    let margin = 4.0 * width;
    (((lo - margin) / width).floor() * width, ((hi + margin) / width).ceil() * width)
}

fn write_truth(path: &Path, map: &CorrespondenceMap, truth: &[Option<FepTruth>]) -> anyhow::Result<()> {
    let mut w = csv::Writer::from_writer(BufWriter::new(File::create(path)?));
    for (k, t) in truth.iter().enumerate() {
        if let Some(t) = t {
            let (i, j) = map.pixel(k);
            let (p, n) = (t.position, t.normal);
            w.serialize(TruthRow { i, j, x: p.x, y: p.y, z: p.z, nx: n.x, ny: n.y, nz: n.z })?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn run(a: SimulateArgs, cfg: &RunConfig) -> anyhow::Result<()> {
    let (scene_cfg, mut scene) = build_scene(&a.scene, cfg)?;
    let thin = a.thin || cfg.thin.unwrap_or(false);
    if thin {
        scene.liquid = None;
    }
    let out = out_dir(&a.out, cfg)?;
    let noise = a.noise.or(cfg.noise).unwrap_or(0.0);
    let seed = a.seed.or(cfg.seed).unwrap_or(0);
    let label = a.scene.scene.clone().or_else(|| cfg.scene.clone()).unwrap_or_else(|| "custom".into());

    let acq = Acquisition::simulate(scene)?;
    let maps = if noise > 0.0 { acq.noisy_maps(noise, seed)? } else { acq.maps.to_vec() };
    let views = acq.views();
    let mut entries = Vec::new();
    for (k, map) in maps.iter().enumerate() {
        let (view, pose) = (views[k / 2], k % 2);
        let file = format!("{}_pose{pose}.corr", view.name());
        write_corr_file(map, out.join(&file))?;
        log::info!("event=map view={} pose={pose} valid={} file={file}", view.name(), map.valid_count());
        entries.push(MapEntry { view, pose, file });
    }

    let mut stacks = Vec::new();
    if a.stacks || cfg.stacks.unwrap_or(false) {
        let width = a.stripe_width.or(cfg.stripe_width).unwrap_or(1.0 / PATTERN_TEXELS_PER_UNIT);
        for (k, map) in maps.iter().enumerate() {
            let (view, pose) = (views[k / 2], k % 2);
            for axis in [StripeAxis::U, StripeAxis::V] {
                let range = stripe_range(map, axis, width);
                let stack = synthesize_stripe_stack(map, axis, width, width, range, DEFAULT_PSF_SIGMA)?;
                let dir = format!("stacks/{}_pose{pose}_{}", view.name(), if axis == StripeAxis::U { "u" } else { "v" });
                let m = write_stack(&stack, out.join(&dir))?;
                log::info!("event=stack view={} pose={pose} frames={} dir={dir}", view.name(), m.frames.len());
                stacks.push(StackEntry { view, pose, axis, dir });
            }
        }
    }

    let s = &acq.scene;
    let manifest = AcquisitionManifest {
        version: MANIFEST_VERSION,
        scene: label,
        thin: acq.thin,
        calibration: Some(Calibration {
            camera: s.camera.clone(),
            patterns: s.patterns.clone(),
            ambient_index: s.ambient.value(),
            liquid_index: s.liquid.map(|l| l.index.value()),
            object_index: s.solids.first().map(|o| o.index.value()),
            max_gap: acq.filters.max_gap.is_finite().then_some(acq.filters.max_gap),
        }),
        maps: entries,
        stacks,
    };
    manifest.save(out.join("manifest.toml"))?;
    std::fs::write(out.join("scene.toml"), scene_cfg.to_toml())?;
    write_truth(&out.join("truth.csv"), &acq.maps[0], &acq.truth)?;
    log::info!("event=simulate out={} thin={} noise={noise} seed={seed}", out.display(), acq.thin);
    Ok(())
}
