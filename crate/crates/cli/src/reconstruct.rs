use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use lightpath::eval::median;
use lightpath::eval::sweep::derive_seed;
use lightpath::io::{read_corr_file, read_stack, write_corr_file, write_points_csv, write_points_ply, AcquisitionManifest};
use lightpath::recon::{
    records_from_maps, reconstruct_surface, reconstruct_thin, Filters, Quality, ReconPoint, DEFAULT_MIN_ANGLE_DEG,
};
use lightpath::scene::{add_correspondence_noise, CorrespondenceMap, StripeAxis, View};
use lightpath::stripe::{decode_stack, DecodeOptions};
use lightpath::{Error, MediumIndex};
use serde::Serialize;

use crate::args::ReconstructArgs;
use crate::config::{out_dir, RunConfig};
use crate::EmptyResult;

#[derive(Debug, Serialize)]
struct Summary {
    points: usize,
    ok: usize,
    low_angle: usize,
    large_gap: usize,
    parallel: usize,
    out_of_range: usize,
    no_refraction: usize,
    with_normal: usize,
    median_delta_theta_deg: f64,
}

fn summarize(points: &[ReconPoint]) -> Summary {
    let count = |q: Quality| points.iter().filter(|p| p.quality.contains(q)).count();
    let dt: Vec<f64> = points.iter().map(|p| p.delta_theta.to_degrees()).collect();
    Summary {
        points: points.len(),
        ok: points.iter().filter(|p| p.is_ok()).count(),
        low_angle: count(Quality::LOW_ANGLE),
        large_gap: count(Quality::LARGE_GAP),
        parallel: count(Quality::PARALLEL),
        out_of_range: count(Quality::OUT_OF_RANGE),
        no_refraction: count(Quality::NO_REFRACTION),
        with_normal: points.iter().filter(|p| p.normal.is_some()).count(),
        median_delta_theta_deg: median(&dt),
    }
}

fn stack_dir(m: &AcquisitionManifest, view: View, pose: usize, axis: StripeAxis) -> anyhow::Result<&str> {
    m.stacks
        .iter()
        .find(|s| s.view == view && s.pose == pose && s.axis == axis)
        .map(|s| s.dir.as_str())
        .ok_or_else(|| Error::Config(format!("manifest lists no {axis:?} stack for {} pose {pose}", view.name())).into())
}

/// The four maps `[m0, m1, n0, n1]`, read or decoded.
fn load_maps(input: &Path, m: &AcquisitionManifest, from_stacks: bool, out: &Path) -> anyhow::Result<Vec<CorrespondenceMap>> {
    let mut maps = Vec::new();
    for view in m.views() {
        for pose in 0..2 {
            let map = if from_stacks {
                let u = read_stack(input.join(stack_dir(m, view, pose, StripeAxis::U)?))?;
                let v = read_stack(input.join(stack_dir(m, view, pose, StripeAxis::V)?))?;
                let decoded = decode_stack(&u, &v, DecodeOptions::default())?;
                let name = format!("decoded_{}_pose{pose}.corr", view.name());
                write_corr_file(&decoded.map, out.join(&name))?;
                log::info!("event=decode view={} pose={pose} valid={} file={name}", view.name(), decoded.map.valid_count());
                decoded.map
            } else {
                read_corr_file(input.join(m.map_file(view, pose)?))?
            };
            maps.push(map);
        }
    }
    Ok(maps)
}

pub fn run(a: ReconstructArgs, cfg: &RunConfig) -> anyhow::Result<()> {
    let input = a.input.clone().or_else(|| cfg.input.clone()).unwrap_or_else(|| PathBuf::from("."));
    let manifest = AcquisitionManifest::load(input.join("manifest.toml"))?;
    let calib = manifest.calibration()?;
    let out = out_dir(&a.out, cfg)?;
    let thin = a.thin || cfg.thin.unwrap_or(false) || manifest.thin;
    let unknown = a.unknown_media || cfg.unknown_media.unwrap_or(false);
    if thin && !manifest.thin {
        return Err(Error::Config("--thin needs maps simulated with the thin-object protocol".into()).into());
    }

    let mut maps = load_maps(&input, &manifest, a.stacks || cfg.stacks.unwrap_or(false), &out)?;
    let noise = a.noise.or(cfg.noise).unwrap_or(0.0);
    if noise > 0.0 {
        let seed = a.seed.or(cfg.seed).unwrap_or(0);
        maps = maps
            .iter()
            .enumerate()
            .map(|(k, m)| add_correspondence_noise(m, noise, derive_seed(seed, &[k as u64])))
            .collect::<lightpath::Result<_>>()?;
    }
    let records = records_from_maps(&calib.patterns, [&maps[0], &maps[1]], [&maps[2], &maps[3]])?;
    if records.is_empty() {
        return Err(EmptyResult("no pixel has a correspondence".into()).into());
    }
    let min_angle = a.min_angle.or(cfg.min_angle).unwrap_or(DEFAULT_MIN_ANGLE_DEG);
    let max_gap = a.max_gap.or(cfg.max_gap).or(calib.max_gap).unwrap_or(f64::INFINITY);
    let cam = &calib.camera;
    let filters = Filters::new(cam.position, cam.forward(), &calib.patterns, min_angle.to_radians(), max_gap);

    let mut points = if thin {
        // with unknown media the indices only feed normals, which are dropped below
        let (obj, amb) = if unknown { (MediumIndex::AIR, MediumIndex::AIR) } else { (calib.object()?, calib.ambient()?) };
        reconstruct_thin(&records, &filters, obj, amb)?
    } else {
        let media = if unknown { None } else { Some((calib.liquid()?, calib.ambient()?)) };
        reconstruct_surface(&records, &filters, media)?
    };
    if unknown {
        for p in &mut points {
            p.normal = None;
        }
    }

    let mut ply = BufWriter::new(File::create(out.join("points.ply"))?);
    write_points_ply(&points, !unknown, &mut ply)?;
    write_points_csv(&points, BufWriter::new(File::create(out.join("points.csv"))?))?;
    let summary = summarize(&points);
    let mut w = csv::Writer::from_path(out.join("summary.csv"))?;
    w.serialize(&summary)?;
    w.flush()?;
    log::info!(
        "event=reconstruct points={} ok={} low_angle={} large_gap={} parallel={} out_of_range={} thin={thin}",
        summary.points,
        summary.ok,
        summary.low_angle,
        summary.large_gap,
        summary.parallel,
        summary.out_of_range
    );
    if summary.ok == 0 {
        return Err(EmptyResult("no ok-quality point".into()).into());
    }
    Ok(())
}
