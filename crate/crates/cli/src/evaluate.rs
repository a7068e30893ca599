use std::fs::File;
use std::io::BufReader;
use std::path::PathBuf;
use std::str::FromStr;

use lightpath::eval::{
    angle_deg, normal_errors, position_errors, ransac_fit, ErrorSummary, Primitive, PrimitiveKind, RansacOptions, Reference,
};
use lightpath::io::{read_points_ply, PlyVertex};
use lightpath::{Error, Vec3};
use serde::Serialize;

use crate::args::EvaluateArgs;
use crate::config::{build_scene, out_dir, RunConfig};
use crate::EmptyResult;

#[derive(Debug, Serialize)]
struct MetricRow {
    metric: &'static str,
    reference: String,
    count: usize,
    mean: f64,
    median: f64,
    rms: f64,
    max: f64,
}

#[derive(Debug, Default, Serialize)]
struct FitRow {
    kind: String,
    inliers: usize,
    points: usize,
    px: Option<f64>,
    py: Option<f64>,
    pz: Option<f64>,
    nx: Option<f64>,
    ny: Option<f64>,
    nz: Option<f64>,
    radius: Option<f64>,
    offset: Option<f64>,
}

fn fit_row(prim: &Primitive, inliers: usize, points: usize) -> FitRow {
    let mut row = FitRow { kind: prim.kind().to_string(), inliers, points, ..Default::default() };
    let set_p = |r: &mut FitRow, p: Vec3| (r.px, r.py, r.pz) = (Some(p.x), Some(p.y), Some(p.z));
    let set_n = |r: &mut FitRow, n: Vec3| (r.nx, r.ny, r.nz) = (Some(n.x), Some(n.y), Some(n.z));
    match *prim {
        Primitive::Plane { normal, offset } => {
            set_n(&mut row, normal);
            row.offset = Some(offset);
        }
        Primitive::Sphere { center, radius } => {
            set_p(&mut row, center);
            row.radius = Some(radius);
        }
        Primitive::Cylinder { point, axis, radius } => {
            set_p(&mut row, point);
            set_n(&mut row, axis);
            row.radius = Some(radius);
        }
    }
    row
}

fn metric_row(metric: &'static str, reference: &str, s: ErrorSummary) -> MetricRow {
    MetricRow { metric, reference: reference.to_string(), count: s.count, mean: s.mean, median: s.median, rms: s.rms, max: s.max }
}

pub fn run(a: EvaluateArgs, cfg: &RunConfig) -> anyhow::Result<()> {
    let input = a
        .input
        .clone()
        .or_else(|| cfg.input.clone())
        .ok_or_else(|| Error::Config("no point cloud given (--input)".into()))?;
    let reference = cfg.reference.clone().filter(|_| a.reference == "analytic").unwrap_or(a.reference.clone());
    let out = out_dir(&a.out, cfg)?;
    let vertices = read_points_ply(&mut BufReader::new(File::open(&input)?))?;
    let selected: Vec<PlyVertex> = vertices.into_iter().filter(|v| a.all || v.is_ok()).collect();
    if selected.is_empty() {
        return Err(EmptyResult(format!("{} has no usable points", input.display())).into());
    }
    let points: Vec<Vec3> = selected.iter().map(|v| v.position).collect();
    let with_normals: Vec<(Vec3, Vec3)> = selected.iter().filter_map(|v| Some((v.position, v.normal?))).collect();

    let mut rows = Vec::new();
    if reference == "analytic" {
        let has_scene = a.scene.scene.is_some() || a.scene.scene_file.is_some() || cfg.scene.is_some() || cfg.scene_file.is_some();
        if !has_scene {
            return Err(Error::Config("analytic reference needs --scene or --scene-file".into()).into());
        }
        let (_, scene) = build_scene(&a.scene, cfg)?;
        // nearest solid surface per point
        let nearest = |p: Vec3| -> lightpath::Result<(f64, usize)> {
            let mut best = (f64::INFINITY, 0);
            for (i, s) in scene.solids.iter().enumerate() {
                let d = Reference::Surface(&s.shape).distance(p)?;
                if d < best.0 {
                    best = (d, i);
                }
            }
            Ok(best)
        };
        let dist = points.iter().map(|p| nearest(*p).map(|b| b.0)).collect::<lightpath::Result<Vec<_>>>()?;
        if let Some(s) = ErrorSummary::from_values(&dist) {
            rows.push(metric_row("position", "analytic", s));
        }
        let mut angles = Vec::new();
        for (p, n) in &with_normals {
            let (_, i) = nearest(*p)?;
            angles.push(angle_deg(n.normalize(), Reference::Surface(&scene.solids[i].shape).normal(*p)?));
        }
        if let Some(s) = ErrorSummary::from_values(&angles) {
            rows.push(metric_row("normal", "analytic", s));
        }
    } else {
        let kind = PrimitiveKind::from_str(&reference)
            .map_err(|_| Error::Config(format!("unknown reference '{reference}' (analytic, plane, sphere, cylinder)")))?;
        let opts = RansacOptions {
            threshold: a.threshold.or(cfg.threshold).unwrap_or(RansacOptions::default().threshold),
            iterations: a.iterations.or(cfg.iterations).unwrap_or(RansacOptions::default().iterations),
            seed: a.seed.or(cfg.seed).unwrap_or(0),
            ..Default::default()
        };
        let fit = ransac_fit(&points, kind, &opts)?;
        let prim = Reference::Primitive(&fit.primitive);
        let (_, pos) = position_errors(&points, &prim)?;
        if let Some(s) = pos {
            rows.push(metric_row("position", &reference, s));
        }
        let (_, nrm) = normal_errors(&with_normals, &prim)?;
        if let Some(s) = nrm {
            rows.push(metric_row("normal", &reference, s));
        }
        let mut w = csv::Writer::from_path(out.join("primitive.csv"))?;
        w.serialize(fit_row(&fit.primitive, fit.inliers.len(), points.len()))?;
        w.flush()?;
        log::info!("event=fit kind={kind} inliers={} points={}", fit.inliers.len(), points.len());
    }
    let path: PathBuf = out.join("evaluation.csv");
    let mut w = csv::Writer::from_path(&path)?;
    for r in &rows {
        log::info!("event=evaluate metric={} count={} mean={:e} median={:e} rms={:e}", r.metric, r.count, r.mean, r.median, r.rms);
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}
