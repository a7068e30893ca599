use std::fs::File;
use std::io::BufWriter;

use lightpath::io::{write_mesh_obj, write_mesh_ply, write_pfm, AcquisitionManifest, PointRow};
use lightpath::normalint::{backproject_log_depth, integrate, log_depth_offset, perspective_gradients, HeightMap, Mesh};
use lightpath::{Error, Vec3};

use crate::args::MeshArgs;
use crate::config::{out_dir, RunConfig};
use crate::EmptyResult;

pub fn run(a: MeshArgs, cfg: &RunConfig) -> anyhow::Result<()> {
    let input = a
        .input
        .clone()
        .or_else(|| cfg.input.clone())
        .ok_or_else(|| Error::Config("no points CSV given (--input)".into()))?;
    let manifest_path = a
        .manifest
        .clone()
        .or_else(|| cfg.manifest.clone())
        .ok_or_else(|| Error::Config("no manifest given (--manifest)".into()))?;
    let manifest = AcquisitionManifest::load(&manifest_path)?;
    let camera = manifest.calibration()?.camera.clone();
    let out = out_dir(&a.out, cfg)?;

    let (w, h) = (camera.width as usize, camera.height as usize);
    let mut normals: Vec<Option<Vec3>> = vec![None; w * h];
    let mut anchors = Vec::new();
    let mut reader = csv::Reader::from_path(&input)?;
    for row in reader.deserialize::<PointRow>() {
        let row = row?;
        let (i, j) = (row.i as usize, row.j as usize);
        if !row.ok || i >= w || j >= h {
            continue;
        }
        let k = j * w + i;
        if let (Some(nx), Some(ny), Some(nz)) = (row.nx, row.ny, row.nz) {
            normals[k] = Some(Vec3::new(nx, ny, nz).normalize());
        }
        if let (Some(x), Some(y), Some(z)) = (row.x, row.y, row.z) {
            anchors.push((k, Vec3::new(x, y, z)));
        }
    }
    if normals.iter().all(Option::is_none) {
        return Err(EmptyResult(format!("{} has no usable normals", input.display())).into());
    }

    let field = perspective_gradients(&camera, &normals)?;
    let map = integrate(&field)?;
    let offset = log_depth_offset(&camera, &map, &anchors)?;
    let points = backproject_log_depth(&camera, &map, offset);
    let mesh = Mesh::from_grid_points(w, h, &points);
    write_mesh_obj(&mesh, &mut BufWriter::new(File::create(out.join("mesh.obj"))?))?;
    write_mesh_ply(&mesh, &mut BufWriter::new(File::create(out.join("mesh.ply"))?))?;
    let depth = HeightMap { values: map.values.iter().map(|z| z.map(|z| (z + offset).exp())).collect(), ..map };
    write_pfm(&depth, &mut BufWriter::new(File::create(out.join("depth.pfm"))?))?;
    log::info!(
        "event=mesh vertices={} faces={} cg_iterations={} residual={:e}",
        mesh.vertices.len(),
        mesh.faces.len(),
        depth.iterations,
        depth.residual
    );
    Ok(())
}
