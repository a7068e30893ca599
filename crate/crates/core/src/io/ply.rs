//! Point clouds (ASCII PLY, CSV) and meshes (ASCII PLY, OBJ).
//!
//! Point-cloud vertices carry `x y z [nx ny nz] delta_theta gap quality`;
//! `delta_theta` is in degrees and `quality` holds the flag bits. Normals are
//! omitted altogether when the media were unknown, and a vertex whose normal
//! could not be recovered stores `nan`. Floats are printed with Rust's
//! shortest round-trip formatting.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::Vec3;
use crate::normalint::Mesh;
use crate::recon::{Quality, ReconPoint};

/// Writes every point that has a position. Returns the vertex count.
pub fn write_points_ply(points: &[ReconPoint], with_normals: bool, w: &mut impl Write) -> Result<usize> {
    let rows: Vec<_> = points.iter().filter_map(|p| Some((p, p.fep?))).collect();
    writeln!(w, "ply\nformat ascii 1.0\nelement vertex {}", rows.len())?;
    writeln!(w, "property double x\nproperty double y\nproperty double z")?;
    if with_normals {
        writeln!(w, "property double nx\nproperty double ny\nproperty double nz")?;
    }
    writeln!(w, "property double delta_theta\nproperty double gap\nproperty uchar quality\nend_header")?;
    for (p, x) in &rows {
        write!(w, "{} {} {}", x.x, x.y, x.z)?;
        if with_normals {
            let n = p.normal.unwrap_or(Vec3::repeat(f64::NAN));
            write!(w, " {} {} {}", n.x, n.y, n.z)?;
        }
        writeln!(w, " {} {} {}", p.delta_theta.to_degrees(), p.gap, p.quality.bits())?;
    }
    Ok(rows.len())
}

/// One vertex read back from a point-cloud PLY.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlyVertex {
    pub position: Vec3,
    pub normal: Option<Vec3>,
    /// Degrees.
    pub delta_theta: f64,
    pub gap: f64,
    pub quality: Quality,
}

impl PlyVertex {
    pub fn is_ok(&self) -> bool {
        self.quality.is_ok()
    }
}

fn ply_err(detail: impl Into<String>) -> Error {
    Error::format("PLY", detail)
}

/// Reads an ASCII point cloud with at least `x y z`. Other known properties
/// are optional; unknown ones are skipped.
pub fn read_points_ply(r: &mut impl BufRead) -> Result<Vec<PlyVertex>> {
    let mut lines = r.lines();
    let mut next = || -> Result<String> { lines.next().ok_or_else(|| ply_err("unexpected end of file"))?.map_err(Error::from) };
    if next()?.trim() != "ply" {
        return Err(ply_err("missing ply signature"));
    }
    let mut count = None;
    let mut props: Vec<String> = Vec::new();
    let mut in_vertex = false;
    loop {
        let line = next()?;
        let tok: Vec<&str> = line.split_whitespace().collect();
        match tok.as_slice() {
            ["format", "ascii", _] => {}
            ["format", f, ..] => return Err(ply_err(format!("unsupported format {f}"))),
            ["comment", ..] | ["obj_info", ..] | [] => {}
            ["element", "vertex", n] => {
                count = Some(n.parse::<usize>().map_err(|_| ply_err(format!("bad vertex count {n}")))?);
                in_vertex = true;
            }
            ["element", ..] => in_vertex = false,
            ["property", "list", ..] if in_vertex => return Err(ply_err("list property on vertices")),
            ["property", _, name] if in_vertex => props.push(name.to_string()),
            ["property", ..] => {}
            ["end_header"] => break,
            _ => return Err(ply_err(format!("bad header line {line:?}"))),
        }
    }
    let count = count.ok_or_else(|| ply_err("no vertex element"))?;
    let col = |name: &str| props.iter().position(|p| p == name);
    let (Some(ix), Some(iy), Some(iz)) = (col("x"), col("y"), col("z")) else {
        return Err(ply_err("vertices need x, y and z"));
    };
    let normal_cols = match (col("nx"), col("ny"), col("nz")) {
        (Some(a), Some(b), Some(c)) => Some([a, b, c]),
        _ => None,
    };
    let (idt, igap, iq) = (col("delta_theta"), col("gap"), col("quality"));
    let mut out = Vec::with_capacity(count.min(1 << 20));
    for k in 0..count {
        let line = next()?;
        let vals = line
            .split_whitespace()
            .map(str::parse::<f64>)
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| ply_err(format!("vertex {k}: {e}")))?;
        if vals.len() != props.len() {
            return Err(ply_err(format!("vertex {k} has {} values for {} properties", vals.len(), props.len())));
        }
        let normal = normal_cols.map(|[a, b, c]| Vec3::new(vals[a], vals[b], vals[c])).filter(|n| n.iter().all(|x| x.is_finite()));
        let quality = match iq {
            Some(i) if vals[i] >= 0.0 && vals[i] <= 255.0 && vals[i].fract() == 0.0 => Quality::from_bits_retain(vals[i] as u8),
            Some(_) => return Err(ply_err(format!("vertex {k}: bad quality value"))),
            None => Quality::empty(),
        };
        out.push(PlyVertex {
            position: Vec3::new(vals[ix], vals[iy], vals[iz]),
            normal,
            delta_theta: idt.map_or(f64::NAN, |i| vals[i]),
            gap: igap.map_or(f64::NAN, |i| vals[i]),
            quality,
        });
    }
    Ok(out)
}

/// One CSV row per reconstructed point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointRow {
    pub i: u32,
    pub j: u32,
    pub x: Option<f64>,
    pub y: Option<f64>,
    pub z: Option<f64>,
    pub nx: Option<f64>,
    pub ny: Option<f64>,
    pub nz: Option<f64>,
    pub delta_theta_deg: f64,
    pub gap: f64,
    pub quality: u8,
    pub ok: bool,
}

impl From<&ReconPoint> for PointRow {
    fn from(p: &ReconPoint) -> Self {
        Self {
            i: p.pixel.0,
            j: p.pixel.1,
            x: p.fep.map(|v| v.x),
            y: p.fep.map(|v| v.y),
            z: p.fep.map(|v| v.z),
            nx: p.normal.map(|v| v.x),
            ny: p.normal.map(|v| v.y),
            nz: p.normal.map(|v| v.z),
            delta_theta_deg: p.delta_theta.to_degrees(),
            gap: p.gap,
            quality: p.quality.bits(),
            ok: p.is_ok(),
        }
    }
}

pub fn write_points_csv(points: &[ReconPoint], w: impl Write) -> Result<()> {
    let mut csv = csv::Writer::from_writer(w);
    for p in points {
        csv.serialize(PointRow::from(p))?;
    }
    csv.flush()?;
    Ok(())
}

pub fn write_mesh_ply(mesh: &Mesh, w: &mut impl Write) -> Result<()> {
    writeln!(w, "ply\nformat ascii 1.0\nelement vertex {}", mesh.vertices.len())?;
    writeln!(w, "property double x\nproperty double y\nproperty double z")?;
    writeln!(w, "element face {}\nproperty list uchar uint vertex_indices\nend_header", mesh.faces.len())?;
    for v in &mesh.vertices {
        writeln!(w, "{} {} {}", v.x, v.y, v.z)?;
    }
    for f in &mesh.faces {
        writeln!(w, "3 {} {} {}", f[0], f[1], f[2])?;
    }
    Ok(())
}

/// OBJ indices are one-based.
pub fn write_mesh_obj(mesh: &Mesh, w: &mut impl Write) -> Result<()> {
    for v in &mesh.vertices {
        writeln!(w, "v {} {} {}", v.x, v.y, v.z)?;
    }
    for f in &mesh.faces {
        writeln!(w, "f {} {} {}", f[0] + 1, f[1] + 1, f[2] + 1)?;
    }
    Ok(())
}
