//! Height-from-normals integration and meshing.
//!
//! Gradients are integrated by least squares on the masked pixel graph: each
//! pair of 4-neighbours contributes one equation `z_b - z_a = g_ab`, with
//! `g_ab` the trapezoidal average of the two pixels' gradients. The normal
//! equations are a graph Laplacian (natural boundary), solved by
//! Jacobi-preconditioned conjugate gradients. The additive constant is fixed
//! per connected component by a zero mean.

use std::collections::VecDeque;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geom::Vec3;
use crate::scene::PinholeCamera;

/// Normals with `|n_z|` (or the perspective equivalent) below this are dropped.
pub const SLOPE_EPS: f64 = 0.05;
pub const CG_TOLERANCE: f64 = 1e-10;
pub const CG_MAX_ITERATIONS: usize = 10_000;

/// Per-pixel normals on a regular grid, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalGrid {
    pub width: usize,
    pub height: usize,
    pub normals: Vec<Option<Vec3>>,
    /// Scene units per pixel.
    pub pitch: f64,
}

impl NormalGrid {
    pub fn new(width: usize, height: usize, normals: Vec<Option<Vec3>>, pitch: f64) -> Result<Self> {
        if normals.len() != width * height {
            return Err(Error::Config(format!("{} normals for a {width}x{height} grid", normals.len())));
        }
        if !(pitch > 0.0 && pitch.is_finite()) {
            return Err(Error::Config(format!("pixel pitch must be positive, got {pitch}")));
        }
        if let Some(n) = normals.iter().flatten().find(|n| (n.norm() - 1.0).abs() > 1e-6) {
            return Err(Error::Contract(format!("normal {n:?} is not unit length")));
        }
        Ok(Self { width, height, normals, pitch })
    }
}

/// Height derivatives per pixel; `None` outside the domain.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientField {
    pub width: usize,
    pub height: usize,
    /// `(dz/dx, dz/dy)` in height units per pixel step.
    pub gradients: Vec<Option<(f64, f64)>>,
    /// Pixels removed because their normal was too close to horizontal.
    pub dropped: usize,
}

impl GradientField {
    pub fn new(width: usize, height: usize, gradients: Vec<Option<(f64, f64)>>) -> Result<Self> {
        if gradients.len() != width * height {
            return Err(Error::Config(format!("{} gradients for a {width}x{height} grid", gradients.len())));
        }
        Ok(Self { width, height, gradients, dropped: 0 })
    }

    pub fn mask(&self) -> Vec<bool> {
        self.gradients.iter().map(Option::is_some).collect()
    }
}

/// `p = -n_x/n_z`, `q = -n_y/n_z`, scaled to height change per pixel step.
pub fn normals_to_gradients(grid: &NormalGrid) -> GradientField {
    let mut dropped = 0;
    let gradients = grid
        .normals
        .iter()
        .map(|n| {
            let n = (*n)?;
            if n.z.abs() <= SLOPE_EPS {
                dropped += 1;
                return None;
            }
            Some((-n.x / n.z * grid.pitch, -n.y / n.z * grid.pitch))
        })
        .collect();
    if dropped > 0 {
        log::debug!("event=drop_grazing_normals count={dropped}");
    }
    GradientField { width: grid.width, height: grid.height, gradients, dropped }
}

/// Gradients of log depth `ln Z` (camera-frame depth) per pixel for a
/// perspective camera, from world-frame normals laid out on the image grid.
///
/// A surface point is `X = Z (x, y, 1)` with `(x, y)` the normalized image
/// coordinates; `n . dX/du = 0` gives `d(ln Z)/du = -n_x / (f n . (x, y, 1))`.
pub fn perspective_gradients(camera: &PinholeCamera, normals: &[Option<Vec3>]) -> Result<GradientField> {
    let (w, h) = (camera.width as usize, camera.height as usize);
    if normals.len() != w * h {
        return Err(Error::Config(format!("{} normals for a {w}x{h} camera", normals.len())));
    }
    let inv = camera.rotation.inverse();
    let mut dropped = 0;
    let gradients = normals
        .iter()
        .enumerate()
        .map(|(k, n)| {
            let n = inv * (*n)?;
            let c = PinholeCamera::pixel_center((k % w) as u32, (k / w) as u32);
            let ray = Vec3::new((c.x - camera.principal.x) / camera.focal, (c.y - camera.principal.y) / camera.focal, 1.0);
            let denom = n.dot(&ray);
            if denom.abs() <= SLOPE_EPS * ray.norm() {
                dropped += 1;
                return None;
            }
            Some((-n.x / (camera.focal * denom), -n.y / (camera.focal * denom)))
        })
        .collect();
    Ok(GradientField { width: w, height: h, gradients, dropped })
}

/// Integrated heights, row-major; `None` outside the domain.
#[derive(Debug, Clone, PartialEq)]
pub struct HeightMap {
    pub width: usize,
    pub height: usize,
    pub values: Vec<Option<f64>>,
    pub iterations: usize,
    /// Final relative residual of the normal equations.
    pub residual: f64,
}

impl HeightMap {
    pub fn mask(&self) -> Vec<bool> {
        self.values.iter().map(Option::is_some).collect()
    }
}

/// Labels 4-connected components of `mask`; `None` outside it.
pub fn connected_components(width: usize, height: usize, mask: &[bool]) -> (Vec<Option<usize>>, usize) {
    let mut label = vec![None; mask.len()];
    let mut count = 0;
    let mut queue = VecDeque::new();
    for start in 0..mask.len() {
        if !mask[start] || label[start].is_some() {
            continue;
        }
        label[start] = Some(count);
        queue.push_back(start);
        while let Some(k) = queue.pop_front() {
            let (i, j) = (k % width, k / width);
            let mut visit = |nb: usize| {
                if mask[nb] && label[nb].is_none() {
                    label[nb] = Some(count);
                    queue.push_back(nb);
                }
            };
            if i > 0 {
                visit(k - 1);
            }
            if i + 1 < width {
                visit(k + 1);
            }
            if j > 0 {
                visit(k - width);
            }
            if j + 1 < height {
                visit(k + width);
            }
        }
        count += 1;
    }
    (label, count)
}

struct Graph {
    /// Compact node -> grid index.
    pixels: Vec<usize>,
    neighbors: Vec<Vec<usize>>,
    component: Vec<usize>,
    components: usize,
}

impl Graph {
    fn apply(&self, x: &[f64], out: &mut [f64]) {
        out.par_iter_mut().enumerate().with_min_len(4096).for_each(|(k, o)| {
            let nb = &self.neighbors[k];
            *o = nb.len() as f64 * x[k] - nb.iter().map(|&m| x[m]).sum::<f64>();
        });
    }

    fn remove_means(&self, x: &mut [f64]) {
        let mut sum = vec![0.0; self.components];
        let mut count = vec![0usize; self.components];
        for (k, v) in x.iter().enumerate() {
            sum[self.component[k]] += v;
            count[self.component[k]] += 1;
        }
        for (k, v) in x.iter_mut().enumerate() {
            let c = self.component[k];
            *v -= sum[c] / count[c] as f64;
        }
    }
}

/// Fixed-size chunks keep the summation order, and so the result, independent
/// of the thread count.
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let partial: Vec<f64> = a.par_chunks(4096).zip(b.par_chunks(4096)).map(|(x, y)| x.iter().zip(y).map(|(p, q)| p * q).sum()).collect();
    partial.iter().sum()
}

/// Least-squares heights whose differences best match the gradients, with a
/// zero mean on every 4-connected component.
pub fn integrate(field: &GradientField) -> Result<HeightMap> {
    let mask = field.mask();
    let (labels, components) = connected_components(field.width, field.height, &mask);
    if components == 0 {
        return Err(Error::Config("integration domain is empty".into()));
    }
    let pixels: Vec<usize> = (0..mask.len()).filter(|&k| mask[k]).collect();
    let mut node = vec![usize::MAX; mask.len()];
    for (c, &k) in pixels.iter().enumerate() {
        node[k] = c;
    }
    let w = field.width;
    let mut neighbors = vec![Vec::with_capacity(4); pixels.len()];
    let mut rhs = vec![0.0; pixels.len()];
    for (a, &k) in pixels.iter().enumerate() {
        let (ga, i, j) = (field.gradients[k].expect("masked"), k % w, k / w);
        let mut link = |nb: usize, g: f64| {
            let b = node[nb];
            if b != usize::MAX {
                neighbors[a].push(b);
                neighbors[b].push(a);
                rhs[b] += g;
                rhs[a] -= g;
            }
        };
        if i + 1 < w {
            if let Some(gb) = field.gradients[k + 1] {
                link(k + 1, 0.5 * (ga.0 + gb.0));
            }
        }
        if j + 1 < field.height {
            if let Some(gb) = field.gradients[k + w] {
                link(k + w, 0.5 * (ga.1 + gb.1));
            }
        }
    }
    let component = pixels.iter().map(|&k| labels[k].expect("masked")).collect();
    let graph = Graph { pixels, neighbors, component, components };
    let (z, iterations, residual) = conjugate_gradient(&graph, &rhs);
    if residual > CG_TOLERANCE {
        log::warn!("event=integration_not_converged iterations={iterations} residual={residual:e}");
    }
    let mut values = vec![None; mask.len()];
    for (c, &k) in graph.pixels.iter().enumerate() {
        values[k] = Some(z[c]);
    }
    Ok(HeightMap { width: field.width, height: field.height, values, iterations, residual })
}

fn conjugate_gradient(graph: &Graph, rhs: &[f64]) -> (Vec<f64>, usize, f64) {
    let n = rhs.len();
    let precond: Vec<f64> = graph.neighbors.iter().map(|nb| if nb.is_empty() { 0.0 } else { 1.0 / nb.len() as f64 }).collect();
    let mut x = vec![0.0; n];
    let mut r = rhs.to_vec();
    let norm_b = dot(rhs, rhs).sqrt();
    if norm_b == 0.0 {
        return (x, 0, 0.0);
    }
    let mut z: Vec<f64> = r.iter().zip(&precond).map(|(a, m)| a * m).collect();
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut ap = vec![0.0; n];
    let mut relative = 1.0;
    let mut iterations = 0;
    while iterations < CG_MAX_ITERATIONS {
        graph.apply(&p, &mut ap);
        let pap = dot(&p, &ap);
        if pap <= 0.0 {
            break;
        }
        let alpha = rz / pap;
        x.par_iter_mut().zip(&p).for_each(|(xi, pi)| *xi += alpha * pi);
        r.par_iter_mut().zip(&ap).for_each(|(ri, ai)| *ri -= alpha * ai);
        iterations += 1;
        relative = dot(&r, &r).sqrt() / norm_b;
        if relative < CG_TOLERANCE {
            break;
        }
        z.par_iter_mut().zip(&r).zip(&precond).for_each(|((zi, ri), mi)| *zi = ri * mi);
        let rz_next = dot(&r, &z);
        let beta = rz_next / rz;
        rz = rz_next;
        p.par_iter_mut().zip(&z).for_each(|(pi, zi)| *pi = zi + beta * *pi);
    }
    graph.remove_means(&mut x);
    (x, iterations, relative)
}

/// Triangle mesh with one vertex per masked grid pixel.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Mesh {
    pub vertices: Vec<Vec3>,
    /// Grid index of each vertex.
    pub pixels: Vec<usize>,
    pub faces: Vec<[u32; 3]>,
}

impl Mesh {
    /// Two triangles for every 2x2 block whose four pixels all have points.
    /// Faces wind counter-clockwise in the grid's (x, y) plane.
    pub fn from_grid_points(width: usize, height: usize, points: &[Option<Vec3>]) -> Self {
        let mut index = vec![u32::MAX; points.len()];
        let mut mesh = Mesh::default();
        for (k, p) in points.iter().enumerate() {
            if let Some(p) = p {
                index[k] = mesh.vertices.len() as u32;
                mesh.vertices.push(*p);
                mesh.pixels.push(k);
            }
        }
        for j in 0..height.saturating_sub(1) {
            for i in 0..width.saturating_sub(1) {
                let k = j * width + i;
                let [a, b, c, d] = [index[k], index[k + 1], index[k + width + 1], index[k + width]];
                if [a, b, c, d].contains(&u32::MAX) {
                    continue;
                }
                mesh.faces.push([a, b, c]);
                mesh.faces.push([a, c, d]);
            }
        }
        mesh
    }
}

/// Mesh over a height map with vertices at `(i * pitch, j * pitch, z)`.
pub fn mesh_from_heightmap(map: &HeightMap, pitch: f64) -> Mesh {
    let points: Vec<_> = map
        .values
        .iter()
        .enumerate()
        .map(|(k, z)| z.map(|z| Vec3::new((k % map.width) as f64 * pitch, (k / map.width) as f64 * pitch, z)))
        .collect();
    Mesh::from_grid_points(map.width, map.height, &points)
}

/// World points from an integrated log-depth map. `offset` is added to every
/// log depth (it fixes the overall scale the integration leaves open).
pub fn backproject_log_depth(camera: &PinholeCamera, map: &HeightMap, offset: f64) -> Vec<Option<Vec3>> {
    map.values
        .iter()
        .enumerate()
        .map(|(k, z)| {
            let c = PinholeCamera::pixel_center((k % map.width) as u32, (k / map.width) as u32);
            let depth = ((*z)? + offset).exp();
            let local = Vec3::new((c.x - camera.principal.x) / camera.focal, (c.y - camera.principal.y) / camera.focal, 1.0) * depth;
            Some(camera.position + camera.rotation * local)
        })
        .collect()
}

/// Least-squares log-depth offset aligning an integrated map to known points
/// (e.g. triangulated entry points) given as `(grid index, world point)`.
pub fn log_depth_offset(camera: &PinholeCamera, map: &HeightMap, anchors: &[(usize, Vec3)]) -> Result<f64> {
    let fwd = camera.forward();
    let diffs: Vec<f64> = anchors
        .iter()
        .filter_map(|&(k, p)| {
            let depth = (p - camera.position).dot(&fwd);
            (depth > 0.0).then_some(depth.ln() - map.values.get(k).copied().flatten()?)
        })
        .collect();
    if diffs.is_empty() {
        return Err(Error::Fit("no anchor points overlap the integrated surface".into()));
    }
    Ok(diffs.iter().sum::<f64>() / diffs.len() as f64)
}
