//! Implicit solids built from quadric primitives and half-spaces with CSG.
//!
//! Every shape offers two views of the same geometry:
//!
//! * an implicit function `f` (negative inside) with an analytic gradient, used
//!   for validation and error metrics, and
//! * exact ray/solid interval lists, combined through boolean operations, used
//!   by the tracer.
//!
//! A sign-change scan with bisection ([`intersect_scan`]) is kept as the generic
//! numeric route for any implicit and doubles as an independent check on the
//! analytic intervals.

use nalgebra::{Matrix3, Rotation3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{MediumIndex, Ray3, Vec3};

/// Intersections closer than this along a ray are ignored (self-intersection guard).
pub const MIN_HIT_DISTANCE: f64 = 1e-9;

const SCAN_SAMPLES: usize = 256;
const BISECTION_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Shape {
    Sphere {
        center: Vec3,
        radius: f64,
    },
    /// Ellipsoid with semi-axis lengths `radii` along the orthonormal `axes`.
    Ellipsoid {
        center: Vec3,
        radii: Vec3,
        #[serde(default = "identity_axes")]
        axes: [Vec3; 3],
    },
    /// Capped cylinder from `base` along unit `axis` for `height`.
    Cylinder {
        base: Vec3,
        axis: Vec3,
        radius: f64,
        height: f64,
    },
    /// Solid right circular cone; `axis` points from the apex toward the base disk.
    Cone {
        apex: Vec3,
        axis: Vec3,
        height: f64,
        radius: f64,
    },
    /// The set `normal . p <= offset`.
    HalfSpace {
        normal: Vec3,
        offset: f64,
    },
    Union {
        children: Vec<Shape>,
    },
    Intersection {
        children: Vec<Shape>,
    },
    Difference {
        base: Box<Shape>,
        subtract: Box<Shape>,
    },
}

fn identity_axes() -> [Vec3; 3] {
    [Vec3::x(), Vec3::y(), Vec3::z()]
}

/// Axis-aligned bounds; components may be infinite.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Aabb {
    pub min: Vec3,
    pub max: Vec3,
}

impl Aabb {
    pub fn infinite() -> Self {
        Self { min: Vec3::repeat(f64::NEG_INFINITY), max: Vec3::repeat(f64::INFINITY) }
    }

    pub fn empty() -> Self {
        Self { min: Vec3::repeat(f64::INFINITY), max: Vec3::repeat(f64::NEG_INFINITY) }
    }

    pub fn is_finite(&self) -> bool {
        self.min.iter().chain(self.max.iter()).all(|c| c.is_finite())
    }

    pub fn union(&self, o: &Aabb) -> Aabb {
        Aabb { min: self.min.inf(&o.min), max: self.max.sup(&o.max) }
    }

    pub fn intersection(&self, o: &Aabb) -> Aabb {
        Aabb { min: self.min.sup(&o.min), max: self.max.inf(&o.max) }
    }

    pub fn diagonal(&self) -> f64 {
        (self.max - self.min).norm()
    }

    pub fn contains(&self, p: Vec3) -> bool {
        (0..3).all(|i| p[i] >= self.min[i] && p[i] <= self.max[i])
    }

    /// Parametric overlap `[t0, t1]` of a ray's line with the box, if any.
    pub fn clip(&self, ray: &Ray3) -> Option<(f64, f64)> {
        let (o, d) = (ray.origin(), ray.dir());
        let (mut t0, mut t1) = (f64::NEG_INFINITY, f64::INFINITY);
        for i in 0..3 {
            if d[i] == 0.0 {
                if o[i] < self.min[i] || o[i] > self.max[i] {
                    return None;
                }
                continue;
            }
            let inv = 1.0 / d[i];
            let (mut a, mut b) = ((self.min[i] - o[i]) * inv, (self.max[i] - o[i]) * inv);
            if a > b {
                std::mem::swap(&mut a, &mut b);
            }
            t0 = t0.max(a);
            t1 = t1.min(b);
        }
        (t0 <= t1).then_some((t0, t1))
    }
}

/// A point where a ray's line crosses the boundary of a solid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Boundary {
    pub t: f64,
    /// Outward unit normal of the solid at the crossing (zero at infinity).
    pub normal: Vec3,
}

impl Boundary {
    fn at_infinity(t: f64) -> Self {
        Self { t, normal: Vec3::zeros() }
    }
}

/// A maximal parameter interval of a line lying inside a solid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Span {
    pub enter: Boundary,
    pub exit: Boundary,
}

pub type Spans = Vec<Span>;

fn full_line() -> Spans {
    vec![Span { enter: Boundary::at_infinity(f64::NEG_INFINITY), exit: Boundary::at_infinity(f64::INFINITY) }]
}

/// Real roots of `a t^2 + b t + c = 0` in ascending order.
fn solve_quadratic(a: f64, b: f64, c: f64) -> Option<(f64, f64)> {
    if a == 0.0 {
        if b == 0.0 {
            return None;
        }
        let t = -c / b;
        return Some((t, t));
    }
    let disc = b * b - 4.0 * a * c;
    if disc < 0.0 {
        return None;
    }
    let sq = disc.sqrt();
    let q = -0.5 * (b + b.signum() * sq);
    if q == 0.0 {
        return Some((0.0, 0.0));
    }
    let (r0, r1) = (q / a, c / q);
    Some(if r0 <= r1 { (r0, r1) } else { (r1, r0) })
}

/// Intersection of two single intervals (convex primitives).
fn clip_span(a: Option<Span>, b: Option<Span>) -> Option<Span> {
    let (a, b) = (a?, b?);
    let enter = if a.enter.t >= b.enter.t { a.enter } else { b.enter };
    let exit = if a.exit.t <= b.exit.t { a.exit } else { b.exit };
    (enter.t < exit.t).then_some(Span { enter, exit })
}

/// Slab `lo <= (p - origin).axis <= hi` along a ray.
fn slab_span(ray: &Ray3, origin: Vec3, axis: Vec3, lo: f64, hi: f64) -> Option<Span> {
    let w = (ray.origin() - origin).dot(&axis);
    let da = ray.dir().dot(&axis);
    if da.abs() < 1e-15 {
        return (w >= lo && w <= hi).then(|| full_line()[0]);
    }
    let t_lo = (lo - w) / da;
    let t_hi = (hi - w) / da;
    let (lo_b, hi_b) = (Boundary { t: t_lo, normal: -axis }, Boundary { t: t_hi, normal: axis });
    Some(if da > 0.0 { Span { enter: lo_b, exit: hi_b } } else { Span { enter: hi_b, exit: lo_b } })
}

/// Boolean combination of two sorted, disjoint interval lists.
fn combine(a: &[Span], b: &[Span], op: impl Fn(bool, bool) -> bool) -> Spans {
    // (t, operand, entering, normal)
    let mut events: Vec<(f64, usize, bool, Vec3)> = Vec::with_capacity(2 * (a.len() + b.len()));
    let mut state = [false, false];
    for (k, list) in [a, b].iter().enumerate() {
        for s in list.iter() {
            if s.enter.t == f64::NEG_INFINITY {
                state[k] = true;
            } else {
                events.push((s.enter.t, k, true, s.enter.normal));
            }
            if s.exit.t != f64::INFINITY {
                events.push((s.exit.t, k, false, s.exit.normal));
            }
        }
    }
    events.sort_by(|x, y| x.0.total_cmp(&y.0));
    let mut out = Vec::new();
    let mut inside = op(state[0], state[1]);
    let mut open: Option<Boundary> = inside.then(|| Boundary::at_infinity(f64::NEG_INFINITY));
    let mut i = 0;
    while i < events.len() {
        let t = events[i].0;
        let mut j = i;
        let mut normal = events[i].3;
        while j < events.len() && events[j].0 == t {
            let (_, k, entering, n) = events[j];
            if state[k] != entering {
                normal = n;
            }
            state[k] = entering;
            j += 1;
        }
        let now = op(state[0], state[1]);
        if now != inside {
            let bd = Boundary { t, normal };
            if now {
                open = Some(bd);
            } else if let Some(enter) = open.take() {
                if enter.t < t {
                    out.push(Span { enter, exit: bd });
                }
            }
            inside = now;
        }
        i = j;
    }
    if let Some(enter) = open {
        out.push(Span { enter, exit: Boundary::at_infinity(f64::INFINITY) });
    }
    out
}

fn complement(a: &[Span]) -> Spans {
    let flip = |b: Boundary| Boundary { t: b.t, normal: -b.normal };
    let mut out = Vec::with_capacity(a.len() + 1);
    let mut cursor = Boundary::at_infinity(f64::NEG_INFINITY);
    for s in a {
        if s.enter.t > cursor.t {
            out.push(Span { enter: cursor, exit: flip(s.enter) });
        }
        cursor = flip(s.exit);
    }
    if cursor.t < f64::INFINITY {
        out.push(Span { enter: cursor, exit: Boundary::at_infinity(f64::INFINITY) });
    }
    out
}

impl Shape {
    pub fn sphere(center: Vec3, radius: f64) -> Self {
        Shape::Sphere { center, radius }
    }

    pub fn ellipsoid(center: Vec3, radii: Vec3) -> Self {
        Shape::Ellipsoid { center, radii, axes: identity_axes() }
    }

    pub fn cylinder(base: Vec3, axis: Vec3, radius: f64, height: f64) -> Self {
        Shape::Cylinder { base, axis: axis.normalize(), radius, height }
    }

    pub fn cone(apex: Vec3, axis: Vec3, height: f64, radius: f64) -> Self {
        Shape::Cone { apex, axis: axis.normalize(), height, radius }
    }

    /// Half-space `normal . p <= offset`, with `normal` normalized.
    pub fn half_space(normal: Vec3, offset: f64) -> Self {
        let n = normal.norm();
        Shape::HalfSpace { normal: normal / n, offset: offset / n }
    }

    /// Axis-aligned box as an intersection of six half-spaces.
    pub fn cuboid(min: Vec3, max: Vec3) -> Self {
        let mut children = Vec::with_capacity(6);
        for i in 0..3 {
            let e = Vec3::ith(i, 1.0);
            children.push(Shape::half_space(e, max[i]));
            children.push(Shape::half_space(-e, -min[i]));
        }
        Shape::Intersection { children }
    }

    pub fn union(children: Vec<Shape>) -> Self {
        Shape::Union { children }
    }

    pub fn intersection(children: Vec<Shape>) -> Self {
        Shape::Intersection { children }
    }

    pub fn difference(base: Shape, subtract: Shape) -> Self {
        Shape::Difference { base: Box::new(base), subtract: Box::new(subtract) }
    }

    /// Checks parameters and normalizes direction fields.
    pub fn validated(self) -> Result<Self> {
        let bad = |m: String| Err(Error::Config(m));
        let unit = |v: Vec3, what: &str| -> Result<Vec3> {
            let n = v.norm();
            if n.is_finite() && n > 1e-12 {
                Ok(v / n)
            } else {
                Err(Error::Config(format!("{what} must be a non-zero vector")))
            }
        };
        Ok(match self {
            Shape::Sphere { center, radius } => {
                if !(radius > 0.0) {
                    return bad(format!("sphere radius must be positive, got {radius}"));
                }
                Shape::Sphere { center, radius }
            }
            Shape::Ellipsoid { center, radii, axes } => {
                if !radii.iter().all(|r| *r > 0.0) {
                    return bad("ellipsoid radii must be positive".into());
                }
                let m = Matrix3::from_columns(&axes);
                if (m.transpose() * m - Matrix3::identity()).norm() > 1e-9 {
                    return bad("ellipsoid axes must be orthonormal".into());
                }
                Shape::Ellipsoid { center, radii, axes }
            }
            Shape::Cylinder { base, axis, radius, height } => {
                if !(radius > 0.0 && height > 0.0) {
                    return bad("cylinder radius and height must be positive".into());
                }
                Shape::Cylinder { base, axis: unit(axis, "cylinder axis")?, radius, height }
            }
            Shape::Cone { apex, axis, height, radius } => {
                if !(radius > 0.0 && height > 0.0) {
                    return bad("cone radius and height must be positive".into());
                }
                Shape::Cone { apex, axis: unit(axis, "cone axis")?, height, radius }
            }
            Shape::HalfSpace { normal, offset } => {
                let n = normal.norm();
                if !(n.is_finite() && n > 1e-12) {
                    return bad("half-space normal must be non-zero".into());
                }
                Shape::HalfSpace { normal: normal / n, offset: offset / n }
            }
            Shape::Union { children } | Shape::Intersection { children } if children.is_empty() => {
                return bad("CSG node needs at least one child".into());
            }
            Shape::Union { children } => {
                Shape::Union { children: children.into_iter().map(Shape::validated).collect::<Result<_>>()? }
            }
            Shape::Intersection { children } => {
                Shape::Intersection { children: children.into_iter().map(Shape::validated).collect::<Result<_>>()? }
            }
            Shape::Difference { base, subtract } => Shape::Difference {
                base: Box::new(base.validated()?),
                subtract: Box::new(subtract.validated()?),
            },
        })
    }

    /// Applies `p -> rotation * p + translation` to the shape.
    pub fn transformed(&self, rotation: &Rotation3<f64>, translation: Vec3) -> Shape {
        let pt = |p: &Vec3| rotation * p + translation;
        let dir = |d: &Vec3| rotation * d;
        match self {
            Shape::Sphere { center, radius } => Shape::Sphere { center: pt(center), radius: *radius },
            Shape::Ellipsoid { center, radii, axes } => Shape::Ellipsoid {
                center: pt(center),
                radii: *radii,
                axes: [dir(&axes[0]), dir(&axes[1]), dir(&axes[2])],
            },
            Shape::Cylinder { base, axis, radius, height } => {
                Shape::Cylinder { base: pt(base), axis: dir(axis), radius: *radius, height: *height }
            }
            Shape::Cone { apex, axis, height, radius } => {
                Shape::Cone { apex: pt(apex), axis: dir(axis), height: *height, radius: *radius }
            }
            Shape::HalfSpace { normal, offset } => {
                let n = dir(normal);
                Shape::HalfSpace { normal: n, offset: offset + n.dot(&translation) }
            }
            Shape::Union { children } => {
                Shape::Union { children: children.iter().map(|c| c.transformed(rotation, translation)).collect() }
            }
            Shape::Intersection { children } => Shape::Intersection {
                children: children.iter().map(|c| c.transformed(rotation, translation)).collect(),
            },
            Shape::Difference { base, subtract } => Shape::Difference {
                base: Box::new(base.transformed(rotation, translation)),
                subtract: Box::new(subtract.transformed(rotation, translation)),
            },
        }
    }

    /// Implicit value (negative inside) and its gradient.
    pub fn eval(&self, p: Vec3) -> (f64, Vec3) {
        match self {
            Shape::Sphere { center, radius } => {
                let w = p - center;
                let n = w.norm();
                let g = if n > 0.0 { w / n } else { Vec3::z() };
                (n - radius, g)
            }
            Shape::Ellipsoid { center, radii, axes } => {
                let w = p - center;
                let local = Vec3::new(w.dot(&axes[0]), w.dot(&axes[1]), w.dot(&axes[2]));
                let q = local.component_div(radii);
                let qn = q.norm();
                let rmin = radii.min();
                if qn == 0.0 {
                    return (-rmin, Vec3::z());
                }
                let gl = (q / qn).component_div(radii) * rmin;
                let g = axes[0] * gl.x + axes[1] * gl.y + axes[2] * gl.z;
                ((qn - 1.0) * rmin, g)
            }
            Shape::Cylinder { base, axis, radius, height } => {
                let w = p - base;
                let t = w.dot(axis);
                let radial = w - axis * t;
                let rho = radial.norm();
                let er = if rho > 0.0 { radial / rho } else { crate::geom::any_perpendicular(*axis) };
                max_branch(&[(rho - radius, er), (-t, -axis), (t - height, *axis)])
            }
            Shape::Cone { apex, axis, height, radius } => {
                let w = p - apex;
                let t = w.dot(axis);
                let radial = w - axis * t;
                let rho = radial.norm();
                let alpha = (radius / height).atan();
                let (sa, ca) = alpha.sin_cos();
                let er = if rho > 0.0 { radial / rho } else { crate::geom::any_perpendicular(*axis) };
                max_branch(&[(rho * ca - t * sa, er * ca - axis * sa), (t - height, *axis)])
            }
            Shape::HalfSpace { normal, offset } => (normal.dot(&p) - offset, *normal),
            Shape::Union { children } => {
                children.iter().map(|c| c.eval(p)).min_by(|a, b| a.0.total_cmp(&b.0)).unwrap_or((f64::INFINITY, Vec3::z()))
            }
            Shape::Intersection { children } => children
                .iter()
                .map(|c| c.eval(p))
                .max_by(|a, b| a.0.total_cmp(&b.0))
                .unwrap_or((f64::NEG_INFINITY, Vec3::z())),
            Shape::Difference { base, subtract } => {
                let a = base.eval(p);
                let (fb, gb) = subtract.eval(p);
                if a.0 >= -fb {
                    a
                } else {
                    (-fb, -gb)
                }
            }
        }
    }

    pub fn value(&self, p: Vec3) -> f64 {
        self.eval(p).0
    }

    pub fn gradient(&self, p: Vec3) -> Vec3 {
        self.eval(p).1
    }

    pub fn contains(&self, p: Vec3) -> bool {
        self.value(p) < 0.0
    }

    pub fn bounds(&self) -> Aabb {
        match self {
            Shape::Sphere { center, radius } => Aabb { min: center - Vec3::repeat(*radius), max: center + Vec3::repeat(*radius) },
            Shape::Ellipsoid { center, radii, axes } => {
                let ext = Vec3::from_fn(|i, _| {
                    (0..3).map(|j| (axes[j][i] * radii[j]).powi(2)).sum::<f64>().sqrt()
                });
                Aabb { min: center - ext, max: center + ext }
            }
            Shape::Cylinder { base, axis, radius, height } => {
                let top = base + axis * *height;
                let ext = Vec3::from_fn(|i, _| radius * (1.0 - axis[i] * axis[i]).max(0.0).sqrt());
                Aabb { min: base.inf(&top) - ext, max: base.sup(&top) + ext }
            }
            Shape::Cone { apex, axis, height, radius } => {
                let bc = apex + axis * *height;
                let ext = Vec3::from_fn(|i, _| radius * (1.0 - axis[i] * axis[i]).max(0.0).sqrt());
                Aabb { min: (bc - ext).inf(apex), max: (bc + ext).sup(apex) }
            }
            Shape::HalfSpace { normal, offset } => {
                let mut b = Aabb::infinite();
                for i in 0..3 {
                    let others = (0..3).filter(|&j| j != i).all(|j| normal[j] == 0.0);
                    if others && normal[i] != 0.0 {
                        let bound = offset / normal[i];
                        if normal[i] > 0.0 {
                            b.max[i] = bound;
                        } else {
                            b.min[i] = bound;
                        }
                    }
                }
                b
            }
            Shape::Union { children } => children.iter().fold(Aabb::empty(), |acc, c| acc.union(&c.bounds())),
            Shape::Intersection { children } => {
                children.iter().fold(Aabb::infinite(), |acc, c| acc.intersection(&c.bounds()))
            }
            Shape::Difference { base, .. } => base.bounds(),
        }
    }

    /// Parameter intervals of the ray's full line lying inside the solid.
    pub fn spans(&self, ray: &Ray3) -> Spans {
        match self {
            Shape::Sphere { center, radius } => {
                let w = ray.origin() - center;
                let d = ray.dir();
                let span = solve_quadratic(1.0, 2.0 * w.dot(&d), w.norm_squared() - radius * radius)
                    .filter(|(t0, t1)| t0 < t1)
                    .map(|(t0, t1)| Span {
                        enter: Boundary { t: t0, normal: (ray.at(t0) - center).normalize() },
                        exit: Boundary { t: t1, normal: (ray.at(t1) - center).normalize() },
                    });
                span.into_iter().collect()
            }
            Shape::Ellipsoid { center, radii, axes } => {
                let w = ray.origin() - center;
                let d = ray.dir();
                let to_local = |v: Vec3| Vec3::new(v.dot(&axes[0]), v.dot(&axes[1]), v.dot(&axes[2])).component_div(radii);
                let (ol, dl) = (to_local(w), to_local(d));
                let normal_at = |t: f64| -> Vec3 {
                    let q = to_local(ray.at(t) - center).component_div(radii);
                    (axes[0] * q.x + axes[1] * q.y + axes[2] * q.z).normalize()
                };
                solve_quadratic(dl.norm_squared(), 2.0 * ol.dot(&dl), ol.norm_squared() - 1.0)
                    .filter(|(t0, t1)| t0 < t1)
                    .map(|(t0, t1)| Span {
                        enter: Boundary { t: t0, normal: normal_at(t0) },
                        exit: Boundary { t: t1, normal: normal_at(t1) },
                    })
                    .into_iter()
                    .collect()
            }
            Shape::Cylinder { base, axis, radius, height } => {
                let w = ray.origin() - base;
                let d = ray.dir();
                let dp = d - axis * d.dot(axis);
                let wp = w - axis * w.dot(axis);
                let a = dp.norm_squared();
                let tube = if a < 1e-24 {
                    (wp.norm_squared() <= radius * radius).then(|| full_line()[0])
                } else {
                    let radial = |t: f64| {
                        let q = ray.at(t) - base;
                        (q - axis * q.dot(axis)).normalize()
                    };
                    solve_quadratic(a, 2.0 * wp.dot(&dp), wp.norm_squared() - radius * radius)
                        .filter(|(t0, t1)| t0 < t1)
                        .map(|(t0, t1)| Span {
                            enter: Boundary { t: t0, normal: radial(t0) },
                            exit: Boundary { t: t1, normal: radial(t1) },
                        })
                };
                clip_span(tube, slab_span(ray, *base, *axis, 0.0, *height)).into_iter().collect()
            }
            Shape::Cone { apex, axis, height, radius } => {
                let k2 = 1.0 + (radius / height).powi(2);
                let w = ray.origin() - apex;
                let d = ray.dir();
                let (wa, da) = (w.dot(axis), d.dot(axis));
                let a = 1.0 - k2 * da * da;
                let b = 2.0 * (w.dot(&d) - k2 * wa * da);
                let c = w.norm_squared() - k2 * wa * wa;
                let side_normal = |t: f64| {
                    let q = ray.at(t) - apex;
                    let g = q - axis * (k2 * q.dot(axis));
                    let n = g.norm();
                    if n > 0.0 {
                        g / n
                    } else {
                        -*axis
                    }
                };
                let double_cone: Spans = if a.abs() < 1e-14 {
                    if b.abs() < 1e-300 {
                        if c <= 0.0 {
                            full_line()
                        } else {
                            vec![]
                        }
                    } else {
                        let t = -c / b;
                        let bd = Boundary { t, normal: side_normal(t) };
                        if b > 0.0 {
                            vec![Span { enter: Boundary::at_infinity(f64::NEG_INFINITY), exit: bd }]
                        } else {
                            vec![Span { enter: bd, exit: Boundary::at_infinity(f64::INFINITY) }]
                        }
                    }
                } else {
                    match solve_quadratic(a, b, c) {
                        None => {
                            if a > 0.0 {
                                vec![]
                            } else {
                                full_line()
                            }
                        }
                        Some((t0, t1)) => {
                            let b0 = Boundary { t: t0, normal: side_normal(t0) };
                            let b1 = Boundary { t: t1, normal: side_normal(t1) };
                            if a > 0.0 {
                                if t0 < t1 {
                                    vec![Span { enter: b0, exit: b1 }]
                                } else {
                                    vec![]
                                }
                            } else {
                                vec![
                                    Span { enter: Boundary::at_infinity(f64::NEG_INFINITY), exit: b0 },
                                    Span { enter: b1, exit: Boundary::at_infinity(f64::INFINITY) },
                                ]
                            }
                        }
                    }
                };
                let slab: Spans = slab_span(ray, *apex, *axis, 0.0, *height).into_iter().collect();
                let mut spans = combine(&double_cone, &slab, |x, y| x && y);
                // the finite cone is convex, so pieces can only come from touching the apex
                if spans.len() > 1 {
                    let first = spans[0].enter;
                    let last = spans[spans.len() - 1].exit;
                    spans = vec![Span { enter: first, exit: last }];
                }
                spans
            }
            Shape::HalfSpace { normal, offset } => {
                let nd = normal.dot(&ray.dir());
                let no = normal.dot(&ray.origin());
                if nd.abs() < 1e-15 {
                    return if no <= *offset { full_line() } else { vec![] };
                }
                let bd = Boundary { t: (offset - no) / nd, normal: *normal };
                if nd > 0.0 {
                    vec![Span { enter: Boundary::at_infinity(f64::NEG_INFINITY), exit: bd }]
                } else {
                    vec![Span { enter: bd, exit: Boundary::at_infinity(f64::INFINITY) }]
                }
            }
            Shape::Union { children } => {
                let mut it = children.iter();
                let mut acc = it.next().map(|c| c.spans(ray)).unwrap_or_default();
                for c in it {
                    acc = combine(&acc, &c.spans(ray), |x, y| x || y);
                }
                acc
            }
            Shape::Intersection { children } => {
                let mut it = children.iter();
                let mut acc = it.next().map(|c| c.spans(ray)).unwrap_or_default();
                for c in it {
                    if acc.is_empty() {
                        break;
                    }
                    acc = combine(&acc, &c.spans(ray), |x, y| x && y);
                }
                acc
            }
            Shape::Difference { base, subtract } => {
                let a = base.spans(ray);
                if a.is_empty() {
                    return a;
                }
                combine(&a, &complement(&subtract.spans(ray)), |x, y| x && y)
            }
        }
    }
}

fn max_branch(branches: &[(f64, Vec3)]) -> (f64, Vec3) {
    let mut best = branches[0];
    for b in &branches[1..] {
        if b.0 > best.0 {
            best = *b;
        }
    }
    best
}

/// A refractive solid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ImplicitSolid {
    pub shape: Shape,
    pub index: MediumIndex,
    #[serde(skip)]
    bounds: Option<Aabb>,
}

/// Nearest boundary crossing along a ray.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SurfaceHit {
    pub t: f64,
    pub position: Vec3,
    /// Outward unit normal of the solid.
    pub normal: Vec3,
}

impl ImplicitSolid {
    pub fn new(shape: Shape, index: MediumIndex) -> Result<Self> {
        let shape = shape.validated()?;
        let bounds = shape.bounds();
        Ok(Self { shape, index, bounds: Some(bounds) })
    }

    pub fn bounds(&self) -> Aabb {
        self.bounds.unwrap_or_else(|| self.shape.bounds())
    }

    pub fn value(&self, p: Vec3) -> f64 {
        self.shape.value(p)
    }

    pub fn gradient(&self, p: Vec3) -> Vec3 {
        self.shape.gradient(p)
    }

    pub fn contains(&self, p: Vec3) -> bool {
        self.shape.contains(p)
    }

    /// Outward unit normal from the implicit gradient.
    pub fn normal(&self, p: Vec3) -> Vec3 {
        self.gradient(p).normalize()
    }

    /// Nearest boundary crossing beyond [`MIN_HIT_DISTANCE`].
    pub fn intersect(&self, ray: &Ray3) -> Option<SurfaceHit> {
        let (_, t1) = self.bounds().clip(ray)?;
        if t1 < MIN_HIT_DISTANCE {
            return None;
        }
        for s in self.shape.spans(ray) {
            for b in [s.enter, s.exit] {
                if b.t > MIN_HIT_DISTANCE && b.t.is_finite() {
                    return Some(SurfaceHit { t: b.t, position: ray.at(b.t), normal: b.normal });
                }
            }
        }
        None
    }

    /// Projects `p` onto the zero set by Newton steps along the gradient.
    pub fn project(&self, p: Vec3) -> Vec3 {
        let mut q = p;
        for _ in 0..32 {
            let (f, g) = self.shape.eval(q);
            let g2 = g.norm_squared();
            if g2 == 0.0 {
                break;
            }
            let step = g * (f / g2);
            q -= step;
            if step.norm() < 1e-14 {
                break;
            }
        }
        q
    }

    /// Re-attaches the cached bounds after deserialization.
    pub(crate) fn refresh(mut self) -> Result<Self> {
        self.shape = self.shape.validated()?;
        self.bounds = Some(self.shape.bounds());
        Ok(self)
    }
}

/// Generic implicit intersection: uniform sign-change scan inside the bounding
/// box followed by bisection.
pub fn intersect_scan(shape: &Shape, ray: &Ray3) -> Option<SurfaceHit> {
    let bounds = shape.bounds();
    let (t0, t1) = if bounds.is_finite() { bounds.clip(ray)? } else { (0.0, 1e3) };
    let t0 = t0.max(MIN_HIT_DISTANCE);
    if t1 <= t0 {
        return None;
    }
    let step = (t1 - t0) / SCAN_SAMPLES as f64;
    let mut prev_t = t0;
    let mut prev_f = shape.value(ray.at(t0));
    for i in 1..=SCAN_SAMPLES {
        let t = t0 + step * i as f64;
        let f = shape.value(ray.at(t));
        if (prev_f < 0.0) != (f < 0.0) {
            let (mut lo, mut hi, flo) = (prev_t, t, prev_f);
            while hi - lo > BISECTION_TOLERANCE {
                let mid = 0.5 * (lo + hi);
                if (shape.value(ray.at(mid)) < 0.0) == (flo < 0.0) {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            let t = 0.5 * (lo + hi);
            let p = ray.at(t);
            return Some(SurfaceHit { t, position: p, normal: shape.gradient(p).normalize() });
        }
        prev_t = t;
        prev_f = f;
    }
    None
}
