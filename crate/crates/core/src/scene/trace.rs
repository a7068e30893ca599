use nalgebra::Vector2;

use super::shape::MIN_HIT_DISTANCE;
use super::{AcquisitionScene, View};
use crate::geom::{reflect, refract, Ray3, Refraction, Vec3};

/// Interface events (refractions plus reflections) allowed before a path is
/// declared lost.
pub const MAX_BOUNCES: usize = 16;

/// Offset used to sample the media on either side of an interface.
const MEDIUM_PROBE: f64 = 1e-7;
/// Solid and liquid crossings closer than this are treated as one interface.
const COINCIDENT: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Surface {
    Solid(usize),
    Liquid,
    Pattern,
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EscapeReason {
    /// Left the scene without meeting the pattern plane.
    Missed,
    /// Met the pattern plane outside its displayed area.
    OutsidePattern,
    BounceCap,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EventKind {
    Refraction,
    Tir,
    PatternHit,
    Escape(EscapeReason),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathEvent {
    pub kind: EventKind,
    pub surface: Surface,
    pub position: Vec3,
    /// Surface normal at the event, oriented against the incoming direction.
    pub normal: Vec3,
    pub incoming: Vec3,
    /// Direction leaving the event (absent for terminal events).
    pub outgoing: Option<Vec3>,
    pub n_in: f64,
    /// Index on the far side of the interface (a reflected ray stays in `n_in`).
    pub n_out: f64,
}

/// Events met by a ray traced backwards from the camera.
#[derive(Debug, Clone, PartialEq)]
pub struct LightPathTrace {
    pub origin: Vec3,
    pub events: Vec<PathEvent>,
    /// Pattern coordinate of the terminal hit.
    pub pattern: Option<Vector2<f64>>,
}

impl LightPathTrace {
    pub fn terminal(&self) -> Option<&PathEvent> {
        self.events.last()
    }

    pub fn hit_pattern(&self) -> bool {
        self.pattern.is_some()
    }

    pub fn escape_reason(&self) -> Option<EscapeReason> {
        match self.terminal()?.kind {
            EventKind::Escape(r) => Some(r),
            _ => None,
        }
    }

    pub fn crosses_liquid_surface(&self) -> bool {
        self.events.iter().any(|e| e.surface == Surface::Liquid)
    }

    pub fn tir_count(&self) -> usize {
        self.events.iter().filter(|e| e.kind == EventKind::Tir).count()
    }

    pub fn touches_solid(&self) -> bool {
        self.events.iter().any(|e| matches!(e.surface, Surface::Solid(_)))
    }

    /// The first entry point in light-propagation order: the last refraction
    /// at a solid before the pattern is reached.
    pub fn fep(&self) -> Option<&PathEvent> {
        self.fep_index().map(|i| &self.events[i])
    }

    /// Position of the first entry point in the event list; equivalently the
    /// number of events on the path after contact.
    pub fn fep_index(&self) -> Option<usize> {
        if !self.hit_pattern() {
            return None;
        }
        self.events
            .iter()
            .rposition(|e| e.kind == EventKind::Refraction && matches!(e.surface, Surface::Solid(_)))
    }

    /// Segment lengths between consecutive vertices starting at the origin.
    pub fn segment_lengths(&self) -> Vec<f64> {
        let mut prev = self.origin;
        self.events
            .iter()
            .map(|e| {
                let l = (e.position - prev).norm();
                prev = e.position;
                l
            })
            .collect()
    }
}

struct Candidate {
    t: f64,
    surface: Surface,
    normal: Vec3,
}

/// Traces a camera pixel through the scene toward pattern pose `pose`.
pub fn trace_camera_ray(scene: &AcquisitionScene, pixel: Vector2<f64>, pose: usize, view: View) -> LightPathTrace {
    let ray = scene.camera.pixel_ray(pixel);
    trace_ray(scene, ray, Some(pose), view)
}

/// Traces an arbitrary ray. With `pose = None` no pattern plane is present and
/// the path always ends in an escape.
pub fn trace_ray(scene: &AcquisitionScene, ray: Ray3, pose: Option<usize>, view: View) -> LightPathTrace {
    let pattern = pose.map(|k| &scene.patterns[k]);
    let liquid = if view == View::Liquid { scene.liquid.as_ref() } else { None };
    // an index-matched liquid surface is optically absent; skipping it keeps
    // the wet trace bit-identical to the dry one
    let liquid_plane = liquid.filter(|l| l.index != scene.ambient);
    let solids: &[_] = if view == View::Direct { &[] } else { &scene.solids };

    let mut trace = LightPathTrace { origin: ray.origin(), events: Vec::new(), pattern: None };
    let mut pos = ray.origin();
    let mut dir = ray.dir();
    let mut bounces = 0;
    loop {
        let r = Ray3::new(pos, dir).expect("unit direction");
        let mut best: Option<Candidate> = None;
        for (k, s) in solids.iter().enumerate() {
            if let Some(h) = s.intersect(&r) {
                if best.as_ref().is_none_or(|b| h.t < b.t) {
                    best = Some(Candidate { t: h.t, surface: Surface::Solid(k), normal: h.normal });
                }
            }
        }
        if let Some(l) = liquid_plane {
            let dn = dir.dot(&l.normal);
            if dn.abs() > 1e-15 {
                let t = (l.level - pos.dot(&l.normal)) / dn;
                let beats = best.as_ref().is_none_or(|b| t < b.t - COINCIDENT);
                if t > MIN_HIT_DISTANCE && beats {
                    best = Some(Candidate { t, surface: Surface::Liquid, normal: l.normal });
                }
            }
        }
        let n_here = scene.medium_at(pos + dir * MEDIUM_PROBE, view).value();
        if let Some(hit) = pattern.and_then(|p| p.intersect(&r, MIN_HIT_DISTANCE)) {
            if best.as_ref().is_none_or(|b| hit.t < b.t) {
                let p = pattern.unwrap();
                let inside = p.in_extent(hit.uv);
                trace.events.push(PathEvent {
                    kind: if inside { EventKind::PatternHit } else { EventKind::Escape(EscapeReason::OutsidePattern) },
                    surface: Surface::Pattern,
                    position: hit.position,
                    normal: if dir.dot(&p.normal()) > 0.0 { -p.normal() } else { p.normal() },
                    incoming: dir,
                    outgoing: None,
                    n_in: n_here,
                    n_out: n_here,
                });
                if inside {
                    trace.pattern = Some(hit.uv);
                }
                return trace;
            }
        }
        let Some(c) = best else {
            trace.events.push(escape(pos + dir, dir, EscapeReason::Missed, n_here));
            return trace;
        };
        let p = r.at(c.t);
        // orient the normal against the travel direction
        let normal = if c.normal.dot(&dir) > 0.0 { -c.normal } else { c.normal };
        let n1 = scene.medium_at(p + normal * MEDIUM_PROBE, view);
        let n2 = scene.medium_at(p - normal * MEDIUM_PROBE, view);
        pos = p;
        if n1 == n2 {
            continue;
        }
        if bounces == MAX_BOUNCES {
            trace.events.push(escape(p, dir, EscapeReason::BounceCap, n1.value()));
            return trace;
        }
        bounces += 1;
        let (kind, out) = match refract(dir, normal, n1, n2).expect("unit vectors") {
            Refraction::Transmitted(t) => (EventKind::Refraction, t),
            Refraction::TotalInternalReflection => (EventKind::Tir, reflect(dir, normal).expect("unit vectors")),
        };
        trace.events.push(PathEvent {
            kind,
            surface: c.surface,
            position: p,
            normal,
            incoming: dir,
            outgoing: Some(out),
            n_in: n1.value(),
            n_out: n2.value(),
        });
        dir = out;
    }
}

fn escape(position: Vec3, dir: Vec3, reason: EscapeReason, n: f64) -> PathEvent {
    PathEvent {
        kind: EventKind::Escape(reason),
        surface: Surface::None,
        position,
        normal: -dir,
        incoming: dir,
        outgoing: None,
        n_in: n,
        n_out: n,
    }
}
