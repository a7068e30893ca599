//! Simulation and reconstruction of transparent objects from altered incident
//! light paths.
//!
//! The forward side ([`scene`]) ray-traces camera pixels through refractive
//! solids to a reference pattern at two poses and in two ambient media. The
//! inverse side rebuilds each pixel's path before contact from its pattern
//! correspondences, triangulates the first entry point on the surface and,
//! when the media indices are known, recovers the surface normal
//! ([`recon`]). Supporting modules decode sweeping-stripe image stacks
//! ([`stripe`]), integrate normal fields ([`normalint`]) and evaluate
//! reconstructions ([`eval`]).

pub mod error;
pub mod eval;
pub mod geom;
pub mod io;
pub mod normalint;
pub mod recon;
pub mod scene;
pub mod stripe;

pub use error::{Error, Result};
pub use geom::{MediumIndex, Ray3, Refraction, TriangulationResult, Vec3};
