//! Error metrics, robust primitive fitting and noise sweeps.

mod metrics;
mod ransac;
pub mod sweep;

pub use metrics::{angle_deg, median, normal_errors, position_errors, ErrorSummary, Reference};
pub use ransac::{fit_cylinder, fit_plane, fit_sphere, ransac_fit, FitResult, Primitive, PrimitiveKind, RansacOptions};
