//! On-disk formats shared by the pipeline stages.

mod corr;
mod manifest;
mod pfm;
mod ply;
mod stack;

pub use corr::{read_corr, read_corr_file, write_corr, write_corr_file, CORR_MAGIC, CORR_VERSION};
pub use manifest::{AcquisitionManifest, Calibration, MapEntry, StackEntry, MANIFEST_VERSION};
pub use pfm::{read_pfm, write_pfm};
pub use ply::{read_points_ply, write_mesh_obj, write_mesh_ply, write_points_csv, write_points_ply, PlyVertex, PointRow};
pub use stack::{read_stack, write_stack, StackManifest};
