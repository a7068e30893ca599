use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "lightpath", version, about = "Transparent surface reconstruction by light-path triangulation")]
pub struct Cli {
    /// Run configuration (TOML); command-line flags override its values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Worker threads (default: all cores). Outputs do not depend on it.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Log progress to stderr (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Render the four correspondence maps of a scene, plus a manifest.
    Simulate(SimulateArgs),
    /// Triangulate entry points and recover normals from simulated maps.
    Reconstruct(ReconstructArgs),
    /// Compare a point cloud with an analytic scene or a fitted primitive.
    Evaluate(EvaluateArgs),
    /// Monte-Carlo noise sweep of one experiment.
    Sweep(SweepArgs),
    /// Integrate recovered normals into a surface mesh.
    Mesh(MeshArgs),
}

#[derive(Debug, Clone, Args)]
pub struct SceneArgs {
    /// Built-in scene, as `name` or `name(param)`.
    #[arg(long)]
    pub scene: Option<String>,
    /// Scene description file (TOML) instead of a built-in scene.
    #[arg(long)]
    pub scene_file: Option<PathBuf>,
    /// Scene parameter (thin-cone padding h, shell offset s, plate thickness,
    /// plano-curved offset d or hemisphere tilt).
    #[arg(long, visible_aliases = ["h", "s", "d", "tilt", "thickness"])]
    pub param: Option<f64>,
    /// Image width and height in pixels.
    #[arg(long)]
    pub res: Option<u32>,
    #[arg(long)]
    pub pattern_z0: Option<f64>,
    #[arg(long)]
    pub pattern_z1: Option<f64>,
    #[arg(long)]
    pub liquid_index: Option<f64>,
    #[arg(long)]
    pub object_index: Option<f64>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub scene: SceneArgs,
    /// Thin-object protocol (views through the object and direct); drops any liquid.
    #[arg(long)]
    pub thin: bool,
    /// Gaussian noise (pattern units) added to the written maps.
    #[arg(long)]
    pub noise: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Also write sweeping-stripe image stacks.
    #[arg(long)]
    pub stacks: bool,
    /// Stripe width in pattern units (default one display texel).
    #[arg(long)]
    pub stripe_width: Option<f64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ReconstructArgs {
    /// Directory holding the simulation manifest.
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Single-refraction method (overrides the manifest).
    #[arg(long)]
    pub thin: bool,
    /// Do not use refractive indices; no normals are recovered.
    #[arg(long)]
    pub unknown_media: bool,
    /// Smallest accepted angle between the two paths, in degrees.
    #[arg(long)]
    pub min_angle: Option<f64>,
    /// Largest accepted gap between the two paths.
    #[arg(long)]
    pub max_gap: Option<f64>,
    /// Extra Gaussian noise added to the loaded maps.
    #[arg(long)]
    pub noise: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Decode the maps from the stripe stacks instead of reading them.
    #[arg(long)]
    pub stacks: bool,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Point cloud written by `reconstruct`.
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// `analytic` (needs a scene) or a primitive to fit: plane, sphere, cylinder.
    #[arg(long, default_value = "analytic")]
    pub reference: String,
    #[command(flatten)]
    pub scene: SceneArgs,
    /// RANSAC inlier threshold.
    #[arg(long)]
    pub threshold: Option<f64>,
    #[arg(long)]
    pub iterations: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Include points whose quality flags are set.
    #[arg(long)]
    pub all: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    /// fig6 (separation), fig6-medium, fig10 (thickness) or fig11 (shell).
    #[arg(long)]
    pub experiment: Option<String>,
    #[arg(long)]
    pub trials: Option<usize>,
    /// Noise levels, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub sigmas: Option<Vec<f64>>,
    /// Scene parameter grid, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub values: Option<Vec<f64>>,
    #[arg(long)]
    pub res: Option<u32>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub max_gap: Option<f64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct MeshArgs {
    /// Points CSV written by `reconstruct`.
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Simulation manifest holding the camera.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}
