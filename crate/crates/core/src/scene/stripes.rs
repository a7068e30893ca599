use serde::{Deserialize, Serialize};

use super::CorrespondenceMap;
use crate::error::{Error, Result};

/// Display/camera blur as a fraction of the stripe width.
pub const DEFAULT_PSF_SIGMA: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StripeAxis {
    /// Stripes of constant u swept along u.
    U,
    V,
}

/// Frames of a sweeping-stripe acquisition. `frames[f][k]` is the intensity in
/// `[0, 1]` of pixel `k` (row-major) when the stripe is centered at
/// `positions[f]`.
#[derive(Debug, Clone, PartialEq)]
pub struct StripeStack {
    pub axis: StripeAxis,
    pub width: u32,
    pub height: u32,
    pub stripe_width: f64,
    pub positions: Vec<f64>,
    pub frames: Vec<Vec<f32>>,
}

impl StripeStack {
    /// Intensities of pixel `k` across all frames.
    pub fn profile(&self, k: usize) -> Vec<f64> {
        self.frames.iter().map(|f| f[k] as f64).collect()
    }
}

/// Box stripe of width `w` blurred by a Gaussian of standard deviation
/// `sigma * w`, evaluated at offset `x` from the stripe center and scaled to a
/// peak of one.
pub fn stripe_profile(x: f64, w: f64, sigma: f64) -> f64 {
    let box_blur = |x: f64| {
        if sigma == 0.0 {
            return if x.abs() <= w / 2.0 { 1.0 } else { 0.0 };
        }
        let s = sigma * w * std::f64::consts::SQRT_2;
        0.5 * (libm::erf((x + w / 2.0) / s) - libm::erf((x - w / 2.0) / s))
    };
    box_blur(x) / box_blur(0.0)
}

/// Renders the frames seen by each pixel while a stripe of width
/// `stripe_width` sweeps across `range` in increments of `step`. Intensities
/// are the blurred stripe evaluated at each valid pixel's pattern coordinate;
/// invalid pixels stay dark.
pub fn synthesize_stripe_stack(
    map: &CorrespondenceMap,
    axis: StripeAxis,
    stripe_width: f64,
    step: f64,
    range: (f64, f64),
    psf_sigma: f64,
) -> Result<StripeStack> {
    if !(step > 0.0) {
        return Err(Error::Config(format!("stripe step must be positive, got {step}")));
    }
    if !(stripe_width > 0.0) {
        return Err(Error::Config(format!("stripe width must be positive, got {stripe_width}")));
    }
    if !(psf_sigma >= 0.0) {
        return Err(Error::Config(format!("blur must be non-negative, got {psf_sigma}")));
    }
    if !(range.1 >= range.0) {
        return Err(Error::Config("stripe range is empty".into()));
    }
    let count = ((range.1 - range.0) / step + 1e-9).floor() as usize + 1;
    let positions: Vec<f64> = (0..count).map(|f| range.0 + step * f as f64).collect();
    // the blurred profile is negligible beyond a few widths
    let support = stripe_width * (0.5 + 8.0 * psf_sigma);
    let mut frames = vec![vec![0f32; map.len()]; count];
    for k in 0..map.len() {
        let Some(uv) = map.get(k) else { continue };
        let c = match axis {
            StripeAxis::U => uv.x,
            StripeAxis::V => uv.y,
        };
        let lo = (((c - support - range.0) / step).floor().max(0.0)) as usize;
        let hi = (((c + support - range.0) / step).ceil().max(0.0) as usize).min(count - 1);
        for (f, frame) in frames.iter_mut().enumerate().take(hi + 1).skip(lo) {
            frame[k] = stripe_profile(c - positions[f], stripe_width, psf_sigma) as f32;
        }
    }
    Ok(StripeStack { axis, width: map.width, height: map.height, stripe_width, positions, frames })
}
