//! Sub-pixel decoding of sweeping-stripe image stacks.
//!
//! Each pixel records one intensity per stripe position. The stripe position
//! seen by the pixel is the vertex of a least-squares parabola fitted around
//! the brightest sample.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::scene::{CorrespondenceMap, StripeStack};

pub const DEFAULT_WINDOW: usize = 5;
/// A profile is accepted only if its peak exceeds this multiple of its median.
pub const DEFAULT_PROMINENCE: f64 = 3.0;

/// Intensity samples of one pixel against stripe position.
#[derive(Debug, Clone, PartialEq)]
pub struct IntensityProfile {
    positions: Vec<f64>,
    values: Vec<f64>,
}

impl IntensityProfile {
    pub fn new(positions: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if positions.len() != values.len() {
            return Err(Error::Contract("profile positions and values differ in length".into()));
        }
        if positions.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Contract("stripe positions must be strictly increasing".into()));
        }
        if values.iter().any(|v| !(*v >= 0.0)) {
            return Err(Error::Contract("intensities must be non-negative".into()));
        }
        Ok(Self { positions, values })
    }

    pub fn positions(&self) -> &[f64] {
        &self.positions
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    fn median(&self) -> f64 {
        let mut v = self.values.clone();
        let mid = v.len() / 2;
        let (_, m, _) = v.select_nth_unstable_by(mid, f64::total_cmp);
        *m
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Peak {
    pub position: f64,
    /// Several samples share the maximum; the first was used.
    pub ambiguous: bool,
    pub max: f64,
}

/// Locates the stripe position at which a profile peaks.
///
/// The window of `window` samples (odd, at least 3) around the first maximum
/// is shifted inward at the ends of the profile. The returned position is the
/// vertex of the least-squares parabola through the window, clamped to the
/// window's span, or the maximum's own position when the fit opens upward.
pub fn locate_peak(profile: &IntensityProfile, window: usize) -> Result<Peak> {
    let n = profile.len();
    if n < 3 {
        return Err(Error::Contract(format!("profile needs at least 3 samples, got {n}")));
    }
    if window < 3 || window.is_multiple_of(2) {
        return Err(Error::Contract(format!("window must be odd and >= 3, got {window}")));
    }
    let vals = profile.values();
    let pos = profile.positions();
    let mut arg = 0;
    for (k, v) in vals.iter().enumerate() {
        if *v > vals[arg] {
            arg = k;
        }
    }
    let max = vals[arg];
    if max <= 0.0 {
        return Err(Error::NoSignal);
    }
    let ambiguous = vals.iter().filter(|v| **v == max).count() > 1;
    let w = window.min(if n % 2 == 1 { n } else { n - 1 });
    let half = w / 2;
    let start = arg.saturating_sub(half).min(n - w);
    let idx = start..start + w;

    // fit in coordinates centered on the peak sample and scaled by the span,
    // which keeps the normal equations well conditioned and makes the result
    // independent of a global offset of the positions
    let x0 = pos[arg];
    let scale = (pos[start + w - 1] - pos[start]).max(f64::MIN_POSITIVE);
    let ymax = max;
    let mut s = [0.0f64; 5];
    let mut t = [0.0f64; 3];
    for k in idx.clone() {
        let x = (pos[k] - x0) / scale;
        let y = vals[k] / ymax;
        let mut xp = 1.0;
        for (p, sp) in s.iter_mut().enumerate() {
            *sp += xp;
            if p < 3 {
                t[p] += xp * y;
            }
            xp *= x;
        }
    }
    // normal equations for y = c0 + c1 x + c2 x^2
    let m = nalgebra::Matrix3::new(s[0], s[1], s[2], s[1], s[2], s[3], s[2], s[3], s[4]);
    let rhs = nalgebra::Vector3::new(t[0], t[1], t[2]);
    let c = m.lu().solve(&rhs);
    let position = match c {
        Some(c) if c[2] < 0.0 => {
            let v = x0 + scale * (-c[1] / (2.0 * c[2]));
            v.clamp(pos[start], pos[start + w - 1])
        }
        _ => x0,
    };
    Ok(Peak { position, ambiguous, max })
}

/// Options for [`decode_stack`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecodeOptions {
    pub window: usize,
    pub prominence: f64,
}

impl Default for DecodeOptions {
    fn default() -> Self {
        Self { window: DEFAULT_WINDOW, prominence: DEFAULT_PROMINENCE }
    }
}

/// Decoded map plus the pixels whose peak was ambiguous on either axis.
#[derive(Debug, Clone)]
pub struct Decoded {
    pub map: CorrespondenceMap,
    pub low_confidence: Vec<bool>,
}

/// Decodes the pattern coordinate of every pixel from a u-stripe and a
/// v-stripe stack. Pixels without signal or with a peak less prominent than
/// `prominence` times the profile median are invalid.
pub fn decode_stack(u: &StripeStack, v: &StripeStack, options: DecodeOptions) -> Result<Decoded> {
    if u.width != v.width || u.height != v.height {
        return Err(Error::Config(format!(
            "stack dimensions differ: {}x{} vs {}x{}",
            u.width, u.height, v.width, v.height
        )));
    }
    for s in [u, v] {
        if s.frames.iter().any(|f| f.len() != s.width as usize * s.height as usize) {
            return Err(Error::Config("stack frame size does not match its dimensions".into()));
        }
        if s.positions.len() != s.frames.len() {
            return Err(Error::Config("stack has a different number of frames and positions".into()));
        }
    }
    let n = u.width as usize * u.height as usize;
    let decode_axis = |s: &StripeStack, k: usize| -> Option<Peak> {
        let profile = IntensityProfile::new(s.positions.clone(), s.profile(k)).ok()?;
        let peak = locate_peak(&profile, options.window).ok()?;
        (peak.max > options.prominence * profile.median()).then_some(peak)
    };
    let per_pixel: Vec<Option<(f64, f64, bool)>> = (0..n)
        .into_par_iter()
        .with_min_len(64)
        .map(|k| {
            let pu = decode_axis(u, k)?;
            let pv = decode_axis(v, k)?;
            Some((pu.position, pv.position, pu.ambiguous || pv.ambiguous))
        })
        .collect();
    let mut map = CorrespondenceMap::empty(u.width, u.height);
    let mut low_confidence = vec![false; n];
    for (k, r) in per_pixel.into_iter().enumerate() {
        if let Some((pu, pv, amb)) = r {
            map.valid[k] = true;
            map.uv[k] = nalgebra::Vector2::new(pu, pv);
            low_confidence[k] = amb;
        }
    }
    Ok(Decoded { map, low_confidence })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::{synthesize_stripe_stack, StripeAxis};
    use nalgebra::Vector2;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn grid(n: usize, x0: f64, dx: f64) -> Vec<f64> {
        (0..n).map(|k| x0 + dx * k as f64).collect()
    }

    #[test]
    fn exact_quadratic_vertex() {
        let xs = grid(21, 0.0, 0.5);
        let ys: Vec<f64> = xs.iter().map(|x| (50.0 - 2.0 * (x - 7.3) * (x - 7.3)).max(0.0)).collect();
        let p = locate_peak(&IntensityProfile::new(xs, ys).unwrap(), 5).unwrap();
        assert!((p.position - 7.3).abs() < 1e-9, "{}", p.position);
    }

    #[test]
    fn symmetric_triangle() {
        let xs = grid(11, -5.0, 1.0);
        let ys: Vec<f64> = xs.iter().map(|x| (3.0 - (x - 1.0f64).abs()).max(0.0)).collect();
        let p = locate_peak(&IntensityProfile::new(xs, ys).unwrap(), 5).unwrap();
        assert!((p.position - 1.0).abs() < 1e-12);
    }

    #[test]
    fn all_zero_is_no_signal() {
        let prof = IntensityProfile::new(grid(7, 0.0, 1.0), vec![0.0; 7]).unwrap();
        assert!(matches!(locate_peak(&prof, 5), Err(Error::NoSignal)));
    }

    #[test]
    fn ties_take_first_and_flag() {
        let prof = IntensityProfile::new(grid(9, 0.0, 1.0), vec![0.0, 0.0, 1.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0]).unwrap();
        let p = locate_peak(&prof, 3).unwrap();
        assert!(p.ambiguous);
        assert!((p.position - 2.0).abs() < 1e-12);
    }

    #[test]
    fn convex_window_falls_back_to_argmax() {
        // a dip around the maximum sample makes the fitted parabola open upward
        let prof = IntensityProfile::new(grid(5, 0.0, 1.0), vec![1.0, 0.1, 1.05, 0.1, 1.0]).unwrap();
        assert_eq!(locate_peak(&prof, 5).unwrap().position, 2.0);
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(IntensityProfile::new(vec![0.0, 0.0, 1.0], vec![1.0; 3]).is_err());
        let prof = IntensityProfile::new(grid(5, 0.0, 1.0), vec![0.0, 1.0, 2.0, 1.0, 0.0]).unwrap();
        assert!(locate_peak(&prof, 4).is_err());
        assert!(locate_peak(&IntensityProfile::new(vec![0.0, 1.0], vec![1.0, 2.0]).unwrap(), 3).is_err());
    }

    fn random_map(n: u32, seed: u64) -> CorrespondenceMap {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut map = CorrespondenceMap::empty(n, n);
        for k in 0..map.len() {
            map.valid[k] = k % 7 != 3;
            map.uv[k] = Vector2::new(rng.random_range(-1.5..1.5), rng.random_range(-1.5..1.5));
        }
        map
    }

    fn rms_error(decoded: &CorrespondenceMap, truth: &CorrespondenceMap) -> f64 {
        let mut sum = 0.0;
        let mut count = 0;
        for k in 0..truth.len() {
            if truth.valid[k] {
                assert!(decoded.valid[k]);
                sum += (decoded.uv[k] - truth.uv[k]).norm_squared();
                count += 1;
            } else {
                assert!(!decoded.valid[k], "never-lit pixel decoded");
            }
        }
        (sum / count as f64).sqrt()
    }

    #[test]
    fn round_trip_through_synthesized_stack() {
        let map = random_map(24, 5);
        let w = 1.0 / 32.0;
        let u = synthesize_stripe_stack(&map, StripeAxis::U, w, w, (-2.0, 2.0), 0.5).unwrap();
        let v = synthesize_stripe_stack(&map, StripeAxis::V, w, w, (-2.0, 2.0), 0.5).unwrap();
        let d = decode_stack(&u, &v, DecodeOptions::default()).unwrap();
        let rms = rms_error(&d.map, &map);
        assert!(rms < 0.02, "rms {rms}");
    }

    #[test]
    fn image_noise_degrades_gracefully() {
        let map = random_map(24, 6);
        let w = 1.0 / 32.0;
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let normal = rand_distr::Normal::new(0.0, 0.01).unwrap();
        let mut noisy = |mut s: StripeStack| {
            for f in &mut s.frames {
                for x in f.iter_mut() {
                    *x = (*x as f64 + rand_distr::Distribution::sample(&normal, &mut rng)).max(0.0) as f32;
                }
            }
            s
        };
        let u = noisy(synthesize_stripe_stack(&map, StripeAxis::U, w, w, (-2.0, 2.0), 0.5).unwrap());
        let v = noisy(synthesize_stripe_stack(&map, StripeAxis::V, w, w, (-2.0, 2.0), 0.5).unwrap());
        let d = decode_stack(&u, &v, DecodeOptions::default()).unwrap();
        let mut sum = 0.0;
        let mut count = 0;
        for k in 0..map.len() {
            if map.valid[k] && d.map.valid[k] {
                sum += (d.map.uv[k] - map.uv[k]).norm_squared();
                count += 1;
            }
        }
        let rms = (sum / count as f64).sqrt();
        assert!(count as f64 > 0.95 * map.valid_count() as f64);
        assert!(rms < 0.1, "rms {rms}");
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let a = synthesize_stripe_stack(&CorrespondenceMap::empty(2, 2), StripeAxis::U, 0.1, 0.1, (0.0, 1.0), 0.5).unwrap();
        let b = synthesize_stripe_stack(&CorrespondenceMap::empty(3, 2), StripeAxis::V, 0.1, 0.1, (0.0, 1.0), 0.5).unwrap();
        assert!(decode_stack(&a, &b, DecodeOptions::default()).is_err());
    }

    proptest! {
        #[test]
        fn shift_equivariance(center in -3.0f64..3.0, shift in -50.0f64..50.0) {
            let xs = grid(40, -5.0, 0.25);
            let ys: Vec<f64> = xs.iter().map(|x| (-(x - center).powi(2) / 0.3).exp()).collect();
            let a = locate_peak(&IntensityProfile::new(xs.clone(), ys.clone()).unwrap(), 5).unwrap().position;
            let shifted: Vec<f64> = xs.iter().map(|x| x + shift).collect();
            let b = locate_peak(&IntensityProfile::new(shifted, ys).unwrap(), 5).unwrap().position;
            prop_assert!((b - (a + shift)).abs() < 1e-9);
        }

        #[test]
        fn scale_invariance(center in -3.0f64..3.0, k in 1e-3f64..1e3) {
            let xs = grid(40, -5.0, 0.25);
            let ys: Vec<f64> = xs.iter().map(|x| (-(x - center).powi(2) / 0.3).exp()).collect();
            let scaled: Vec<f64> = ys.iter().map(|y| y * k).collect();
            let a = locate_peak(&IntensityProfile::new(xs.clone(), ys).unwrap(), 5).unwrap().position;
            let b = locate_peak(&IntensityProfile::new(xs, scaled).unwrap(), 5).unwrap().position;
            prop_assert!((a - b).abs() < 1e-12);
        }

        #[test]
        fn stays_within_sweep(values in proptest::collection::vec(0.0f64..1.0, 3..30)) {
            let xs = grid(values.len(), 2.0, 0.1);
            let prof = IntensityProfile::new(xs.clone(), values).unwrap();
            if let Ok(p) = locate_peak(&prof, 5) {
                prop_assert!(p.position >= xs[0] && p.position <= *xs.last().unwrap());
            }
        }
    }
}
