//! Stripe stacks as directories of 16-bit PGM frames plus a `stack.toml`.

use std::path::Path;

use image::codecs::pnm::{GraymapHeader, PnmEncoder, PnmHeader, SampleEncoding};
use image::ExtendedColorType;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scene::{StripeAxis, StripeStack};

const MANIFEST: &str = "stack.toml";

/// Contents of `stack.toml`. `frames[f]` was captured with the stripe at
/// `positions[f]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StackManifest {
    pub axis: StripeAxis,
    pub width: u32,
    pub height: u32,
    pub stripe_width: f64,
    pub positions: Vec<f64>,
    pub frames: Vec<String>,
}

fn quantize(x: f32) -> u16 {
    (x.clamp(0.0, 1.0) * 65535.0).round() as u16
}

/// Writes the stack into `dir` (created if needed). Intensities are clamped
/// to `[0, 1]` and quantized to 16 bits.
pub fn write_stack(stack: &StripeStack, dir: impl AsRef<Path>) -> Result<StackManifest> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir)?;
    let digits = stack.frames.len().max(1).to_string().len().max(3);
    let mut names = Vec::with_capacity(stack.frames.len());
    for (f, frame) in stack.frames.iter().enumerate() {
        let name = format!("frame_{f:0digits$}.pgm");
        if frame.len() != stack.width as usize * stack.height as usize {
            return Err(Error::Config("stack frame size does not match its dimensions".into()));
        }
        let samples: Vec<u16> = frame.iter().map(|x| quantize(*x)).collect();
        // a fixed P5 header; the encoder would otherwise pick PAM for 16 bits
        let header = PnmHeader::from(GraymapHeader {
            encoding: SampleEncoding::Binary,
            width: stack.width,
            height: stack.height,
            maxwhite: u16::MAX as u32,
        });
        let mut w = std::io::BufWriter::new(std::fs::File::create(dir.join(&name))?);
        PnmEncoder::new(&mut w)
            .with_header(header)
            .encode(&samples[..], stack.width, stack.height, ExtendedColorType::L16)
            .map_err(|e| Error::format("PGM frame", e.to_string()))?;
        std::io::Write::flush(&mut w)?;
        names.push(name);
    }
    let manifest = StackManifest {
        axis: stack.axis,
        width: stack.width,
        height: stack.height,
        stripe_width: stack.stripe_width,
        positions: stack.positions.clone(),
        frames: names,
    };
    std::fs::write(dir.join(MANIFEST), toml::to_string(&manifest).expect("stack manifest serializes"))?;
    Ok(manifest)
}

pub fn read_stack(dir: impl AsRef<Path>) -> Result<StripeStack> {
    let dir = dir.as_ref();
    let text = std::fs::read_to_string(dir.join(MANIFEST))?;
    let m: StackManifest = toml::from_str(&text).map_err(|e| Error::Config(format!("stack manifest: {e}")))?;
    if m.frames.len() != m.positions.len() {
        return Err(Error::Config(format!("{} frames for {} stripe positions", m.frames.len(), m.positions.len())));
    }
    let mut frames = Vec::with_capacity(m.frames.len());
    for name in &m.frames {
        let img = image::ImageReader::with_format(
            std::io::BufReader::new(std::fs::File::open(dir.join(name))?),
            image::ImageFormat::Pnm,
        )
        .decode()
        .map_err(|e| Error::format("PGM frame", format!("{name}: {e}")))?
        .into_luma16();
        if img.dimensions() != (m.width, m.height) {
            return Err(Error::format("PGM frame", format!("{name} is {:?}, expected {}x{}", img.dimensions(), m.width, m.height)));
        }
        frames.push(img.into_raw().into_iter().map(|x| x as f32 / 65535.0).collect());
    }
    Ok(StripeStack { axis: m.axis, width: m.width, height: m.height, stripe_width: m.stripe_width, positions: m.positions, frames })
}
