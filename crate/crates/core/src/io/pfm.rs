//! Single-channel portable float maps for height maps.
//!
//! Header `Pf`, then `width height`, then the scale `-1.0` (little-endian
//! samples). Rows are stored bottom to top as the format prescribes, so the
//! first scanline in the file is the last image row. Pixels without a height
//! are NaN.

use std::io::{BufRead, Write};

use crate::error::{Error, Result};
use crate::normalint::HeightMap;

pub fn write_pfm(map: &HeightMap, w: &mut impl Write) -> Result<()> {
    write!(w, "Pf\n{} {}\n-1.0\n", map.width, map.height)?;
    for row in map.values.chunks(map.width.max(1)).rev() {
        for v in row {
            w.write_all(&(v.map_or(f32::NAN, |x| x as f32)).to_le_bytes())?;
        }
    }
    Ok(())
}

fn header_line(r: &mut impl BufRead) -> Result<String> {
    let mut line = String::new();
    r.read_line(&mut line)?;
    if !line.ends_with('\n') {
        return Err(Error::format("PFM", "truncated header"));
    }
    Ok(line.trim().to_owned())
}

/// Reads a single-channel map written by [`write_pfm`] (or any `Pf` file of
/// either endianness). Heights are widened to f64, NaN becomes `None`.
pub fn read_pfm(r: &mut impl BufRead) -> Result<HeightMap> {
    if header_line(r)? != "Pf" {
        return Err(Error::format("PFM", "only single-channel Pf maps are supported"));
    }
    let dims = header_line(r)?;
    let mut it = dims.split_whitespace().map(str::parse::<usize>);
    let (Some(Ok(width)), Some(Ok(height)), None) = (it.next(), it.next(), it.next()) else {
        return Err(Error::format("PFM", format!("bad dimensions {dims:?}")));
    };
    let scale: f64 = header_line(r)?.parse().map_err(|_| Error::format("PFM", "bad scale"))?;
    if scale == 0.0 || !scale.is_finite() {
        return Err(Error::format("PFM", "bad scale"));
    }
    let n = width.checked_mul(height).ok_or_else(|| Error::format("PFM", "dimensions overflow"))?;
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    if bytes.len() != 4 * n {
        return Err(Error::format("PFM", format!("{} data bytes for {width}x{height}", bytes.len())));
    }
    let samples: Vec<f32> = bytes
        .chunks_exact(4)
        .map(|b| {
            let b = [b[0], b[1], b[2], b[3]];
            if scale < 0.0 {
                f32::from_le_bytes(b)
            } else {
                f32::from_be_bytes(b)
            }
        })
        .collect();
    let mut values = Vec::with_capacity(n);
    for row in samples.chunks(width.max(1)).rev() {
        values.extend(row.iter().map(|v| (!v.is_nan()).then_some(*v as f64)));
    }
    Ok(HeightMap { width, height, values, iterations: 0, residual: 0.0 })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bottom_up_rows_and_nan() {
        let map = HeightMap { width: 2, height: 2, values: vec![Some(1.0), None, Some(3.0), Some(-4.5)], iterations: 0, residual: 0.0 };
        let mut buf = Vec::new();
        write_pfm(&map, &mut buf).unwrap();
        let head = b"Pf\n2 2\n-1.0\n";
        assert_eq!(&buf[..head.len()], head);
        // first stored sample is the bottom-left pixel
        assert_eq!(&buf[head.len()..head.len() + 4], &3.0f32.to_le_bytes());
        let back = read_pfm(&mut &buf[..]).unwrap();
        assert_eq!(back.values, map.values);
        assert!(read_pfm(&mut &buf[..buf.len() - 2]).is_err());
        assert!(read_pfm(&mut &b"PF\n1 1\n-1.0\n\0\0\0\0"[..]).is_err());
    }

    #[test]
    fn big_endian_input() {
        let mut buf = b"Pf\n1 1\n1.0\n".to_vec();
        buf.extend_from_slice(&2.5f32.to_be_bytes());
        assert_eq!(read_pfm(&mut &buf[..]).unwrap().values, vec![Some(2.5)]);
    }
}
