//! Binary correspondence maps.
//!
//! Little-endian throughout: the magic `CORR`, then `version`, `width` and
//! `height` as u32, then for every pixel in row-major order a validity byte
//! and the pattern coordinates `u`, `v` as f64. Invalid pixels keep whatever
//! coordinates the map holds so a round trip is bit-exact.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use nalgebra::Vector2;

use crate::error::{Error, Result};
use crate::scene::CorrespondenceMap;

pub const CORR_MAGIC: [u8; 4] = *b"CORR";
pub const CORR_VERSION: u32 = 1;

pub fn write_corr(map: &CorrespondenceMap, w: &mut impl Write) -> Result<()> {
    w.write_all(&CORR_MAGIC)?;
    for x in [CORR_VERSION, map.width, map.height] {
        w.write_all(&x.to_le_bytes())?;
    }
    for (valid, uv) in map.valid.iter().zip(&map.uv) {
        w.write_all(&[*valid as u8])?;
        w.write_all(&uv.x.to_le_bytes())?;
        w.write_all(&uv.y.to_le_bytes())?;
    }
    Ok(())
}

fn read_array<const N: usize>(r: &mut impl Read) -> Result<[u8; N]> {
    let mut b = [0u8; N];
    r.read_exact(&mut b).map_err(|e| match e.kind() {
        std::io::ErrorKind::UnexpectedEof => Error::format("correspondence map", "truncated"),
        _ => e.into(),
    })?;
    Ok(b)
}

pub fn read_corr(r: &mut impl Read) -> Result<CorrespondenceMap> {
    if read_array::<4>(r)? != CORR_MAGIC {
        return Err(Error::format("correspondence map", "bad magic"));
    }
    let version = u32::from_le_bytes(read_array(r)?);
    if version != CORR_VERSION {
        return Err(Error::format("correspondence map", format!("unsupported version {version}")));
    }
    let width = u32::from_le_bytes(read_array(r)?);
    let height = u32::from_le_bytes(read_array(r)?);
    let n = (width as usize)
        .checked_mul(height as usize)
        .ok_or_else(|| Error::format("correspondence map", "dimensions overflow"))?;
    // a hostile header must not trigger a huge allocation before any data
    let cap = n.min(1 << 22);
    let mut map = CorrespondenceMap { width, height, valid: Vec::with_capacity(cap), uv: Vec::with_capacity(cap) };
    for k in 0..n {
        let [flag] = read_array::<1>(r)?;
        map.valid.push(match flag {
            0 => false,
            1 => true,
            _ => return Err(Error::format("correspondence map", format!("validity byte {flag} at pixel {k}"))),
        });
        let u = f64::from_le_bytes(read_array(r)?);
        let v = f64::from_le_bytes(read_array(r)?);
        map.uv.push(Vector2::new(u, v));
    }
    let mut rest = [0u8; 1];
    if r.read(&mut rest)? != 0 {
        return Err(Error::format("correspondence map", "trailing bytes"));
    }
    Ok(map)
}

pub fn write_corr_file(map: &CorrespondenceMap, path: impl AsRef<Path>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_corr(map, &mut w)?;
    w.flush()?;
    Ok(())
}

pub fn read_corr_file(path: impl AsRef<Path>) -> Result<CorrespondenceMap> {
    read_corr(&mut BufReader::new(File::open(path)?))
}
