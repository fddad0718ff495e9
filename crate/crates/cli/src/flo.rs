//! Middlebury `.flo` optical-flow files.
//!
//! Layout: 4 magic bytes "PIEH" (the float 202021.25 in little-endian
//! IEEE-754), width and height as little-endian i32, then row-major
//! interleaved (u, v) as little-endian f32. Fields hold displacements in
//! pixels.

use anyhow::{bail, Context, Result};
use evflow_core::DenseFlow64;
use std::io::Read;
use std::path::Path;

const MAGIC: [u8; 4] = *b"PIEH";

pub fn write_flo(flow: &DenseFlow64, path: &Path) -> Result<()> {
    if !flow.is_finite() {
        bail!("refusing to write non-finite flow to {}", path.display());
    }
    let (w, h) = (flow.width(), flow.height());
    let mut bytes = Vec::with_capacity(12 + 8 * w * h);
    bytes.extend_from_slice(&MAGIC);
    bytes.extend_from_slice(&(w as i32).to_le_bytes());
    bytes.extend_from_slice(&(h as i32).to_le_bytes());
    for y in 0..h {
        for x in 0..w {
            let (u, v) = flow.at(x, y);
            bytes.extend_from_slice(&(u as f32).to_le_bytes());
            bytes.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    std::fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))
}

pub fn read_flo(path: &Path) -> Result<DenseFlow64> {
    let mut file = std::fs::File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let mut header = [0u8; 12];
    file.read_exact(&mut header)
        .with_context(|| format!("reading header of {}", path.display()))?;
    if header[0..4] != MAGIC {
        bail!("{}: not a flow file (bad magic)", path.display());
    }
    let w = i32::from_le_bytes(header[4..8].try_into().unwrap());
    let h = i32::from_le_bytes(header[8..12].try_into().unwrap());
    if w <= 0 || h <= 0 || (w as i64) * (h as i64) > (1 << 30) {
        bail!("{}: implausible dimensions {w}x{h}", path.display());
    }
    let (w, h) = (w as usize, h as usize);
    let mut data = vec![0u8; 8 * w * h];
    file.read_exact(&mut data)
        .with_context(|| format!("reading {} flow vectors of {}", w * h, path.display()))?;
    let mut u = Vec::with_capacity(w * h);
    let mut v = Vec::with_capacity(w * h);
    for pair in data.chunks_exact(8) {
        u.push(f64::from(f32::from_le_bytes(pair[0..4].try_into().unwrap())));
        v.push(f64::from(f32::from_le_bytes(pair[4..8].try_into().unwrap())));
    }
    DenseFlow64::from_components(w, h, u, v, 0.0)
        .map_err(|e| anyhow::anyhow!("{}: {e}", path.display()))
}

/// Appends one (u, v) pair to a raw little-endian f32 buffer; the writer's
/// serialization for one pixel.
#[cfg(test)]
pub(crate) fn pixel_bytes(u: f32, v: f32) -> [u8; 8] {
    let mut out = [0u8; 8];
    out[0..4].copy_from_slice(&u.to_le_bytes());
    out[4..8].copy_from_slice(&v.to_le_bytes());
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tmp(name: &str) -> std::path::PathBuf {
        let mut p = std::env::temp_dir();
        p.push(format!("evflow-flo-{}-{name}", std::process::id()));
        p
    }

    #[test]
    fn one_pixel_zero_field_is_twenty_bytes_with_known_layout() {
        let path = tmp("zero.flo");
        let flow = DenseFlow64::constant(1, 1, (0.0, 0.0), 0.0);
        write_flo(&flow, &path).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        assert_eq!(bytes.len(), 20);
        assert_eq!(&bytes[0..4], b"PIEH");
        assert_eq!(&bytes[4..8], &1i32.to_le_bytes());
        assert_eq!(&bytes[8..12], &1i32.to_le_bytes());
        assert!(bytes[12..20].iter().all(|b| *b == 0));
        std::fs::remove_file(&path).ok();
    }

    #[test]
    fn two_by_one_field_is_twenty_eight_bytes() {
        let path = tmp("twopix.flo");
        let flow = DenseFlow64::constant(2, 1, (1.0, -0.5), 0.0);
        write_flo(&flow, &path).unwrap();
        assert_eq!(std::fs::read(&path).unwrap().len(), 28);
        std::fs::remove_file(&path).ok();
    }

    #[test]
    fn known_values_serialize_to_known_bit_patterns() {
        let path = tmp("golden.flo");
        let flow = DenseFlow64::from_components(
            1,
            2,
            vec![1.0, -2.0],
            vec![0.5, 3.25],
            0.0,
        )
        .unwrap();
        write_flo(&flow, &path).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        assert_eq!(&bytes[12..20], &pixel_bytes(1.0, 0.5));
        assert_eq!(&bytes[20..28], &pixel_bytes(-2.0, 3.25));
        assert_eq!(u32::from_le_bytes(bytes[12..16].try_into().unwrap()), 0x3F80_0000);
        assert_eq!(u32::from_le_bytes(bytes[16..20].try_into().unwrap()), 0x3F00_0000);
        assert_eq!(u32::from_le_bytes(bytes[20..24].try_into().unwrap()), 0xC000_0000);
        assert_eq!(u32::from_le_bytes(bytes[24..28].try_into().unwrap()), 0x4050_0000);
        std::fs::remove_file(&path).ok();
    }

    #[test]
    fn round_trip_preserves_values_at_f32_precision() {
        let path = tmp("roundtrip.flo");
        let flow = DenseFlow64::from_components(
            3,
            2,
            vec![0.1, -7.25, 3.0, 0.0, 123.5, -0.75],
            vec![9.0, 0.125, -2.5, 4.75, -100.0, 0.0],
            0.0,
        )
        .unwrap();
        write_flo(&flow, &path).unwrap();
        let back = read_flo(&path).unwrap();
        assert_eq!(back.width(), 3);
        assert_eq!(back.height(), 2);
        for y in 0..2 {
            for x in 0..3 {
                let (u0, v0) = flow.at(x, y);
                let (u1, v1) = back.at(x, y);
                assert_eq!(u0 as f32, u1 as f32);
                assert_eq!(v0 as f32, v1 as f32);
            }
        }
        std::fs::remove_file(&path).ok();
    }

    #[test]
    fn bad_magic_is_rejected() {
        let path = tmp("badmagic.flo");
        std::fs::write(&path, b"XXXX\x01\x00\x00\x00\x01\x00\x00\x00AAAAAAAA").unwrap();
        assert!(read_flo(&path).is_err());
        std::fs::remove_file(&path).ok();
    }

    #[test]
    fn non_finite_fields_are_refused() {
        let path = tmp("nan.flo");
        let flow = DenseFlow64::constant(2, 2, (f64::NAN, 0.0), 0.0);
        assert!(write_flo(&flow, &path).is_err());
        assert!(!path.exists());
    }
}
