//! Binary portable graymap (P5) and pixmap (P6) writers.

use anyhow::{bail, Context, Result};
use evflow_core::Iwe64;
use std::path::Path;

/// 8-bit grayscale render of an IWE: values scaled by 255/max, row-major.
/// An all-zero image stays all zero.
pub fn write_iwe_image(iwe: &Iwe64, path: &Path) -> Result<()> {
    let (w, h) = (iwe.width(), iwe.height());
    if w == 0 || h == 0 {
        bail!("empty image for {}", path.display());
    }
    let max = iwe.max_value();
    if !max.is_finite() {
        bail!("non-finite image for {}", path.display());
    }
    let scale = if max > 0.0 { 255.0 / max } else { 0.0 };
    let pixels: Vec<u8> = iwe
        .values()
        .iter()
        .map(|v| (v * scale).round().clamp(0.0, 255.0) as u8)
        .collect();
    write_pnm(path, b"P5", w, h, &pixels)
}

/// 8-bit RGB image, `rgb` row-major with 3 bytes per pixel.
pub fn write_rgb_image(width: usize, height: usize, rgb: &[u8], path: &Path) -> Result<()> {
    if rgb.len() != 3 * width * height {
        bail!(
            "pixel buffer of {} bytes for a {width}x{height} color image",
            rgb.len()
        );
    }
    write_pnm(path, b"P6", width, height, rgb)
}

fn write_pnm(path: &Path, magic: &[u8], width: usize, height: usize, data: &[u8]) -> Result<()> {
    let mut bytes = Vec::with_capacity(data.len() + 32);
    bytes.extend_from_slice(magic);
    bytes.extend_from_slice(format!("\n{width} {height}\n255\n").as_bytes());
    bytes.extend_from_slice(data);
    std::fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))
}
