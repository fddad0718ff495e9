//! Flow-to-color rendering with the standard optical-flow wheel: hue encodes
//! direction (atan2 of the components), saturation and value encode
//! magnitude relative to the field's 99th-percentile magnitude, and zero
//! flow renders white.

use evflow_core::DenseFlow64;

/// 8-bit RGB, 3 bytes per pixel, row-major.
pub fn render_flow_color(flow: &DenseFlow64) -> Vec<u8> {
    let (w, h) = (flow.width(), flow.height());
    let mut mags: Vec<f64> = Vec::with_capacity(w * h);
    for y in 0..h {
        for x in 0..w {
            let (u, v) = flow.at(x, y);
            mags.push(u.hypot(v));
        }
    }
    let norm = percentile_99(&mags).max(1e-12);

    let mut rgb = Vec::with_capacity(3 * w * h);
    for y in 0..h {
        for x in 0..w {
            let (u, v) = flow.at(x, y);
            let mag = (u.hypot(v) / norm).min(1.0);
            let hue = v.atan2(u); // radians, -pi..pi
            let (r, g, b) = hsv_to_rgb(hue, mag, 1.0 - 0.25 * mag);
            rgb.push(r);
            rgb.push(g);
            rgb.push(b);
        }
    }
    rgb
}

fn percentile_99(mags: &[f64]) -> f64 {
    let mut sorted: Vec<f64> = mags.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite magnitudes"));
    let idx = ((sorted.len() as f64) * 0.99).ceil() as usize;
    sorted[idx.min(sorted.len() - 1).max(0)]
}

/// Hue in radians, saturation and value in [0, 1]. Zero saturation gives a
/// gray of the requested value, so zero magnitude comes out white at v = 1.
fn hsv_to_rgb(hue_rad: f64, s: f64, v: f64) -> (u8, u8, u8) {
    let hue_deg = (hue_rad.to_degrees() + 360.0) % 360.0;
    let c = v * s;
    let hp = hue_deg / 60.0;
    let x = c * (1.0 - (hp % 2.0 - 1.0).abs());
    let (r1, g1, b1) = match hp as u32 {
        0 => (c, x, 0.0),
        1 => (x, c, 0.0),
        2 => (0.0, c, x),
        3 => (0.0, x, c),
        4 => (x, 0.0, c),
        _ => (c, 0.0, x),
    };
    let m = v - c;
    let to8 = |f: f64| ((f + m) * 255.0).round().clamp(0.0, 255.0) as u8;
    (to8(r1), to8(g1), to8(b1))
}
