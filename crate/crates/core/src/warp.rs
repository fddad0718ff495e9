//! Event warping and accumulation into the image of warped events (IWE).
//!
//! Transporting event k to a reference time moves it to
//! x' = x_k + (t_k - t_ref) * v, with v the candidate flow read at the
//! event's integer pixel (or, time-aware, sampled from a flow volume at the
//! event's own timestamp). The IWE counts warped events per pixel with each
//! event contributing a normalized isotropic Gaussian of standard deviation
//! `sigma`, evaluated at integer pixel centers in the square window of
//! half-width 3*sigma around the landing point and not renormalized after
//! truncation (the discarded mass is below 0.1% of an event for sigma = 1).
//! Polarity is ignored: the image is an unsigned count.

use crate::cast;
use crate::error::{Error, Result};
use crate::events::EventSlice;
use crate::flowrep::DenseFlow;
use crate::pde::FlowVolume;
use crate::Scalar;

/// An event transported to a reference time; the position is real-valued and
/// may be outside the frame (it then contributes nothing to the IWE).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WarpedEvent<F> {
    pub x: F,
    pub y: F,
    /// Destination time of the warp, seconds.
    pub t_ref: f64,
    pub p: i8,
}

/// Image of warped events: per-pixel non-negative accumulation.
#[derive(Debug, Clone, PartialEq)]
pub struct Iwe<F> {
    width: usize,
    height: usize,
    values: Vec<F>,
    sigma: F,
}

impl<F: Scalar> Iwe<F> {
    /// Wraps raw pixel values; for score tests that need hand-built images.
    #[cfg(test)]
    pub(crate) fn from_values(width: usize, height: usize, values: Vec<F>, sigma: F) -> Self {
        assert_eq!(values.len(), width * height);
        Self {
            width,
            height,
            values,
            sigma,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn sigma(&self) -> F {
        self.sigma
    }

    pub fn at(&self, x: usize, y: usize) -> F {
        self.values[y * self.width + x]
    }

    pub fn values(&self) -> &[F] {
        &self.values
    }

    pub fn total_mass(&self) -> F {
        self.values.iter().copied().sum()
    }

    pub fn max_value(&self) -> F {
        self.values.iter().copied().fold(F::zero(), F::max)
    }
}

/// Warps every event to `t_ref` under a flow constant in time (x' = x +
/// (t - t_ref) * v(x)); the flow is read at each event's integer pixel.
pub fn warp_events<F: Scalar>(
    slice: &EventSlice,
    flow: &DenseFlow<F>,
    t_ref: f64,
) -> Result<Vec<WarpedEvent<F>>> {
    if flow.width() != slice.width() || flow.height() != slice.height() {
        return Err(Error::InvalidArgument(format!(
            "flow geometry {}x{} does not match slice {}x{}",
            flow.width(),
            flow.height(),
            slice.width(),
            slice.height()
        )));
    }
    Ok(slice
        .events()
        .iter()
        .map(|e| {
            let (u, v) = flow.at(usize::from(e.x), usize::from(e.y));
            let dt = cast::<F>(e.t - t_ref);
            WarpedEvent {
                x: cast::<F>(f64::from(e.x)) + dt * u,
                y: cast::<F>(f64::from(e.y)) + dt * v,
                t_ref,
                p: e.p,
            }
        })
        .collect())
}

/// Warps every event to `t_ref` with the velocity sampled from a flow volume
/// at the event's own pixel and timestamp.
pub fn warp_events_time_aware<F: Scalar>(
    slice: &EventSlice,
    volume: &FlowVolume<F>,
    t_ref: f64,
) -> Result<Vec<WarpedEvent<F>>> {
    if volume.width() != slice.width() || volume.height() != slice.height() {
        return Err(Error::InvalidArgument(format!(
            "volume geometry {}x{} does not match slice {}x{}",
            volume.width(),
            volume.height(),
            slice.width(),
            slice.height()
        )));
    }
    if slice.t_first() < volume.t_start() || slice.t_last() > volume.t_end() {
        return Err(Error::InvalidArgument(format!(
            "slice span [{}, {}] outside volume span [{}, {}]",
            slice.t_first(),
            slice.t_last(),
            volume.t_start(),
            volume.t_end()
        )));
    }
    slice
        .events()
        .iter()
        .map(|e| {
            let (u, v) = volume.sample_flow(e.x, e.y, e.t)?;
            let dt = cast::<F>(e.t - t_ref);
            Ok(WarpedEvent {
                x: cast::<F>(f64::from(e.x)) + dt * u,
                y: cast::<F>(f64::from(e.y)) + dt * v,
                t_ref,
                p: e.p,
            })
        })
        .collect()
}

/// Accumulates warped events into an IWE with Gaussian splats.
pub fn accumulate_iwe<F: Scalar>(
    warped: &[WarpedEvent<F>],
    width: usize,
    height: usize,
    sigma: F,
) -> Result<Iwe<F>> {
    accumulate_weighted(warped, None, width, height, sigma)
}

/// Shared splatting core. With `weights` present, event k deposits
/// weights[k] * kernel instead of the plain kernel; used by the
/// average-timestamp diagnostics.
pub(crate) fn accumulate_weighted<F: Scalar>(
    warped: &[WarpedEvent<F>],
    weights: Option<&[F]>,
    width: usize,
    height: usize,
    sigma: F,
) -> Result<Iwe<F>> {
    if sigma <= F::zero() || !sigma.is_finite() {
        return Err(Error::InvalidArgument(format!("splat sigma {sigma:?}")));
    }
    if width == 0 || height == 0 {
        return Err(Error::InvalidArgument(format!("IWE geometry {width}x{height}")));
    }
    if let Some(w) = weights {
        if w.len() != warped.len() {
            return Err(Error::InvalidArgument(format!(
                "{} weights for {} events",
                w.len(),
                warped.len()
            )));
        }
    }
    let mut values = vec![F::zero(); width * height];
    let radius = cast::<F>(3.0) * sigma;
    let norm = F::one() / (cast::<F>(2.0 * std::f64::consts::PI) * sigma * sigma);
    let inv_two_sigma2 = F::one() / (cast::<F>(2.0) * sigma * sigma);
    // The window is at most 6*sigma + 1 pixels per axis.
    let mut gx: Vec<F> = Vec::new();
    let mut gy: Vec<F> = Vec::new();
    for (k, ev) in warped.iter().enumerate() {
        if !(ev.x.is_finite() && ev.y.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "non-finite warped position ({:?}, {:?})",
                ev.x, ev.y
            )));
        }
        let Some((x0, x1)) = window(ev.x, radius, width) else {
            continue;
        };
        let Some((y0, y1)) = window(ev.y, radius, height) else {
            continue;
        };
        let scale = match weights {
            Some(w) => norm * w[k],
            None => norm,
        };
        gx.clear();
        for px in x0..=x1 {
            let d = cast::<F>(px as f64) - ev.x;
            gx.push((-(d * d) * inv_two_sigma2).exp());
        }
        gy.clear();
        for py in y0..=y1 {
            let d = cast::<F>(py as f64) - ev.y;
            gy.push((-(d * d) * inv_two_sigma2).exp());
        }
        for (iy, py) in (y0..=y1).enumerate() {
            let row = py * width;
            let wy = gy[iy] * scale;
            for (ix, px) in (x0..=x1).enumerate() {
                values[row + px] = values[row + px] + wy * gx[ix];
            }
        }
    }
    Ok(Iwe {
        width,
        height,
        values,
        sigma,
    })
}

/// In-frame integer pixels within `radius` of coordinate `c`, or None when
/// the window misses the frame entirely.
pub(crate) fn window<F: Scalar>(c: F, radius: F, extent: usize) -> Option<(usize, usize)> {
    let lo = (c - radius).ceil();
    let hi = (c + radius).floor();
    let max = cast::<F>((extent - 1) as f64);
    if hi < F::zero() || lo > max {
        return None;
    }
    let lo = lo.max(F::zero()).to_usize()?;
    let hi = hi.min(max).to_usize()?;
    (lo <= hi).then_some((lo, hi))
}
