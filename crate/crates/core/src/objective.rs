//! Scores for candidate flows and their gradients.
//!
//! The sharpness of an IWE is measured by the mean squared gradient
//! magnitude G. A candidate flow is scored by warping the slice to its
//! first, middle, and last timestamp, combining the three scores with
//! weights 1:2:1, and dividing by four times the zero-flow score:
//!
//! ```text
//! f = (G(t_first) + 2 G(t_mid) + G(t_last)) / (4 G(zero flow))
//! ```
//!
//! The zero flow scores exactly 1, sharper-than-identity flows score above
//! 1, and flows that look sharp at one reference but smear the others (the
//! classic event-collapse optima) are pulled back down by the two remaining
//! terms. The solver minimizes `1/f + lambda * TV(tiles)`.
//!
//! Gradients with respect to the tile parameters are assembled analytically
//! by chaining the adjoints of the difference stencil, the Gaussian splat,
//! and the tile interpolation; a full-model central-difference fallback is
//! available for cross-checking. In time-aware mode the gradient treats the
//! transported volume as frozen and differentiates only through the field
//! at the slice midpoint, so it is exact for the frozen-offset model the
//! solver optimizes and approximate against a full volume rebuild.

use crate::cast;
use crate::error::{Error, Result};
use crate::events::EventSlice;
use crate::flowrep::{dense_from_tiles, DenseFlow, TileGrid};
use crate::pde::{build_volume, FlowVolume, Scheme};
use crate::warp::{
    accumulate_iwe, accumulate_weighted, warp_events, warp_events_time_aware, window, Iwe,
    WarpedEvent,
};
use crate::Scalar;

/// Splat width used by every objective evaluation, in pixels.
const SIGMA: f64 = 1.0;

/// How events are warped during scoring.
#[derive(Debug, Clone, Copy)]
pub enum WarpPlan<'a, F> {
    /// One velocity per pixel, constant over the slice span.
    Constant(&'a DenseFlow<F>),
    /// Velocity sampled per event from a transported flow volume.
    TimeAware(&'a FlowVolume<F>),
}

/// How `cost_and_gradient` differentiates the composite cost.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GradientMode {
    /// Adjoint chain through stencil, splat, and interpolation.
    Analytic,
    /// Central differences of the full cost, one evaluation pair per
    /// parameter; slow, for cross-validation.
    FiniteDifference,
}

impl std::str::FromStr for GradientMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "analytic" => Ok(GradientMode::Analytic),
            "fd" | "finite-difference" => Ok(GradientMode::FiniteDifference),
            other => Err(Error::InvalidArgument(format!(
                "unknown gradient mode {other:?} (expected analytic or fd)"
            ))),
        }
    }
}

/// Everything a single scoring pass produces.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObjectiveReport<F> {
    /// Multi-reference focus value; 1 for the zero flow.
    pub f: F,
    pub g_t1: F,
    pub g_tmid: F,
    pub g_tn: F,
    /// Zero-flow normalizer G(0).
    pub g_zero: F,
    /// Tile-grid total variation (0 when no grid was involved).
    pub tv: F,
    /// 1/f + lambda * tv (lambda = 0 when no grid was involved).
    pub cost: F,
}

/// Mean over pixels of the squared gradient magnitude, with central
/// differences in the interior and one-sided differences at borders. An
/// image thinner than 2 pixels on an axis has no derivative there and that
/// axis contributes zero.
pub fn gradient_magnitude<F: Scalar>(iwe: &Iwe<F>) -> F {
    let (gx, gy) = difference_planes(iwe.values(), iwe.width(), iwe.height());
    let sum: F = gx
        .iter()
        .zip(&gy)
        .map(|(&a, &b)| a * a + b * b)
        .sum();
    sum / cast::<F>((iwe.width() * iwe.height()) as f64)
}

/// Population variance of the pixel values.
pub fn image_variance<F: Scalar>(iwe: &Iwe<F>) -> F {
    let n = cast::<F>(iwe.values().len() as f64);
    let mean = iwe.values().iter().copied().sum::<F>() / n;
    iwe.values()
        .iter()
        .map(|&v| (v - mean) * (v - mean))
        .sum::<F>()
        / n
}

/// Scores a warp plan against the zero flow. The report carries no
/// regularizer (tv = 0, cost = 1/f).
pub fn multi_ref_focus<F: Scalar>(
    slice: &EventSlice,
    plan: WarpPlan<'_, F>,
) -> Result<ObjectiveReport<F>> {
    let g_zero = zero_flow_g(slice)?;
    let scores = reference_scores(slice, &plan, None)?;
    let f = assemble_f(&scores.g, g_zero)?;
    Ok(ObjectiveReport {
        f,
        g_t1: scores.g[0],
        g_tmid: scores.g[1],
        g_tn: scores.g[2],
        g_zero,
        tv: F::zero(),
        cost: F::one() / f,
    })
}

/// L1 total variation of the tile grid: forward differences along both grid
/// axes, both flow components, normalized by the tile count.
pub fn total_variation<F: Scalar>(grid: &TileGrid<F>) -> F {
    let side = grid.side();
    let mut sum = F::zero();
    for plane in [grid.u_plane(), grid.v_plane()] {
        for i in 0..side {
            for j in 0..side {
                let c = plane[i * side + j];
                if j + 1 < side {
                    sum = sum + (plane[i * side + j + 1] - c).abs();
                }
                if i + 1 < side {
                    sum = sum + (plane[(i + 1) * side + j] - c).abs();
                }
            }
        }
    }
    sum / cast::<F>((side * side) as f64)
}

/// Full scoring of a tile grid: focus of the interpolated flow (transported
/// across the span when `scheme` is not `None`) plus the weighted
/// regularizer.
pub fn composite_cost<F: Scalar>(
    slice: &EventSlice,
    grid: &TileGrid<F>,
    lambda: F,
    scheme: Scheme,
    n_bins: usize,
) -> Result<ObjectiveReport<F>> {
    let g_zero = zero_flow_g(slice)?;
    let dense = dense_from_tiles(grid, slice.t_mid());
    let (report, _) = match scheme {
        Scheme::None => evaluate(
            slice,
            grid,
            lambda,
            &WarpPlan::Constant(&dense),
            g_zero,
            false,
        )?,
        _ => {
            let volume = build_volume(&dense, slice, n_bins, scheme)?;
            evaluate(
                slice,
                grid,
                lambda,
                &WarpPlan::TimeAware(&volume),
                g_zero,
                false,
            )?
        }
    };
    Ok(report)
}

/// Composite cost and its gradient with respect to the tile parameters
/// (layout `[u..., v...]` as in `TileGrid::params`).
pub fn cost_and_gradient<F: Scalar>(
    slice: &EventSlice,
    grid: &TileGrid<F>,
    lambda: F,
    scheme: Scheme,
    n_bins: usize,
    mode: GradientMode,
) -> Result<(ObjectiveReport<F>, Vec<F>)> {
    match mode {
        GradientMode::Analytic => {
            let g_zero = zero_flow_g(slice)?;
            let dense = dense_from_tiles(grid, slice.t_mid());
            let (report, grad) = match scheme {
                Scheme::None => evaluate(
                    slice,
                    grid,
                    lambda,
                    &WarpPlan::Constant(&dense),
                    g_zero,
                    true,
                )?,
                _ => {
                    let volume = build_volume(&dense, slice, n_bins, scheme)?;
                    evaluate(
                        slice,
                        grid,
                        lambda,
                        &WarpPlan::TimeAware(&volume),
                        g_zero,
                        true,
                    )?
                }
            };
            Ok((report, grad.expect("gradient requested")))
        }
        GradientMode::FiniteDifference => {
            let report = composite_cost(slice, grid, lambda, scheme, n_bins)?;
            let h = cast::<F>(1e-4);
            let params = grid.params();
            let mut probe = grid.clone();
            let mut grad = vec![F::zero(); params.len()];
            for i in 0..params.len() {
                let mut p = params.clone();
                p[i] = params[i] + h;
                probe.set_params(&p)?;
                let hi = composite_cost(slice, &probe, lambda, scheme, n_bins)?.cost;
                p[i] = params[i] - h;
                probe.set_params(&p)?;
                let lo = composite_cost(slice, &probe, lambda, scheme, n_bins)?.cost;
                grad[i] = (hi - lo) / (cast::<F>(2.0) * h);
            }
            Ok((report, grad))
        }
    }
}

/// Mean squared per-pixel average of warped-event timestamps, a diagnostic
/// loss for comparison studies. Events are warped to the first timestamp;
/// the averaged timestamps are shifted to start at zero (and divided by the
/// slice span in the normalized variant). Only pixels with event mass above
/// 1e-3 enter the mean; if no pixel qualifies the loss is 0.
pub fn avg_timestamp_loss<F: Scalar>(
    slice: &EventSlice,
    flow: &DenseFlow<F>,
    normalized: bool,
) -> Result<F> {
    let span = slice.span();
    let warped = warp_events(slice, flow, slice.t_first())?;
    let weights: Vec<F> = slice
        .events()
        .iter()
        .map(|e| {
            let shifted = e.t - slice.t_first();
            cast::<F>(if normalized {
                if span > 0.0 {
                    shifted / span
                } else {
                    0.0
                }
            } else {
                shifted
            })
        })
        .collect();
    let sigma = cast::<F>(SIGMA);
    let stamped = accumulate_weighted(&warped, Some(&weights), slice.width(), slice.height(), sigma)?;
    let mass = accumulate_iwe(&warped, slice.width(), slice.height(), sigma)?;
    let threshold = cast::<F>(1e-3);
    let mut acc = F::zero();
    let mut count = 0usize;
    for (&t, &m) in stamped.values().iter().zip(mass.values()) {
        if m > threshold {
            let avg = t / m;
            acc = acc + avg * avg;
            count += 1;
        }
    }
    Ok(if count == 0 {
        F::zero()
    } else {
        acc / cast::<F>(count as f64)
    })
}

/// G of the identity-warp IWE, the slice-constant normalizer.
pub(crate) fn zero_flow_g<F: Scalar>(slice: &EventSlice) -> Result<F> {
    let warped: Vec<WarpedEvent<F>> = slice
        .events()
        .iter()
        .map(|e| WarpedEvent {
            x: cast::<F>(f64::from(e.x)),
            y: cast::<F>(f64::from(e.y)),
            t_ref: slice.t_mid(),
            p: e.p,
        })
        .collect();
    let iwe = accumulate_iwe(&warped, slice.width(), slice.height(), cast::<F>(SIGMA))?;
    let g = gradient_magnitude(&iwe);
    if g <= F::zero() || !g.is_finite() {
        return Err(Error::Degenerate(format!(
            "zero-flow image has gradient score {g:?}; the slice cannot normalize a focus value"
        )));
    }
    Ok(g)
}

/// Full evaluation used by the solver: report plus (optionally) the cost
/// gradient. `plan` must be derived from `grid` (its dense interpolation,
/// or that plus frozen transport offsets); the interpolation adjoint
/// assumes that correspondence.
pub(crate) fn evaluate<F: Scalar>(
    slice: &EventSlice,
    grid: &TileGrid<F>,
    lambda: F,
    plan: &WarpPlan<'_, F>,
    g_zero: F,
    want_grad: bool,
) -> Result<(ObjectiveReport<F>, Option<Vec<F>>)> {
    if lambda < F::zero() || !lambda.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "regularizer weight {lambda:?}"
        )));
    }
    let scores = reference_scores(slice, plan, want_grad.then_some(grid))?;
    let f = assemble_f(&scores.g, g_zero)?;
    let tv = total_variation(grid);
    let cost = F::one() / f + lambda * tv;
    if !cost.is_finite() {
        return Err(Error::NonFinite(format!("composite cost (f = {f:?})")));
    }
    let report = ObjectiveReport {
        f,
        g_t1: scores.g[0],
        g_tmid: scores.g[1],
        g_tn: scores.g[2],
        g_zero,
        tv,
        cost,
    };
    let grad = if want_grad {
        let mut grad = scores.grad_g_params;
        // d(1/f)/dG_combined, with G_combined accumulated in params space.
        let coeff = -(F::one() / (f * f)) / (cast::<F>(4.0) * g_zero);
        for g in &mut grad {
            *g = *g * coeff;
        }
        let tv_sub = tv_subgradient(grid);
        for (g, s) in grad.iter_mut().zip(tv_sub) {
            *g = *g + lambda * s;
        }
        if grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::NonFinite("cost gradient".into()));
        }
        Some(grad)
    } else {
        None
    };
    Ok((report, grad))
}

struct ReferenceScores<F> {
    g: [F; 3],
    /// d(G_t1 + 2 G_tmid + G_tn)/d params, before the 1/(4 G0) factor;
    /// empty unless a grid was supplied.
    grad_g_params: Vec<F>,
}

/// Warps the slice to its three reference times, scores each IWE, and
/// (optionally) accumulates the adjoint of the weighted score sum back onto
/// the tile parameters.
fn reference_scores<F: Scalar>(
    slice: &EventSlice,
    plan: &WarpPlan<'_, F>,
    grid: Option<&TileGrid<F>>,
) -> Result<ReferenceScores<F>> {
    let (w, h) = (slice.width(), slice.height());
    let sigma = cast::<F>(SIGMA);
    let refs = [
        (slice.t_first(), 1.0),
        (slice.t_mid(), 2.0),
        (slice.t_last(), 1.0),
    ];
    let mut g = [F::zero(); 3];
    // Per-pixel accumulation of weight * dt * (splat position sensitivity),
    // summed over the three references; scattered onto tiles afterwards.
    let mut acc_x = vec![F::zero(); if grid.is_some() { w * h } else { 0 }];
    let mut acc_y = vec![F::zero(); if grid.is_some() { w * h } else { 0 }];
    for (r, (t_ref, weight)) in refs.into_iter().enumerate() {
        let warped = match plan {
            WarpPlan::Constant(dense) => warp_events(slice, dense, t_ref)?,
            WarpPlan::TimeAware(volume) => warp_events_time_aware(slice, volume, t_ref)?,
        };
        let iwe = accumulate_iwe(&warped, w, h, sigma)?;
        let (gx, gy) = difference_planes(iwe.values(), w, h);
        g[r] = gx
            .iter()
            .zip(&gy)
            .map(|(&a, &b)| a * a + b * b)
            .sum::<F>()
            / cast::<F>((w * h) as f64);
        if grid.is_some() {
            let adjoint = score_adjoint_image(&gx, &gy, w, h);
            for (ev, we) in slice.events().iter().zip(&warped) {
                let s = splat_position_gradient(&adjoint, w, h, (we.x, we.y), sigma);
                let c = cast::<F>(weight * (ev.t - t_ref));
                let pix = usize::from(ev.y) * w + usize::from(ev.x);
                acc_x[pix] = acc_x[pix] + c * s.0;
                acc_y[pix] = acc_y[pix] + c * s.1;
            }
        }
    }
    let grad_g_params = if let Some(grid) = grid {
        let n = grid.side() * grid.side();
        let mut grad = vec![F::zero(); 2 * n];
        for y in 0..h {
            for x in 0..w {
                let i = y * w + x;
                let (ax, ay) = (acc_x[i], acc_y[i]);
                if ax == F::zero() && ay == F::zero() {
                    continue;
                }
                for (tile, wt) in grid.pixel_weights(x, y) {
                    grad[tile] = grad[tile] + wt * ax;
                    grad[n + tile] = grad[n + tile] + wt * ay;
                }
            }
        }
        grad
    } else {
        Vec::new()
    };
    Ok(ReferenceScores { g, grad_g_params })
}

/// Combines per-reference scores into f, in an order that keeps the zero
/// flow at exactly 1: with three bitwise-equal scores the numerator is
/// (g + g) + 2g = 4g without intermediate rounding.
fn assemble_f<F: Scalar>(g: &[F; 3], g_zero: F) -> Result<F> {
    let numerator = (g[0] + g[2]) + cast::<F>(2.0) * g[1];
    let f = numerator / (cast::<F>(4.0) * g_zero);
    if !f.is_finite() {
        return Err(Error::NonFinite(format!("focus value {f:?}")));
    }
    if f <= F::zero() {
        return Err(Error::Degenerate(format!("focus value {f:?}")));
    }
    Ok(f)
}

/// x and y difference planes: central in the interior, one-sided at the
/// borders, zero along axes thinner than 2 pixels.
fn difference_planes<F: Scalar>(values: &[F], w: usize, h: usize) -> (Vec<F>, Vec<F>) {
    let half = cast::<F>(0.5);
    let mut gx = vec![F::zero(); w * h];
    let mut gy = vec![F::zero(); w * h];
    if w >= 2 {
        for y in 0..h {
            let row = y * w;
            gx[row] = values[row + 1] - values[row];
            for x in 1..w - 1 {
                gx[row + x] = (values[row + x + 1] - values[row + x - 1]) * half;
            }
            gx[row + w - 1] = values[row + w - 1] - values[row + w - 2];
        }
    }
    if h >= 2 {
        for x in 0..w {
            gy[x] = values[w + x] - values[x];
            for y in 1..h - 1 {
                gy[y * w + x] = (values[(y + 1) * w + x] - values[(y - 1) * w + x]) * half;
            }
            gy[(h - 1) * w + x] = values[(h - 1) * w + x] - values[(h - 2) * w + x];
        }
    }
    (gx, gy)
}

/// dG/dI as an image: (2/|pixels|) * (Dx^T gx + Dy^T gy), the adjoint of
/// the difference stencil applied to the difference planes.
fn score_adjoint_image<F: Scalar>(gx: &[F], gy: &[F], w: usize, h: usize) -> Vec<F> {
    let half = cast::<F>(0.5);
    let mut b = vec![F::zero(); w * h];
    if w >= 2 {
        for y in 0..h {
            let row = y * w;
            b[row + 1] = b[row + 1] + gx[row];
            b[row] = b[row] - gx[row];
            for x in 1..w - 1 {
                let g = gx[row + x] * half;
                b[row + x + 1] = b[row + x + 1] + g;
                b[row + x - 1] = b[row + x - 1] - g;
            }
            let g = gx[row + w - 1];
            b[row + w - 1] = b[row + w - 1] + g;
            b[row + w - 2] = b[row + w - 2] - g;
        }
    }
    if h >= 2 {
        for x in 0..w {
            b[w + x] = b[w + x] + gy[x];
            b[x] = b[x] - gy[x];
            for y in 1..h - 1 {
                let g = gy[y * w + x] * half;
                b[(y + 1) * w + x] = b[(y + 1) * w + x] + g;
                b[(y - 1) * w + x] = b[(y - 1) * w + x] - g;
            }
            let g = gy[(h - 1) * w + x];
            b[(h - 1) * w + x] = b[(h - 1) * w + x] + g;
            b[(h - 2) * w + x] = b[(h - 2) * w + x] - g;
        }
    }
    let scale = cast::<F>(2.0 / (w * h) as f64);
    for v in &mut b {
        *v = *v * scale;
    }
    b
}

/// Sensitivity of sum(B * splat) to the splat center: sum over the window
/// of B(q) * kernel(q - mu) * (q - mu) / sigma^2.
fn splat_position_gradient<F: Scalar>(
    b: &[F],
    w: usize,
    h: usize,
    mu: (F, F),
    sigma: F,
) -> (F, F) {
    let radius = cast::<F>(3.0) * sigma;
    let norm = F::one() / (cast::<F>(2.0 * std::f64::consts::PI) * sigma * sigma);
    let inv_two_sigma2 = F::one() / (cast::<F>(2.0) * sigma * sigma);
    let inv_sigma2 = F::one() / (sigma * sigma);
    let (Some((x0, x1)), Some((y0, y1))) = (window(mu.0, radius, w), window(mu.1, radius, h))
    else {
        return (F::zero(), F::zero());
    };
    let mut kx: Vec<(F, F)> = Vec::with_capacity(x1 - x0 + 1);
    for px in x0..=x1 {
        let d = cast::<F>(px as f64) - mu.0;
        kx.push((d, (-(d * d) * inv_two_sigma2).exp()));
    }
    let mut sx = F::zero();
    let mut sy = F::zero();
    for py in y0..=y1 {
        let dy = cast::<F>(py as f64) - mu.1;
        let ky = (-(dy * dy) * inv_two_sigma2).exp();
        let row = py * w;
        for (ix, px) in (x0..=x1).enumerate() {
            let (dx, kxv) = kx[ix];
            let coeff = b[row + px] * norm * kxv * ky * inv_sigma2;
            sx = sx + coeff * dx;
            sy = sy + coeff * dy;
        }
    }
    (sx, sy)
}

/// Subgradient of the normalized L1 total variation in `params` layout,
/// with sign(0) taken as 0.
fn tv_subgradient<F: Scalar>(grid: &TileGrid<F>) -> Vec<F> {
    let side = grid.side();
    let n = side * side;
    let inv_n = F::one() / cast::<F>(n as f64);
    let mut sub = vec![F::zero(); 2 * n];
    let sign = |d: F| {
        if d > F::zero() {
            F::one()
        } else if d < F::zero() {
            -F::one()
        } else {
            F::zero()
        }
    };
    for (offset, plane) in [(0, grid.u_plane()), (n, grid.v_plane())] {
        for i in 0..side {
            for j in 0..side {
                let idx = i * side + j;
                if j + 1 < side {
                    let s = sign(plane[idx + 1] - plane[idx]) * inv_n;
                    sub[offset + idx + 1] = sub[offset + idx + 1] + s;
                    sub[offset + idx] = sub[offset + idx] - s;
                }
                if i + 1 < side {
                    let s = sign(plane[idx + side] - plane[idx]) * inv_n;
                    sub[offset + idx + side] = sub[offset + idx + side] + s;
                    sub[offset + idx] = sub[offset + idx] - s;
                }
            }
        }
    }
    sub
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::events::{generate_linear_motion_events, Event, ScenePattern};
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn iwe_from(values: Vec<f64>, w: usize, h: usize) -> Iwe<f64> {
        Iwe::from_values(w, h, values, 1.0)
    }

    fn oracle_scene() -> (EventSlice, DenseFlow<f64>) {
        let pattern = ScenePattern::random_dots(48, 48, 0.04, 7).unwrap();
        let (slice, truth) =
            generate_linear_motion_events(&pattern, (12.0, -6.0), 0.4, 18, 11).unwrap();
        (slice, truth)
    }

    #[test]
    fn constant_image_has_zero_gradient_score() {
        let iwe = iwe_from(vec![3.7; 30], 6, 5);
        assert_eq!(gradient_magnitude(&iwe), 0.0);
    }

    #[test]
    fn column_ramp_scores_one() {
        let values: Vec<f64> = (0..16).map(|i| (i % 4) as f64).collect();
        let iwe = iwe_from(values, 4, 4);
        assert_eq!(gradient_magnitude(&iwe), 1.0);
    }

    #[test]
    fn variance_of_two_level_image_is_one() {
        let mut values = vec![0.0; 8];
        values[4..].fill(2.0);
        let iwe = iwe_from(values, 4, 2);
        assert_eq!(image_variance(&iwe), 1.0);
        assert_eq!(image_variance(&iwe_from(vec![5.0; 9], 3, 3)), 0.0);
    }

    #[test]
    fn variance_scales_quadratically() {
        let values: Vec<f64> = (0..24).map(|k| (k as f64 * 0.9).sin()).collect();
        let scaled: Vec<f64> = values.iter().map(|v| v * 3.0).collect();
        let a = image_variance(&iwe_from(values, 6, 4));
        let b = image_variance(&iwe_from(scaled, 6, 4));
        assert_relative_eq!(b, 9.0 * a, max_relative = 1e-12);
    }

    #[test]
    fn zero_flow_scores_exactly_one() {
        let (slice, _) = oracle_scene();
        let zero = DenseFlow::constant(48, 48, (0.0f64, 0.0), slice.t_mid());
        let report = multi_ref_focus(&slice, WarpPlan::Constant(&zero)).unwrap();
        assert_eq!(report.f, 1.0);
        assert_eq!(report.cost, 1.0);
    }

    #[test]
    fn true_flow_scores_above_one_on_the_oracle_scene() {
        let (slice, truth) = oracle_scene();
        let report = multi_ref_focus(&slice, WarpPlan::Constant(&truth)).unwrap();
        assert!(report.f > 1.0, "focus {} at the generating flow", report.f);
        assert!(report.cost < 1.0);
    }

    #[test]
    fn focus_peaks_at_or_next_to_the_true_flow_along_the_segment() {
        let (slice, truth) = oracle_scene();
        let (tu, tv) = truth.at(0, 0);
        let mut best = (0usize, f64::MIN);
        for step in 0..=10 {
            let a = step as f64 / 10.0;
            let flow = DenseFlow::constant(48, 48, (a * tu, a * tv), slice.t_mid());
            let f = multi_ref_focus(&slice, WarpPlan::Constant(&flow))
                .unwrap()
                .f;
            if f > best.1 {
                best = (step, f);
            }
        }
        assert!(best.0 >= 9, "focus peaked at segment point {}", best.0);
    }

    #[test]
    fn tv_matches_hand_enumeration() {
        let c = TileGrid::constant(3, 16, 16, (2.0f64, -1.0)).unwrap();
        assert_eq!(total_variation(&c), 0.0);
        let single = TileGrid::constant(1, 16, 16, (9.0f64, 9.0)).unwrap();
        assert_eq!(total_variation(&single), 0.0);
        let grid = TileGrid::from_components(
            2,
            16,
            16,
            vec![0.0, 1.0, 0.0, 1.0],
            vec![0.0; 4],
        )
        .unwrap();
        assert_eq!(total_variation(&grid), 0.5);
    }

    #[test]
    fn composite_cost_of_zero_flow_is_one_for_any_weight() {
        let (slice, _) = oracle_scene();
        let grid = TileGrid::zeros(2, 48, 48).unwrap();
        for lambda in [0.0, 0.0025, 0.3] {
            let report = composite_cost(&slice, &grid, lambda, Scheme::None, 5).unwrap();
            assert_eq!(report.cost, 1.0);
            assert_eq!(report.tv, 0.0);
        }
    }

    #[test]
    fn report_identity_holds_on_rough_grids() {
        let (slice, _) = oracle_scene();
        let grid = TileGrid::from_components(
            2,
            48,
            48,
            vec![3.0, -2.0, 0.5, 8.0],
            vec![-1.0, 4.0, 2.0, 0.0],
        )
        .unwrap();
        let lambda = 0.0025;
        let report = composite_cost(&slice, &grid, lambda, Scheme::None, 5).unwrap();
        assert_relative_eq!(
            report.cost,
            1.0 / report.f + lambda * report.tv,
            max_relative = 1e-15
        );
        assert!(report.tv > 0.0);
    }

    #[test]
    fn timestamp_loss_is_zero_when_all_events_share_one_time() {
        let events: Vec<Event> = (2..12)
            .map(|x| Event { x, y: 6, t: 0.0, p: 1 })
            .collect();
        let slice = EventSlice::new(events, 16, 16).unwrap();
        let flow = DenseFlow::constant(16, 16, (25.0f64, 1.0), 0.0);
        for normalized in [false, true] {
            assert_eq!(avg_timestamp_loss(&slice, &flow, normalized).unwrap(), 0.0);
        }
    }

    #[test]
    fn timestamp_loss_of_two_far_events_averages_their_squares() {
        let slice = EventSlice::new(
            vec![
                Event { x: 6, y: 10, t: 0.0, p: 1 },
                Event { x: 25, y: 10, t: 1.0, p: 1 },
            ],
            32,
            21,
        )
        .unwrap();
        let zero = DenseFlow::constant(32, 21, (0.0f64, 0.0), 0.5);
        // Pixels near the first event average to 0, near the second to 1;
        // both events sit in the interior so the two masked neighborhoods
        // have the same pixel count.
        let loss = avg_timestamp_loss(&slice, &zero, false).unwrap();
        assert_relative_eq!(loss, 0.5, max_relative = 1e-12);
        let norm = avg_timestamp_loss(&slice, &zero, true).unwrap();
        assert_relative_eq!(norm, 0.5, max_relative = 1e-12);
    }

    #[test]
    fn analytic_gradient_matches_central_differences() {
        let pattern = ScenePattern::random_dots(32, 32, 0.05, 21).unwrap();
        let (slice, _) = generate_linear_motion_events(&pattern, (6.0, -4.0), 0.2, 6, 33).unwrap();
        // Tile values are chosen so no bilinear combination cancels to an
        // exact integer velocity anywhere: a pixel with an exactly zero (or
        // integer-valued after dt scaling) component keeps a warped
        // coordinate pinned to a truncation-window breakpoint, where the
        // cost has a measure-zero jump that central differences straddle.
        let grid = TileGrid::from_components(
            2,
            32,
            32,
            vec![1.37f64, -0.52, 2.11, 0.29],
            vec![-1.03, 0.71, 0.49, 1.23],
        )
        .unwrap();
        let lambda = 0.0025;
        let (_, analytic) = cost_and_gradient(
            &slice,
            &grid,
            lambda,
            Scheme::None,
            5,
            GradientMode::Analytic,
        )
        .unwrap();
        let (_, fd) = cost_and_gradient(
            &slice,
            &grid,
            lambda,
            Scheme::None,
            5,
            GradientMode::FiniteDifference,
        )
        .unwrap();
        for (k, (a, n)) in analytic.iter().zip(&fd).enumerate() {
            let denom = n.abs().max(1e-8);
            assert!(
                (a - n).abs() / denom < 1e-4,
                "component {k}: analytic {a} vs central differences {n}"
            );
        }
    }

    proptest! {
        #[test]
        fn tv_is_absolutely_homogeneous(
            vals in proptest::collection::vec(-5.0..5.0f64, 8),
            alpha in -3.0..3.0f64,
        ) {
            let grid = TileGrid::from_components(
                2, 16, 16, vals[..4].to_vec(), vals[4..].to_vec(),
            ).unwrap();
            let scaled_vals: Vec<f64> = vals.iter().map(|v| v * alpha).collect();
            let scaled = TileGrid::from_components(
                2, 16, 16, scaled_vals[..4].to_vec(), scaled_vals[4..].to_vec(),
            ).unwrap();
            prop_assert!(
                (total_variation(&scaled) - alpha.abs() * total_variation(&grid)).abs() < 1e-12
            );
        }

        #[test]
        fn focus_of_zero_flow_is_one_for_random_slices(seed in 0u64..50) {
            let pattern = ScenePattern::random_dots(24, 24, 0.08, seed).unwrap();
            let (slice, _) =
                generate_linear_motion_events(&pattern, (5.0, 3.0), 0.3, 4, seed + 1).unwrap();
            let zero = DenseFlow::constant(24, 24, (0.0f64, 0.0), slice.t_mid());
            let report = multi_ref_focus(&slice, WarpPlan::Constant(&zero)).unwrap();
            prop_assert_eq!(report.f, 1.0);
        }
    }
}
