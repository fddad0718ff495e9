//! Transport of a flow field across a time span.
//!
//! The flow is treated as constant along its own motion: each velocity value
//! rides its own trajectory, which the componentwise system
//!
//! ```text
//! d v_x/dt + v_x d v_x/dx + v_y d v_x/dy = 0
//! d v_y/dt + v_x d v_y/dx + v_y d v_y/dy = 0
//! ```
//!
//! expresses on the pixel grid. Two explicit first-order steppers are
//! provided: plain upwind differences, and a variant whose self-advection
//! terms use conservative flux differences (sharper shocks, same first-order
//! accuracy). Backward spans reuse the forward stepper through the exact
//! symmetry (t, v) -> (-t, -v) of the system, which is equivalent to picking
//! the upwind side by the sign of v * sign(dt). Spatial boundaries replicate
//! edge values, grid spacing is one pixel on both axes, and every sub-step
//! is checked against the advective stability bound.
//!
//! [`build_volume`] stacks propagated fields into time bins so that a warp
//! can look up the velocity at an event's own timestamp.

use crate::cast;
use crate::error::{Error, Result};
use crate::events::EventSlice;
use crate::flowrep::DenseFlow;
use crate::Scalar;

/// How a flow field is carried away from its reference time.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scheme {
    /// No transport: every bin repeats the reference field.
    None,
    /// First-order upwind differences for all advection terms.
    Upwind,
    /// Conservative flux differences for the self-advection terms
    /// (v_x along x, v_y along y); cross-terms stay upwind.
    Burgers,
}

impl std::fmt::Display for Scheme {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Scheme::None => "none",
            Scheme::Upwind => "upwind",
            Scheme::Burgers => "burgers",
        })
    }
}

impl std::str::FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(Scheme::None),
            "upwind" => Ok(Scheme::Upwind),
            "burgers" => Ok(Scheme::Burgers),
            other => Err(Error::InvalidArgument(format!(
                "unknown transport scheme {other:?} (expected none, upwind or burgers)"
            ))),
        }
    }
}

/// A stack of dense flow fields over equal time bins covering a slice span.
///
/// One bin is the boundary bin: it holds the untransported reference field
/// and its `t_ref` is the originating slice's midpoint time. Every other
/// bin's `t_ref` is its interval center.
#[derive(Debug, Clone)]
pub struct FlowVolume<F> {
    bins: Vec<DenseFlow<F>>,
    t_start: f64,
    t_end: f64,
    boundary_idx: usize,
    scheme: Scheme,
}

impl<F: Scalar> FlowVolume<F> {
    pub fn width(&self) -> usize {
        self.bins[0].width()
    }

    pub fn height(&self) -> usize {
        self.bins[0].height()
    }

    pub fn n_bins(&self) -> usize {
        self.bins.len()
    }

    pub fn t_start(&self) -> f64 {
        self.t_start
    }

    pub fn t_end(&self) -> f64 {
        self.t_end
    }

    pub fn scheme(&self) -> Scheme {
        self.scheme
    }

    pub fn bin(&self, idx: usize) -> &DenseFlow<F> {
        &self.bins[idx]
    }

    /// The untransported reference field.
    pub fn boundary(&self) -> &DenseFlow<F> {
        &self.bins[self.boundary_idx]
    }

    pub fn boundary_index(&self) -> usize {
        self.boundary_idx
    }

    /// Assembles a volume directly from per-bin fields.
    ///
    /// The solver re-anchors previously transported bins onto a trial
    /// boundary field with this; it does not re-run the transport, so the
    /// caller owns the consistency of `bins` with `scheme`.
    pub(crate) fn from_parts(
        bins: Vec<DenseFlow<F>>,
        t_start: f64,
        t_end: f64,
        boundary_idx: usize,
        scheme: Scheme,
    ) -> Self {
        debug_assert!(!bins.is_empty() && boundary_idx < bins.len());
        FlowVolume { bins, t_start, t_end, boundary_idx, scheme }
    }

    /// Velocity at integer pixel (x, y) from the bin whose interval contains
    /// `t`. Intervals are half-open with the tie going to the later bin; the
    /// span's end time belongs to the last bin.
    pub fn sample_flow(&self, x: u16, y: u16, t: f64) -> Result<(F, F)> {
        if t < self.t_start || t > self.t_end || !t.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "time {t} outside volume span [{}, {}]",
                self.t_start, self.t_end
            )));
        }
        let (x, y) = (usize::from(x), usize::from(y));
        if x >= self.width() || y >= self.height() {
            return Err(Error::InvalidArgument(format!(
                "pixel ({x}, {y}) outside {}x{} volume",
                self.width(),
                self.height()
            )));
        }
        let span = self.t_end - self.t_start;
        let idx = if span > 0.0 {
            let raw = ((t - self.t_start) / span * self.bins.len() as f64).floor();
            (raw as usize).min(self.bins.len() - 1)
        } else {
            0
        };
        Ok(self.bins[idx].at(x, y))
    }
}

/// Largest stable explicit step for advection by `flow` on a grid with the
/// given spacings, including a 0.9 safety factor. The all-zero field returns
/// positive infinity.
pub fn cfl_max_dt<F: Scalar>(flow: &DenseFlow<F>, dx: F, dy: F) -> F {
    let rate = flow.max_advection_rate(dx, dy);
    if rate == F::zero() {
        F::infinity()
    } else {
        cast::<F>(0.9) / rate
    }
}

/// Carries `boundary` from `t_from` to `t_target` in `n_substeps` explicit
/// upwind steps. A negative span steps backward in time.
pub fn propagate_upwind<F: Scalar>(
    boundary: &DenseFlow<F>,
    t_from: f64,
    t_target: f64,
    n_substeps: usize,
) -> Result<DenseFlow<F>> {
    propagate(boundary, t_from, t_target, n_substeps, Scheme::Upwind)
}

/// As [`propagate_upwind`] but with conservative self-advection fluxes.
pub fn propagate_burgers<F: Scalar>(
    boundary: &DenseFlow<F>,
    t_from: f64,
    t_target: f64,
    n_substeps: usize,
) -> Result<DenseFlow<F>> {
    propagate(boundary, t_from, t_target, n_substeps, Scheme::Burgers)
}

pub(crate) fn propagate<F: Scalar>(
    boundary: &DenseFlow<F>,
    t_from: f64,
    t_target: f64,
    n_substeps: usize,
    scheme: Scheme,
) -> Result<DenseFlow<F>> {
    if n_substeps == 0 {
        return Err(Error::InvalidArgument("zero sub-steps".into()));
    }
    if !boundary.is_finite() {
        return Err(Error::NonFinite("transport boundary field".into()));
    }
    let span = t_target - t_from;
    if !span.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "non-finite transport span [{t_from}, {t_target}]"
        )));
    }
    if span == 0.0 || scheme == Scheme::None {
        return Ok(boundary.clone().with_t_ref(t_target));
    }
    // A backward span is the forward evolution of the negated field: the
    // system is invariant under (t, v) -> (-t, -v), and the negation also
    // flips the upwind side exactly as the sign rule v * sign(dt) demands.
    let backward = span < 0.0;
    let mut field = if backward {
        boundary.map(|c| -c)
    } else {
        boundary.clone()
    };
    let dt = cast::<F>(span.abs() / n_substeps as f64);
    for step in 0..n_substeps {
        field = step_forward(&field, dt, scheme, step + 1, n_substeps)?;
    }
    if backward {
        field = field.map(|c| -c);
    }
    if !field.is_finite() {
        return Err(Error::Stability {
            step: n_substeps,
            total: n_substeps,
            detail: "propagated field is not finite".into(),
        });
    }
    Ok(field.with_t_ref(t_target))
}

/// One forward-in-time explicit step of size `dt > 0`.
fn step_forward<F: Scalar>(
    field: &DenseFlow<F>,
    dt: F,
    scheme: Scheme,
    step: usize,
    total: usize,
) -> Result<DenseFlow<F>> {
    let rate = field.max_advection_rate(F::one(), F::one());
    if dt * rate >= F::one() {
        return Err(Error::Stability {
            step,
            total,
            detail: format!(
                "dt {:?} times advection rate {:?} reaches 1",
                dt, rate
            ),
        });
    }
    let (w, h) = (field.width(), field.height());
    let u = field.u_plane();
    let v = field.v_plane();
    let mut nu = vec![F::zero(); w * h];
    let mut nv = vec![F::zero(); w * h];
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            let (vx, vy) = (u[i], v[i]);
            let (du_dt, dv_dt) = match scheme {
                Scheme::Upwind => (
                    vx * dx_upwind(u, w, x, y, vx) + vy * dy_upwind(u, w, h, x, y, vy),
                    vx * dx_upwind(v, w, x, y, vx) + vy * dy_upwind(v, w, h, x, y, vy),
                ),
                Scheme::Burgers => (
                    flux_div_x(u, w, x, y) + vy * dy_upwind(u, w, h, x, y, vy),
                    vx * dx_upwind(v, w, x, y, vx) + flux_div_y(v, w, h, x, y),
                ),
                Scheme::None => (F::zero(), F::zero()),
            };
            nu[i] = vx - dt * du_dt;
            nv[i] = vy - dt * dv_dt;
        }
    }
    DenseFlow::from_components(w, h, nu, nv, field.t_ref())
}

/// One-sided x-difference of `plane` at (x, y), taken on the side the
/// advecting velocity comes from; edge values replicate, so a difference
/// across the frame border is zero.
#[inline]
fn dx_upwind<F: Scalar>(plane: &[F], w: usize, x: usize, y: usize, advect: F) -> F {
    let i = y * w + x;
    if advect > F::zero() {
        if x == 0 {
            F::zero()
        } else {
            plane[i] - plane[i - 1]
        }
    } else if x + 1 == w {
        F::zero()
    } else {
        plane[i + 1] - plane[i]
    }
}

#[inline]
fn dy_upwind<F: Scalar>(plane: &[F], w: usize, h: usize, x: usize, y: usize, advect: F) -> F {
    let i = y * w + x;
    if advect > F::zero() {
        if y == 0 {
            F::zero()
        } else {
            plane[i] - plane[i - w]
        }
    } else if y + 1 == h {
        F::zero()
    } else {
        plane[i + w] - plane[i]
    }
}

/// Signed square c|c|, written so that equal neighbor values cancel bitwise
/// against the gated fluxes below (constant fields stay exact fixed points).
#[inline]
fn signed_square<F: Scalar>(c: F) -> F {
    if c > F::zero() {
        c * c
    } else if c < F::zero() {
        -(c * c)
    } else {
        F::zero()
    }
}

/// Conservative difference for the v_x d v_x/dx term:
/// 0.5 * (c|c| + F - B), where F takes the right neighbor's squared value
/// only when that neighbor flows left, and B the left neighbor's only when
/// it flows right.
#[inline]
fn flux_div_x<F: Scalar>(plane: &[F], w: usize, x: usize, y: usize) -> F {
    let i = y * w + x;
    let c = plane[i];
    let next = plane[if x + 1 == w { i } else { i + 1 }];
    let prev = plane[if x == 0 { i } else { i - 1 }];
    let f = if next < F::zero() { next * next } else { F::zero() };
    let b = if prev > F::zero() { prev * prev } else { F::zero() };
    cast::<F>(0.5) * (signed_square(c) + f - b)
}

#[inline]
fn flux_div_y<F: Scalar>(plane: &[F], w: usize, h: usize, x: usize, y: usize) -> F {
    let i = y * w + x;
    let c = plane[i];
    let next = plane[if y + 1 == h { i } else { i + w }];
    let prev = plane[if y == 0 { i } else { i - w }];
    let f = if next < F::zero() { next * next } else { F::zero() };
    let b = if prev > F::zero() { prev * prev } else { F::zero() };
    cast::<F>(0.5) * (signed_square(c) + f - b)
}

/// Number of sub-steps needed to cross `span` seconds without exceeding the
/// stability bound of the current field.
fn substeps_for<F: Scalar>(field: &DenseFlow<F>, span: f64) -> usize {
    let max_dt = cfl_max_dt(field, F::one(), F::one());
    if span <= 0.0 || max_dt.is_infinite() {
        return 1;
    }
    let max_dt = max_dt.to_f64().unwrap_or(f64::MIN_POSITIVE);
    ((span / max_dt).ceil() as usize).max(1)
}

/// Transports `boundary` (defined at the slice midpoint) across the slice
/// span and stacks the results into `n_bins` equal time bins. The bin whose
/// interval contains the midpoint keeps the boundary field; later bins are
/// produced by forward propagation to their interval centers, earlier bins
/// by backward propagation, each from its neighbor.
pub fn build_volume<F: Scalar>(
    boundary: &DenseFlow<F>,
    slice: &EventSlice,
    n_bins: usize,
    scheme: Scheme,
) -> Result<FlowVolume<F>> {
    if n_bins == 0 {
        return Err(Error::InvalidArgument("zero time bins".into()));
    }
    if boundary.width() != slice.width() || boundary.height() != slice.height() {
        return Err(Error::InvalidArgument(format!(
            "boundary geometry {}x{} does not match slice {}x{}",
            boundary.width(),
            boundary.height(),
            slice.width(),
            slice.height()
        )));
    }
    if !boundary.is_finite() {
        return Err(Error::NonFinite("transport boundary field".into()));
    }
    let (t_start, t_end, t_mid) = (slice.t_first(), slice.t_last(), slice.t_mid());
    let span = t_end - t_start;
    if span == 0.0 {
        return Ok(FlowVolume {
            bins: vec![boundary.clone().with_t_ref(t_mid)],
            t_start,
            t_end,
            boundary_idx: 0,
            scheme,
        });
    }
    let bin_width = span / n_bins as f64;
    let center = |idx: usize| t_start + (idx as f64 + 0.5) * bin_width;
    let boundary_idx = (((t_mid - t_start) / bin_width).floor() as usize).min(n_bins - 1);
    let mut bins = vec![boundary.clone().with_t_ref(t_mid); n_bins];
    if scheme == Scheme::None {
        for (idx, bin) in bins.iter_mut().enumerate() {
            if idx != boundary_idx {
                let t = center(idx);
                *bin = boundary.clone().with_t_ref(t);
            }
        }
    } else {
        for idx in boundary_idx + 1..n_bins {
            let from = &bins[idx - 1];
            let (t0, t1) = (from.t_ref(), center(idx));
            let n = substeps_for(from, t1 - t0);
            bins[idx] = propagate(from, t0, t1, n, scheme)?;
        }
        for idx in (0..boundary_idx).rev() {
            let from = &bins[idx + 1];
            let (t0, t1) = (from.t_ref(), center(idx));
            let n = substeps_for(from, t0 - t1);
            bins[idx] = propagate(from, t0, t1, n, scheme)?;
        }
    }
    Ok(FlowVolume {
        bins,
        t_start,
        t_end,
        boundary_idx,
        scheme,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::events::Event;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn row_field(values: &[f64], rows: usize) -> DenseFlow<f64> {
        let w = values.len();
        let u: Vec<f64> = (0..rows).flat_map(|_| values.iter().copied()).collect();
        let v = vec![0.0; w * rows];
        DenseFlow::from_components(w, rows, u, v, 0.0).unwrap()
    }

    fn slice_spanning(w: usize, h: usize, t0: f64, t1: f64) -> EventSlice {
        EventSlice::new(
            vec![
                Event { x: 0, y: 0, t: t0, p: 1 },
                Event { x: 1, y: 0, t: t1, p: -1 },
            ],
            w,
            h,
        )
        .unwrap()
    }

    #[test]
    fn stable_step_bound_matches_hand_values() {
        let f = DenseFlow::constant(8, 8, (2.0f64, 0.0), 0.0);
        assert_eq!(cfl_max_dt(&f, 1.0, 1.0), 0.45);
        let g = DenseFlow::constant(8, 8, (1.0f64, 1.0), 0.0);
        assert_eq!(cfl_max_dt(&g, 1.0, 1.0), 0.45);
        let z = DenseFlow::constant(8, 8, (0.0f64, 0.0), 0.0);
        assert!(cfl_max_dt(&z, 1.0, 1.0).is_infinite());
    }

    #[test]
    fn constant_field_is_a_bitwise_fixed_point_of_both_schemes() {
        let f = DenseFlow::constant(12, 10, (3.0f64, -1.0), 0.5);
        for (a, b) in [(0.5, 0.9), (0.5, 0.1)] {
            let up = propagate_upwind(&f, a, b, 7).unwrap();
            let bu = propagate_burgers(&f, a, b, 7).unwrap();
            assert_eq!(up.u_plane(), f.u_plane());
            assert_eq!(up.v_plane(), f.v_plane());
            assert_eq!(bu.u_plane(), f.u_plane());
            assert_eq!(bu.v_plane(), f.v_plane());
        }
    }

    #[test]
    fn zero_field_stays_zero() {
        let f = DenseFlow::constant(6, 6, (0.0f64, 0.0), 0.0);
        let out = propagate_upwind(&f, 0.0, 3.0, 4).unwrap();
        assert!(out.u_plane().iter().all(|&c| c == 0.0));
        assert!(out.v_plane().iter().all(|&c| c == 0.0));
    }

    #[test]
    fn zero_span_returns_the_boundary_bitwise() {
        let u: Vec<f64> = (0..48).map(|k| (k as f64 * 0.7).sin()).collect();
        let v: Vec<f64> = (0..48).map(|k| (k as f64 * 0.3).cos()).collect();
        let f = DenseFlow::from_components(8, 6, u, v, 1.0).unwrap();
        let out = propagate_burgers(&f, 1.0, 1.0, 3).unwrap();
        assert_eq!(out.u_plane(), f.u_plane());
        assert_eq!(out.v_plane(), f.v_plane());
    }

    // A rightward step front between two cells does not move past a grid
    // point in one stable step, so the sampled grid is unchanged; this is
    // exactly what tracing x(t) = x0 + v*t predicts cell by cell for the
    // cells whose trajectory origin is unambiguous.
    #[test]
    fn upwind_step_front_matches_characteristic_tracing() {
        let vals: Vec<f64> = (0..16).map(|x| if x < 8 { 1.0 } else { 0.0 }).collect();
        let f = row_field(&vals, 3);
        let dt = 0.4;
        let out = propagate_upwind(&f, 0.0, dt, 1).unwrap();
        for x in 0..16usize {
            let origin = x as f64 - vals[x] * dt;
            let expected = if origin < 8.0 { vals[x] } else { 0.0 };
            assert_eq!(out.at(x, 1).0, expected, "cell {x}");
        }
        assert_eq!(out.u_plane(), f.u_plane());
    }

    // Hand evaluation of the conservative update on a 1-D step: every cell
    // balances except the first zero cell, which receives half the left
    // neighbor's squared inflow.
    #[test]
    fn burgers_shock_cell_matches_hand_update() {
        let vals: Vec<f64> = (0..8).map(|x| if x < 4 { 1.0 } else { 0.0 }).collect();
        let f = row_field(&vals, 1);
        let dt = 0.25;
        let out = propagate_burgers(&f, 0.0, dt, 1).unwrap();
        let expected = [1.0, 1.0, 1.0, 1.0, 0.5 * dt, 0.0, 0.0, 0.0];
        for x in 0..8 {
            assert_relative_eq!(out.at(x, 0).0, expected[x], max_relative = 1e-15);
        }
    }

    #[test]
    fn backward_then_forward_round_trip_is_small_for_smooth_fields() {
        let (w, h) = (16, 16);
        let u: Vec<f64> = (0..h)
            .flat_map(|y| {
                (0..w).map(move |x| 0.3 * ((x as f64) * 0.4).sin() * ((y as f64) * 0.3).cos())
            })
            .collect();
        let v: Vec<f64> = (0..h)
            .flat_map(|y| (0..w).map(move |x| 0.2 * ((x as f64 + y as f64) * 0.25).sin()))
            .collect();
        let f = DenseFlow::from_components(w, h, u, v, 0.0).unwrap();
        let fwd = propagate_upwind(&f, 0.0, 0.5, 50).unwrap();
        let back = propagate_upwind(&fwd, 0.5, 0.0, 50).unwrap();
        let err = f
            .u_plane()
            .iter()
            .zip(back.u_plane())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f64, f64::max);
        // First-order schemes are dissipative, so the round trip is not
        // exact; it must stay well below the field amplitude.
        assert!(err < 0.05, "round-trip error {err}");
    }

    #[test]
    fn unstable_substep_is_reported_with_its_index() {
        let f = DenseFlow::constant(8, 8, (2.0f64, 0.0), 0.0);
        // dt = 0.5 per sub-step while the bound is strict: 0.5 * 2 = 1.
        let err = propagate_upwind(&f, 0.0, 1.0, 2).unwrap_err();
        match err {
            Error::Stability { step, total, .. } => {
                assert_eq!((step, total), (1, 2));
            }
            other => panic!("expected stability error, got {other:?}"),
        }
    }

    #[test]
    fn volume_with_scheme_none_repeats_the_boundary() {
        let f = DenseFlow::constant(8, 8, (1.5f64, -0.5), 0.5);
        let slice = slice_spanning(8, 8, 0.0, 1.0);
        let vol = build_volume(&f, &slice, 5, Scheme::None).unwrap();
        assert_eq!(vol.n_bins(), 5);
        for idx in 0..5 {
            assert_eq!(vol.bin(idx).u_plane(), f.u_plane());
        }
        assert_eq!(vol.boundary_index(), 2);
        assert_eq!(vol.boundary().t_ref(), 0.5);
    }

    #[test]
    fn constant_boundary_builds_constant_volume_under_both_schemes() {
        let f = DenseFlow::constant(8, 8, (2.0f64, 1.0), 0.5);
        let slice = slice_spanning(8, 8, 0.0, 1.0);
        for scheme in [Scheme::Upwind, Scheme::Burgers] {
            let vol = build_volume(&f, &slice, 40, scheme).unwrap();
            assert_eq!(vol.n_bins(), 40);
            for idx in 0..40 {
                assert_eq!(vol.bin(idx).u_plane(), f.u_plane());
                assert_eq!(vol.bin(idx).v_plane(), f.v_plane());
            }
        }
    }

    #[test]
    fn single_bin_volume_is_the_boundary() {
        let u: Vec<f64> = (0..64).map(|k| 0.1 * k as f64).collect();
        let f = DenseFlow::from_components(8, 8, u.clone(), vec![0.0; 64], 0.5).unwrap();
        let slice = slice_spanning(8, 8, 0.0, 1.0);
        let vol = build_volume(&f, &slice, 1, Scheme::Burgers).unwrap();
        assert_eq!(vol.n_bins(), 1);
        assert_eq!(vol.bin(0).u_plane(), u.as_slice());
        assert_eq!(vol.sample_flow(3, 2, 0.99).unwrap(), f.at(3, 2));
    }

    #[test]
    fn sampling_picks_the_containing_bin_with_later_bin_ties() {
        let f = DenseFlow::constant(4, 4, (1.0f64, 0.0), 0.5);
        let slice = slice_spanning(4, 4, 0.0, 1.0);
        let mut vol = build_volume(&f, &slice, 2, Scheme::None).unwrap();
        // Overwrite the two bins with distinguishable constants.
        vol.bins[0] = DenseFlow::constant(4, 4, (1.0, 0.0), 0.25);
        vol.bins[1] = DenseFlow::constant(4, 4, (0.0, 1.0), 0.75);
        assert_eq!(vol.sample_flow(0, 0, 0.2).unwrap(), (1.0, 0.0));
        assert_eq!(vol.sample_flow(0, 0, 0.5).unwrap(), (0.0, 1.0));
        assert_eq!(vol.sample_flow(0, 0, 1.0).unwrap(), (0.0, 1.0));
        assert!(vol.sample_flow(0, 0, 1.0 + 1e-9).is_err());
        assert!(vol.sample_flow(0, 0, -1e-9).is_err());
    }

    #[test]
    fn zero_span_slice_collapses_to_one_bin() {
        let f = DenseFlow::constant(4, 4, (1.0f64, 2.0), 0.25);
        let slice = EventSlice::new(
            vec![Event { x: 1, y: 1, t: 0.25, p: 1 }],
            4,
            4,
        )
        .unwrap();
        let vol = build_volume(&f, &slice, 5, Scheme::Upwind).unwrap();
        assert_eq!(vol.n_bins(), 1);
        assert_eq!(vol.sample_flow(2, 2, 0.25).unwrap(), (1.0, 2.0));
    }

    proptest! {
        // One stable upwind step of monotone same-sign 1-D data stays inside
        // the initial value range: each update is a convex combination of a
        // cell and its upwind neighbor.
        #[test]
        fn upwind_creates_no_new_extrema_on_monotone_data(
            base in 0.2..2.0f64,
            steps in proptest::collection::vec(0.0..0.5f64, 7),
            positive: bool,
            increasing: bool,
        ) {
            let mut vals = vec![base];
            for s in &steps {
                let last = *vals.last().unwrap();
                vals.push(last + s);
            }
            if !increasing {
                vals.reverse();
            }
            if !positive {
                for c in &mut vals {
                    *c = -*c;
                }
            }
            let f = row_field(&vals, 2);
            let dt = 0.9 * cfl_max_dt(&f, 1.0, 1.0);
            let out = propagate_upwind(&f, 0.0, dt, 1).unwrap();
            let (lo, hi) = vals
                .iter()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &c| {
                    (lo.min(c), hi.max(c))
                });
            for &c in out.u_plane() {
                prop_assert!(c >= lo - 1e-12 && c <= hi + 1e-12);
            }
        }

        // Building a volume and sampling anywhere inside the boundary bin
        // returns the boundary value untouched.
        #[test]
        fn boundary_bin_samples_reproduce_the_boundary(
            vx in -1.0..1.0f64,
            vy in -1.0..1.0f64,
            n_bins in 1usize..9,
        ) {
            let f = DenseFlow::constant(6, 6, (vx, vy), 0.5);
            let slice = slice_spanning(6, 6, 0.0, 1.0);
            let vol = build_volume(&f, &slice, n_bins, Scheme::Burgers).unwrap();
            let idx = vol.boundary_index();
            let bin_width = 1.0 / n_bins as f64;
            let t = (idx as f64 + 0.5) * bin_width;
            prop_assert_eq!(vol.sample_flow(3, 3, t).unwrap(), (vx, vy));
        }
    }
}
