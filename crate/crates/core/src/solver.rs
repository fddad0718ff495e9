//! Coarse-to-fine refinement of the tile flow by a damped truncated-Newton
//! loop.
//!
//! Each scale minimizes the composite cost with a safeguarded Newton-CG
//! loop: Hessian-vector products come from finite differences of the
//! gradient, a short conjugate-gradient solve turns them into a search
//! direction, and a backtracking line search keeps every accepted step
//! strictly downhill. An adaptively scaled steepest-descent candidate runs
//! through the same line search each iteration and wins whenever it makes
//! more progress, which carries the solve across flat stretches where the
//! differenced curvature is unreliable. A scale's result seeds the next
//! finer grid by bilinear upsampling; across slices the previous solution
//! seeds the next via [`solve_sequence`].

use crate::error::{Error, Result};
use crate::events::EventSlice;
use crate::flowrep::{
    dense_from_tiles, init_next_slice, side_at_scale, upsample_tile_grid, DenseFlow, TileGrid,
};
use crate::objective::{self, GradientMode, ObjectiveReport, WarpPlan};
use crate::pde::{build_volume, FlowVolume, Scheme};
use crate::{cast, Scalar};

/// Stop a scale once the gradient norm falls below this.
const GRAD_NORM_STOP: f64 = 1e-6;
/// CG stops when the residual drops below this fraction of the gradient
/// norm.
const CG_FORCING: f64 = 0.1;
/// Upper bound on CG iterations regardless of parameter count.
const CG_CAP: usize = 25;
/// Sufficient-decrease constant of the line search.
const ARMIJO_C: f64 = 1e-4;
/// Step halvings before the line search gives up on a direction.
const MAX_BACKTRACKS: usize = 30;
/// Base step for differencing the gradient into Hessian-vector products;
/// scaled by 1 + the iterate norm.
const HV_STEP: f64 = 1e-6;

/// Knobs for [`solve_multiscale`]; `Default` matches the CLI defaults.
#[derive(Debug, Clone)]
pub struct SolveConfig<F> {
    /// Requested number of tile scales, coarsest (single tile) first. Capped
    /// so the finest grid never has more tiles per axis than pixels.
    pub n_scales: u32,
    /// Total-variation weight in the composite cost.
    pub lambda: F,
    pub max_iters_per_scale: usize,
    /// Transport scheme for time-aware warping; `Scheme::None` keeps a
    /// single field over the slice span.
    pub warp_mode: Scheme,
    /// Time bins per slice when `warp_mode` is not `None`.
    pub n_bins: usize,
    /// With `FiniteDifference` the solver drops the Newton model and runs
    /// plain gradient descent on fully re-transported costs; slow, for
    /// cross-checking the analytic path.
    pub gradient_mode: GradientMode,
    /// Stop a scale once an accepted step decreases the cost by less than
    /// this.
    pub tol: F,
}

impl<F: Scalar> Default for SolveConfig<F> {
    fn default() -> Self {
        SolveConfig {
            n_scales: 5,
            lambda: cast::<F>(0.0025),
            max_iters_per_scale: 20,
            warp_mode: Scheme::None,
            n_bins: 5,
            gradient_mode: GradientMode::Analytic,
            tol: cast::<F>(1e-6),
        }
    }
}

impl<F: Scalar> SolveConfig<F> {
    fn validate(&self) -> Result<()> {
        if self.n_scales == 0 {
            return Err(Error::InvalidArgument("zero scales".into()));
        }
        if self.max_iters_per_scale == 0 {
            return Err(Error::InvalidArgument("zero iterations per scale".into()));
        }
        if !(self.lambda >= F::zero()) || !self.lambda.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "regularizer weight {:?}",
                self.lambda
            )));
        }
        if self.n_bins == 0 {
            return Err(Error::InvalidArgument("zero time bins".into()));
        }
        if !(self.tol >= F::zero()) {
            return Err(Error::InvalidArgument(format!(
                "stop tolerance {:?}",
                self.tol
            )));
        }
        Ok(())
    }
}

/// What one scale's refinement did.
#[derive(Debug, Clone)]
pub struct ScaleTrace<F> {
    pub scale: u32,
    /// Accepted descent steps.
    pub iterations: usize,
    /// Composite cost of the scale's initializer.
    pub initial_cost: F,
    /// Scores at the scale's final grid.
    pub report: ObjectiveReport<F>,
}

/// Output of [`solve_multiscale`].
#[derive(Debug, Clone)]
pub struct SolveResult<F> {
    pub finest_grid: TileGrid<F>,
    /// Finest grid sampled per pixel, anchored at the slice midpoint.
    pub dense: DenseFlow<F>,
    /// One entry per scale actually run, coarsest first.
    pub scales: Vec<ScaleTrace<F>>,
}

impl<F: Scalar> SolveResult<F> {
    /// Accepted steps summed over all scales.
    pub fn total_iterations(&self) -> usize {
        self.scales.iter().map(|t| t.iterations).sum()
    }
}

/// Cost and gradient oracle for one slice at one scale.
///
/// In time-aware mode with analytic gradients the transported bins are
/// frozen as per-bin offsets from the boundary field at the last accepted
/// iterate. Line-search and curvature probes then shift all bins rigidly
/// with the trial boundary, which keeps them smooth and cheap; the offsets
/// are re-transported only when a step is up for acceptance.
struct Evaluator<'a, F: Scalar> {
    slice: &'a EventSlice,
    lambda: F,
    scheme: Scheme,
    n_bins: usize,
    /// Re-transport on every evaluation instead of freezing offsets; implied
    /// by finite-difference gradients so that costs and gradients describe
    /// the same function.
    full_model: bool,
    g_zero: F,
    frozen: Option<FrozenTransport<F>>,
}

struct FrozenTransport<F> {
    /// Bin minus boundary field, one per bin, each keeping its bin time.
    offsets: Vec<DenseFlow<F>>,
    t_start: f64,
    t_end: f64,
    boundary_idx: usize,
    scheme: Scheme,
}

impl<F: Scalar> FrozenTransport<F> {
    fn anchored_at(&self, dense: &DenseFlow<F>) -> FlowVolume<F> {
        let bins = self
            .offsets
            .iter()
            .map(|off| {
                let u = off
                    .u_plane()
                    .iter()
                    .zip(dense.u_plane())
                    .map(|(o, d)| *o + *d)
                    .collect();
                let v = off
                    .v_plane()
                    .iter()
                    .zip(dense.v_plane())
                    .map(|(o, d)| *o + *d)
                    .collect();
                DenseFlow::from_components(dense.width(), dense.height(), u, v, off.t_ref())
                    .expect("offset and boundary share geometry")
            })
            .collect();
        FlowVolume::from_parts(bins, self.t_start, self.t_end, self.boundary_idx, self.scheme)
    }
}

impl<'a, F: Scalar> Evaluator<'a, F> {
    fn new(slice: &'a EventSlice, cfg: &SolveConfig<F>) -> Result<Self> {
        Ok(Evaluator {
            slice,
            lambda: cfg.lambda,
            scheme: cfg.warp_mode,
            n_bins: cfg.n_bins,
            full_model: cfg.gradient_mode == GradientMode::FiniteDifference,
            g_zero: objective::zero_flow_g(slice)?,
            frozen: None,
        })
    }

    /// Whether trial costs are a model that acceptance must re-check against
    /// the re-transported objective.
    fn frozen_mode(&self) -> bool {
        self.scheme != Scheme::None && !self.full_model
    }

    /// True composite cost at `grid`; in frozen mode this re-transports the
    /// volume and re-anchors the offsets there.
    fn refresh(&mut self, grid: &TileGrid<F>) -> Result<ObjectiveReport<F>> {
        if !self.frozen_mode() {
            let (report, _) = self.eval(grid, false)?;
            return Ok(report);
        }
        let dense = dense_from_tiles(grid, self.slice.t_mid());
        let volume = build_volume(&dense, self.slice, self.n_bins, self.scheme)?;
        let offsets = (0..volume.n_bins())
            .map(|b| {
                let bin = volume.bin(b);
                let u = bin
                    .u_plane()
                    .iter()
                    .zip(dense.u_plane())
                    .map(|(x, d)| *x - *d)
                    .collect();
                let v = bin
                    .v_plane()
                    .iter()
                    .zip(dense.v_plane())
                    .map(|(x, d)| *x - *d)
                    .collect();
                DenseFlow::from_components(dense.width(), dense.height(), u, v, bin.t_ref())
                    .expect("bin and boundary share geometry")
            })
            .collect();
        self.frozen = Some(FrozenTransport {
            offsets,
            t_start: volume.t_start(),
            t_end: volume.t_end(),
            boundary_idx: volume.boundary_index(),
            scheme: volume.scheme(),
        });
        let (report, _) = objective::evaluate(
            self.slice,
            grid,
            self.lambda,
            &WarpPlan::TimeAware(&volume),
            self.g_zero,
            false,
        )?;
        Ok(report)
    }

    /// Model cost (and optionally gradient) at `grid`.
    fn eval(
        &self,
        grid: &TileGrid<F>,
        want_grad: bool,
    ) -> Result<(ObjectiveReport<F>, Option<Vec<F>>)> {
        if self.full_model {
            if want_grad {
                let (report, g) = objective::cost_and_gradient(
                    self.slice,
                    grid,
                    self.lambda,
                    self.scheme,
                    self.n_bins,
                    GradientMode::FiniteDifference,
                )?;
                return Ok((report, Some(g)));
            }
            let report =
                objective::composite_cost(self.slice, grid, self.lambda, self.scheme, self.n_bins)?;
            return Ok((report, None));
        }
        let dense = dense_from_tiles(grid, self.slice.t_mid());
        match self.scheme {
            Scheme::None => objective::evaluate(
                self.slice,
                grid,
                self.lambda,
                &WarpPlan::Constant(&dense),
                self.g_zero,
                want_grad,
            ),
            _ => {
                let frozen = self
                    .frozen
                    .as_ref()
                    .expect("refresh anchors the transport before any eval");
                let volume = frozen.anchored_at(&dense);
                objective::evaluate(
                    self.slice,
                    grid,
                    self.lambda,
                    &WarpPlan::TimeAware(&volume),
                    self.g_zero,
                    want_grad,
                )
            }
        }
    }

    /// H·d by a forward difference of the gradient. The probe displacement
    /// along the unit direction of `d` is `HV_STEP`-scaled by the iterate
    /// norm, so the quotient is well conditioned for any `d` length.
    fn hessian_vec(
        &self,
        theta: &[F],
        g0: &[F],
        d: &[F],
        probe: &mut TileGrid<F>,
    ) -> Result<Vec<F>> {
        let d_norm = norm2(d);
        if !(d_norm > F::zero()) {
            return Ok(vec![F::zero(); d.len()]);
        }
        let step = cast::<F>(HV_STEP) * (F::one() + norm2(theta));
        let h = step / d_norm;
        let shifted: Vec<F> = theta.iter().zip(d).map(|(t, di)| *t + h * *di).collect();
        probe.set_params(&shifted)?;
        let (_, g1) = self.eval(probe, true)?;
        let g1 = g1.expect("gradient requested");
        Ok(g0
            .iter()
            .zip(&g1)
            .map(|(a, b)| (*b - *a) / h)
            .collect())
    }
}

fn dot<F: Scalar>(a: &[F], b: &[F]) -> F {
    a.iter().zip(b).map(|(x, y)| *x * *y).sum()
}

fn norm2<F: Scalar>(a: &[F]) -> F {
    dot(a, a).sqrt()
}

/// Truncated conjugate gradient on the Newton system H p = -g.
///
/// Stops on the forcing tolerance, the iteration cap, or the first
/// negative-curvature direction; if curvature is non-positive immediately,
/// falls back to steepest descent.
fn cg_direction<F: Scalar>(
    ev: &Evaluator<'_, F>,
    theta: &[F],
    g: &[F],
    g_norm: F,
    cap: usize,
    probe: &mut TileGrid<F>,
    scale: u32,
) -> Result<Vec<F>> {
    let n = g.len();
    let neg_g: Vec<F> = g.iter().map(|c| -*c).collect();
    let mut z = vec![F::zero(); n];
    let mut r = g.to_vec();
    let mut d = neg_g.clone();
    let mut rr = dot(&r, &r);
    let stop = cast::<F>(CG_FORCING) * g_norm;
    for j in 0..cap {
        let hd = ev.hessian_vec(theta, g, &d, probe)?;
        let dhd = dot(&d, &hd);
        if !dhd.is_finite() {
            return Err(Error::NonFinite(format!(
                "curvature at scale {scale}, cg step {j}"
            )));
        }
        if dhd <= F::zero() {
            return Ok(if j == 0 { neg_g } else { z });
        }
        let a = rr / dhd;
        for i in 0..n {
            z[i] = z[i] + a * d[i];
            r[i] = r[i] + a * hd[i];
        }
        let rr_new = dot(&r, &r);
        if rr_new.sqrt() < stop {
            break;
        }
        let beta = rr_new / rr;
        for i in 0..n {
            d[i] = -r[i] + beta * d[i];
        }
        rr = rr_new;
    }
    if z.iter().all(|c| *c == F::zero()) {
        Ok(neg_g)
    } else {
        Ok(z)
    }
}

/// Backtracking line search along `p`. Returns the first trial passing the
/// sufficient-decrease test on the evaluator's model, with its report and
/// the accepted step fraction, or `None` when every halving fails. Trial
/// steps that overflow or leave the stable regime shrink like any other
/// rejection.
fn armijo<F: Scalar>(
    ev: &Evaluator<'_, F>,
    theta: &[F],
    cost0: F,
    g: &[F],
    p: &[F],
    probe: &mut TileGrid<F>,
) -> Result<Option<(Vec<F>, ObjectiveReport<F>, F)>> {
    let slope = dot(g, p);
    if !(slope < F::zero()) {
        return Ok(None);
    }
    let c = cast::<F>(ARMIJO_C);
    let mut alpha = F::one();
    for _ in 0..MAX_BACKTRACKS {
        let trial: Vec<F> = theta
            .iter()
            .zip(p)
            .map(|(t, pi)| *t + alpha * *pi)
            .collect();
        probe.set_params(&trial)?;
        match ev.eval(probe, false) {
            Ok((r, _)) if r.cost.is_finite() && r.cost <= cost0 + c * alpha * slope => {
                return Ok(Some((trial, r, alpha)));
            }
            Ok(_) => {}
            Err(Error::NonFinite(_)) | Err(Error::Stability { .. }) => {}
            Err(e) => return Err(e),
        }
        alpha = alpha / cast::<F>(2.0);
    }
    Ok(None)
}

/// Refines `init` on its own grid. The result never scores worse than the
/// initializer on the composite cost.
pub fn optimize_scale<F: Scalar>(
    slice: &EventSlice,
    init: &TileGrid<F>,
    cfg: &SolveConfig<F>,
) -> Result<TileGrid<F>> {
    optimize_scale_traced(slice, init, cfg).map(|(grid, _)| grid)
}

/// As [`optimize_scale`], also returning the scale's trace.
pub fn optimize_scale_traced<F: Scalar>(
    slice: &EventSlice,
    init: &TileGrid<F>,
    cfg: &SolveConfig<F>,
) -> Result<(TileGrid<F>, ScaleTrace<F>)> {
    cfg.validate()?;
    if init.width() != slice.width() || init.height() != slice.height() {
        return Err(Error::InvalidArgument(format!(
            "initializer over {}x{} for a {}x{} slice",
            init.width(),
            init.height(),
            slice.width(),
            slice.height()
        )));
    }
    let scale = init.scale();
    let mut ev = Evaluator::new(slice, cfg)?;
    let mut grid = init.clone();
    let mut report = ev.refresh(&grid)?;
    let initial_cost = report.cost;
    if !initial_cost.is_finite() {
        return Err(Error::NonFinite(format!("cost at scale {scale} initializer")));
    }
    let cg_cap = (2 * grid.side() * grid.side()).min(CG_CAP);
    let mut probe = grid.clone();
    let mut iterations = 0usize;
    // Adaptive length of the scaled-descent candidate, in parameter units
    // (px/s). Doubles whenever that candidate is accepted at a full step,
    // shrinks to the accepted fraction otherwise.
    let mut sd_len = F::one();

    for iter in 0..cfg.max_iters_per_scale {
        let theta = grid.params();
        let (model, grad) = ev.eval(&grid, true)?;
        let g = grad.expect("gradient requested");
        if g.iter().any(|c| !c.is_finite()) {
            return Err(Error::NonFinite(format!(
                "gradient at scale {scale}, iteration {iter}"
            )));
        }
        let g_norm = norm2(&g);
        if g_norm < cast::<F>(GRAD_NORM_STOP) {
            break;
        }

        // Two candidate steps go through the same line search and the
        // cheaper accepted trial wins. The Newton direction owns the
        // quadratic tail near an optimum, where the differenced curvature is
        // clean; the scaled-descent candidate owns long, nearly linear
        // stretches of the landscape, where splat-window crossings make the
        // tiny-step curvature probe read jump noise instead of curvature and
        // the Newton step degenerates to a crawl.
        let mut best: Option<(Vec<F>, ObjectiveReport<F>, Option<F>)> = None;
        if !ev.full_model {
            let p = cg_direction(&ev, &theta, &g, g_norm, cg_cap, &mut probe, scale)?;
            if let Some((t, r, _)) = armijo(&ev, &theta, model.cost, &g, &p, &mut probe)? {
                best = Some((t, r, None));
            }
        }
        let descent_scale = sd_len / g_norm;
        let sd: Vec<F> = g.iter().map(|c| -*c * descent_scale).collect();
        if let Some((t, r, alpha)) = armijo(&ev, &theta, model.cost, &g, &sd, &mut probe)? {
            let wins = best.as_ref().map_or(true, |(_, rb, _)| r.cost < rb.cost);
            if wins {
                best = Some((t, r, Some(alpha)));
            }
        }
        let Some((theta_new, model_report, sd_alpha)) = best else {
            break;
        };
        if let Some(alpha) = sd_alpha {
            sd_len = if alpha == F::one() {
                (sd_len + sd_len).min(cast::<F>(1e6))
            } else {
                (alpha * sd_len).max(cast::<F>(1e-9))
            };
        }

        // Acceptance is judged on the true objective. In frozen mode that
        // means re-transporting at the candidate; if the candidate fails to
        // improve the re-transported cost (the model overshot) or fails to
        // transport at all, keep the last good iterate and stop the scale.
        probe.set_params(&theta_new)?;
        let true_report = if ev.frozen_mode() {
            match ev.refresh(&probe) {
                Ok(r) => r,
                Err(_) => {
                    ev.refresh(&grid)?;
                    break;
                }
            }
        } else {
            model_report
        };
        if !(true_report.cost < report.cost) {
            if ev.frozen_mode() {
                ev.refresh(&grid)?;
            }
            break;
        }
        let drop = report.cost - true_report.cost;
        grid.set_params(&theta_new)?;
        report = true_report;
        iterations += 1;
        if drop < cfg.tol {
            break;
        }
    }

    let trace = ScaleTrace {
        scale,
        iterations,
        initial_cost,
        report,
    };
    Ok((grid, trace))
}

/// Coarse-to-fine solve over one slice.
///
/// Scale 1 starts from zero flow, or from the warm start's tile average when
/// one is given; each finer scale starts from the upsampled coarser result,
/// blended evenly with the warm start when present.
pub fn solve_multiscale<F: Scalar>(
    slice: &EventSlice,
    cfg: &SolveConfig<F>,
    warm_start: Option<&DenseFlow<F>>,
) -> Result<SolveResult<F>> {
    cfg.validate()?;
    if let Some(w) = warm_start {
        if w.width() != slice.width() || w.height() != slice.height() {
            return Err(Error::InvalidArgument(format!(
                "warm start over {}x{} for a {}x{} slice",
                w.width(),
                w.height(),
                slice.width(),
                slice.height()
            )));
        }
    }
    let min_dim = slice.width().min(slice.height());
    let mut max_scale = 1u32;
    while side_at_scale(max_scale + 1) <= min_dim {
        max_scale += 1;
    }
    let n_scales = cfg.n_scales.min(max_scale);

    let mut prev: Option<TileGrid<F>> = None;
    let mut traces = Vec::with_capacity(n_scales as usize);
    for scale in 1..=n_scales {
        let init = match &prev {
            None => match warm_start {
                Some(w) => init_next_slice(w, 1, None)?,
                None => TileGrid::zeros(1, slice.width(), slice.height())?,
            },
            Some(coarse) => {
                let up = upsample_tile_grid(coarse)?;
                match warm_start {
                    Some(w) => init_next_slice(w, scale, Some(&up))?,
                    None => up,
                }
            }
        };
        let (solved, trace) = optimize_scale_traced(slice, &init, cfg)?;
        traces.push(trace);
        prev = Some(solved);
    }
    let finest_grid = prev.expect("at least one scale");
    let dense = dense_from_tiles(&finest_grid, slice.t_mid());
    Ok(SolveResult {
        finest_grid,
        dense,
        scales: traces,
    })
}

/// Solves each slice in order, warm-starting from the previous result.
///
/// A failed slice contributes its error and the next slice starts cold, so
/// one bad slice never poisons the rest of the sequence.
pub fn solve_sequence<F: Scalar>(
    slices: &[EventSlice],
    cfg: &SolveConfig<F>,
) -> Vec<Result<SolveResult<F>>> {
    let mut warm: Option<DenseFlow<F>> = None;
    let mut out = Vec::with_capacity(slices.len());
    for slice in slices {
        let res = solve_multiscale(slice, cfg, warm.as_ref());
        warm = res.as_ref().ok().map(|r| r.dense.clone());
        out.push(res);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::events::{generate_linear_motion_events, Event, EventSlice, ScenePattern};

    fn oracle_scene() -> (EventSlice, (f64, f64), f64) {
        let pattern = ScenePattern::random_dots(48, 48, 0.04, 7).unwrap();
        let v_true = (12.0, -6.0);
        let duration = 0.4;
        let (slice, _) = generate_linear_motion_events(&pattern, v_true, duration, 18, 11).unwrap();
        (slice, v_true, duration)
    }

    fn displacement_aee(dense: &DenseFlow<f64>, v_true: (f64, f64), span: f64) -> f64 {
        let n = (dense.width() * dense.height()) as f64;
        let mut sum = 0.0;
        for y in 0..dense.height() {
            for x in 0..dense.width() {
                let (u, v) = dense.at(x, y);
                sum += ((u - v_true.0).powi(2) + (v - v_true.1).powi(2)).sqrt() * span;
            }
        }
        sum / n
    }

    #[test]
    fn bad_configs_are_rejected() {
        let (slice, _, _) = oracle_scene();
        for cfg in [
            SolveConfig::<f64> {
                n_scales: 0,
                ..SolveConfig::default()
            },
            SolveConfig::<f64> {
                max_iters_per_scale: 0,
                ..SolveConfig::default()
            },
            SolveConfig::<f64> {
                lambda: -0.1,
                ..SolveConfig::default()
            },
            SolveConfig::<f64> {
                n_bins: 0,
                ..SolveConfig::default()
            },
        ] {
            assert!(matches!(
                solve_multiscale(&slice, &cfg, None),
                Err(Error::InvalidArgument(_))
            ));
        }
    }

    #[test]
    fn true_flow_is_near_stationary_at_the_coarsest_scale() {
        let (slice, v_true, _) = oracle_scene();
        let init = TileGrid::constant(1, 48, 48, v_true).unwrap();
        let cfg = SolveConfig::<f64> {
            n_scales: 1,
            ..SolveConfig::default()
        };
        let (grid, trace) = optimize_scale_traced(&slice, &init, &cfg).unwrap();
        assert!(trace.report.cost <= trace.initial_cost);
        let (u, v) = grid.at(0, 0);
        // Pixel rounding in the scene leaves a little slack around the
        // generating velocity, but the optimizer must stay in its basin.
        assert!(
            (u - v_true.0).abs() < 0.5 && (v - v_true.1).abs() < 0.5,
            "drifted to ({u}, {v})"
        );
    }

    #[test]
    fn zero_gradient_slice_returns_the_initializer_bitwise() {
        // Every event shares one timestamp, so warps cannot move anything
        // relative to the references and the focus gradient vanishes.
        let events = (0..24)
            .map(|i| Event {
                x: 3 + (i % 6) as u16,
                y: 2 + (i / 6) as u16,
                t: 0.25,
                p: if i % 2 == 0 { 1 } else { -1 },
            })
            .collect();
        let slice = EventSlice::new(events, 12, 12).unwrap();
        let init = TileGrid::from_components(
            2,
            12,
            12,
            vec![0.7, -1.3, 2.2, 0.4],
            vec![-0.6, 1.8, 0.9, -2.1],
        )
        .unwrap();
        let cfg = SolveConfig::<f64> {
            n_scales: 2,
            lambda: 0.0,
            ..SolveConfig::default()
        };
        let (grid, trace) = optimize_scale_traced(&slice, &init, &cfg).unwrap();
        assert_eq!(trace.iterations, 0);
        assert_eq!(grid.params(), init.params());
    }

    #[test]
    fn a_single_allowed_iteration_still_descends() {
        let (slice, _, _) = oracle_scene();
        let init = TileGrid::zeros(1, 48, 48).unwrap();
        let cfg = SolveConfig::<f64> {
            n_scales: 1,
            max_iters_per_scale: 1,
            ..SolveConfig::default()
        };
        let (_, trace) = optimize_scale_traced(&slice, &init, &cfg).unwrap();
        assert_eq!(trace.iterations, 1);
        assert!(trace.report.cost < trace.initial_cost);
    }

    #[test]
    fn multiscale_recovers_constant_flow_on_the_oracle_scene() {
        let (slice, v_true, duration) = oracle_scene();
        let cfg = SolveConfig::<f64> {
            n_scales: 3,
            ..SolveConfig::default()
        };
        let result = solve_multiscale(&slice, &cfg, None).unwrap();
        assert_eq!(result.scales.len(), 3);
        for trace in &result.scales {
            assert!(
                trace.report.cost <= trace.initial_cost,
                "scale {} went uphill",
                trace.scale
            );
        }
        let aee = displacement_aee(&result.dense, v_true, duration);
        assert!(aee < 0.5, "displacement error {aee} px");
    }

    #[test]
    fn warm_start_lowers_the_second_solve_initial_cost() {
        let (slice, _, _) = oracle_scene();
        let cfg = SolveConfig::<f64> {
            n_scales: 2,
            ..SolveConfig::default()
        };
        let results = solve_sequence(&[slice.clone(), slice], &cfg);
        let first = results[0].as_ref().unwrap();
        let second = results[1].as_ref().unwrap();
        assert!(second.scales[0].initial_cost < first.scales[0].initial_cost);
        assert!(second.total_iterations() <= first.total_iterations());
    }

    #[test]
    fn sequence_recovers_cold_after_a_failed_slice() {
        let (good, _, _) = oracle_scene();
        let odd_events = vec![Event {
            x: 5,
            y: 5,
            t: 0.1,
            p: 1,
        }];
        let mismatched = EventSlice::new(odd_events, 32, 32).unwrap();
        let cfg = SolveConfig::<f64> {
            n_scales: 1,
            ..SolveConfig::default()
        };
        let results = solve_sequence(&[good.clone(), mismatched, good], &cfg);
        assert!(results[0].is_ok());
        assert!(matches!(results[1], Err(Error::InvalidArgument(_))));
        assert!(results[2].is_ok());
    }

    #[test]
    fn repeated_solves_are_bitwise_identical() {
        let (slice, _, _) = oracle_scene();
        let cfg = SolveConfig::<f64> {
            n_scales: 2,
            ..SolveConfig::default()
        };
        let a = solve_multiscale(&slice, &cfg, None).unwrap();
        let b = solve_multiscale(&slice, &cfg, None).unwrap();
        let bits =
            |g: &TileGrid<f64>| g.params().iter().map(|p| p.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&a.finest_grid), bits(&b.finest_grid));
    }

    #[test]
    fn scale_count_is_capped_by_the_frame_size() {
        let pattern = ScenePattern::random_dots(4, 4, 0.5, 3).unwrap();
        let (slice, _) = generate_linear_motion_events(&pattern, (2.0, 1.0), 0.2, 10, 5).unwrap();
        let cfg = SolveConfig::<f64> {
            n_scales: 9,
            ..SolveConfig::default()
        };
        let result = solve_multiscale(&slice, &cfg, None).unwrap();
        assert_eq!(result.scales.len(), 3);
        assert_eq!(result.finest_grid.side(), 4);
    }

    #[test]
    fn time_aware_solve_stays_near_truth_on_a_constant_scene() {
        // A constant field is a transport fixed point, so the time-aware
        // optimum coincides with the constant-warp one.
        let (slice, v_true, _) = oracle_scene();
        let init = TileGrid::constant(1, 48, 48, v_true).unwrap();
        let cfg = SolveConfig::<f64> {
            n_scales: 1,
            warp_mode: Scheme::Upwind,
            n_bins: 3,
            ..SolveConfig::default()
        };
        let (grid, trace) = optimize_scale_traced(&slice, &init, &cfg).unwrap();
        assert!(trace.report.cost <= trace.initial_cost);
        let (u, v) = grid.at(0, 0);
        assert!(
            (u - v_true.0).abs() < 0.5 && (v - v_true.1).abs() < 0.5,
            "drifted to ({u}, {v})"
        );
    }

    #[test]
    fn finite_difference_mode_descends_from_zero() {
        let pattern = ScenePattern::random_dots(16, 16, 0.08, 9).unwrap();
        let (slice, _) = generate_linear_motion_events(&pattern, (6.0, -3.0), 0.3, 12, 4).unwrap();
        let cfg = SolveConfig::<f64> {
            n_scales: 1,
            max_iters_per_scale: 5,
            gradient_mode: GradientMode::FiniteDifference,
            ..SolveConfig::default()
        };
        let result = solve_multiscale(&slice, &cfg, None).unwrap();
        let trace = &result.scales[0];
        assert!(trace.report.cost < trace.initial_cost);
    }
}
