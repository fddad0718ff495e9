//! Flow-quality metrics: endpoint error over a validity mask and the
//! variance ratio of the compensated event image against the uncompensated
//! one.

use crate::error::{Error, Result};
use crate::events::EventSlice;
use crate::flowrep::DenseFlow;
use crate::objective::{image_variance, WarpPlan};
use crate::warp::{accumulate_iwe, warp_events, warp_events_time_aware};
use crate::{cast, Scalar};

const FWL_SIGMA: f64 = 1.0;

/// Pixels that count toward error statistics.
#[derive(Debug, Clone)]
pub struct EvalMask {
    width: usize,
    height: usize,
    active: Vec<bool>,
}

impl EvalMask {
    pub fn from_mask(width: usize, height: usize, active: Vec<bool>) -> Result<Self> {
        if active.len() != width * height {
            return Err(Error::InvalidArgument(format!(
                "mask length {} for a {width}x{height} frame",
                active.len()
            )));
        }
        Ok(EvalMask {
            width,
            height,
            active,
        })
    }

    /// Active wherever the ground truth is valid and the slice fired at
    /// least one event.
    pub fn from_gt_and_events(gt_valid: &[bool], slice: &EventSlice) -> Result<Self> {
        let with_events = Self::from_events(slice);
        if gt_valid.len() != with_events.active.len() {
            return Err(Error::InvalidArgument(format!(
                "validity length {} for a {}x{} frame",
                gt_valid.len(),
                slice.width(),
                slice.height()
            )));
        }
        let active = gt_valid
            .iter()
            .zip(&with_events.active)
            .map(|(g, e)| *g && *e)
            .collect();
        Self::from_mask(slice.width(), slice.height(), active)
    }

    /// Active wherever the slice fired at least one event.
    pub fn from_events(slice: &EventSlice) -> Self {
        let (w, h) = (slice.width(), slice.height());
        let mut active = vec![false; w * h];
        for e in slice.events() {
            active[usize::from(e.y) * w + usize::from(e.x)] = true;
        }
        EvalMask {
            width: w,
            height: h,
            active,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn is_active(&self, x: usize, y: usize) -> bool {
        self.active[y * self.width + x]
    }

    pub fn active_count(&self) -> usize {
        self.active.iter().filter(|a| **a).count()
    }
}

/// Scales a velocity field (px/s) into displacements over `interval`
/// seconds.
pub fn displacement_field<F: Scalar>(flow: &DenseFlow<F>, interval: f64) -> Result<DenseFlow<F>> {
    if !interval.is_finite() {
        return Err(Error::InvalidArgument(format!("interval {interval}")));
    }
    let s = cast::<F>(interval);
    Ok(flow.map(|c| c * s))
}

/// Average endpoint error and the percentage of masked pixels whose error
/// strictly exceeds `outlier_px`, both over the mask's active pixels.
///
/// The two fields must already be in the same units; compare displacements
/// via [`displacement_field`] when the ground truth is a displacement.
pub fn aee_and_outliers<F: Scalar>(
    pred: &DenseFlow<F>,
    gt: &DenseFlow<F>,
    mask: &EvalMask,
    outlier_px: F,
) -> Result<(F, F)> {
    let same_shape = pred.width() == gt.width()
        && pred.height() == gt.height()
        && pred.width() == mask.width()
        && pred.height() == mask.height();
    if !same_shape {
        return Err(Error::InvalidArgument(format!(
            "prediction {}x{}, truth {}x{}, mask {}x{}",
            pred.width(),
            pred.height(),
            gt.width(),
            gt.height(),
            mask.width(),
            mask.height()
        )));
    }
    let n = mask.active_count();
    if n == 0 {
        return Err(Error::Degenerate("empty evaluation mask".into()));
    }
    let mut sum = F::zero();
    let mut outliers = 0usize;
    for y in 0..pred.height() {
        for x in 0..pred.width() {
            if !mask.is_active(x, y) {
                continue;
            }
            let (pu, pv) = pred.at(x, y);
            let (gu, gv) = gt.at(x, y);
            let err = ((pu - gu) * (pu - gu) + (pv - gv) * (pv - gv)).sqrt();
            sum = sum + err;
            if err > outlier_px {
                outliers += 1;
            }
        }
    }
    let count = cast::<F>(n as f64);
    let aee = sum / count;
    let pct = cast::<F>(100.0) * cast::<F>(outliers as f64) / count;
    Ok((aee, pct))
}

/// Sharpening ratio: variance of the flow-compensated event image over the
/// variance of the uncompensated one, both splatted at the slice midpoint.
///
/// The zero flow warps every event onto itself, so its ratio is exactly 1;
/// values above 1 mean the flow sharpens the image.
pub fn fwl<F: Scalar>(slice: &EventSlice, plan: &WarpPlan<'_, F>) -> Result<F> {
    let t_ref = slice.t_mid();
    let sigma = cast::<F>(FWL_SIGMA);
    let warped = match plan {
        WarpPlan::Constant(flow) => warp_events(slice, flow, t_ref)?,
        WarpPlan::TimeAware(volume) => warp_events_time_aware(slice, volume, t_ref)?,
    };
    let iwe = accumulate_iwe(&warped, slice.width(), slice.height(), sigma)?;

    let zero = DenseFlow::constant(
        slice.width(),
        slice.height(),
        (F::zero(), F::zero()),
        t_ref,
    );
    let baseline = warp_events(slice, &zero, t_ref)?;
    let iwe_zero = accumulate_iwe(&baseline, slice.width(), slice.height(), sigma)?;
    let var_zero = image_variance(&iwe_zero);
    if !(var_zero > F::zero()) || !var_zero.is_finite() {
        return Err(Error::Degenerate(
            "uncompensated event image has no variance".into(),
        ));
    }
    Ok(image_variance(&iwe) / var_zero)
}
