//! Dense optical flow from event-camera streams by contrast maximization.
//!
//! An event camera reports asynchronous per-pixel brightness changes (events)
//! instead of frames. This crate estimates the optical flow that generated a
//! batch of events without any image data: events are transported ("warped")
//! to a reference time under a candidate flow, accumulated into an image of
//! warped events (IWE), and the flow is chosen to maximize the sharpness of
//! that image. Sharpness is measured at the first, middle, and last timestamp
//! of the batch and normalized by the zero-flow score, which removes the
//! degenerate optima that single-reference contrast objectives suffer from.
//!
//! The flow is parameterized by a coarse grid of tile vectors interpolated
//! bilinearly to pixels, optimized coarse-to-fine with a Newton-CG method and
//! a total-variation regularizer. Optionally the flow at the slice midpoint
//! is transported through time by an explicit upwind or conservative
//! Burgers'-type scheme, so that each event is warped with the velocity at
//! its own timestamp.
//!
//! Module map:
//! - [`events`]: ingestion, slicing, and the synthetic oracle generator.
//! - [`flowrep`]: tile grids, dense fields, and pyramid transfers.
//! - [`warp`]: event warping and Gaussian splatting into IWEs.
//! - [`pde`]: flow transport across the slice's time span.
//! - [`objective`]: sharpness scores, regularizer, cost, and gradients.
//! - [`solver`]: per-scale Newton-CG, the pyramid, and slice chaining.
//! - [`metrics`]: endpoint error, outlier rate, and flow warp loss.

pub mod error;
pub mod events;
pub mod flowrep;
pub mod metrics;
pub mod objective;
pub mod pde;
pub mod solver;
pub mod warp;

pub use error::{Error, Result};

/// Floating-point scalar for all numeric kernels.
///
/// Timestamps are always `f64` (event files carry double-precision seconds);
/// this trait only selects the precision of spatial values, images, and
/// objective arithmetic.
pub trait Scalar:
    num_traits::Float
    + num_traits::FromPrimitive
    + num_traits::ToPrimitive
    + std::iter::Sum
    + std::fmt::Debug
    + Send
    + Sync
    + 'static
{
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// Converts a finite `f64` constant into the working scalar type.
pub(crate) fn cast<F: Scalar>(x: f64) -> F {
    F::from_f64(x).expect("finite constant must convert to the working scalar")
}

/// Single-precision aliases.
pub type TileGrid32 = flowrep::TileGrid<f32>;
pub type DenseFlow32 = flowrep::DenseFlow<f32>;
pub type Iwe32 = warp::Iwe<f32>;
pub type FlowVolume32 = pde::FlowVolume<f32>;
pub type SolveConfig32 = solver::SolveConfig<f32>;
pub type SolveResult32 = solver::SolveResult<f32>;

/// Double-precision aliases (the precision the command-line tool runs at).
pub type TileGrid64 = flowrep::TileGrid<f64>;
pub type DenseFlow64 = flowrep::DenseFlow<f64>;
pub type Iwe64 = warp::Iwe<f64>;
pub type FlowVolume64 = pde::FlowVolume<f64>;
pub type SolveConfig64 = solver::SolveConfig<f64>;
pub type SolveResult64 = solver::SolveResult<f64>;
