//! Flow representations: the per-scale tile grid that is optimized, the dense
//! per-pixel field it interpolates to, and the transfers between pyramid
//! scales and between consecutive slices.
//!
//! At scale l the parameter vector is an S x S grid of 2-D tile vectors with
//! S = 2^(l-1). Tile (i, j) covers the pixel footprint
//! [floor(j*W/S), floor((j+1)*W/S)) x [floor(i*H/S), floor((i+1)*H/S)) and its
//! vector sits at the footprint-grid center ((j+0.5)*W/S, (i+0.5)*H/S).
//! Pixel centers are at integer coordinates. Interpolation outside the hull
//! of tile centers clamps to the edge tiles.

use crate::cast;
use crate::error::{Error, Result};
use crate::Scalar;

/// Coarse grid of 2-D flow vectors in px/s; the optimization parameters at
/// one pyramid scale.
#[derive(Debug, Clone, PartialEq)]
pub struct TileGrid<F> {
    scale: u32,
    side: usize,
    width: usize,
    height: usize,
    u: Vec<F>,
    v: Vec<F>,
}

/// Per-pixel flow field in px/s, defined at time `t_ref`.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseFlow<F> {
    width: usize,
    height: usize,
    u: Vec<F>,
    v: Vec<F>,
    t_ref: f64,
}

/// Side length 2^(l-1) of the tile grid at scale `l`, starting at 1x1.
pub fn side_at_scale(scale: u32) -> usize {
    1usize << (scale - 1)
}

impl<F: Scalar> TileGrid<F> {
    /// All-zero grid at `scale` over a `width` x `height` frame.
    pub fn zeros(scale: u32, width: usize, height: usize) -> Result<Self> {
        Self::constant(scale, width, height, (F::zero(), F::zero()))
    }

    /// Constant grid; every tile carries `value`.
    pub fn constant(scale: u32, width: usize, height: usize, value: (F, F)) -> Result<Self> {
        let side = Self::checked_side(scale, width, height)?;
        Ok(Self {
            scale,
            side,
            width,
            height,
            u: vec![value.0; side * side],
            v: vec![value.1; side * side],
        })
    }

    /// Grid from row-major component planes.
    pub fn from_components(
        scale: u32,
        width: usize,
        height: usize,
        u: Vec<F>,
        v: Vec<F>,
    ) -> Result<Self> {
        let side = Self::checked_side(scale, width, height)?;
        if u.len() != side * side || v.len() != side * side {
            return Err(Error::InvalidArgument(format!(
                "component length {}/{} for a {side}x{side} grid",
                u.len(),
                v.len()
            )));
        }
        if !u.iter().chain(v.iter()).all(|c| c.is_finite()) {
            return Err(Error::InvalidArgument("non-finite tile vector".into()));
        }
        Ok(Self {
            scale,
            side,
            width,
            height,
            u,
            v,
        })
    }

    fn checked_side(scale: u32, width: usize, height: usize) -> Result<usize> {
        if scale == 0 {
            return Err(Error::InvalidArgument("scale index 0 (scales start at 1)".into()));
        }
        if width == 0 || height == 0 {
            return Err(Error::InvalidArgument(format!("frame {width}x{height}")));
        }
        let side = side_at_scale(scale);
        if side > width.min(height) {
            return Err(Error::InvalidArgument(format!(
                "scale {scale} needs a {side}x{side} grid, larger than the {width}x{height} frame"
            )));
        }
        Ok(side)
    }

    pub fn scale(&self) -> u32 {
        self.scale
    }

    pub fn side(&self) -> usize {
        self.side
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    /// Tile vector at grid row `i`, column `j`.
    pub fn at(&self, i: usize, j: usize) -> (F, F) {
        let k = i * self.side + j;
        (self.u[k], self.v[k])
    }

    pub fn set(&mut self, i: usize, j: usize, value: (F, F)) {
        let k = i * self.side + j;
        self.u[k] = value.0;
        self.v[k] = value.1;
    }

    pub fn u_plane(&self) -> &[F] {
        &self.u
    }

    pub fn v_plane(&self) -> &[F] {
        &self.v
    }

    /// Flattens to the parameter vector [u row-major, then v row-major].
    pub fn params(&self) -> Vec<F> {
        let mut p = Vec::with_capacity(2 * self.u.len());
        p.extend_from_slice(&self.u);
        p.extend_from_slice(&self.v);
        p
    }

    /// Overwrites the tiles from a parameter vector laid out as `params()`.
    pub fn set_params(&mut self, params: &[F]) -> Result<()> {
        let n = self.side * self.side;
        if params.len() != 2 * n {
            return Err(Error::InvalidArgument(format!(
                "parameter length {} for a {}x{} grid",
                params.len(),
                self.side,
                self.side
            )));
        }
        self.u.copy_from_slice(&params[..n]);
        self.v.copy_from_slice(&params[n..]);
        Ok(())
    }

    /// Bilinear sample at real pixel coordinates, edge-clamped.
    pub fn sample(&self, x: F, y: F) -> (F, F) {
        let (j0, j1, fx) = axis_to_tile_space(x, self.width, self.side);
        let (i0, i1, fy) = axis_to_tile_space(y, self.height, self.side);
        let one = F::one();
        let w00 = (one - fx) * (one - fy);
        let w01 = fx * (one - fy);
        let w10 = (one - fx) * fy;
        let w11 = fx * fy;
        let idx = |i: usize, j: usize| i * self.side + j;
        let u = w00 * self.u[idx(i0, j0)]
            + w01 * self.u[idx(i0, j1)]
            + w10 * self.u[idx(i1, j0)]
            + w11 * self.u[idx(i1, j1)];
        let v = w00 * self.v[idx(i0, j0)]
            + w01 * self.v[idx(i0, j1)]
            + w10 * self.v[idx(i1, j0)]
            + w11 * self.v[idx(i1, j1)];
        (u, v)
    }

    /// The four tile indices and bilinear weights that `sample` would use at
    /// an integer pixel; shared with the gradient's interpolation adjoint.
    pub(crate) fn pixel_weights(&self, x: usize, y: usize) -> [(usize, F); 4] {
        let (j0, j1, fx) = axis_to_tile_space(cast::<F>(x as f64), self.width, self.side);
        let (i0, i1, fy) = axis_to_tile_space(cast::<F>(y as f64), self.height, self.side);
        let one = F::one();
        [
            (i0 * self.side + j0, (one - fx) * (one - fy)),
            (i0 * self.side + j1, fx * (one - fy)),
            (i1 * self.side + j0, (one - fx) * fy),
            (i1 * self.side + j1, fx * fy),
        ]
    }
}

/// Maps a pixel coordinate onto the tile-center axis: returns the two
/// bracketing tile indices and the interpolation fraction toward the second.
/// Tile centers sit at ((j + 0.5) * frame / side); the inverse map is
/// s = c * side / frame - 0.5, clamped to [0, side - 1].
fn axis_to_tile_space<F: Scalar>(c: F, frame: usize, side: usize) -> (usize, usize, F) {
    let s = c * cast::<F>(side as f64) / cast::<F>(frame as f64) - cast::<F>(0.5);
    let max = cast::<F>((side - 1) as f64);
    let s = s.max(F::zero()).min(max);
    let j0f = s.floor();
    let j0 = j0f.to_usize().unwrap_or(0).min(side - 1);
    let j1 = (j0 + 1).min(side - 1);
    (j0, j1, s - j0f)
}

impl<F: Scalar> DenseFlow<F> {
    /// Constant field at every pixel.
    pub fn constant(width: usize, height: usize, value: (F, F), t_ref: f64) -> Self {
        Self {
            width,
            height,
            u: vec![value.0; width * height],
            v: vec![value.1; width * height],
            t_ref,
        }
    }

    pub fn from_components(
        width: usize,
        height: usize,
        u: Vec<F>,
        v: Vec<F>,
        t_ref: f64,
    ) -> Result<Self> {
        if u.len() != width * height || v.len() != width * height {
            return Err(Error::InvalidArgument(format!(
                "component length {}/{} for a {width}x{height} field",
                u.len(),
                v.len()
            )));
        }
        Ok(Self {
            width,
            height,
            u,
            v,
            t_ref,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    /// Time (seconds) at which the field is defined.
    pub fn t_ref(&self) -> f64 {
        self.t_ref
    }

    pub fn with_t_ref(mut self, t_ref: f64) -> Self {
        self.t_ref = t_ref;
        self
    }

    pub fn at(&self, x: usize, y: usize) -> (F, F) {
        let k = y * self.width + x;
        (self.u[k], self.v[k])
    }

    pub fn set(&mut self, x: usize, y: usize, value: (F, F)) {
        let k = y * self.width + x;
        self.u[k] = value.0;
        self.v[k] = value.1;
    }

    pub fn u_plane(&self) -> &[F] {
        &self.u
    }

    pub fn v_plane(&self) -> &[F] {
        &self.v
    }

    pub fn is_finite(&self) -> bool {
        self.u.iter().chain(self.v.iter()).all(|c| c.is_finite())
    }

    /// Largest |u|/dx + |v|/dy over the field; the CFL advection rate.
    pub(crate) fn max_advection_rate(&self, dx: F, dy: F) -> F {
        self.u
            .iter()
            .zip(&self.v)
            .map(|(&u, &v)| u.abs() / dx + v.abs() / dy)
            .fold(F::zero(), F::max)
    }

    /// Component-wise map, keeping geometry and t_ref.
    pub(crate) fn map(&self, f: impl Fn(F) -> F) -> Self {
        Self {
            width: self.width,
            height: self.height,
            u: self.u.iter().map(|&c| f(c)).collect(),
            v: self.v.iter().map(|&c| f(c)).collect(),
            t_ref: self.t_ref,
        }
    }
}

/// Interpolates a tile grid to a dense per-pixel field defined at `t_ref`.
pub fn dense_from_tiles<F: Scalar>(grid: &TileGrid<F>, t_ref: f64) -> DenseFlow<F> {
    let (w, h) = (grid.width(), grid.height());
    let mut u = Vec::with_capacity(w * h);
    let mut v = Vec::with_capacity(w * h);
    for y in 0..h {
        let yf = cast::<F>(y as f64);
        for x in 0..w {
            let (uu, vv) = grid.sample(cast::<F>(x as f64), yf);
            u.push(uu);
            v.push(vv);
        }
    }
    DenseFlow {
        width: w,
        height: h,
        u,
        v,
        t_ref,
    }
}

/// Doubles the grid side by sampling the coarse grid at each new tile center.
pub fn upsample_tile_grid<F: Scalar>(grid: &TileGrid<F>) -> Result<TileGrid<F>> {
    let scale = grid.scale() + 1;
    let mut fine = TileGrid::zeros(scale, grid.width(), grid.height())?;
    let side = fine.side();
    for i in 0..side {
        let cy = cast::<F>((i as f64 + 0.5) * grid.height() as f64 / side as f64);
        for j in 0..side {
            let cx = cast::<F>((j as f64 + 0.5) * grid.width() as f64 / side as f64);
            fine.set(i, j, grid.sample(cx, cy));
        }
    }
    Ok(fine)
}

/// Averages a dense field over each tile footprint at the target scale.
pub fn downsample_flow_to_tiles<F: Scalar>(flow: &DenseFlow<F>, scale: u32) -> Result<TileGrid<F>> {
    let mut grid = TileGrid::zeros(scale, flow.width(), flow.height())?;
    let side = grid.side();
    let (w, h) = (flow.width(), flow.height());
    for i in 0..side {
        let y0 = i * h / side;
        let y1 = (i + 1) * h / side;
        for j in 0..side {
            let x0 = j * w / side;
            let x1 = (j + 1) * w / side;
            let mut su = F::zero();
            let mut sv = F::zero();
            for y in y0..y1 {
                for x in x0..x1 {
                    let (u, v) = flow.at(x, y);
                    su = su + u;
                    sv = sv + v;
                }
            }
            let n = cast::<F>(((y1 - y0) * (x1 - x0)) as f64);
            grid.set(i, j, (su / n, sv / n));
        }
    }
    Ok(grid)
}

/// Initializer for the next slice's solve at `scale`.
///
/// At the coarsest scale (no upsampled grid yet) this is the downsampled
/// previous-slice flow; at finer scales it is the element-wise average of the
/// current slice's upsampled coarse solution and the downsampled
/// previous-slice flow.
pub fn init_next_slice<F: Scalar>(
    prev_finest: &DenseFlow<F>,
    scale: u32,
    coarse_upsampled: Option<&TileGrid<F>>,
) -> Result<TileGrid<F>> {
    let down = downsample_flow_to_tiles(prev_finest, scale)?;
    match coarse_upsampled {
        None => {
            if scale != 1 {
                return Err(Error::InvalidArgument(format!(
                    "missing upsampled grid at scale {scale}; only the coarsest scale starts bare"
                )));
            }
            Ok(down)
        }
        Some(up) => {
            if up.scale() != scale || up.width() != prev_finest.width() || up.height() != prev_finest.height() {
                return Err(Error::InvalidArgument(format!(
                    "upsampled grid at scale {} over {}x{}, expected scale {scale} over {}x{}",
                    up.scale(),
                    up.width(),
                    up.height(),
                    prev_finest.width(),
                    prev_finest.height()
                )));
            }
            let half = cast::<F>(0.5);
            let side = up.side();
            let mut blended = TileGrid::zeros(scale, up.width(), up.height())?;
            for i in 0..side {
                for j in 0..side {
                    let (au, av) = up.at(i, j);
                    let (bu, bv) = down.at(i, j);
                    blended.set(i, j, (half * (au + bu), half * (av + bv)));
                }
            }
            Ok(blended)
        }
    }
}
