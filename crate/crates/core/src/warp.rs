//! Linear event warping and the image of warped events (IWE).
//!
//! Motion is a coarse grid of per-tile velocities in pixels per second. Tile
//! `(i, j)` of a `gh x gw` grid is centred at pixel
//! `((j + 0.5) * W / gw - 0.5, (i + 0.5) * H / gh - 0.5)`; dense velocities are
//! bilinear between centres and clamped outside the centre lattice.

use crate::error::{Error, Result};
use crate::events::{EventSet, SensorSize};
use crate::raster::Image;

/// Tiles per axis of a motion grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub struct GridShape {
    pub rows: usize,
    pub cols: usize,
}

impl GridShape {
    pub const fn new(rows: usize, cols: usize) -> Self {
        Self { rows, cols }
    }

    pub const fn square(n: usize) -> Self {
        Self { rows: n, cols: n }
    }

    pub fn tiles(&self) -> usize {
        self.rows * self.cols
    }
}

/// Parses `RxC` or a single `N` for a square grid.
impl std::str::FromStr for GridShape {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Validation(format!("bad grid shape `{s}`, expected RxC"));
        let (r, c) = match s.trim().split_once(['x', 'X']) {
            Some((r, c)) => (r, c),
            None => (s.trim(), s.trim()),
        };
        let rows: usize = r.trim().parse().map_err(|_| bad())?;
        let cols: usize = c.trim().parse().map_err(|_| bad())?;
        if rows == 0 || cols == 0 {
            return Err(bad());
        }
        Ok(Self { rows, cols })
    }
}

impl std::fmt::Display for GridShape {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}x{}", self.rows, self.cols)
    }
}

/// Up to four `(tile index, weight)` pairs whose weights sum to one.
pub type TileWeights = [(usize, f64); 4];

fn axis_weights(pos: f64, extent: f64, n: usize) -> (usize, usize, f64) {
    if n == 1 {
        return (0, 0, 0.0);
    }
    let t = ((pos + 0.5) * n as f64 / extent - 0.5).clamp(0.0, (n - 1) as f64);
    let i0 = (t.floor() as usize).min(n - 2);
    (i0, i0 + 1, t - i0 as f64)
}

/// Bilinear tile weights at continuous pixel position `(x, y)`.
pub fn tile_weights(shape: GridShape, size: SensorSize, x: f64, y: f64) -> TileWeights {
    let (j0, j1, fx) = axis_weights(x, size.width as f64, shape.cols);
    let (i0, i1, fy) = axis_weights(y, size.height as f64, shape.rows);
    let c = shape.cols;
    [
        (i0 * c + j0, (1.0 - fx) * (1.0 - fy)),
        (i0 * c + j1, fx * (1.0 - fy)),
        (i1 * c + j0, (1.0 - fx) * fy),
        (i1 * c + j1, fx * fy),
    ]
}

/// Per-tile velocity grid `Θ`.
#[derive(Debug, Clone, PartialEq)]
pub struct MotionField {
    shape: GridShape,
    sensor_size: SensorSize,
    theta: Vec<[f64; 2]>,
}

impl MotionField {
    pub fn zeros(shape: GridShape, sensor_size: SensorSize) -> Self {
        Self::constant(shape, sensor_size, [0.0, 0.0])
    }

    pub fn constant(shape: GridShape, sensor_size: SensorSize, theta: [f64; 2]) -> Self {
        assert!(shape.rows >= 1 && shape.cols >= 1, "grid must have at least one tile");
        Self {
            shape,
            sensor_size,
            theta: vec![theta; shape.tiles()],
        }
    }

    pub fn from_tiles(shape: GridShape, sensor_size: SensorSize, theta: Vec<[f64; 2]>) -> Result<Self> {
        if shape.rows == 0 || shape.cols == 0 || theta.len() != shape.tiles() {
            return Err(Error::Dimension(format!(
                "{} tiles supplied for a {shape} grid",
                theta.len()
            )));
        }
        if theta.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::Validation("non-finite motion parameter".into()));
        }
        Ok(Self {
            shape,
            sensor_size,
            theta,
        })
    }

    /// Interleaved `[u0, v0, u1, v1, ...]` row-major parameters.
    pub fn from_params(shape: GridShape, sensor_size: SensorSize, params: &[f64]) -> Result<Self> {
        if params.len() != 2 * shape.tiles() {
            return Err(Error::Dimension(format!(
                "{} parameters supplied for a {shape} grid",
                params.len()
            )));
        }
        let theta = params.chunks_exact(2).map(|c| [c[0], c[1]]).collect();
        Self::from_tiles(shape, sensor_size, theta)
    }

    pub fn params(&self) -> Vec<f64> {
        self.theta.iter().flatten().copied().collect()
    }

    pub fn shape(&self) -> GridShape {
        self.shape
    }

    pub fn sensor_size(&self) -> SensorSize {
        self.sensor_size
    }

    pub fn tiles(&self) -> &[[f64; 2]] {
        &self.theta
    }

    pub fn tile(&self, row: usize, col: usize) -> [f64; 2] {
        self.theta[row * self.shape.cols + col]
    }

    pub fn tile_center(&self, row: usize, col: usize) -> (f64, f64) {
        let s = self.sensor_size;
        (
            (col as f64 + 0.5) * s.width as f64 / self.shape.cols as f64 - 0.5,
            (row as f64 + 0.5) * s.height as f64 / self.shape.rows as f64 - 0.5,
        )
    }

    /// Velocity at a continuous pixel position.
    pub fn sample(&self, x: f64, y: f64) -> [f64; 2] {
        let mut out = [0.0; 2];
        for (k, w) in tile_weights(self.shape, self.sensor_size, x, y) {
            out[0] += w * self.theta[k][0];
            out[1] += w * self.theta[k][1];
        }
        out
    }

    pub fn upsample_bilinear(&self) -> DenseVelocity {
        let s = self.sensor_size;
        let mut vel = Vec::with_capacity(s.pixel_count());
        for y in 0..s.height {
            for x in 0..s.width {
                vel.push(self.sample(x as f64, y as f64));
            }
        }
        DenseVelocity { size: s, vel }
    }

    /// Handover: evaluates this field at the tile centres of another grid.
    pub fn resample(&self, shape: GridShape) -> MotionField {
        let mut out = MotionField::zeros(shape, self.sensor_size);
        for r in 0..shape.rows {
            for c in 0..shape.cols {
                let (x, y) = out.tile_center(r, c);
                out.theta[r * shape.cols + c] = self.sample(x, y);
            }
        }
        out
    }

    pub fn scaled(&self, c: f64) -> MotionField {
        MotionField {
            shape: self.shape,
            sensor_size: self.sensor_size,
            theta: self.theta.iter().map(|t| [t[0] * c, t[1] * c]).collect(),
        }
    }
}

/// Per-pixel velocities at sensor resolution, pixels per second.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseVelocity {
    pub size: SensorSize,
    pub vel: Vec<[f64; 2]>,
}

impl DenseVelocity {
    pub fn constant(size: SensorSize, v: [f64; 2]) -> Self {
        Self {
            size,
            vel: vec![v; size.pixel_count()],
        }
    }

    #[inline]
    pub fn at(&self, x: u32, y: u32) -> [f64; 2] {
        self.vel[self.size.index(x, y)]
    }
}

/// Warped event coordinates, kept unclipped.
#[derive(Debug, Clone, PartialEq)]
pub struct WarpedEvents {
    pub points: Vec<[f64; 2]>,
    pub t_ref: f64,
}

/// `x' = x + θ(x) (t_ref - t)`, with `θ` sampled at the event's own pixel.
pub fn warp_events(events: &EventSet, field: &MotionField, t_ref: f64) -> WarpedEvents {
    warp_events_dense(events, &field.upsample_bilinear(), t_ref)
}

pub fn warp_events_dense(events: &EventSet, vel: &DenseVelocity, t_ref: f64) -> WarpedEvents {
    let points = events
        .events()
        .iter()
        .map(|e| {
            let th = vel.at(e.x as u32, e.y as u32);
            let dt = t_ref - e.t;
            [e.x as f64 + th[0] * dt, e.y as f64 + th[1] * dt]
        })
        .collect();
    WarpedEvents { points, t_ref }
}

/// Image of warped events.
#[derive(Debug, Clone, PartialEq)]
pub struct Iwe {
    pub pixels: Image,
    pub t_ref: f64,
    pub n_events: usize,
}

pub const MAX_SIGMA: f64 = 10.0;
pub(crate) const MAX_TAPS: usize = 2 * 30 + 1;

/// One axis of the truncated, unit-mass Gaussian splat.
///
/// The support is the `2R + 1` pixels centred on the nearest integer to the
/// point, `R = ceil(3σ)`. `dw` holds derivatives of the normalized weights
/// with respect to the point coordinate.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Taps {
    pub start: i64,
    pub len: usize,
    pub w: [f64; MAX_TAPS],
    pub dw: [f64; MAX_TAPS],
}

impl Taps {
    #[inline]
    pub fn new(pos: f64, sigma: f64, with_derivative: bool) -> Self {
        let radius = (3.0 * sigma).ceil() as i64;
        let center = (pos + 0.5).floor() as i64;
        let len = (2 * radius + 1) as usize;
        let start = center - radius;
        let inv_var = 1.0 / (sigma * sigma);
        let mut w = [0.0; MAX_TAPS];
        let mut dw = [0.0; MAX_TAPS];
        let mut sum = 0.0;
        let mut dsum = 0.0;
        for k in 0..len {
            let d = (start + k as i64) as f64 - pos;
            let a = (-0.5 * d * d * inv_var).exp();
            w[k] = a;
            sum += a;
            if with_derivative {
                dw[k] = a * d * inv_var;
                dsum += dw[k];
            }
        }
        let inv = 1.0 / sum;
        for k in 0..len {
            if with_derivative {
                dw[k] = dw[k] * inv - w[k] * dsum * inv * inv;
            }
            w[k] *= inv;
        }
        Self { start, len, w, dw }
    }

    /// In-range `(tap index, pixel)` pairs for an axis of length `n`.
    #[inline]
    pub fn clipped(&self, n: usize) -> impl Iterator<Item = (usize, usize)> + '_ {
        let lo = (-self.start).max(0) as usize;
        let hi = ((n as i64 - self.start).max(0) as usize).min(self.len);
        (lo.min(hi)..hi).map(move |k| (k, (self.start + k as i64) as usize))
    }
}

pub fn validate_sigma(sigma: f64) -> Result<()> {
    if !(sigma > 0.0 && sigma <= MAX_SIGMA) {
        return Err(Error::Validation(format!(
            "IWE sigma must lie in (0, {MAX_SIGMA}], got {sigma}"
        )));
    }
    Ok(())
}

/// Splats every warped point with a truncated Gaussian of width `sigma`.
/// Mass landing outside the sensor is dropped.
pub fn build_iwe(warped: &WarpedEvents, sensor_size: SensorSize, sigma: f64) -> Result<Iwe> {
    validate_sigma(sigma)?;
    let (w, h) = (sensor_size.width as usize, sensor_size.height as usize);
    let mut img = Image::zeros(w, h);
    for p in &warped.points {
        splat(&mut img, *p, sigma);
    }
    Ok(Iwe {
        pixels: img,
        t_ref: warped.t_ref,
        n_events: warped.points.len(),
    })
}

#[inline]
pub(crate) fn splat(img: &mut Image, p: [f64; 2], sigma: f64) {
    let (w, h) = (img.width(), img.height());
    if !(p[0].is_finite() && p[1].is_finite()) {
        return;
    }
    let reach = (3.0 * sigma).ceil() + 1.0;
    if p[0] < -reach || p[1] < -reach || p[0] > w as f64 + reach || p[1] > h as f64 + reach {
        return;
    }
    let tx = Taps::new(p[0], sigma, false);
    let ty = Taps::new(p[1], sigma, false);
    let data = img.data_mut();
    for (ky, py) in ty.clipped(h) {
        let wy = ty.w[ky];
        let row = &mut data[py * w..(py + 1) * w];
        for (kx, px) in tx.clipped(w) {
            row[px] += wy * tx.w[kx];
        }
    }
}
