//! Orientation priors from 3D camera velocities.
//!
//! A velocity expressed in the camera frame pierces the image plane at a
//! singularity `s = K [vx/vz, vy/vz, 1]ᵀ`. The linear map points away from `s`
//! for forward motion and towards it for backward motion; the angular map is
//! the same field rotated 90° clockwise by `M = [[0, 1], [-1, 0]]`. When the
//! Z component vanishes both maps are constant.
//!
//! The constant branches follow the published case analysis literally, which
//! points *along* the in-plane velocity. The limit of the non-constant
//! branches (and the motion field) points the other way; the
//! [`PriorConfig`] flags flip those branches.

use nalgebra::{Vector2, Vector3};

use crate::camera::CameraModel;
use crate::error::{Error, Result};
use crate::events::SensorSize;
use crate::warp::{tile_weights, MotionField};

/// Below this `|v_Z|` a velocity is treated as parallel to the image plane.
pub const EPS_Z: f64 = 1e-8;
/// Below this norm a velocity is treated as zero.
pub const EPS_V: f64 = 1e-8;
/// Flow speeds below this (px/s) carry no direction and are masked.
pub const EPS_THETA: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MapKind {
    Linear,
    Angular,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
pub struct PriorConfig {
    /// Negate the constant (`v_Z = 0`) branch of the linear map.
    pub flip_linear_sign: bool,
    /// Negate the constant (`ω_Z = 0`) branch of the angular map.
    pub flip_angular_sign: bool,
}

/// Per-pixel unit direction field.
#[derive(Debug, Clone, PartialEq)]
pub struct OrientationMap {
    size: SensorSize,
    dirs: Vec<[f64; 2]>,
    valid: Vec<bool>,
    kind: MapKind,
    singularity: Option<[f64; 2]>,
}

impl OrientationMap {
    /// Wraps raw directions; non-zero entries are normalized, zero entries
    /// become invalid.
    pub fn from_dirs(
        size: SensorSize,
        kind: MapKind,
        singularity: Option<[f64; 2]>,
        raw: Vec<[f64; 2]>,
    ) -> Result<Self> {
        if raw.len() != size.pixel_count() {
            return Err(Error::Dimension("orientation map size".into()));
        }
        let mut dirs = raw;
        let mut valid = vec![false; dirs.len()];
        for (d, ok) in dirs.iter_mut().zip(valid.iter_mut()) {
            match normalize(*d) {
                Some(u) => {
                    *d = u;
                    *ok = true;
                }
                None => *d = [0.0, 0.0],
            }
        }
        Ok(Self {
            size,
            dirs,
            valid,
            kind,
            singularity,
        })
    }

    pub fn size(&self) -> SensorSize {
        self.size
    }

    pub fn kind(&self) -> MapKind {
        self.kind
    }

    pub fn singularity(&self) -> Option<[f64; 2]> {
        self.singularity
    }

    pub fn dirs(&self) -> &[[f64; 2]] {
        &self.dirs
    }

    pub fn valid(&self) -> &[bool] {
        &self.valid
    }

    pub fn at(&self, x: u32, y: u32) -> Option<[f64; 2]> {
        let i = self.size.index(x, y);
        self.valid[i].then(|| self.dirs[i])
    }

    pub fn invalid_count(&self) -> usize {
        self.valid.iter().filter(|v| !**v).count()
    }
}

#[inline]
fn normalize(v: [f64; 2]) -> Option<[f64; 2]> {
    let n = v[0].hypot(v[1]);
    (n > 1e-12 && n.is_finite()).then(|| [v[0] / n, v[1] / n])
}

/// 90° clockwise rotation in image coordinates.
#[inline]
fn rotate_cw(v: [f64; 2]) -> [f64; 2] {
    [v[1], -v[0]]
}

/// Image-plane intersection of a camera-frame velocity, in pixels. `None`
/// when the velocity is parallel to the image plane.
pub fn singularity(cam: &CameraModel, vel: Vector3<f64>) -> Option<Vector2<f64>> {
    if vel.z.abs() <= EPS_Z {
        return None;
    }
    Some(Vector2::new(
        cam.cx + cam.fx * vel.x / vel.z,
        cam.cy + cam.fy * vel.y / vel.z,
    ))
}

fn radial_map(
    cam: &CameraModel,
    vel: Vector3<f64>,
    kind: MapKind,
    flip_constant: bool,
) -> Result<OrientationMap> {
    if vel.iter().any(|c| !c.is_finite()) {
        return Err(Error::Validation("non-finite velocity".into()));
    }
    if vel.norm() <= EPS_V {
        return Err(Error::ZeroVelocity);
    }
    let size = cam.sensor_size;
    let post = |d: [f64; 2]| match kind {
        MapKind::Linear => d,
        MapKind::Angular => rotate_cw(d),
    };
    let sing = singularity(cam, vel);
    let mut raw = Vec::with_capacity(size.pixel_count());
    match sing {
        Some(s) => {
            let sign = vel.z.signum();
            for y in 0..size.height {
                for x in 0..size.width {
                    let d = [sign * (x as f64 - s.x), sign * (y as f64 - s.y)];
                    raw.push(post(d));
                }
            }
        }
        None => {
            let sign = if flip_constant { -1.0 } else { 1.0 };
            let d = post([sign * vel.x, sign * vel.y]);
            raw.resize(size.pixel_count(), d);
        }
    }
    OrientationMap::from_dirs(size, kind, sing.map(|s| [s.x, s.y]), raw)
}

/// Linear orientation map of camera translation `v`.
pub fn linear_orientation_map(cam: &CameraModel, v: Vector3<f64>) -> Result<OrientationMap> {
    linear_orientation_map_with(cam, v, &PriorConfig::default())
}

pub fn linear_orientation_map_with(
    cam: &CameraModel,
    v: Vector3<f64>,
    cfg: &PriorConfig,
) -> Result<OrientationMap> {
    radial_map(cam, v, MapKind::Linear, cfg.flip_linear_sign)
}

/// Angular orientation map of camera rotation `w`.
pub fn angular_orientation_map(cam: &CameraModel, w: Vector3<f64>) -> Result<OrientationMap> {
    angular_orientation_map_with(cam, w, &PriorConfig::default())
}

pub fn angular_orientation_map_with(
    cam: &CameraModel,
    w: Vector3<f64>,
    cfg: &PriorConfig,
) -> Result<OrientationMap> {
    radial_map(cam, w, MapKind::Angular, cfg.flip_angular_sign)
}

/// How to fill pixels whose distortion source falls outside the map.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Fill {
    /// Leave them invalid.
    None,
    /// Harmonic (diffusion) inpainting from the surrounding valid pixels.
    NavierStokes,
    /// Mirror the out-of-range source coordinate back into the map.
    BorderReflect,
    /// Clamp the out-of-range source coordinate to the map border.
    #[default]
    BorderReplicate,
}

impl std::str::FromStr for Fill {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(Fill::None),
            "navier_stokes" | "ns" => Ok(Fill::NavierStokes),
            "border_reflect" | "reflect" => Ok(Fill::BorderReflect),
            "border_replicate" | "replicate" => Ok(Fill::BorderReplicate),
            other => Err(Error::Validation(format!("unknown fill strategy `{other}`"))),
        }
    }
}

/// Bilinear sample over valid pixels only. Returns the normalized direction,
/// or `None` if no valid neighbour carries weight.
fn sample_dirs(map: &OrientationMap, x: f64, y: f64) -> Option<[f64; 2]> {
    let (w, h) = (map.size.width as usize, map.size.height as usize);
    let x0 = (x.floor() as i64).clamp(0, w as i64 - 1) as usize;
    let y0 = (y.floor() as i64).clamp(0, h as i64 - 1) as usize;
    let fx = x - x0 as f64;
    let fy = y - y0 as f64;
    if fx == 0.0 && fy == 0.0 {
        let i = y0 * w + x0;
        return map.valid[i].then(|| map.dirs[i]);
    }
    let x1 = (x0 + 1).min(w - 1);
    let y1 = (y0 + 1).min(h - 1);
    let mut acc = [0.0; 2];
    let mut wsum = 0.0;
    for (px, py, wt) in [
        (x0, y0, (1.0 - fx) * (1.0 - fy)),
        (x1, y0, fx * (1.0 - fy)),
        (x0, y1, (1.0 - fx) * fy),
        (x1, y1, fx * fy),
    ] {
        let i = py * w + px;
        if wt > 0.0 && map.valid[i] {
            acc[0] += wt * map.dirs[i][0];
            acc[1] += wt * map.dirs[i][1];
            wsum += wt;
        }
    }
    if wsum <= 0.0 {
        return None;
    }
    normalize(acc)
}

/// Mirror a coordinate into `[-0.5, n - 0.5]` (edge pixels repeated), then
/// clamp to the pixel-centre range.
fn reflect(mut v: f64, n: usize) -> f64 {
    let lo = -0.5;
    let hi = n as f64 - 0.5;
    for _ in 0..64 {
        if v < lo {
            v = 2.0 * lo - v;
        } else if v > hi {
            v = 2.0 * hi - v;
        } else {
            break;
        }
    }
    v.clamp(0.0, (n - 1) as f64)
}

/// Applies lens distortion to an ideal (undistorted) orientation map.
///
/// Each output pixel looks up its source through the forward distortion
/// model (remap semantics) and bilinearly samples the ideal map. Sampled
/// vectors are renormalized but not re-rotated.
pub fn distort_orientation_map(map: &OrientationMap, cam: &CameraModel, fill: Fill) -> OrientationMap {
    if cam.dist.is_zero() {
        return map.clone();
    }
    let size = map.size;
    let (w, h) = (size.width as usize, size.height as usize);
    let (xmax, ymax) = ((w - 1) as f64, (h - 1) as f64);
    let tol = 1e-9;
    let mut dirs = vec![[0.0; 2]; w * h];
    let mut valid = vec![false; w * h];
    let mut empty = vec![false; w * h];
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            let src = cam.distort_pixel(Vector2::new(x as f64, y as f64));
            let inside = src.x >= -tol && src.y >= -tol && src.x <= xmax + tol && src.y <= ymax + tol;
            let sampled = if inside {
                sample_dirs(map, src.x.clamp(0.0, xmax), src.y.clamp(0.0, ymax))
            } else {
                empty[i] = true;
                match fill {
                    Fill::BorderReplicate if src.x.is_finite() && src.y.is_finite() => {
                        sample_dirs(map, src.x.clamp(0.0, xmax), src.y.clamp(0.0, ymax))
                    }
                    Fill::BorderReflect if src.x.is_finite() && src.y.is_finite() => {
                        sample_dirs(map, reflect(src.x, w), reflect(src.y, h))
                    }
                    _ => None,
                }
            };
            if let Some(d) = sampled {
                dirs[i] = d;
                valid[i] = true;
            }
        }
    }
    if fill == Fill::NavierStokes {
        diffuse_fill(&mut dirs, &mut valid, &empty, w, h);
    }
    OrientationMap {
        size,
        dirs,
        valid,
        kind: map.kind,
        singularity: map.singularity,
    }
}

/// Fills `empty` pixels by relaxing a discrete Laplace equation on both
/// channels, with every non-empty valid pixel held fixed.
fn diffuse_fill(dirs: &mut [[f64; 2]], valid: &mut [bool], empty: &[bool], w: usize, h: usize) {
    let holes: Vec<usize> = (0..w * h).filter(|&i| empty[i]).collect();
    if holes.is_empty() || !valid.iter().any(|v| *v) {
        return;
    }
    // Seed holes from the nearest known pixel in a breadth-first sweep.
    let mut known: Vec<bool> = valid.to_vec();
    let mut frontier: Vec<usize> = (0..w * h).filter(|&i| known[i]).collect();
    while !frontier.is_empty() {
        let mut next = Vec::new();
        for &i in &frontier {
            let (x, y) = (i % w, i / w);
            for (nx, ny) in neighbours(x, y, w, h) {
                let j = ny * w + nx;
                if !known[j] && empty[j] {
                    known[j] = true;
                    dirs[j] = dirs[i];
                    next.push(j);
                }
            }
        }
        frontier = next;
    }
    for _ in 0..2000 {
        let mut delta: f64 = 0.0;
        for &i in &holes {
            let (x, y) = (i % w, i / w);
            let mut acc = [0.0; 2];
            let mut n = 0.0;
            for (nx, ny) in neighbours(x, y, w, h) {
                let j = ny * w + nx;
                if known[j] {
                    acc[0] += dirs[j][0];
                    acc[1] += dirs[j][1];
                    n += 1.0;
                }
            }
            if n > 0.0 {
                let new = [acc[0] / n, acc[1] / n];
                delta = delta.max((new[0] - dirs[i][0]).abs()).max((new[1] - dirs[i][1]).abs());
                dirs[i] = new;
            }
        }
        if delta < 1e-7 {
            break;
        }
    }
    for &i in &holes {
        match normalize(dirs[i]) {
            Some(u) if known[i] => {
                dirs[i] = u;
                valid[i] = true;
            }
            _ => {
                dirs[i] = [0.0; 2];
                valid[i] = false;
            }
        }
    }
}

fn neighbours(x: usize, y: usize, w: usize, h: usize) -> impl Iterator<Item = (usize, usize)> {
    let mut out = [(usize::MAX, usize::MAX); 4];
    if x > 0 {
        out[0] = (x - 1, y);
    }
    if x + 1 < w {
        out[1] = (x + 1, y);
    }
    if y > 0 {
        out[2] = (x, y - 1);
    }
    if y + 1 < h {
        out[3] = (x, y + 1);
    }
    out.into_iter().filter(|p| p.0 != usize::MAX)
}

/// Mean cosine between the flow direction and the prior over pixels where
/// both are defined. Equals `1 - MSE / 2` of the unit fields on that mask.
pub fn alignment_score(field: &MotionField, map: &OrientationMap) -> Result<f64> {
    Ok(alignment_value_and_gradient(field, map, false)?.0)
}

/// Alignment score and its gradient with respect to the interleaved tile
/// parameters. The mask is held fixed when differentiating.
pub fn alignment_value_and_gradient(
    field: &MotionField,
    map: &OrientationMap,
    want_grad: bool,
) -> Result<(f64, Option<Vec<f64>>)> {
    let size = map.size;
    if field.sensor_size() != size {
        return Err(Error::Dimension("motion field and orientation map sizes differ".into()));
    }
    let shape = field.shape();
    let tiles = field.tiles();
    let mut sum = 0.0;
    let mut count = 0usize;
    let mut grad = want_grad.then(|| vec![0.0; 2 * shape.tiles()]);
    for y in 0..size.height {
        for x in 0..size.width {
            let i = size.index(x, y);
            if !map.valid[i] {
                continue;
            }
            let tw = tile_weights(shape, size, x as f64, y as f64);
            let mut th = [0.0; 2];
            for &(k, w) in &tw {
                th[0] += w * tiles[k][0];
                th[1] += w * tiles[k][1];
            }
            let n = th[0].hypot(th[1]);
            if n < EPS_THETA {
                continue;
            }
            let u = [th[0] / n, th[1] / n];
            let o = map.dirs[i];
            let dot = u[0] * o[0] + u[1] * o[1];
            sum += dot;
            count += 1;
            if let Some(g) = grad.as_mut() {
                let d = [(o[0] - dot * u[0]) / n, (o[1] - dot * u[1]) / n];
                for &(k, w) in &tw {
                    g[2 * k] += w * d[0];
                    g[2 * k + 1] += w * d[1];
                }
            }
        }
    }
    if count == 0 {
        return Err(Error::EmptyMask);
    }
    let inv = 1.0 / count as f64;
    if let Some(g) = grad.as_mut() {
        g.iter_mut().for_each(|v| *v *= inv);
    }
    Ok((sum * inv, grad))
}

/// Mean squared difference between the unit flow directions and the prior on
/// the same mask as [`alignment_score`].
pub fn alignment_mse(field: &MotionField, map: &OrientationMap) -> Result<f64> {
    let dense = field.upsample_bilinear();
    let mut sum = 0.0;
    let mut count = 0usize;
    for (i, th) in dense.vel.iter().enumerate() {
        let n = th[0].hypot(th[1]);
        if !map.valid[i] || n < EPS_THETA {
            continue;
        }
        let o = map.dirs[i];
        let d = [th[0] / n - o[0], th[1] / n - o[1]];
        sum += d[0] * d[0] + d[1] * d[1];
        count += 1;
    }
    if count == 0 {
        return Err(Error::EmptyMask);
    }
    Ok(sum / count as f64)
}
