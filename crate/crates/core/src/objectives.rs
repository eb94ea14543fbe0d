//! Contrast objectives on the IWE.
//!
//! The optimizer uses the mean squared gradient magnitude `G`, normalized by
//! its value on the identity warp and averaged over several reference times
//! with Gaussian weights. Reference times are fractions of the event window;
//! per-reference results are always reduced in the order of `t_refs`.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::events::EventSet;
use crate::raster::Image;
use crate::warp::{self, build_iwe, tile_weights, validate_sigma, Iwe, MotionField, Taps};

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ContrastConfig {
    /// IWE splat width in pixels.
    pub sigma: f64,
    /// Reference times as fractions of the window, each in `[0, 1]`.
    pub t_refs: Vec<f64>,
    pub weight_mean: f64,
    pub weight_sigma: f64,
}

impl Default for ContrastConfig {
    fn default() -> Self {
        Self {
            sigma: 1.0,
            t_refs: vec![0.0, 0.25, 0.5, 0.75, 1.0],
            weight_mean: 0.5,
            weight_sigma: 1.0,
        }
    }
}

impl ContrastConfig {
    pub fn validate(&self) -> Result<()> {
        validate_sigma(self.sigma)?;
        if self.t_refs.is_empty() || self.t_refs.iter().any(|t| !(0.0..=1.0).contains(t)) {
            return Err(Error::Validation(
                "t_refs must be a non-empty list of fractions in [0, 1]".into(),
            ));
        }
        if !(self.weight_sigma > 0.0) || !self.weight_mean.is_finite() {
            return Err(Error::Validation("weight_sigma must be positive".into()));
        }
        Ok(())
    }

    /// Unnormalized normal-pdf weight of a fractional reference time.
    pub fn weight(&self, frac: f64) -> f64 {
        let z = (frac - self.weight_mean) / self.weight_sigma;
        (-0.5 * z * z).exp() / (self.weight_sigma * (2.0 * std::f64::consts::PI).sqrt())
    }

    pub fn weights(&self) -> Vec<f64> {
        self.t_refs.iter().map(|&t| self.weight(t)).collect()
    }
}

/// Spatial variance of the image.
pub fn variance(iwe: &Iwe) -> f64 {
    image_variance(&iwe.pixels)
}

pub(crate) fn image_variance(img: &Image) -> f64 {
    let n = img.len() as f64;
    let mean = img.sum() / n;
    img.data().iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n
}

/// Mean squared gradient magnitude. Central differences inside, one-sided
/// differences on the border rows and columns.
pub fn gradient_magnitude(iwe: &Iwe) -> Result<f64> {
    image_gradient_energy(&iwe.pixels)
}

pub(crate) fn image_gradient_energy(img: &Image) -> Result<f64> {
    check_gradient_dims(img)?;
    let (gx, gy) = image_gradients(img);
    Ok(energy(&gx, &gy))
}

fn check_gradient_dims(img: &Image) -> Result<()> {
    if img.width() < 3 || img.height() < 3 {
        return Err(Error::Dimension(format!(
            "gradient magnitude needs at least 3x3 pixels, got {}x{}",
            img.width(),
            img.height()
        )));
    }
    Ok(())
}

fn energy(gx: &[f64], gy: &[f64]) -> f64 {
    let s: f64 = gx.iter().zip(gy).map(|(a, b)| a * a + b * b).sum();
    s / gx.len() as f64
}

fn image_gradients(img: &Image) -> (Vec<f64>, Vec<f64>) {
    let (w, h) = (img.width(), img.height());
    let d = img.data();
    let mut gx = vec![0.0; w * h];
    let mut gy = vec![0.0; w * h];
    for y in 0..h {
        let row = &d[y * w..(y + 1) * w];
        let out = &mut gx[y * w..(y + 1) * w];
        out[0] = row[1] - row[0];
        out[w - 1] = row[w - 1] - row[w - 2];
        for x in 1..w - 1 {
            out[x] = 0.5 * (row[x + 1] - row[x - 1]);
        }
    }
    for x in 0..w {
        gy[x] = d[w + x] - d[x];
        gy[(h - 1) * w + x] = d[(h - 1) * w + x] - d[(h - 2) * w + x];
    }
    for y in 1..h - 1 {
        for x in 0..w {
            gy[y * w + x] = 0.5 * (d[(y + 1) * w + x] - d[(y - 1) * w + x]);
        }
    }
    (gx, gy)
}

/// `Dxᵀ cx + Dyᵀ cy` for the stencils of [`image_gradients`].
fn gradient_adjoint(cx: &[f64], cy: &[f64], w: usize, h: usize) -> Vec<f64> {
    let mut out = vec![0.0; w * h];
    for y in 0..h {
        let r = y * w;
        out[r + 1] += cx[r];
        out[r] -= cx[r];
        out[r + w - 1] += cx[r + w - 1];
        out[r + w - 2] -= cx[r + w - 1];
        for x in 1..w - 1 {
            let c = 0.5 * cx[r + x];
            out[r + x + 1] += c;
            out[r + x - 1] -= c;
        }
    }
    for x in 0..w {
        out[w + x] += cy[x];
        out[x] -= cy[x];
        let last = (h - 1) * w + x;
        out[last] += cy[last];
        out[last - w] -= cy[last];
    }
    for y in 1..h - 1 {
        for x in 0..w {
            let c = 0.5 * cy[y * w + x];
            out[(y + 1) * w + x] += c;
            out[(y - 1) * w + x] -= c;
        }
    }
    out
}

/// Relative multi-reference contrast of one event window, with the
/// identity-warp denominator computed once.
#[derive(Debug, Clone)]
pub struct ContrastObjective<'a> {
    events: &'a EventSet,
    t0: f64,
    t1: f64,
    cfg: ContrastConfig,
    weights: Vec<f64>,
    weight_sum: f64,
    denominator: f64,
}

/// Per-evaluation breakdown.
#[derive(Debug, Clone, PartialEq)]
pub struct ContrastValue {
    /// Weighted mean relative contrast.
    pub f_rel: f64,
    /// Relative contrast at each reference time, in `t_refs` order.
    pub per_ref: Vec<f64>,
}

impl<'a> ContrastObjective<'a> {
    pub fn new(events: &'a EventSet, window: (f64, f64), cfg: &ContrastConfig) -> Result<Self> {
        cfg.validate()?;
        if events.is_empty() {
            return Err(Error::EmptyEventSet);
        }
        let (t0, t1) = window;
        if !(t0 < t1) {
            return Err(Error::Validation(format!("window [{t0}, {t1}] is empty")));
        }
        let size = events.sensor_size();
        if size.width < 3 || size.height < 3 {
            return Err(Error::Dimension("sensor smaller than 3x3".into()));
        }
        let first = events.events()[0];
        let single_pixel = events.events().iter().all(|e| e.x == first.x && e.y == first.y);
        let identity = warp::WarpedEvents {
            points: events.events().iter().map(|e| [e.x as f64, e.y as f64]).collect(),
            t_ref: t0,
        };
        let denominator = gradient_magnitude(&build_iwe(&identity, size, cfg.sigma)?)?;
        if single_pixel || !(denominator > 0.0) || !denominator.is_finite() {
            return Err(Error::DegenerateContrast);
        }
        let weights = cfg.weights();
        let weight_sum = weights.iter().sum();
        Ok(Self {
            events,
            t0,
            t1,
            cfg: cfg.clone(),
            weights,
            weight_sum,
            denominator,
        })
    }

    pub fn denominator(&self) -> f64 {
        self.denominator
    }

    pub fn events(&self) -> &EventSet {
        self.events
    }

    pub fn window(&self) -> (f64, f64) {
        (self.t0, self.t1)
    }

    pub fn config(&self) -> &ContrastConfig {
        &self.cfg
    }

    pub fn ref_time(&self, frac: f64) -> f64 {
        self.t0 + frac * (self.t1 - self.t0)
    }

    /// `G(Θ; t_ref) / G(0)` at an absolute reference time.
    pub fn relative_at(&self, field: &MotionField, t_ref: f64) -> Result<f64> {
        let warped = warp::warp_events(self.events, field, t_ref);
        let iwe = build_iwe(&warped, self.events.sensor_size(), self.cfg.sigma)?;
        Ok(gradient_magnitude(&iwe)? / self.denominator)
    }

    pub fn evaluate(&self, field: &MotionField) -> Result<ContrastValue> {
        let (v, _) = self.eval_impl(field, false)?;
        Ok(v)
    }

    /// Value and exact gradient with respect to the interleaved tile
    /// parameters of `field` (see [`MotionField::params`]).
    pub fn value_and_gradient(&self, field: &MotionField) -> Result<(ContrastValue, Vec<f64>)> {
        let (v, g) = self.eval_impl(field, true)?;
        Ok((v, g.expect("gradient requested")))
    }

    fn eval_impl(&self, field: &MotionField, want_grad: bool) -> Result<(ContrastValue, Option<Vec<f64>>)> {
        let size = self.events.sensor_size();
        if field.sensor_size() != size {
            return Err(Error::Dimension("motion field and events disagree on sensor size".into()));
        }
        let shape = field.shape();
        let tiles = field.tiles();
        // Per-event velocity and bilinear tile weights, shared by every t_ref.
        let sampled: Vec<(warp::TileWeights, [f64; 2])> = self
            .events
            .events()
            .iter()
            .map(|e| {
                let tw = tile_weights(shape, size, e.x as f64, e.y as f64);
                let mut th = [0.0; 2];
                for &(k, w) in &tw {
                    th[0] += w * tiles[k][0];
                    th[1] += w * tiles[k][1];
                }
                (tw, th)
            })
            .collect();

        let per_ref: Vec<(f64, Option<Vec<f64>>)> = self
            .cfg
            .t_refs
            .par_iter()
            .map(|&frac| self.eval_ref(&sampled, shape.tiles(), self.ref_time(frac), want_grad))
            .collect::<Result<_>>()?;

        let mut f_rel = 0.0;
        let mut grad = want_grad.then(|| vec![0.0; 2 * shape.tiles()]);
        let mut rels = Vec::with_capacity(per_ref.len());
        for ((g_val, g_grad), &w) in per_ref.into_iter().zip(&self.weights) {
            let rel = g_val / self.denominator;
            rels.push(rel);
            let c = w / self.weight_sum;
            f_rel += c * rel;
            if let (Some(acc), Some(gg)) = (grad.as_mut(), g_grad) {
                let s = c / self.denominator;
                for (a, b) in acc.iter_mut().zip(gg) {
                    *a += s * b;
                }
            }
        }
        if !f_rel.is_finite() {
            return Err(Error::NonFinite { term: "contrast" });
        }
        Ok((ContrastValue { f_rel, per_ref: rels }, grad))
    }

    /// Returns `G(Θ; t_ref)` and optionally `dG/dΘ`.
    fn eval_ref(
        &self,
        sampled: &[(warp::TileWeights, [f64; 2])],
        n_tiles: usize,
        t_ref: f64,
        want_grad: bool,
    ) -> Result<(f64, Option<Vec<f64>>)> {
        let size = self.events.sensor_size();
        let (w, h) = (size.width as usize, size.height as usize);
        let sigma = self.cfg.sigma;
        let points: Vec<[f64; 2]> = self
            .events
            .events()
            .iter()
            .zip(sampled)
            .map(|(e, (_, th))| {
                let dt = t_ref - e.t;
                [e.x as f64 + th[0] * dt, e.y as f64 + th[1] * dt]
            })
            .collect();
        let mut img = Image::zeros(w, h);
        for p in &points {
            warp::splat(&mut img, *p, sigma);
        }
        let (gx, gy) = image_gradients(&img);
        let value = energy(&gx, &gy);
        if !want_grad {
            return Ok((value, None));
        }

        let scale = 2.0 / (w * h) as f64;
        let cx: Vec<f64> = gx.iter().map(|v| v * scale).collect();
        let cy: Vec<f64> = gy.iter().map(|v| v * scale).collect();
        let dimg = gradient_adjoint(&cx, &cy, w, h);

        let mut grad = vec![0.0; 2 * n_tiles];
        let reach = (3.0 * sigma).ceil() + 1.0;
        for ((e, (tw, _)), p) in self.events.events().iter().zip(sampled).zip(&points) {
            if p[0] < -reach || p[1] < -reach || p[0] > w as f64 + reach || p[1] > h as f64 + reach {
                continue;
            }
            let tx = Taps::new(p[0], sigma, true);
            let ty = Taps::new(p[1], sigma, true);
            let (mut dx, mut dy) = (0.0, 0.0);
            for (ky, py) in ty.clipped(h) {
                let row = &dimg[py * w..(py + 1) * w];
                let (mut sw, mut sdw) = (0.0, 0.0);
                for (kx, px) in tx.clipped(w) {
                    sw += row[px] * tx.w[kx];
                    sdw += row[px] * tx.dw[kx];
                }
                dx += sdw * ty.w[ky];
                dy += sw * ty.dw[ky];
            }
            let dt = t_ref - e.t;
            for &(k, wt) in tw {
                grad[2 * k] += dx * dt * wt;
                grad[2 * k + 1] += dy * dt * wt;
            }
        }
        Ok((value, Some(grad)))
    }
}

/// `G(Θ; t_ref) / G(0)`.
pub fn relative_contrast(
    events: &EventSet,
    field: &MotionField,
    t_ref: f64,
    cfg: &ContrastConfig,
) -> Result<f64> {
    let obj = ContrastObjective::new(events, (events.t_start(), events.t_end().max(events.t_start() + f64::EPSILON)), cfg)?;
    obj.relative_at(field, t_ref)
}

/// Gaussian-weighted mean of the relative contrast over the configured
/// reference times.
pub fn multi_ref_contrast(
    events: &EventSet,
    field: &MotionField,
    window: (f64, f64),
    cfg: &ContrastConfig,
) -> Result<f64> {
    Ok(ContrastObjective::new(events, window, cfg)?.evaluate(field)?.f_rel)
}
