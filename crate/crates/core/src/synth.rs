//! Synthetic scenes with exact ground truth.
//!
//! A textured plane at constant depth is viewed by a camera moving with a
//! constant velocity. Image motion is the rigid motion field, evaluated in
//! normalized coordinates and scaled back to pixels. The velocity is camera
//! egomotion expressed in the camera frame, the same quantity the orientation
//! priors consume.
//!
//! Events come from tracing each pixel's pre-image back through the flow and
//! recording every crossing of the intensity threshold levels, timestamped by
//! linear interpolation between trace samples.

use nalgebra::{Vector2, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};
use rayon::prelude::*;

use crate::camera::CameraModel;
use crate::error::{Error, Result};
use crate::events::{Event, EventSet};
use crate::flow::FlowField;
use crate::velocity::VelocitySample;

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SceneKind {
    /// Sparse random disks.
    FrontoPlanar,
    /// Dense random disks of mixed size.
    TexturedPlane,
    /// A field of short bars, alternating vertical and horizontal.
    EdgeBar,
}

impl std::str::FromStr for SceneKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fronto_planar" => Ok(Self::FrontoPlanar),
            "textured_plane" => Ok(Self::TexturedPlane),
            "edge_bar" => Ok(Self::EdgeBar),
            other => Err(Error::Validation(format!("unknown scene kind `{other}`"))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SceneSpec {
    pub kind: SceneKind,
    /// Plane depth, meters.
    pub depth: f64,
    pub texture_seed: u64,
    /// Events emitted when one full edge sweeps over a pixel.
    pub contrast_density: u32,
    pub window: (f64, f64),
    pub camera: CameraModel,
    /// Camera egomotion, camera frame.
    pub motion: VelocitySample,
    /// Thin out the texture on the left half of the frame.
    pub low_texture_left: bool,
    /// Mean of an exponential timestamp delay, seconds. Zero disables it.
    pub jitter: f64,
}

impl SceneSpec {
    /// Defaults around a 64x48 sensor with `f = 60` and a 0.1 s window.
    pub fn new(kind: SceneKind, motion: VelocitySample) -> Self {
        let camera = CameraModel::pinhole(60.0, 60.0, 31.5, 23.5, crate::events::SensorSize::new(64, 48))
            .expect("default camera");
        Self {
            kind,
            depth: 2.0,
            texture_seed: 7,
            contrast_density: 4,
            window: (0.0, 0.1),
            camera,
            motion,
            low_texture_left: false,
            jitter: 0.0,
        }
    }

    /// Bar field translating right at `speed` px/s.
    pub fn edge_bar(speed: f64) -> Self {
        Self::edge_bar_on(Self::new(SceneKind::EdgeBar, VelocitySample::default()).camera, speed)
    }

    /// [`SceneSpec::edge_bar`] seen through `camera`.
    pub fn edge_bar_on(camera: CameraModel, speed: f64) -> Self {
        let mut s = Self::new(SceneKind::EdgeBar, VelocitySample::default());
        s.motion.v = Vector3::new(-speed * s.depth / camera.fx, 0.0, 0.0);
        s.camera = camera;
        s
    }

    pub fn validate(&self) -> Result<()> {
        self.camera.validate()?;
        if !(self.depth > 0.0 && self.depth.is_finite()) {
            return Err(Error::Validation("depth must be positive".into()));
        }
        if !(self.window.0 < self.window.1) || !self.window.0.is_finite() || !self.window.1.is_finite() {
            return Err(Error::Validation("window must satisfy t0 < t1".into()));
        }
        if self.contrast_density == 0 {
            return Err(Error::Validation("contrast_density must be positive".into()));
        }
        if !(self.jitter >= 0.0) {
            return Err(Error::Validation("jitter must be non-negative".into()));
        }
        let m = &self.motion;
        if m.v.iter().chain(m.w.iter()).any(|c| !c.is_finite()) {
            return Err(Error::Validation("non-finite motion".into()));
        }
        Ok(())
    }
}

/// 346x260 pinhole with `f = 226`, close to the DAVIS346 used by MVSEC.
pub fn mvsec_camera() -> CameraModel {
    CameraModel::pinhole(226.0, 226.0, 172.5, 129.5, crate::events::SensorSize::new(346, 260)).expect("valid camera")
}

/// Image velocity in px/s at pixel `x` for camera egomotion `vel` and a
/// plane at depth `depth`.
pub fn motion_field_at(x: [f64; 2], cam: &CameraModel, vel: &VelocitySample, depth: f64) -> [f64; 2] {
    let n = cam.pixel_to_normalized(Vector2::new(x[0], x[1]));
    let (xn, yn) = (n.x, n.y);
    let (v, w) = (vel.v, vel.w);
    let dx = (v.z * xn - v.x) / depth - w.y + w.z * yn + w.x * xn * yn - w.y * xn * xn;
    let dy = (v.z * yn - v.y) / depth + w.x - w.z * xn - w.y * xn * yn - w.x * yn * yn;
    [cam.fx * dx, cam.fy * dy]
}

#[derive(Debug, Clone)]
pub struct SynthOutput {
    pub events: EventSet,
    /// `motion_field_at · (t1 − t0)` at every pixel.
    pub flow: FlowField,
    pub velocity: VelocitySample,
}

/// Texture primitive: a disk or an axis-aligned box.
#[derive(Debug, Clone, Copy)]
enum Shape {
    Disk { c: [f64; 2], r: f64 },
    Bar { lo: [f64; 2], hi: [f64; 2] },
}

impl Shape {
    /// Positive inside.
    fn signed_distance(&self, p: [f64; 2]) -> f64 {
        match *self {
            Shape::Disk { c, r } => r - (p[0] - c[0]).hypot(p[1] - c[1]),
            Shape::Bar { lo, hi } => {
                let dx = (lo[0] - p[0]).max(p[0] - hi[0]);
                let dy = (lo[1] - p[1]).max(p[1] - hi[1]);
                let outside = dx.max(0.0).hypot(dy.max(0.0));
                if outside > 0.0 {
                    -outside
                } else {
                    -dx.max(dy)
                }
            }
        }
    }

    fn bounds(&self) -> ([f64; 2], [f64; 2]) {
        match *self {
            Shape::Disk { c, r } => ([c[0] - r, c[1] - r], [c[0] + r, c[1] + r]),
            Shape::Bar { lo, hi } => (lo, hi),
        }
    }
}

const EDGE_WIDTH: f64 = 0.5;
/// `tanh(-d / EDGE_WIDTH)` is exactly -1 in f64 beyond this distance.
const CUTOFF: f64 = 12.0;
const CELL: f64 = 8.0;

/// Smooth intensity in `[-1, 1]`: the maximum signed distance over all shapes
/// through a `tanh` ramp. A bucket grid holds every shape within `CUTOFF` of
/// each cell, so lookups match a brute-force scan exactly.
struct Texture {
    shapes: Vec<Shape>,
    origin: [f64; 2],
    cols: usize,
    rows: usize,
    cells: Vec<Vec<u32>>,
}

impl Texture {
    fn build(spec: &SceneSpec) -> Self {
        let (w, h) = (spec.camera.sensor_size.width as f64, spec.camera.sensor_size.height as f64);
        let mut rng = ChaCha8Rng::seed_from_u64(spec.texture_seed);
        let shapes = match spec.kind {
            SceneKind::EdgeBar => scatter_bars(&mut rng, w, h),
            SceneKind::FrontoPlanar => scatter_disks(&mut rng, spec, (w * h / 90.0) as usize, 1.5, 3.5),
            SceneKind::TexturedPlane => scatter_disks(&mut rng, spec, (w * h / 30.0) as usize, 0.8, 2.5),
        };
        Self::index(shapes)
    }

    fn index(shapes: Vec<Shape>) -> Self {
        let mut lo = [f64::INFINITY; 2];
        let mut hi = [f64::NEG_INFINITY; 2];
        for s in &shapes {
            let (a, b) = s.bounds();
            for i in 0..2 {
                lo[i] = lo[i].min(a[i] - CUTOFF);
                hi[i] = hi[i].max(b[i] + CUTOFF);
            }
        }
        if shapes.is_empty() {
            lo = [0.0; 2];
            hi = [0.0; 2];
        }
        let cols = ((hi[0] - lo[0]) / CELL).ceil().max(1.0) as usize;
        let rows = ((hi[1] - lo[1]) / CELL).ceil().max(1.0) as usize;
        let mut cells = vec![Vec::new(); cols * rows];
        let clamp = |v: f64, n: usize| (v.floor().max(0.0) as usize).min(n - 1);
        for (k, s) in shapes.iter().enumerate() {
            let (a, b) = s.bounds();
            let c0 = clamp((a[0] - CUTOFF - lo[0]) / CELL, cols);
            let c1 = clamp((b[0] + CUTOFF - lo[0]) / CELL, cols);
            let r0 = clamp((a[1] - CUTOFF - lo[1]) / CELL, rows);
            let r1 = clamp((b[1] + CUTOFF - lo[1]) / CELL, rows);
            for r in r0..=r1 {
                for c in c0..=c1 {
                    cells[r * cols + c].push(k as u32);
                }
            }
        }
        Self {
            shapes,
            origin: lo,
            cols,
            rows,
            cells,
        }
    }

    fn at(&self, p: [f64; 2]) -> f64 {
        let cx = ((p[0] - self.origin[0]) / CELL).floor();
        let cy = ((p[1] - self.origin[1]) / CELL).floor();
        if !(cx >= 0.0 && cy >= 0.0 && (cx as usize) < self.cols && (cy as usize) < self.rows) {
            return -1.0;
        }
        let sd = self.cells[cy as usize * self.cols + cx as usize]
            .iter()
            .fold(-CUTOFF, |m, &k| m.max(self.shapes[k as usize].signed_distance(p)));
        (sd / EDGE_WIDTH).tanh()
    }
}

fn scatter_disks(rng: &mut ChaCha8Rng, spec: &SceneSpec, count: usize, r_lo: f64, r_hi: f64) -> Vec<Shape> {
    let (w, h) = (spec.camera.sensor_size.width as f64, spec.camera.sensor_size.height as f64);
    let margin = 0.5 * w.max(h);
    let mut disks = Vec::with_capacity(count);
    for _ in 0..count {
        let c = [
            rng.random_range(-margin..w + margin),
            rng.random_range(-margin..h + margin),
        ];
        let r = rng.random_range(r_lo..r_hi);
        // Keep the rng stream identical whether or not the disk survives.
        let keep = rng.random::<f64>();
        if spec.low_texture_left && c[0] < 0.5 * w && keep > 0.1 {
            continue;
        }
        disks.push(Shape::Disk { c, r });
    }
    disks
}

/// Short axis-aligned bars, alternating vertical and horizontal, scattered
/// over the frame plus a margin so every region of the sensor sees edges.
fn scatter_bars(rng: &mut ChaCha8Rng, w: f64, h: f64) -> Vec<Shape> {
    let margin = 0.25 * w.max(h);
    let count = ((w + 2.0 * margin) * (h + 2.0 * margin) / 80.0) as usize;
    (0..count)
        .map(|k| {
            let c = [
                rng.random_range(-margin..w + margin),
                rng.random_range(-margin..h + margin),
            ];
            let long = rng.random_range(3.0..10.0);
            let thick = rng.random_range(1.0..2.5);
            let ext = if k % 2 == 0 { [thick, long] } else { [long, thick] };
            Shape::Bar {
                lo: [c[0] - 0.5 * ext[0], c[1] - 0.5 * ext[1]],
                hi: [c[0] + 0.5 * ext[0], c[1] + 0.5 * ext[1]],
            }
        })
        .collect()
}

/// Generates events, dense ground-truth displacement and the generating
/// velocity. Deterministic for a given spec.
pub fn generate_events(spec: &SceneSpec) -> Result<SynthOutput> {
    spec.validate()?;
    let cam = &spec.camera;
    let size = cam.sensor_size;
    let (t0, t1) = spec.window;
    let span = t1 - t0;
    let texture = Texture::build(spec);
    let field = |p: [f64; 2]| motion_field_at(p, cam, &spec.motion, spec.depth);

    let flow = FlowField::from_fn(size, |x, y| {
        let u = field([x as f64, y as f64]);
        (u[0] * span, u[1] * span)
    });

    // Step count keeps every trace step below 0.05 px.
    let mut max_speed: f64 = 0.0;
    for y in 0..size.height {
        for x in 0..size.width {
            let u = field([x as f64, y as f64]);
            max_speed = max_speed.max(u[0].hypot(u[1]));
        }
    }
    if max_speed * span < 1e-9 {
        return Err(Error::EmptyEventSet);
    }
    let steps = ((max_speed * 1.5 * span / 0.05).ceil() as usize).clamp(16, 20_000);
    let dt = span / steps as f64;

    let levels: Vec<f64> = (0..spec.contrast_density)
        .map(|k| -1.0 + (k as f64 + 0.5) * 2.0 / spec.contrast_density as f64)
        .collect();

    let rows: Vec<Vec<Event>> = (0..size.height)
        .into_par_iter()
        .map(|y| {
            let mut out = Vec::new();
            for x in 0..size.width {
                trace_pixel(x, y, &texture, &field, t0, dt, steps, &levels, &mut out);
            }
            out
        })
        .collect();
    let mut events: Vec<Event> = rows.into_iter().flatten().collect();

    if spec.jitter > 0.0 {
        let exp = Exp::new(1.0 / spec.jitter).map_err(|e| Error::Validation(e.to_string()))?;
        let mut rng = ChaCha8Rng::seed_from_u64(spec.texture_seed ^ 0x9e37_79b9_7f4a_7c15);
        for e in events.iter_mut() {
            e.t = (e.t + exp.sample(&mut rng)).min(t1);
        }
    }
    if events.is_empty() {
        return Err(Error::EmptyEventSet);
    }
    let events = EventSet::with_window(events, size, t0, t1)?;
    Ok(SynthOutput {
        events,
        flow,
        velocity: VelocitySample {
            t: 0.5 * (t0 + t1),
            ..spec.motion
        },
    })
}

/// Traces the pre-image of pixel `(x, y)` backwards through the stationary
/// flow and emits events at threshold crossings.
#[allow(clippy::too_many_arguments)]
fn trace_pixel(
    x: u32,
    y: u32,
    texture: &Texture,
    field: &impl Fn([f64; 2]) -> [f64; 2],
    t0: f64,
    dt: f64,
    steps: usize,
    levels: &[f64],
    out: &mut Vec<Event>,
) {
    let back = |p: [f64; 2]| {
        let u = field(p);
        [-u[0], -u[1]]
    };
    let mut p = [x as f64, y as f64];
    let mut prev = texture.at(p);
    for k in 1..=steps {
        p = rk4(&back, p, dt);
        let cur = texture.at(p);
        if cur != prev {
            let (lo, hi) = if prev < cur { (prev, cur) } else { (cur, prev) };
            let pol: i8 = if cur > prev { 1 } else { -1 };
            let mut crossed: Vec<f64> = levels
                .iter()
                .filter(|&&l| l > lo && l <= hi)
                .map(|&l| (l - prev) / (cur - prev))
                .collect();
            crossed.sort_by(|a, b| a.total_cmp(b));
            for frac in crossed {
                let t = t0 + (k as f64 - 1.0 + frac) * dt;
                out.push(Event::new(t, x as u16, y as u16, pol));
            }
        }
        prev = cur;
    }
}

fn rk4(f: &impl Fn([f64; 2]) -> [f64; 2], p: [f64; 2], h: f64) -> [f64; 2] {
    let add = |a: [f64; 2], b: [f64; 2], s: f64| [a[0] + s * b[0], a[1] + s * b[1]];
    let k1 = f(p);
    let k2 = f(add(p, k1, 0.5 * h));
    let k3 = f(add(p, k2, 0.5 * h));
    let k4 = f(add(p, k3, h));
    [
        p[0] + h / 6.0 * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0]),
        p[1] + h / 6.0 * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1]),
    ]
}
