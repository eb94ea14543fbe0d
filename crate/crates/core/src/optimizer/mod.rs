//! Hybrid objective and coarse-to-fine quasi-Newton optimization.
//!
//! The maximized objective is
//! `F(Θ) = α f_rel(Θ) + β_lin A_lin(Θ) + β_ang A_ang(Θ) − λ TV(Θ)`
//! where `A` is the mean cosine alignment with an orientation prior. Each
//! pyramid level runs BFGS from the bilinear upsampling of the previous
//! level's optimum; the first level starts from zero flow.
//!
//! Internally the parameters are per-tile displacements over the window
//! (`θ · (t1 − t0)`, pixels) so that step caps are in pixels regardless of
//! the window length.

mod bfgs;

use std::str::FromStr;
use std::time::Instant;

pub use bfgs::StopReason;

use crate::error::{Error, Result};
use crate::events::EventSet;
use crate::flow::FlowField;
use crate::objectives::{ContrastConfig, ContrastObjective};
use crate::priors::{alignment_value_and_gradient, OrientationMap};
use crate::warp::{GridShape, MotionField};

/// Gradient source for the quasi-Newton updates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GradientMode {
    /// Exact adjoint gradient of every term.
    #[default]
    Analytic,
    /// Central differences with step `fd_step` px/s on every parameter.
    FiniteDifference,
}

impl FromStr for GradientMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "analytic" => Ok(Self::Analytic),
            "finite_difference" | "fd" => Ok(Self::FiniteDifference),
            other => Err(Error::Validation(format!("unknown gradient mode `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    Ecd,
    Mvsec,
    MvsecOutdoor,
    Dsec,
}

impl Preset {
    pub const ALL: [Preset; 4] = [Preset::Ecd, Preset::Mvsec, Preset::MvsecOutdoor, Preset::Dsec];

    pub fn name(self) -> &'static str {
        match self {
            Preset::Ecd => "ecd",
            Preset::Mvsec => "mvsec",
            Preset::MvsecOutdoor => "mvsec-outdoor",
            Preset::Dsec => "dsec",
        }
    }
}

impl FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Preset::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| Error::Validation(format!("unknown preset `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct OpcmConfig {
    pub alpha: f64,
    pub beta_lin: f64,
    pub beta_ang: f64,
    pub lambda: f64,
    /// Grid shapes, coarse to fine.
    pub pyramid: Vec<GridShape>,
    pub sigma: f64,
    pub t_refs: Vec<f64>,
    pub max_iters: usize,
    /// Threshold on `‖∂F/∂θ‖∞` with θ in px/s.
    pub grad_tol: f64,
    pub gradient: GradientMode,
    /// Finite-difference step in px/s.
    pub fd_step: f64,
    /// Largest per-parameter displacement change of one trial step, pixels.
    pub max_step_px: f64,
    /// Events per window used when windows are selected by count.
    pub events_per_window: usize,
}

impl Default for OpcmConfig {
    fn default() -> Self {
        Self::preset(Preset::Mvsec)
    }
}

impl OpcmConfig {
    pub fn preset(p: Preset) -> Self {
        let four = vec![
            GridShape::square(1),
            GridShape::square(2),
            GridShape::square(4),
            GridShape::square(8),
        ];
        let base = Self {
            alpha: 20.0,
            beta_lin: 1.0,
            beta_ang: 0.1,
            lambda: 0.0,
            pyramid: four,
            sigma: 1.0,
            t_refs: ContrastConfig::default().t_refs,
            max_iters: 250,
            grad_tol: 1e-6,
            gradient: GradientMode::Analytic,
            fd_step: 1e-4,
            max_step_px: 1.0,
            events_per_window: 30_000,
        };
        match p {
            Preset::Ecd | Preset::Mvsec => base,
            Preset::MvsecOutdoor => Self {
                beta_lin: 2.0,
                beta_ang: 0.05,
                events_per_window: 40_000,
                ..base
            },
            Preset::Dsec => Self {
                alpha: 5000.0,
                beta_lin: 500.0,
                beta_ang: 100.0,
                pyramid: (0..5).map(|k| GridShape::square(1 << k)).collect(),
                events_per_window: 1_500_000,
                ..base
            },
        }
    }

    pub fn contrast(&self) -> ContrastConfig {
        ContrastConfig {
            sigma: self.sigma,
            t_refs: self.t_refs.clone(),
            ..ContrastConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Validation(m.to_string()));
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return bad("alpha must be positive");
        }
        if !(self.beta_lin >= 0.0 && self.beta_ang >= 0.0 && self.lambda >= 0.0) {
            return bad("beta_lin, beta_ang and lambda must be non-negative");
        }
        if self.pyramid.is_empty() {
            return bad("pyramid must not be empty");
        }
        if self.pyramid.windows(2).any(|w| w[1].tiles() <= w[0].tiles()) {
            return bad("pyramid tile counts must be strictly increasing");
        }
        if !(self.grad_tol >= 0.0) || !(self.fd_step > 0.0) || !(self.max_step_px > 0.0) {
            return bad("grad_tol, fd_step and max_step_px must be positive");
        }
        if self.events_per_window == 0 {
            return bad("events_per_window must be positive");
        }
        self.contrast().validate()
    }
}

/// Orientation priors for one window. Either map may be absent.
#[derive(Debug, Clone, Default)]
pub struct Priors {
    pub linear: Option<OrientationMap>,
    pub angular: Option<OrientationMap>,
}

impl Priors {
    pub fn none() -> Self {
        Self::default()
    }

    pub fn is_empty(&self) -> bool {
        self.linear.is_none() && self.angular.is_none()
    }
}

/// Individual terms of one objective evaluation.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct Terms {
    pub total: f64,
    /// `None` when the contrast term is inactive.
    pub f_rel: Option<f64>,
    /// Mean cosine alignment; `None` without a linear prior.
    pub g_lin: Option<f64>,
    pub g_ang: Option<f64>,
    pub tv: f64,
}

/// `α f_rel + β_lin A_lin + β_ang A_ang − λ TV` for one window.
pub struct HybridObjective<'a> {
    contrast: Option<ContrastObjective<'a>>,
    priors: &'a Priors,
    alpha: f64,
    beta_lin: f64,
    beta_ang: f64,
    lambda: f64,
    degenerate: bool,
    window: (f64, f64),
}

impl<'a> HybridObjective<'a> {
    pub fn new(events: &'a EventSet, window: (f64, f64), priors: &'a Priors, cfg: &OpcmConfig) -> Result<Self> {
        if !(cfg.alpha >= 0.0 && cfg.beta_lin >= 0.0 && cfg.beta_ang >= 0.0 && cfg.lambda >= 0.0) {
            return Err(Error::Validation("objective weights must be non-negative".into()));
        }
        let (contrast, degenerate) = if cfg.alpha > 0.0 {
            match ContrastObjective::new(events, window, &cfg.contrast()) {
                Ok(c) => (Some(c), false),
                Err(Error::DegenerateContrast) => (None, true),
                Err(e) => return Err(e),
            }
        } else {
            (None, false)
        };
        for map in [&priors.linear, &priors.angular].into_iter().flatten() {
            if map.size() != events.sensor_size() {
                return Err(Error::Dimension("orientation map does not match the sensor".into()));
            }
        }
        let obj = Self {
            contrast,
            priors,
            alpha: cfg.alpha,
            beta_lin: cfg.beta_lin,
            beta_ang: cfg.beta_ang,
            lambda: cfg.lambda,
            degenerate,
            window,
        };
        if !obj.has_active_term() {
            return Err(if degenerate {
                Error::DegenerateContrast
            } else {
                Error::Validation("no active objective term".into())
            });
        }
        Ok(obj)
    }

    /// True when the contrast term had to be dropped.
    pub fn degenerate_contrast(&self) -> bool {
        self.degenerate
    }

    pub fn window(&self) -> (f64, f64) {
        self.window
    }

    fn lin_active(&self) -> Option<&OrientationMap> {
        self.priors.linear.as_ref().filter(|_| self.beta_lin > 0.0)
    }

    fn ang_active(&self) -> Option<&OrientationMap> {
        self.priors.angular.as_ref().filter(|_| self.beta_ang > 0.0)
    }

    fn has_active_term(&self) -> bool {
        self.contrast.is_some() || self.lin_active().is_some() || self.ang_active().is_some()
    }

    pub fn evaluate(&self, field: &MotionField) -> Result<Terms> {
        Ok(self.eval_impl(field, false)?.0)
    }

    /// Value and gradient with respect to [`MotionField::params`] (px/s).
    pub fn value_and_gradient(&self, field: &MotionField) -> Result<(Terms, Vec<f64>)> {
        let (t, g) = self.eval_impl(field, true)?;
        Ok((t, g.expect("gradient requested")))
    }

    /// Central-difference gradient with step `h` px/s.
    pub fn fd_gradient(&self, field: &MotionField, h: f64) -> Result<Vec<f64>> {
        let (shape, size) = (field.shape(), field.sensor_size());
        let p = field.params();
        let mut out = Vec::with_capacity(p.len());
        let mut q = p.clone();
        for i in 0..p.len() {
            q[i] = p[i] + h;
            let a = self.evaluate(&MotionField::from_params(shape, size, &q)?)?.total;
            q[i] = p[i] - h;
            let b = self.evaluate(&MotionField::from_params(shape, size, &q)?)?.total;
            q[i] = p[i];
            out.push((a - b) / (2.0 * h));
        }
        Ok(out)
    }

    fn eval_impl(&self, field: &MotionField, want_grad: bool) -> Result<(Terms, Option<Vec<f64>>)> {
        let n = field.params().len();
        let mut grad = want_grad.then(|| vec![0.0; n]);
        let mut total = 0.0;
        let mut f_rel = None;
        if let Some(c) = &self.contrast {
            let value = if want_grad {
                let (v, g) = c.value_and_gradient(field)?;
                axpy(grad.as_mut(), self.alpha, &g);
                v.f_rel
            } else {
                c.evaluate(field)?.f_rel
            };
            total = self.alpha * value;
            f_rel = Some(value);
        }
        let mut g_lin = self.priors.linear.as_ref().map(|_| 0.0);
        let mut g_ang = self.priors.angular.as_ref().map(|_| 0.0);
        for (map, beta, slot, name) in [
            (self.lin_active(), self.beta_lin, &mut g_lin, "linear alignment"),
            (self.ang_active(), self.beta_ang, &mut g_ang, "angular alignment"),
        ] {
            let Some(map) = map else { continue };
            match alignment_value_and_gradient(field, map, want_grad) {
                Ok((a, g)) => {
                    if !a.is_finite() {
                        return Err(Error::NonFinite { term: name });
                    }
                    total += beta * a;
                    *slot = Some(a);
                    if let Some(g) = g {
                        axpy(grad.as_mut(), beta, &g);
                    }
                }
                // No pixel carries a direction yet: the term contributes 0.
                Err(Error::EmptyMask) => {}
                Err(e) => return Err(e),
            }
        }
        let mut tv = 0.0;
        if self.lambda > 0.0 {
            let (v, g) = tv_value_and_gradient(field);
            tv = v;
            total -= self.lambda * v;
            axpy(grad.as_mut(), -self.lambda, &g);
        }
        if !total.is_finite() {
            return Err(Error::NonFinite { term: "total" });
        }
        Ok((
            Terms {
                total,
                f_rel,
                g_lin,
                g_ang,
                tv,
            },
            grad,
        ))
    }
}

fn axpy(acc: Option<&mut Vec<f64>>, a: f64, x: &[f64]) {
    if let Some(acc) = acc {
        for (y, v) in acc.iter_mut().zip(x) {
            *y += a * v;
        }
    }
}

/// Scalar objective value at `field`.
pub fn hybrid_objective(
    events: &EventSet,
    field: &MotionField,
    window: (f64, f64),
    priors: &Priors,
    cfg: &OpcmConfig,
) -> Result<f64> {
    Ok(HybridObjective::new(events, window, priors, cfg)?.evaluate(field)?.total)
}

/// L1 total variation over 4-connected forward differences of the tile grid.
pub fn tv_regularizer(field: &MotionField) -> f64 {
    tv_value_and_gradient(field).0
}

fn tv_value_and_gradient(field: &MotionField) -> (f64, Vec<f64>) {
    let shape = field.shape();
    let tiles = field.tiles();
    let mut g = vec![0.0; 2 * tiles.len()];
    let mut sum = 0.0;
    let mut pair = |a: usize, b: usize, g: &mut [f64]| {
        for c in 0..2 {
            let d = tiles[b][c] - tiles[a][c];
            sum += d.abs();
            let s = if d > 0.0 {
                1.0
            } else if d < 0.0 {
                -1.0
            } else {
                0.0
            };
            g[2 * b + c] += s;
            g[2 * a + c] -= s;
        }
    };
    for r in 0..shape.rows {
        for c in 0..shape.cols {
            let k = r * shape.cols + c;
            if c + 1 < shape.cols {
                pair(k, k + 1, &mut g);
            }
            if r + 1 < shape.rows {
                pair(k, k + shape.cols, &mut g);
            }
        }
    }
    (sum, g)
}

/// Outcome of one pyramid level.
#[derive(Debug, Clone)]
pub struct LevelResult {
    pub field: MotionField,
    pub terms: Terms,
    /// Objective at the initial point and every accepted iterate.
    pub trace: Vec<f64>,
    pub iterations: usize,
    pub stop: StopReason,
    /// Set when the contrast term was dropped for a degenerate event set.
    pub degenerate_contrast: bool,
}

/// Runs BFGS on one grid level starting from `init`.
pub fn optimize_level(
    events: &EventSet,
    init: &MotionField,
    window: (f64, f64),
    priors: &Priors,
    cfg: &OpcmConfig,
) -> Result<LevelResult> {
    cfg.validate()?;
    if init.sensor_size() != events.sensor_size() {
        return Err(Error::Dimension("initial field does not match the sensor".into()));
    }
    let objective = match HybridObjective::new(events, window, priors, cfg) {
        Ok(o) => o,
        Err(Error::DegenerateContrast) => {
            return Ok(LevelResult {
                field: init.clone(),
                terms: Terms {
                    total: 0.0,
                    f_rel: None,
                    g_lin: None,
                    g_ang: None,
                    tv: tv_regularizer(init),
                },
                trace: Vec::new(),
                iterations: 0,
                stop: StopReason::Degenerate,
                degenerate_contrast: true,
            });
        }
        Err(e) => return Err(e),
    };
    optimize_with(&objective, init, cfg)
}

/// Line searches stop below this displacement, pixels.
const MIN_STEP_PX: f64 = 1e-4;

fn optimize_with(objective: &HybridObjective<'_>, init: &MotionField, cfg: &OpcmConfig) -> Result<LevelResult> {
    let (t0, t1) = objective.window();
    let span = t1 - t0;
    let (shape, size) = (init.shape(), init.sensor_size());
    let to_field = |d: &[f64]| {
        let theta: Vec<f64> = d.iter().map(|v| v / span).collect();
        MotionField::from_params(shape, size, &theta)
    };
    let eval = |d: &[f64], want_grad: bool| -> Result<(f64, Option<Vec<f64>>)> {
        let field = to_field(d)?;
        if !want_grad {
            return Ok((objective.evaluate(&field)?.total, None));
        }
        let (value, grad) = match cfg.gradient {
            GradientMode::Analytic => {
                let (t, g) = objective.value_and_gradient(&field)?;
                (t.total, g)
            }
            GradientMode::FiniteDifference => {
                (objective.evaluate(&field)?.total, objective.fd_gradient(&field, cfg.fd_step)?)
            }
        };
        // dF/dd = dF/dθ / span
        Ok((value, Some(grad.into_iter().map(|g| g / span).collect())))
    };
    let x0: Vec<f64> = init.params().iter().map(|v| v * span).collect();
    let opts = bfgs::Options {
        max_iters: cfg.max_iters,
        grad_tol: cfg.grad_tol,
        grad_scale: span,
        max_step: cfg.max_step_px,
        min_step: MIN_STEP_PX,
    };
    let out = bfgs::maximize(eval, x0, opts)?;
    let field = to_field(&out.x)?;
    let terms = objective.evaluate(&field)?;
    Ok(LevelResult {
        field,
        terms,
        trace: out.trace,
        iterations: out.iterations,
        stop: out.stop,
        degenerate_contrast: objective.degenerate_contrast(),
    })
}

/// Per-level summary of a pyramid run.
#[derive(Debug, Clone, serde::Serialize)]
pub struct LevelReport {
    pub shape: GridShape,
    pub init_objective: f64,
    pub final_objective: f64,
    pub iterations: usize,
    pub stop: StopReason,
    pub seconds: f64,
}

#[derive(Debug, Clone)]
pub struct OpcmResult {
    /// Optimum at the finest grid, px/s.
    pub field: MotionField,
    /// Dense displacement over the window, pixels.
    pub flow: FlowField,
    pub objective_trace: Vec<Vec<f64>>,
    pub levels: Vec<LevelReport>,
    pub f_rel: Option<f64>,
    pub g_lin: Option<f64>,
    pub g_ang: Option<f64>,
    pub degenerate_contrast: bool,
}

/// Coarse-to-fine optimization with handover between levels.
pub fn optimize_pyramid(events: &EventSet, window: (f64, f64), priors: &Priors, cfg: &OpcmConfig) -> Result<OpcmResult> {
    cfg.validate()?;
    let size = events.sensor_size();
    let mut field = MotionField::zeros(cfg.pyramid[0], size);
    let mut traces = Vec::new();
    let mut levels = Vec::new();
    let mut last = None;
    let objective = match HybridObjective::new(events, window, priors, cfg) {
        Ok(o) => Some(o),
        Err(Error::DegenerateContrast) => None,
        Err(e) => return Err(e),
    };
    if let Some(objective) = &objective {
        for &shape in &cfg.pyramid {
            let init = field.resample(shape);
            let start = Instant::now();
            let res = optimize_with(objective, &init, cfg)?;
            levels.push(LevelReport {
                shape,
                init_objective: res.trace[0],
                final_objective: res.terms.total,
                iterations: res.iterations,
                stop: res.stop,
                seconds: start.elapsed().as_secs_f64(),
            });
            traces.push(res.trace);
            field = res.field;
            last = Some(res.terms);
        }
    } else {
        field = field.resample(*cfg.pyramid.last().unwrap());
    }
    let span = window.1 - window.0;
    let dense = field.upsample_bilinear();
    let flow = FlowField::from_fn(size, |x, y| {
        let v = dense.at(x, y);
        (v[0] * span, v[1] * span)
    });
    Ok(OpcmResult {
        field,
        flow,
        objective_trace: traces,
        levels,
        f_rel: last.and_then(|t| t.f_rel),
        g_lin: last.and_then(|t| t.g_lin),
        g_ang: last.and_then(|t| t.g_ang),
        degenerate_contrast: objective.is_none_or(|o| o.degenerate_contrast()),
    })
}
