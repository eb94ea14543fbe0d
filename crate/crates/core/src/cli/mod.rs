//! Command-line front end: `estimate`, `synth`, `eval`, `omap`, `velocity`.
//!
//! A `--config file.json` holds flat dotted keys whose last segment names a
//! flag (`"opcm.beta_lin": 2` is `--beta-lin 2`). File entries are expanded
//! ahead of the command line, so explicit flags win.
//!
//! Exit codes: 0 success, 1 invalid input or usage, 2 runtime or numerical
//! failure.

mod commands;
mod render;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Map, Value};

use crate::error::{Error, Result};
use crate::metrics::MaskPolicy;
use crate::optimizer::{GradientMode, OpcmConfig, Preset};
use crate::priors::{Fill, PriorConfig};
use crate::synth::SceneKind;
use crate::warp::GridShape;

#[derive(Parser, Debug)]
#[command(name = "opcm", version, about = "Event-camera optical flow by contrast maximization with orientation priors")]
struct Cli {
    /// JSON file of flat dotted keys mirroring the flags.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Suppress JSON log lines on stderr.
    #[arg(long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Estimate dense flow for one or more event windows.
    #[command(args_override_self = true)]
    Estimate(EstimateArgs),
    /// Generate a synthetic event set with exact flow and velocity.
    #[command(args_override_self = true)]
    Synth(SynthArgs),
    /// Score a predicted flow against ground truth.
    #[command(args_override_self = true)]
    Eval(EvalArgs),
    /// Render orientation maps to PNG.
    #[command(args_override_self = true)]
    Omap(OmapArgs),
    /// Camera velocities from a directory of point clouds.
    #[command(args_override_self = true)]
    Velocity(VelocityArgs),
}

#[derive(Args, Debug)]
struct EstimateArgs {
    /// Events as `t,x,y,p` CSV, or the binary format when the extension is `.bin`.
    #[arg(long)]
    events: PathBuf,
    #[arg(long)]
    calib: PathBuf,
    /// Velocity trace CSV. Without it no priors are used.
    #[arg(long)]
    vel: Option<PathBuf>,
    #[arg(long, default_value = "mvsec")]
    preset: Preset,
    /// Start of the first window, seconds. Defaults to the first event.
    #[arg(long)]
    t0: Option<f64>,
    /// Window length in seconds.
    #[arg(long)]
    dur: Option<f64>,
    /// Window length in events; takes precedence over `--dur`.
    #[arg(long)]
    count: Option<usize>,
    /// Number of consecutive windows.
    #[arg(long, default_value_t = 1)]
    windows: usize,
    #[arg(long, default_value = ".")]
    out: PathBuf,
    #[command(flatten)]
    opcm: OpcmFlags,
    #[command(flatten)]
    prior: PriorFlags,
}

/// Overrides applied on top of the preset.
#[derive(Args, Debug, Default)]
struct OpcmFlags {
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    beta_lin: Option<f64>,
    #[arg(long)]
    beta_ang: Option<f64>,
    #[arg(long)]
    lambda: Option<f64>,
    /// Comma-separated grids, coarse to fine, e.g. `1,2,4,8` or `1x2,2x4`.
    #[arg(long)]
    pyramid: Option<String>,
    #[arg(long)]
    sigma: Option<f64>,
    /// Comma-separated window fractions.
    #[arg(long)]
    t_refs: Option<String>,
    #[arg(long)]
    max_iters: Option<usize>,
    #[arg(long)]
    grad_tol: Option<f64>,
    /// `analytic` or `finite_difference`.
    #[arg(long)]
    gradient: Option<GradientMode>,
    #[arg(long)]
    fd_step: Option<f64>,
    #[arg(long)]
    max_step_px: Option<f64>,
    #[arg(long)]
    events_per_window: Option<usize>,
}

impl OpcmFlags {
    fn resolve(&self, preset: Preset) -> Result<OpcmConfig> {
        let mut c = OpcmConfig::preset(preset);
        macro_rules! set {
            ($($f:ident),*) => { $(if let Some(v) = self.$f { c.$f = v; })* };
        }
        set!(alpha, beta_lin, beta_ang, lambda, sigma, max_iters, grad_tol, gradient, fd_step, max_step_px, events_per_window);
        if let Some(p) = &self.pyramid {
            c.pyramid = parse_list::<GridShape>(p, "pyramid")?;
        }
        if let Some(t) = &self.t_refs {
            c.t_refs = parse_list::<f64>(t, "t_refs")?;
        }
        c.validate()?;
        Ok(c)
    }
}

#[derive(Args, Debug)]
struct PriorFlags {
    /// Fill for pixels left empty by lens distortion.
    #[arg(long, default_value = "border_replicate")]
    fill: Fill,
    #[arg(long)]
    flip_linear_sign: bool,
    #[arg(long)]
    flip_angular_sign: bool,
}

impl PriorFlags {
    fn config(&self) -> PriorConfig {
        PriorConfig {
            flip_linear_sign: self.flip_linear_sign,
            flip_angular_sign: self.flip_angular_sign,
        }
    }
}

#[derive(Args, Debug)]
struct SynthArgs {
    #[arg(long, default_value = "edge_bar")]
    kind: SceneKind,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    /// Edge-bar speed, px/s. Ignored when `--vel` is given.
    #[arg(long, default_value_t = 20.0)]
    speed: f64,
    /// Camera linear velocity `vx,vy,vz`, m/s.
    #[arg(long)]
    vel: Option<String>,
    /// Camera angular velocity `wx,wy,wz`, rad/s.
    #[arg(long)]
    omega: Option<String>,
    #[arg(long, default_value_t = 2.0)]
    depth: f64,
    #[arg(long, default_value_t = 0.0)]
    t0: f64,
    #[arg(long, default_value_t = 0.1)]
    dur: f64,
    /// Threshold crossings per unit of contrast.
    #[arg(long, default_value_t = 2)]
    contrast_density: u32,
    /// Mean exponential timestamp delay, seconds.
    #[arg(long, default_value_t = 0.0)]
    jitter: f64,
    #[arg(long)]
    low_texture_left: bool,
    /// Camera calibration; defaults to a 346x260 pinhole with f = 226.
    #[arg(long)]
    calib: Option<PathBuf>,
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct EvalArgs {
    #[arg(long)]
    pred: PathBuf,
    #[arg(long)]
    gt: PathBuf,
    /// `events` or `gt_valid`.
    #[arg(long, default_value = "events")]
    mask: MaskPolicy,
    /// Events for the event mask and FWL.
    #[arg(long)]
    events: Option<PathBuf>,
    /// FWL window; defaults to the event time range.
    #[arg(long)]
    t0: Option<f64>,
    #[arg(long)]
    t1: Option<f64>,
    /// Outlier threshold, pixels.
    #[arg(long, default_value_t = 3.0)]
    n: f64,
    /// Also write the report here.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct OmapArgs {
    /// Linear velocity `vx,vy,vz`.
    #[arg(long)]
    vel: Option<String>,
    /// Angular velocity `wx,wy,wz`.
    #[arg(long)]
    omega: Option<String>,
    #[arg(long)]
    calib: PathBuf,
    /// Also render the distorted, filled maps.
    #[arg(long)]
    distort: bool,
    #[arg(long, default_value = ".")]
    out: PathBuf,
    #[command(flatten)]
    prior: PriorFlags,
}

#[derive(Args, Debug)]
struct VelocityArgs {
    /// Directory of `.ply` / `.csv` clouds named by timestamp in seconds.
    #[arg(long)]
    scans: PathBuf,
    /// Scan rate in Hz; timestamps become `k / rate` in file-name order.
    #[arg(long)]
    rate: Option<f64>,
    /// JSON with `translation` and either `rotation` (3x3) or `axis_angle`.
    #[arg(long)]
    extrinsic: Option<PathBuf>,
    #[arg(long, default_value_t = 100)]
    icp_max_iters: usize,
    #[arg(long, default_value_t = 1e-12)]
    icp_tol: f64,
    #[arg(long, default_value_t = 1e-3)]
    q: f64,
    #[arg(long, default_value_t = 1e-1)]
    r: f64,
    #[arg(long, default_value_t = 1.0)]
    p0: f64,
    /// Write the raw ICP velocities without Kalman smoothing.
    #[arg(long)]
    no_filter: bool,
    #[arg(long, default_value = "velocity.csv")]
    out: PathBuf,
}

/// Runs the CLI on `args` (program name first) and returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args: Vec<OsString> = args.into_iter().map(Into::into).collect();
    let args = match expand_config(args) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("error: {e}");
            return exit_code(&e);
        }
    };
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    let log = Logger { quiet: cli.quiet };
    let res = match &cli.command {
        Command::Estimate(a) => commands::estimate(a, &log),
        Command::Synth(a) => commands::synth(a, &log),
        Command::Eval(a) => commands::eval(a, &log),
        Command::Omap(a) => commands::omap(a, &log),
        Command::Velocity(a) => commands::velocity(a, &log),
    };
    match res {
        Ok(()) => 0,
        Err(e) => {
            let code = exit_code(&e);
            log.emit("error", "failed", json!({ "message": e.to_string(), "exit_code": code }));
            if log.quiet {
                eprintln!("error: {e}");
            }
            code
        }
    }
}

fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Io { .. }
        | Error::Parse { .. }
        | Error::OutOfBounds { .. }
        | Error::Format(_)
        | Error::Validation(_)
        | Error::Dimension(_)
        | Error::ZeroVelocity
        | Error::NonMonotoneTimestamps { .. }
        | Error::Json(_) => 1,
        Error::EmptyEventSet
        | Error::EmptyMask
        | Error::DegenerateContrast
        | Error::NonFinite { .. }
        | Error::DegenerateGeometry(_) => 2,
    }
}

/// Splices `--config` file entries in right after the subcommand.
fn expand_config(args: Vec<OsString>) -> Result<Vec<OsString>> {
    let mut path = None;
    let mut rest = Vec::with_capacity(args.len());
    let mut it = args.into_iter();
    while let Some(a) = it.next() {
        let s = a.to_string_lossy();
        if s == "--config" {
            let p = it.next().ok_or_else(|| Error::Validation("--config needs a path".into()))?;
            path = Some(PathBuf::from(p));
        } else if let Some(p) = s.strip_prefix("--config=") {
            path = Some(PathBuf::from(p));
        } else {
            rest.push(a);
        }
    }
    let Some(path) = path else { return Ok(rest) };
    let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let map: Map<String, Value> = serde_json::from_str(&text)?;
    let mut extra = Vec::new();
    for (key, value) in &map {
        let flag = format!("--{}", key.rsplit('.').next().unwrap_or(key).replace('_', "-"));
        match value {
            Value::Null | Value::Bool(false) => {}
            Value::Bool(true) => extra.push(flag.into()),
            Value::Number(n) => extra.extend([flag.into(), n.to_string().into()]),
            Value::String(s) => extra.extend([flag.into(), s.into()]),
            Value::Array(items) => {
                let joined: Vec<String> = items
                    .iter()
                    .map(|v| match v {
                        Value::String(s) => s.clone(),
                        other => other.to_string(),
                    })
                    .collect();
                extra.extend([flag.into(), joined.join(",").into()]);
            }
            Value::Object(_) => {
                return Err(Error::Validation(format!("config key `{key}` must be flat")));
            }
        }
    }
    // file values go right after the subcommand, ahead of its own flags
    const SUBCOMMANDS: [&str; 5] = ["estimate", "synth", "eval", "omap", "velocity"];
    let split = rest
        .iter()
        .position(|a| SUBCOMMANDS.contains(&a.to_string_lossy().as_ref()))
        .map_or(rest.len(), |i| i + 1);
    let mut out: Vec<OsString> = rest[..split].to_vec();
    out.extend(extra);
    out.extend(rest[split..].iter().cloned());
    Ok(out)
}

fn parse_list<T: std::str::FromStr>(s: &str, what: &str) -> Result<Vec<T>> {
    s.split(',')
        .map(|p| p.trim().parse::<T>().map_err(|_| Error::Validation(format!("bad {what} entry `{p}`"))))
        .collect()
}

fn parse_vec3(s: &str, what: &str) -> Result<nalgebra::Vector3<f64>> {
    let v: Vec<f64> = parse_list(s, what)?;
    match v.as_slice() {
        [x, y, z] if v.iter().all(|c| c.is_finite()) => Ok(nalgebra::Vector3::new(*x, *y, *z)),
        _ => Err(Error::Validation(format!("{what} needs three finite numbers, got `{s}`"))),
    }
}

/// Line-oriented JSON on stderr.
struct Logger {
    quiet: bool,
}

impl Logger {
    fn emit(&self, level: &str, event: &str, fields: Value) {
        if self.quiet {
            return;
        }
        let mut line = Map::new();
        let ts = std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_secs_f64())
            .unwrap_or(0.0);
        line.insert("ts".into(), json!(ts));
        line.insert("level".into(), json!(level));
        line.insert("event".into(), json!(event));
        if let Value::Object(m) = fields {
            line.extend(m);
        }
        eprintln!("{}", Value::Object(line));
    }

    fn info(&self, event: &str, fields: Value) {
        self.emit("info", event, fields);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn os(v: &[&str]) -> Vec<OsString> {
        v.iter().map(OsString::from).collect()
    }

    #[test]
    fn config_entries_precede_flags() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = dir.path().join("c.json");
        std::fs::write(&cfg, r#"{"opcm.alpha": 5, "opcm.pyramid": ["1", "2"], "priors.flip_linear_sign": true, "x.off": false}"#).unwrap();
        let out = expand_config(os(&["opcm", "--quiet", "estimate", "--config", cfg.to_str().unwrap(), "--alpha", "7"])).unwrap();
        assert_eq!(
            out,
            os(&["opcm", "--quiet", "estimate", "--alpha", "5", "--pyramid", "1,2", "--flip-linear-sign", "--alpha", "7"])
        );
    }

    #[test]
    fn flags_override_file_values() {
        let cli = Cli::try_parse_from(os(&["opcm", "estimate", "--events", "e", "--calib", "c", "--alpha", "5", "--alpha", "7"])).unwrap();
        let Command::Estimate(a) = cli.command else { panic!() };
        assert_eq!(a.opcm.alpha, Some(7.0));
        assert_eq!(a.opcm.resolve(a.preset).unwrap().alpha, 7.0);
    }

    #[test]
    fn usage_errors_exit_with_one() {
        assert_eq!(run(["opcm", "estimate"]), 1);
        assert_eq!(run(["opcm", "nonsense"]), 1);
        assert_eq!(run(["opcm", "--help"]), 0);
        assert_eq!(run(["opcm", "--quiet", "eval", "--pred", "/nonexistent/p.flo", "--gt", "/nonexistent/g.flo"]), 1);
    }

    #[test]
    fn vectors_parse() {
        assert_eq!(parse_vec3("0, 0,1", "vel").unwrap(), nalgebra::Vector3::new(0.0, 0.0, 1.0));
        assert!(parse_vec3("1,2", "vel").is_err());
        assert_eq!(parse_list::<GridShape>("1,2x4", "p").unwrap(), vec![GridShape::square(1), GridShape::new(2, 4)]);
    }
}
