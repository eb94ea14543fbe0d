use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use nalgebra::{Matrix3, Vector3};
use rayon::prelude::*;
use serde_json::json;

use super::{parse_vec3, render, EstimateArgs, EvalArgs, Logger, OmapArgs, PriorFlags, SynthArgs, VelocityArgs};
use crate::camera::{read_calibration, write_calibration, CameraModel};
use crate::error::{Error, Result};
use crate::events::{read_events_bin, read_events_csv, write_events_csv, EventSet, SensorSize};
use crate::flow::{read_flow, write_flow};
use crate::metrics::{evaluate, MaskPolicy};
use crate::optimizer::{optimize_pyramid, OpcmConfig, OpcmResult, Priors};
use crate::priors::{
    angular_orientation_map_with, distort_orientation_map, linear_orientation_map_with, OrientationMap, EPS_V,
};
use crate::synth::{generate_events, mvsec_camera, SceneKind, SceneSpec};
use crate::velocity::{
    interpolate_velocity, kalman_filter, read_point_cloud, read_velocity_csv, velocities_from_scans,
    write_velocity_csv, IcpConfig, KalmanConfig, PointCloud, RigidTransform, VelocitySample,
};

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn load_events(path: &Path, size: SensorSize) -> Result<EventSet> {
    let bin = path.extension().and_then(|e| e.to_str()).is_some_and(|e| e.eq_ignore_ascii_case("bin"));
    let set = if bin { read_events_bin(path)? } else { read_events_csv(path, size)? };
    if set.sensor_size() != size {
        return Err(Error::Dimension(format!(
            "events are {}x{}, calibration is {}x{}",
            set.sensor_size().width,
            set.sensor_size().height,
            size.width,
            size.height
        )));
    }
    Ok(set)
}

/// Splits `events` into the requested windows.
fn select_windows(events: &EventSet, a: &EstimateArgs, cfg: &OpcmConfig) -> Result<Vec<EventSet>> {
    if a.windows == 0 {
        return Err(Error::Validation("--windows must be at least 1".into()));
    }
    let t0 = a.t0.unwrap_or(events.t_start());
    match (a.count, a.dur) {
        (None, Some(dur)) => {
            if !(dur > 0.0 && dur.is_finite()) {
                return Err(Error::Validation("--dur must be positive".into()));
            }
            (0..a.windows)
                .map(|k| {
                    let s = t0 + k as f64 * dur;
                    events.slice_time(s, s + dur)
                })
                .collect()
        }
        (count, _) => {
            let count = count.unwrap_or(cfg.events_per_window);
            if count == 0 {
                return Err(Error::Validation("--count must be positive".into()));
            }
            let all = events.events();
            let first = all.partition_point(|e| e.t < t0);
            (0..a.windows)
                .map(|k| {
                    let lo = (first + k * count).min(all.len());
                    let hi = (lo + count).min(all.len());
                    let slice = all[lo..hi].to_vec();
                    let start = if k == 0 { t0 } else { slice.first().map_or(t0, |e| e.t) };
                    let end = slice.last().map(|e| e.t).ok_or(Error::EmptyEventSet)?;
                    EventSet::with_window(slice, events.sensor_size(), start, end)
                })
                .collect()
        }
    }
}

fn maybe_distort(map: OrientationMap, cam: &CameraModel, flags: &PriorFlags) -> OrientationMap {
    if cam.dist.is_zero() {
        map
    } else {
        distort_orientation_map(&map, cam, flags.fill)
    }
}

fn build_priors(cam: &CameraModel, vel: &VelocitySample, flags: &PriorFlags, log: &Logger) -> Result<Priors> {
    let pc = flags.config();
    let linear = if vel.v.norm() > EPS_V {
        Some(maybe_distort(linear_orientation_map_with(cam, vel.v, &pc)?, cam, flags))
    } else {
        log.emit("notice", "linear_prior_skipped", json!({ "reason": "zero linear velocity", "t": vel.t }));
        None
    };
    let angular = if vel.w.norm() > EPS_V {
        Some(maybe_distort(angular_orientation_map_with(cam, vel.w, &pc)?, cam, flags))
    } else {
        log.emit("notice", "angular_prior_skipped", json!({ "reason": "zero angular velocity", "t": vel.t }));
        None
    };
    Ok(Priors { linear, angular })
}

#[derive(serde::Serialize)]
struct VelocityJson {
    t: f64,
    v: [f64; 3],
    w: [f64; 3],
}

impl From<&VelocitySample> for VelocityJson {
    fn from(s: &VelocitySample) -> Self {
        Self {
            t: s.t,
            v: s.v.into(),
            w: s.w.into(),
        }
    }
}

pub(super) fn estimate(a: &EstimateArgs, log: &Logger) -> Result<()> {
    let cfg = a.opcm.resolve(a.preset)?;
    let cam = read_calibration(&a.calib)?;
    let events = load_events(&a.events, cam.sensor_size)?;
    let trace = a.vel.as_ref().map(read_velocity_csv).transpose()?;
    if trace.as_ref().is_some_and(|t| t.is_empty()) {
        return Err(Error::Validation("velocity trace is empty".into()));
    }
    if trace.is_none() {
        log.emit(
            "notice",
            "priors_absent",
            json!({ "message": "no velocity trace; running events-only contrast maximization" }),
        );
    }
    let windows = select_windows(&events, a, &cfg)?;
    create_dir(&a.out)?;
    log.info(
        "estimate_start",
        json!({ "preset": a.preset.name(), "windows": windows.len(), "events": events.len() }),
    );

    let results: Vec<(usize, Result<(OpcmResult, Option<VelocitySample>, f64)>)> = windows
        .par_iter()
        .enumerate()
        .map(|(k, w)| {
            let run = || {
                let started = Instant::now();
                let (t0, t1) = w.window();
                let vel = trace.as_ref().and_then(|t| interpolate_velocity(t, 0.5 * (t0 + t1)));
                let priors = match &vel {
                    Some(v) => build_priors(&cam, v, &a.prior, log)?,
                    None => Priors::none(),
                };
                let res = optimize_pyramid(w, (t0, t1), &priors, &cfg)?;
                Ok((res, vel, started.elapsed().as_secs_f64()))
            };
            (k, run())
        })
        .collect();

    for (k, res) in results {
        let (res, vel, seconds) = res?;
        let w = &windows[k];
        let flow_path = a.out.join(format!("flow_{k:04}.flo"));
        write_flow(&flow_path, &res.flow)?;
        let priors_present = vel.is_some();
        let summary = json!({
            "window_index": k,
            "window": w.window(),
            "n_events": w.len(),
            "preset": a.preset.name(),
            "config": cfg,
            "priors": if priors_present { "present" } else { "absent" },
            "velocity": vel.as_ref().map(VelocityJson::from),
            "objective": res.objective_trace.last().and_then(|t| t.last()),
            "f_rel": res.f_rel,
            "g_lin": res.g_lin,
            "g_ang": res.g_ang,
            "beta_lin_effective": if priors_present { cfg.beta_lin } else { 0.0 },
            "beta_ang_effective": if priors_present { cfg.beta_ang } else { 0.0 },
            "degenerate_contrast": res.degenerate_contrast,
            "levels": res.levels,
            "objective_trace": res.objective_trace,
            "seconds": seconds,
            "flow_file": flow_path.file_name().map(|n| n.to_string_lossy().into_owned()),
        });
        let summary_path = a.out.join(format!("summary_{k:04}.json"));
        fs::write(&summary_path, serde_json::to_string_pretty(&summary)?).map_err(|e| Error::io(&summary_path, e))?;
        log.info(
            "window_done",
            json!({
                "window_index": k,
                "n_events": w.len(),
                "f_rel": res.f_rel,
                "g_lin": res.g_lin,
                "g_ang": res.g_ang,
                "seconds": seconds,
                "flow": flow_path.display().to_string(),
            }),
        );
    }
    Ok(())
}

pub(super) fn synth(a: &SynthArgs, log: &Logger) -> Result<()> {
    let camera = match &a.calib {
        Some(p) => read_calibration(p)?,
        None => mvsec_camera(),
    };
    let mut spec = if a.kind == SceneKind::EdgeBar && a.vel.is_none() && a.omega.is_none() {
        SceneSpec::edge_bar_on(camera, a.speed)
    } else {
        let v = a.vel.as_deref().map(|s| parse_vec3(s, "--vel")).transpose()?.unwrap_or_default();
        let w = a.omega.as_deref().map(|s| parse_vec3(s, "--omega")).transpose()?.unwrap_or_default();
        let mut s = SceneSpec::new(a.kind, VelocitySample::new(0.0, v.into(), w.into()));
        s.camera = camera;
        s
    };
    spec.depth = a.depth;
    if spec.kind == SceneKind::EdgeBar && a.vel.is_none() && a.omega.is_none() {
        spec.motion.v.x = -a.speed * a.depth / spec.camera.fx;
    }
    spec.texture_seed = a.seed;
    spec.window = (a.t0, a.t0 + a.dur);
    spec.motion.t = a.t0 + 0.5 * a.dur;
    spec.contrast_density = a.contrast_density;
    spec.jitter = a.jitter;
    spec.low_texture_left = a.low_texture_left;

    let started = Instant::now();
    let out = generate_events(&spec)?;
    create_dir(&a.out)?;
    write_events_csv(a.out.join("events.csv"), &out.events)?;
    write_flow(a.out.join("flow.flo"), &out.flow)?;
    write_calibration(a.out.join("calib.json"), &spec.camera)?;
    // constant over the window: one sample at each end
    let trace = [
        VelocitySample { t: spec.window.0, ..out.velocity },
        VelocitySample { t: spec.window.1, ..out.velocity },
    ];
    write_velocity_csv(a.out.join("velocity.csv"), &trace)?;
    log.info(
        "synth_done",
        json!({
            "kind": format!("{:?}", spec.kind),
            "events": out.events.len(),
            "window": spec.window,
            "velocity": VelocityJson::from(&out.velocity),
            "seconds": started.elapsed().as_secs_f64(),
            "out": a.out.display().to_string(),
        }),
    );
    Ok(())
}

pub(super) fn eval(a: &EvalArgs, log: &Logger) -> Result<()> {
    let pred = read_flow(&a.pred)?;
    let gt = read_flow(&a.gt)?;
    let events = a.events.as_ref().map(|p| load_events(p, gt.size())).transpose()?;
    if a.mask == MaskPolicy::Events && events.is_none() {
        return Err(Error::Validation("--mask events needs --events".into()));
    }
    let window = events.as_ref().map(|e| (a.t0.unwrap_or(e.t_start()), a.t1.unwrap_or(e.t_end())));
    let report = evaluate(&pred, &gt, events.as_ref().zip(window), a.mask, a.n)?;
    let text = serde_json::to_string_pretty(&report)?;
    println!("{text}");
    if let Some(out) = &a.out {
        fs::write(out, &text).map_err(|e| Error::io(out, e))?;
    }
    log.info("eval_done", json!({ "aee": report.aee, "outlier_pct": report.outlier_pct, "n_valid": report.n_valid }));
    Ok(())
}

pub(super) fn omap(a: &OmapArgs, log: &Logger) -> Result<()> {
    if a.vel.is_none() && a.omega.is_none() {
        return Err(Error::Validation("omap needs --vel and/or --omega".into()));
    }
    let cam = read_calibration(&a.calib)?;
    let pc = a.prior.config();
    let mut maps = Vec::new();
    if let Some(v) = &a.vel {
        maps.push(("linear", linear_orientation_map_with(&cam, parse_vec3(v, "--vel")?, &pc)?));
    }
    if let Some(w) = &a.omega {
        maps.push(("angular", angular_orientation_map_with(&cam, parse_vec3(w, "--omega")?, &pc)?));
    }
    create_dir(&a.out)?;
    let mut written: Vec<PathBuf> = Vec::new();
    for (name, map) in &maps {
        let p = a.out.join(format!("omap_{name}.png"));
        render::save_orientation_png(map, &p)?;
        written.push(p);
        if a.distort {
            let d = distort_orientation_map(map, &cam, a.prior.fill);
            let p = a.out.join(format!("omap_{name}_distorted.png"));
            render::save_orientation_png(&d, &p)?;
            written.push(p);
        }
    }
    log.info(
        "omap_done",
        json!({ "files": written.iter().map(|p| p.display().to_string()).collect::<Vec<_>>() }),
    );
    Ok(())
}

#[derive(serde::Deserialize)]
#[serde(deny_unknown_fields)]
struct ExtrinsicFile {
    rotation: Option<[[f64; 3]; 3]>,
    axis_angle: Option<[f64; 3]>,
    translation: [f64; 3],
}

fn read_extrinsic(path: &Path) -> Result<RigidTransform> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let f: ExtrinsicFile = serde_json::from_str(&text)?;
    let t = Vector3::from(f.translation);
    let tr = match (f.rotation, f.axis_angle) {
        (Some(r), None) => RigidTransform::new(Matrix3::from_fn(|i, j| r[i][j]), t),
        (None, Some(aa)) => RigidTransform::from_axis_angle(Vector3::from(aa), t),
        (None, None) => RigidTransform::new(Matrix3::identity(), t),
        (Some(_), Some(_)) => {
            return Err(Error::Validation("extrinsic needs `rotation` or `axis_angle`, not both".into()));
        }
    };
    if !tr.is_rigid(1e-6) {
        return Err(Error::Validation("extrinsic rotation is not orthonormal".into()));
    }
    Ok(tr)
}

/// Cloud files in `dir` with their timestamps, in time order.
fn list_scans(dir: &Path, rate: Option<f64>) -> Result<Vec<(f64, PathBuf)>> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.extension()
                .and_then(|e| e.to_str())
                .is_some_and(|e| e.eq_ignore_ascii_case("ply") || e.eq_ignore_ascii_case("csv"))
        })
        .collect();
    files.sort();
    let mut out = Vec::with_capacity(files.len());
    match rate {
        Some(hz) => {
            if !(hz > 0.0 && hz.is_finite()) {
                return Err(Error::Validation("--rate must be positive".into()));
            }
            out.extend(files.into_iter().enumerate().map(|(k, p)| (k as f64 / hz, p)));
        }
        None => {
            for p in files {
                let stem = p.file_stem().and_then(|s| s.to_str()).unwrap_or_default();
                let t: f64 = stem.parse().map_err(|_| {
                    Error::Validation(format!("cannot read a timestamp from `{}`; pass --rate", p.display()))
                })?;
                out.push((t, p));
            }
            out.sort_by(|a, b| a.0.total_cmp(&b.0));
        }
    }
    if out.len() < 2 {
        return Err(Error::Validation(format!("need at least two scans in {}", dir.display())));
    }
    Ok(out)
}

pub(super) fn velocity(a: &VelocityArgs, log: &Logger) -> Result<()> {
    let extrinsic = a.extrinsic.as_deref().map(read_extrinsic).transpose()?.unwrap_or_default();
    let files = list_scans(&a.scans, a.rate)?;
    let scans: Vec<PointCloud> = files
        .iter()
        .map(|(t, p)| Ok(PointCloud { points: read_point_cloud(p)?, t: *t }))
        .collect::<Result<_>>()?;
    let icp = IcpConfig {
        max_iters: a.icp_max_iters,
        tol: a.icp_tol,
    };
    let started = Instant::now();
    let raw = velocities_from_scans(&scans, &extrinsic, &icp)?;
    let out = if a.no_filter {
        raw
    } else {
        kalman_filter(&raw, &KalmanConfig { q: a.q, r: a.r, p0: a.p0 })?
    };
    write_velocity_csv(&a.out, &out)?;
    log.info(
        "velocity_done",
        json!({
            "scans": scans.len(),
            "samples": out.len(),
            "filtered": !a.no_filter,
            "seconds": started.elapsed().as_secs_f64(),
            "out": a.out.display().to_string(),
        }),
    );
    Ok(())
}
