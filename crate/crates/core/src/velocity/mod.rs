//! Camera velocities from consecutive point clouds.
//!
//! Scan `k + 1` is registered onto scan `k`; the resulting transform is the
//! sensor's motion between the two scans expressed in the frame of scan `k`.
//! Dividing by the scan interval gives linear and angular velocity, which are
//! then transported into the camera frame and smoothed by a Kalman filter.
//! Each velocity is stamped at the midpoint of its scan pair.

mod icp;
mod io;
mod kalman;
mod kdtree;

use nalgebra::{Matrix3, Rotation3, UnitQuaternion, Vector3};

pub use icp::{icp_register, kabsch, IcpConfig, IcpResult};
pub use io::{
    format_velocity_csv, parse_cloud_csv, parse_ply, parse_velocity_csv, read_point_cloud, read_velocity_csv,
    write_cloud_csv, write_ply, write_velocity_csv, PlyFormat,
};
pub use kalman::{kalman_filter, KalmanConfig, KalmanState};
pub use kdtree::KdTree;

use crate::error::{Error, Result};

/// Linear (m/s) and angular (rad/s) velocity at time `t` (s).
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct VelocitySample {
    pub t: f64,
    pub v: Vector3<f64>,
    pub w: Vector3<f64>,
}

impl VelocitySample {
    pub fn new(t: f64, v: [f64; 3], w: [f64; 3]) -> Self {
        Self {
            t,
            v: Vector3::from(v),
            w: Vector3::from(w),
        }
    }
}

/// Linear interpolation of a time-ordered trace; clamps outside its range.
pub fn interpolate_velocity(trace: &[VelocitySample], t: f64) -> Option<VelocitySample> {
    let first = trace.first()?;
    let last = trace.last()?;
    if t <= first.t {
        return Some(VelocitySample { t, ..*first });
    }
    if t >= last.t {
        return Some(VelocitySample { t, ..*last });
    }
    let i = trace.partition_point(|s| s.t <= t);
    let (a, b) = (&trace[i - 1], &trace[i]);
    let span = b.t - a.t;
    let f = if span > 0.0 { (t - a.t) / span } else { 0.0 };
    Some(VelocitySample {
        t,
        v: a.v.lerp(&b.v, f),
        w: a.w.lerp(&b.w, f),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud {
    pub points: Vec<Vector3<f64>>,
    /// Acquisition time, seconds.
    pub t: f64,
}

/// `p ↦ R p + t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigidTransform {
    pub r: Matrix3<f64>,
    pub t: Vector3<f64>,
}

impl Default for RigidTransform {
    fn default() -> Self {
        Self::identity()
    }
}

impl RigidTransform {
    pub fn identity() -> Self {
        Self {
            r: Matrix3::identity(),
            t: Vector3::zeros(),
        }
    }

    pub fn new(r: Matrix3<f64>, t: Vector3<f64>) -> Self {
        Self { r, t }
    }

    /// Rotation `exp([axis_angle]×)` followed by translation `t`.
    pub fn from_axis_angle(axis_angle: Vector3<f64>, t: Vector3<f64>) -> Self {
        Self {
            r: Rotation3::from_scaled_axis(axis_angle).into_inner(),
            t,
        }
    }

    pub fn apply(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.r * p + self.t
    }

    /// `self ∘ first`: apply `first`, then `self`.
    pub fn compose(&self, first: &RigidTransform) -> RigidTransform {
        RigidTransform {
            r: self.r * first.r,
            t: self.r * first.t + self.t,
        }
    }

    pub fn inverse(&self) -> RigidTransform {
        let rt = self.r.transpose();
        RigidTransform { r: rt, t: -(rt * self.t) }
    }

    /// Rotation vector `ϑ·υ̂` with `ϑ ∈ [0, π]`.
    pub fn axis_angle(&self) -> Vector3<f64> {
        let rot = Rotation3::from_matrix_unchecked(self.r);
        UnitQuaternion::from_rotation_matrix(&rot).scaled_axis()
    }

    /// Checks orthonormality and a positive determinant to `tol`.
    pub fn is_rigid(&self, tol: f64) -> bool {
        let e = self.r.transpose() * self.r - Matrix3::identity();
        e.amax() <= tol && (self.r.determinant() - 1.0).abs() <= tol
    }
}

/// `v = t / dt`, `ω = ϑ υ̂ / dt`.
pub fn transform_to_velocity(tr: &RigidTransform, dt: f64) -> Result<(Vector3<f64>, Vector3<f64>)> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::Validation(format!("dt must be positive, got {dt}")));
    }
    Ok((tr.t / dt, tr.axis_angle() / dt))
}

/// Inverse of [`transform_to_velocity`] for a constant velocity held over `dt`.
pub fn velocity_to_transform(v: &Vector3<f64>, w: &Vector3<f64>, dt: f64) -> RigidTransform {
    RigidTransform::from_axis_angle(w * dt, v * dt)
}

/// Transports a rigid-body velocity through `extrinsic` (sensor → camera):
/// `ω_c = R ω`, `v_c = R v + t × (R ω)`.
pub fn to_camera_frame(
    v: &Vector3<f64>,
    w: &Vector3<f64>,
    extrinsic: &RigidTransform,
) -> (Vector3<f64>, Vector3<f64>) {
    let wc = extrinsic.r * w;
    let vc = extrinsic.r * v + extrinsic.t.cross(&wc);
    (vc, wc)
}

/// Velocities for every consecutive scan pair, in the camera frame, stamped
/// at the pair midpoints. Unsmoothed.
pub fn velocities_from_scans(
    scans: &[PointCloud],
    extrinsic: &RigidTransform,
    icp: &IcpConfig,
) -> Result<Vec<VelocitySample>> {
    use rayon::prelude::*;
    for (i, w) in scans.windows(2).enumerate() {
        if !(w[1].t > w[0].t) {
            return Err(Error::NonMonotoneTimestamps { index: i + 1 });
        }
    }
    scans
        .par_windows(2)
        .map(|pair| {
            let res = icp_register(&pair[1].points, &pair[0].points, icp)?;
            let dt = pair[1].t - pair[0].t;
            let (v, w) = transform_to_velocity(&res.transform, dt)?;
            let (v, w) = to_camera_frame(&v, &w, extrinsic);
            Ok(VelocitySample {
                t: 0.5 * (pair[0].t + pair[1].t),
                v,
                w,
            })
        })
        .collect()
}
