//! Camera velocities from a sequence of point-cloud scans: scans are written
//! as PLY, read back, registered pairwise with ICP, moved into the camera
//! frame and smoothed with the Kalman filter.
//!
//! cargo run --example lidar_velocity

use nalgebra::{Matrix3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use opcm::velocity::{
    kalman_filter, read_point_cloud, velocities_from_scans, velocity_to_transform, write_ply, IcpConfig,
    KalmanConfig, PlyFormat, PointCloud, RigidTransform,
};

fn main() -> opcm::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let world: Vec<Vector3<f64>> = (0..800)
        .map(|_| {
            let mut g = || rng.sample::<f64, _>(StandardNormal);
            Vector3::new(6.0 * g(), 3.0 * g(), 1.5 * g())
        })
        .collect();

    let (v, w) = (Vector3::new(0.8, 0.0, 0.1), Vector3::new(0.0, 0.0, 0.2));
    let dir = tempfile::tempdir().expect("temp dir");
    let mut pose = RigidTransform::identity();
    let mut scans = Vec::new();
    for k in 0..10 {
        let t = 0.1 * k as f64;
        let seen: Vec<_> = world.iter().map(|p| pose.inverse().apply(p)).collect();
        let path = dir.path().join(format!("{k:03}.ply"));
        write_ply(&path, &seen, PlyFormat::BinaryLittleEndian)?;
        scans.push(PointCloud { points: read_point_cloud(&path)?, t });
        pose = pose.compose(&velocity_to_transform(&v, &w, 0.1));
    }

    // Sensor x forward, z up; camera z forward, y down.
    let to_camera = RigidTransform::new(
        Matrix3::new(0.0, -1.0, 0.0, 0.0, 0.0, -1.0, 1.0, 0.0, 0.0),
        Vector3::zeros(),
    );
    let raw = velocities_from_scans(&scans, &to_camera, &IcpConfig::default())?;
    let smooth = kalman_filter(&raw, &KalmanConfig::default())?;
    for (r, s) in raw.iter().zip(&smooth) {
        println!(
            "t {:.2}  v {:>6.3} {:>6.3} {:>6.3}  w {:>6.3} {:>6.3} {:>6.3}  | filtered v_z {:.3}",
            r.t, r.v.x, r.v.y, r.v.z, r.w.x, r.w.y, r.w.z, s.v.z
        );
    }
    Ok(())
}
