//! Orientation maps for a few camera motions, then the same maps seen
//! through a distorting lens with each fill strategy.
//!
//! cargo run --example orientation_maps

use nalgebra::Vector3;
use opcm::camera::{CameraModel, Distortion};
use opcm::events::SensorSize;
use opcm::priors::{
    angular_orientation_map, distort_orientation_map, linear_orientation_map, singularity, Fill, OrientationMap,
};

fn arrows(map: &OrientationMap, step: u32) -> String {
    const GLYPHS: [char; 8] = ['→', '↘', '↓', '↙', '←', '↖', '↑', '↗'];
    let size = map.size();
    let mut out = String::new();
    for y in (step / 2..size.height).step_by(step as usize) {
        for x in (step / 2..size.width).step_by(step as usize) {
            out.push(match map.at(x, y) {
                Some(d) => {
                    let a = d[1].atan2(d[0]).rem_euclid(std::f64::consts::TAU);
                    GLYPHS[((a / std::f64::consts::FRAC_PI_4).round() as usize) % 8]
                }
                None => '·',
            });
        }
        out.push('\n');
    }
    out
}

fn main() -> opcm::Result<()> {
    let size = SensorSize::new(346, 260);
    let cam = CameraModel::pinhole(226.0, 226.0, 172.5, 129.5, size)?;

    for (name, v) in [("forward", Vector3::new(0.3, 0.0, 1.0)), ("backward", Vector3::new(0.0, 0.0, -1.0))] {
        let map = linear_orientation_map(&cam, v)?;
        println!("linear map, {name}: singularity {:?}", singularity(&cam, v).map(|s| (s.x, s.y)));
        print!("{}", arrows(&map, 24));
    }
    let roll = angular_orientation_map(&cam, Vector3::new(0.0, 0.0, 1.0))?;
    println!("angular map, roll:");
    print!("{}", arrows(&roll, 24));

    let lens = CameraModel::new(226.0, 226.0, 172.5, 129.5, Distortion::from_array([0.25, 0.05, 0.0, 0.0, 0.0]), size)?;
    let map = linear_orientation_map(&lens, Vector3::new(0.0, 0.0, 1.0))?;
    for fill in [Fill::None, Fill::NavierStokes, Fill::BorderReflect, Fill::BorderReplicate] {
        let d = distort_orientation_map(&map, &lens, fill);
        println!("distorted with {fill:?}: {} invalid pixels", d.invalid_count());
    }
    Ok(())
}
