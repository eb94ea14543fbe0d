//! Forward motion over a plane whose left half is almost textureless.
//! Contrast alone leaves that half poorly constrained; the linear
//! orientation map built from the known camera velocity pulls it back.
//!
//! cargo run --release --example prior_guided_flow

use opcm::metrics::{aee, evaluation_mask, MaskPolicy};
use opcm::optimizer::{optimize_pyramid, OpcmConfig, Preset, Priors};
use opcm::priors::linear_orientation_map;
use opcm::synth::{generate_events, mvsec_camera, SceneKind, SceneSpec};
use opcm::velocity::VelocitySample;

fn main() -> opcm::Result<()> {
    let mut spec = SceneSpec::new(SceneKind::FrontoPlanar, VelocitySample::new(0.05, [0.0, 0.0, 1.0], [0.0; 3]));
    spec.camera = mvsec_camera();
    spec.low_texture_left = true;
    spec.contrast_density = 2;
    let scene = generate_events(&spec)?;

    let width = spec.camera.sensor_size.width as usize;
    let mask = evaluation_mask(&scene.flow, &scene.flow, MaskPolicy::Events, Some(&scene.events))?;
    let left: Vec<bool> = mask.iter().enumerate().map(|(i, m)| *m && i % width < width / 2).collect();

    let cfg = OpcmConfig::preset(Preset::Mvsec);
    let guided = Priors {
        linear: Some(linear_orientation_map(&spec.camera, scene.velocity.v)?),
        angular: None,
    };
    for (name, priors) in [("events only", Priors::none()), ("with linear prior", guided)] {
        let res = optimize_pyramid(&scene.events, spec.window, &priors, &cfg)?;
        println!(
            "{name:>18}: AEE {:.3} px on the low-texture half, {:.3} px overall, g_lin {:?}",
            aee(&res.flow, &scene.flow, &left)?,
            aee(&res.flow, &scene.flow, &mask)?,
            res.g_lin
        );
    }
    Ok(())
}
