//! Relative contrast of a translating scene as a function of a single
//! global velocity. The peak sits at the true image velocity.
//!
//! cargo run --example contrast_landscape

use opcm::objectives::{variance, ContrastConfig, ContrastObjective};
use opcm::synth::{generate_events, SceneKind, SceneSpec};
use opcm::velocity::VelocitySample;
use opcm::warp::{build_iwe, warp_events, GridShape, MotionField};

fn main() -> opcm::Result<()> {
    let spec = SceneSpec::new(SceneKind::TexturedPlane, VelocitySample::new(0.05, [-0.5, 0.0, 0.0], [0.0; 3]));
    let scene = generate_events(&spec)?;
    let size = spec.camera.sensor_size;
    // Camera moving left at 0.5 m/s: the image moves right at v f / Z.
    let truth = 0.5 * spec.camera.fx / spec.depth;
    println!("{} events, true velocity ({truth:.1}, 0) px/s", scene.events.len());

    let obj = ContrastObjective::new(&scene.events, spec.window, &ContrastConfig::default())?;
    println!("{:>8} {:>8} {:>10}", "u px/s", "f_rel", "variance");
    for k in -6..=6 {
        let u = truth + 5.0 * k as f64;
        let field = MotionField::constant(GridShape::square(1), size, [u, 0.0]);
        let f = obj.evaluate(&field)?.f_rel;
        let iwe = build_iwe(&warp_events(&scene.events, &field, spec.window.0), size, 1.0)?;
        println!("{u:>8.1} {f:>8.4} {:>10.5}", variance(&iwe));
    }
    Ok(())
}
