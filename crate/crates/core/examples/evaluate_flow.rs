//! Flow files and metrics: write a prediction as .flo, read it back and
//! compare it with ground truth under each mask policy.
//!
//! cargo run --example evaluate_flow

use opcm::flow::{read_flow, write_flow, FlowField};
use opcm::metrics::{evaluate, MaskPolicy};
use opcm::synth::{generate_events, SceneKind, SceneSpec};
use opcm::velocity::VelocitySample;

fn main() -> opcm::Result<()> {
    let mut spec = SceneSpec::new(SceneKind::TexturedPlane, VelocitySample::new(0.05, [0.0, 0.0, 1.0], [0.0; 3]));
    spec.contrast_density = 2;
    let scene = generate_events(&spec)?;

    // A prediction that is right in direction but 20% too slow.
    let gt = &scene.flow;
    let pred = FlowField::from_fn(gt.size(), |x, y| {
        let (u, v) = gt.get(x, y).unwrap_or((0.0, 0.0));
        (0.8 * u as f64, 0.8 * v as f64)
    });
    let dir = tempfile::tempdir().expect("temp dir");
    let path = dir.path().join("pred.flo");
    write_flow(&path, &pred)?;
    let pred = read_flow(&path)?;

    for policy in [MaskPolicy::Events, MaskPolicy::GtValid] {
        let report = evaluate(&pred, gt, Some((&scene.events, spec.window)), policy, 3.0)?;
        println!("{}", serde_json::to_string(&report).expect("report serializes"));
    }
    Ok(())
}
