use nalgebra::Vector3;
use proptest::prelude::*;

use opcm::camera::CameraModel;
use opcm::events::{decode_events_bin, encode_events_bin, format_events_csv, parse_events_csv, Event, EventSet, SensorSize};
use opcm::flow::{decode_flow, encode_flow, FlowField};
use opcm::priors::linear_orientation_map;
use opcm::velocity::{kalman_filter, to_camera_frame, KalmanConfig, KalmanState, RigidTransform, VelocitySample};
use opcm::warp::{build_iwe, warp_events, GridShape, MotionField};

const SIZE: SensorSize = SensorSize { width: 40, height: 30 };

fn events() -> impl Strategy<Value = EventSet> {
    prop::collection::vec((0.0..1.0f64, 0u16..40, 0u16..30, prop::bool::ANY), 1..200).prop_map(|raw| {
        let mut ev: Vec<Event> = raw
            .into_iter()
            .map(|(t, x, y, p)| Event::new(t, x, y, if p { 1 } else { -1 }))
            .collect();
        ev.sort_by(|a, b| a.t.total_cmp(&b.t));
        EventSet::new(ev, SIZE).unwrap()
    })
}

fn vec3(r: f64) -> impl Strategy<Value = Vector3<f64>> {
    (-r..r, -r..r, -r..r).prop_map(|(a, b, c)| Vector3::new(a, b, c))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn event_files_round_trip(set in events()) {
        let csv = parse_events_csv(&format_events_csv(&set), SIZE).unwrap();
        prop_assert_eq!(csv.events(), set.events());
        let bin = decode_events_bin(&encode_events_bin(&set)).unwrap();
        prop_assert_eq!(bin.events(), set.events());
    }

    #[test]
    fn flo_round_trip(seed in prop::collection::vec(-100.0f32..100.0, 12)) {
        let size = SensorSize::new(4, 3);
        let mut flow = FlowField::from_fn(size, |x, y| {
            let i = (y * 4 + x) as usize;
            (seed[i] as f64, -seed[11 - i] as f64)
        });
        flow.set_invalid(1, 2);
        let back = decode_flow(&encode_flow(&flow).unwrap()).unwrap();
        prop_assert_eq!(back, flow);
    }

    /// Interior events keep all their mass, and doubling the field doubles
    /// every displacement.
    #[test]
    fn warp_conserves_interior_mass(
        raw in prop::collection::vec((0.0..0.1f64, 8u16..32, 8u16..22), 1..300),
        theta in prop::collection::vec(-20.0..20.0f64, 8),
        t_ref in 0.0..0.1f64,
    ) {
        let mut ev: Vec<Event> = raw.into_iter().map(|(t, x, y)| Event::new(t, x, y, 1)).collect();
        ev.sort_by(|a, b| a.t.total_cmp(&b.t));
        let n = ev.len() as f64;
        let set = EventSet::new(ev, SIZE).unwrap();
        let field = MotionField::from_params(GridShape::new(2, 2), SIZE, &theta).unwrap();
        let warped = warp_events(&set, &field, t_ref);
        let iwe = build_iwe(&warped, SIZE, 1.0).unwrap();
        prop_assert!((iwe.pixels.sum() - n).abs() < 1e-9);

        let twice = warp_events(&set, &field.scaled(2.0), t_ref);
        for ((e, a), b) in set.events().iter().zip(&warped.points).zip(&twice.points) {
            for k in 0..2 {
                let base = if k == 0 { e.x } else { e.y } as f64;
                prop_assert!(((b[k] - base) - 2.0 * (a[k] - base)).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn linear_map_ignores_speed(v in vec3(2.0), c in 0.01..50.0f64) {
        prop_assume!(v.norm() > 1e-3 && v.z.abs() > 1e-3);
        let cam = CameraModel::pinhole(100.0, 100.0, 19.5, 14.5, SIZE).unwrap();
        let a = linear_orientation_map(&cam, v).unwrap();
        let b = linear_orientation_map(&cam, c * v).unwrap();
        prop_assert_eq!(a.valid(), b.valid());
        for (p, q) in a.dirs().iter().zip(b.dirs()) {
            prop_assert!((p[0] - q[0]).abs() < 1e-9 && (p[1] - q[1]).abs() < 1e-9);
        }
    }

    #[test]
    fn velocity_transport_is_an_action(
        a1 in vec3(1.0), t1 in vec3(1.0), a2 in vec3(1.0), t2 in vec3(1.0), v in vec3(3.0), w in vec3(3.0),
    ) {
        let e1 = RigidTransform::from_axis_angle(a1, t1);
        let e2 = RigidTransform::from_axis_angle(a2, t2);
        let (v1, w1) = to_camera_frame(&v, &w, &e1);
        let (vs, ws) = to_camera_frame(&v1, &w1, &e2);
        let (vc, wc) = to_camera_frame(&v, &w, &e2.compose(&e1));
        prop_assert!((vs - vc).amax() < 1e-9 && (ws - wc).amax() < 1e-9);
    }

    #[test]
    fn kalman_covariance_stays_pd(
        steps in prop::collection::vec((1e-4..0.5f64, prop::array::uniform6(-10.0..10.0f64)), 1..400),
        q in 1e-6..1.0f64,
        r in 1e-4..10.0f64,
    ) {
        let cfg = KalmanConfig { q, r, p0: 1.0 };
        let mut state = KalmanState::new(cfg).unwrap();
        let mut t = 0.0;
        let mut trace = Vec::new();
        for (dt, z) in steps {
            t += dt;
            let s = VelocitySample::new(t, [z[0], z[1], z[2]], [z[3], z[4], z[5]]);
            state.step(&s).unwrap();
            trace.push(s);
            let p = state.covariance;
            prop_assert!((p - p.transpose()).amax() <= 1e-12 * p.amax().max(1.0));
            prop_assert!(p.symmetric_eigenvalues().min() > 0.0);
        }
        prop_assert_eq!(kalman_filter(&trace, &cfg).unwrap().len(), trace.len());
    }
}
