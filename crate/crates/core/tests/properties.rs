use std::f64::consts::{PI, SQRT_2};

use peritact_core::feedback::{compute_frame, max_intensity, IntensityLaw, VibrationFrame};
use peritact_core::geometry::{motor_distances, motor_vectors, select_direction, MotorId, PlanePoint};
use peritact_core::{Approach, Condition, IntensityMode, Layout, Metaphor};
use proptest::prelude::*;

const CASES: u32 = 10_000;

fn point(range: f64) -> impl Strategy<Value = PlanePoint> {
    (-range..range, -range..range).prop_map(|(x, y)| PlanePoint::new(x, y))
}

fn condition() -> impl Strategy<Value = Condition> {
    (
        prop::sample::select(Layout::ALL.to_vec()),
        prop::sample::select(Approach::ALL.to_vec()),
        prop::sample::select(Metaphor::ALL.to_vec()),
        prop::sample::select(IntensityMode::ALL.to_vec()),
    )
        .prop_map(|(l, a, m, k)| Condition::new(l, a, m, k))
}

/// Hand, wrist, target and board center for one tick.
#[derive(Debug, Clone, Copy)]
struct Pose {
    hand: PlanePoint,
    wrist: PlanePoint,
    target: PlanePoint,
    center: PlanePoint,
}

fn pose() -> impl Strategy<Value = Pose> {
    (point(60.0), -PI..PI, 3.0..15.0f64, point(60.0), point(60.0))
        .prop_filter("target too close to hand", |(hand, _, _, target, _)| hand.distance(*target) > 1e-3)
        .prop_map(|(hand, gamma, forearm, target, center)| Pose {
            hand,
            wrist: hand - PlanePoint::new(gamma.sin(), gamma.cos()) * forearm,
            target,
            center,
        })
}

fn frame(p: &Pose, cond: &Condition) -> VibrationFrame {
    compute_frame(p.hand, p.wrist, p.target, p.center, cond, &IntensityLaw::default(), 0.0).unwrap()
}

fn rotate_about(p: PlanePoint, pivot: PlanePoint, angle: f64) -> PlanePoint {
    pivot + (p - pivot).rotated(angle)
}

/// Whether any motor distance sits on a discontinuity of the intensity map.
fn near_switch(p: &Pose, approach: Approach) -> bool {
    let gamma = (p.hand - p.wrist).x.atan2((p.hand - p.wrist).y);
    let motors = motor_vectors(gamma);
    let straight = select_direction(p.hand, p.target, Approach::TwoTactor, &motors).unwrap();
    let dists = motor_distances(&motors, straight).unwrap();
    let on_perpendicular = dists.iter().any(|(_, d)| (d - SQRT_2).abs() < 1e-6);
    let mut sorted: Vec<f64> = dists.iter().map(|(_, d)| d).collect();
    sorted.sort_by(f64::total_cmp);
    let axis_tie = approach == Approach::WorstAxis && (sorted[1] - sorted[0]).abs() < 1e-6;
    on_perpendicular || axis_tie
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(CASES))]

    #[test]
    fn intensities_are_off_or_perceptible(p in pose(), cond in condition()) {
        for i in frame(&p, &cond).intensity {
            prop_assert!(i == 0.0 || (0.59..=1.0).contains(&i), "intensity {i}");
        }
    }

    #[test]
    fn worst_axis_drives_one_motor(p in pose(), cond in condition()) {
        let cond = Condition { approach: Approach::WorstAxis, ..cond };
        prop_assert_eq!(frame(&p, &cond).active_count(), 1);
    }

    #[test]
    fn two_tactor_never_drives_opposite_pair(p in pose(), cond in condition()) {
        let cond = Condition { approach: Approach::TwoTactor, ..cond };
        let f = frame(&p, &cond);
        prop_assert!((1..=2).contains(&f.active_count()), "{:?}", f.intensity);
        for m in MotorId::ALL {
            prop_assert!(!(f.get(m) > 0.0 && f.get(m.opposite()) > 0.0), "{:?}", f.intensity);
        }
    }

    #[test]
    fn rigid_rotation_leaves_frame_unchanged(
        p in pose(),
        cond in condition(),
        angle in -PI..PI,
        pivot in point(40.0),
    ) {
        prop_assume!(!near_switch(&p, cond.approach));
        let r = |q| rotate_about(q, pivot, angle);
        let rotated = Pose { hand: r(p.hand), wrist: r(p.wrist), target: r(p.target), center: r(p.center) };
        let a = frame(&p, &cond);
        let b = frame(&rotated, &cond);
        for m in MotorId::ALL {
            prop_assert!((a.get(m) - b.get(m)).abs() <= 1e-9, "{m:?}: {} vs {}", a.get(m), b.get(m));
        }
    }

    #[test]
    fn linear_ceiling_never_drops_when_closer(d1 in 0.0..80.0f64, d2 in 0.0..80.0f64) {
        let law = IntensityLaw::default();
        let (near, far) = if d1 <= d2 { (d1, d2) } else { (d2, d1) };
        let a = max_intensity(IntensityMode::Linear, near, &law).unwrap();
        let b = max_intensity(IntensityMode::Linear, far, &law).unwrap();
        prop_assert!(a >= b);
        prop_assert!((0.8..=1.0).contains(&a) && (0.8..=1.0).contains(&b));
    }

    #[test]
    fn linear_frame_grows_toward_target(
        angle in -PI..PI,
        d1 in 0.5..70.0f64,
        d2 in 0.5..70.0f64,
        approach in prop::sample::select(Approach::ALL.to_vec()),
        metaphor in prop::sample::select(Metaphor::ALL.to_vec()),
    ) {
        // Hand on the same ray from the target at two distances, upright hand.
        let target = PlanePoint::new(0.0, 35.0);
        let dir = PlanePoint::new(angle.sin(), angle.cos());
        let cond = Condition::new(Layout::Horizontal, approach, metaphor, IntensityMode::Linear);
        let at = |d: f64| {
            let hand = target + dir * d;
            compute_frame(hand, hand - PlanePoint::new(0.0, 8.0), target, PlanePoint::ORIGIN, &cond, &IntensityLaw::default(), 0.0).unwrap()
        };
        let (near, far) = if d1 <= d2 { (d1, d2) } else { (d2, d1) };
        let (a, b) = (at(near), at(far));
        for m in MotorId::ALL {
            prop_assert!(a.get(m) >= b.get(m) - 1e-12, "{m:?} {} < {}", a.get(m), b.get(m));
        }
    }
}
