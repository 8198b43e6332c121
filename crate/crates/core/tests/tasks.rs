mod common;

use std::collections::BTreeMap;

use assistive_arm::kinematics::KinematicChain;
use assistive_arm::tasks::{
    joint_value_task, manipulability, obstacle_distance_task, pose_task, position_task, JacobianRows, SetBounds,
};
use common::*;
use nalgebra::{DVector, Isometry3, Vector3};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn nudge(q: &DVector<f64>, k: usize, h: f64) -> DVector<f64> {
    let mut out = q.clone();
    out[k] += h;
    out
}

#[test]
fn midpoint_safety_values() {
    let b = SetBounds::with_midpoint_safety(0.7, 5.5, 0.1).unwrap();
    assert!((b.lower_activation() - 0.8).abs() < 1e-15);
    assert!((b.upper_activation() - 5.4).abs() < 1e-15);
    assert!((b.safety_lower - 0.75).abs() < 1e-15);
    assert!((b.safety_upper - 5.45).abs() < 1e-15);
    let one = SetBounds::lower_only(0.25, 0.03).unwrap();
    assert!(one.max.is_infinite() && one.safety_upper.is_infinite());
    assert!((one.safety_lower - 0.265).abs() < 1e-15);
}

#[test]
fn inconsistent_bounds_are_rejected() {
    assert!(SetBounds::with_midpoint_safety(1.0, 0.5, 0.1).is_err());
    assert!(SetBounds::with_midpoint_safety(0.0, 1.0, 0.6).is_err());
    assert!(SetBounds::with_midpoint_safety(0.0, 1.0, -0.1).is_err());
    assert!(SetBounds::new(0.0, 1.0, 0.1, 0.5, 0.95).is_err());
}

#[test]
fn joint_value_out_of_range() {
    assert!(joint_value_task(&DVector::zeros(3), 3).is_err());
}

#[test]
fn obstacle_on_the_control_point_is_an_error() {
    let chain = KinematicChain::reference();
    let q = DVector::from_element(7, 0.3);
    let p = fk_position(&chain, &q);
    assert!(obstacle_distance_task(&chain, &q, &Isometry3::identity(), "x", &p).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn obstacle_distance_gradient(seed in any::<u64>()) {
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        let chain = random_chain(&mut r, 7);
        let q = random_q(&mut r, 7);
        let offset = random_iso(&mut r, 0.1);
        let obs = fk_position(&chain, &q) + random_unit(&mut r) * 0.3;
        let reading = obstacle_distance_task(&chain, &q, &offset, "o", &obs).unwrap();
        let dist = |q: &DVector<f64>| {
            let t = fk_matrix(&chain, q) * iso_matrix(&offset);
            (Vector3::new(t[(0, 3)], t[(1, 3)], t[(2, 3)]) - obs).norm()
        };
        prop_assert!((reading.value[0] - dist(&q)).abs() < 1e-10);
        for k in 0..7 {
            let h = 1e-6;
            let fd = (dist(&nudge(&q, k, h)) - dist(&nudge(&q, k, -h))) / (2.0 * h);
            prop_assert!((reading.jacobian[(0, k)] - fd).abs() < 1e-5);
        }
    }

    #[test]
    fn position_rows_and_error(seed in any::<u64>()) {
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        let chain = random_chain(&mut r, 7);
        let q = random_q(&mut r, 7);
        let goal = random_iso(&mut r, 1.0);
        let pos = position_task(&chain, &q, &Isometry3::identity(), &goal.translation.vector).unwrap();
        let pose = pose_task(&chain, &q, &Isometry3::identity(), &goal).unwrap();
        let p = fk_position(&chain, &q);
        prop_assert!((pos.error.unwrap().fixed_rows::<3>(0) - (goal.translation.vector - p)).norm() < 1e-10);
        let fd = fd_jacobian(&chain, &q, 1e-6);
        prop_assert!((&pos.jacobian - fd.rows(0, 3)).amax() < 1e-5);
        prop_assert!((&pose.jacobian - fd).amax() < 1e-5);
    }

    #[test]
    fn manipulability_is_product_of_singular_values(seed in any::<u64>()) {
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        let chain = random_chain(&mut r, 7);
        let q = random_q(&mut r, 7);
        let j = fd_jacobian(&chain, &q, 1e-6);
        let lin = j.rows(0, 3).into_owned();
        let expected = (&lin * lin.transpose()).determinant().max(0.0).sqrt();
        let got = manipulability(&chain, &q, JacobianRows::Linear).unwrap();
        prop_assert!((got - expected).abs() < 1e-5 * expected.max(1.0));
    }
}

#[test]
fn unknown_obstacle_or_missing_target_is_an_error() {
    use assistive_arm::tasks::{ControlFrame, TaskContext, TaskFunction, TaskSpec};
    let chain = KinematicChain::reference();
    let q = DVector::from_element(7, 0.3);
    let empty = BTreeMap::new();
    let targets = BTreeMap::new();
    let ctx = TaskContext {
        chain: &chain,
        q: &q,
        tool_to_top: None,
        obstacles: &empty,
        targets: &targets,
    };
    let obs = TaskSpec::set_based(
        "d",
        TaskFunction::ObstacleDistance {
            frame: ControlFrame::Tool,
            obstacle: "ghost".into(),
        },
        SetBounds::lower_only(0.1, 0.02).unwrap(),
        1.0,
    )
    .unwrap();
    assert!(obs.evaluate(&ctx).is_err());
    let pose = TaskSpec::equality("pose", TaskFunction::Pose, 1.0).unwrap();
    assert!(pose.evaluate(&ctx).is_err());
    let top = TaskSpec::set_based(
        "d",
        TaskFunction::ObstacleDistance {
            frame: ControlFrame::ObjectTop,
            obstacle: "ghost".into(),
        },
        SetBounds::lower_only(0.1, 0.02).unwrap(),
        1.0,
    )
    .unwrap();
    assert!(top.evaluate(&ctx).is_err());
}
