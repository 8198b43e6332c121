mod common;

use assistive_arm::kinematics::{null_space_projector, KinematicChain};
use assistive_arm::solver::{
    clik_velocity, solve_readings, solve_step, SolverConfig, StackLevel, TaskHierarchy,
};
use assistive_arm::tasks::{TaskContext, TaskFunction, TaskSpec};
use common::*;
use nalgebra::{DMatrix, DVector, Matrix3, Vector3};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::collections::BTreeMap;

fn uncapped() -> SolverConfig {
    SolverConfig {
        velocity_cap: None,
        ..SolverConfig::default()
    }
}

fn random_levels(r: &mut ChaCha8Rng, sizes: &[usize]) -> Vec<(DMatrix<f64>, DVector<f64>)> {
    sizes
        .iter()
        .map(|&m| {
            (
                DMatrix::from_fn(m, 7, |_, _| r.random_range(-1.0..1.0)),
                DVector::from_fn(m, |_, _| r.random_range(-1.0..1.0)),
            )
        })
        .collect()
}

fn as_levels(v: &[(DMatrix<f64>, DVector<f64>)]) -> Vec<StackLevel<'_>> {
    v.iter().map(|(j, r)| StackLevel { jacobian: j, reference: r }).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn composition_matches_recursive_oracle(seed in any::<u64>(), lambda in prop_oneof![Just(0.0), Just(0.01), 0.001f64..0.2]) {
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        let levels = random_levels(&mut r, &[3, 1, 2, 1]);
        let got = clik_velocity(&as_levels(&levels), 7, lambda).unwrap();
        let want = nsb_oracle(&levels, 7, lambda);
        prop_assert!((got - want).amax() < 1e-9);
    }

    /// With λ = 0 the top level is met exactly and adding a level never
    /// changes the task velocity of any level above it.
    #[test]
    fn priority_is_strict_without_damping(seed in any::<u64>()) {
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        let levels = random_levels(&mut r, &[3, 2, 1, 1]);
        let ls = as_levels(&levels);
        let mut prev = clik_velocity(&ls[..1], 7, 0.0).unwrap();
        prop_assert!((&levels[0].0 * &prev - &levels[0].1).amax() < 1e-9);
        for h in 2..=ls.len() {
            let qd = clik_velocity(&ls[..h], 7, 0.0).unwrap();
            for (j, _) in &levels[..h - 1] {
                prop_assert!((j * (&qd - &prev)).amax() < 1e-9);
            }
            prev = qd;
        }
    }

    #[test]
    fn null_space_annihilation_on_task_stacks(seed in any::<u64>()) {
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        let n_active = r.random_range(1..=3);
        let s = random_scenario(&mut r, n_active);
        let readings = s.readings();
        let mut stacked = DMatrix::zeros(0, 7);
        for rd in &readings {
            let rows = stacked.nrows();
            stacked = stacked.insert_rows(rows, rd.jacobian.nrows(), 0.0);
            stacked.view_mut((rows, 0), (rd.jacobian.nrows(), 7)).copy_from(&rd.jacobian);
            if stacked.nrows() > 7 {
                break;
            }
            let n = null_space_projector(&stacked);
            prop_assert!((&stacked * n).amax() <= 1e-9);
        }
    }

    #[test]
    fn solver_matches_brute_force(seed in any::<u64>(), n_active in 1usize..=3) {
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        let s = random_scenario(&mut r, n_active);
        let readings = s.readings();
        let out = solve_readings(&s.hierarchy, &readings, &uncapped()).unwrap();
        let oracle = brute_force(&s.hierarchy, &readings, 0.01);
        prop_assert_eq!(oracle.n_active, n_active);
        prop_assert_eq!(out.solutions.chosen().mask, oracle.mask);
        let scale = oracle.velocity.norm().max(1.0);
        prop_assert!((&out.velocity - &oracle.velocity).amax() <= 1e-9 * scale);
        prop_assert_eq!(out.solutions.candidates.len(), oracle.candidates);
        prop_assert_eq!(out.solutions.feasible.len(), oracle.feasible);
    }

    #[test]
    fn chosen_has_the_largest_feasible_norm(seed in any::<u64>(), n_active in 0usize..=3) {
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        let s = random_scenario(&mut r, n_active);
        let out = solve_readings(&s.hierarchy, &s.readings(), &uncapped()).unwrap();
        let sol = &out.solutions;
        prop_assert_eq!(sol.candidates.len(), 1 << n_active);
        let best = sol.chosen().velocity.norm();
        for &i in &sol.feasible {
            prop_assert!(sol.candidates[i].velocity.norm() <= best + 1e-12);
        }
        // the full stack survives the filter
        let full = (1u32 << n_active) - 1;
        prop_assert!(sol.feasible.iter().any(|&i| sol.candidates[i].mask == full));
    }

    #[test]
    fn velocity_cap_is_uniform(seed in any::<u64>(), cap in 0.05f64..1.0) {
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        let s = random_scenario(&mut r, 2);
        let readings = s.readings();
        let free = solve_readings(&s.hierarchy, &readings, &uncapped()).unwrap();
        let capped = solve_readings(&s.hierarchy, &readings, &SolverConfig { velocity_cap: Some(cap), ..SolverConfig::default() }).unwrap();
        prop_assert!(capped.velocity.amax() <= cap + 1e-12);
        prop_assert!((free.velocity * capped.scale - capped.velocity).amax() < 1e-12);
    }
}

#[test]
fn no_active_tasks_is_plain_composition() {
    let mut r = ChaCha8Rng::seed_from_u64(3);
    let s = random_scenario(&mut r, 0);
    let readings = s.readings();
    let out = solve_readings(&s.hierarchy, &readings, &uncapped()).unwrap();
    let rd = &readings[0];
    let want = pinv_oracle(&rd.jacobian, 0.01) * (&s.hierarchy.tasks()[0].gain * rd.error.as_ref().unwrap());
    assert!((out.velocity - want).amax() < 1e-9);
}

/// Ten thousand solver steps on random stacks, every one with a non-empty
/// feasible set.
#[test]
fn feasible_set_never_empty() {
    let mut r = ChaCha8Rng::seed_from_u64(0x5eed);
    let config = SolverConfig::default();
    for i in 0..10_000 {
        let s = random_scenario(&mut r, 1 + i % 3);
        let out = solve_readings(&s.hierarchy, &s.readings(), &config).unwrap();
        assert!(!out.solutions.feasible.is_empty(), "case {i}");
    }
}

#[test]
fn too_many_active_tasks_is_reported() {
    let mut r = ChaCha8Rng::seed_from_u64(11);
    let s = random_scenario(&mut r, 3);
    let config = SolverConfig {
        max_active: 2,
        ..SolverConfig::default()
    };
    assert!(solve_readings(&s.hierarchy, &s.readings(), &config).is_err());
}

#[test]
fn hard_limit_breach_is_reported() {
    let chain = KinematicChain::reference();
    let q = DVector::from_element(7, 0.2);
    let t = TaskSpec::set_based(
        "j",
        TaskFunction::JointValue { joint: 0 },
        assistive_arm::tasks::SetBounds::with_midpoint_safety(1.0, 2.0, 0.1).unwrap(),
        1.0,
    )
    .unwrap();
    let h = TaskHierarchy::new(vec![t], 7).unwrap();
    let empty = BTreeMap::new();
    let ctx = TaskContext {
        chain: &chain,
        q: &q,
        tool_to_top: None,
        obstacles: &empty,
        targets: &BTreeMap::new(),
    };
    assert!(solve_step(&h, &ctx, &SolverConfig::default()).is_err());
}

#[test]
fn exponential_convergence_scalar_gains() {
    for k in [0.5, 1.0, 2.0] {
        for seed in 0..5 {
            let m = convergence_margin(Matrix3::identity() * k, seed);
            assert!(m >= 0.0, "k = {k}, seed {seed}: bound exceeded by {}", -m);
        }
    }
}

#[test]
fn exponential_convergence_mixed_spectrum() {
    let r = nalgebra::Rotation3::from_axis_angle(&Vector3::y_axis(), 0.6) * nalgebra::Rotation3::from_axis_angle(&Vector3::z_axis(), 1.1);
    let k = r.matrix() * Matrix3::from_diagonal(&Vector3::new(0.5, 1.0, 2.0)) * r.matrix().transpose();
    for seed in 0..5 {
        assert!(convergence_margin(k, seed) >= 0.0);
    }
}
