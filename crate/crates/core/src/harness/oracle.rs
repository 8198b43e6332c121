//! Randomized cross-check of the set-based solver against a brute-force
//! enumeration that shares none of its linear algebra.
//!
//! The oracle builds every pseudoinverse and projector from the symmetric
//! eigendecomposition of `JᵀJ`: with `JᵀJ = Σ μ_k v_k v_kᵀ`,
//! `J†_λ = Σ v_k v_kᵀ Jᵀ / (μ_k + λ²)` and `N = Σ_{μ_k ≈ 0} v_k v_kᵀ`.

use std::collections::BTreeMap;
use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector, Isometry3, Translation3, Unit, UnitQuaternion, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::Result;
use crate::kinematics::{Joint, KinematicChain};
use crate::solver::{solve_readings, SolverConfig, TaskHierarchy};
use crate::tasks::{ControlFrame, FrameTarget, SetBounds, TaskContext, TaskFunction, TaskReading, TaskSpec};

/// Eigenvalues of `JᵀJ` below this fraction of the largest are treated as
/// zero.
pub const ORACLE_RANK_TOL: f64 = 1e-12;

/// Velocity agreement required between solver and oracle, scaled by
/// `max(1, ‖q̇‖)`.
pub const ORACLE_VELOCITY_TOL: f64 = 1e-9;

/// One randomized solver input.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub hierarchy: TaskHierarchy,
    pub readings: Vec<TaskReading>,
}

fn unit_vector<R: Rng + ?Sized>(rng: &mut R) -> Unit<Vector3<f64>> {
    loop {
        let v = Vector3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        if v.norm() > 0.1 && v.norm() <= 1.0 {
            return Unit::new_normalize(v);
        }
    }
}

fn random_pose<R: Rng + ?Sized>(rng: &mut R, reach: f64) -> Isometry3<f64> {
    let t = Vector3::new(
        rng.random_range(-reach..reach),
        rng.random_range(-reach..reach),
        rng.random_range(-reach..reach),
    );
    let r = UnitQuaternion::from_axis_angle(&unit_vector(rng), rng.random_range(-3.0..3.0));
    Isometry3::from_parts(Translation3::from(t), r)
}

/// A random serial chain of revolute joints.
pub fn random_chain<R: Rng + ?Sized>(rng: &mut R, joints: usize) -> KinematicChain {
    let joints = (0..joints)
        .map(|i| Joint::new(format!("j{i}"), unit_vector(rng).into_inner(), random_pose(rng, 0.25)).expect("unit axis"))
        .collect();
    KinematicChain::new(joints, random_pose(rng, 0.15)).expect("non-empty chain")
}

/// A 7-joint scenario with exactly `n_active` active set-based tasks (joint
/// limits or obstacle distances) around one position task placed at a
/// random priority.
pub fn random_scenario<R: Rng + ?Sized>(rng: &mut R, n_active: usize) -> Scenario {
    let n = 7;
    let chain = random_chain(rng, n);
    let q = DVector::from_fn(n, |_, _| rng.random_range(-3.0..3.0));
    let tool = chain.forward_kinematics(&q, crate::kinematics::Frame::Tool).expect("valid q");
    let mut obstacles = BTreeMap::new();
    let mut tasks = Vec::new();
    let mut joints: Vec<usize> = (0..n).collect();
    for k in 0..n_active {
        let gain = rng.random_range(0.5..3.0);
        let upper = rng.random_bool(0.5);
        if rng.random_bool(0.3) {
            let id = format!("obs{k}");
            let p = tool.translation.vector + unit_vector(rng).into_inner() * rng.random_range(0.2..0.5);
            let d = (tool.translation.vector - p).norm();
            obstacles.insert(id.clone(), p);
            let bounds = SetBounds::lower_only(d - rng.random_range(0.0..0.025), 0.03).expect("valid bounds");
            let f = TaskFunction::ObstacleDistance {
                frame: ControlFrame::Tool,
                obstacle: id.clone(),
            };
            tasks.push(TaskSpec::set_based(id, f, bounds, gain).expect("valid task"));
        } else {
            let j = joints.remove(rng.random_range(0..joints.len()));
            let s = q[j];
            let margin = rng.random_range(0.0..0.09);
            let (min, max) = if upper { (s - 2.0, s + margin) } else { (s - margin, s + 2.0) };
            let bounds = SetBounds::with_midpoint_safety(min, max, 0.1).expect("valid bounds");
            let f = TaskFunction::JointValue { joint: j };
            tasks.push(TaskSpec::set_based(format!("joint{j}"), f, bounds, gain).expect("valid task"));
        }
    }
    let slot = rng.random_range(0..=tasks.len());
    let gain = rng.random_range(0.5..3.0);
    tasks.insert(slot, TaskSpec::equality("position", TaskFunction::Position, gain).expect("valid task"));
    let target = Isometry3::from_parts(
        Translation3::from(tool.translation.vector + unit_vector(rng).into_inner() * rng.random_range(0.0..0.3)),
        UnitQuaternion::identity(),
    );
    let targets = BTreeMap::from([(
        "position".to_string(),
        FrameTarget {
            frame: ControlFrame::Tool,
            pose: target,
        },
    )]);
    let hierarchy = TaskHierarchy::new(tasks, n).expect("stack fits the chain");
    let ctx = TaskContext {
        chain: &chain,
        q: &q,
        tool_to_top: None,
        obstacles: &obstacles,
        targets: &targets,
    };
    let readings = hierarchy.evaluate(&ctx).expect("scenario evaluates");
    Scenario { hierarchy, readings }
}

fn gram_eigen(j: &DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let e = (j.transpose() * j).symmetric_eigen();
    (e.eigenvalues, e.eigenvectors)
}

fn oracle_pinv(j: &DMatrix<f64>, damping: f64) -> DMatrix<f64> {
    let (mu, v) = gram_eigen(j);
    let top = mu.amax();
    let mut acc = DMatrix::zeros(j.ncols(), j.ncols());
    for k in 0..mu.len() {
        let denom = mu[k] + damping * damping;
        if damping == 0.0 && mu[k] <= top * ORACLE_RANK_TOL {
            continue;
        }
        let vk = v.column(k);
        acc += vk * vk.transpose() / denom;
    }
    acc * j.transpose()
}

fn oracle_projector(j: &DMatrix<f64>) -> DMatrix<f64> {
    let (mu, v) = gram_eigen(j);
    let top = mu.amax();
    let mut n = DMatrix::zeros(j.ncols(), j.ncols());
    for k in 0..mu.len() {
        if mu[k] <= top * ORACLE_RANK_TOL {
            let vk = v.column(k);
            n += vk * vk.transpose();
        }
    }
    n
}

/// The oracle's pick: activation mask over the active set-based tasks (bit
/// `j` is the `j`-th active one in priority order) and its velocity.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleChoice {
    pub mask: u32,
    pub velocity: DVector<f64>,
    pub candidates: usize,
    pub feasible: usize,
}

/// Enumerates every subset of active set-based tasks, filters by the sign
/// test and returns the largest feasible velocity.
pub fn brute_force(hierarchy: &TaskHierarchy, readings: &[TaskReading], damping: f64, feasibility_tol: f64) -> OracleChoice {
    let n = hierarchy.joint_count();
    // (task index, upper?, target)
    let active: Vec<(usize, bool, f64)> = hierarchy
        .tasks()
        .iter()
        .enumerate()
        .filter_map(|(i, t)| {
            let b = t.bounds()?;
            let s = readings[i].value[0];
            if s > b.max - b.buffer {
                Some((i, true, b.safety_upper))
            } else if s < b.min + b.buffer {
                Some((i, false, b.safety_lower))
            } else {
                None
            }
        })
        .collect();
    let full = (1u32 << active.len()) - 1;
    let mut kept: Vec<(u32, DVector<f64>)> = Vec::new();
    for mask in 0..=full {
        let mut qd = DVector::zeros(n);
        let mut stacked: Vec<DMatrix<f64>> = Vec::new();
        for (i, t) in hierarchy.tasks().iter().enumerate() {
            let reference = match active.iter().position(|a| a.0 == i) {
                Some(j) if mask >> j & 1 == 1 => &t.gain * DVector::from_element(1, active[j].2 - readings[i].value[0]),
                Some(_) => continue,
                None if t.is_set_based() => continue,
                None => &t.gain * readings[i].error.as_ref().expect("equality reading has an error"),
            };
            let j = &readings[i].jacobian;
            let contribution = oracle_pinv(j, damping) * reference;
            if stacked.is_empty() {
                qd += contribution;
            } else {
                let rows: usize = stacked.iter().map(|m| m.nrows()).sum();
                let aug = DMatrix::from_fn(rows, n, |r, c| {
                    let mut r = r;
                    for m in &stacked {
                        if r < m.nrows() {
                            return m[(r, c)];
                        }
                        r -= m.nrows();
                    }
                    unreachable!()
                });
                qd += oracle_projector(&aug) * contribution;
            }
            stacked.push(j.clone());
        }
        let ok = mask == full
            || active.iter().enumerate().all(|(j, &(i, upper, _))| {
                if mask >> j & 1 == 1 {
                    return true;
                }
                let rate = readings[i].jacobian.row(0).dot(&qd.transpose());
                if upper {
                    rate <= feasibility_tol
                } else {
                    rate >= -feasibility_tol
                }
            });
        if !ok {
            continue;
        }
        kept.push((mask, qd));
    }
    let top = kept.iter().map(|(_, v)| v.norm()).fold(0.0, f64::max);
    let feasible = kept.len();
    let (mask, velocity) = kept
        .into_iter()
        .filter(|(_, v)| v.norm() >= top - 1e-12)
        .min_by_key(|(m, _)| (m.count_ones(), *m))
        .expect("the full mask is always feasible");
    OracleChoice {
        mask,
        velocity,
        candidates: 1 << active.len(),
        feasible,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleMismatch {
    pub case: usize,
    pub n_active: usize,
    pub solver_mask: u32,
    pub oracle_mask: u32,
    pub velocity_diff: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleReport {
    pub cases: usize,
    pub seed: u64,
    /// Cases run with 1, 2 and 3 active set-based tasks.
    pub by_active: [usize; 3],
    pub max_velocity_diff: f64,
    pub mismatches: Vec<OracleMismatch>,
    #[serde(skip)]
    pub elapsed: Duration,
}

impl OracleReport {
    pub fn passed(&self) -> bool {
        self.mismatches.is_empty()
    }
}

/// Runs `cases` random scenarios with n_a cycling through 1, 2, 3.
pub fn verify_oracle(cases: usize, seed: u64) -> Result<OracleReport> {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let config = SolverConfig {
        velocity_cap: None,
        ..SolverConfig::default()
    };
    let mut report = OracleReport {
        cases,
        seed,
        by_active: [0; 3],
        max_velocity_diff: 0.0,
        mismatches: Vec::new(),
        elapsed: Duration::ZERO,
    };
    for case in 0..cases {
        let n_active = case % 3 + 1;
        let s = random_scenario(&mut rng, n_active);
        let outcome = solve_readings(&s.hierarchy, &s.readings, &config)?;
        let oracle = brute_force(&s.hierarchy, &s.readings, config.damping, config.feasibility_tol);
        let chosen = outcome.solutions.chosen();
        let diff = (&chosen.velocity - &oracle.velocity).amax();
        let scale = oracle.velocity.norm().max(1.0);
        report.by_active[n_active - 1] += 1;
        report.max_velocity_diff = report.max_velocity_diff.max(diff / scale);
        if chosen.mask != oracle.mask || diff > ORACLE_VELOCITY_TOL * scale {
            report.mismatches.push(OracleMismatch {
                case,
                n_active,
                solver_mask: chosen.mask,
                oracle_mask: oracle.mask,
                velocity_diff: diff,
            });
        }
    }
    report.elapsed = started.elapsed();
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scenarios_have_requested_active_count() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for n_a in 1..=3 {
            let s = random_scenario(&mut rng, n_a);
            let o = brute_force(&s.hierarchy, &s.readings, 0.01, 1e-9);
            assert_eq!(o.candidates, 1 << n_a);
            assert!(o.feasible >= 1);
        }
    }

    #[test]
    fn eigen_pinv_matches_definition() {
        let j = DMatrix::from_row_slice(2, 3, &[1.0, 2.0, 0.0, 0.0, 1.0, 1.0]);
        let p = oracle_pinv(&j, 0.0);
        assert!((&j * &p - DMatrix::identity(2, 2)).amax() < 1e-12);
        let n = oracle_projector(&j);
        assert!((&j * &n).amax() < 1e-12);
        assert!((n.trace() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn small_run_agrees() {
        let r = verify_oracle(30, 11).unwrap();
        assert!(r.passed(), "{:?}", r.mismatches);
        assert_eq!(r.by_active, [10, 10, 10]);
    }
}
