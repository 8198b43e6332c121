//! Reference computations shared by the integration tests. Nothing here
//! calls into the solver or the kinematics code it checks.
#![allow(dead_code)]

use std::collections::BTreeMap;

use assistive_arm::kinematics::{Joint, KinematicChain};
use assistive_arm::solver::{solve_step, SolverConfig, TaskHierarchy};
use assistive_arm::tasks::{ControlFrame, FrameTarget, SetBounds, TaskContext, TaskFunction, TaskKind, TaskReading, TaskSpec};
use nalgebra::{DMatrix, DVector, Isometry3, Matrix3, Matrix4, Translation3, UnitQuaternion, Vector3};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand::Rng;

pub fn skew(v: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

/// Rodrigues' formula for a unit axis.
pub fn rodrigues(axis: &Vector3<f64>, angle: f64) -> Matrix3<f64> {
    let k = skew(axis);
    Matrix3::identity() + k * angle.sin() + k * k * (1.0 - angle.cos())
}

/// Rotation matrix of a unit quaternion written out by hand.
pub fn quat_matrix(q: &UnitQuaternion<f64>) -> Matrix3<f64> {
    let (w, x, y, z) = (q.w, q.i, q.j, q.k);
    Matrix3::new(
        1.0 - 2.0 * (y * y + z * z),
        2.0 * (x * y - w * z),
        2.0 * (x * z + w * y),
        2.0 * (x * y + w * z),
        1.0 - 2.0 * (x * x + z * z),
        2.0 * (y * z - w * x),
        2.0 * (x * z - w * y),
        2.0 * (y * z + w * x),
        1.0 - 2.0 * (x * x + y * y),
    )
}

pub fn homogeneous(r: &Matrix3<f64>, t: &Vector3<f64>) -> Matrix4<f64> {
    let mut m = Matrix4::identity();
    m.fixed_view_mut::<3, 3>(0, 0).copy_from(r);
    m.fixed_view_mut::<3, 1>(0, 3).copy_from(t);
    m
}

pub fn iso_matrix(iso: &Isometry3<f64>) -> Matrix4<f64> {
    homogeneous(&quat_matrix(&iso.rotation), &iso.translation.vector)
}

/// Tool transform as a product of 4×4 homogeneous matrices.
pub fn fk_matrix(chain: &KinematicChain, q: &DVector<f64>) -> Matrix4<f64> {
    let mut t = Matrix4::<f64>::identity();
    for (j, &angle) in chain.joints().iter().zip(q.iter()) {
        t = t * iso_matrix(&j.origin) * homogeneous(&rodrigues(&j.axis.into_inner(), angle), &Vector3::zeros());
    }
    t * iso_matrix(chain.tool_offset())
}

pub fn fk_position(chain: &KinematicChain, q: &DVector<f64>) -> Vector3<f64> {
    fk_matrix(chain, q).fixed_view::<3, 1>(0, 3).into_owned()
}

/// Central-difference Jacobian of the tool: linear rows from positions,
/// angular rows from `vee(dR Rᵀ)`.
pub fn fd_jacobian(chain: &KinematicChain, q: &DVector<f64>, h: f64) -> DMatrix<f64> {
    let n = q.len();
    let mut jac = DMatrix::zeros(6, n);
    let r0 = fk_matrix(chain, q).fixed_view::<3, 3>(0, 0).into_owned();
    for k in 0..n {
        let mut qp = q.clone();
        let mut qm = q.clone();
        qp[k] += h;
        qm[k] -= h;
        let (tp, tm) = (fk_matrix(chain, &qp), fk_matrix(chain, &qm));
        let dp = (tp.fixed_view::<3, 1>(0, 3) - tm.fixed_view::<3, 1>(0, 3)) / (2.0 * h);
        let dr = (tp.fixed_view::<3, 3>(0, 0) - tm.fixed_view::<3, 3>(0, 0)) / (2.0 * h);
        let w = dr * r0.transpose();
        jac.fixed_view_mut::<3, 1>(0, k).copy_from(&dp);
        jac[(3, k)] = 0.5 * (w[(2, 1)] - w[(1, 2)]);
        jac[(4, k)] = 0.5 * (w[(0, 2)] - w[(2, 0)]);
        jac[(5, k)] = 0.5 * (w[(1, 0)] - w[(0, 1)]);
    }
    jac
}

pub fn random_unit<R: Rng>(rng: &mut R) -> Vector3<f64> {
    loop {
        let v = Vector3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        let n = v.norm();
        if n > 0.1 && n <= 1.0 {
            return v / n;
        }
    }
}

pub fn random_iso<R: Rng>(rng: &mut R, reach: f64) -> Isometry3<f64> {
    let t = Vector3::new(
        rng.random_range(-reach..reach),
        rng.random_range(-reach..reach),
        rng.random_range(-reach..reach),
    );
    let r = UnitQuaternion::from_axis_angle(&nalgebra::Unit::new_normalize(random_unit(rng)), rng.random_range(-3.1..3.1));
    Isometry3::from_parts(Translation3::from(t), r)
}

pub fn random_chain<R: Rng>(rng: &mut R, joints: usize) -> KinematicChain {
    let js = (0..joints)
        .map(|i| Joint::new(format!("j{i}"), random_unit(rng), random_iso(rng, 0.25)).unwrap())
        .collect();
    KinematicChain::new(js, random_iso(rng, 0.1)).unwrap()
}

pub fn random_q<R: Rng>(rng: &mut R, n: usize) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.random_range(-3.1..3.1))
}

/// Orthonormal basis of the row space of `a`, by twice-repeated modified
/// Gram–Schmidt. Rows whose residual falls under `rtol` times the largest
/// row norm are treated as dependent.
pub fn row_space_basis(a: &DMatrix<f64>, rtol: f64) -> Vec<DVector<f64>> {
    let scale = (0..a.nrows()).map(|i| a.row(i).norm()).fold(0.0, f64::max);
    let mut basis: Vec<DVector<f64>> = Vec::new();
    for i in 0..a.nrows() {
        let mut v: DVector<f64> = a.row(i).transpose();
        for _ in 0..2 {
            for b in &basis {
                let c = b.dot(&v);
                v -= b * c;
            }
        }
        let n = v.norm();
        if n > rtol * scale && n > 0.0 {
            basis.push(v / n);
        }
    }
    basis
}

/// `I − Σ b bᵀ` over a row-space basis of `a`.
pub fn projector_oracle(a: &DMatrix<f64>) -> DMatrix<f64> {
    let n = a.ncols();
    let mut p = DMatrix::identity(n, n);
    for b in row_space_basis(a, 1e-9) {
        p -= &b * b.transpose();
    }
    p
}

/// Damped pseudoinverse in its n×n form `(JᵀJ + λ²I)⁻¹ Jᵀ`; for λ = 0 the
/// right inverse `Jᵀ (JJᵀ)⁻¹` of a full-row-rank `J`.
pub fn pinv_oracle(j: &DMatrix<f64>, damping: f64) -> DMatrix<f64> {
    let (m, n) = j.shape();
    if damping == 0.0 {
        let g = (j * j.transpose()).lu();
        let inv = g.try_inverse().expect("full row rank");
        return j.transpose() * inv;
    }
    // n×n normal form; for small damping it is badly conditioned, so solve
    // rather than invert and polish with a few refinement sweeps.
    let g = j.transpose() * j + DMatrix::identity(n, n) * damping * damping;
    let lu = g.clone().lu();
    let rhs = j.transpose();
    let mut out = lu.solve(&rhs).expect("damped normal matrix is regular");
    for _ in 0..3 {
        let residual = &rhs - &g * &out;
        out += lu.solve(&residual).expect("damped normal matrix is regular");
    }
    assert_eq!(out.shape(), (n, m));
    out
}

/// Recursive null-space composition over `(J_i, r_i)` levels.
pub fn nsb_oracle(levels: &[(DMatrix<f64>, DVector<f64>)], n: usize, damping: f64) -> DVector<f64> {
    let mut qd = DVector::zeros(n);
    let mut stacked: Option<DMatrix<f64>> = None;
    for (j, r) in levels {
        let term = pinv_oracle(j, damping) * r;
        qd += match &stacked {
            None => term,
            Some(a) => projector_oracle(a) * term,
        };
        stacked = Some(match stacked {
            None => j.clone(),
            Some(a) => {
                let mut s = DMatrix::zeros(a.nrows() + j.nrows(), n);
                s.view_mut((0, 0), (a.nrows(), n)).copy_from(&a);
                s.view_mut((a.nrows(), 0), (j.nrows(), n)).copy_from(j);
                s
            }
        });
    }
    qd
}

#[derive(Debug, Clone)]
pub struct BruteForce {
    /// Bit `j` = `j`-th active set-based task in priority order.
    pub mask: u32,
    pub velocity: DVector<f64>,
    pub n_active: usize,
    pub candidates: usize,
    pub feasible: usize,
}

/// Enumerates every subset of the active set-based tasks, keeps those whose
/// left-out tasks do not move further past their threshold, and returns the
/// largest resulting velocity (ties: fewer tasks, then lower mask).
pub fn brute_force(hierarchy: &TaskHierarchy, readings: &[TaskReading], damping: f64) -> BruteForce {
    let n = hierarchy.joint_count();
    // (task index, target, +1 for an upper violation / -1 for lower)
    let mut active: Vec<(usize, f64, f64)> = Vec::new();
    for (i, (t, r)) in hierarchy.tasks().iter().zip(readings).enumerate() {
        if let Some(b) = t.bounds() {
            let v = r.value[0];
            if v > b.max - b.buffer {
                active.push((i, b.safety_upper, 1.0));
            } else if v < b.min + b.buffer {
                active.push((i, b.safety_lower, -1.0));
            }
        }
    }
    let na = active.len();
    let full = (1u32 << na) - 1;
    let mut kept: Vec<(u32, DVector<f64>)> = Vec::new();
    let mut total = 0;
    for mask in 0..(1u32 << na) {
        let mut levels = Vec::new();
        for (i, (t, r)) in hierarchy.tasks().iter().zip(readings).enumerate() {
            let reference = match active.iter().position(|a| a.0 == i) {
                Some(j) if mask & (1 << j) != 0 => &t.gain * DVector::from_element(1, active[j].1 - r.value[0]),
                Some(_) => continue,
                None if t.is_set_based() => continue,
                None => &t.gain * r.error.as_ref().expect("equality task has an error"),
            };
            levels.push((r.jacobian.clone(), reference));
        }
        let v = nsb_oracle(&levels, n, damping);
        total += 1;
        let ok = mask == full
            || active.iter().enumerate().all(|(j, &(i, _, side))| {
                if mask & (1 << j) != 0 {
                    return true;
                }
                let rate = (readings[i].jacobian.row(0) * &v)[0];
                side * rate <= 1e-9
            });
        if ok {
            kept.push((mask, v));
        }
    }
    let best = kept.iter().map(|(_, v)| v.norm()).fold(f64::NEG_INFINITY, f64::max);
    let feasible = kept.len();
    let (mask, velocity) = kept
        .into_iter()
        .filter(|(_, v)| v.norm() >= best - 1e-12)
        .min_by_key(|(m, _)| (m.count_ones(), *m))
        .expect("the full stack is always kept");
    BruteForce {
        mask,
        velocity,
        n_active: na,
        candidates: total,
        feasible,
    }
}

pub struct Scenario {
    pub chain: KinematicChain,
    pub q: DVector<f64>,
    pub hierarchy: TaskHierarchy,
    pub obstacles: BTreeMap<String, Vector3<f64>>,
    pub targets: BTreeMap<String, FrameTarget>,
}

impl Scenario {
    pub fn readings(&self) -> Vec<TaskReading> {
        let ctx = TaskContext {
            chain: &self.chain,
            q: &self.q,
            tool_to_top: None,
            obstacles: &self.obstacles,
            targets: &self.targets,
        };
        self.hierarchy.evaluate(&ctx).unwrap()
    }
}

/// A random 7-joint chain with `n_active` set-based tasks placed inside
/// their activation band and one position task at a random priority.
pub fn random_scenario<R: Rng>(rng: &mut R, n_active: usize) -> Scenario {
    let chain = random_chain(rng, 7);
    let q = random_q(rng, 7);
    let tool = fk_position(&chain, &q);
    let mut tasks = Vec::new();
    let mut obstacles = BTreeMap::new();
    let mut used = Vec::new();
    for k in 0..n_active {
        let gain = rng.random_range(0.5..3.0);
        if rng.random_bool(0.3) {
            let d = rng.random_range(0.05..0.09);
            let p = tool + random_unit(rng) * d;
            let id = format!("obs{k}");
            obstacles.insert(id.clone(), p);
            let f = TaskFunction::ObstacleDistance {
                frame: ControlFrame::Tool,
                obstacle: id,
            };
            tasks.push(TaskSpec::set_based(format!("dist{k}"), f, SetBounds::lower_only(0.04, 0.06).unwrap(), gain).unwrap());
        } else {
            let joint = loop {
                let j = rng.random_range(0..7);
                if !used.contains(&j) {
                    used.push(j);
                    break j;
                }
            };
            let inside = rng.random_range(0.005..0.095);
            let (min, max) = if rng.random_bool(0.5) {
                (q[joint] - inside, q[joint] + 5.0)
            } else {
                (q[joint] - 5.0, q[joint] + inside)
            };
            let b = SetBounds::with_midpoint_safety(min, max, 0.1).unwrap();
            tasks.push(TaskSpec::set_based(format!("joint{joint}"), TaskFunction::JointValue { joint }, b, gain).unwrap());
        }
    }
    let at = rng.random_range(0..=tasks.len());
    tasks.insert(at, TaskSpec::equality("position", TaskFunction::Position, rng.random_range(0.5..3.0)).unwrap());
    let goal = Isometry3::from_parts(Translation3::from(tool + random_unit(rng) * rng.random_range(0.01..0.3)), UnitQuaternion::identity());
    let targets = BTreeMap::from([(
        "position".to_string(),
        FrameTarget {
            frame: ControlFrame::Tool,
            pose: goal,
        },
    )]);
    let hierarchy = TaskHierarchy::new(tasks, 7).unwrap();
    Scenario {
        chain,
        q,
        hierarchy,
        obstacles,
        targets,
    }
}

/// Number of times each column of `active` switches on, and the number of
/// single-tick blips (on-off-on or off-on-off).
pub fn activation_stats(active: &[bool]) -> (usize, usize) {
    let mut ons = usize::from(active.first().copied().unwrap_or(false));
    ons += active.windows(2).filter(|w| !w[0] && w[1]).count();
    let blips = active.windows(3).filter(|w| w[0] != w[1] && w[1] != w[2]).count();
    (ons, blips)
}

/// Position task alone, λ = 0, constant target, explicit Euler at `dt`:
/// `‖σ̃(t)‖ ≤ ‖σ̃(0)‖·e^(−k_min t) + 10·dt·k_max·‖σ̃(0)‖`.
pub fn convergence_margin(gain: Matrix3<f64>, seed: u64) -> f64 {
    let chain = KinematicChain::reference();
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    let mut q = DVector::from_vec(vec![-1.5708, 3.022, 0.0, 1.027, 0.0, 0.664, -1.5708]);
    for v in q.iter_mut() {
        *v += r.random_range(-0.2..0.2);
    }
    let start = fk_position(&chain, &q);
    let goal = start + random_unit(&mut r) * 0.1;
    let task = TaskSpec::new(
        "position",
        TaskKind::Equality,
        DMatrix::from_column_slice(3, 3, gain.as_slice()),
        TaskFunction::Position,
    )
    .unwrap();
    let h = TaskHierarchy::new(vec![task], 7).unwrap();
    let targets = BTreeMap::from([(
        "position".to_string(),
        FrameTarget {
            frame: ControlFrame::Tool,
            pose: Isometry3::from_parts(Translation3::from(goal), UnitQuaternion::identity()),
        },
    )]);
    let config = SolverConfig {
        damping: 0.0,
        velocity_cap: None,
        ..SolverConfig::default()
    };
    let eig = gain.symmetric_eigenvalues();
    let (kmin, kmax) = (eig.min(), eig.max());
    let dt = 0.01;
    let e0 = (goal - start).norm();
    let mut worst = f64::INFINITY;
    let obstacles = BTreeMap::new();
    for step in 0..800 {
        let t = step as f64 * dt;
        let e = (goal - fk_position(&chain, &q)).norm();
        let bound = e0 * (-kmin * t).exp() + 10.0 * dt * kmax * e0;
        worst = worst.min(bound - e);
        let ctx = TaskContext {
            chain: &chain,
            q: &q,
            tool_to_top: None,
            obstacles: &obstacles,
            targets: &targets,
        };
        let (_, out) = solve_step(&h, &ctx, &config).unwrap();
        q += out.velocity * dt;
    }
    worst
}
