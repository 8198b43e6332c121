//! Prioritized closed-loop inverse kinematics with set-based tasks.
//!
//! Each tick the solver
//!
//! 1. builds the active stack: every equality task plus every set-based
//!    task past one of its activation thresholds,
//! 2. computes one null-space-based velocity per subset of the active
//!    set-based tasks (`2^n_a` candidates, ascending bitmask),
//! 3. keeps the candidates that move every omitted active task away from
//!    its violated bound (the all-tasks candidate always stays),
//! 4. returns the feasible candidate of highest norm.
//!
//! Bit `j` of a candidate mask refers to the `j`-th entry of
//! [`ActiveStack::set_tasks`].

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::kinematics::{damped_pseudoinverse, null_space_projector};
use crate::tasks::{TaskContext, TaskReading, TaskSpec};

/// Norms within this distance of the maximum count as ties.
pub const NORM_TIE_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    /// λ of the damped pseudoinverse used for task velocities.
    pub damping: f64,
    /// Largest number of simultaneously active set-based tasks.
    pub max_active: usize,
    /// Per-joint speed limit (rad/s); the output is scaled uniformly to meet it.
    pub velocity_cap: Option<f64>,
    /// Slack on the sign test of the feasibility filter.
    pub feasibility_tol: f64,
    /// A set-based reading further than this outside `[min, max]` is a fault.
    pub hard_limit_band: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            damping: 0.01,
            max_active: 8,
            velocity_cap: Some(0.8),
            feasibility_tol: 1e-9,
            hard_limit_band: 0.5,
        }
    }
}

/// Tasks in priority order, index 0 highest.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskHierarchy {
    tasks: Vec<TaskSpec>,
    joint_count: usize,
}

impl TaskHierarchy {
    pub fn new(tasks: Vec<TaskSpec>, joint_count: usize) -> Result<Self> {
        for (i, t) in tasks.iter().enumerate() {
            if tasks[..i].iter().any(|o| o.id == t.id) {
                return Err(Error::invalid("task hierarchy", format!("duplicate task id '{}'", t.id)));
            }
        }
        let equality_rows: usize = tasks.iter().filter(|t| !t.is_set_based()).map(|t| t.dimension()).sum();
        if equality_rows > joint_count {
            return Err(Error::OverConstrained {
                rows: equality_rows,
                joints: joint_count,
            });
        }
        Ok(TaskHierarchy { tasks, joint_count })
    }

    pub fn tasks(&self) -> &[TaskSpec] {
        &self.tasks
    }

    pub fn len(&self) -> usize {
        self.tasks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tasks.is_empty()
    }

    pub fn joint_count(&self) -> usize {
        self.joint_count
    }

    pub fn task(&self, id: &str) -> Option<&TaskSpec> {
        self.tasks.iter().find(|t| t.id == id)
    }

    /// Hierarchy indices of the set-based tasks, in priority order.
    pub fn set_based_indices(&self) -> Vec<usize> {
        (0..self.tasks.len()).filter(|&i| self.tasks[i].is_set_based()).collect()
    }

    pub fn evaluate(&self, ctx: &TaskContext<'_>) -> Result<Vec<TaskReading>> {
        self.tasks.iter().map(|t| t.evaluate(ctx)).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Violation {
    Upper,
    Lower,
}

/// A set-based task that crossed an activation threshold and is now
/// regulated towards its safety value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ActiveSetTask {
    /// Index into the hierarchy.
    pub task: usize,
    pub violation: Violation,
    pub target: f64,
}

/// The active hierarchy 𝒜: all equality tasks (implicit) plus the active
/// set-based tasks listed here in priority order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ActiveStack {
    pub set_tasks: Vec<ActiveSetTask>,
}

impl ActiveStack {
    pub fn n_active(&self) -> usize {
        self.set_tasks.len()
    }

    /// Mask over the hierarchy's set-based tasks (bit = ordinal among them)
    /// of the active tasks whose bit is set in `local_mask`.
    pub fn hierarchy_mask(&self, hierarchy: &TaskHierarchy, local_mask: u32) -> u64 {
        let ordinals = hierarchy.set_based_indices();
        self.set_tasks
            .iter()
            .enumerate()
            .filter(|(j, _)| local_mask & (1 << j) != 0)
            .map(|(_, a)| 1u64 << ordinals.iter().position(|&i| i == a.task).expect("active task is set-based"))
            .fold(0, |acc, b| acc | b)
    }

    pub fn full_mask(&self) -> u32 {
        if self.set_tasks.is_empty() {
            0
        } else {
            u32::MAX >> (32 - self.set_tasks.len())
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Candidate {
    pub mask: u32,
    pub velocity: DVector<f64>,
}

/// Solution tree 𝒮, feasible subset 𝒫 (indices into `candidates`), and the
/// chosen member.
#[derive(Debug, Clone, PartialEq)]
pub struct SolutionSet {
    pub candidates: Vec<Candidate>,
    pub feasible: Vec<usize>,
    pub chosen: usize,
}

impl SolutionSet {
    pub fn chosen(&self) -> &Candidate {
        &self.candidates[self.chosen]
    }
}

/// One level of a prioritized stack: its Jacobian and the task-space
/// velocity it should realize (`σ̇_d + K σ̃`).
#[derive(Debug, Clone, Copy)]
pub struct StackLevel<'a> {
    pub jacobian: &'a DMatrix<f64>,
    pub reference: &'a DVector<f64>,
}

/// Null-space-based composition
/// `q̇ = q̇_1 + N_1 q̇_2 + … + N_{1,h−1} q̇_h` with `q̇_i = J_i† r_i`.
///
/// Each `N_{1,i}` is the exact projector onto the null space of the
/// stacked Jacobians of levels `1..=i`.
pub fn clik_velocity(levels: &[StackLevel<'_>], joints: usize, damping: f64) -> Result<DVector<f64>> {
    let mut qd = DVector::zeros(joints);
    let mut augmented = DMatrix::<f64>::zeros(0, joints);
    let mut projector: Option<DMatrix<f64>> = None;
    for (i, level) in levels.iter().enumerate() {
        let (m, n) = level.jacobian.shape();
        if n != joints {
            return Err(Error::dims("task Jacobian columns", joints, n));
        }
        if level.reference.len() != m {
            return Err(Error::dims("task reference", m, level.reference.len()));
        }
        let qd_i = damped_pseudoinverse(level.jacobian, damping) * level.reference;
        match &projector {
            None => qd += qd_i,
            Some(p) => qd += p * qd_i,
        }
        if i + 1 < levels.len() {
            let rows = augmented.nrows();
            if rows + m > joints {
                return Err(Error::OverConstrained {
                    rows: rows + m,
                    joints,
                });
            }
            augmented = augmented.insert_rows(rows, m, 0.0);
            augmented.view_mut((rows, 0), (m, n)).copy_from(level.jacobian);
            projector = Some(null_space_projector(&augmented));
        }
    }
    Ok(qd)
}

/// Step 1: the active hierarchy.
pub fn build_active_stack(
    hierarchy: &TaskHierarchy,
    readings: &[TaskReading],
    config: &SolverConfig,
) -> Result<ActiveStack> {
    check_readings(hierarchy, readings)?;
    let mut set_tasks = Vec::new();
    for (i, (task, reading)) in hierarchy.tasks.iter().zip(readings).enumerate() {
        let Some(bounds) = task.bounds() else { continue };
        if reading.dimension() != 1 {
            return Err(Error::dims("set-based reading", 1, reading.dimension()));
        }
        let sigma = reading.scalar();
        let (lower, upper) = (bounds.min - config.hard_limit_band, bounds.max + config.hard_limit_band);
        if !(sigma >= lower && sigma <= upper) {
            return Err(Error::HardLimitBreach {
                task: task.id.clone(),
                value: sigma,
                lower,
                upper,
            });
        }
        if sigma > bounds.upper_activation() {
            set_tasks.push(ActiveSetTask {
                task: i,
                violation: Violation::Upper,
                target: bounds.safety_upper,
            });
        } else if sigma < bounds.lower_activation() {
            set_tasks.push(ActiveSetTask {
                task: i,
                violation: Violation::Lower,
                target: bounds.safety_lower,
            });
        }
    }
    Ok(ActiveStack { set_tasks })
}

fn check_readings(hierarchy: &TaskHierarchy, readings: &[TaskReading]) -> Result<()> {
    if readings.len() != hierarchy.len() {
        return Err(Error::dims("task readings", hierarchy.len(), readings.len()));
    }
    for (t, r) in hierarchy.tasks.iter().zip(readings) {
        if r.dimension() != t.dimension() || r.jacobian.nrows() != t.dimension() {
            return Err(Error::dims("task reading", t.dimension(), r.dimension()));
        }
    }
    Ok(())
}

/// `K σ̃` for every task as it would enter a stack containing all active
/// tasks. Inactive set-based tasks get `None`.
fn references(hierarchy: &TaskHierarchy, readings: &[TaskReading], active: &ActiveStack) -> Result<Vec<Option<DVector<f64>>>> {
    let mut out = Vec::with_capacity(hierarchy.len());
    for (i, (task, reading)) in hierarchy.tasks.iter().zip(readings).enumerate() {
        if task.is_set_based() {
            out.push(active.set_tasks.iter().find(|a| a.task == i).map(|a| {
                let err = DVector::from_element(1, a.target - reading.scalar());
                &task.gain * err
            }));
        } else {
            let err = reading.error.as_ref().ok_or_else(|| Error::MissingTarget(task.id.clone()))?;
            out.push(Some(&task.gain * err));
        }
    }
    Ok(out)
}

/// Step 2: one velocity per subset of active set-based tasks.
pub fn enumerate_solutions(
    hierarchy: &TaskHierarchy,
    readings: &[TaskReading],
    active: &ActiveStack,
    config: &SolverConfig,
) -> Result<Vec<Candidate>> {
    check_readings(hierarchy, readings)?;
    let n_a = active.n_active();
    if n_a > config.max_active || n_a >= 32 {
        return Err(Error::CombinatorialLimit {
            active: n_a,
            limit: config.max_active,
        });
    }
    let refs = references(hierarchy, readings, active)?;
    let mut candidates = Vec::with_capacity(1 << n_a);
    for mask in 0u32..(1u32 << n_a) {
        let levels: Vec<StackLevel<'_>> = hierarchy
            .tasks
            .iter()
            .enumerate()
            .filter(|&(i, t)| {
                !t.is_set_based()
                    || active
                        .set_tasks
                        .iter()
                        .position(|a| a.task == i)
                        .is_some_and(|j| mask & (1 << j) != 0)
            })
            .map(|(i, _)| StackLevel {
                jacobian: &readings[i].jacobian,
                reference: refs[i].as_ref().expect("member tasks have a reference"),
            })
            .collect();
        let velocity = clik_velocity(&levels, hierarchy.joint_count, config.damping)?;
        candidates.push(Candidate { mask, velocity });
    }
    Ok(candidates)
}

/// Step 3: indices of the candidates that fulfil every active set-based task
/// they leave out of their stack.
pub fn filter_feasible(candidates: &[Candidate], readings: &[TaskReading], active: &ActiveStack, tol: f64) -> Vec<usize> {
    let full = active.full_mask();
    candidates
        .iter()
        .enumerate()
        .filter(|(_, c)| {
            c.mask == full
                || active.set_tasks.iter().enumerate().all(|(j, a)| {
                    if c.mask & (1 << j) != 0 {
                        return true;
                    }
                    let rate = (readings[a.task].jacobian.row(0) * &c.velocity)[0];
                    match a.violation {
                        Violation::Upper => rate <= tol,
                        Violation::Lower => rate >= -tol,
                    }
                })
        })
        .map(|(i, _)| i)
        .collect()
}

/// Step 4: the highest-norm feasible candidate. Near-ties go to the
/// candidate with fewer tasks in its stack, then the lower mask.
pub fn choose_solution(candidates: &[Candidate], feasible: &[usize]) -> Option<usize> {
    let best = feasible
        .iter()
        .map(|&i| candidates[i].velocity.norm())
        .fold(f64::NEG_INFINITY, f64::max);
    feasible
        .iter()
        .copied()
        .filter(|&i| candidates[i].velocity.norm() >= best - NORM_TIE_TOL)
        .min_by_key(|&i| (candidates[i].mask.count_ones(), candidates[i].mask))
}

/// Scales `qd` so no joint exceeds `cap`; returns the factor applied.
pub fn apply_velocity_cap(qd: &mut DVector<f64>, cap: Option<f64>) -> f64 {
    let Some(cap) = cap else { return 1.0 };
    let peak = qd.amax();
    if peak > cap {
        let s = cap / peak;
        *qd *= s;
        s
    } else {
        1.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub active: ActiveStack,
    pub solutions: SolutionSet,
    /// The chosen velocity after the speed cap.
    pub velocity: DVector<f64>,
    pub scale: f64,
}

/// Steps 1–4 on already evaluated readings.
pub fn solve_readings(hierarchy: &TaskHierarchy, readings: &[TaskReading], config: &SolverConfig) -> Result<StepOutcome> {
    if readings.iter().any(|r| !r.value.iter().chain(r.jacobian.iter()).all(|v| v.is_finite())) {
        return Err(Error::NonFinite { what: "task reading" });
    }
    let active = build_active_stack(hierarchy, readings, config)?;
    let candidates = enumerate_solutions(hierarchy, readings, &active, config)?;
    let feasible = filter_feasible(&candidates, readings, &active, config.feasibility_tol);
    let chosen = choose_solution(&candidates, &feasible).expect("the full-stack candidate is always feasible");
    let mut velocity = candidates[chosen].velocity.clone();
    let scale = apply_velocity_cap(&mut velocity, config.velocity_cap);
    Ok(StepOutcome {
        active,
        solutions: SolutionSet {
            candidates,
            feasible,
            chosen,
        },
        velocity,
        scale,
    })
}

/// Evaluates the hierarchy at `ctx` and runs one solver step.
pub fn solve_step(
    hierarchy: &TaskHierarchy,
    ctx: &TaskContext<'_>,
    config: &SolverConfig,
) -> Result<(Vec<TaskReading>, StepOutcome)> {
    if !ctx.q.iter().all(|v| v.is_finite()) {
        return Err(Error::NonFinite { what: "joint vector" });
    }
    let readings = hierarchy.evaluate(ctx)?;
    let outcome = solve_readings(hierarchy, &readings, config)?;
    Ok((readings, outcome))
}
