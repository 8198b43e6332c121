//! Task functions σ(q) and their Jacobians.
//!
//! Equality tasks track a desired value; set-based tasks are scalar and only
//! need to stay inside `[min, max]`. A set-based task carries the five
//! thresholds of [`SetBounds`].

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector, Isometry3, Point3, UnitQuaternion, Vector3};

use crate::error::{Error, Result};
use crate::kinematics::{orientation_error, Frame, Jacobian, KinematicChain, Pose};

/// Below this distance the obstacle gradient direction is undefined.
pub const MIN_OBSTACLE_DISTANCE: f64 = 1e-6;

/// Finite-difference step for the manipulability gradient.
pub const MANIPULABILITY_FD_STEP: f64 = 1e-6;

/// Physical thresholds, activation buffer, and safety targets of a scalar
/// set-based task.
///
/// The task is valid on `[min, max]`, activates above `max - buffer` or
/// below `min + buffer`, and while active is regulated to `safety_upper` or
/// `safety_lower`. A one-sided task uses an infinite `min` or `max`; that
/// side never activates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SetBounds {
    pub min: f64,
    pub max: f64,
    pub buffer: f64,
    pub safety_lower: f64,
    pub safety_upper: f64,
}

impl SetBounds {
    pub fn new(min: f64, max: f64, buffer: f64, safety_lower: f64, safety_upper: f64) -> Result<Self> {
        let b = SetBounds {
            min,
            max,
            buffer,
            safety_lower,
            safety_upper,
        };
        b.validate()?;
        Ok(b)
    }

    /// Bounds with both safety targets midway between the activation and
    /// physical thresholds.
    pub fn with_midpoint_safety(min: f64, max: f64, buffer: f64) -> Result<Self> {
        let lower = if min.is_finite() { min + buffer / 2.0 } else { f64::NEG_INFINITY };
        let upper = if max.is_finite() { max - buffer / 2.0 } else { f64::INFINITY };
        Self::new(min, max, buffer, lower, upper)
    }

    pub fn lower_only(min: f64, buffer: f64) -> Result<Self> {
        Self::with_midpoint_safety(min, f64::INFINITY, buffer)
    }

    pub fn upper_only(max: f64, buffer: f64) -> Result<Self> {
        Self::with_midpoint_safety(f64::NEG_INFINITY, max, buffer)
    }

    pub fn upper_activation(&self) -> f64 {
        self.max - self.buffer
    }

    pub fn lower_activation(&self) -> f64 {
        self.min + self.buffer
    }

    pub fn contains(&self, value: f64) -> bool {
        value >= self.min && value <= self.max
    }

    fn validate(&self) -> Result<()> {
        let bad = |reason: String| Err(Error::invalid("set bounds", reason));
        if self.buffer.is_nan() || self.buffer <= 0.0 || !self.buffer.is_finite() {
            return bad(format!("activation buffer {} must be positive", self.buffer));
        }
        if self.min.is_nan() || self.max.is_nan() || self.min == f64::INFINITY || self.max == f64::NEG_INFINITY {
            return bad(format!("invalid physical range [{}, {}]", self.min, self.max));
        }
        if !self.min.is_finite() && !self.max.is_finite() {
            return bad("at least one physical threshold must be finite".into());
        }
        // min < min+ε < max−ε < max, with infinite sides dropping out
        if !(self.lower_activation() < self.upper_activation()) {
            return bad(format!(
                "activation thresholds overlap: {} >= {}",
                self.lower_activation(),
                self.upper_activation()
            ));
        }
        if self.max.is_finite()
            && !(self.upper_activation() < self.safety_upper && self.safety_upper < self.max)
        {
            return bad(format!(
                "upper safety value {} not inside ({}, {})",
                self.safety_upper,
                self.upper_activation(),
                self.max
            ));
        }
        if self.min.is_finite()
            && !(self.min < self.safety_lower && self.safety_lower < self.lower_activation())
        {
            return bad(format!(
                "lower safety value {} not inside ({}, {})",
                self.safety_lower,
                self.min,
                self.lower_activation()
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TaskKind {
    Equality,
    SetBased(SetBounds),
}

/// Frame a pose-type task or obstacle distance is measured on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ControlFrame {
    Tool,
    /// Top of the grasped object (the bottle cap): tool ∘ attachment ∘ top offset.
    ObjectTop,
}

/// Which rows of the 6×n tool Jacobian enter the manipulability measure.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum JacobianRows {
    Linear,
    Angular,
    Full,
}

/// The task function a [`TaskSpec`] evaluates.
#[derive(Debug, Clone, PartialEq)]
pub enum TaskFunction {
    /// Position of one joint (0-based index).
    JointValue { joint: usize },
    /// Distance from a control frame to a named point obstacle.
    ObstacleDistance { frame: ControlFrame, obstacle: String },
    /// Position of the frame named by the task's target.
    Position,
    /// Orientation error of the frame named by the task's target.
    Orientation,
    /// Position stacked over orientation error (m = 6).
    Pose,
    Manipulability { rows: JacobianRows },
}

impl TaskFunction {
    pub fn dimension(&self) -> usize {
        match self {
            TaskFunction::JointValue { .. }
            | TaskFunction::ObstacleDistance { .. }
            | TaskFunction::Manipulability { .. } => 1,
            TaskFunction::Position | TaskFunction::Orientation => 3,
            TaskFunction::Pose => 6,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TaskSpec {
    pub id: String,
    pub kind: TaskKind,
    pub gain: DMatrix<f64>,
    pub function: TaskFunction,
}

impl TaskSpec {
    pub fn new(id: impl Into<String>, kind: TaskKind, gain: DMatrix<f64>, function: TaskFunction) -> Result<Self> {
        let id = id.into();
        let m = function.dimension();
        if matches!(kind, TaskKind::SetBased(_)) && m != 1 {
            return Err(Error::invalid(
                "task spec",
                format!("set-based task '{id}' must be scalar, has dimension {m}"),
            ));
        }
        if gain.shape() != (m, m) {
            return Err(Error::invalid(
                "task gain",
                format!("'{id}' needs a {m}x{m} gain, got {:?}", gain.shape()),
            ));
        }
        let symmetric = (&gain - gain.transpose()).amax() <= 1e-12 * gain.amax().max(1.0);
        if !symmetric || gain.clone().cholesky().is_none() {
            return Err(Error::invalid(
                "task gain",
                format!("'{id}' gain must be symmetric positive-definite"),
            ));
        }
        Ok(TaskSpec {
            id,
            kind,
            gain,
            function,
        })
    }

    /// Equality task with gain `k·I`.
    pub fn equality(id: impl Into<String>, function: TaskFunction, k: f64) -> Result<Self> {
        let m = function.dimension();
        Self::new(id, TaskKind::Equality, DMatrix::identity(m, m) * k, function)
    }

    pub fn set_based(id: impl Into<String>, function: TaskFunction, bounds: SetBounds, k: f64) -> Result<Self> {
        Self::new(id, TaskKind::SetBased(bounds), DMatrix::from_element(1, 1, k), function)
    }

    pub fn dimension(&self) -> usize {
        self.function.dimension()
    }

    pub fn bounds(&self) -> Option<&SetBounds> {
        match &self.kind {
            TaskKind::SetBased(b) => Some(b),
            TaskKind::Equality => None,
        }
    }

    pub fn is_set_based(&self) -> bool {
        self.bounds().is_some()
    }

    pub fn evaluate(&self, ctx: &TaskContext<'_>) -> Result<TaskReading> {
        let target = || ctx.targets.get(&self.id).ok_or_else(|| Error::MissingTarget(self.id.clone()));
        match &self.function {
            TaskFunction::JointValue { joint } => joint_value_task(ctx.q, *joint),
            TaskFunction::ObstacleDistance { frame, obstacle } => {
                let p = ctx
                    .obstacles
                    .get(obstacle)
                    .ok_or_else(|| Error::UnknownObject(obstacle.clone()))?;
                obstacle_distance_task(ctx.chain, ctx.q, &ctx.frame_offset(*frame)?, obstacle, p)
            }
            TaskFunction::Position => {
                let t = target()?;
                position_task(ctx.chain, ctx.q, &ctx.frame_offset(t.frame)?, &t.pose.translation.vector)
            }
            TaskFunction::Orientation => {
                let t = target()?;
                orientation_task(ctx.chain, ctx.q, &ctx.frame_offset(t.frame)?, &t.pose.rotation)
            }
            TaskFunction::Pose => {
                let t = target()?;
                pose_task(ctx.chain, ctx.q, &ctx.frame_offset(t.frame)?, &t.pose)
            }
            TaskFunction::Manipulability { rows } => manipulability_task(ctx.chain, ctx.q, *rows),
        }
    }
}

/// Desired pose for a pose-type task and the frame it applies to.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrameTarget {
    pub frame: ControlFrame,
    pub pose: Pose,
}

/// Everything a task needs to evaluate at one configuration.
#[derive(Debug, Clone, Copy)]
pub struct TaskContext<'a> {
    pub chain: &'a KinematicChain,
    pub q: &'a DVector<f64>,
    /// Tool-to-object-top transform while an object is held.
    pub tool_to_top: Option<Isometry3<f64>>,
    pub obstacles: &'a BTreeMap<String, Vector3<f64>>,
    /// Pose targets keyed by task id.
    pub targets: &'a BTreeMap<String, FrameTarget>,
}

impl TaskContext<'_> {
    pub fn frame_offset(&self, frame: ControlFrame) -> Result<Isometry3<f64>> {
        match frame {
            ControlFrame::Tool => Ok(Isometry3::identity()),
            ControlFrame::ObjectTop => self.tool_to_top.ok_or(Error::NotAttached),
        }
    }
}

/// Value and Jacobian of a task at one configuration. Equality readings
/// that have a target also carry the task error σ̃.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskReading {
    pub value: DVector<f64>,
    pub jacobian: Jacobian,
    pub error: Option<DVector<f64>>,
}

impl TaskReading {
    pub fn dimension(&self) -> usize {
        self.value.len()
    }

    /// Scalar value of a one-dimensional reading.
    pub fn scalar(&self) -> f64 {
        self.value[0]
    }
}

pub fn joint_value_task(q: &DVector<f64>, joint: usize) -> Result<TaskReading> {
    let n = q.len();
    if joint >= n {
        return Err(Error::IndexOutOfRange {
            what: "joint",
            index: joint,
            len: n,
        });
    }
    let mut jacobian = DMatrix::zeros(1, n);
    jacobian[(0, joint)] = 1.0;
    Ok(TaskReading {
        value: DVector::from_element(1, q[joint]),
        jacobian,
        error: None,
    })
}

fn offset_frame(chain: &KinematicChain, q: &DVector<f64>, offset: &Isometry3<f64>) -> Result<(Pose, Jacobian)> {
    let pose = chain.forward_kinematics(q, Frame::Tool)? * offset;
    let jac = chain.geometric_jacobian(q, &Point3::from(pose.translation.vector), Frame::Tool)?;
    Ok((pose, jac))
}

/// Euclidean distance from a frame rigidly attached to the tool (`offset`)
/// to a point obstacle.
pub fn obstacle_distance_task(
    chain: &KinematicChain,
    q: &DVector<f64>,
    offset: &Isometry3<f64>,
    obstacle_id: &str,
    obstacle: &Vector3<f64>,
) -> Result<TaskReading> {
    if !obstacle.iter().all(|v| v.is_finite()) {
        return Err(Error::NonFinite {
            what: "obstacle position",
        });
    }
    let (pose, jac) = offset_frame(chain, q, offset)?;
    let delta = pose.translation.vector - obstacle;
    let distance = delta.norm();
    if distance < MIN_OBSTACLE_DISTANCE {
        return Err(Error::DegenerateGradient {
            obstacle: obstacle_id.to_string(),
            distance,
        });
    }
    let direction = delta / distance;
    let jacobian = direction.transpose() * jac.fixed_rows::<3>(0);
    Ok(TaskReading {
        value: DVector::from_element(1, distance),
        jacobian: DMatrix::from_row_slice(1, jacobian.ncols(), jacobian.as_slice()),
        error: None,
    })
}

pub fn position_task(
    chain: &KinematicChain,
    q: &DVector<f64>,
    offset: &Isometry3<f64>,
    desired: &Vector3<f64>,
) -> Result<TaskReading> {
    let (pose, jac) = offset_frame(chain, q, offset)?;
    let value = pose.translation.vector;
    Ok(TaskReading {
        value: DVector::from_column_slice(value.as_slice()),
        jacobian: jac.rows(0, 3).into_owned(),
        error: Some(DVector::from_column_slice((desired - value).as_slice())),
    })
}

pub fn orientation_task(
    chain: &KinematicChain,
    q: &DVector<f64>,
    offset: &Isometry3<f64>,
    desired: &UnitQuaternion<f64>,
) -> Result<TaskReading> {
    let (pose, jac) = offset_frame(chain, q, offset)?;
    let err = DVector::from_column_slice(orientation_error(desired, &pose.rotation).as_slice());
    Ok(TaskReading {
        value: err.clone(),
        jacobian: jac.rows(3, 3).into_owned(),
        error: Some(err),
    })
}

/// Position over orientation error of one frame.
pub fn pose_task(
    chain: &KinematicChain,
    q: &DVector<f64>,
    offset: &Isometry3<f64>,
    desired: &Pose,
) -> Result<TaskReading> {
    let (pose, jac) = offset_frame(chain, q, offset)?;
    let p = pose.translation.vector;
    let o = orientation_error(&desired.rotation, &pose.rotation);
    let dp = desired.translation.vector - p;
    Ok(TaskReading {
        value: DVector::from_vec(vec![p.x, p.y, p.z, o.x, o.y, o.z]),
        jacobian: jac,
        error: Some(DVector::from_vec(vec![dp.x, dp.y, dp.z, o.x, o.y, o.z])),
    })
}

/// Product of the singular values of the selected tool-Jacobian rows,
/// i.e. `sqrt(det(J Jᵀ))` (or `sqrt(det(Jᵀ J))` when there are more rows
/// than joints).
pub fn manipulability(chain: &KinematicChain, q: &DVector<f64>, rows: JacobianRows) -> Result<f64> {
    let full = chain.tool_jacobian(q)?;
    let j = match rows {
        JacobianRows::Linear => full.rows(0, 3).into_owned(),
        JacobianRows::Angular => full.rows(3, 3).into_owned(),
        JacobianRows::Full => full,
    };
    let gram = if j.nrows() <= j.ncols() {
        &j * j.transpose()
    } else {
        j.transpose() * &j
    };
    Ok(gram.determinant().max(0.0).sqrt())
}

/// Manipulability measure with a central finite-difference gradient row.
pub fn manipulability_task(chain: &KinematicChain, q: &DVector<f64>, rows: JacobianRows) -> Result<TaskReading> {
    let value = manipulability(chain, q, rows)?;
    let n = q.len();
    let mut jacobian = DMatrix::zeros(1, n);
    let mut probe = q.clone();
    for i in 0..n {
        probe[i] = q[i] + MANIPULABILITY_FD_STEP;
        let plus = manipulability(chain, &probe, rows)?;
        probe[i] = q[i] - MANIPULABILITY_FD_STEP;
        let minus = manipulability(chain, &probe, rows)?;
        probe[i] = q[i];
        jacobian[(0, i)] = (plus - minus) / (2.0 * MANIPULABILITY_FD_STEP);
    }
    Ok(TaskReading {
        value: DVector::from_element(1, value),
        jacobian,
        error: None,
    })
}
