//! Serial-chain kinematics: forward kinematics, geometric Jacobians, and the
//! pseudoinverse / null-space algebra the task solver is built on.
//!
//! A chain is a list of revolute joints in base-to-tool order. Joint `i`
//! sits at `origin_i` relative to the previous joint frame and rotates about
//! its own `axis_i`, so the frame of joint `i` is
//!
//! ```text
//! T_i = T_{i-1} * origin_i * Rot(axis_i, q_i)
//! ```
//!
//! and the tool frame is `T_{n-1} * tool_offset`.

mod chain_config;
mod linalg;

pub use chain_config::{ChainConfig, JointConfig, REFERENCE_CHAIN_TOML};
pub use linalg::{damped_pseudoinverse, exact_pseudoinverse, null_space_projector, PINV_RTOL};

use nalgebra::{DMatrix, DVector, Isometry3, Point3, Unit, UnitQuaternion, Vector3};

use crate::error::{Error, Result};

/// Tolerance on joint-axis norms.
pub const AXIS_NORM_TOL: f64 = 1e-12;

/// Position and orientation of a frame in base coordinates.
pub type Pose = Isometry3<f64>;

/// A task Jacobian: `task_dim` rows by `joint_dim` columns.
pub type Jacobian = DMatrix<f64>;

#[derive(Debug, Clone, PartialEq)]
pub struct Joint {
    pub name: String,
    pub axis: Unit<Vector3<f64>>,
    pub origin: Isometry3<f64>,
}

impl Joint {
    /// Builds a joint, checking that `axis` is already unit length.
    pub fn new(name: impl Into<String>, axis: Vector3<f64>, origin: Isometry3<f64>) -> Result<Self> {
        let norm = axis.norm();
        if !norm.is_finite() || (norm - 1.0).abs() > AXIS_NORM_TOL {
            return Err(Error::invalid("joint axis", format!("norm {norm} is not 1")));
        }
        Ok(Joint {
            name: name.into(),
            axis: Unit::new_unchecked(axis),
            origin,
        })
    }
}

/// Which frame of the chain a query refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Frame {
    /// The frame of joint `i` (0-based), after its rotation.
    Joint(usize),
    Tool,
}

/// Joint positions and velocities of the arm.
#[derive(Debug, Clone, PartialEq)]
pub struct JointState {
    pub q: DVector<f64>,
    pub qd: DVector<f64>,
}

impl JointState {
    pub fn at_rest(q: DVector<f64>) -> Self {
        let n = q.len();
        JointState {
            q,
            qd: DVector::zeros(n),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KinematicChain {
    joints: Vec<Joint>,
    tool_offset: Isometry3<f64>,
}

impl KinematicChain {
    pub fn new(joints: Vec<Joint>, tool_offset: Isometry3<f64>) -> Result<Self> {
        if joints.is_empty() {
            return Err(Error::invalid("kinematic chain", "needs at least one joint"));
        }
        let qn = tool_offset.rotation.quaternion().norm();
        if (qn - 1.0).abs() > crate::config::UNIT_QUATERNION_TOL {
            return Err(Error::invalid(
                "tool offset",
                format!("rotation quaternion norm {qn} is not 1"),
            ));
        }
        Ok(KinematicChain {
            joints,
            tool_offset,
        })
    }

    pub fn joint_count(&self) -> usize {
        self.joints.len()
    }

    pub fn joints(&self) -> &[Joint] {
        &self.joints
    }

    pub fn tool_offset(&self) -> &Isometry3<f64> {
        &self.tool_offset
    }

    fn check_q(&self, q: &DVector<f64>) -> Result<()> {
        if q.len() != self.joints.len() {
            return Err(Error::dims("joint vector", self.joints.len(), q.len()));
        }
        Ok(())
    }

    fn last_joint(&self, frame: Frame) -> Result<usize> {
        match frame {
            Frame::Tool => Ok(self.joints.len() - 1),
            Frame::Joint(i) if i < self.joints.len() => Ok(i),
            Frame::Joint(i) => Err(Error::IndexOutOfRange {
                what: "frame",
                index: i,
                len: self.joints.len(),
            }),
        }
    }

    /// Poses of every joint frame (after rotation) plus the tool frame last.
    pub fn frames(&self, q: &DVector<f64>) -> Result<Vec<Pose>> {
        self.check_q(q)?;
        let mut out = Vec::with_capacity(self.joints.len() + 1);
        let mut current = Isometry3::identity();
        for (joint, &angle) in self.joints.iter().zip(q.iter()) {
            current = current
                * joint.origin
                * UnitQuaternion::from_axis_angle(&joint.axis, angle);
            out.push(current);
        }
        out.push(current * self.tool_offset);
        Ok(out)
    }

    pub fn forward_kinematics(&self, q: &DVector<f64>, frame: Frame) -> Result<Pose> {
        let last = self.last_joint(frame)?;
        let frames = self.frames(q)?;
        Ok(match frame {
            Frame::Tool => frames[self.joints.len()],
            Frame::Joint(_) => frames[last],
        })
    }

    /// 6×n geometric Jacobian of a point rigidly attached to `frame`.
    ///
    /// Rows 0..3 map joint velocities to the linear velocity of `point`
    /// (base coordinates); rows 3..6 to the angular velocity of the frame.
    /// Columns of joints past `frame` are zero.
    pub fn geometric_jacobian(
        &self,
        q: &DVector<f64>,
        point: &Point3<f64>,
        frame: Frame,
    ) -> Result<Jacobian> {
        let last = self.last_joint(frame)?;
        let frames = self.frames(q)?;
        let n = self.joints.len();
        let mut jac = DMatrix::zeros(6, n);
        for (i, joint) in self.joints.iter().enumerate().take(last + 1) {
            // the rotation about the joint's own axis leaves that axis fixed
            let axis = frames[i].rotation * joint.axis.into_inner();
            let origin = frames[i].translation.vector;
            let lever = point.coords - origin;
            let linear = axis.cross(&lever);
            jac.fixed_view_mut::<3, 1>(0, i).copy_from(&linear);
            jac.fixed_view_mut::<3, 1>(3, i).copy_from(&axis);
        }
        Ok(jac)
    }

    /// Jacobian of the tool point.
    pub fn tool_jacobian(&self, q: &DVector<f64>) -> Result<Jacobian> {
        let tool = self.forward_kinematics(q, Frame::Tool)?;
        self.geometric_jacobian(q, &Point3::from(tool.translation.vector), Frame::Tool)
    }
}

/// Orientation error between a desired and current attitude.
///
/// Returns the vector part of `desired * current⁻¹`, sign-normalized so the
/// scalar part is non-negative. Its norm is `sin(θ/2)` of the relative
/// rotation angle θ.
pub fn orientation_error(desired: &UnitQuaternion<f64>, current: &UnitQuaternion<f64>) -> Vector3<f64> {
    let err = desired * current.inverse();
    let q = err.quaternion();
    if q.w < 0.0 {
        -q.imag()
    } else {
        q.imag()
    }
}

/// Rotation angle in `[0, π]` encoded by an [`orientation_error`] vector.
pub fn orientation_error_angle(err: &Vector3<f64>) -> f64 {
    2.0 * err.norm().min(1.0).asin()
}
