//! Deterministic kinematic world: integrates joint velocities, carries a
//! grasped object along with the tool, and serves noisy "perception" of the
//! object and mouth poses.

use std::collections::BTreeMap;
use std::path::Path;

use nalgebra::{DVector, Isometry3, Vector3};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::config::{parse_toml, read_toml, TransformConfig};
use crate::error::{Error, Result};
use crate::kinematics::{Frame, JointState, KinematicChain, Pose};

pub const DEFAULT_WORLD_TOML: &str = include_str!("../config/default_world.toml");

#[derive(Debug, Clone, PartialEq)]
pub struct WorldObject {
    pub id: String,
    pub label: String,
    pub graspable: bool,
    /// Pose of the object's centroid frame.
    pub pose: Pose,
    /// Object pose expressed in the tool frame when grasped.
    pub grasp_offset: Isometry3<f64>,
    /// Object-to-top (cap) transform.
    pub top_offset: Isometry3<f64>,
}

impl WorldObject {
    /// Tool pose that grasps this object at `pose`.
    pub fn grasp_pose_at(&self, pose: &Pose) -> Pose {
        pose * self.grasp_offset.inverse()
    }

    pub fn grasp_pose(&self) -> Pose {
        self.grasp_pose_at(&self.pose)
    }

    pub fn top_pose(&self) -> Pose {
        self.pose * self.top_offset
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Attachment {
    pub object: String,
    /// Object pose in the tool frame, frozen at grasp time.
    pub tool_to_object: Isometry3<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    /// Control period (s).
    pub dt: f64,
    /// Simulated-time budget of one mission (s).
    pub duration_cap: f64,
    /// Per-joint speed limit (rad/s).
    pub velocity_cap: f64,
    /// Amplitude of the uniform noise on perceived positions (m).
    pub noise: f64,
    pub grasp_position_tol: f64,
    pub grasp_angle_tol: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            dt: 0.01,
            duration_cap: 240.0,
            velocity_cap: 0.8,
            noise: 0.0,
            grasp_position_tol: 0.02,
            grasp_angle_tol: 0.15,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = |v: f64| v.is_finite() && v > 0.0;
        if !positive(self.dt) || !positive(self.duration_cap) || !positive(self.velocity_cap) {
            return Err(Error::invalid("sim config", "dt, duration cap and velocity cap must be positive"));
        }
        if !(self.noise.is_finite() && self.noise >= 0.0) {
            return Err(Error::invalid("sim config", "noise amplitude must be non-negative"));
        }
        Ok(())
    }
}

/// What the perception stand-in reports for one tick.
#[derive(Debug, Clone, PartialEq)]
pub struct Perception {
    pub objects: BTreeMap<String, Pose>,
    pub mouth: Pose,
}

impl Perception {
    pub fn object(&self, id: &str) -> Result<&Pose> {
        self.objects.get(id).ok_or_else(|| Error::UnknownObject(id.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WorldState {
    pub arm: JointState,
    pub objects: BTreeMap<String, WorldObject>,
    pub mouth: Pose,
    pub attachment: Option<Attachment>,
    /// Control ticks integrated so far.
    pub tick: u64,
    /// Simulation time (s).
    pub clock: f64,
}

impl WorldState {
    pub fn object(&self, id: &str) -> Result<&WorldObject> {
        self.objects.get(id).ok_or_else(|| Error::UnknownObject(id.to_string()))
    }

    pub fn tool_pose(&self, chain: &KinematicChain) -> Result<Pose> {
        chain.forward_kinematics(&self.arm.q, Frame::Tool)
    }

    /// Tool-to-top transform of the held object, if any.
    pub fn tool_to_top(&self) -> Option<Isometry3<f64>> {
        let a = self.attachment.as_ref()?;
        let obj = self.objects.get(&a.object)?;
        Some(a.tool_to_object * obj.top_offset)
    }

    /// Integrates `qd` over one control period (explicit Euler).
    pub fn step(&self, chain: &KinematicChain, qd: &DVector<f64>, config: &SimConfig) -> Result<WorldState> {
        if qd.len() != self.arm.q.len() {
            return Err(Error::dims("joint velocity", self.arm.q.len(), qd.len()));
        }
        if !qd.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite { what: "joint velocity" });
        }
        let mut next = self.clone();
        next.arm.q = &self.arm.q + qd * config.dt;
        next.arm.qd = qd.clone();
        next.tick += 1;
        next.clock = next.tick as f64 * config.dt;
        if let Some(a) = &next.attachment {
            let tool = chain.forward_kinematics(&next.arm.q, Frame::Tool)?;
            let obj = next.objects.get_mut(&a.object).expect("attached object exists");
            obj.pose = tool * a.tool_to_object;
        }
        Ok(next)
    }

    /// Object and mouth poses as seen by the perception stand-in.
    ///
    /// With zero noise this is the ground truth and draws nothing from `rng`.
    pub fn perceive<R: Rng + ?Sized>(&self, config: &SimConfig, rng: &mut R) -> Perception {
        let mut jitter = |pose: &Pose| {
            if config.noise == 0.0 {
                return *pose;
            }
            let a = config.noise;
            let d = Vector3::new(rng.random_range(-a..=a), rng.random_range(-a..=a), rng.random_range(-a..=a));
            let mut p = *pose;
            p.translation.vector += d;
            p
        };
        let objects = self.objects.iter().map(|(id, o)| (id.clone(), jitter(&o.pose))).collect();
        let mouth = jitter(&self.mouth);
        Perception { objects, mouth }
    }

    /// Rigidly attaches `id` to the tool if the tool is within the grasp
    /// tolerances of the object's grasp pose.
    pub fn attach(&self, chain: &KinematicChain, id: &str, config: &SimConfig) -> Result<WorldState> {
        if self.attachment.is_some() {
            return Err(Error::invalid("attach", "an object is already held"));
        }
        let obj = self.object(id)?;
        if !obj.graspable {
            return Err(Error::invalid("attach", format!("'{id}' is not graspable")));
        }
        let tool = self.tool_pose(chain)?;
        let grasp = obj.grasp_pose();
        let distance = (tool.translation.vector - grasp.translation.vector).norm();
        let angle = tool.rotation.angle_to(&grasp.rotation);
        if distance > config.grasp_position_tol || angle > config.grasp_angle_tol {
            return Err(Error::GraspFailure {
                object: id.to_string(),
                distance,
                angle,
            });
        }
        let mut next = self.clone();
        next.attachment = Some(Attachment {
            object: id.to_string(),
            tool_to_object: tool.inverse() * obj.pose,
        });
        Ok(next)
    }

    pub fn detach(&self) -> Result<WorldState> {
        if self.attachment.is_none() {
            return Err(Error::NotAttached);
        }
        let mut next = self.clone();
        next.attachment = None;
        Ok(next)
    }
}

/// World layout file schema (see `config/default_world.toml`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorldConfig {
    pub arm: ArmConfig,
    pub mouth: TransformConfig,
    #[serde(rename = "object")]
    pub objects: Vec<ObjectConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArmConfig {
    /// Initial joint angles (rad).
    pub home: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObjectConfig {
    pub id: String,
    #[serde(default)]
    pub label: String,
    #[serde(default = "default_true")]
    pub graspable: bool,
    pub pose: TransformConfig,
    pub grasp_offset: TransformConfig,
    #[serde(default)]
    pub top_offset: TransformConfig,
}

fn default_true() -> bool {
    true
}

impl WorldConfig {
    pub fn from_path(path: &Path) -> Result<Self> {
        read_toml(path)
    }

    pub fn default_layout() -> Self {
        parse_toml(DEFAULT_WORLD_TOML, Path::new("default_world.toml")).expect("bundled world config parses")
    }

    pub fn build(&self, chain: &KinematicChain) -> Result<WorldState> {
        if self.arm.home.len() != chain.joint_count() {
            return Err(Error::dims("home configuration", chain.joint_count(), self.arm.home.len()));
        }
        let mut objects = BTreeMap::new();
        for o in &self.objects {
            let obj = WorldObject {
                id: o.id.clone(),
                label: o.label.clone(),
                graspable: o.graspable,
                pose: o.pose.to_isometry()?,
                grasp_offset: o.grasp_offset.to_isometry()?,
                top_offset: o.top_offset.to_isometry()?,
            };
            if objects.insert(o.id.clone(), obj).is_some() {
                return Err(Error::invalid("world config", format!("duplicate object id '{}'", o.id)));
            }
        }
        Ok(WorldState {
            arm: JointState::at_rest(DVector::from_vec(self.arm.home.clone())),
            objects,
            mouth: self.mouth.to_isometry()?,
            attachment: None,
            tick: 0,
            clock: 0.0,
        })
    }
}
