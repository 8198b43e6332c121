//! High-level actions compiled into waypoint scripts over a task hierarchy,
//! and the closed control loop that executes them.

mod trajectory;
mod run;

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use nalgebra::{DMatrix, Isometry3, Translation3, Unit, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

use crate::config::{parse_toml, read_toml};
use crate::error::{Error, Result};
use crate::kinematics::Pose;
use crate::sim::{Perception, SimConfig, WorldState};
use crate::solver::{SolverConfig, TaskHierarchy};
use crate::tasks::{ControlFrame, SetBounds, TaskFunction, TaskKind, TaskSpec};

pub use trajectory::{
    bound_margins, write_bound_margins, BoundMargin, LogRow, LoggedTask, MissionSummary, PhaseRecord, TrajectoryLog,
    TRAJECTORY_FIXED_COLUMNS,
};
pub use run::{
    run_mission, ChannelInbox, Directive, Inbox, MissionOutcome, MissionState, MissionStatus, NoInbox, ScriptedInbox,
    TickReport,
};

pub const DEFAULT_MISSION_TOML: &str = include_str!("../../config/mission.toml");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Action {
    Move,
    Drink,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SubAction {
    Left,
    Right,
    None,
}

impl Action {
    pub const ALL: [Action; 2] = [Action::Move, Action::Drink];

    pub fn as_str(self) -> &'static str {
        match self {
            Action::Move => "move",
            Action::Drink => "drink",
        }
    }
}

impl SubAction {
    pub const ALL: [SubAction; 3] = [SubAction::Left, SubAction::Right, SubAction::None];

    pub fn as_str(self) -> &'static str {
        match self {
            SubAction::Left => "left",
            SubAction::Right => "right",
            SubAction::None => "none",
        }
    }
}

impl FromStr for Action {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Action::ALL
            .into_iter()
            .find(|a| a.as_str() == s)
            .ok_or_else(|| Error::invalid("action", format!("unknown action '{s}'")))
    }
}

impl FromStr for SubAction {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        SubAction::ALL
            .into_iter()
            .find(|a| a.as_str() == s)
            .ok_or_else(|| Error::invalid("sub-action", format!("unknown sub-action '{s}'")))
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl fmt::Display for SubAction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// What the operator asked for: an object, an action and its sub-action.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct MissionCommand {
    pub object: String,
    pub action: Action,
    pub sub_action: SubAction,
}

impl MissionCommand {
    pub fn new(object: impl Into<String>, action: Action, sub_action: SubAction) -> Self {
        MissionCommand {
            object: object.into(),
            action,
            sub_action,
        }
    }

    /// Move takes a direction, drink takes none.
    pub fn validate(&self) -> Result<()> {
        match (self.action, self.sub_action) {
            (Action::Move, SubAction::Left | SubAction::Right) | (Action::Drink, SubAction::None) => Ok(()),
            (a, s) => Err(Error::invalid("mission command", format!("'{a}' cannot take sub-action '{s}'"))),
        }
    }
}

/// `"<action> <object> [<sub_action>]"`, e.g. `move water right` or
/// `drink coke`.
impl FromStr for MissionCommand {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let words: Vec<&str> = s.split_whitespace().collect();
        let (action, object, sub) = match words.as_slice() {
            [a, o] => (a.parse()?, *o, SubAction::None),
            [a, o, s] => (a.parse()?, *o, s.parse()?),
            _ => {
                return Err(Error::invalid(
                    "mission command",
                    format!("expected '<action> <object> [<sub_action>]', got '{s}'"),
                ))
            }
        };
        let cmd = MissionCommand::new(object, action, sub);
        cmd.validate()?;
        Ok(cmd)
    }
}

impl fmt::Display for MissionCommand {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.sub_action {
            SubAction::None => write!(f, "{} {}", self.action, self.object),
            s => write!(f, "{} {} {}", self.action, self.object, s),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WaypointConfig {
    pub approach_height: f64,
    pub lift_height: f64,
    pub retreat_distance: f64,
    /// Extra clearance over the obstacle activation distance when carrying.
    pub clearance_margin: f64,
    pub left_slot: [f64; 2],
    pub right_slot: [f64; 2],
    pub mouth_standoff: f64,
    pub drink_tilt_deg: f64,
    pub drink_hold: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Tolerances {
    pub position: f64,
    pub orientation: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimSection {
    pub dt: f64,
    pub duration_cap: f64,
    pub velocity_cap: f64,
    pub noise: f64,
    pub grasp_position_tol: f64,
    pub grasp_angle_tol: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSection {
    pub damping: f64,
    pub max_active: usize,
    pub feasibility_tol: f64,
    pub hard_limit_band: f64,
}

/// Which task function a declared task is bound to.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum Evaluator {
    JointValue { joint: usize },
    /// One task per object other than the selected one.
    Obstacle,
    /// The waypoint pose of the current phase.
    Pose,
    Position,
    Orientation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundsConfig {
    #[serde(default = "neg_inf")]
    pub min: f64,
    #[serde(default = "pos_inf")]
    pub max: f64,
    pub buffer: f64,
    #[serde(default)]
    pub safety_lower: Option<f64>,
    #[serde(default)]
    pub safety_upper: Option<f64>,
}

fn neg_inf() -> f64 {
    f64::NEG_INFINITY
}

fn pos_inf() -> f64 {
    f64::INFINITY
}

impl BoundsConfig {
    pub fn build(&self) -> Result<SetBounds> {
        let mid = SetBounds::with_midpoint_safety(self.min, self.max, self.buffer)?;
        SetBounds::new(
            self.min,
            self.max,
            self.buffer,
            self.safety_lower.unwrap_or(mid.safety_lower),
            self.safety_upper.unwrap_or(mid.safety_upper),
        )
    }
}

/// One entry of a task stack in the mission file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskDecl {
    pub id: String,
    pub evaluator: Evaluator,
    /// Present for set-based tasks, absent for equality tasks.
    #[serde(default)]
    pub bounds: Option<BoundsConfig>,
    pub gain: Vec<f64>,
}

/// Mission file schema (see `config/mission.toml`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MissionConfig {
    pub waypoints: WaypointConfig,
    pub tolerances: Tolerances,
    pub sim: SimSection,
    pub solver: SolverSection,
    #[serde(rename = "move")]
    pub move_stack: Vec<TaskDecl>,
    #[serde(rename = "drink")]
    pub drink_stack: Vec<TaskDecl>,
}

impl MissionConfig {
    pub fn from_path(path: &Path) -> Result<Self> {
        let cfg: MissionConfig = read_toml(path)?;
        cfg.validate().map_err(|e| Error::Config {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        Ok(cfg)
    }

    pub fn reference() -> Self {
        let cfg: MissionConfig =
            parse_toml(DEFAULT_MISSION_TOML, Path::new("mission.toml")).expect("bundled mission config parses");
        cfg.validate().expect("bundled mission config is valid");
        cfg
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tolerances.position > 0.0 && self.tolerances.orientation > 0.0) {
            return Err(Error::invalid("tolerances", "phase tolerances must be positive"));
        }
        let w = &self.waypoints;
        let lengths = [
            w.approach_height,
            w.lift_height,
            w.retreat_distance,
            w.clearance_margin,
            w.mouth_standoff,
            w.drink_hold,
        ];
        if lengths.iter().any(|v| !(v.is_finite() && *v >= 0.0)) || !w.drink_tilt_deg.is_finite() {
            return Err(Error::invalid("waypoints", "offsets must be finite and non-negative"));
        }
        self.sim_config().validate()?;
        for (name, stack) in [("move", &self.move_stack), ("drink", &self.drink_stack)] {
            let poses = stack
                .iter()
                .filter(|d| matches!(d.evaluator, Evaluator::Pose | Evaluator::Position | Evaluator::Orientation))
                .count();
            if poses != 1 {
                return Err(Error::invalid(
                    "task stack",
                    format!("'{name}' stack needs exactly one pose, position or orientation task, found {poses}"),
                ));
            }
        }
        Ok(())
    }

    pub fn sim_config(&self) -> SimConfig {
        let s = &self.sim;
        SimConfig {
            dt: s.dt,
            duration_cap: s.duration_cap,
            velocity_cap: s.velocity_cap,
            noise: s.noise,
            grasp_position_tol: s.grasp_position_tol,
            grasp_angle_tol: s.grasp_angle_tol,
        }
    }

    pub fn solver_config(&self) -> SolverConfig {
        SolverConfig {
            damping: self.solver.damping,
            max_active: self.solver.max_active,
            velocity_cap: Some(self.sim.velocity_cap),
            feasibility_tol: self.solver.feasibility_tol,
            hard_limit_band: self.solver.hard_limit_band,
        }
    }

    pub fn stack(&self, action: Action) -> &[TaskDecl] {
        match action {
            Action::Move => &self.move_stack,
            Action::Drink => &self.drink_stack,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub enum PhaseEvent {
    /// Attach the object once the phase converges.
    Grasp(String),
    /// Release the held object once the phase converges.
    Release,
}

/// One waypoint segment.
#[derive(Debug, Clone, PartialEq)]
pub struct Phase {
    pub name: &'static str,
    pub frame: ControlFrame,
    pub target: Pose,
    pub position_tol: f64,
    pub orientation_tol: f64,
    /// Time to stay converged before the phase ends (s).
    pub hold: f64,
    pub event: Option<PhaseEvent>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MissionScript {
    pub command: MissionCommand,
    pub hierarchy: TaskHierarchy,
    /// Id of the equality task that tracks the phase waypoints.
    pub tracking_task: String,
    pub phases: Vec<Phase>,
}

fn build_stack(decls: &[TaskDecl], others: &[String], joints: usize) -> Result<(TaskHierarchy, String)> {
    let mut tasks = Vec::new();
    let mut tracking = None;
    for d in decls {
        let functions: Vec<(String, TaskFunction)> = match &d.evaluator {
            Evaluator::JointValue { joint } => vec![(d.id.clone(), TaskFunction::JointValue { joint: *joint })],
            Evaluator::Obstacle => others
                .iter()
                .map(|o| {
                    let id = if others.len() == 1 { d.id.clone() } else { format!("{}_{o}", d.id) };
                    let f = TaskFunction::ObstacleDistance {
                        frame: ControlFrame::Tool,
                        obstacle: o.clone(),
                    };
                    (id, f)
                })
                .collect(),
            Evaluator::Pose => vec![(d.id.clone(), TaskFunction::Pose)],
            Evaluator::Position => vec![(d.id.clone(), TaskFunction::Position)],
            Evaluator::Orientation => vec![(d.id.clone(), TaskFunction::Orientation)],
        };
        if matches!(d.evaluator, Evaluator::Pose | Evaluator::Position | Evaluator::Orientation) {
            tracking = Some(d.id.clone());
        }
        for (id, f) in functions {
            let m = f.dimension();
            let diag: Vec<f64> = match d.gain.len() {
                1 => vec![d.gain[0]; m],
                len if len == m => d.gain.clone(),
                len => return Err(Error::dims("gain diagonal", m, len)),
            };
            let gain = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(diag));
            let kind = match &d.bounds {
                Some(b) => TaskKind::SetBased(b.build()?),
                None => TaskKind::Equality,
            };
            tasks.push(TaskSpec::new(id, kind, gain, f)?);
        }
    }
    let tracking = tracking.ok_or_else(|| Error::invalid("task stack", "no pose task"))?;
    Ok((TaskHierarchy::new(tasks, joints)?, tracking))
}

fn shifted(pose: &Pose, d: Vector3<f64>) -> Pose {
    Isometry3::from_parts(Translation3::from(pose.translation.vector + d), pose.rotation)
}

/// Largest activation threshold among the obstacle tasks of `h`, or 0.
fn obstacle_threshold(h: &TaskHierarchy) -> f64 {
    h.tasks()
        .iter()
        .filter(|t| matches!(t.function, TaskFunction::ObstacleDistance { .. }))
        .filter_map(|t| t.bounds().map(|b| b.lower_activation()))
        .fold(0.0, f64::max)
}

/// Lowest height, not below `base`, at which a horizontal carry from `from`
/// to `to` keeps every point of `obstacles` at least `clearance` away.
pub fn carry_height(
    from: &Vector3<f64>,
    to: &Vector3<f64>,
    base: f64,
    obstacles: &[Vector3<f64>],
    clearance: f64,
) -> f64 {
    let a = from.xy();
    let ab = to.xy() - a;
    obstacles.iter().fold(base, |h, o| {
        let s = if ab.norm_squared() > 0.0 {
            ((o.xy() - a).dot(&ab) / ab.norm_squared()).clamp(0.0, 1.0)
        } else {
            0.0
        };
        let horizontal = (a + ab * s - o.xy()).norm();
        if horizontal >= clearance {
            h
        } else {
            h.max(o.z + (clearance * clearance - horizontal * horizontal).sqrt())
        }
    })
}

/// Builds the script for `command` from the perceived object and mouth poses.
pub fn compile_mission(
    command: &MissionCommand,
    world: &WorldState,
    perception: &Perception,
    config: &MissionConfig,
) -> Result<MissionScript> {
    command.validate()?;
    let object = world.object(&command.object)?;
    if !object.graspable {
        return Err(Error::invalid("mission command", format!("'{}' is not graspable", command.object)));
    }
    let others: Vec<String> = world.objects.keys().filter(|k| **k != command.object).cloned().collect();
    let (hierarchy, tracking_task) =
        build_stack(config.stack(command.action), &others, world.arm.q.len())?;

    let obj_pose = *perception.object(&command.object)?;
    let w = &config.waypoints;
    let up = Vector3::z();
    let grasp_inv = object.grasp_offset.inverse();
    let grasp = obj_pose * grasp_inv;
    let phase = |name, frame, target, hold, event| Phase {
        name,
        frame,
        target,
        position_tol: config.tolerances.position,
        orientation_tol: config.tolerances.orientation,
        hold,
        event,
    };
    let tool = ControlFrame::Tool;
    let mut phases = vec![
        phase("approach", tool, shifted(&grasp, up * w.approach_height), 0.0, None),
        phase("grasp", tool, grasp, 0.0, Some(PhaseEvent::Grasp(command.object.clone()))),
    ];

    match command.action {
        Action::Move => {
            let [sx, sy] = match command.sub_action {
                SubAction::Left => w.left_slot,
                _ => w.right_slot,
            };
            let slot_obj = Isometry3::from_parts(
                Translation3::new(sx, sy, obj_pose.translation.vector.z),
                obj_pose.rotation,
            );
            let slot_grasp = slot_obj * grasp_inv;
            let retreat = slot_grasp * Translation3::new(0.0, 0.0, -w.retreat_distance);
            let lifted = grasp.translation.vector + up * w.lift_height;
            let clearance = obstacle_threshold(&hierarchy) + w.clearance_margin;
            let others: Vec<Vector3<f64>> = others
                .iter()
                .map(|id| perception.object(id).map(|p| p.translation.vector))
                .collect::<Result<_>>()?;
            let carry = carry_height(&lifted, &slot_grasp.translation.vector, lifted.z, &others, clearance);
            let raise = up * (carry - grasp.translation.vector.z);
            phases.push(phase("lift", tool, shifted(&grasp, raise), 0.0, None));
            phases.push(phase("transfer", tool, shifted(&slot_grasp, raise), 0.0, None));
            if carry > lifted.z {
                phases.push(phase("lower", tool, shifted(&slot_grasp, up * w.lift_height), 0.0, None));
            }
            phases.extend([
                phase("place", tool, slot_grasp, 0.0, Some(PhaseEvent::Release)),
                phase("retreat", tool, retreat, 0.0, None),
            ]);
        }
        Action::Drink => {
            let top = ControlFrame::ObjectTop;
            let top0 = obj_pose * object.top_offset;
            let lifted = shifted(&top0, up * w.lift_height);

            let mouth = perception.mouth.translation.vector;
            let toward = Vector3::new(mouth.x, mouth.y, 0.0);
            if toward.norm() < 1e-9 {
                return Err(Error::invalid("world", "mouth lies on the base axis"));
            }
            let toward = toward.normalize();
            // Yaw the bottle about the vertical so the gripper faces the user.
            let heading = grasp.rotation * Vector3::z();
            let yaw = toward.y.atan2(toward.x) - heading.y.atan2(heading.x);
            let upright = UnitQuaternion::from_axis_angle(&Vector3::z_axis(), yaw) * top0.rotation;
            let cap = mouth - toward * w.mouth_standoff;
            let at_mouth = Isometry3::from_parts(Translation3::from(cap), upright);
            let tilt_axis = Unit::new_normalize(up.cross(&toward));
            let tilted = UnitQuaternion::from_axis_angle(&tilt_axis, w.drink_tilt_deg.to_radians()) * upright;
            let drinking = Isometry3::from_parts(Translation3::from(cap), tilted);
            phases.extend([
                phase("lift", top, lifted, 0.0, None),
                phase("mouth_approach", top, at_mouth, 0.0, None),
                phase("drink", top, drinking, w.drink_hold, None),
                phase("withdraw", top, at_mouth, 0.0, None),
                phase("return", top, lifted, 0.0, None),
                phase("set_down", top, top0, 0.0, Some(PhaseEvent::Release)),
            ]);
        }
    }

    Ok(MissionScript {
        command: command.clone(),
        hierarchy,
        tracking_task,
        phases,
    })
}

/// Object ids bound to obstacle tasks of `script`, by task id.
pub fn obstacle_bindings(script: &MissionScript) -> BTreeMap<String, String> {
    script
        .hierarchy
        .tasks()
        .iter()
        .filter_map(|t| match &t.function {
            TaskFunction::ObstacleDistance { obstacle, .. } => Some((t.id.clone(), obstacle.clone())),
            _ => None,
        })
        .collect()
}
