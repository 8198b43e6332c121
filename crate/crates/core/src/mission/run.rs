//! The per-tick control loop.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::mpsc::Receiver;

use nalgebra::{DVector, Vector3};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kinematics::{orientation_error, orientation_error_angle, KinematicChain};
use crate::sim::{SimConfig, WorldState};
use crate::solver::{solve_readings, SolverConfig, StepOutcome};
use crate::tasks::{FrameTarget, TaskContext, TaskReading};

use super::trajectory::{bound_margins, LogRow, LoggedTask, MissionSummary, PhaseRecord, TrajectoryLog};
use super::{MissionCommand, MissionConfig, MissionScript, Phase, PhaseEvent};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MissionState {
    Idle,
    Running,
    Paused,
    StoppedEmergency,
    Completed,
    Failed,
}

impl MissionState {
    pub fn as_str(self) -> &'static str {
        match self {
            MissionState::Idle => "idle",
            MissionState::Running => "running",
            MissionState::Paused => "paused",
            MissionState::StoppedEmergency => "stopped_emergency",
            MissionState::Completed => "completed",
            MissionState::Failed => "failed",
        }
    }

    pub fn is_terminal(self) -> bool {
        matches!(self, MissionState::StoppedEmergency | MissionState::Completed | MissionState::Failed)
    }
}

impl fmt::Display for MissionState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MissionStatus {
    pub state: MissionState,
    pub phase: usize,
    pub fault: Option<String>,
}

impl MissionStatus {
    pub fn idle() -> Self {
        MissionStatus {
            state: MissionState::Idle,
            phase: 0,
            fault: None,
        }
    }
}

/// An operator input as seen by the control loop.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Directive {
    Start(MissionCommand),
    Stop,
    Pause,
    Resume,
    Home,
}

/// Source of operator directives, drained once per tick.
pub trait Inbox {
    fn drain(&mut self, tick: u64) -> Vec<Directive>;
}

pub struct NoInbox;

impl Inbox for NoInbox {
    fn drain(&mut self, _tick: u64) -> Vec<Directive> {
        Vec::new()
    }
}

/// Directives delivered at fixed ticks, for replayable runs.
#[derive(Debug, Clone, Default)]
pub struct ScriptedInbox {
    pending: Vec<(u64, Directive)>,
}

impl ScriptedInbox {
    pub fn new(mut events: Vec<(u64, Directive)>) -> Self {
        events.sort_by_key(|(t, _)| *t);
        ScriptedInbox { pending: events }
    }
}

impl Inbox for ScriptedInbox {
    fn drain(&mut self, tick: u64) -> Vec<Directive> {
        let split = self.pending.partition_point(|(t, _)| *t <= tick);
        self.pending.drain(..split).map(|(_, d)| d).collect()
    }
}

/// Directives arriving from another thread, in arrival order.
pub struct ChannelInbox<'a>(pub &'a Receiver<Directive>);

impl Inbox for ChannelInbox<'_> {
    fn drain(&mut self, _tick: u64) -> Vec<Directive> {
        self.0.try_iter().collect()
    }
}

/// Published after every tick.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TickReport {
    pub tick: u64,
    pub clock: f64,
    pub status: MissionStatus,
    pub phase_name: String,
    pub position_error: f64,
    pub orientation_error: f64,
    /// Ids of the set-based tasks currently active.
    pub active: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct MissionOutcome {
    pub status: MissionStatus,
    pub log: TrajectoryLog,
    pub world: WorldState,
    pub summary: MissionSummary,
    /// Directives refused during the run, with the reason.
    pub rejected: Vec<(u64, Directive, String)>,
}

struct Tracking {
    error: [f64; 6],
    position: f64,
    orientation: f64,
}

fn track(world: &WorldState, chain: &KinematicChain, phase: &Phase) -> Result<Tracking> {
    let offset = match phase.frame {
        crate::tasks::ControlFrame::Tool => nalgebra::Isometry3::identity(),
        crate::tasks::ControlFrame::ObjectTop => world.tool_to_top().ok_or(Error::NotAttached)?,
    };
    let current = world.tool_pose(chain)? * offset;
    let ep = phase.target.translation.vector - current.translation.vector;
    let eo = orientation_error(&phase.target.rotation, &current.rotation);
    Ok(Tracking {
        error: [ep.x, ep.y, ep.z, eo.x, eo.y, eo.z],
        position: ep.norm(),
        orientation: orientation_error_angle(&eo),
    })
}

fn converged(t: &Tracking, phase: &Phase) -> bool {
    t.position < phase.position_tol && t.orientation < phase.orientation_tol
}

struct Loop<'a> {
    script: &'a MissionScript,
    chain: &'a KinematicChain,
    sim: SimConfig,
    solver: SolverConfig,
    logged: Vec<usize>,
    log: TrajectoryLog,
}

impl Loop<'_> {
    fn context<'b>(
        &'b self,
        world: &'b WorldState,
        obstacles: &'b BTreeMap<String, Vector3<f64>>,
        targets: &'b BTreeMap<String, FrameTarget>,
    ) -> TaskContext<'b> {
        TaskContext {
            chain: self.chain,
            q: &world.arm.q,
            tool_to_top: world.tool_to_top(),
            obstacles,
            targets,
        }
    }

    fn targets(&self, phase: &Phase) -> BTreeMap<String, FrameTarget> {
        BTreeMap::from([(
            self.script.tracking_task.clone(),
            FrameTarget {
                frame: phase.frame,
                pose: phase.target,
            },
        )])
    }

    #[allow(clippy::too_many_arguments)]
    fn push_row(
        &mut self,
        world: &WorldState,
        status: &MissionStatus,
        readings: Option<&[TaskReading]>,
        tracking: &Tracking,
        outcome: Option<&StepOutcome>,
        qd: &DVector<f64>,
    ) -> Vec<String> {
        let set_values: Vec<f64> = self
            .logged
            .iter()
            .map(|&i| readings.map_or(f64::NAN, |r| r[i].scalar()))
            .collect();
        let set_active: Vec<bool> = self
            .log
            .set_tasks
            .iter()
            .zip(&set_values)
            .map(|(t, v)| t.is_active(*v))
            .collect();
        let active_mask = set_active
            .iter()
            .enumerate()
            .filter(|(_, a)| **a)
            .fold(0u64, |m, (i, _)| m | 1 << i);
        let (chosen_mask, n_candidates, n_feasible, candidate_norms) = match outcome {
            Some(o) => (
                o.active.hierarchy_mask(&self.script.hierarchy, o.solutions.chosen().mask),
                o.solutions.candidates.len(),
                o.solutions.feasible.len(),
                o.solutions.candidates.iter().map(|c| c.velocity.norm()).collect(),
            ),
            None => (0, 0, 0, Vec::new()),
        };
        let phase_name = self
            .script
            .phases
            .get(status.phase.min(self.script.phases.len() - 1))
            .map_or("", |p| p.name)
            .to_string();
        self.log.rows.push(LogRow {
            tick: world.tick,
            t: world.clock,
            phase: status.phase,
            phase_name,
            state: status.state,
            q: world.arm.q.iter().copied().collect(),
            qd: qd.iter().copied().collect(),
            set_values,
            set_active: set_active.clone(),
            error: tracking.error,
            position_error: tracking.position,
            orientation_error: tracking.orientation,
            active_mask,
            chosen_mask,
            n_candidates,
            n_feasible,
            candidate_norms,
        });
        self.log
            .set_tasks
            .iter()
            .zip(set_active)
            .filter(|(_, a)| *a)
            .map(|(t, _)| t.id.clone())
            .collect()
    }
}

/// Runs `script` from `world` until it completes, fails, is stopped, or
/// the duration cap runs out.
///
/// Each tick: drain the inbox (a stop anywhere in the batch wins), check the
/// current phase for convergence and fire its event, perceive, solve, log
/// and integrate. Paused ticks log the held state with zero velocity and
/// neither perceive nor solve.
pub fn run_mission<R: Rng + ?Sized>(
    script: &MissionScript,
    mut world: WorldState,
    chain: &KinematicChain,
    config: &MissionConfig,
    inbox: &mut dyn Inbox,
    rng: &mut R,
    mut observer: Option<&mut dyn FnMut(&TickReport)>,
) -> MissionOutcome {
    let hierarchy = &script.hierarchy;
    let logged: Vec<usize> = hierarchy.set_based_indices();
    let set_tasks = logged
        .iter()
        .map(|&i| {
            let t = &hierarchy.tasks()[i];
            LoggedTask {
                id: t.id.clone(),
                bounds: *t.bounds().expect("set-based"),
            }
        })
        .collect();
    let mut lp = Loop {
        script,
        chain,
        sim: config.sim_config(),
        solver: config.solver_config(),
        logged,
        log: TrajectoryLog::new(world.arm.q.len(), set_tasks),
    };
    let n = world.arm.q.len();
    let zero = DVector::zeros(n);
    let mut status = MissionStatus {
        state: MissionState::Running,
        phase: 0,
        fault: None,
    };
    let mut rejected = Vec::new();
    let mut phases: Vec<PhaseRecord> = Vec::new();
    let mut phase_start = world.tick;
    let mut converged_ticks = 0u64;
    let mut max_candidates = 0;
    let mut empty_feasible = 0;
    let mut obstacles: BTreeMap<String, Vector3<f64>> =
        world.objects.iter().map(|(id, o)| (id.clone(), o.pose.translation.vector)).collect();
    let start_tick = world.tick;
    let max_ticks = (lp.sim.duration_cap / lp.sim.dt).round() as u64;

    loop {
        let mut stop = false;
        for d in inbox.drain(world.tick) {
            match (&d, status.state) {
                (Directive::Stop, _) => stop = true,
                (Directive::Pause, MissionState::Running) => status.state = MissionState::Paused,
                (Directive::Resume, MissionState::Paused) => status.state = MissionState::Running,
                (Directive::Home, _) => log::info!("home acknowledged at tick {}", world.tick),
                (Directive::Start(_), _) => rejected.push((world.tick, d, "a mission is already running".into())),
                (_, s) => {
                    let reason = format!("not valid while {s}");
                    rejected.push((world.tick, d, reason));
                }
            }
        }
        if stop {
            status.state = MissionState::StoppedEmergency;
        }

        let phase = &script.phases[status.phase];
        let mut tracking = match track(&world, chain, phase) {
            Ok(t) => t,
            Err(e) => {
                status.state = MissionState::Failed;
                status.fault = Some(e.to_string());
                Tracking {
                    error: [f64::NAN; 6],
                    position: f64::NAN,
                    orientation: f64::NAN,
                }
            }
        };

        let mut outcome = None;
        let mut readings = None;
        let mut qd = zero.clone();
        if status.state == MissionState::Running && world.tick - start_tick >= max_ticks {
            status.state = MissionState::Failed;
            status.fault = Some(format!("duration cap of {} s reached", lp.sim.duration_cap));
        }
        if status.state == MissionState::Running && converged(&tracking, phase) {
            converged_ticks += 1;
            if converged_ticks as f64 * lp.sim.dt >= phase.hold - 1e-9 {
                let fired = match &phase.event {
                    Some(PhaseEvent::Grasp(id)) => world.attach(chain, id, &lp.sim),
                    Some(PhaseEvent::Release) => world.detach(),
                    None => Ok(world.clone()),
                };
                match fired {
                    Ok(w) => {
                        world = w;
                        phases.push(PhaseRecord {
                            name: phase.name.to_string(),
                            start_tick: phase_start,
                            end_tick: world.tick,
                            duration: (world.tick - phase_start) as f64 * lp.sim.dt,
                            position_error: tracking.position,
                            orientation_error: tracking.orientation,
                        });
                        phase_start = world.tick;
                        converged_ticks = 0;
                        if status.phase + 1 == script.phases.len() {
                            status.state = MissionState::Completed;
                        } else {
                            status.phase += 1;
                            tracking = track(&world, chain, &script.phases[status.phase])
                                .expect("frame of the next phase is available");
                        }
                    }
                    Err(e) => {
                        status.state = MissionState::Failed;
                        status.fault = Some(e.to_string());
                    }
                }
            }
        }

        let phase = &script.phases[status.phase];
        let targets = lp.targets(phase);
        if status.state == MissionState::Running {
            let perception = world.perceive(&lp.sim, rng);
            obstacles = perception.objects.iter().map(|(id, p)| (id.clone(), p.translation.vector)).collect();
            let solved = hierarchy.evaluate(&lp.context(&world, &obstacles, &targets)).and_then(|r| {
                let o = solve_readings(hierarchy, &r, &lp.solver)?;
                Ok((r, o))
            });
            match solved {
                Ok((r, o)) => {
                    qd = o.velocity.clone();
                    max_candidates = max_candidates.max(o.solutions.candidates.len());
                    if o.solutions.feasible.is_empty() {
                        empty_feasible += 1;
                    }
                    readings = Some(r);
                    outcome = Some(o);
                }
                Err(e) => {
                    status.state = MissionState::Failed;
                    status.fault = Some(e.to_string());
                }
            }
        }
        if readings.is_none() {
            readings = hierarchy.evaluate(&lp.context(&world, &obstacles, &targets)).ok();
        }

        let active = lp.push_row(&world, &status, readings.as_deref(), &tracking, outcome.as_ref(), &qd);
        if let Some(obs) = observer.as_mut() {
            obs(&TickReport {
                tick: world.tick,
                clock: world.clock,
                status: status.clone(),
                phase_name: phase.name.to_string(),
                position_error: tracking.position,
                orientation_error: tracking.orientation,
                active,
            });
        }
        if status.state.is_terminal() {
            break;
        }
        world = match world.step(chain, &qd, &lp.sim) {
            Ok(w) => w,
            Err(e) => {
                status.state = MissionState::Failed;
                status.fault = Some(e.to_string());
                break;
            }
        };
    }

    let last = lp.log.rows.last().expect("at least one tick is logged");
    let summary = MissionSummary {
        command: script.command.to_string(),
        state: status.state,
        fault: status.fault.clone(),
        ticks: world.tick - start_tick,
        sim_time: (world.tick - start_tick) as f64 * lp.sim.dt,
        phases,
        final_position_error: last.position_error,
        final_orientation_error: last.orientation_error,
        bounds: bound_margins(&lp.log),
        max_candidates,
        empty_feasible_ticks: empty_feasible,
    };
    MissionOutcome {
        status,
        log: lp.log,
        world,
        summary,
        rejected,
    }
}
