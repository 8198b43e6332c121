//! One solver step with a joint limit about to be violated: the solution
//! tree, which candidates survive the feasibility filter, and the choice.

use std::collections::BTreeMap;

use assistive_arm::kinematics::{Frame, KinematicChain};
use assistive_arm::solver::{solve_step, SolverConfig, TaskHierarchy};
use assistive_arm::tasks::{ControlFrame, FrameTarget, SetBounds, TaskContext, TaskFunction, TaskSpec};
use nalgebra::{DVector, Translation3, Vector3};

fn main() -> assistive_arm::Result<()> {
    let chain = KinematicChain::reference();
    let mut q = DVector::from_vec(vec![-1.5708, 3.022, 0.0, 1.027, 0.0, 0.664, -1.5708]);
    // Push joint 4 into the lower activation band.
    q[3] = 0.76;

    let hierarchy = TaskHierarchy::new(
        vec![
            TaskSpec::set_based(
                "joint4_limit",
                TaskFunction::JointValue { joint: 3 },
                SetBounds::with_midpoint_safety(0.7, 5.5, 0.1)?,
                2.0,
            )?,
            TaskSpec::set_based(
                "obstacle_distance",
                TaskFunction::ObstacleDistance {
                    frame: ControlFrame::Tool,
                    obstacle: "coke".into(),
                },
                SetBounds::lower_only(0.25, 0.03)?,
                2.0,
            )?,
            TaskSpec::equality("pose", TaskFunction::Pose, 1.5)?,
        ],
        chain.joint_count(),
    )?;

    // Ask the tool to pull back towards the base, which folds joint 4.
    let tool = chain.forward_kinematics(&q, Frame::Tool)?;
    let target = Translation3::from(Vector3::new(-0.2, 0.0, 0.1)) * tool;
    let targets = BTreeMap::from([(
        "pose".to_string(),
        FrameTarget {
            frame: ControlFrame::Tool,
            pose: target,
        },
    )]);
    let obstacles = BTreeMap::from([("coke".to_string(), Vector3::new(0.55, 0.15, 0.11))]);
    let ctx = TaskContext {
        chain: &chain,
        q: &q,
        tool_to_top: None,
        obstacles: &obstacles,
        targets: &targets,
    };

    let (readings, step) = solve_step(&hierarchy, &ctx, &SolverConfig::default())?;
    for (t, r) in hierarchy.tasks().iter().zip(&readings) {
        if t.is_set_based() {
            println!("{:<18} value {:.4}", t.id, r.scalar());
        }
    }
    for a in &step.active.set_tasks {
        println!("active: {} ({:?}) -> target {:.3}", hierarchy.tasks()[a.task].id, a.violation, a.target);
    }
    for (i, c) in step.solutions.candidates.iter().enumerate() {
        let tag = if i == step.solutions.chosen {
            "chosen"
        } else if step.solutions.feasible.contains(&i) {
            "feasible"
        } else {
            "rejected"
        };
        println!("mask {:03b}  |qd| {:.4}  {tag}", c.mask, c.velocity.norm());
    }
    println!("qd = {:.4} (scale {:.3})", step.velocity.transpose(), step.scale);
    Ok(())
}
