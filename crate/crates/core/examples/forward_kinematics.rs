//! Tool pose, Jacobian and manipulability of the reference arm at its home
//! configuration, plus a finite-difference check of the Jacobian.

use assistive_arm::kinematics::{Frame, KinematicChain};
use assistive_arm::sim::WorldConfig;
use assistive_arm::tasks::{manipulability, JacobianRows};
use nalgebra::DVector;

fn main() -> assistive_arm::Result<()> {
    let chain = KinematicChain::reference();
    let world = WorldConfig::default_layout().build(&chain)?;
    let q = world.arm.q.clone();

    let tool = chain.forward_kinematics(&q, Frame::Tool)?;
    let (roll, pitch, yaw) = tool.rotation.euler_angles();
    println!("q     = {:.4}", q.transpose());
    println!("tool  = {:.4}", tool.translation.vector.transpose());
    println!("rpy   = ({roll:.4}, {pitch:.4}, {yaw:.4})");

    let j = chain.tool_jacobian(&q)?;
    println!("J (6x{}) = {:.4}", j.ncols(), j);

    // Linear rows against central differences of the tool position.
    let h = 1e-6;
    let mut worst: f64 = 0.0;
    for k in 0..q.len() {
        let mut dq = DVector::zeros(q.len());
        dq[k] = h;
        let plus = chain.forward_kinematics(&(&q + &dq), Frame::Tool)?.translation.vector;
        let minus = chain.forward_kinematics(&(&q - &dq), Frame::Tool)?.translation.vector;
        let fd = (plus - minus) / (2.0 * h);
        for r in 0..3 {
            worst = worst.max((fd[r] - j[(r, k)]).abs());
        }
    }
    println!("max |J_lin - finite diff| = {worst:.2e}");

    for rows in [JacobianRows::Linear, JacobianRows::Angular, JacobianRows::Full] {
        println!("manipulability {rows:?}: {:.5}", manipulability(&chain, &q, rows)?);
    }
    Ok(())
}
