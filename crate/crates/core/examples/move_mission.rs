//! Runs "move water right" on the default desk and prints the phase log.

use std::time::Instant;

use assistive_arm::kinematics::KinematicChain;
use assistive_arm::mission::{compile_mission, run_mission, MissionCommand, MissionConfig, NoInbox};
use assistive_arm::sim::WorldConfig;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> assistive_arm::Result<()> {
    let text = std::env::args().nth(1).unwrap_or_else(|| "move water right".into());
    let command: MissionCommand = text.parse()?;
    let chain = KinematicChain::reference();
    let world = WorldConfig::default_layout().build(&chain)?;
    let config = MissionConfig::reference();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let perception = world.perceive(&config.sim_config(), &mut rng);
    let script = compile_mission(&command, &world, &perception, &config)?;

    let started = Instant::now();
    let out = run_mission(&script, world, &chain, &config, &mut NoInbox, &mut rng, None);
    let s = &out.summary;
    println!("{}: {} after {:.2} s simulated ({:.2} s wall)", s.command, s.state, s.sim_time, started.elapsed().as_secs_f64());
    if let Some(fault) = &s.fault {
        println!("fault: {fault}");
    }
    for p in &s.phases {
        println!("  {:<15} {:6.2} s  err {:.4} m / {:.4} rad", p.name, p.duration, p.position_error, p.orientation_error);
    }
    for b in &s.bounds {
        println!(
            "  {:<18} range [{:.3}, {:.3}]  margins {:.3} / {:.3}  activations {}",
            b.task, b.lowest, b.highest, b.lower_margin, b.upper_margin, b.activations
        );
    }
    Ok(())
}
