//! Brings a bottle to the user's mouth, tilts it and puts it back. Writes
//! the run artifacts to the directory given as the first argument
//! (default `out/drink`).

use std::path::PathBuf;

use assistive_arm::harness::{run_command, write_artifacts, Setup};
use assistive_arm::mission::{MissionCommand, NoInbox};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> assistive_arm::Result<()> {
    let out = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "out/drink".into()));
    let object = std::env::args().nth(2).unwrap_or_else(|| "water".into());
    let setup = Setup::reference();
    let command: MissionCommand = format!("drink {object}").parse()?;
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let outcome = run_command(&setup, &command, &mut rng, &mut NoInbox, None)?;
    let s = &outcome.summary;
    println!("{}: {} in {:.2} s", s.command, s.state, s.sim_time);
    for p in &s.phases {
        println!("  {:<15} {:6.2} s  cap err {:.4} m / {:.4} rad", p.name, p.duration, p.position_error, p.orientation_error);
    }
    for b in &s.bounds {
        println!(
            "  {:<18} [{:.3}, {:.3}] within {}  activations {}",
            b.task,
            b.lowest,
            b.highest,
            b.within_bounds(),
            b.activations
        );
    }
    let a = write_artifacts(&out, &outcome)?;
    println!("wrote {} and {} plot files", a.trajectory.display(), a.plots.files.len());
    Ok(())
}
