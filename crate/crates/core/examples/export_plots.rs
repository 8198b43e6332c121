//! Splits a trajectory log into per-figure CSV files. With no argument it
//! first runs "move water right" to produce one.

use std::path::PathBuf;

use assistive_arm::harness::{export_plots_file, run_command, Setup};
use assistive_arm::mission::{MissionCommand, NoInbox};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> assistive_arm::Result<()> {
    let out = PathBuf::from("out/plots");
    let log = match std::env::args().nth(1) {
        Some(p) => PathBuf::from(p),
        None => {
            let setup = Setup::reference();
            let cmd: MissionCommand = "move water right".parse()?;
            let outcome = run_command(&setup, &cmd, &mut ChaCha8Rng::seed_from_u64(7), &mut NoInbox, None)?;
            std::fs::create_dir_all("out").ok();
            let path = PathBuf::from("out/move_water_right.csv");
            outcome.log.write_csv(std::fs::File::create(&path).map_err(|e| assistive_arm::Error::Io {
                path: path.clone(),
                message: e.to_string(),
            })?)?;
            path
        }
    };
    let report = export_plots_file(&log, &out)?;
    for f in &report.files {
        println!("{} ({} rows)", f.display(), report.rows);
    }
    for w in &report.warnings {
        println!("warning: {w}");
    }
    Ok(())
}
