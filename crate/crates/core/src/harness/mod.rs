//! Headless orchestration: load configs, run a mission or listen for
//! operator commands, and write the run artifacts.

pub mod export;
pub mod listen;
pub mod oracle;

use std::fs;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::kinematics::KinematicChain;
use crate::mission::{
    compile_mission, run_mission, write_bound_margins, Inbox, MissionCommand, MissionConfig, MissionOutcome, MissionState,
    MissionSummary, TickReport,
};
use crate::sim::{WorldConfig, WorldState};

pub use export::{export_plots, export_plots_file, ExportReport};
pub use listen::{serve, Endpoints, ListenOptions, ServeReport};
pub use oracle::{verify_oracle, OracleReport};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILED: i32 = 1;
pub const EXIT_STOPPED: i32 = 2;
pub const EXIT_CONFIG: i32 = 3;
pub const EXIT_EXPORT: i32 = 4;
pub const EXIT_ORACLE: i32 = 5;

pub fn exit_code(state: MissionState) -> i32 {
    match state {
        MissionState::Completed => EXIT_OK,
        MissionState::StoppedEmergency => EXIT_STOPPED,
        _ => EXIT_FAILED,
    }
}

/// Chain, world and mission parameters for a run.
#[derive(Debug, Clone)]
pub struct Setup {
    pub chain: KinematicChain,
    pub world: WorldState,
    pub config: MissionConfig,
}

impl Setup {
    /// Loads each file that is given and falls back to the bundled default
    /// for the rest.
    pub fn load(chain: Option<&Path>, world: Option<&Path>, config: Option<&Path>) -> Result<Setup> {
        let chain = match chain {
            Some(p) => KinematicChain::from_config_file(p)?,
            None => KinematicChain::reference(),
        };
        let world_cfg = match world {
            Some(p) => WorldConfig::from_path(p)?,
            None => WorldConfig::default_layout(),
        };
        let world = world_cfg.build(&chain).map_err(|e| match world {
            Some(p) => Error::Config {
                path: p.to_path_buf(),
                message: e.to_string(),
            },
            None => e,
        })?;
        let config = match config {
            Some(p) => MissionConfig::from_path(p)?,
            None => MissionConfig::reference(),
        };
        Ok(Setup { chain, world, config })
    }

    pub fn reference() -> Setup {
        Setup::load(None, None, None).expect("bundled configs are valid")
    }

    pub fn with_noise(mut self, noise: f64) -> Setup {
        self.config.sim.noise = noise;
        self
    }
}

/// Perceives, compiles `command` and runs it to the end.
pub fn run_command(
    setup: &Setup,
    command: &MissionCommand,
    rng: &mut ChaCha8Rng,
    inbox: &mut dyn Inbox,
    observer: Option<&mut dyn FnMut(&TickReport)>,
) -> Result<MissionOutcome> {
    let perception = setup.world.perceive(&setup.config.sim_config(), rng);
    let script = compile_mission(command, &setup.world, &perception, &setup.config)?;
    Ok(run_mission(&script, setup.world.clone(), &setup.chain, &setup.config, inbox, rng, observer))
}

/// Files written for one mission.
#[derive(Debug, Clone, PartialEq)]
pub struct Artifacts {
    pub trajectory: PathBuf,
    pub summary: PathBuf,
    pub bound_margins: PathBuf,
    pub plots: ExportReport,
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

/// Writes `trajectory.csv`, `summary.json`, `bound_margins.csv` and the
/// `plots/` bundle into `dir`.
pub fn write_artifacts(dir: &Path, outcome: &MissionOutcome) -> Result<Artifacts> {
    fs::create_dir_all(dir).map_err(|e| Error::Io {
        path: dir.to_path_buf(),
        message: e.to_string(),
    })?;
    let trajectory = dir.join("trajectory.csv");
    write_file(&trajectory, &outcome.log.to_csv_bytes())?;
    let summary = dir.join("summary.json");
    write_file(&summary, outcome.summary.to_json().as_bytes())?;
    let bound_margins = dir.join("bound_margins.csv");
    let mut margins = Vec::new();
    write_bound_margins(&outcome.summary.bounds, &mut margins)?;
    write_file(&bound_margins, &margins)?;
    let plots = export_plots_file(&trajectory, &dir.join("plots"))?;
    Ok(Artifacts {
        trajectory,
        summary,
        bound_margins,
        plots,
    })
}

pub enum RunMode {
    Mission(MissionCommand),
    Listen(ListenOptions),
    VerifyOracle { cases: usize },
}

pub struct RunManifest {
    pub chain: Option<PathBuf>,
    pub world: Option<PathBuf>,
    pub config: Option<PathBuf>,
    pub mode: RunMode,
    pub seed: u64,
    pub out: PathBuf,
    /// Overrides the perception noise of the mission config (m).
    pub noise: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct RunReport {
    pub exit_code: i32,
    pub summary: Option<MissionSummary>,
    pub oracle: Option<OracleReport>,
    pub artifacts: Option<Artifacts>,
}

/// Executes a manifest. Configuration problems come back as errors; mission
/// and oracle results come back as an exit code.
pub fn run(manifest: &RunManifest) -> Result<RunReport> {
    if let RunMode::VerifyOracle { cases } = manifest.mode {
        let report = verify_oracle(cases, manifest.seed)?;
        return Ok(RunReport {
            exit_code: if report.passed() { EXIT_OK } else { EXIT_ORACLE },
            summary: None,
            oracle: Some(report),
            artifacts: None,
        });
    }
    let mut setup = Setup::load(manifest.chain.as_deref(), manifest.world.as_deref(), manifest.config.as_deref())?;
    if let Some(noise) = manifest.noise {
        setup = setup.with_noise(noise);
        setup.config.sim_config().validate()?;
    }
    match &manifest.mode {
        RunMode::Mission(command) => {
            let mut rng = ChaCha8Rng::seed_from_u64(manifest.seed);
            let outcome = run_command(&setup, command, &mut rng, &mut crate::mission::NoInbox, None)?;
            let artifacts = write_artifacts(&manifest.out, &outcome)?;
            let mut code = exit_code(outcome.status.state);
            if code == EXIT_OK && !artifacts.plots.is_clean() {
                code = EXIT_EXPORT;
            }
            Ok(RunReport {
                exit_code: code,
                summary: Some(outcome.summary),
                oracle: None,
                artifacts: Some(artifacts),
            })
        }
        RunMode::Listen(opts) => {
            let shutdown = std::sync::Arc::new(std::sync::atomic::AtomicBool::new(false));
            serve(setup, opts, manifest.seed, Some(&manifest.out), shutdown, |ep| {
                println!("listening on udp://{}", ep.udp);
                if let Some(s) = ep.status {
                    println!("status on ws://{s}");
                }
                use std::io::Write;
                let _ = std::io::stdout().flush();
            })?;
            Ok(RunReport {
                exit_code: EXIT_OK,
                summary: None,
                oracle: None,
                artifacts: None,
            })
        }
        RunMode::VerifyOracle { .. } => unreachable!("handled above"),
    }
}
