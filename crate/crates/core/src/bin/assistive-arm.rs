use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use assistive_arm::harness::{self, ListenOptions, RunManifest, RunMode, EXIT_CONFIG, EXIT_EXPORT, EXIT_OK};
use assistive_arm::mission::MissionCommand;

#[derive(Parser)]
#[command(name = "assistive-arm", version, about = "Set-based task-priority controller for an assistive arm")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one mission, listen for operator commands, or check the solver.
    Run(RunArgs),
    /// Cut per-figure CSV files out of a trajectory log.
    Export {
        trajectory: PathBuf,
        #[arg(long, default_value = "plots")]
        out: PathBuf,
    },
}

#[derive(Args)]
#[command(group = clap::ArgGroup::new("mode").required(true).args(["mission", "listen", "verify_oracle"]))]
struct RunArgs {
    /// Kinematic chain TOML (default: bundled reference arm).
    #[arg(long)]
    chain: Option<PathBuf>,
    /// World TOML (default: bundled desk layout).
    #[arg(long)]
    world: Option<PathBuf>,
    /// Mission parameter TOML (default: bundled task stacks and waypoints).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Mission command, e.g. "move water right" or "drink coke".
    #[arg(long)]
    mission: Option<String>,
    /// Wait for commands on the datagram endpoint.
    #[arg(long)]
    listen: bool,
    #[arg(long, env = "ASSISTIVE_ARM_HOST", default_value = "127.0.0.1")]
    host: String,
    /// Datagram port; 0 picks a free one.
    #[arg(long, env = "ASSISTIVE_ARM_PORT", default_value_t = 5005)]
    port: u16,
    /// WebSocket status port.
    #[arg(long, env = "ASSISTIVE_ARM_STATUS_PORT")]
    status_port: Option<u16>,
    /// Simulated seconds per wall second in listen mode; 0 is unpaced.
    #[arg(long, default_value_t = 1.0)]
    realtime: f64,
    /// Exit listen mode after this many missions.
    #[arg(long)]
    max_missions: Option<usize>,
    /// Compare the solver against brute-force enumeration.
    #[arg(long)]
    verify_oracle: bool,
    #[arg(long, default_value_t = 1000)]
    cases: usize,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    /// Perception noise override (m).
    #[arg(long)]
    noise: Option<f64>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

fn run(args: RunArgs) -> i32 {
    let mode = if let Some(text) = &args.mission {
        match text.parse::<MissionCommand>() {
            Ok(c) => RunMode::Mission(c),
            Err(e) => {
                eprintln!("error: --mission: {e}");
                return EXIT_CONFIG;
            }
        }
    } else if args.listen {
        RunMode::Listen(ListenOptions {
            host: args.host.clone(),
            port: args.port,
            status_port: args.status_port,
            realtime: args.realtime,
            max_missions: args.max_missions,
        })
    } else {
        RunMode::VerifyOracle { cases: args.cases }
    };
    let manifest = RunManifest {
        chain: args.chain,
        world: args.world,
        config: args.config,
        mode,
        seed: args.seed,
        out: args.out,
        noise: args.noise,
    };
    match harness::run(&manifest) {
        Ok(report) => {
            if let Some(s) = &report.summary {
                println!(
                    "{}: {} after {} ticks ({:.2} s), final error {:.4} m / {:.4} rad",
                    s.command, s.state, s.ticks, s.sim_time, s.final_position_error, s.final_orientation_error
                );
                if let Some(f) = &s.fault {
                    println!("fault: {f}");
                }
                for b in &s.bounds {
                    println!(
                        "  {:<24} range [{:.4}, {:.4}]  activations {}  chatter {}",
                        b.task, b.lowest, b.highest, b.activations, b.chatter
                    );
                }
            }
            if let Some(a) = &report.artifacts {
                println!("artifacts in {}", a.trajectory.parent().unwrap_or(a.trajectory.as_path()).display());
            }
            if let Some(o) = &report.oracle {
                println!(
                    "oracle: {} cases (n_a 1/2/3: {:?}), {} mismatches, max |dv| {:.3e}, {:.2?}",
                    o.cases,
                    o.by_active,
                    o.mismatches.len(),
                    o.max_velocity_diff,
                    o.elapsed
                );
                for m in o.mismatches.iter().take(5) {
                    println!("  {m:?}");
                }
            }
            report.exit_code
        }
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_CONFIG
        }
    }
}

fn export(trajectory: PathBuf, out: PathBuf) -> i32 {
    match harness::export_plots_file(&trajectory, &out) {
        Ok(r) => {
            for f in &r.files {
                println!("{}", f.display());
            }
            for w in &r.warnings {
                eprintln!("warning: {w}");
            }
            if r.is_clean() {
                EXIT_OK
            } else {
                EXIT_EXPORT
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_EXPORT
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let code = match Cli::parse().command {
        Command::Run(args) => run(args),
        Command::Export { trajectory, out } => export(trajectory, out),
    };
    ExitCode::from(code as u8)
}
