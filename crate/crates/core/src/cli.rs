//! `poas` command line: profile, plan, simulate, evaluate.
//!
//! Exit codes: 0 success, 1 bad input or domain error, 2 internal error.

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use log::{info, LevelFilter};

use crate::config::{MachineConfig, DEFAULT_INPUTS};
use crate::device_model::MatrixDims;
use crate::error::{Error, Result};
use crate::profiler::{load_profile, save_profile};
use crate::report::{evaluate_inputs, parse_inputs, plan, simulation_text};
use crate::scheduler::{load_schedule, save_schedule};
use crate::simulator::simulate;

#[derive(Debug, Parser)]
#[command(
    name = "poas",
    version,
    about = "Co-execution planner for GEMM on CPU + GPU + XPU machines"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Profile a synthetic machine and write its profile file.
    Profile {
        #[arg(long)]
        machine: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Split one GEMM across the profiled devices and write its schedule.
    Plan {
        #[arg(long)]
        profile: PathBuf,
        /// `MxNxK`, e.g. 30000x30000x30000.
        #[arg(long)]
        dims: MatrixDims,
        #[arg(long)]
        out: PathBuf,
    },
    /// Replay a schedule on the synthetic machine and compare with its predictions.
    Simulate {
        #[arg(long)]
        schedule: PathBuf,
        #[arg(long)]
        machine: PathBuf,
        #[arg(long, default_value_t = 3)]
        repeats: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Profile, plan and simulate a whole input set; write error, RMSE,
    /// distribution and speedup tables.
    Evaluate {
        #[arg(long)]
        machine: PathBuf,
        /// JSON input list; defaults to the bundled six-input set.
        #[arg(long)]
        inputs: Option<PathBuf>,
        #[arg(long, default_value_t = 3)]
        repeats: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out_dir: PathBuf,
    },
}

fn init_logging() {
    let level = match std::env::var("POAS_LOG").as_deref() {
        Ok("quiet") => LevelFilter::Error,
        Ok("info") => LevelFilter::Info,
        Ok("debug") => LevelFilter::Debug,
        _ => LevelFilter::Warn,
    };
    let _ = env_logger::Builder::new()
        .filter_level(level)
        .format_timestamp(None)
        .target(env_logger::Target::Stderr)
        .try_init();
}

/// Runs the CLI and returns the process exit code.
pub fn main() -> i32 {
    init_logging();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_internal() {
                2
            } else {
                1
            }
        }
    }
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn run(command: Command) -> Result<()> {
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    let mut say = |s: String| {
        let _ = writeln!(out, "{s}");
    };
    match command {
        Command::Profile { machine, out, seed } => {
            let config = MachineConfig::load(&machine)?;
            let profile = config.profile(seed)?;
            save_profile(&profile, &out)?;
            for d in &profile.devices {
                say(format!(
                    "{:<8} {}  slope {:.6e} s/op  intercept {:.6e} s  bandwidth {:.6e} B/s  priority {}",
                    d.id,
                    d.kind.label(),
                    d.compute.slope,
                    d.compute.intercept,
                    d.bandwidth,
                    d.priority
                ));
            }
            info!("wrote {}", out.display());
        }
        Command::Plan { profile, dims, out } => {
            let profile = load_profile(&profile)?;
            let schedule = plan(&profile, dims)?;
            save_schedule(&schedule, &out)?;
            let total = dims.ops().as_f64();
            for d in &schedule.devices {
                let pct = 100.0 * dims.ops_for_rows(d.rows).as_f64() / total;
                say(format!("{:<8} {:>6.2}%  {} rows", d.id, pct, d.rows));
            }
            say(format!("predicted makespan {:.6} s", schedule.makespan));
            info!("wrote {}", out.display());
        }
        Command::Simulate {
            schedule,
            machine,
            repeats,
            seed,
        } => {
            let config = MachineConfig::load(&machine)?;
            let s = load_schedule(&schedule)?;
            let hash = config.fingerprint();
            if s.machine_hash != hash {
                return Err(Error::MachineMismatch {
                    schedule: s.machine_hash,
                    machine: hash,
                });
            }
            s.validate(Some(config.shared_bus))?;
            let result = simulate(&s, &config.synthetic(seed), config.shared_bus, repeats)?;
            let json_path = schedule.with_extension("sim.json");
            let mut json = serde_json::to_string_pretty(&result).expect("result serializes");
            json.push('\n');
            write(&json_path, &json)?;
            say(simulation_text(&result));
            info!("wrote {}", json_path.display());
        }
        Command::Evaluate {
            machine,
            inputs,
            repeats,
            seed,
            out_dir,
        } => {
            let config = MachineConfig::load(&machine)?;
            let inputs = match inputs {
                Some(path) => parse_inputs(&read(&path)?)?,
                None => parse_inputs(DEFAULT_INPUTS)?,
            };
            let report = evaluate_inputs(&config, &inputs, repeats, seed)?;
            let text = report.to_text();
            write_outputs(
                &out_dir,
                &[
                    ("report.txt", text.as_str()),
                    ("report.json", report.to_json().as_str()),
                ],
            )?;
            say(text);
        }
    }
    Ok(())
}

/// Writes every file or none: anything already written is removed on failure.
fn write_outputs(dir: &Path, files: &[(&str, &str)]) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut written = Vec::new();
    for (name, text) in files {
        let path = dir.join(name);
        if let Err(e) = write(&path, text) {
            for p in &written {
                let _ = fs::remove_file(p);
            }
            return Err(e);
        }
        written.push(path);
    }
    Ok(())
}
