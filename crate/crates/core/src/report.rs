//! Whole-input-set evaluation: prediction error, RMSE, work distribution and
//! speedup over standalone runs, as aligned text tables and JSON.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::adapter::build_tile_plan;
use crate::config::MachineConfig;
use crate::device_model::{MachineProfile, MatrixDims};
use crate::error::{Error, Result};
use crate::optimizer::{solve_split, SplitProblem};
use crate::scheduler::{build_schedule, standalone_schedule, Schedule};
use crate::simulator::{rmse, simulate, SimulationResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedInput {
    pub name: String,
    #[serde(flatten)]
    pub dims: MatrixDims,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct InputFile {
    inputs: Vec<NamedInput>,
}

/// Parses `{"inputs": [{"name", "m", "n", "k"}, ...]}`.
pub fn parse_inputs(text: &str) -> Result<Vec<NamedInput>> {
    let file: InputFile =
        serde_json::from_str(text).map_err(|e| Error::InvalidConfig(format!("inputs: {e}")))?;
    if file.inputs.is_empty() {
        return Err(Error::NoInputs);
    }
    Ok(file.inputs)
}

/// Plans one input on `profile`: split, tiles, schedule.
pub fn plan(profile: &MachineProfile, dims: MatrixDims) -> Result<Schedule> {
    let split = solve_split(&SplitProblem::new(profile, dims))?;
    let tiles = build_tile_plan(&split, profile)?;
    build_schedule(&tiles, profile)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standalone {
    pub id: String,
    pub makespan: f64,
    /// Standalone measured makespan over co-execution measured makespan.
    pub speedup: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputReport {
    pub name: String,
    pub dims: MatrixDims,
    pub tops: f64,
    pub seed: u64,
    /// Percent of ops per device, in machine order.
    pub distribution: Vec<f64>,
    pub coexec: SimulationResult,
    pub standalone: Vec<Standalone>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviceRmse {
    pub id: String,
    pub global: f64,
    pub compute: f64,
    pub memory: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub machine_hash: String,
    pub seed: u64,
    pub repeats: usize,
    pub devices: Vec<String>,
    pub kinds: Vec<String>,
    pub inputs: Vec<InputReport>,
    pub rmse: Vec<DeviceRmse>,
}

/// Profiles the machine once with `seed`, then plans and simulates every
/// input (co-execution and each device alone) with seed `seed + index`.
pub fn evaluate_inputs(
    config: &MachineConfig,
    inputs: &[NamedInput],
    repeats: usize,
    seed: u64,
) -> Result<EvaluationReport> {
    if inputs.is_empty() {
        return Err(Error::NoInputs);
    }
    let profile = config.profile(seed)?;
    let reports: Vec<Result<InputReport>> = std::thread::scope(|scope| {
        let handles: Vec<_> = inputs
            .iter()
            .enumerate()
            .map(|(i, input)| {
                let profile = &profile;
                scope.spawn(move || {
                    evaluate_one(config, profile, input, repeats, seed.wrapping_add(i as u64))
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| {
                h.join()
                    .unwrap_or_else(|_| Err(Error::Invariant("evaluation thread panicked".into())))
            })
            .collect()
    });
    let inputs = reports.into_iter().collect::<Result<Vec<_>>>()?;

    let rmse = profile
        .devices
        .iter()
        .map(|d| {
            let outcomes: Vec<_> = inputs
                .iter()
                .filter_map(|r| r.coexec.device(&d.id))
                .collect();
            let errors = |f: &dyn Fn(&crate::simulator::DeviceOutcome) -> Option<f64>| -> Vec<f64> {
                outcomes.iter().filter_map(|o| f(o)).collect()
            };
            DeviceRmse {
                id: d.id.clone(),
                global: rmse(&errors(&|o| Some(o.global.error))),
                compute: rmse(&errors(&|o| Some(o.compute.error))),
                memory: (!d.kind.is_host()).then(|| rmse(&errors(&|o| o.memory.map(|m| m.error)))),
            }
        })
        .collect();

    Ok(EvaluationReport {
        machine_hash: config.fingerprint(),
        seed,
        repeats,
        devices: profile.devices.iter().map(|d| d.id.clone()).collect(),
        kinds: profile
            .devices
            .iter()
            .map(|d| d.kind.label().to_string())
            .collect(),
        inputs,
        rmse,
    })
}

fn evaluate_one(
    config: &MachineConfig,
    profile: &MachineProfile,
    input: &NamedInput,
    repeats: usize,
    seed: u64,
) -> Result<InputReport> {
    let synthetic = config.synthetic(seed);
    let schedule = plan(profile, input.dims)?;
    let coexec = simulate(&schedule, &synthetic, config.shared_bus, repeats)?;
    let total = input.dims.ops().as_f64();
    let distribution = schedule
        .devices
        .iter()
        .map(|d| 100.0 * input.dims.ops_for_rows(d.rows).as_f64() / total)
        .collect();
    let standalone = profile
        .devices
        .iter()
        .map(|d| {
            let s = standalone_schedule(&d.id, input.dims, profile)?;
            let r = simulate(&s, &synthetic, config.shared_bus, repeats)?;
            Ok(Standalone {
                id: d.id.clone(),
                makespan: r.makespan.measured,
                speedup: r.makespan.measured / coexec.makespan.measured,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(InputReport {
        name: input.name.clone(),
        dims: input.dims,
        tops: input.dims.ops().tera(),
        seed,
        distribution,
        coexec,
        standalone,
    })
}

fn error_cell(o: Option<&crate::simulator::DeviceOutcome>) -> String {
    match o {
        None => "-".into(),
        Some(o) => match o.memory {
            Some(m) => format!(
                "{:.2} ({:.2}, {:.2})",
                o.global.error, o.compute.error, m.error
            ),
            None => format!("{:.2}", o.global.error),
        },
    }
}

fn table(out: &mut String, title: &str, header: &[String], rows: &[Vec<String>]) {
    let cols = header.len();
    let mut width = vec![0; cols];
    for row in std::iter::once(header).chain(rows.iter().map(Vec::as_slice)) {
        for (w, cell) in width.iter_mut().zip(row) {
            *w = (*w).max(cell.chars().count());
        }
    }
    let line = |out: &mut String, row: &[String]| {
        let cells: Vec<String> = row
            .iter()
            .zip(&width)
            .enumerate()
            .map(|(i, (c, w))| {
                if i == 0 {
                    format!("{c:<w$}")
                } else {
                    format!("{c:>w$}")
                }
            })
            .collect();
        let _ = writeln!(out, "{}", cells.join("  ").trim_end());
    };
    let _ = writeln!(out, "{title}");
    line(out, header);
    let _ = writeln!(
        out,
        "{}",
        "-".repeat(width.iter().sum::<usize>() + 2 * (cols - 1))
    );
    for row in rows {
        line(out, row);
    }
    out.push('\n');
}

impl EvaluationReport {
    fn header(&self, first: &[&str]) -> Vec<String> {
        first
            .iter()
            .map(|s| s.to_string())
            .chain(
                self.devices
                    .iter()
                    .zip(&self.kinds)
                    .map(|(id, k)| format!("{id} ({k})")),
            )
            .collect()
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "machine {}  seed {}  repeats {}\n",
            self.machine_hash, self.seed, self.repeats
        );

        let rows: Vec<Vec<String>> = self
            .inputs
            .iter()
            .map(|r| {
                [r.name.clone(), r.dims.to_string(), format!("{:.1}", r.tops)]
                    .into_iter()
                    .chain(
                        self.devices
                            .iter()
                            .map(|id| error_cell(r.coexec.device(id))),
                    )
                    .collect()
            })
            .collect();
        table(
            &mut out,
            "Prediction error e = 100 (v - v_pred) / v, in %: global (compute, memory)",
            &self.header(&["input", "m x n x k", "TOps"]),
            &rows,
        );

        let rmse_row: Vec<String> = std::iter::once("RMSE".to_string())
            .chain(self.rmse.iter().map(|r| match r.memory {
                Some(m) => format!("{:.2} ({:.2}, {:.2})", r.global, r.compute, m),
                None => format!("{:.2}", r.global),
            }))
            .collect();
        table(
            &mut out,
            "Root mean square error, in %",
            &self.header(&[""]),
            &[rmse_row],
        );

        let rows: Vec<Vec<String>> = self
            .inputs
            .iter()
            .map(|r| {
                std::iter::once(r.name.clone())
                    .chain(r.distribution.iter().map(|p| format!("{p:.2}")))
                    .collect()
            })
            .collect();
        table(
            &mut out,
            "Work distribution, in % of ops",
            &self.header(&["input"]),
            &rows,
        );

        let rows: Vec<Vec<String>> = self
            .inputs
            .iter()
            .map(|r| {
                [r.name.clone(), format!("{:.3}", r.coexec.makespan.measured)]
                    .into_iter()
                    .chain(r.standalone.iter().map(|s| format!("{:.2}x", s.speedup)))
                    .collect()
            })
            .collect();
        table(
            &mut out,
            "Speedup of co-execution over each device alone",
            &self.header(&["input", "co-exec s"]),
            &rows,
        );
        out
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }
}

/// Measured vs predicted table for one simulated schedule.
pub fn simulation_text(r: &SimulationResult) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "machine {}  dims {}  repeats {}\n",
        r.machine_hash, r.dims, r.repeats
    );
    let header: Vec<String> = ["device", "phase", "measured s", "predicted s", "error %"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    let mut rows = Vec::new();
    let mut push = |id: &str, phase: &str, m: &crate::simulator::Measure| {
        rows.push(vec![
            id.to_string(),
            phase.to_string(),
            format!("{:.6}", m.measured),
            format!("{:.6}", m.predicted),
            format!("{:.2}", m.error),
        ]);
    };
    for d in &r.devices {
        push(&d.id, "compute", &d.compute);
        if let Some(m) = &d.memory {
            push(&d.id, "memory", m);
        }
        push(&d.id, "global", &d.global);
    }
    push("all", "makespan", &r.makespan);
    table(&mut out, "Measured vs predicted", &header, &rows);
    let _ = writeln!(
        out,
        "bus busy {:.6} s, transfers {:.6} s",
        r.bus_busy, r.transfer_total
    );
    out
}
