//! Declarative synthetic machine: ground-truth device laws plus profiling
//! settings, in the same block format as profile files.
//!
//! ```text
//! poas-machine v1
//! bus shared
//! probes 30
//!
//! device xpu
//! kind XPU
//! law_slope 3.72e-14
//! law_intercept 5e-4
//! bandwidth 15.75e9
//! elem_size 2
//! align 8
//! noise 0.03
//! ```

use std::fs;
use std::path::Path;

use crate::device_model::{
    machine_fingerprint, DeviceKind, DeviceProfile, LinearModel, MachineProfile, OpsCount,
    OpsWindow,
};
use crate::error::{Error, Result};
use crate::profiler::{
    self, assign_priorities, fit_machine, measure_all, DeviceBackend, ProfilingConfig,
};
use crate::simulator::{SyntheticBackend, SyntheticDevice};
use crate::textfmt::{self, fmt_f64};

pub const MACHINE_HEADER: &str = "poas-machine v1";

const GLOBAL_KEYS: &[&str] = &[
    "bus",
    "probes",
    "repetitions",
    "payload_bytes",
    "cpu_sides",
    "accel_sides",
];

const DEVICE_KEYS: &[&str] = &[
    "kind",
    "law_slope",
    "law_intercept",
    "bandwidth",
    "elem_size",
    "align",
    "cache_bytes",
    "noise",
    "bus_noise",
    "drift",
    "priority",
];

#[derive(Debug, Clone, PartialEq)]
pub struct DeviceConfig {
    pub device: SyntheticDevice,
    pub priority: Option<u32>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MachineConfig {
    pub shared_bus: bool,
    pub profiling: ProfilingConfig,
    pub devices: Vec<DeviceConfig>,
}

impl MachineConfig {
    pub fn validate(&self) -> Result<()> {
        if self.devices.is_empty() {
            return Err(Error::InvalidConfig("machine has no devices".into()));
        }
        self.profiling.validate()?;
        for (i, d) in self.devices.iter().enumerate() {
            d.device.validate()?;
            if self.devices[..i].iter().any(|o| o.device.id == d.device.id) {
                return Err(Error::InvalidConfig(format!(
                    "duplicate device id `{}`",
                    d.device.id
                )));
            }
        }
        let fixed: Vec<Option<u32>> = self.devices.iter().map(|d| d.priority).collect();
        if fixed.iter().any(Option::is_some) {
            if fixed.iter().any(Option::is_none) {
                return Err(Error::InvalidConfig(
                    "fixed priorities must be given for all devices or none".into(),
                ));
            }
            for (i, p) in fixed.iter().enumerate() {
                if fixed[..i].contains(p) {
                    return Err(Error::InvalidConfig(format!(
                        "duplicate priority {}: priorities must be unique",
                        p.unwrap()
                    )));
                }
            }
        }
        Ok(())
    }

    /// Same hash as any profile measured from this machine.
    pub fn fingerprint(&self) -> String {
        machine_fingerprint(
            self.shared_bus,
            self.devices
                .iter()
                .map(|d| (d.device.id.as_str(), &d.device.kind, d.device.elem_size)),
        )
    }

    /// Synthetic devices with every RNG seeded from `seed`.
    pub fn synthetic(&self, seed: u64) -> Vec<SyntheticDevice> {
        self.devices
            .iter()
            .map(|d| SyntheticDevice {
                seed,
                ..d.device.clone()
            })
            .collect()
    }

    pub fn backends(&self, seed: u64) -> Vec<Box<dyn DeviceBackend>> {
        self.synthetic(seed)
            .into_iter()
            .map(|d| Box::new(SyntheticBackend::new(d)) as Box<dyn DeviceBackend>)
            .collect()
    }

    /// Runs the profiler against the synthetic devices.
    pub fn profile(&self, seed: u64) -> Result<MachineProfile> {
        self.validate()?;
        let mut backends = self.backends(seed);
        let mut measurements = measure_all(&mut backends, &self.profiling)?;
        for (m, d) in measurements.iter_mut().zip(&self.devices) {
            m.fixed_priority = d.priority;
        }
        fit_machine(&measurements, self.shared_bus)
    }

    /// The profile a perfect profiler would produce: ground-truth laws and
    /// bandwidths, priorities and windows derived as the profiler does.
    pub fn truth_profile(&self) -> Result<MachineProfile> {
        self.validate()?;
        let ids: Vec<&str> = self.devices.iter().map(|d| d.device.id.as_str()).collect();
        let sides: Vec<(u64, u64)> = self
            .devices
            .iter()
            .map(|d| self.profiling.sides_for(&d.device.kind))
            .collect();
        let throughputs: Vec<f64> = self
            .devices
            .iter()
            .zip(&sides)
            .map(|(d, s)| {
                d.device
                    .law
                    .throughput_at(OpsCount(((s.0 + s.1) / 2).pow(3)))
            })
            .collect();
        let fixed: Vec<Option<u32>> = self.devices.iter().map(|d| d.priority).collect();
        let priorities = assign_priorities(&ids, &throughputs, &fixed)?;
        let devices = self
            .devices
            .iter()
            .zip(sides)
            .zip(priorities)
            .map(|((d, s), priority)| DeviceProfile {
                id: d.device.id.clone(),
                kind: d.device.kind,
                compute: d.device.law,
                bandwidth: d.device.bandwidth,
                elem_size: d.device.elem_size,
                priority,
                window: OpsWindow::from_sides(s.0, s.1),
            })
            .collect();
        MachineProfile::new(devices, self.shared_bus)
    }

    pub fn to_text(&self) -> String {
        let p = &self.profiling;
        let mut out = format!(
            "{MACHINE_HEADER}\nbus {}\nprobes {}\nrepetitions {}\npayload_bytes {}\ncpu_sides {} {}\naccel_sides {} {}\n",
            if self.shared_bus { "shared" } else { "exclusive" },
            p.probes,
            p.repetitions,
            p.payload_bytes,
            p.cpu_sides.0,
            p.cpu_sides.1,
            p.accel_sides.0,
            p.accel_sides.1,
        );
        for d in &self.devices {
            let s = &d.device;
            out.push_str(&format!("\ndevice {}\nkind {}\n", s.id, s.kind.label()));
            out.push_str(&format!("law_slope {}\n", fmt_f64(s.law.slope)));
            out.push_str(&format!("law_intercept {}\n", fmt_f64(s.law.intercept)));
            out.push_str(&format!("bandwidth {}\n", fmt_f64(s.bandwidth)));
            out.push_str(&format!("elem_size {}\n", s.elem_size));
            match s.kind {
                DeviceKind::Cpu { cache_bytes } => {
                    out.push_str(&format!("cache_bytes {cache_bytes}\n"))
                }
                DeviceKind::Xpu { align } => out.push_str(&format!("align {align}\n")),
                DeviceKind::Gpu => {}
            }
            out.push_str(&format!("noise {}\n", fmt_f64(s.noise)));
            out.push_str(&format!("bus_noise {}\n", fmt_f64(s.bus_noise)));
            out.push_str(&format!("drift {}\n", fmt_f64(s.drift)));
            if let Some(p) = d.priority {
                out.push_str(&format!("priority {p}\n"));
            }
        }
        out
    }

    pub fn from_text(text: &str) -> Result<MachineConfig> {
        let doc = textfmt::parse(text, MACHINE_HEADER)?;
        textfmt::check_keys(&doc.globals, GLOBAL_KEYS, "machine header")?;
        let g = &doc.globals;
        let shared_bus = profiler::parse_bus(g.get("bus"))?;
        let defaults = ProfilingConfig::default();
        let profiling = ProfilingConfig {
            probes: optional(g.get("probes"), "probes", defaults.probes)?,
            repetitions: optional(g.get("repetitions"), "repetitions", defaults.repetitions)?,
            payload_bytes: optional(
                g.get("payload_bytes"),
                "payload_bytes",
                defaults.payload_bytes,
            )?,
            cpu_sides: match g.get("cpu_sides") {
                Some(e) => textfmt::pair(e, "cpu_sides")?,
                None => defaults.cpu_sides,
            },
            accel_sides: match g.get("accel_sides") {
                Some(e) => textfmt::pair(e, "accel_sides")?,
                None => defaults.accel_sides,
            },
        };
        if doc.blocks.is_empty() {
            return Err(Error::parse(1, "machine has no devices"));
        }

        let mut devices: Vec<DeviceConfig> = Vec::with_capacity(doc.blocks.len());
        for block in &doc.blocks {
            if devices.iter().any(|d| d.device.id == block.id) {
                return Err(Error::parse(
                    block.line,
                    format!("duplicate device id `{}`", block.id),
                ));
            }
            textfmt::check_keys(
                &block.entries,
                DEVICE_KEYS,
                &format!("device `{}`", block.id),
            )?;
            let kind = profiler::parse_kind(block)?;
            let req_f64 =
                |key: &str| -> Result<f64> { textfmt::value(textfmt::required(block, key)?, key) };
            let opt_f64 = |key: &str| -> Result<f64> { optional(block.entries.get(key), key, 0.0) };
            let slope = req_f64("law_slope")?;
            let intercept = opt_f64("law_intercept")?;
            let law = LinearModel::new(slope, intercept)
                .map_err(|e| Error::parse(block.line, e.to_string()))?;
            let bandwidth = if kind.is_host() {
                opt_f64("bandwidth")?
            } else {
                req_f64("bandwidth")?
            };
            let device = SyntheticDevice {
                id: block.id.clone(),
                kind,
                law,
                bandwidth,
                elem_size: textfmt::value(textfmt::required(block, "elem_size")?, "elem_size")?,
                noise: opt_f64("noise")?,
                bus_noise: opt_f64("bus_noise")?,
                drift: opt_f64("drift")?,
                seed: 0,
            };
            device
                .validate()
                .map_err(|e| Error::parse(block.line, e.to_string()))?;
            let priority = block
                .entries
                .get("priority")
                .map(|e| textfmt::value(e, "priority"))
                .transpose()?;
            devices.push(DeviceConfig { device, priority });
        }
        let config = MachineConfig {
            shared_bus,
            profiling,
            devices,
        };
        config
            .validate()
            .map_err(|e| Error::parse(1, e.to_string()))?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<MachineConfig> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        MachineConfig::from_text(&text)
    }
}

fn optional<T: std::str::FromStr>(
    entry: Option<&textfmt::Entry>,
    key: &str,
    default: T,
) -> Result<T> {
    entry.map_or(Ok(default), |e| textfmt::value(e, key))
}

/// The bundled CPU + GPU + XPU machine: throughputs at half of the vendor
/// peaks, PCIe 4.0 x16 for the GPU and PCIe 3.0 x16 for the XPU.
pub const MACH2: &str = include_str!("../data/mach2.machine");

/// The six bundled evaluation inputs, as JSON.
pub const DEFAULT_INPUTS: &str = include_str!("../data/inputs.json");
