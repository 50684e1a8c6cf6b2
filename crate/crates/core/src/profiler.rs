//! Installation-time characterization: squared-GEMM compute probes, a host
//! link bandwidth probe, least-squares fitting, and the profile text file.

use std::fs;
use std::path::Path;

use log::{debug, info};

use crate::device_model::{
    fit_linear, DeviceKind, DeviceProfile, LinearModel, MachineProfile, OpsCount, OpsWindow,
};
use crate::error::{Error, Result};
use crate::textfmt::{self, fmt_f64};

pub const PROFILE_HEADER: &str = "poas-profile v1";

/// Minimum bandwidth payload; below this, latency is no longer negligible.
pub const MIN_PAYLOAD_BYTES: u64 = 1 << 20;

/// Something that can time squared GEMMs and host transfers.
pub trait DeviceBackend: Send {
    fn id(&self) -> &str;
    fn kind(&self) -> DeviceKind;
    fn elem_size(&self) -> u32;
    /// Wall time of one `side x side x side` GEMM.
    fn time_square_gemm(&mut self, side: u64) -> Result<f64>;
    /// Wall time of one host-to-device copy of `bytes`.
    fn time_transfer(&mut self, bytes: u64) -> Result<f64>;
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProfileSample {
    pub side: u64,
    pub ops: OpsCount,
    /// Mean over repetitions.
    pub seconds: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProfilingConfig {
    pub cpu_sides: (u64, u64),
    pub accel_sides: (u64, u64),
    pub probes: usize,
    pub repetitions: usize,
    pub payload_bytes: u64,
}

impl Default for ProfilingConfig {
    fn default() -> Self {
        ProfilingConfig {
            cpu_sides: (1000, 2000),
            accel_sides: (3000, 6000),
            probes: 30,
            repetitions: 5,
            payload_bytes: 256 << 20,
        }
    }
}

impl ProfilingConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, (lo, hi)) in [("cpu", self.cpu_sides), ("accel", self.accel_sides)] {
            if lo == 0 || lo > hi {
                return Err(Error::InvalidConfig(format!(
                    "{name} probe range [{lo}, {hi}] is empty"
                )));
            }
            if hi.checked_pow(3).is_none() {
                return Err(Error::InvalidConfig(format!(
                    "{name} probe side {hi} overflows ops"
                )));
            }
        }
        if self.probes < 2 {
            return Err(Error::InvalidConfig("need at least 2 probes".into()));
        }
        if self.repetitions == 0 {
            return Err(Error::InvalidConfig("need at least 1 repetition".into()));
        }
        if self.payload_bytes < MIN_PAYLOAD_BYTES {
            return Err(Error::InvalidConfig(format!(
                "bandwidth payload {} B is below {MIN_PAYLOAD_BYTES} B",
                self.payload_bytes
            )));
        }
        Ok(())
    }

    pub fn sides_for(&self, kind: &DeviceKind) -> (u64, u64) {
        if kind.is_host() {
            self.cpu_sides
        } else {
            self.accel_sides
        }
    }
}

/// `count` sides evenly spaced over `[min, max]`, endpoints included.
pub fn probe_sides(min: u64, max: u64, count: usize) -> Vec<u64> {
    if count <= 1 {
        return vec![min];
    }
    let span = (max - min) as u128;
    let steps = (count - 1) as u128;
    (0..count as u128)
        .map(|i| min + ((i * span + steps / 2) / steps) as u64)
        .collect()
}

pub fn run_compute_probes(
    backend: &mut dyn DeviceBackend,
    config: &ProfilingConfig,
) -> Result<Vec<ProfileSample>> {
    config.validate()?;
    let (lo, hi) = config.sides_for(&backend.kind());
    probe_sides(lo, hi, config.probes)
        .into_iter()
        .map(|side| {
            let mut total = 0.0;
            for _ in 0..config.repetitions {
                total += backend.time_square_gemm(side)?;
            }
            Ok(ProfileSample {
                side,
                ops: OpsCount(side.pow(3)),
                seconds: total / config.repetitions as f64,
            })
        })
        .collect()
}

/// `payload_bytes / mean transfer time`. Host devices report 0.
pub fn run_bandwidth_probe(
    backend: &mut dyn DeviceBackend,
    payload_bytes: u64,
    repetitions: usize,
) -> Result<f64> {
    if backend.kind().is_host() {
        return Ok(0.0);
    }
    if payload_bytes < MIN_PAYLOAD_BYTES {
        return Err(Error::InvalidConfig(format!(
            "bandwidth payload {payload_bytes} B is below {MIN_PAYLOAD_BYTES} B"
        )));
    }
    let reps = repetitions.max(1);
    let mut total = 0.0;
    for _ in 0..reps {
        let t = backend.time_transfer(payload_bytes)?;
        if !(t.is_finite() && t > 0.0) {
            return Err(Error::BackendFailure {
                device: backend.id().to_string(),
                reason: format!("transfer time {t} is not positive"),
            });
        }
        total += t;
    }
    Ok(payload_bytes as f64 / (total / reps as f64))
}

/// Everything measured for one device.
#[derive(Debug, Clone, PartialEq)]
pub struct DeviceMeasurements {
    pub id: String,
    pub kind: DeviceKind,
    pub elem_size: u32,
    pub sides: (u64, u64),
    pub samples: Vec<ProfileSample>,
    pub bandwidth: f64,
    /// Overrides the throughput-derived priority when set for every device.
    pub fixed_priority: Option<u32>,
}

pub fn measure_device(
    backend: &mut dyn DeviceBackend,
    config: &ProfilingConfig,
) -> Result<DeviceMeasurements> {
    let samples = run_compute_probes(backend, config)?;
    let bandwidth = run_bandwidth_probe(backend, config.payload_bytes, config.repetitions)?;
    debug!(
        "measured `{}`: {} samples, {bandwidth:.4e} B/s",
        backend.id(),
        samples.len()
    );
    Ok(DeviceMeasurements {
        id: backend.id().to_string(),
        kind: backend.kind(),
        elem_size: backend.elem_size(),
        sides: config.sides_for(&backend.kind()),
        samples,
        bandwidth,
        fixed_priority: None,
    })
}

/// Probes every backend, one thread per device.
pub fn measure_all(
    backends: &mut [Box<dyn DeviceBackend>],
    config: &ProfilingConfig,
) -> Result<Vec<DeviceMeasurements>> {
    config.validate()?;
    std::thread::scope(|scope| {
        let handles: Vec<_> = backends
            .iter_mut()
            .map(|b| scope.spawn(move || measure_device(b.as_mut(), config)))
            .collect();
        handles
            .into_iter()
            .map(|h| {
                h.join()
                    .map_err(|_| Error::Invariant("probe thread panicked".into()))?
            })
            .collect()
    })
}

/// Fits every device and assigns bus priorities: fastest first, measured as
/// throughput at the midpoint of the device's probe range, ties by id.
pub fn fit_machine(
    measurements: &[DeviceMeasurements],
    shared_bus: bool,
) -> Result<MachineProfile> {
    let mut fitted: Vec<(LinearModel, f64)> = Vec::with_capacity(measurements.len());
    for m in measurements {
        let samples: Vec<(OpsCount, f64)> = m.samples.iter().map(|s| (s.ops, s.seconds)).collect();
        let model = fit_linear(&samples)?;
        let mid = (m.sides.0 + m.sides.1) / 2;
        fitted.push((model, model.throughput_at(OpsCount(mid.pow(3)))));
    }

    let ids: Vec<&str> = measurements.iter().map(|m| m.id.as_str()).collect();
    let throughputs: Vec<f64> = fitted.iter().map(|f| f.1).collect();
    let fixed: Vec<Option<u32>> = measurements.iter().map(|m| m.fixed_priority).collect();
    let priorities = assign_priorities(&ids, &throughputs, &fixed)?;

    let devices = measurements
        .iter()
        .zip(&fitted)
        .zip(priorities)
        .map(|((m, (model, _)), priority)| DeviceProfile {
            id: m.id.clone(),
            kind: m.kind,
            compute: *model,
            bandwidth: m.bandwidth,
            elem_size: m.elem_size,
            priority,
            window: OpsWindow::from_sides(m.sides.0, m.sides.1),
        })
        .collect();
    let machine = MachineProfile::new(devices, shared_bus)?;
    for d in &machine.devices {
        info!(
            "{} ({}): slope {:.6e} s/op, intercept {:.6e} s, bandwidth {:.6e} B/s, priority {}",
            d.id,
            d.kind.label(),
            d.compute.slope,
            d.compute.intercept,
            d.bandwidth,
            d.priority
        );
    }
    Ok(machine)
}

/// Priority 0 for the highest throughput, ties by id; `fixed` overrides
/// the rule when given for every device.
pub fn assign_priorities(
    ids: &[&str],
    throughputs: &[f64],
    fixed: &[Option<u32>],
) -> Result<Vec<u32>> {
    if fixed.iter().all(Option::is_some) && !fixed.is_empty() {
        return Ok(fixed.iter().map(|p| p.unwrap()).collect());
    }
    if fixed.iter().any(Option::is_some) {
        return Err(Error::InvalidConfig(
            "fixed priorities must be given for all devices or none".into(),
        ));
    }
    let mut order: Vec<usize> = (0..ids.len()).collect();
    order.sort_by(|&a, &b| {
        throughputs[b]
            .total_cmp(&throughputs[a])
            .then_with(|| ids[a].cmp(ids[b]))
    });
    let mut p = vec![0; ids.len()];
    for (rank, &i) in order.iter().enumerate() {
        p[i] = rank as u32;
    }
    Ok(p)
}

pub fn profile_to_text(profile: &MachineProfile) -> String {
    let mut out = String::new();
    out.push_str(PROFILE_HEADER);
    out.push('\n');
    out.push_str(if profile.shared_bus {
        "bus shared\n"
    } else {
        "bus exclusive\n"
    });
    for d in &profile.devices {
        out.push('\n');
        out.push_str(&format!("device {}\n", d.id));
        out.push_str(&format!("kind {}\n", d.kind.label()));
        out.push_str(&format!("slope {}\n", fmt_f64(d.compute.slope)));
        out.push_str(&format!("intercept {}\n", fmt_f64(d.compute.intercept)));
        out.push_str(&format!("bandwidth {}\n", fmt_f64(d.bandwidth)));
        out.push_str(&format!("elem_size {}\n", d.elem_size));
        out.push_str(&format!("priority {}\n", d.priority));
        match d.kind {
            DeviceKind::Cpu { cache_bytes } => {
                out.push_str(&format!("cache_bytes {cache_bytes}\n"))
            }
            DeviceKind::Xpu { align } => out.push_str(&format!("align {align}\n")),
            DeviceKind::Gpu => {}
        }
        out.push_str(&format!("window {} {}\n", d.window.lo, d.window.hi));
    }
    out
}

const DEVICE_KEYS: &[&str] = &[
    "kind",
    "slope",
    "intercept",
    "bandwidth",
    "elem_size",
    "priority",
    "align",
    "cache_bytes",
    "window",
];

pub fn profile_from_text(text: &str) -> Result<MachineProfile> {
    let doc = textfmt::parse(text, PROFILE_HEADER)?;
    textfmt::check_keys(&doc.globals, &["bus"], "profile header")?;
    let shared_bus = parse_bus(doc.globals.get("bus"))?;
    if doc.blocks.is_empty() {
        return Err(Error::parse(1, "profile has no devices"));
    }

    let mut devices: Vec<DeviceProfile> = Vec::with_capacity(doc.blocks.len());
    for block in &doc.blocks {
        textfmt::check_keys(
            &block.entries,
            DEVICE_KEYS,
            &format!("device `{}`", block.id),
        )?;
        let kind = parse_kind(block)?;
        let get_f64 =
            |key: &str| -> Result<f64> { textfmt::value(textfmt::required(block, key)?, key) };
        let slope = get_f64("slope")?;
        let intercept = get_f64("intercept")?;
        let bandwidth = get_f64("bandwidth")?;
        let elem_size = textfmt::value(textfmt::required(block, "elem_size")?, "elem_size")?;
        let priority_entry = textfmt::required(block, "priority")?;
        let priority: u32 = textfmt::value(priority_entry, "priority")?;
        let window = match block.entries.get("window") {
            Some(e) => {
                let (lo, hi) = textfmt::pair(e, "window")?;
                OpsWindow::new(lo, hi).map_err(|err| Error::parse(e.line, err.to_string()))?
            }
            None => OpsWindow::default_for(&kind),
        };
        if let Some(prev) = devices.iter().find(|d| d.id == block.id) {
            return Err(Error::parse(
                block.line,
                format!("duplicate device id `{}`", prev.id),
            ));
        }
        if let Some(prev) = devices.iter().find(|d| d.priority == priority) {
            return Err(Error::parse(
                priority_entry.line,
                format!(
                    "duplicate priority {priority} (also on `{}`): priorities within a machine profile must be unique",
                    prev.id
                ),
            ));
        }
        let device = DeviceProfile {
            id: block.id.clone(),
            kind,
            compute: LinearModel { slope, intercept },
            bandwidth,
            elem_size,
            priority,
            window,
        };
        device
            .validate()
            .map_err(|e| Error::parse(block.line, e.to_string()))?;
        devices.push(device);
    }
    MachineProfile::new(devices, shared_bus).map_err(|e| Error::parse(1, e.to_string()))
}

pub(crate) fn parse_bus(entry: Option<&textfmt::Entry>) -> Result<bool> {
    match entry {
        None => Ok(true),
        Some(e) => match e.value.as_str() {
            "shared" => Ok(true),
            "exclusive" => Ok(false),
            other => Err(Error::parse(
                e.line,
                format!("bus must be `shared` or `exclusive`, got `{other}`"),
            )),
        },
    }
}

/// Reads `kind` plus its kind-specific key, rejecting keys of other kinds.
pub(crate) fn parse_kind(block: &textfmt::Block) -> Result<DeviceKind> {
    let entry = textfmt::required(block, "kind")?;
    let misplaced = |key: &str| -> Result<()> {
        match block.entries.get(key) {
            Some(e) => Err(Error::parse(
                e.line,
                format!("key `{key}` is not valid for a {} device", entry.value),
            )),
            None => Ok(()),
        }
    };
    let kind = match entry.value.as_str() {
        "CPU" => {
            misplaced("align")?;
            DeviceKind::Cpu {
                cache_bytes: textfmt::value(
                    textfmt::required(block, "cache_bytes")?,
                    "cache_bytes",
                )?,
            }
        }
        "GPU" => {
            misplaced("align")?;
            misplaced("cache_bytes")?;
            DeviceKind::Gpu
        }
        "XPU" => {
            misplaced("cache_bytes")?;
            let e = textfmt::required(block, "align")?;
            let kind = DeviceKind::Xpu {
                align: textfmt::value(e, "align")?,
            };
            kind.validate()
                .map_err(|err| Error::parse(e.line, err.to_string()))?;
            kind
        }
        other => {
            return Err(Error::parse(
                entry.line,
                format!("unknown device kind `{other}`"),
            ))
        }
    };
    Ok(kind)
}

pub fn save_profile(profile: &MachineProfile, path: &Path) -> Result<()> {
    fs::write(path, profile_to_text(profile)).map_err(|e| Error::io(path, e))
}

pub fn load_profile(path: &Path) -> Result<MachineProfile> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    profile_from_text(&text)
}
