//! Synthetic devices with known performance laws, and a discrete-event
//! executor that replays a schedule on them.
//!
//! Every device draws from its own ChaCha stream keyed by its id, so adding
//! or removing a device never changes another device's draws.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::device_model::{DeviceKind, LinearModel, MatrixDims, OpsCount};
use crate::error::{Error, Result};
use crate::profiler::DeviceBackend;
use crate::scheduler::Schedule;
use crate::timeline::{Durations, Interval};

pub const MAX_NOISE: f64 = 0.2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticDevice {
    pub id: String,
    pub kind: DeviceKind,
    /// Ground-truth compute law.
    pub law: LinearModel,
    /// Ground-truth host link bandwidth, B/s (0 for the host).
    pub bandwidth: f64,
    pub elem_size: u32,
    /// Relative std dev of the multiplicative compute noise.
    pub noise: f64,
    /// Relative std dev of the multiplicative transfer noise.
    pub bus_noise: f64,
    /// Compute slowdown per simulated second: time x (1 + drift * t).
    pub drift: f64,
    pub seed: u64,
}

impl SyntheticDevice {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(format!("device `{}`: {msg}", self.id)));
        self.kind.validate()?;
        self.law.validate()?;
        for (name, v) in [("noise", self.noise), ("bus_noise", self.bus_noise)] {
            if !(0.0..=MAX_NOISE).contains(&v) {
                return bad(format!("{name} {v} outside [0, {MAX_NOISE}]"));
            }
        }
        if !(self.drift >= 0.0 && self.drift.is_finite()) {
            return bad(format!("drift {} must be finite and >= 0", self.drift));
        }
        if self.elem_size == 0 {
            return bad("elem_size must be positive".into());
        }
        if self.kind.is_host() {
            if self.bandwidth != 0.0 {
                return bad("the host has no bus link; bandwidth must be 0".into());
            }
        } else if !(self.bandwidth > 0.0 && self.bandwidth.is_finite()) {
            return bad(format!("bandwidth {} must be positive", self.bandwidth));
        }
        Ok(())
    }

    pub fn rng(&self) -> ChaCha8Rng {
        let digest = Sha256::digest(self.id.as_bytes());
        let mut stream = [0u8; 8];
        stream.copy_from_slice(&digest[..8]);
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(u64::from_le_bytes(stream));
        rng
    }

    /// Noise-free phase durations; the same arithmetic the planner uses.
    pub fn ideal_durations(&self, rows: u64, dims: &MatrixDims) -> Durations {
        let ops = OpsCount((rows as u128 * dims.n() as u128 * dims.k() as u128) as u64);
        let compute = self.law.slope * ops.as_f64() + self.law.intercept;
        if self.kind.is_host() {
            return Durations {
                copy_in: 0.0,
                compute,
                copy_out: 0.0,
            };
        }
        let (r, n, k, e) = (
            rows as u128,
            dims.n() as u128,
            dims.k() as u128,
            self.elem_size as u128,
        );
        Durations {
            copy_in: (e * (r * k + k * n)) as f64 / self.bandwidth,
            compute,
            copy_out: (e * (r * n)) as f64 / self.bandwidth,
        }
    }
}

/// `1 + sigma * z` with `z` standard normal clamped to +-3.
fn noise_factor(rng: &mut ChaCha8Rng, sigma: f64) -> f64 {
    if sigma == 0.0 {
        return 1.0;
    }
    let z: f64 = rng.sample(StandardNormal);
    1.0 + sigma * z.clamp(-3.0, 3.0)
}

/// Profiling backend over a synthetic device. Drift accumulates over the
/// simulated time spent in probes.
pub struct SyntheticBackend {
    device: SyntheticDevice,
    rng: ChaCha8Rng,
    clock: f64,
}

impl SyntheticBackend {
    pub fn new(device: SyntheticDevice) -> Self {
        let rng = device.rng();
        SyntheticBackend {
            device,
            rng,
            clock: 0.0,
        }
    }
}

impl DeviceBackend for SyntheticBackend {
    fn id(&self) -> &str {
        &self.device.id
    }

    fn kind(&self) -> DeviceKind {
        self.device.kind
    }

    fn elem_size(&self) -> u32 {
        self.device.elem_size
    }

    fn time_square_gemm(&mut self, side: u64) -> Result<f64> {
        let ops = side.checked_pow(3).ok_or_else(|| Error::BackendFailure {
            device: self.device.id.clone(),
            reason: format!("probe side {side} overflows"),
        })?;
        let base = self.device.law.predict(OpsCount(ops));
        let t = base
            * noise_factor(&mut self.rng, self.device.noise)
            * (1.0 + self.device.drift * self.clock);
        self.clock += t;
        Ok(t)
    }

    fn time_transfer(&mut self, bytes: u64) -> Result<f64> {
        if self.device.kind.is_host() {
            return Err(Error::BackendFailure {
                device: self.device.id.clone(),
                reason: "the host has no bus link".into(),
            });
        }
        let t = bytes as f64 / self.device.bandwidth
            * noise_factor(&mut self.rng, self.device.bus_noise);
        self.clock += t;
        Ok(t)
    }
}

/// `e = 100 * (v - v_pred) / v`, signed.
pub fn relative_error(measured: f64, predicted: f64) -> f64 {
    100.0 * (measured - predicted) / measured
}

pub fn rmse(errors: &[f64]) -> f64 {
    if errors.is_empty() {
        return 0.0;
    }
    (errors.iter().map(|e| e * e).sum::<f64>() / errors.len() as f64).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Measure {
    pub measured: f64,
    pub predicted: f64,
    pub error: f64,
}

impl Measure {
    pub fn new(measured: f64, predicted: f64) -> Self {
        Measure {
            measured,
            predicted,
            error: relative_error(measured, predicted),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviceOutcome {
    pub id: String,
    pub kind: String,
    pub rows: u64,
    /// Completion time: copy-out end, or compute end for the host.
    pub global: Measure,
    pub compute: Measure,
    /// Copy-in plus copy-out; absent for the host.
    pub memory: Option<Measure>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationResult {
    pub machine_hash: String,
    pub dims: MatrixDims,
    pub repeats: usize,
    /// Devices with work, in schedule order.
    pub devices: Vec<DeviceOutcome>,
    pub makespan: Measure,
    /// Time some bus channel was busy (union of transfer intervals), mean over repeats.
    pub bus_busy: f64,
    /// Sum of all transfer durations, mean over repeats.
    pub transfer_total: f64,
}

impl SimulationResult {
    pub fn device(&self, id: &str) -> Option<&DeviceOutcome> {
        self.devices.iter().find(|d| d.id == id)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Phase {
    CopyIn,
    Compute,
    CopyOut,
}

#[derive(Debug, Clone, Copy)]
struct Event {
    time: f64,
    seq: u64,
    device: usize,
    phase: Phase,
}

impl PartialEq for Event {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Event {}

impl PartialOrd for Event {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Event {
    // Reversed: BinaryHeap is a max-heap and we pop the earliest event.
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .time
            .total_cmp(&self.time)
            .then(other.seq.cmp(&self.seq))
    }
}

/// A link that serves transfers strictly in a fixed order.
struct Channel {
    sequence: Vec<(usize, Phase)>,
    next: usize,
    busy: bool,
    posted: Vec<(usize, Phase)>,
    intervals: Vec<Interval>,
}

impl Channel {
    fn new(sequence: Vec<(usize, Phase)>) -> Self {
        Channel {
            sequence,
            next: 0,
            busy: false,
            posted: Vec::new(),
            intervals: Vec::new(),
        }
    }

    /// Busy time as the union of transfer intervals.
    fn busy_time(&self) -> f64 {
        let mut ivs = self.intervals.clone();
        ivs.sort_by(|a, b| a.start.total_cmp(&b.start));
        let mut total = 0.0;
        let mut cur: Option<Interval> = None;
        for iv in ivs {
            cur = match cur {
                Some(c) if iv.start <= c.end => Some(Interval::new(c.start, c.end.max(iv.end))),
                Some(c) => {
                    total += c.len();
                    Some(iv)
                }
                None => Some(iv),
            };
        }
        total + cur.map_or(0.0, |c| c.len())
    }
}

struct Run {
    phases: Vec<[Interval; 3]>,
    busy: f64,
    transfers: f64,
}

struct Engine<'a> {
    devices: &'a [&'a SyntheticDevice],
    rows: &'a [u64],
    dims: MatrixDims,
    rngs: &'a mut [ChaCha8Rng],
    channels: Vec<Channel>,
    channel_of: Vec<usize>,
    heap: BinaryHeap<Event>,
    seq: u64,
    phases: Vec<[Interval; 3]>,
}

impl Engine<'_> {
    fn push(&mut self, start: f64, duration: f64, device: usize, phase: Phase) {
        let slot = phase as usize;
        self.phases[device][slot] = Interval::new(start, start + duration);
        self.seq += 1;
        self.heap.push(Event {
            time: start + duration,
            seq: self.seq,
            device,
            phase,
        });
    }

    fn start_compute(&mut self, device: usize, now: f64) {
        let d = self.devices[device];
        let base = d.ideal_durations(self.rows[device], &self.dims).compute;
        let mut t = base * noise_factor(&mut self.rngs[device], d.noise);
        if d.drift > 0.0 {
            t *= 1.0 + d.drift * now;
        }
        self.push(now, t, device, Phase::Compute);
    }

    fn post(&mut self, device: usize, phase: Phase, now: f64) {
        let c = self.channel_of[device];
        self.channels[c].posted.push((device, phase));
        self.try_transfer(c, now);
    }

    fn try_transfer(&mut self, c: usize, now: f64) {
        let ch = &self.channels[c];
        if ch.busy || ch.next >= ch.sequence.len() {
            return;
        }
        let (device, phase) = ch.sequence[ch.next];
        if !ch.posted.contains(&(device, phase)) {
            return;
        }
        let d = self.devices[device];
        let ideal = d.ideal_durations(self.rows[device], &self.dims);
        let base = if phase == Phase::CopyIn {
            ideal.copy_in
        } else {
            ideal.copy_out
        };
        let t = base * noise_factor(&mut self.rngs[device], d.bus_noise);
        let ch = &mut self.channels[c];
        ch.next += 1;
        ch.busy = true;
        ch.intervals.push(Interval::new(now, now + t));
        self.push(now, t, device, phase);
    }

    fn run(mut self) -> Result<Run> {
        for i in 0..self.devices.len() {
            if self.rows[i] == 0 {
                continue;
            }
            if self.devices[i].kind.is_host() {
                self.start_compute(i, 0.0);
            } else {
                self.post(i, Phase::CopyIn, 0.0);
            }
        }
        while let Some(ev) = self.heap.pop() {
            let now = ev.time;
            match ev.phase {
                Phase::CopyIn => {
                    let c = self.channel_of[ev.device];
                    self.channels[c].busy = false;
                    self.start_compute(ev.device, now);
                    self.try_transfer(c, now);
                }
                Phase::Compute => {
                    if self.devices[ev.device].kind.is_host() {
                        self.phases[ev.device][2] = Interval::at(now);
                    } else {
                        self.post(ev.device, Phase::CopyOut, now);
                    }
                }
                Phase::CopyOut => {
                    let c = self.channel_of[ev.device];
                    self.channels[c].busy = false;
                    self.try_transfer(c, now);
                }
            }
        }
        if self.channels.iter().any(|c| c.next != c.sequence.len()) {
            return Err(Error::Invariant(
                "simulation stalled with transfers pending".into(),
            ));
        }
        let transfers = self
            .channels
            .iter()
            .flat_map(|c| &c.intervals)
            .map(Interval::len)
            .sum();
        let busy = self.channels.iter().map(Channel::busy_time).sum();
        Ok(Run {
            phases: self.phases,
            busy,
            transfers,
        })
    }
}

/// Mean that returns the exact value when all samples are equal.
fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let v: Vec<f64> = values.collect();
    let first = v[0];
    first + v.iter().map(|x| x - first).sum::<f64>() / v.len() as f64
}

/// Replays `schedule` on synthetic devices `repeats` times and compares the
/// averaged phase times with the schedule's predictions.
pub fn simulate(
    schedule: &Schedule,
    devices: &[SyntheticDevice],
    shared_bus: bool,
    repeats: usize,
) -> Result<SimulationResult> {
    if repeats == 0 {
        return Err(Error::InvalidConfig("repeats must be at least 1".into()));
    }
    let synth: Vec<&SyntheticDevice> = schedule
        .devices
        .iter()
        .map(|s| {
            devices
                .iter()
                .find(|d| d.id == s.id)
                .ok_or_else(|| Error::MissingDevice(s.id.clone()))
        })
        .collect::<Result<_>>()?;
    for d in &synth {
        d.validate()?;
    }
    let rows: Vec<u64> = schedule.devices.iter().map(|d| d.rows).collect();

    // Shared bus: one channel carrying all copy-ins then all copy-outs by
    // priority. Exclusive links: one channel per device.
    let mut by_priority: Vec<usize> = (0..synth.len())
        .filter(|&i| rows[i] > 0 && !synth[i].kind.is_host())
        .collect();
    by_priority.sort_by_key(|&i| schedule.devices[i].priority);
    let sequences: Vec<Vec<(usize, Phase)>> = if shared_bus {
        vec![by_priority
            .iter()
            .map(|&i| (i, Phase::CopyIn))
            .chain(by_priority.iter().map(|&i| (i, Phase::CopyOut)))
            .collect()]
    } else {
        by_priority
            .iter()
            .map(|&i| vec![(i, Phase::CopyIn), (i, Phase::CopyOut)])
            .collect()
    };
    let mut channel_of = vec![0; synth.len()];
    if !shared_bus {
        for (c, &i) in by_priority.iter().enumerate() {
            channel_of[i] = c;
        }
    }

    let mut rngs: Vec<ChaCha8Rng> = synth.iter().map(|d| d.rng()).collect();
    let mut runs = Vec::with_capacity(repeats);
    for _ in 0..repeats {
        let engine = Engine {
            devices: &synth,
            rows: &rows,
            dims: schedule.dims,
            rngs: &mut rngs,
            channels: sequences.iter().cloned().map(Channel::new).collect(),
            channel_of: channel_of.clone(),
            heap: BinaryHeap::new(),
            seq: 0,
            phases: vec![[Interval::default(); 3]; synth.len()],
        };
        runs.push(engine.run()?);
    }

    let mut outcomes = Vec::new();
    let mut makespans = vec![0.0f64; repeats];
    for (i, s) in schedule.devices.iter().enumerate() {
        if rows[i] == 0 {
            continue;
        }
        let host = synth[i].kind.is_host();
        let completion = |p: &[Interval; 3]| if host { p[1].end } else { p[2].end };
        for (r, run) in runs.iter().enumerate() {
            makespans[r] = makespans[r].max(completion(&run.phases[i]));
        }
        let global = mean(runs.iter().map(|r| completion(&r.phases[i])));
        let compute = mean(runs.iter().map(|r| r.phases[i][1].len()));
        let memory = (!host).then(|| {
            Measure::new(
                mean(
                    runs.iter()
                        .map(|r| r.phases[i][0].len() + r.phases[i][2].len()),
                ),
                s.copy_in.len() + s.copy_out.len(),
            )
        });
        outcomes.push(DeviceOutcome {
            id: s.id.clone(),
            kind: synth[i].kind.label().to_string(),
            rows: rows[i],
            global: Measure::new(global, s.completion()),
            compute: Measure::new(compute, s.compute.len()),
            memory,
        });
    }

    Ok(SimulationResult {
        machine_hash: schedule.machine_hash.clone(),
        dims: schedule.dims,
        repeats,
        devices: outcomes,
        makespan: Measure::new(mean(makespans.into_iter()), schedule.makespan),
        bus_busy: mean(runs.iter().map(|r| r.busy)),
        transfer_total: mean(runs.iter().map(|r| r.transfers)),
    })
}
