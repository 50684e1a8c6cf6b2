//! Static bus schedule: the explicit timeline a tile plan runs on.

use std::fs;
use std::path::Path;

use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use serde_json::value::RawValue;

use crate::adapter::{check_cover, standalone_plan, DeviceAssignment, Tile, TilePlan};
use crate::device_model::{MachineProfile, MatrixDims};
use crate::error::{Error, Result};
use crate::timeline::{Interval, TimelineModel};

pub const SCHEDULE_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduledDevice {
    pub id: String,
    pub priority: u32,
    pub rows: u64,
    pub tiles: Vec<Tile>,
    #[serde(with = "interval_9")]
    pub copy_in: Interval,
    #[serde(with = "interval_9")]
    pub compute: Interval,
    #[serde(with = "interval_9")]
    pub copy_out: Interval,
}

impl ScheduledDevice {
    pub fn is_active(&self) -> bool {
        self.rows > 0
    }

    /// Copy-out end for accelerators, compute end for the host.
    pub fn completion(&self) -> f64 {
        self.copy_out.end
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Schedule {
    pub version: u32,
    pub machine_hash: String,
    pub dims: MatrixDims,
    /// In machine order; idle devices carry empty intervals at 0.
    pub devices: Vec<ScheduledDevice>,
    #[serde(with = "secs_9")]
    pub makespan: f64,
}

pub fn build_schedule(plan: &TilePlan, machine: &MachineProfile) -> Result<Schedule> {
    if plan.devices.len() != machine.devices.len() {
        return Err(Error::Invariant("plan does not match machine".into()));
    }
    let rows = plan.rows();
    let timeline = TimelineModel::new(machine, &plan.dims).evaluate(&rows);
    let devices = plan
        .devices
        .iter()
        .zip(&machine.devices)
        .zip(&timeline.phases)
        .map(|((p, dev), phases)| {
            let ph = phases.unwrap_or_default();
            ScheduledDevice {
                id: dev.id.clone(),
                priority: dev.priority,
                rows: p.assignment.rows,
                tiles: p.tiles.clone(),
                copy_in: ph.copy_in,
                compute: ph.compute,
                copy_out: ph.copy_out,
            }
        })
        .collect();
    let schedule = Schedule {
        version: SCHEDULE_VERSION,
        machine_hash: machine.fingerprint(),
        dims: plan.dims,
        devices,
        makespan: timeline.makespan,
    };
    schedule.validate(Some(machine.shared_bus))?;
    Ok(schedule)
}

/// Everything on one device.
pub fn standalone_schedule(
    device: &str,
    dims: MatrixDims,
    machine: &MachineProfile,
) -> Result<Schedule> {
    let index = machine
        .index_of(device)
        .ok_or_else(|| Error::MissingDevice(device.to_string()))?;
    build_schedule(&standalone_plan(index, dims, machine)?, machine)
}

impl Schedule {
    pub fn device(&self, id: &str) -> Option<&ScheduledDevice> {
        self.devices.iter().find(|d| d.id == id)
    }

    /// Structural checks; bus exclusivity is only checked when the bus mode is known.
    pub fn validate(&self, shared_bus: Option<bool>) -> Result<()> {
        let fail = |msg: String| Err(Error::ScheduleFormat(msg));
        if self.version != SCHEDULE_VERSION {
            return fail(format!("unsupported version {}", self.version));
        }
        if self.devices.is_empty() {
            return fail("no devices".into());
        }
        let total: u64 = self.devices.iter().map(|d| d.rows).sum();
        if total != self.dims.m() {
            return fail(format!("rows sum to {total}, expected {}", self.dims.m()));
        }
        let mut completion: f64 = 0.0;
        for (i, d) in self.devices.iter().enumerate() {
            if self.devices[..i]
                .iter()
                .any(|o| o.id == d.id || o.priority == d.priority)
            {
                return fail(format!("device `{}`: duplicate id or priority", d.id));
            }
            let a = DeviceAssignment {
                device: d.id.clone(),
                rows: d.rows,
                n: self.dims.n(),
                k: self.dims.k(),
            };
            check_cover(&a, &d.tiles).or_else(|e| fail(e.to_string()))?;
            let ordered = [d.copy_in, d.compute, d.copy_out]
                .iter()
                .all(|iv| iv.start >= 0.0 && iv.start <= iv.end)
                && d.copy_in.end <= d.compute.start
                && d.compute.end <= d.copy_out.start;
            if !ordered {
                return fail(format!("device `{}`: phases out of order", d.id));
            }
            if d.is_active() {
                completion = completion.max(d.completion());
            }
        }
        if completion != self.makespan {
            return fail(format!(
                "makespan {} differs from last completion {completion}",
                self.makespan
            ));
        }
        if shared_bus == Some(true) {
            self.check_bus()?;
        }
        Ok(())
    }

    /// Copy-ins back to back in priority order, then copy-outs in priority order.
    fn check_bus(&self) -> Result<()> {
        let mut users: Vec<&ScheduledDevice> = self
            .devices
            .iter()
            .filter(|d| d.is_active() && !(d.copy_in.is_empty() && d.copy_out.is_empty()))
            .collect();
        users.sort_by_key(|d| d.priority);
        let sequence = users
            .iter()
            .map(|d| d.copy_in)
            .chain(users.iter().map(|d| d.copy_out));
        let mut free = 0.0;
        for iv in sequence {
            if iv.start < free {
                return Err(Error::ScheduleFormat(format!(
                    "bus transfer starting at {} overlaps one ending at {free}",
                    iv.start
                )));
            }
            free = iv.end;
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("schedule serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Schedule> {
        let schedule: Schedule =
            serde_json::from_str(text).map_err(|e| Error::ScheduleFormat(e.to_string()))?;
        schedule.validate(None)?;
        Ok(schedule)
    }
}

pub fn save_schedule(schedule: &Schedule, path: &Path) -> Result<()> {
    fs::write(path, schedule.to_json()).map_err(|e| Error::io(path, e))
}

pub fn load_schedule(path: &Path) -> Result<Schedule> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Schedule::from_json(&text)
}

/// Seconds written with exactly 9 decimals.
pub(crate) fn raw_secs(v: f64) -> Box<RawValue> {
    let v = if v == 0.0 { 0.0 } else { v };
    RawValue::from_string(format!("{v:.9}")).expect("finite float is valid JSON")
}

fn finite<E: serde::de::Error>(v: f64) -> Result<f64, E> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(E::custom("time must be finite"))
    }
}

pub(crate) mod secs_9 {
    use super::*;

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        raw_secs(*v).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        finite(f64::deserialize(d)?)
    }
}

mod interval_9 {
    use super::*;

    pub fn serialize<S: Serializer>(v: &Interval, s: S) -> Result<S::Ok, S::Error> {
        [raw_secs(v.start), raw_secs(v.end)].serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Interval, D::Error> {
        let [start, end] = <[f64; 2]>::deserialize(d)?;
        let (start, end) = (finite(start)?, finite(end)?);
        if end < start {
            return Err(D::Error::custom(format!(
                "interval [{start}, {end}] ends before it starts"
            )));
        }
        Ok(Interval::new(start, end))
    }
}
