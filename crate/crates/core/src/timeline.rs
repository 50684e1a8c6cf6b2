//! Predicted execution timeline for a row assignment.
//!
//! These rules are the single definition of "makespan" used by the optimizer
//! (after rounding), the grid oracle and the scheduler:
//!
//! * shared bus: copy-ins run back to back in priority order starting at 0;
//!   each device computes as soon as its own copy-in ends; the first copy-out
//!   waits for both its device and the last copy-in, every later copy-out
//!   waits for its device and the previous copy-out.
//! * exclusive links: every device copies in at 0 and copies out right after
//!   computing.
//! * the host CPU computes from 0 and never touches the bus.
//!
//! Devices with zero rows take no part (no B transfer, no intercept).

use serde::{Deserialize, Serialize};

use crate::device_model::{MachineProfile, MatrixDims, OpsCount};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(from = "[f64; 2]", into = "[f64; 2]")]
pub struct Interval {
    pub start: f64,
    pub end: f64,
}

impl Interval {
    pub fn new(start: f64, end: f64) -> Self {
        Interval { start, end }
    }

    pub fn at(t: f64) -> Self {
        Interval { start: t, end: t }
    }

    pub fn len(&self) -> f64 {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end <= self.start
    }
}

impl From<[f64; 2]> for Interval {
    fn from(v: [f64; 2]) -> Self {
        Interval::new(v[0], v[1])
    }
}

impl From<Interval> for [f64; 2] {
    fn from(i: Interval) -> Self {
        [i.start, i.end]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PhaseTimes {
    pub copy_in: Interval,
    pub compute: Interval,
    pub copy_out: Interval,
}

impl PhaseTimes {
    pub fn completion(&self) -> f64 {
        self.copy_out.end
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Timeline {
    /// Indexed like `machine.devices`; `None` for devices with no rows.
    pub phases: Vec<Option<PhaseTimes>>,
    pub makespan: f64,
}

#[derive(Debug, Clone, Copy)]
struct Cost {
    host: bool,
    slope: f64,
    intercept: f64,
    elem: u128,
    bandwidth: f64,
}

/// Precomputed per-device cost terms for repeated timeline evaluation.
#[derive(Debug, Clone)]
pub struct TimelineModel {
    costs: Vec<Cost>,
    order: Vec<usize>,
    shared_bus: bool,
    n: u128,
    k: u128,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Durations {
    pub copy_in: f64,
    pub compute: f64,
    pub copy_out: f64,
}

impl TimelineModel {
    pub fn new(machine: &MachineProfile, dims: &MatrixDims) -> Self {
        let costs = machine
            .devices
            .iter()
            .map(|d| Cost {
                host: d.kind.is_host(),
                slope: d.compute.slope,
                intercept: d.compute.intercept,
                elem: d.elem_size as u128,
                bandwidth: d.bandwidth,
            })
            .collect();
        TimelineModel {
            costs,
            order: machine.priority_order(),
            shared_bus: machine.shared_bus,
            n: dims.n() as u128,
            k: dims.k() as u128,
        }
    }

    pub fn device_count(&self) -> usize {
        self.costs.len()
    }

    /// Phase durations for `rows` rows on device `i`; mirrors
    /// `DeviceProfile::{compute,copy_in,copy_out}_seconds` exactly.
    pub fn durations(&self, i: usize, rows: u64) -> Durations {
        let c = &self.costs[i];
        let ops = OpsCount((rows as u128 * self.n * self.k) as u64);
        let compute = c.slope * ops.as_f64() + c.intercept;
        if c.host {
            return Durations {
                copy_in: 0.0,
                compute,
                copy_out: 0.0,
            };
        }
        let r = rows as u128;
        let bytes_in = c.elem * (r * self.k + self.k * self.n);
        let bytes_out = c.elem * (r * self.n);
        Durations {
            copy_in: bytes_in as f64 / c.bandwidth,
            compute,
            copy_out: bytes_out as f64 / c.bandwidth,
        }
    }

    pub fn evaluate(&self, rows: &[u64]) -> Timeline {
        let mut phases = vec![None; self.costs.len()];
        let makespan = self.walk(rows, |i, p| phases[i] = Some(p));
        Timeline { phases, makespan }
    }

    /// Makespan only; allocation free.
    pub fn makespan(&self, rows: &[u64]) -> f64 {
        self.walk(rows, |_, _| {})
    }

    fn walk(&self, rows: &[u64], mut emit: impl FnMut(usize, PhaseTimes)) -> f64 {
        debug_assert_eq!(rows.len(), self.costs.len());
        const INLINE: usize = 16;
        let mut inline = [Slot::default(); INLINE];
        let mut heap = Vec::new();
        let slots: &mut [Slot] = if self.costs.len() <= INLINE {
            &mut inline[..self.costs.len()]
        } else {
            heap.resize(self.costs.len(), Slot::default());
            &mut heap
        };

        let mut makespan: f64 = 0.0;
        let mut bus = 0.0;
        for &i in &self.order {
            if rows[i] == 0 {
                continue;
            }
            let d = self.durations(i, rows[i]);
            if self.costs[i].host {
                makespan = makespan.max(d.compute);
                emit(
                    i,
                    PhaseTimes {
                        copy_in: Interval::at(0.0),
                        compute: Interval::new(0.0, d.compute),
                        copy_out: Interval::at(d.compute),
                    },
                );
                continue;
            }
            let in_start = if self.shared_bus { bus } else { 0.0 };
            let in_end = in_start + d.copy_in;
            if self.shared_bus {
                bus = in_end;
            }
            slots[i] = Slot {
                in_start,
                in_end,
                comp_end: in_end + d.compute,
                copy_out: d.copy_out,
            };
        }

        let mut out = bus;
        for &i in &self.order {
            if rows[i] == 0 || self.costs[i].host {
                continue;
            }
            let s = slots[i];
            let out_start = if self.shared_bus {
                out.max(s.comp_end)
            } else {
                s.comp_end
            };
            let out_end = out_start + s.copy_out;
            if self.shared_bus {
                out = out_end;
            }
            makespan = makespan.max(out_end);
            emit(
                i,
                PhaseTimes {
                    copy_in: Interval::new(s.in_start, s.in_end),
                    compute: Interval::new(s.in_end, s.comp_end),
                    copy_out: Interval::new(out_start, out_end),
                },
            );
        }
        makespan
    }
}

#[derive(Debug, Clone, Copy, Default)]
struct Slot {
    in_start: f64,
    in_end: f64,
    comp_end: f64,
    copy_out: f64,
}

pub fn evaluate(machine: &MachineProfile, dims: &MatrixDims, rows: &[u64]) -> Timeline {
    TimelineModel::new(machine, dims).evaluate(rows)
}
