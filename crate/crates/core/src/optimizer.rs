//! Min-max makespan work split.
//!
//! The split is a linear program over each device's share of the rows of `A`
//! plus auxiliary timeline variables (copy-in end, compute end, copy-out end
//! per device) and the makespan `T`, minimized subject to the bus rules in
//! [`crate::timeline`]. Max terms are encoded as pairs of `>=` constraints;
//! minimizing `T` makes them tight.
//!
//! Share variables are expressed as fractions of `m` (so `sum = 1`) rather
//! than raw ops; at `N ~ 1e13` raw ops would leave the tableau badly scaled.

use log::debug;

use crate::device_model::{MachineProfile, MatrixDims, OpsCount};
use crate::error::{Error, Result};
use crate::lp::{self, Constraint, LinearProgram, Relation};
use crate::timeline::{PhaseTimes, TimelineModel};

/// Exhaustive subset search is used up to this many devices; above it the
/// drop-and-resolve fixpoint takes over.
pub const SUBSET_SEARCH_MAX_DEVICES: usize = 10;

/// Largest machine the grid oracle accepts.
pub const ORACLE_MAX_DEVICES: usize = 3;

#[derive(Debug, Clone, Copy)]
pub struct SplitProblem<'a> {
    pub machine: &'a MachineProfile,
    pub dims: MatrixDims,
}

impl<'a> SplitProblem<'a> {
    pub fn new(machine: &'a MachineProfile, dims: MatrixDims) -> Self {
        SplitProblem { machine, dims }
    }

    /// `N = m * n * k`.
    pub fn total_ops(&self) -> OpsCount {
        self.dims.ops()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LpVar {
    /// Fraction of the rows of `A` given to a device (index into `machine.devices`).
    Share(usize),
    CopyInEnd(usize),
    ComputeEnd(usize),
    CopyOutEnd(usize),
    Makespan,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConstraintKind {
    Conservation,
    /// Host device: no copy-in.
    HostCopyIn(usize),
    /// Host device: copy-out end equals compute end.
    HostCopyOut(usize),
    /// First (or only, on exclusive links) copy-in of a device.
    CopyIn(usize),
    /// Copy-in of `to` starts when `from`'s copy-in ends on the shared bus.
    CopyInChain {
        from: usize,
        to: usize,
    },
    Compute(usize),
    CopyOutAfterCompute(usize),
    /// First copy-out waits for the last copy-in on the bus.
    CopyOutAfterCopyIns {
        device: usize,
        last_in: usize,
    },
    CopyOutChain {
        from: usize,
        to: usize,
    },
    MakespanBound(usize),
}

#[derive(Debug, Clone)]
pub struct LpFormulation {
    pub program: LinearProgram,
    pub vars: Vec<LpVar>,
    pub kinds: Vec<ConstraintKind>,
    /// Participating devices, in priority order.
    pub devices: Vec<usize>,
}

impl LpFormulation {
    pub fn var_index(&self, var: LpVar) -> Option<usize> {
        self.vars.iter().position(|&v| v == var)
    }

    pub fn count_shares(&self) -> usize {
        self.vars
            .iter()
            .filter(|v| matches!(v, LpVar::Share(_)))
            .count()
    }

    pub fn count_timeline(&self) -> usize {
        self.vars
            .iter()
            .filter(|v| {
                matches!(
                    v,
                    LpVar::CopyInEnd(_) | LpVar::ComputeEnd(_) | LpVar::CopyOutEnd(_)
                )
            })
            .count()
    }
}

/// Per-device LP for every device of the machine.
pub fn build_lp(problem: &SplitProblem) -> LpFormulation {
    let all: Vec<usize> = (0..problem.machine.devices.len()).collect();
    build_lp_for(problem, &all)
}

/// LP restricted to `active` devices; every participant pays its intercept
/// and full B transfer, which is why non-participation is decided outside.
pub fn build_lp_for(problem: &SplitProblem, active: &[usize]) -> LpFormulation {
    let machine = problem.machine;
    let dims = &problem.dims;
    let mut devices: Vec<usize> = active.to_vec();
    devices.sort_by_key(|&i| machine.devices[i].priority);

    let mut vars = Vec::new();
    for &d in &devices {
        vars.push(LpVar::Share(d));
    }
    for &d in &devices {
        vars.push(LpVar::CopyInEnd(d));
        vars.push(LpVar::ComputeEnd(d));
        vars.push(LpVar::CopyOutEnd(d));
    }
    vars.push(LpVar::Makespan);
    let idx = |v: LpVar| {
        vars.iter()
            .position(|&x| x == v)
            .expect("variable registered")
    };

    let (m, n, k) = (dims.m() as f64, dims.n() as f64, dims.k() as f64);
    let mut constraints = Vec::new();
    let mut kinds = Vec::new();
    let mut push = |kind: ConstraintKind, c: Constraint| {
        kinds.push(kind);
        constraints.push(c);
    };

    push(
        ConstraintKind::Conservation,
        Constraint::new(
            devices
                .iter()
                .map(|&d| (idx(LpVar::Share(d)), 1.0))
                .collect(),
            Relation::Eq,
            1.0,
        ),
    );

    let bus_devices: Vec<usize> = devices
        .iter()
        .copied()
        .filter(|&d| !machine.devices[d].kind.is_host())
        .collect();

    for &d in &devices {
        let dev = &machine.devices[d];
        let share = idx(LpVar::Share(d));
        let (cin, comp, cout) = (
            idx(LpVar::CopyInEnd(d)),
            idx(LpVar::ComputeEnd(d)),
            idx(LpVar::CopyOutEnd(d)),
        );
        let compute_per_share = dev.compute.slope * n * k * m;
        if dev.kind.is_host() {
            push(
                ConstraintKind::HostCopyIn(d),
                Constraint::new(vec![(cin, 1.0)], Relation::Eq, 0.0),
            );
            push(
                ConstraintKind::Compute(d),
                Constraint::new(
                    vec![(comp, 1.0), (share, -compute_per_share)],
                    Relation::Eq,
                    dev.compute.intercept,
                ),
            );
            push(
                ConstraintKind::HostCopyOut(d),
                Constraint::new(vec![(cout, 1.0), (comp, -1.0)], Relation::Eq, 0.0),
            );
        } else {
            let e = dev.elem_size as f64;
            let in_per_share = e * k * m / dev.bandwidth;
            let in_fixed = e * k * n / dev.bandwidth;
            let position = bus_devices.iter().position(|&b| b == d).unwrap();
            if machine.shared_bus && position > 0 {
                let prev = bus_devices[position - 1];
                push(
                    ConstraintKind::CopyInChain { from: prev, to: d },
                    Constraint::new(
                        vec![
                            (cin, 1.0),
                            (idx(LpVar::CopyInEnd(prev)), -1.0),
                            (share, -in_per_share),
                        ],
                        Relation::Eq,
                        in_fixed,
                    ),
                );
            } else {
                push(
                    ConstraintKind::CopyIn(d),
                    Constraint::new(
                        vec![(cin, 1.0), (share, -in_per_share)],
                        Relation::Eq,
                        in_fixed,
                    ),
                );
            }
            push(
                ConstraintKind::Compute(d),
                Constraint::new(
                    vec![(comp, 1.0), (cin, -1.0), (share, -compute_per_share)],
                    Relation::Eq,
                    dev.compute.intercept,
                ),
            );
            let out_per_share = e * n * m / dev.bandwidth;
            push(
                ConstraintKind::CopyOutAfterCompute(d),
                Constraint::new(
                    vec![(cout, 1.0), (comp, -1.0), (share, -out_per_share)],
                    Relation::Ge,
                    0.0,
                ),
            );
            if machine.shared_bus {
                if position == 0 {
                    let last_in = *bus_devices.last().unwrap();
                    if last_in != d {
                        push(
                            ConstraintKind::CopyOutAfterCopyIns { device: d, last_in },
                            Constraint::new(
                                vec![
                                    (cout, 1.0),
                                    (idx(LpVar::CopyInEnd(last_in)), -1.0),
                                    (share, -out_per_share),
                                ],
                                Relation::Ge,
                                0.0,
                            ),
                        );
                    }
                } else {
                    let prev = bus_devices[position - 1];
                    push(
                        ConstraintKind::CopyOutChain { from: prev, to: d },
                        Constraint::new(
                            vec![
                                (cout, 1.0),
                                (idx(LpVar::CopyOutEnd(prev)), -1.0),
                                (share, -out_per_share),
                            ],
                            Relation::Ge,
                            0.0,
                        ),
                    );
                }
            }
        }
        push(
            ConstraintKind::MakespanBound(d),
            Constraint::new(
                vec![(idx(LpVar::Makespan), 1.0), (cout, -1.0)],
                Relation::Ge,
                0.0,
            ),
        );
    }

    let mut objective = vec![0.0; vars.len()];
    objective[idx(LpVar::Makespan)] = 1.0;
    LpFormulation {
        program: LinearProgram {
            num_vars: vars.len(),
            objective,
            constraints,
        },
        vars,
        kinds,
        devices,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DeviceShare {
    pub id: String,
    pub rows: u64,
    pub ops: OpsCount,
    /// Predicted phases; `None` when the device gets no work.
    pub phases: Option<PhaseTimes>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WorkloadSplit {
    pub dims: MatrixDims,
    /// In `machine.devices` order.
    pub devices: Vec<DeviceShare>,
    pub makespan: f64,
}

impl WorkloadSplit {
    pub fn rows(&self) -> Vec<u64> {
        self.devices.iter().map(|d| d.rows).collect()
    }

    pub fn total_ops(&self) -> OpsCount {
        OpsCount(self.devices.iter().map(|d| d.ops.0).sum())
    }

    /// Percentage of `N` per device, `c_i / N * 100`.
    pub fn percentages(&self) -> Vec<f64> {
        let total = self.dims.ops().as_f64();
        self.devices
            .iter()
            .map(|d| 100.0 * d.ops.as_f64() / total)
            .collect()
    }

    pub fn share_of(&self, id: &str) -> Option<&DeviceShare> {
        self.devices.iter().find(|d| d.id == id)
    }

    pub(crate) fn from_rows(machine: &MachineProfile, dims: MatrixDims, rows: &[u64]) -> Self {
        let timeline = TimelineModel::new(machine, &dims).evaluate(rows);
        let devices = machine
            .devices
            .iter()
            .zip(rows)
            .zip(timeline.phases)
            .map(|((dev, &r), phases)| DeviceShare {
                id: dev.id.clone(),
                rows: r,
                ops: dims.ops_for_rows(r),
                phases,
            })
            .collect();
        WorkloadSplit {
            dims,
            devices,
            makespan: timeline.makespan,
        }
    }
}

/// Solves the split LP and rounds shares to whole rows.
///
/// Participation is decided by enumerating device subsets (each solved as an
/// LP and evaluated after rounding), because a participant's fixed B transfer
/// makes the choice of participants non-convex. Machines larger than
/// [`SUBSET_SEARCH_MAX_DEVICES`] fall back to dropping devices whose share is
/// below one row and re-solving until nothing changes.
pub fn solve_split(problem: &SplitProblem) -> Result<WorkloadSplit> {
    let machine = problem.machine;
    let count = machine.devices.len();
    let model = TimelineModel::new(machine, &problem.dims);

    let mut best: Option<(f64, Vec<u64>)> = None;
    let mut consider = |rows: Vec<u64>| {
        let makespan = model.makespan(&rows);
        if best.as_ref().is_none_or(|(b, _)| makespan < *b) {
            best = Some((makespan, rows));
        }
    };

    if count <= SUBSET_SEARCH_MAX_DEVICES {
        for mask in 1u32..(1 << count) {
            let active: Vec<usize> = (0..count).filter(|i| mask & (1 << i) != 0).collect();
            let shares = solve_shares(problem, &active)?;
            consider(round_active(problem, &shares, &active)?);
        }
    } else {
        let mut active: Vec<usize> = (0..count).collect();
        loop {
            let shares = solve_shares(problem, &active)?;
            let m = problem.dims.m() as f64;
            let keep: Vec<usize> = active
                .iter()
                .copied()
                .filter(|&d| shares[d] * m >= 1.0)
                .collect();
            if keep.len() == active.len() || keep.is_empty() {
                consider(round_active(problem, &shares, &active)?);
                break;
            }
            debug!(
                "dropping {} sub-row devices and re-solving",
                active.len() - keep.len()
            );
            active = keep;
        }
    }

    let (_, rows) = best.ok_or_else(|| Error::Invariant("no candidate split".into()))?;
    let split = WorkloadSplit::from_rows(machine, problem.dims, &rows);
    check_conservation(&split)?;
    Ok(split)
}

/// Continuous row fractions per machine device (zero outside `active`).
fn solve_shares(problem: &SplitProblem, active: &[usize]) -> Result<Vec<f64>> {
    let f = build_lp_for(problem, active);
    let sol = lp::solve(&f.program)?;
    let mut shares = vec![0.0; problem.machine.devices.len()];
    for (j, var) in f.vars.iter().enumerate() {
        if let LpVar::Share(d) = var {
            shares[*d] = sol.x[j].clamp(0.0, 1.0);
        }
    }
    Ok(shares)
}

/// Floors each share to whole rows (and to the device's row quantum), then
/// settles the difference to `m` one row quantum at a time, each time on the
/// device where it hurts the makespan least (ties: earlier own completion,
/// then priority). Devices with a row quantum above one are also tried
/// rounded up. A remainder no device can take in whole quanta goes to a host
/// if there is one, else to the highest-priority device whose quantum
/// divides it.
pub fn round_shares(problem: &SplitProblem, shares: &[f64]) -> Result<Vec<u64>> {
    let all: Vec<usize> = (0..problem.machine.devices.len()).collect();
    round_active(problem, shares, &all)
}

/// Quantized devices tried both ways; beyond this many only the floor is used.
const MAX_ROUND_UP: usize = 4;

/// [`round_shares`] preferring recipients inside `active`, so a subset's
/// rounding does not depend on devices outside it.
fn round_active(problem: &SplitProblem, shares: &[f64], active: &[usize]) -> Result<Vec<u64>> {
    let machine = problem.machine;
    let m = problem.dims.m();
    let quantum = |i: usize| machine.devices[i].kind.row_quantum();
    let floor: Vec<u64> = shares
        .iter()
        .enumerate()
        .map(|(i, &s)| {
            let r = ((s * m as f64).floor() as u64).min(m);
            r - r % quantum(i)
        })
        .collect();
    let model = TimelineModel::new(machine, &problem.dims);
    let up: Vec<usize> = active
        .iter()
        .copied()
        .filter(|&i| quantum(i) > 1 && shares[i] > 0.0)
        .take(MAX_ROUND_UP)
        .collect();

    let mut best: Option<(f64, Vec<u64>)> = None;
    let mut first_err = None;
    for mask in 0u32..(1 << up.len()) {
        let mut rows = floor.clone();
        for (bit, &i) in up.iter().enumerate() {
            if mask & (1 << bit) != 0 {
                rows[i] += quantum(i);
            }
        }
        match settle(&model, machine, shares, active, m, rows) {
            Ok(rows) => {
                let t = model.makespan(&rows);
                if best.as_ref().is_none_or(|(b, _)| t < *b) {
                    best = Some((t, rows));
                }
            }
            Err(e) => {
                first_err.get_or_insert(e);
            }
        }
    }
    match (best, first_err) {
        (Some((_, rows)), _) => Ok(rows),
        (None, Some(e)) => Err(e),
        (None, None) => Err(Error::Invariant("no rounding candidate".into())),
    }
}

/// Adds or removes row quanta on `active` devices until `rows` sums to `m`.
fn settle(
    model: &TimelineModel,
    machine: &MachineProfile,
    shares: &[f64],
    active: &[usize],
    m: u64,
    mut rows: Vec<u64>,
) -> Result<Vec<u64>> {
    let quantum = |i: usize| machine.devices[i].kind.row_quantum();
    let mut assigned: u64 = rows.iter().sum();
    while assigned != m {
        let adding = assigned < m;
        let gap = m.abs_diff(assigned);
        let pick = active
            .iter()
            .copied()
            .filter(|&i| quantum(i) <= gap && (adding || rows[i] >= quantum(i)))
            .map(|i| {
                let mut trial = rows.clone();
                if adding {
                    trial[i] += quantum(i);
                } else {
                    trial[i] -= quantum(i);
                }
                let t = model.evaluate(&trial);
                let done = t.phases[i].as_ref().map_or(0.0, |p| p.copy_out.end);
                (i, t.makespan, done)
            })
            .min_by(|a, b| {
                a.1.total_cmp(&b.1).then(a.2.total_cmp(&b.2)).then(
                    machine.devices[a.0]
                        .priority
                        .cmp(&machine.devices[b.0].priority),
                )
            });
        match pick {
            Some((i, _, _)) if adding => {
                rows[i] += quantum(i);
                assigned += quantum(i);
            }
            Some((i, _, _)) => {
                rows[i] -= quantum(i);
                assigned -= quantum(i);
            }
            None if adding => {
                let recipient = residue_recipient(machine, shares, active, gap)
                    .ok_or(Error::UnalignableRows { rows: gap })?;
                rows[recipient] += gap;
                assigned = m;
            }
            None => return Err(Error::UnalignableRows { rows: gap }),
        }
    }
    Ok(rows)
}

fn residue_recipient(
    machine: &MachineProfile,
    shares: &[f64],
    active: &[usize],
    residue: u64,
) -> Option<usize> {
    (0..machine.devices.len())
        .filter(|&i| residue.is_multiple_of(machine.devices[i].kind.row_quantum()))
        .min_by_key(|&i| {
            let d = &machine.devices[i];
            (
                !active.contains(&i),
                !d.kind.is_host(),
                shares[i] <= 0.0,
                d.priority,
            )
        })
}

fn check_conservation(split: &WorkloadSplit) -> Result<()> {
    let rows: u64 = split.devices.iter().map(|d| d.rows).sum();
    if rows != split.dims.m() || split.total_ops() != split.dims.ops() {
        return Err(Error::Invariant(format!(
            "split assigns {rows} rows, expected {}",
            split.dims.m()
        )));
    }
    Ok(())
}

/// Exhaustive search over row splits at granularity `max(1, m / resolution)`
/// rows (rounded up to each device's row quantum), scored with the same
/// timeline rules as [`solve_split`]. Splits that break a row quantum are
/// skipped. Ties go to the first assignment found.
pub fn oracle_grid_search(problem: &SplitProblem, resolution: u64) -> Result<WorkloadSplit> {
    let machine = problem.machine;
    let count = machine.devices.len();
    if count > ORACLE_MAX_DEVICES {
        return Err(Error::TooManyDevices {
            got: count,
            max: ORACLE_MAX_DEVICES,
        });
    }
    if resolution < 100 {
        return Err(Error::InvalidConfig(format!(
            "oracle resolution {resolution} < 100"
        )));
    }
    let m = problem.dims.m();
    let step = (m / resolution).max(1);
    let model = TimelineModel::new(machine, &problem.dims);
    // Quantized devices first, so the device taking the remainder is unconstrained when possible.
    let mut order: Vec<usize> = (0..count).collect();
    order.sort_by_key(|&i| std::cmp::Reverse(machine.devices[i].kind.row_quantum()));
    let quanta: Vec<u64> = machine
        .devices
        .iter()
        .map(|d| d.kind.row_quantum())
        .collect();

    let mut search = Grid {
        model: &model,
        order: &order,
        quanta: &quanta,
        step,
        rows: vec![0u64; count],
        best: (f64::INFINITY, None),
    };
    search.walk(0, m);
    let rows = search.best.1.ok_or(Error::Infeasible)?;
    let split = WorkloadSplit::from_rows(machine, problem.dims, &rows);
    check_conservation(&split)?;
    Ok(split)
}

struct Grid<'a> {
    model: &'a TimelineModel,
    order: &'a [usize],
    quanta: &'a [u64],
    step: u64,
    rows: Vec<u64>,
    best: (f64, Option<Vec<u64>>),
}

impl Grid<'_> {
    fn walk(&mut self, depth: usize, remaining: u64) {
        let dev = self.order[depth];
        let q = self.quanta[dev];
        if depth + 1 == self.order.len() {
            if !remaining.is_multiple_of(q) {
                return;
            }
            self.rows[dev] = remaining;
            let t = self.model.makespan(&self.rows);
            if t < self.best.0 {
                self.best = (t, Some(self.rows.clone()));
            }
            return;
        }
        let step = self.step.div_ceil(q) * q;
        let top = remaining - remaining % q;
        let mut r = 0;
        loop {
            self.rows[dev] = r;
            self.walk(depth + 1, remaining - r);
            if r == top {
                break;
            }
            r = (r + step).min(top);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::device_model::{DeviceKind, DeviceProfile, LinearModel, OpsWindow};

    pub(crate) fn device(
        id: &str,
        kind: DeviceKind,
        slope: f64,
        bw: f64,
        priority: u32,
    ) -> DeviceProfile {
        DeviceProfile {
            id: id.into(),
            kind,
            compute: LinearModel::new(slope, 0.0).unwrap(),
            bandwidth: if kind.is_host() { 0.0 } else { bw },
            elem_size: 4,
            priority,
            window: OpsWindow::default_for(&kind),
        }
    }

    fn cpu(id: &str, slope: f64, priority: u32) -> DeviceProfile {
        device(
            id,
            DeviceKind::Cpu {
                cache_bytes: 1 << 27,
            },
            slope,
            0.0,
            priority,
        )
    }

    #[test]
    fn single_device_takes_everything() {
        let mut c = cpu("cpu0", 1e-12, 0);
        c.compute.intercept = 0.25;
        let machine = MachineProfile::new(vec![c], true).unwrap();
        let dims = MatrixDims::new(3000, 1000, 1_000_000).unwrap();
        let p = SplitProblem::new(&machine, dims);
        let f = build_lp(&p);
        assert_eq!(f.count_shares(), 1);
        let s = solve_split(&p).unwrap();
        assert_eq!(s.devices[0].ops, dims.ops());
        assert!((s.makespan - (1e-12 * 3e12 + 0.25)).abs() < 1e-12);
        let o = oracle_grid_search(&p, 100).unwrap();
        assert_eq!(o.devices[0].rows, 3000);
    }

    #[test]
    fn structural_counts() {
        let machine = MachineProfile::new(
            vec![
                device("gpu", DeviceKind::Gpu, 1e-12, 1e10, 1),
                device("xpu", DeviceKind::Xpu { align: 8 }, 1e-13, 1e10, 0),
            ],
            true,
        )
        .unwrap();
        let dims = MatrixDims::new(1000, 1000, 1000).unwrap();
        let f = build_lp(&SplitProblem::new(&machine, dims));
        assert_eq!(f.count_shares(), 2);
        assert_eq!(f.count_timeline(), 6);
        assert_eq!(f.vars.iter().filter(|v| **v == LpVar::Makespan).count(), 1);
        assert_eq!(f.devices, vec![1, 0]);
        assert!(f
            .kinds
            .contains(&ConstraintKind::CopyInChain { from: 1, to: 0 }));
        assert!(f
            .kinds
            .contains(&ConstraintKind::CopyOutChain { from: 1, to: 0 }));
    }

    #[test]
    fn chain_skips_host() {
        let machine = MachineProfile::new(
            vec![
                cpu("cpu", 1e-11, 2),
                device("gpu", DeviceKind::Gpu, 1e-12, 1e10, 1),
                device("xpu", DeviceKind::Xpu { align: 8 }, 1e-13, 1e10, 0),
            ],
            true,
        )
        .unwrap();
        let dims = MatrixDims::new(1000, 1000, 1000).unwrap();
        let f = build_lp(&SplitProblem::new(&machine, dims));
        let chains: Vec<_> = f
            .kinds
            .iter()
            .filter(|k| matches!(k, ConstraintKind::CopyInChain { .. }))
            .collect();
        assert_eq!(
            chains,
            vec![&ConstraintKind::CopyInChain { from: 2, to: 1 }]
        );
        assert!(f.kinds.contains(&ConstraintKind::HostCopyIn(0)));
    }

    #[test]
    fn copy_free_two_devices_balance() {
        // a1*c1 = a2*c2, c1 + c2 = N -> c1 = 2e12, c2 = 1e12, makespan 2 s.
        let machine =
            MachineProfile::new(vec![cpu("fast", 1e-12, 0), cpu("slow", 2e-12, 1)], true).unwrap();
        let dims = MatrixDims::new(3000, 1000, 1_000_000).unwrap();
        let p = SplitProblem::new(&machine, dims);
        let s = solve_split(&p).unwrap();
        assert_eq!(s.devices[0].ops, OpsCount(2_000_000_000_000));
        assert_eq!(s.devices[1].ops, OpsCount(1_000_000_000_000));
        assert!((s.makespan - 2.0).abs() < 1e-12);
        let o = oracle_grid_search(&p, 3000).unwrap();
        assert!((o.makespan - 2.0).abs() / 2.0 <= 1e-3);
    }

    #[test]
    fn oracle_rejects_large_machines() {
        let machine = MachineProfile::new(
            (0..4).map(|i| cpu(&format!("c{i}"), 1e-12, i)).collect(),
            true,
        )
        .unwrap();
        let dims = MatrixDims::new(100, 10, 10).unwrap();
        assert!(matches!(
            oracle_grid_search(&SplitProblem::new(&machine, dims), 100),
            Err(Error::TooManyDevices { got: 4, max: 3 })
        ));
    }

    #[test]
    fn slow_bus_device_is_dropped() {
        // The GPU would spend far longer moving B than the CPU needs in total.
        let machine = MachineProfile::new(
            vec![
                cpu("cpu", 1e-12, 1),
                device("gpu", DeviceKind::Gpu, 1e-13, 1e6, 0),
            ],
            true,
        )
        .unwrap();
        let dims = MatrixDims::new(2000, 2000, 2000).unwrap();
        let s = solve_split(&SplitProblem::new(&machine, dims)).unwrap();
        assert_eq!(s.rows(), vec![2000, 0]);
        assert!(s.devices[1].phases.is_none());
    }

    #[test]
    fn residue_goes_to_host() {
        let machine = MachineProfile::new(
            vec![
                cpu("cpu", 1e-11, 1),
                device("xpu", DeviceKind::Xpu { align: 8 }, 1e-13, 1e10, 0),
            ],
            true,
        )
        .unwrap();
        let dims = MatrixDims::new(1003, 1000, 1000).unwrap();
        let p = SplitProblem::new(&machine, dims);
        let rows = round_shares(&p, &[0.0, 1.0]).unwrap();
        assert_eq!(rows, vec![3, 1000]);
    }

    #[test]
    fn residue_without_unconstrained_device() {
        let machine = MachineProfile::new(
            vec![device("xpu", DeviceKind::Xpu { align: 8 }, 1e-13, 1e10, 0)],
            true,
        )
        .unwrap();
        let dims = MatrixDims::new(1003, 1000, 1000).unwrap();
        assert!(matches!(
            round_shares(&SplitProblem::new(&machine, dims), &[1.0]),
            Err(Error::UnalignableRows { rows: 3 })
        ));
    }

    #[test]
    fn residue_without_host_goes_where_it_costs_least() {
        let machine = MachineProfile::new(
            vec![
                device("slow", DeviceKind::Gpu, 1e-10, 1e10, 0),
                device("fast", DeviceKind::Gpu, 1e-12, 1e10, 1),
            ],
            true,
        )
        .unwrap();
        let dims = MatrixDims::new(1003, 1000, 1000).unwrap();
        let rows = round_shares(&SplitProblem::new(&machine, dims), &[0.0, 0.997]).unwrap();
        assert_eq!(rows, vec![0, 1003]);
    }
}
