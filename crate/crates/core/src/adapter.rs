//! Turns per-device ops counts into row counts and near-square tiles.
//!
//! `n` is never split and `k` is only split into divisors, so each device
//! owns a horizontal band of `A`/`C`, cut into column strips of width `k'`
//! and, inside each strip, into `q` balanced row blocks.
//!
//! Tiles are scored with the squareness sum
//! `sq = sum(min(m', k') / max(m', k') * m' * k' * n)`, which simplifies to
//! `sum(min(m', k')^2 * n)` and is therefore computed exactly in integers.

use log::warn;
use serde::{Deserialize, Serialize};

use crate::device_model::{
    DeviceKind, DeviceProfile, MachineProfile, MatrixDims, OpsCount, OpsWindow,
};
use crate::error::{Error, Result};
use crate::optimizer::WorkloadSplit;
use crate::timeline::TimelineModel;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeviceAssignment {
    pub device: String,
    pub rows: u64,
    pub n: u64,
    pub k: u64,
}

impl DeviceAssignment {
    pub fn ops(&self) -> OpsCount {
        OpsCount(self.rows * self.n * self.k)
    }
}

/// One sub-product `(m' x k') * (k' x n)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Tile {
    pub m: u64,
    pub k: u64,
    pub n: u64,
}

impl Tile {
    pub fn ops(&self) -> u64 {
        self.m * self.n * self.k
    }
}

pub fn squareness(tiles: &[Tile]) -> u128 {
    tiles
        .iter()
        .map(|t| {
            let s = t.m.min(t.k) as u128;
            s * s * t.n as u128
        })
        .sum()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DevicePlan {
    pub assignment: DeviceAssignment,
    /// Strip-major: all row blocks of the first `k'` strip, then the next.
    pub tiles: Vec<Tile>,
    pub squareness: u128,
    /// Set when no tiling fit the profiled ops window and a single tile was used.
    pub window_violation: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TilePlan {
    pub dims: MatrixDims,
    /// In `machine.devices` order.
    pub devices: Vec<DevicePlan>,
}

impl TilePlan {
    pub fn squareness(&self) -> f64 {
        self.devices.iter().map(|d| d.squareness as f64).sum()
    }

    pub fn rows(&self) -> Vec<u64> {
        self.devices.iter().map(|d| d.assignment.rows).collect()
    }

    /// Checks every structural invariant against `machine`.
    pub fn validate(&self, machine: &MachineProfile) -> Result<()> {
        let fail = |msg: String| Err(Error::Invariant(msg));
        if self.devices.len() != machine.devices.len() {
            return fail("plan and machine disagree on device count".into());
        }
        let total: u64 = self.devices.iter().map(|d| d.assignment.rows).sum();
        if total != self.dims.m() {
            return fail(format!(
                "plan covers {total} rows, expected {}",
                self.dims.m()
            ));
        }
        for (plan, dev) in self.devices.iter().zip(&machine.devices) {
            let a = &plan.assignment;
            if a.device != dev.id || a.n != self.dims.n() || a.k != self.dims.k() {
                return fail(format!(
                    "assignment for `{}` does not match machine/dims",
                    a.device
                ));
            }
            if a.rows % dev.kind.row_quantum() != 0 {
                return fail(format!(
                    "`{}`: {} rows not a multiple of {}",
                    a.device,
                    a.rows,
                    dev.kind.row_quantum()
                ));
            }
            check_cover(a, &plan.tiles)?;
            if squareness(&plan.tiles) != plan.squareness {
                return fail(format!("`{}`: stale squareness", a.device));
            }
        }
        Ok(())
    }
}

/// Tiles must form strips of equal-`k'` row blocks summing to `rows`, with
/// every `k'` dividing `k` and the strip widths summing to `k`.
pub(crate) fn check_cover(a: &DeviceAssignment, tiles: &[Tile]) -> Result<()> {
    let fail = |msg: &str| Err(Error::Invariant(format!("`{}`: {msg}", a.device)));
    if a.rows == 0 {
        return if tiles.is_empty() {
            Ok(())
        } else {
            fail("tiles on an idle device")
        };
    }
    let (mut width, mut strip_rows, mut strip_k) = (0u64, 0u64, None);
    let mut ops: u128 = 0;
    for t in tiles {
        if t.n != a.n || t.m == 0 || t.k == 0 {
            return fail("tile with bad shape");
        }
        if !a.k.is_multiple_of(t.k) {
            return fail("tile k' does not divide k");
        }
        match strip_k {
            Some(kp) if kp != t.k => return fail("mixed k' inside a strip"),
            _ => strip_k = Some(t.k),
        }
        strip_rows += t.m;
        ops += t.ops() as u128;
        if strip_rows > a.rows {
            return fail("strip overflows the assigned rows");
        }
        if strip_rows == a.rows {
            width += t.k;
            strip_rows = 0;
            strip_k = None;
        }
    }
    if strip_rows != 0 || width != a.k {
        return fail("tiles do not cover rows x k exactly");
    }
    if ops != a.rows as u128 * a.n as u128 * a.k as u128 {
        return fail("tile ops do not sum to the assignment's ops");
    }
    Ok(())
}

/// `floor(c / (n * k))`.
pub fn ops_to_rows(c: OpsCount, dims: &MatrixDims) -> u64 {
    c.0 / dims.row_ops()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AlignedRows {
    pub rows: u64,
    pub shaved: u64,
}

/// Rounds an XPU's rows down to its alignment quantum; other kinds pass.
pub fn align_rows(rows: u64, dims: &MatrixDims, device: &DeviceProfile) -> Result<AlignedRows> {
    match device.kind {
        DeviceKind::Xpu { align } => {
            if !dims.k().is_multiple_of(align) {
                return Err(Error::UnalignableK {
                    device: device.id.clone(),
                    k: dims.k(),
                    align,
                });
            }
            let aligned = rows / align * align;
            Ok(AlignedRows {
                rows: aligned,
                shaved: rows - aligned,
            })
        }
        _ => Ok(AlignedRows { rows, shaved: 0 }),
    }
}

/// Gives `shaved` rows to the host CPU, or failing that to the unconstrained
/// device predicted to finish first. `assignments` follows `machine.devices`.
pub fn reassign_shaved(
    assignments: &mut [DeviceAssignment],
    shaved: u64,
    machine: &MachineProfile,
    dims: &MatrixDims,
) -> Result<()> {
    if shaved == 0 {
        return Ok(());
    }
    let host = machine
        .priority_order()
        .into_iter()
        .find(|&i| machine.devices[i].kind.is_host());
    let target = match host {
        Some(i) => i,
        None => {
            let rows: Vec<u64> = assignments.iter().map(|a| a.rows).collect();
            let timeline = TimelineModel::new(machine, dims).evaluate(&rows);
            (0..machine.devices.len())
                .filter(|&i| shaved.is_multiple_of(machine.devices[i].kind.row_quantum()))
                .min_by(|&a, &b| {
                    let ta = timeline.phases[a].map_or(0.0, |p| p.completion());
                    let tb = timeline.phases[b].map_or(0.0, |p| p.completion());
                    let qa = machine.devices[a].kind.row_quantum();
                    let qb = machine.devices[b].kind.row_quantum();
                    qa.cmp(&qb).then(ta.total_cmp(&tb)).then(
                        machine.devices[a]
                            .priority
                            .cmp(&machine.devices[b].priority),
                    )
                })
                .ok_or(Error::UnalignableRows { rows: shaved })?
        }
    };
    assignments[target].rows += shaved;
    Ok(())
}

fn divisors(k: u64) -> Vec<u64> {
    let mut small = Vec::new();
    let mut large = Vec::new();
    let mut d = 1;
    while d * d <= k {
        if k.is_multiple_of(d) {
            small.push(d);
            if d * d != k {
                large.push(k / d);
            }
        }
        d += 1;
    }
    small.extend(large.into_iter().rev());
    small
}

/// Squareness of `q` balanced row blocks of one strip of width `kp` (without the `n` factor).
fn strip_score(rows: u64, q: u64, kp: u64) -> u128 {
    let small = rows / q;
    let nbig = rows % q;
    let sq = |p: u64| {
        let s = p.min(kp) as u128;
        s * s
    };
    nbig as u128 * sq(small + 1) + (q - nbig) as u128 * sq(small)
}

fn window_fits(rows: u64, q: u64, kp: u64, n: u64, window: &OpsWindow) -> bool {
    let small = rows / q;
    let big = rows.div_ceil(q);
    let per_row = n as u128 * kp as u128;
    small >= 1
        && (small as u128 * per_row) >= window.lo as u128
        && (big as u128 * per_row) <= window.hi as u128
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Candidate {
    score: u128,
    kp: u64,
    q: u64,
}

impl Candidate {
    fn tiles(&self, k: u64) -> u64 {
        (k / self.kp) * self.q
    }

    /// Higher score, then larger k', then fewer tiles.
    fn beats(&self, other: &Candidate, k: u64) -> bool {
        self.score
            .cmp(&other.score)
            .then(self.kp.cmp(&other.kp))
            .then(other.tiles(k).cmp(&self.tiles(k)))
            .is_gt()
    }
}

/// Picks the strip width `k'` (a divisor of `k`) and block count `q` that
/// maximize squareness with every tile inside the device's ops window.
pub fn tile_device(
    assignment: &DeviceAssignment,
    device: &DeviceProfile,
) -> Result<(Vec<Tile>, u128)> {
    let (rows, n, k) = (assignment.rows, assignment.n, assignment.k);
    let window = &device.window;
    let no_fit = || Error::NoFeasibleTiling {
        rows,
        k,
        n,
        lo: window.lo,
        hi: window.hi,
    };
    if rows == 0 {
        return Err(no_fit());
    }

    let mut best: Option<Candidate> = None;
    for kp in divisors(k) {
        let per_row = n as u128 * kp as u128;
        // Largest block that stays under the window's upper edge.
        let max_block = (window.hi as u128 / per_row).min(rows as u128) as u64;
        if max_block == 0 {
            continue;
        }
        let min_block = (window.lo as u128).div_ceil(per_row).max(1);
        if min_block > rows as u128 {
            continue;
        }
        let q_lo = rows.div_ceil(max_block);
        let q_hi = rows / min_block as u64;
        if q_lo > q_hi {
            continue;
        }
        // Every balanced partition has all blocks >= k' (score q*k'^2, rising
        // in q) or all blocks <= k' (sum of squares, non-increasing in q), so
        // the optimum sits at the feasible q closest to rows / k'.
        let rising_end = (rows / kp).clamp(q_lo, q_hi);
        let falling_start = rows.div_ceil(kp).clamp(q_lo, q_hi);
        for q in [rising_end, falling_start] {
            if !window_fits(rows, q, kp, n, window) {
                continue;
            }
            let cand = Candidate {
                score: strip_score(rows, q, kp) * (k / kp) as u128 * n as u128,
                kp,
                q,
            };
            if best.is_none_or(|b| cand.beats(&b, k)) {
                best = Some(cand);
            }
        }
    }

    let best = best.ok_or_else(no_fit)?;
    let tiles = strip_tiles(rows, best.q, best.kp, n, k);
    debug_assert_eq!(squareness(&tiles), best.score);
    Ok((tiles, best.score))
}

fn strip_tiles(rows: u64, q: u64, kp: u64, n: u64, k: u64) -> Vec<Tile> {
    let small = rows / q;
    let nbig = rows % q;
    let mut strip = Vec::with_capacity(q as usize);
    for i in 0..q {
        let m = if i < nbig { small + 1 } else { small };
        strip.push(Tile { m, k: kp, n });
    }
    let strips = k / kp;
    let mut tiles = Vec::with_capacity((strips * q) as usize);
    for _ in 0..strips {
        tiles.extend_from_slice(&strip);
    }
    tiles
}

fn tile_or_fallback(assignment: &DeviceAssignment, device: &DeviceProfile) -> Result<DevicePlan> {
    if assignment.rows == 0 {
        return Ok(DevicePlan {
            assignment: assignment.clone(),
            tiles: Vec::new(),
            squareness: 0,
            window_violation: false,
        });
    }
    let (tiles, score, violation) = match tile_device(assignment, device) {
        Ok((tiles, score)) => (tiles, score, false),
        Err(Error::NoFeasibleTiling { .. }) => {
            warn!(
                "`{}`: no tiling of {}x{} fits ops window [{}, {}]; using a single tile",
                device.id, assignment.rows, assignment.k, device.window.lo, device.window.hi
            );
            let tiles = vec![Tile {
                m: assignment.rows,
                k: assignment.k,
                n: assignment.n,
            }];
            let score = squareness(&tiles);
            (tiles, score, true)
        }
        Err(e) => return Err(e),
    };
    Ok(DevicePlan {
        assignment: assignment.clone(),
        tiles,
        squareness: score,
        window_violation: violation,
    })
}

/// ops -> rows -> alignment -> shaved-row reassignment -> tiling.
pub fn build_tile_plan(split: &WorkloadSplit, machine: &MachineProfile) -> Result<TilePlan> {
    let dims = split.dims;
    if split.total_ops() != dims.ops() || split.devices.len() != machine.devices.len() {
        return Err(Error::Invariant("split does not cover the workload".into()));
    }
    let mut assignments = Vec::with_capacity(machine.devices.len());
    let mut shaved = 0;
    for (share, dev) in split.devices.iter().zip(&machine.devices) {
        let aligned = align_rows(ops_to_rows(share.ops, &dims), &dims, dev)?;
        shaved += aligned.shaved;
        assignments.push(DeviceAssignment {
            device: dev.id.clone(),
            rows: aligned.rows,
            n: dims.n(),
            k: dims.k(),
        });
    }
    // Row-aligned splits lose nothing to flooring; anything else is residue.
    let floored: u64 = assignments.iter().map(|a| a.rows).sum::<u64>() + shaved;
    shaved += dims.m() - floored;
    reassign_shaved(&mut assignments, shaved, machine, &dims)?;

    let devices = assignments
        .iter()
        .zip(&machine.devices)
        .map(|(a, dev)| tile_or_fallback(a, dev))
        .collect::<Result<Vec<_>>>()?;
    let plan = TilePlan { dims, devices };
    plan.validate(machine)?;
    Ok(plan)
}

/// Plan giving every row to one device, ignoring its alignment quantum.
pub fn standalone_plan(
    device_index: usize,
    dims: MatrixDims,
    machine: &MachineProfile,
) -> Result<TilePlan> {
    let devices = machine
        .devices
        .iter()
        .enumerate()
        .map(|(i, dev)| {
            let a = DeviceAssignment {
                device: dev.id.clone(),
                rows: if i == device_index { dims.m() } else { 0 },
                n: dims.n(),
                k: dims.k(),
            };
            tile_or_fallback(&a, dev)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(TilePlan { dims, devices })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::device_model::LinearModel;

    fn dev(id: &str, kind: DeviceKind, priority: u32) -> DeviceProfile {
        DeviceProfile {
            id: id.into(),
            kind,
            compute: LinearModel::new(1e-12, 0.0).unwrap(),
            bandwidth: if kind.is_host() { 0.0 } else { 1e10 },
            elem_size: 4,
            priority,
            window: OpsWindow::default_for(&kind),
        }
    }

    fn cpu() -> DeviceProfile {
        dev(
            "cpu",
            DeviceKind::Cpu {
                cache_bytes: 1 << 27,
            },
            2,
        )
    }

    fn assignment(rows: u64, n: u64, k: u64) -> DeviceAssignment {
        DeviceAssignment {
            device: "d".into(),
            rows,
            n,
            k,
        }
    }

    #[test]
    fn rows_from_ops() {
        let d = MatrixDims::new(30000, 30000, 30000).unwrap();
        assert_eq!(ops_to_rows(OpsCount(7_200_000_000_000), &d), 8000);
        assert_eq!(ops_to_rows(OpsCount(0), &d), 0);
        assert_eq!(ops_to_rows(d.ops(), &d), 30000);
    }

    #[test]
    fn alignment() {
        let d = MatrixDims::new(30000, 30000, 30000).unwrap();
        let xpu = dev("xpu", DeviceKind::Xpu { align: 8 }, 0);
        assert_eq!(
            align_rows(1003, &d, &xpu).unwrap(),
            AlignedRows {
                rows: 1000,
                shaved: 3
            }
        );
        assert_eq!(
            align_rows(7, &d, &xpu).unwrap(),
            AlignedRows { rows: 0, shaved: 7 }
        );
        let gpu = dev("gpu", DeviceKind::Gpu, 1);
        assert_eq!(
            align_rows(1000, &d, &gpu).unwrap(),
            AlignedRows {
                rows: 1000,
                shaved: 0
            }
        );
        let odd = MatrixDims::new(30000, 30000, 30001).unwrap();
        assert!(matches!(
            align_rows(8, &odd, &xpu),
            Err(Error::UnalignableK {
                k: 30001,
                align: 8,
                ..
            })
        ));
    }

    #[test]
    fn reassign_rules() {
        let machine = MachineProfile::new(
            vec![dev("xpu", DeviceKind::Xpu { align: 8 }, 0), cpu()],
            true,
        )
        .unwrap();
        let d = MatrixDims::new(1053, 1000, 1000).unwrap();
        let mut a = vec![assignment(1000, 1000, 1000), assignment(50, 1000, 1000)];
        reassign_shaved(&mut a, 3, &machine, &d).unwrap();
        assert_eq!(a[1].rows, 53);
        let before = a.clone();
        reassign_shaved(&mut a, 0, &machine, &d).unwrap();
        assert_eq!(a, before);

        // No CPU: the GPU that finishes first absorbs the rows.
        let machine = MachineProfile::new(
            vec![dev("g0", DeviceKind::Gpu, 0), dev("g1", DeviceKind::Gpu, 1)],
            true,
        )
        .unwrap();
        let d = MatrixDims::new(1005, 1000, 1000).unwrap();
        let mut a = vec![assignment(300, 1000, 1000), assignment(700, 1000, 1000)];
        reassign_shaved(&mut a, 5, &machine, &d).unwrap();
        assert_eq!((a[0].rows, a[1].rows), (305, 700));
    }

    #[test]
    fn square_tiles() {
        let c = cpu();
        let (tiles, sq) = tile_device(&assignment(2000, 2000, 2000), &c).unwrap();
        assert_eq!(
            tiles,
            vec![Tile {
                m: 2000,
                k: 2000,
                n: 2000
            }]
        );
        assert_eq!(sq, 8_000_000_000);

        let (tiles, sq) = tile_device(&assignment(4000, 2000, 2000), &c).unwrap();
        assert_eq!(
            tiles,
            vec![
                Tile {
                    m: 2000,
                    k: 2000,
                    n: 2000
                };
                2
            ]
        );
        assert_eq!(sq, 16_000_000_000);
        // The single (4000, 2000) tile would score half and break the window.
        let one = [Tile {
            m: 4000,
            k: 2000,
            n: 2000,
        }];
        assert_eq!(squareness(&one), 8_000_000_000);
        assert!(!c.window.contains(one[0].ops()));
    }

    #[test]
    fn prime_k() {
        let mut d = cpu();
        d.window = OpsWindow::new(1, 1000).unwrap();
        let (tiles, sq) = tile_device(&assignment(1, 10, 7), &d).unwrap();
        // k' = 1: seven 1x1 tiles, sq = 7 * 10; k' = 7: one 1x7 tile, sq = 10.
        assert_eq!(sq, 70);
        assert_eq!(tiles.len(), 7);
        assert!(tiles.iter().all(|t| t.k == 1 && t.m == 1));
    }

    #[test]
    fn infeasible_window_falls_back() {
        let mut d = cpu();
        d.window = OpsWindow::new(1, 10).unwrap();
        assert!(matches!(
            tile_device(&assignment(4, 100, 4), &d),
            Err(Error::NoFeasibleTiling { .. })
        ));
        let plan = tile_or_fallback(&assignment(4, 100, 4), &d).unwrap();
        assert!(plan.window_violation);
        assert_eq!(plan.tiles, vec![Tile { m: 4, k: 4, n: 100 }]);
    }

    #[test]
    fn divisor_list() {
        assert_eq!(divisors(12), vec![1, 2, 3, 4, 6, 12]);
        assert_eq!(divisors(7), vec![1, 7]);
        assert_eq!(divisors(1), vec![1]);
        assert_eq!(divisors(36), vec![1, 2, 3, 4, 6, 9, 12, 18, 36]);
    }
}
