#![allow(dead_code)]

use poas::adapter::Tile;
use poas::config::{DeviceConfig, MachineConfig};
use poas::profiler::ProfilingConfig;
use poas::simulator::SyntheticDevice;
use poas::{DeviceKind, DeviceProfile, LinearModel, MachineProfile, MatrixDims, OpsWindow};
use rand::seq::SliceRandom;
use rand::Rng;

/// Log-uniform draw in `[lo, hi]`.
pub fn log_uniform<R: Rng>(rng: &mut R, lo: f64, hi: f64) -> f64 {
    (rng.gen_range(lo.ln()..=hi.ln())).exp()
}

pub fn device(
    id: &str,
    kind: DeviceKind,
    slope: f64,
    intercept: f64,
    bandwidth: f64,
    priority: u32,
) -> DeviceProfile {
    DeviceProfile {
        id: id.to_string(),
        kind,
        compute: LinearModel::new(slope, intercept).unwrap(),
        bandwidth: if kind.is_host() { 0.0 } else { bandwidth },
        elem_size: if matches!(kind, DeviceKind::Xpu { .. }) {
            2
        } else {
            4
        },
        priority,
        window: OpsWindow::default_for(&kind),
    }
}

/// `count` devices with slopes in [1e-13, 1e-10] s/op and bandwidths in
/// [8, 32] GB/s; at most one CPU, at most one XPU, shuffled priorities.
pub fn random_machine<R: Rng>(rng: &mut R, count: usize, allow_xpu: bool) -> MachineProfile {
    let mut priorities: Vec<u32> = (0..count as u32).collect();
    priorities.shuffle(rng);
    let mut has_cpu = false;
    let mut has_xpu = false;
    let devices = (0..count)
        .map(|i| {
            let kind = match rng.gen_range(0..3) {
                0 if !has_cpu => {
                    has_cpu = true;
                    DeviceKind::Cpu {
                        cache_bytes: 1 << 25,
                    }
                }
                1 if allow_xpu && !has_xpu => {
                    has_xpu = true;
                    DeviceKind::Xpu { align: 8 }
                }
                _ => DeviceKind::Gpu,
            };
            device(
                &format!("d{i}"),
                kind,
                log_uniform(rng, 1e-13, 1e-10),
                rng.gen_range(0.0..2e-3),
                rng.gen_range(8e9..=32e9),
                priorities[i],
            )
        })
        .collect();
    MachineProfile::new(devices, true).unwrap()
}

/// m, n, k in [2e3, 6e4]; `k` a multiple of `k_quantum`.
pub fn random_dims<R: Rng>(rng: &mut R, k_quantum: u64) -> MatrixDims {
    let m = rng.gen_range(2_000..=60_000);
    let n = rng.gen_range(2_000..=60_000);
    let k = rng.gen_range(2_000..=60_000) / k_quantum * k_quantum;
    MatrixDims::new(m, n, k).unwrap()
}

pub fn has_xpu(machine: &MachineProfile) -> bool {
    machine
        .devices
        .iter()
        .any(|d| matches!(d.kind, DeviceKind::Xpu { .. }))
}

pub fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

/// Rounds `m` down to the row quantum when no device can absorb odd rows.
pub fn fit_rows(machine: &MachineProfile, dims: MatrixDims) -> MatrixDims {
    let q = machine
        .devices
        .iter()
        .map(|d| d.kind.row_quantum())
        .min()
        .unwrap_or(1);
    MatrixDims::new(dims.m() / q * q, dims.n(), dims.k()).unwrap()
}

/// Any finite positive double, not just "nice" ones.
pub fn wild<R: Rng>(rng: &mut R, lo: f64, hi: f64) -> f64 {
    log_uniform(rng, lo, hi) * (1.0 + rng.gen::<f64>() * f64::EPSILON * 64.0)
}

pub fn random_config<R: Rng>(rng: &mut R) -> MachineConfig {
    let count = rng.gen_range(1..=5);
    let fixed: bool = rng.gen();
    let devices = (0..count)
        .map(|i| {
            let kind = match rng.gen_range(0..3) {
                0 => DeviceKind::Cpu {
                    cache_bytes: rng.gen_range(1..=1u64 << 40),
                },
                1 => DeviceKind::Xpu {
                    align: 1 << rng.gen_range(0..=6),
                },
                _ => DeviceKind::Gpu,
            };
            DeviceConfig {
                device: SyntheticDevice {
                    id: format!("dev-{i}_{}", rng.gen_range(0..1000)),
                    kind,
                    law: LinearModel::new(
                        wild(rng, 1e-15, 1e-8),
                        if rng.gen() { 0.0 } else { wild(rng, 1e-9, 1.0) },
                    )
                    .unwrap(),
                    bandwidth: if kind.is_host() {
                        0.0
                    } else {
                        wild(rng, 1e6, 1e12)
                    },
                    elem_size: rng.gen_range(1..=8),
                    noise: rng.gen_range(0.0..=0.2),
                    bus_noise: rng.gen_range(0.0..=0.2),
                    drift: if rng.gen() { 0.0 } else { wild(rng, 1e-9, 1.0) },
                    seed: 0,
                },
                priority: fixed.then(|| rng.gen_range(0..100) * 5 + i),
            }
        })
        .collect();
    let cpu_lo = rng.gen_range(1..=3000);
    let accel_lo = rng.gen_range(1..=6000);
    MachineConfig {
        shared_bus: rng.gen(),
        profiling: ProfilingConfig {
            cpu_sides: (cpu_lo, cpu_lo + rng.gen_range(0..=3000)),
            accel_sides: (accel_lo, accel_lo + rng.gen_range(0..=6000)),
            probes: rng.gen_range(2..=50),
            repetitions: rng.gen_range(1..=10),
            payload_bytes: rng.gen_range(1u64 << 20..=1 << 32),
        },
        devices,
    }
}

/// Best balanced tiling by brute force: every divisor `k'` of `k`, every
/// block count `q` in `1..=rows`, every tile checked against the window.
/// Returns `(sq, k', tile count)` under the same tie-break.
pub fn brute_force(rows: u64, k: u64, n: u64, window: OpsWindow) -> Option<(u128, u64, u64)> {
    let mut best: Option<(u128, u64, u64)> = None;
    for kp in (1..=k).filter(|d| k.is_multiple_of(*d)) {
        for q in 1..=rows {
            let blocks: Vec<u64> = (0..q).map(|i| rows / q + u64::from(i < rows % q)).collect();
            if blocks.iter().any(|&b| !window.contains(b * kp * n)) {
                continue;
            }
            // min/max * m' * k' * n, summed over every strip.
            let strip: f64 = blocks
                .iter()
                .map(|&b| {
                    let (lo, hi) = (b.min(kp) as f64, b.max(kp) as f64);
                    lo / hi * (b * kp * n) as f64
                })
                .sum();
            let sq = (strip * (k / kp) as f64).round() as u128;
            let tiles = (k / kp) * q;
            let better = match best {
                None => true,
                Some((s, bk, bt)) => {
                    (sq, kp, std::cmp::Reverse(tiles)) > (s, bk, std::cmp::Reverse(bt))
                }
            };
            if better {
                best = Some((sq, kp, tiles));
            }
        }
    }
    best
}

pub fn covers(rows: u64, k: u64, n: u64, tiles: &[Tile]) -> bool {
    let mut width = 0;
    let mut i = 0;
    while i < tiles.len() {
        let kp = tiles[i].k;
        let mut acc = 0;
        while i < tiles.len() && acc < rows {
            if tiles[i].k != kp || tiles[i].n != n {
                return false;
            }
            acc += tiles[i].m;
            i += 1;
        }
        if acc != rows || !k.is_multiple_of(kp) {
            return false;
        }
        width += kp;
    }
    width == k
}

/// A valid profile with arbitrary-looking doubles and windows.
pub fn random_profile<R: Rng>(rng: &mut R, count: usize) -> MachineProfile {
    let mut profile = random_machine(rng, count, true);
    profile.shared_bus = rng.gen();
    for d in &mut profile.devices {
        d.compute = LinearModel::new(wild(rng, 1e-15, 1e-8), wild(rng, 1e-9, 1.0)).unwrap();
        if !d.kind.is_host() {
            d.bandwidth = wild(rng, 1e6, 1e12);
        }
        let lo = rng.gen_range(1..=1u64 << 40);
        d.window = OpsWindow::new(lo, lo + rng.gen_range(0..=1u64 << 40)).unwrap();
    }
    profile
}
