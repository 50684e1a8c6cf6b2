//! Domain types shared by every phase, plus the linear performance predictor.
//!
//! Work is measured in "ops", the product `m * n * k` of a GEMM's dimensions
//! (one multiply-accumulate per index triple, not `2 * m * n * k`). Compute
//! time is modelled as `slope * ops + intercept`; copy time as bytes moved
//! over the device's host bandwidth, ignoring latency.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Dimensions of `C (m x n) = A (m x k) * B (k x n)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "RawDims")]
pub struct MatrixDims {
    m: u64,
    n: u64,
    k: u64,
}

#[derive(Deserialize)]
struct RawDims {
    m: u64,
    n: u64,
    k: u64,
}

impl TryFrom<RawDims> for MatrixDims {
    type Error = Error;

    fn try_from(raw: RawDims) -> Result<Self> {
        MatrixDims::new(raw.m, raw.n, raw.k)
    }
}

impl MatrixDims {
    pub fn new(m: u64, n: u64, k: u64) -> Result<Self> {
        if m == 0 || n == 0 || k == 0 {
            return Err(Error::InvalidDims(format!(
                "{m}x{n}x{k}: every dimension must be at least 1"
            )));
        }
        m.checked_mul(n)
            .and_then(|mn| mn.checked_mul(k))
            .ok_or_else(|| Error::InvalidDims(format!("{m}x{n}x{k}: m*n*k overflows u64")))?;
        Ok(MatrixDims { m, n, k })
    }

    pub fn m(&self) -> u64 {
        self.m
    }

    pub fn n(&self) -> u64 {
        self.n
    }

    pub fn k(&self) -> u64 {
        self.k
    }

    /// Total work `N = m * n * k`.
    pub fn ops(&self) -> OpsCount {
        OpsCount(self.m * self.n * self.k)
    }

    /// Ops in one row of `C`, i.e. `n * k`.
    pub fn row_ops(&self) -> u64 {
        self.n * self.k
    }

    pub fn ops_for_rows(&self, rows: u64) -> OpsCount {
        OpsCount(rows * self.row_ops())
    }
}

impl fmt::Display for MatrixDims {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}x{}", self.m, self.n, self.k)
    }
}

impl FromStr for MatrixDims {
    type Err = Error;

    /// Parses `MxNxK`, e.g. `30000x30000x30000`.
    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.trim().split(['x', 'X']).collect();
        if parts.len() != 3 {
            return Err(Error::InvalidDims(format!("`{s}`: expected MxNxK")));
        }
        let mut v = [0u64; 3];
        for (slot, part) in v.iter_mut().zip(&parts) {
            *slot = part
                .trim()
                .parse()
                .map_err(|_| Error::InvalidDims(format!("`{s}`: `{part}` is not an integer")))?;
        }
        MatrixDims::new(v[0], v[1], v[2])
    }
}

/// Number of scalar multiply-accumulates (`m * n * k` convention).
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize,
)]
#[serde(transparent)]
pub struct OpsCount(pub u64);

impl OpsCount {
    pub fn get(self) -> u64 {
        self.0
    }

    pub fn as_f64(self) -> f64 {
        self.0 as f64
    }

    /// Ops in units of 10^12.
    pub fn tera(self) -> f64 {
        self.0 as f64 / 1e12
    }
}

impl fmt::Display for OpsCount {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

/// `seconds = slope * ops + intercept`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub slope: f64,
    pub intercept: f64,
}

impl LinearModel {
    pub fn new(slope: f64, intercept: f64) -> Result<Self> {
        let model = LinearModel { slope, intercept };
        model.validate()?;
        Ok(model)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.slope.is_finite() && self.slope > 0.0) {
            return Err(Error::NonPositiveSlope { slope: self.slope });
        }
        if !(self.intercept.is_finite() && self.intercept >= 0.0) {
            return Err(Error::InvalidProfile(format!(
                "intercept {} must be finite and non-negative",
                self.intercept
            )));
        }
        Ok(())
    }

    pub fn predict(&self, ops: OpsCount) -> f64 {
        self.slope * ops.as_f64() + self.intercept
    }

    /// Ops per second at a given work size.
    pub fn throughput_at(&self, ops: OpsCount) -> f64 {
        ops.as_f64() / self.predict(ops)
    }

    pub fn scaled(&self, factor: f64) -> LinearModel {
        LinearModel {
            slope: self.slope * factor,
            intercept: self.intercept * factor,
        }
    }
}

/// Ordinary least squares over `(ops, seconds)` samples.
///
/// A negative intercept is clamped to zero and the slope refit as the line
/// through the origin and the sample centroid.
pub fn fit_linear(samples: &[(OpsCount, f64)]) -> Result<LinearModel> {
    for (index, &(_, seconds)) in samples.iter().enumerate() {
        if !(seconds.is_finite() && seconds > 0.0) {
            return Err(Error::NonPositiveTime { index, seconds });
        }
    }
    let mut distinct: Vec<u64> = samples.iter().map(|(c, _)| c.0).collect();
    distinct.sort_unstable();
    distinct.dedup();
    if distinct.len() < 2 {
        return Err(Error::DegenerateSamples {
            distinct: distinct.len(),
        });
    }

    let count = samples.len() as f64;
    let mean_x = samples.iter().map(|(c, _)| c.as_f64()).sum::<f64>() / count;
    let mean_y = samples.iter().map(|(_, t)| *t).sum::<f64>() / count;
    let (mut sxx, mut sxy) = (0.0, 0.0);
    for (c, t) in samples {
        let dx = c.as_f64() - mean_x;
        sxx += dx * dx;
        sxy += dx * (t - mean_y);
    }
    let mut slope = sxy / sxx;
    let mut intercept = mean_y - slope * mean_x;
    if intercept < 0.0 {
        intercept = 0.0;
        slope = mean_y / mean_x;
    }
    LinearModel::new(slope, intercept)
}

pub fn predict_compute(model: &LinearModel, c: OpsCount) -> f64 {
    model.predict(c)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum DeviceKind {
    #[serde(rename = "CPU")]
    Cpu { cache_bytes: u64 },
    #[serde(rename = "GPU")]
    Gpu,
    /// Matrix-engine device: rows and `k` must be multiples of `align`.
    #[serde(rename = "XPU")]
    Xpu { align: u64 },
}

impl DeviceKind {
    pub const XPU_ALIGN: u64 = 8;

    pub fn label(&self) -> &'static str {
        match self {
            DeviceKind::Cpu { .. } => "CPU",
            DeviceKind::Gpu => "GPU",
            DeviceKind::Xpu { .. } => "XPU",
        }
    }

    /// The host device computes in place and never uses the bus.
    pub fn is_host(&self) -> bool {
        matches!(self, DeviceKind::Cpu { .. })
    }

    /// Row quantum imposed by the hardware (1 when unconstrained).
    pub fn row_quantum(&self) -> u64 {
        match self {
            DeviceKind::Xpu { align } => *align,
            _ => 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if let DeviceKind::Xpu { align } = self {
            if *align == 0 || !align.is_power_of_two() {
                return Err(Error::InvalidProfile(format!(
                    "alignment quantum {align} must be a power of two"
                )));
            }
        }
        Ok(())
    }
}

/// Inclusive range of ops per tile under which the device was profiled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct OpsWindow {
    pub lo: u64,
    pub hi: u64,
}

impl OpsWindow {
    pub fn new(lo: u64, hi: u64) -> Result<Self> {
        if lo == 0 || lo > hi {
            return Err(Error::InvalidProfile(format!(
                "ops window [{lo}, {hi}] is empty"
            )));
        }
        Ok(OpsWindow { lo, hi })
    }

    /// Window spanned by squared probes with sides in `[min_side, max_side]`.
    pub fn from_sides(min_side: u64, max_side: u64) -> Self {
        OpsWindow {
            lo: min_side.pow(3),
            hi: max_side.pow(3),
        }
    }

    pub fn default_for(kind: &DeviceKind) -> Self {
        if kind.is_host() {
            OpsWindow::from_sides(1000, 2000)
        } else {
            OpsWindow::from_sides(3000, 6000)
        }
    }

    pub fn contains(&self, ops: u64) -> bool {
        (self.lo..=self.hi).contains(&ops)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviceProfile {
    pub id: String,
    pub kind: DeviceKind,
    pub compute: LinearModel,
    /// Host link bandwidth in bytes/second; 0 for the host CPU.
    pub bandwidth: f64,
    /// Bytes per matrix element.
    pub elem_size: u32,
    /// Lower value is served first on the bus.
    pub priority: u32,
    pub window: OpsWindow,
}

impl DeviceProfile {
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Error::InvalidProfile(format!("device `{}`: {msg}", self.id));
        if self.id.is_empty() || self.id.chars().any(char::is_whitespace) {
            return Err(fail(
                "id must be non-empty and contain no whitespace".into(),
            ));
        }
        self.kind.validate().map_err(|e| fail(e.to_string()))?;
        self.compute.validate().map_err(|e| fail(e.to_string()))?;
        if !matches!(self.elem_size, 1 | 2 | 4 | 8) {
            return Err(fail(format!(
                "elem_size {} not in {{1, 2, 4, 8}}",
                self.elem_size
            )));
        }
        if !self.bandwidth.is_finite() || self.bandwidth < 0.0 {
            return Err(fail(format!("bandwidth {} is invalid", self.bandwidth)));
        }
        if !self.kind.is_host() && self.bandwidth <= 0.0 {
            return Err(fail("non-CPU devices need a positive bandwidth".into()));
        }
        OpsWindow::new(self.window.lo, self.window.hi).map_err(|e| fail(e.to_string()))?;
        Ok(())
    }

    pub fn compute_seconds(&self, c: OpsCount) -> f64 {
        self.compute.predict(c)
    }

    /// Host-to-device time for the A-row slice plus all of B. Zero on the host.
    pub fn copy_in_seconds(&self, c: OpsCount, dims: &MatrixDims) -> Result<f64> {
        if self.kind.is_host() {
            return Ok(0.0);
        }
        let bytes = transfer_bytes(c, dims, self.elem_size)?;
        Ok(transfer_seconds(bytes.bytes_in, self.bandwidth))
    }

    /// Device-to-host time for the C-row slice. Zero on the host.
    pub fn copy_out_seconds(&self, c: OpsCount, dims: &MatrixDims) -> Result<f64> {
        if self.kind.is_host() {
            return Ok(0.0);
        }
        let bytes = transfer_bytes(c, dims, self.elem_size)?;
        Ok(transfer_seconds(bytes.bytes_out, self.bandwidth))
    }
}

pub fn transfer_seconds(bytes: u64, bandwidth: f64) -> f64 {
    bytes as f64 / bandwidth
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TransferBytes {
    pub bytes_in: u64,
    pub bytes_out: u64,
}

impl TransferBytes {
    pub fn total(&self) -> u64 {
        self.bytes_in + self.bytes_out
    }
}

/// Bytes moved for a device computing `c` ops of `dims`: its rows of A plus
/// the whole of B inbound, its rows of C outbound. Element size applies to
/// all three matrices.
pub fn transfer_bytes(c: OpsCount, dims: &MatrixDims, elem_size: u32) -> Result<TransferBytes> {
    let row_ops = dims.row_ops();
    if !c.0.is_multiple_of(row_ops) {
        return Err(Error::NotRowAligned { ops: c.0, row_ops });
    }
    let e = elem_size as u128;
    let c = c.0 as u128;
    let (n, k) = (dims.n as u128, dims.k as u128);
    let bytes_in = e * (c / n + k * n);
    let bytes_out = e * (c / k);
    let fit = |v: u128| u64::try_from(v).map_err(|_| Error::Overflow("transfer bytes exceed u64"));
    Ok(TransferBytes {
        bytes_in: fit(bytes_in)?,
        bytes_out: fit(bytes_out)?,
    })
}

/// Exclusive-bus copy time (in + out). The host CPU never copies.
pub fn predict_copy(profile: &DeviceProfile, c: OpsCount, dims: &MatrixDims) -> Result<f64> {
    if profile.kind.is_host() {
        return Ok(0.0);
    }
    let bytes = transfer_bytes(c, dims, profile.elem_size)?;
    Ok(transfer_seconds(bytes.total(), profile.bandwidth))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MachineProfile {
    pub devices: Vec<DeviceProfile>,
    /// All non-CPU transfers serialize on one bus.
    pub shared_bus: bool,
}

impl MachineProfile {
    pub fn new(devices: Vec<DeviceProfile>, shared_bus: bool) -> Result<Self> {
        let machine = MachineProfile {
            devices,
            shared_bus,
        };
        machine.validate()?;
        Ok(machine)
    }

    pub fn validate(&self) -> Result<()> {
        if self.devices.is_empty() {
            return Err(Error::InvalidProfile("machine has no devices".into()));
        }
        for (i, dev) in self.devices.iter().enumerate() {
            dev.validate()?;
            for other in &self.devices[..i] {
                if other.id == dev.id {
                    return Err(Error::InvalidProfile(format!(
                        "duplicate device id `{}`",
                        dev.id
                    )));
                }
                if other.priority == dev.priority {
                    return Err(Error::InvalidProfile(format!(
                        "duplicate priority {} (devices `{}` and `{}`): priorities within a machine profile must be unique",
                        dev.priority, other.id, dev.id
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn device(&self, id: &str) -> Option<&DeviceProfile> {
        self.devices.iter().find(|d| d.id == id)
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.devices.iter().position(|d| d.id == id)
    }

    /// Device indices sorted by ascending priority value.
    pub fn priority_order(&self) -> Vec<usize> {
        let mut order: Vec<usize> = (0..self.devices.len()).collect();
        order.sort_by_key(|&i| self.devices[i].priority);
        order
    }

    pub fn fingerprint(&self) -> String {
        machine_fingerprint(
            self.shared_bus,
            self.devices
                .iter()
                .map(|d| (d.id.as_str(), &d.kind, d.elem_size)),
        )
    }
}

/// Structural hash of a machine: bus mode plus each device's id, kind and
/// element size. Fitted numbers are excluded so that a profile and the
/// machine description it was measured from hash identically.
pub fn machine_fingerprint<'a>(
    shared_bus: bool,
    devices: impl Iterator<Item = (&'a str, &'a DeviceKind, u32)>,
) -> String {
    let mut entries: Vec<String> = devices
        .map(|(id, kind, elem)| {
            let extra = match kind {
                DeviceKind::Cpu { cache_bytes } => format!("cache={cache_bytes}"),
                DeviceKind::Gpu => String::new(),
                DeviceKind::Xpu { align } => format!("align={align}"),
            };
            format!("{id}|{}|{elem}|{extra}", kind.label())
        })
        .collect();
    entries.sort();
    let mut hasher = Sha256::new();
    hasher.update(if shared_bus {
        b"shared\n" as &[u8]
    } else {
        b"exclusive\n"
    });
    for e in &entries {
        hasher.update(e.as_bytes());
        hasher.update(b"\n");
    }
    hasher.finalize()[..8]
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn close(a: f64, b: f64, rel: f64) -> bool {
        (a - b).abs() <= rel * b.abs().max(f64::MIN_POSITIVE)
    }

    fn gpu(bw: f64) -> DeviceProfile {
        DeviceProfile {
            id: "gpu0".into(),
            kind: DeviceKind::Gpu,
            compute: LinearModel::new(1e-12, 0.0).unwrap(),
            bandwidth: bw,
            elem_size: 2,
            priority: 0,
            window: OpsWindow::from_sides(3000, 6000),
        }
    }

    #[test]
    fn dims_validation() {
        assert!(MatrixDims::new(0, 1, 1).is_err());
        assert!(MatrixDims::new(1 << 22, 1 << 21, 1 << 21).is_err());
        let d: MatrixDims = "30000x30000x30000".parse().unwrap();
        assert_eq!(d.ops(), OpsCount(27_000_000_000_000));
        assert!((d.ops().tera() - 27.0).abs() < 1e-12);
        assert!("30000x30000".parse::<MatrixDims>().is_err());
    }

    #[test]
    fn fit_exact_lines() {
        let m = fit_linear(&[
            (OpsCount(1_000_000_000), 1.0),
            (OpsCount(2_000_000_000), 2.0),
        ])
        .unwrap();
        assert!(close(m.slope, 1e-9, 1e-12));
        assert!(m.intercept.abs() < 1e-12);

        let m = fit_linear(&[
            (OpsCount(1_000_000_000), 1.5),
            (OpsCount(2_000_000_000), 2.5),
            (OpsCount(3_000_000_000), 3.5),
        ])
        .unwrap();
        assert!(close(m.slope, 1e-9, 1e-12));
        assert!(close(m.intercept, 0.5, 1e-12));
    }

    #[test]
    fn fit_errors() {
        assert!(matches!(
            fit_linear(&[(OpsCount(5), 1.0), (OpsCount(5), 2.0)]),
            Err(Error::DegenerateSamples { distinct: 1 })
        ));
        assert!(matches!(
            fit_linear(&[(OpsCount(5), 1.0), (OpsCount(6), 0.0)]),
            Err(Error::NonPositiveTime { index: 1, .. })
        ));
    }

    #[test]
    fn negative_intercept_is_clamped() {
        // OLS gives slope 2, intercept -1.
        let m = fit_linear(&[(OpsCount(1), 1.0), (OpsCount(2), 3.0)]).unwrap();
        assert_eq!(m.intercept, 0.0);
        assert!(close(m.slope, 2.0 / 1.5, 1e-15));
    }

    /// Closed-form 2x2 normal equations, independent of the centred OLS path.
    fn normal_equations(samples: &[(OpsCount, f64)]) -> (f64, f64) {
        let n = samples.len() as f64;
        let sx: f64 = samples.iter().map(|s| s.0.as_f64()).sum();
        let sy: f64 = samples.iter().map(|s| s.1).sum();
        let sxx: f64 = samples.iter().map(|s| s.0.as_f64() * s.0.as_f64()).sum();
        let sxy: f64 = samples.iter().map(|s| s.0.as_f64() * s.1).sum();
        let det = n * sxx - sx * sx;
        ((n * sxy - sx * sy) / det, (sxx * sy - sx * sxy) / det)
    }

    #[test]
    fn fit_noisy_samples() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let samples: Vec<(OpsCount, f64)> = (0..30u64)
            .map(|i| {
                let side = 3000 + i * 3000 / 29;
                let c = side.pow(3);
                let t = (2e-12 * c as f64 + 0.01) * (1.0 + rng.gen_range(-0.01..=0.01));
                (OpsCount(c), t)
            })
            .collect();
        let fit = fit_linear(&samples).unwrap();
        let (slope, intercept) = normal_equations(&samples);
        assert!(close(fit.slope, slope, 1e-6));
        assert!(close(fit.intercept, intercept, 1e-4));
        assert!(close(fit.slope, 2e-12, 0.02));
        let t = predict_compute(&fit, OpsCount(500_000_000_000));
        assert!(close(t, 1.01, 0.02), "{t}");
    }

    #[test]
    fn predict_compute_examples() {
        let m = LinearModel::new(1e-9, 0.0).unwrap();
        assert_eq!(predict_compute(&m, OpsCount(0)), 0.0);
        let m = LinearModel::new(1e-9, 0.5).unwrap();
        assert!(close(
            predict_compute(&m, OpsCount(2_000_000_000)),
            2.5,
            1e-15
        ));
    }

    #[test]
    fn transfer_bytes_examples() {
        let d = MatrixDims::new(30000, 30000, 30000).unwrap();
        let b = transfer_bytes(OpsCount(0), &d, 2).unwrap();
        assert_eq!((b.bytes_in, b.bytes_out), (1_800_000_000, 0));
        let b = transfer_bytes(d.ops_for_rows(8000), &d, 2).unwrap();
        assert_eq!(d.ops_for_rows(8000), OpsCount(7_200_000_000_000));
        assert_eq!((b.bytes_in, b.bytes_out), (2_280_000_000, 480_000_000));
        let small = MatrixDims::new(2, 2, 2).unwrap();
        let b = transfer_bytes(small.ops(), &small, 4).unwrap();
        assert_eq!((b.bytes_in, b.bytes_out), (32, 16));
        assert!(matches!(
            transfer_bytes(OpsCount(7), &small, 4),
            Err(Error::NotRowAligned { ops: 7, row_ops: 4 })
        ));
    }

    #[test]
    fn predict_copy_examples() {
        let d = MatrixDims::new(30000, 30000, 30000).unwrap();
        let g = gpu(15.75e9);
        let t = predict_copy(&g, d.ops_for_rows(8000), &d).unwrap();
        assert!(close(t, 2.76e9 / 15.75e9, 1e-12));
        assert!((t - 0.1752).abs() < 1e-4);
        let t0 = predict_copy(&g, OpsCount(0), &d).unwrap();
        assert!((t0 - 0.1143).abs() < 1e-4);

        let cpu = DeviceProfile {
            kind: DeviceKind::Cpu {
                cache_bytes: 1 << 27,
            },
            bandwidth: 0.0,
            ..g
        };
        assert_eq!(predict_copy(&cpu, d.ops_for_rows(123), &d).unwrap(), 0.0);
    }

    #[test]
    fn machine_invariants() {
        let a = gpu(1e10);
        let mut b = gpu(1e10);
        b.id = "gpu1".into();
        let err = MachineProfile::new(vec![a.clone(), b.clone()], true).unwrap_err();
        assert!(err.to_string().contains("duplicate priority"));
        b.priority = 1;
        let m = MachineProfile::new(vec![b, a], true).unwrap();
        assert_eq!(m.priority_order(), vec![1, 0]);
        assert!(MachineProfile::new(vec![], true).is_err());
    }

    #[test]
    fn fingerprint_ignores_fitted_numbers() {
        let a = MachineProfile::new(vec![gpu(1e10)], true).unwrap();
        let mut b = a.clone();
        b.devices[0].compute.slope = 3e-12;
        b.devices[0].bandwidth = 2e10;
        assert_eq!(a.fingerprint(), b.fingerprint());
        b.shared_bus = false;
        assert_ne!(a.fingerprint(), b.fingerprint());
        assert_eq!(a.fingerprint().len(), 16);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn fit_is_exact_on_affine_data(
                slope in 1e-14f64..1e-9,
                icpt_frac in 0.0f64..1.0,
                xs in proptest::collection::btree_set(1_000_000u64..1_000_000_000_000, 2..40),
            ) {
                let xs: Vec<u64> = xs.into_iter().collect();
                let mean_x = xs.iter().map(|&x| x as f64).sum::<f64>() / xs.len() as f64;
                // Intercept comparable to the slope term so relative error is meaningful.
                let intercept = icpt_frac * slope * mean_x;
                let samples: Vec<_> = xs.iter().map(|&x| (OpsCount(x), slope * x as f64 + intercept)).collect();
                let m = fit_linear(&samples).unwrap();
                let scale = intercept.max(slope * mean_x);
                prop_assert!((m.slope - slope).abs() <= 1e-12 * slope, "slope {} vs {}", m.slope, slope);
                prop_assert!((m.intercept - intercept).abs() <= 1e-12 * scale);
            }

            #[test]
            fn predict_monotone(slope in 1e-14f64..1e-9, b in 0.0f64..1.0, c1 in 0u64..u64::MAX / 2, d in 0u64..u64::MAX / 2) {
                let m = LinearModel::new(slope, b).unwrap();
                prop_assert!(m.predict(OpsCount(c1)) <= m.predict(OpsCount(c1 + d)));
            }

            #[test]
            fn transfer_additivity(n in 1u64..5000, k in 1u64..5000, r1 in 0u64..5000, r2 in 0u64..5000, e in prop::sample::select(vec![1u32, 2, 4, 8])) {
                let d = MatrixDims::new(r1 + r2 + 1, n, k).unwrap();
                let a = transfer_bytes(d.ops_for_rows(r1), &d, e).unwrap();
                let b = transfer_bytes(d.ops_for_rows(r2), &d, e).unwrap();
                let ab = transfer_bytes(d.ops_for_rows(r1 + r2), &d, e).unwrap();
                prop_assert_eq!(a.bytes_out + b.bytes_out, ab.bytes_out);
                prop_assert_eq!(a.bytes_in + b.bytes_in, ab.bytes_in + e as u64 * k * n);
            }

            #[test]
            fn copy_halves_with_double_bandwidth(bw in 1e9f64..1e11, rows in 0u64..30000) {
                let d = MatrixDims::new(30000, 20000, 35000).unwrap();
                let g1 = gpu(bw);
                let g2 = gpu(bw * 2.0);
                let t1 = predict_copy(&g1, d.ops_for_rows(rows), &d).unwrap();
                let t2 = predict_copy(&g2, d.ops_for_rows(rows), &d).unwrap();
                prop_assert_eq!(t2, t1 / 2.0);
            }
        }
    }
}
