//! Co-execution planning for GEMM on heterogeneous CPU/GPU/XPU machines.
//!
//! The pipeline runs in four phases:
//!
//! 1. **predict** ([`device_model`], [`profiler`]): fit a linear time model
//!    per device from squared-GEMM probes and measure host link bandwidth;
//! 2. **optimize** ([`optimizer`]): split the rows of `A` across devices by
//!    solving a min-max makespan LP over a shared bus;
//! 3. **adapt** ([`adapter`]): turn ops counts into hardware-legal row
//!    counts and near-square tiles;
//! 4. **schedule** ([`scheduler`]): lay out priority-ordered copies and
//!    computes on a timeline.
//!
//! [`simulator`] executes schedules against synthetic devices and reports
//! measured-vs-predicted errors.

pub mod adapter;
pub mod cli;
pub mod config;
pub mod device_model;
pub mod error;
pub mod lp;
pub mod optimizer;
pub mod profiler;
pub mod report;
pub mod scheduler;
pub mod simulator;
mod textfmt;
pub mod timeline;

pub use device_model::{
    DeviceKind, DeviceProfile, LinearModel, MachineProfile, MatrixDims, OpsCount, OpsWindow,
};
pub use error::{Error, Result};
