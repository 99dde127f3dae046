//! Deterministic discrete-event simulator of per-core, window-based core
//! allocation for latency-critical tenants sharing a storage backend with
//! throughput-oriented tenants.
//!
//! The model arithmetic ([`window::calculate_cores`], [`window::compute_budget`],
//! [`device::Ewma`]) is generic over [`Scalar`]; the simulator itself runs on
//! `f64` estimates and integer-nanosecond time.

pub mod backend;
pub mod baselines;
pub mod config;
pub mod device;
pub mod harness;
pub mod metrics;
pub mod qwin;
pub mod scalar;
pub mod sim;
pub mod window;
pub mod workload;

pub use backend::{Backend, RunOptions, RunOutput};
pub use config::{AllocatorKind, ExperimentConfig, SloSpec, TenantConfig};
pub use harness::{run_experiment, sweep, ExitReport};
pub use scalar::Scalar;
pub use sim::SimTime;

pub type WindowLoadF64 = window::WindowLoad<f64>;
pub type WindowLoadF32 = window::WindowLoad<f32>;
/// Exact arithmetic, used to check the float path.
pub type ExactWindowLoad = window::WindowLoad<num_rational::Ratio<i128>>;
pub type Ewma64 = device::Ewma<f64>;
