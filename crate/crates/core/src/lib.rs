//! Achievable sum rate and energy efficiency of multiuser mmWave receivers
//! with digital, hybrid and mixed-resolution digital beamforming.

pub mod beamforming;
pub mod chanest;
pub mod channel;
pub mod config;
pub mod error;
pub mod exec;
pub mod linalg;
pub mod montecarlo;
pub mod numeric;
pub mod power;
pub mod quantization;
pub mod rate;
pub mod seed;
pub mod special;
pub mod sweep;

pub use config::{Mode, QuantizerFamily, Resolution, SystemConfig};
pub use error::{Error, Result};
pub use exec::Exec;
pub use rate::{RateResult, Simulator};
pub use sweep::{ExperimentConfig, SweepPlan};
