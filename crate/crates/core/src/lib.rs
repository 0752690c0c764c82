//! Non-adaptive noisy 20-questions search for multiple targets in the unit
//! cube: query-dependent channels, the induced OR multiple-access channel,
//! capacity and dispersion, finite-length bounds, and a Monte Carlo harness
//! for the random-coding query procedure with its threshold decoder.

pub mod asymptotics;
pub mod bounds;
pub mod channels;
pub mod cli;
pub mod error;
pub mod experiments;
pub mod ormac;
pub mod procedure;
pub mod rng;
pub mod scalar;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type NoiseMap64 = channels::NoiseMap<f64>;
pub type NoiseMap32 = channels::NoiseMap<f32>;
pub type NoiseModel64 = channels::NoiseModel<f64>;
pub type NoiseModel32 = channels::NoiseModel<f32>;
pub type OrMac64 = ormac::OrMacModel<f64>;
pub type OrMac32 = ormac::OrMacModel<f32>;
pub type InfoDensityStats64 = ormac::InfoDensityStats<f64>;
pub type InfoDensityStats32 = ormac::InfoDensityStats<f32>;
pub type CapacityResult64 = asymptotics::CapacityResult<f64>;
pub type CapacityResult32 = asymptotics::CapacityResult<f32>;
