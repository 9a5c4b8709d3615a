//! Threshold space-time t random fields for precipitation occurrence.
//!
//! A latent Gaussian field `Z(x, t)` with a spectral-in-time covariance is
//! divided by a temporally correlated scaling process `U(t)`; a site is wet
//! where the result exceeds a cutoff. This crate holds the numerical core:
//! simulation, occurrence statistics, seasonal cutoffs, simulation-based
//! fitting and functional boxplots. It builds without `std` (with `alloc`);
//! the `std` feature adds rayon parallelism over replications.

#![no_std]

extern crate alloc;
#[cfg(any(test, feature = "std"))]
extern crate std;

pub mod covariance;
pub mod cutoff;
pub mod depth;
pub mod error;
pub mod fft;
pub mod fitting;
pub mod field;
pub mod gauge;
pub mod linalg;
pub mod optim;
pub mod par;
pub mod rng;
pub mod simulation;
pub mod special;
pub mod stats;

pub use covariance::{Dof, MaternSpec, SpaceTimeCovSpec};
pub use error::{Error, Result};
pub use field::{SiteSeries, TimeGrid};
pub use gauge::{GaugeNetwork, OccurrenceField, Site};
