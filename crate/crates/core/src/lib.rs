//! PHD and CPHD data updates that report, besides the updated intensity, the
//! mean and the variance of the number of targets inside arbitrary regions of
//! the state space.
//!
//! The crate is organised as follows:
//!
//! - [`types`]: states, measurements, particle sets, regions, cardinality
//!   distributions and the observation-model trait;
//! - [`combinatorics`]: elementary symmetric functions and `Upsilon` sums;
//! - [`phd`] and [`cphd`]: the SMC data updates with regional statistics;
//! - [`prediction`]: survival, constant-velocity motion, birth, resampling;
//! - [`simulation`]: the five-target range-bearing scenario;
//! - [`oracle`]: exact enumeration of the multi-target Bayes update on small
//!   discrete state spaces, used to validate the filters;
//! - [`tracker`]: a predict/update loop driving either filter.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod combinatorics;
pub mod cphd;
pub mod error;
pub mod math;
pub mod oracle;
pub mod phd;
pub mod prediction;
pub mod sensor;
pub mod simulation;
pub mod terms;
pub mod tracker;
pub mod types;

pub use error::{Error, Result};
pub use types::{
    count_in_region, region_intersection, CardinalityDistribution, Measurement, MultiTargetConfig,
    ObservationModel, Region, RegionalStats, State, WeightedParticleSet,
};
