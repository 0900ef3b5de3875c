//! Detection, counting, and separation of iterated-function-system regimes
//! in time series.
//!
//! A trajectory produced by switching between several deterministic maps
//! looks stochastic to classical tests, yet each individual step is exact.
//! This crate recovers the hidden structure from the points alone:
//!
//! * [`sim`] generates labeled switching trajectories of a planar quadratic
//!   family for experiments and calibration.
//! * [`embedding`] reconstructs state space from scalar recordings (delay
//!   embedding, average mutual information, false nearest neighbors).
//! * [`geometry`] supplies the spatial machinery: exact k-nearest-neighbor
//!   queries, farthest-point sampling, and epsilon-component partitions.
//! * [`detection`] decides whether maps are switching at all — the
//!   distribution of neighborhood image diameters splits into separated
//!   modes — and estimates how many maps act.
//! * [`separation`] assigns each trajectory point to its producing map by
//!   gluing single-map neighborhood patches along shared points.
//! * [`ghost`] finds and removes isolated additive spikes (recording
//!   artifacts) that masquerade as extra regimes.
//!
//! All randomized paths take explicit seeds and produce identical results
//! for identical inputs, independent of thread count.

pub mod detection;
pub mod embedding;
pub mod geometry;
pub mod ghost;
pub mod separation;
pub mod sim;

mod dsu;
mod error;

pub use error::{Error, Result};
