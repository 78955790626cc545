//! Mapless geomagnetic + inertial combined navigation.
//!
//! The crate simulates a vehicle that steers using only measured magnetic
//! declination and inclination. A receding-horizon controller chooses the
//! heading from a locally estimated D/I gradient; an error-state Kalman
//! filter blends an inertial position track into the geomagnetic position
//! estimate in weak-gradient regions. Three controller variants are
//! provided: a time-invariant baseline (LTI), a time-varying baseline (LTV)
//! and the flexible-correction controller (FC) that compensates the
//! input for the change of the input matrix between steps.
//!
//! Module map:
//!
//! - [`geofield`]: spherical-harmonic main field, dipole field, field elements.
//! - [`storm`]: observatory disturbance ingestion and gridded anomaly tables.
//! - [`gradient`]: D/I gradient initialisation and recursive update.
//! - [`qp`]: prediction matrices, QP assembly and an active-set solver.
//! - [`controller`]: LTI / LTV / FC command generation.
//! - [`ins`]: inertial position error simulator.
//! - [`fusion`]: 15-state error Kalman filter.
//! - [`navigator`]: the end-to-end navigation loop.
//! - [`metrics`]: trajectory and ensemble metrics.
//! - [`scenario`] and [`cli`]: configuration files and command-line driver.

// `!(x > 0.0)` rejects NaN along with non-positive values
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod controller;
pub mod error;
pub mod fusion;
pub mod geodesy;
pub mod geofield;
pub mod gradient;
pub mod ins;
pub mod metrics;
pub mod navigator;
pub mod qp;
pub mod scenario;
pub mod storm;

pub use error::{Error, Result};
pub use geofield::GeoPosition;
