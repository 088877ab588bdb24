// SPDX-License-Identifier: Apache-2.0

//! Simulation and analysis of a two-level sensor protected by two
//! concatenated continuous drives.
//!
//! The crate propagates the driven spin in the lab frame or any of three
//! nested rotating frames, adds Ornstein–Uhlenbeck field and drive noise
//! with Markovian relaxation, models stroboscopic fluorescence readout, fits
//! the resulting Rabi traces and turns them into magnetometry sensitivity.

pub mod analysis;
pub mod cli;
pub mod config;
pub mod error;
pub mod experiment;
pub mod io;
pub mod model;
pub mod noise;
pub mod pauli;
pub mod propagate;
pub mod readout;
pub mod scan;

pub use error::{Error, Result};
