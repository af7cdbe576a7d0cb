//! Simulation and co-design of fully passive meta-material IoT sensors.
//!
//! The crate models how the gap widths of split-ring sensing units shape the
//! reflection spectrum seen by a wireless transceiver, searches for the gap
//! widths that make neighbouring environmental conditions easiest to tell
//! apart, and trains a small neural network that maps received power spectra
//! back to condition estimates.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod channel;
pub mod circuit;
pub mod discernibility;
pub mod error;
mod par;
pub mod pipeline;
pub mod rng;
pub mod sensefn;
pub mod structopt;

pub use error::{Error, Result};
