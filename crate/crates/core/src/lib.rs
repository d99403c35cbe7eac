//! Pulse-level simulation and gate synthesis for registers of multi-level
//! qubit systems coupled through a single cavity mode.
//!
//! The crate is organised bottom-up:
//!
//! * [`device`] builds the bare Hamiltonian and the adiabatically labeled
//!   dressed spectrum.
//! * [`spectroscopy`] catalogs drive transitions and evaluates the
//!   selectivity diagnostics and scaling limits.
//! * [`schedule`] compiles diagonal gates into π-pulse bit trains and
//!   renders drive terms; [`envelope`] holds the pulse shapes.
//! * [`walk`] designs concurrent multicolor pulses as continuous-time
//!   quantum walks.
//! * [`propagator`] integrates the driven dynamics and extracts gates.
//! * [`sweep`] runs fidelity maps over cavity frequency and bandwidth.
//! * [`gates`] holds small dense gate algebra.

pub mod device;
pub mod envelope;
pub mod error;
pub mod gates;
pub mod propagator;
pub mod schedule;
pub mod spectroscopy;
pub mod sweep;
pub mod units;
pub mod walk;

pub use error::{Error, Result};
