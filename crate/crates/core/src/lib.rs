//! Distributed flexibility versus grid reinforcement in low-voltage networks.
//!
//! The crate runs a sequential study over PV penetration scenarios:
//!
//! 1. size and dispatch each prosumer battery against a time-of-use tariff ([`dispatch`]),
//! 2. solve the AC load flow for every step and audit the network limits ([`powerflow`]),
//! 3. price grid reinforcement for the violated elements ([`economics`]),
//! 4. re-dispatch batteries, curtail PV and use inverter reactive power inside each
//!    contiguous violation period with a multi-period AC-OPF ([`opf`]),
//! 5. compare the resulting increase in prosumer operating cost with the reinforcement cost.
//!
//! [`study`] wires the stages together and [`report`] writes the CSV outputs.

pub mod config;
pub mod csvio;
pub mod dispatch;
pub mod economics;
pub mod error;
pub mod finance;
pub mod grid;
pub mod lp;
pub mod opf;
pub mod powerflow;
pub mod profiles;
pub mod report;
pub mod study;

pub use error::{Error, Result};
