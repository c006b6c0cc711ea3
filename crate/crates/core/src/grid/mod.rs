//! Low-voltage network model: topology, per-unit admittances and operating limits.

mod admittance;
mod network;

pub use admittance::{AdmittanceModel, BranchAdmittance, TransformerDefaults, S_BASE_MVA};
pub use network::{Branch, Bus, BusKind, Network, OperatingLimits};
