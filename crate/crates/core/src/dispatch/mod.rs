//! Prosumer battery sizing and dispatch against a time-of-use tariff.

mod optimize;
mod tariff;

pub use crate::finance::annualization;
pub use optimize::{
    battery_count_summary, opex_chf, optimize_dispatch, optimize_dispatch_fixed, BatteryParams, CapacityTable,
    DispatchInput, DispatchSolution,
};
pub use tariff::Tariff;
