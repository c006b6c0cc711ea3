//! AC load flow, limit audit and grouping of violations into intervention periods.

mod audit;
mod newton;
mod periods;

pub use audit::{audit, audit_step, summarize, worst_slack, CategorySummary, Slack, ViolationKind, ViolationRecord};
pub use newton::{
    sensitivities, solve_loadflow, solve_loadflow_from, solve_series, InjectionFrame, NetworkState, PfOptions,
    Sensitivities, SERIES_CHUNK,
};
pub use periods::{extract_periods, InterventionPeriod};
