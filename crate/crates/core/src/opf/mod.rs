//! Curtailment-minimising multi-period AC-OPF over intervention periods.

mod slp;
mod splice;

use std::fmt;
use std::str::FromStr;

use crate::dispatch::{BatteryParams, DispatchSolution};
use crate::grid::{AdmittanceModel, Network, OperatingLimits};
use crate::powerflow::{NetworkState, PfOptions, Slack};
use crate::profiles::TimeSeriesSet;
use crate::{Error, Result};

pub use slp::solve_period;
pub use splice::{splice_controls, SplicedTrajectory};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum FlexMode {
    WithStorage,
    NoStorage,
}

impl FlexMode {
    pub const ALL: [FlexMode; 2] = [FlexMode::WithStorage, FlexMode::NoStorage];

    pub fn as_str(self) -> &'static str {
        match self {
            FlexMode::WithStorage => "with_storage",
            FlexMode::NoStorage => "no_storage",
        }
    }
}

impl fmt::Display for FlexMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for FlexMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::invalid(format!("unknown mode {s:?} (expected with_storage or no_storage)")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OpfOptions {
    /// Stop once an accepted step moves no control by more than this, pu.
    pub tol: f64,
    pub max_outer_iter: usize,
    /// Initial trust-region radius on every control, pu.
    pub trust_region: f64,
    /// Reactive capability per kW of installed PV, kvar/kW.
    pub q_ratio: f64,
    /// Merit weight of limit violations, kWh per pu of violation.
    pub penalty: f64,
    /// Internal tightening of every limit, pu or fraction of rating.
    pub backoff: f64,
    /// Weight of the battery deviation term, per kW.
    pub tie_break: f64,
    /// Residual violation accepted as feasible.
    pub feas_tol: f64,
    pub pf: PfOptions,
}

impl Default for OpfOptions {
    fn default() -> Self {
        Self {
            tol: 1e-4,
            max_outer_iter: 100,
            trust_region: 0.05,
            q_ratio: 0.4,
            penalty: 1e5,
            backoff: 1e-5,
            tie_break: 1e-6,
            feas_tol: 1e-6,
            pf: PfOptions::default(),
        }
    }
}

impl OpfOptions {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("opf.tol", self.tol),
            ("opf.trust_region", self.trust_region),
            ("opf.penalty", self.penalty),
            ("opf.feas_tol", self.feas_tol),
        ];
        for (key, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config {
                    key: key.into(),
                    msg: format!("must be positive, got {v}"),
                });
            }
        }
        if !(self.q_ratio >= 0.0) || !(self.backoff >= 0.0) || !(self.tie_break >= 0.0) {
            return Err(Error::invalid("OPF q ratio, back-off and tie-break weight must be non-negative"));
        }
        if self.max_outer_iter == 0 {
            return Err(Error::Config {
                key: "opf.max_outer_iter".into(),
                msg: "must be at least 1".into(),
            });
        }
        Ok(())
    }
}

/// Everything shared by the periods of one scenario and mode.
///
/// Prosumer order is that of `network.prosumers()`; profiles and stage-1
/// solutions must follow it.
#[derive(Debug, Clone, Copy)]
pub struct FlexContext<'a> {
    pub network: &'a Network,
    pub model: &'a AdmittanceModel,
    pub limits: &'a OperatingLimits,
    pub profiles: &'a TimeSeriesSet,
    pub stage1: &'a [DispatchSolution],
    pub battery: &'a BatteryParams,
}

impl<'a> FlexContext<'a> {
    pub fn new(
        network: &'a Network,
        model: &'a AdmittanceModel,
        limits: &'a OperatingLimits,
        profiles: &'a TimeSeriesSet,
        stage1: &'a [DispatchSolution],
        battery: &'a BatteryParams,
    ) -> Result<Self> {
        let ids = network.prosumer_ids();
        if profiles.bus_ids.iter().map(String::as_str).ne(ids.iter().copied()) {
            return Err(Error::invalid("profile columns do not follow the network prosumer order"));
        }
        if stage1.iter().map(|s| s.bus_id.as_str()).ne(ids.iter().copied()) {
            return Err(Error::invalid("dispatch solutions do not follow the network prosumer order"));
        }
        if let Some(s) = stage1.iter().find(|s| s.horizon() != profiles.horizon()) {
            return Err(Error::Horizon {
                expected: profiles.horizon(),
                found: s.horizon(),
            });
        }
        Ok(Self {
            network,
            model,
            limits,
            profiles,
            stage1,
            battery,
        })
    }

    pub fn pv_kw(&self, j: usize, t: usize) -> f64 {
        self.profiles.pv_yield[j][t] * self.stage1[j].pv_capacity_kw
    }
}

/// Controls and operating points of one solved period. Per-prosumer series
/// are indexed by offset from `start`; `soc_kwh` has one extra closing entry.
#[derive(Debug, Clone, PartialEq)]
pub struct OpfSolution {
    pub period: usize,
    pub start: usize,
    pub end: usize,
    pub mode: FlexMode,
    pub bus_ids: Vec<String>,
    pub p_cur_kw: Vec<Vec<f64>>,
    pub p_bat_kw: Vec<Vec<f64>>,
    pub q_kvar: Vec<Vec<f64>>,
    pub soc_kwh: Vec<Vec<f64>>,
    pub p_grid_kw: Vec<Vec<f64>>,
    pub states: Vec<NetworkState>,
    /// Curtailed PV energy over the period, kWh (not scaled to a year).
    pub curtailed_kwh: f64,
    /// Tightest limit over the period, checked against the unmodified limits.
    pub worst_slack: Slack,
    pub iterations: usize,
}

impl OpfSolution {
    pub fn len(&self) -> usize {
        self.end - self.start + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}
