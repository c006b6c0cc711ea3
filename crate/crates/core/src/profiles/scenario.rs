use std::path::Path;

use super::TimeSeriesSet;
use crate::finance::annualization;
use crate::{Error, Result};

const CIGRE_SYSTEMS: &str = include_str!("../../data/cigre_systems.csv");

/// Default scale ladder, spaced to land near 11–158 % PV penetration on the CIGRE case.
pub const DEFAULT_SCALES: [f64; 8] = [0.07, 0.25, 0.45, 0.55, 0.65, 0.76, 0.87, 1.0];

/// PV levelised-cost gate parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LcoeParams {
    pub lifetime_years: f64,
    pub discount_rate: f64,
    pub variable_chf_per_w: f64,
    pub fixed_chf: f64,
    pub threshold_cts: f64,
}

impl Default for LcoeParams {
    fn default() -> Self {
        Self {
            lifetime_years: 25.0,
            discount_rate: 0.03,
            variable_chf_per_w: 0.83,
            fixed_chf: 10_050.0,
            threshold_cts: 23.92,
        }
    }
}

impl LcoeParams {
    pub fn validate(&self) -> Result<()> {
        let all = [
            self.lifetime_years,
            self.discount_rate,
            self.variable_chf_per_w,
            self.fixed_chf,
            self.threshold_cts,
        ];
        if all.iter().any(|v| !(*v > 0.0)) {
            return Err(Error::invalid("LCOE parameters must be strictly positive"));
        }
        Ok(())
    }

    /// Annualised capital cost over annual yield, in cts/kWh. Infinite for an
    /// empty system.
    pub fn lcoe_cts(&self, capacity_kw: f64, annual_yield_kwh_per_kw: f64) -> f64 {
        let energy = capacity_kw * annual_yield_kwh_per_kw;
        if energy <= 0.0 {
            return f64::INFINITY;
        }
        let capex = self.fixed_chf + self.variable_chf_per_w * 1000.0 * capacity_kw;
        100.0 * annualization(self.discount_rate, self.lifetime_years) * capex / energy
    }
}

/// One row of the prosumer systems table.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemSpec {
    pub bus_id: String,
    pub annual_demand_mwh: f64,
    pub pv_max_kw: f64,
    /// Reference battery size reported for the original study (informational).
    pub battery_ref_kwh: f64,
}

impl SystemSpec {
    /// The bundled CIGRE prosumer table.
    pub fn cigre_table() -> Vec<SystemSpec> {
        Self::parse(CIGRE_SYSTEMS).expect("bundled table is valid")
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Vec<SystemSpec>> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Vec<SystemSpec>> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
        let mut out = Vec::new();
        for rec in rdr.records() {
            let rec = rec?;
            let num = |i: usize| -> Result<f64> {
                rec.get(i)
                    .and_then(|s| s.parse().ok())
                    .ok_or_else(|| Error::invalid(format!("systems table: bad field {i} in {rec:?}")))
            };
            out.push(SystemSpec {
                bus_id: rec.get(0).unwrap_or_default().to_string(),
                annual_demand_mwh: num(1)?,
                pv_max_kw: num(2)?,
                battery_ref_kwh: num(3).unwrap_or(0.0),
            });
        }
        Ok(out)
    }
}

/// PV system of one prosumer in one scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct PvSystem {
    pub bus_id: String,
    pub module_count: u32,
    pub capacity_kw: f64,
    /// LCOE of the rounded system before gating, cts/kWh.
    pub lcoe_cts: f64,
    /// True when the LCOE gate zeroed the capacity.
    pub gated: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PvScenario {
    pub scale: f64,
    pub module_kw: f64,
    pub systems: Vec<PvSystem>,
    pub penetration_pct: f64,
}

impl PvScenario {
    /// Builds the scenario for scale `alpha` over the prosumers of `profiles`.
    pub fn build(
        alpha: f64,
        specs: &[SystemSpec],
        module_kw: f64,
        lcoe: &LcoeParams,
        profiles: &TimeSeriesSet,
    ) -> Result<Self> {
        let mut systems = Vec::with_capacity(profiles.num_prosumers());
        for (p, id) in profiles.bus_ids.iter().enumerate() {
            let spec = specs
                .iter()
                .find(|s| &s.bus_id == id)
                .ok_or_else(|| Error::invalid(format!("no system data for prosumer {id}")))?;
            let n_max = (spec.pv_max_kw / module_kw).round() as u32;
            let mut sys = scale_pv(alpha, n_max, module_kw, lcoe, profiles.annual_yield_per_kw(p))?;
            sys.bus_id = id.clone();
            systems.push(sys);
        }
        let mut scenario = PvScenario {
            scale: alpha,
            module_kw,
            systems,
            penetration_pct: 0.0,
        };
        scenario.penetration_pct = penetration_of(&scenario, profiles)?;
        Ok(scenario)
    }

    pub fn capacities_kw(&self) -> Vec<f64> {
        self.systems.iter().map(|s| s.capacity_kw).collect()
    }

    pub fn total_capacity_kw(&self) -> f64 {
        self.systems.iter().map(|s| s.capacity_kw).sum()
    }
}

/// Scales a system's module count and applies the LCOE gate.
///
/// The module count is `round(alpha * n_mod_max)` with ties away from zero; the
/// capacity is zeroed when the resulting LCOE exceeds the threshold.
pub fn scale_pv(
    alpha: f64,
    n_mod_max: u32,
    module_kw: f64,
    lcoe: &LcoeParams,
    annual_yield_per_kw: f64,
) -> Result<PvSystem> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::invalid(format!("scale must lie in (0, 1], got {alpha}")));
    }
    if !(module_kw > 0.0) {
        return Err(Error::invalid("module power must be positive"));
    }
    let n = (alpha * n_mod_max as f64).round() as u32;
    let capacity = n as f64 * module_kw;
    let cost = lcoe.lcoe_cts(capacity, annual_yield_per_kw);
    let gated = cost > lcoe.threshold_cts;
    Ok(PvSystem {
        bus_id: String::new(),
        module_count: if gated { 0 } else { n },
        capacity_kw: if gated { 0.0 } else { capacity },
        lcoe_cts: cost,
        gated,
    })
}

pub fn penetration_from_energy(pv_kwh: f64, demand_kwh: f64) -> Result<f64> {
    if !(demand_kwh > 0.0) {
        return Err(Error::invalid("annual demand is zero"));
    }
    Ok(100.0 * pv_kwh / demand_kwh)
}

/// Annual PV generation as a percentage of annual network demand.
pub fn penetration_of(scenario: &PvScenario, profiles: &TimeSeriesSet) -> Result<f64> {
    if scenario.systems.len() != profiles.num_prosumers() {
        return Err(Error::invalid("scenario and profiles cover different prosumers"));
    }
    let pv: f64 = scenario
        .systems
        .iter()
        .enumerate()
        .map(|(p, s)| s.capacity_kw * profiles.annual_yield_per_kw(p))
        .sum();
    penetration_from_energy(pv, profiles.annual_demand_kwh())
}
