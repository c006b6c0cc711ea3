use super::Tariff;
use crate::finance::annualization;
use crate::lp::{LinearProgram, Var};
use crate::profiles::TimeSeriesSet;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct BatteryParams {
    pub unit_cost_chf_per_kwh: f64,
    pub fixed_cost_chf: f64,
    pub lifetime_years: f64,
    pub interest: f64,
    pub charge_efficiency: f64,
    pub discharge_efficiency: f64,
    /// Power limit per kWh of capacity (kW/kWh).
    pub power_ratio: f64,
    pub soc_min: f64,
    pub soc_max: f64,
    /// State of charge at the start (and, cyclically, the end) of the horizon.
    pub initial_soc: f64,
    /// Weight of the discharge-throughput regulariser, CHF per kW and step.
    pub sigma_weight: f64,
}

impl Default for BatteryParams {
    fn default() -> Self {
        Self {
            unit_cost_chf_per_kwh: 182.0,
            fixed_cost_chf: 0.0,
            lifetime_years: 9.0,
            interest: 0.03,
            charge_efficiency: 0.95,
            discharge_efficiency: 0.95,
            power_ratio: 0.5,
            soc_min: 0.0,
            soc_max: 1.0,
            initial_soc: 0.5,
            sigma_weight: 1e-6,
        }
    }
}

impl BatteryParams {
    pub fn validate(&self) -> Result<()> {
        let eff = |e: f64| e > 0.0 && e <= 1.0;
        if !eff(self.charge_efficiency) || !eff(self.discharge_efficiency) {
            return Err(Error::invalid("battery efficiencies must lie in (0, 1]"));
        }
        if !(self.power_ratio > 0.0) {
            return Err(Error::invalid("battery power ratio must be positive"));
        }
        if !(self.lifetime_years >= 1.0) {
            return Err(Error::invalid("battery lifetime must be at least one year"));
        }
        if !(0.0 <= self.soc_min && self.soc_min <= self.initial_soc && self.initial_soc <= self.soc_max && self.soc_max <= 1.0) {
            return Err(Error::invalid("battery SOC bounds must satisfy 0 <= min <= initial <= max <= 1"));
        }
        if self.unit_cost_chf_per_kwh < 0.0 || self.fixed_cost_chf < 0.0 || self.sigma_weight < 0.0 {
            return Err(Error::invalid("battery costs must be non-negative"));
        }
        Ok(())
    }

    pub fn annualization(&self) -> f64 {
        annualization(self.interest, self.lifetime_years)
    }
}

/// Everything one prosumer's dispatch problem needs, prices in CHF/kWh.
#[derive(Debug, Clone, PartialEq)]
pub struct DispatchInput {
    pub bus_id: String,
    pub pv_capacity_kw: f64,
    pub load_kw: Vec<f64>,
    pub pv_kw: Vec<f64>,
    pub import_chf: Vec<f64>,
    pub export_chf: Vec<f64>,
    pub dt_h: f64,
    pub year_weight: f64,
}

impl DispatchInput {
    pub fn from_profiles(profiles: &TimeSeriesSet, p: usize, pv_capacity_kw: f64, tariff: &Tariff) -> Self {
        let (import_chf, export_chf) = profiles
            .timestamps
            .iter()
            .map(|ts| {
                let (i, e) = tariff.rate(*ts);
                (i / 100.0, e / 100.0)
            })
            .unzip();
        Self {
            bus_id: profiles.bus_ids[p].clone(),
            pv_capacity_kw,
            load_kw: profiles.load_kw[p].clone(),
            pv_kw: profiles.pv_yield[p].iter().map(|y| y * pv_capacity_kw).collect(),
            import_chf,
            export_chf,
            dt_h: profiles.dt_hours(),
            year_weight: profiles.year_weight,
        }
    }

    pub fn horizon(&self) -> usize {
        self.load_kw.len()
    }

    fn check(&self) -> Result<()> {
        let t = self.horizon();
        for (name, len) in [
            ("pv", self.pv_kw.len()),
            ("import price", self.import_chf.len()),
            ("export price", self.export_chf.len()),
        ] {
            if len != t {
                return Err(Error::invalid(format!(
                    "{}: {name} series has {len} steps, load has {t}",
                    self.bus_id
                )));
            }
        }
        if t == 0 {
            return Err(Error::Horizon { expected: 1, found: 0 });
        }
        if !(self.pv_capacity_kw >= 0.0) {
            return Err(Error::invalid("PV capacity must be non-negative"));
        }
        Ok(())
    }
}

/// Optimal battery size and trajectory of one prosumer.
///
/// `p_bat_kw` is positive when discharging, `p_grid_kw` positive when exporting.
/// `soc_kwh[t]` is the energy content at the start of step `t`; it has one more
/// entry than the power series and closes cyclically.
#[derive(Debug, Clone, PartialEq)]
pub struct DispatchSolution {
    pub bus_id: String,
    pub pv_capacity_kw: f64,
    pub capacity_kwh: f64,
    pub power_kw: f64,
    pub p_bat_kw: Vec<f64>,
    pub soc_kwh: Vec<f64>,
    pub p_grid_kw: Vec<f64>,
    pub opex_chf_yr: f64,
    pub sigma_chf_yr: f64,
    pub totex_chf_yr: f64,
}

impl DispatchSolution {
    pub fn horizon(&self) -> usize {
        self.p_grid_kw.len()
    }
}

/// Annual cost of exchanging `p_grid_kw` with the grid (positive = export).
pub fn opex_chf(p_grid_kw: &[f64], import_chf: &[f64], export_chf: &[f64], dt_h: f64, year_weight: f64) -> f64 {
    let sum: f64 = p_grid_kw
        .iter()
        .zip(import_chf.iter().zip(export_chf))
        .map(|(p, (ci, ce))| (-p).max(0.0) * ci - p.max(0.0) * ce)
        .sum();
    sum * dt_h * year_weight
}

/// Jointly sizes the battery and optimises its dispatch over the horizon.
pub fn optimize_dispatch(input: &DispatchInput, params: &BatteryParams) -> Result<DispatchSolution> {
    params.validate()?;
    input.check()?;
    let free = solve(input, params, None)?;
    if params.fixed_cost_chf > 0.0 {
        let none = solve(input, params, Some(0.0))?;
        if none.totex_chf_yr <= free.totex_chf_yr {
            return Ok(none);
        }
    }
    Ok(free)
}

/// Optimal dispatch for a given battery capacity.
pub fn optimize_dispatch_fixed(input: &DispatchInput, params: &BatteryParams, capacity_kwh: f64) -> Result<DispatchSolution> {
    params.validate()?;
    input.check()?;
    if !(capacity_kwh >= 0.0) {
        return Err(Error::invalid("battery capacity must be non-negative"));
    }
    solve(input, params, Some(capacity_kwh))
}

fn solve(input: &DispatchInput, params: &BatteryParams, fixed: Option<f64>) -> Result<DispatchSolution> {
    let n = input.horizon();
    let dt = input.dt_h;
    let w = input.year_weight;
    let ann = params.annualization();

    if fixed == Some(0.0) {
        let p_grid: Vec<f64> = input.pv_kw.iter().zip(&input.load_kw).map(|(pv, l)| pv - l).collect();
        let opex = opex_chf(&p_grid, &input.import_chf, &input.export_chf, dt, w);
        return Ok(DispatchSolution {
            bus_id: input.bus_id.clone(),
            pv_capacity_kw: input.pv_capacity_kw,
            capacity_kwh: 0.0,
            power_kw: 0.0,
            p_bat_kw: vec![0.0; n],
            soc_kwh: vec![0.0; n + 1],
            p_grid_kw: p_grid,
            opex_chf_yr: opex,
            sigma_chf_yr: 0.0,
            totex_chf_yr: opex,
        });
    }

    let mut lp = LinearProgram::new();
    let (cap_lo, cap_hi) = match fixed {
        Some(c) => (c, c),
        None => (0.0, f64::INFINITY),
    };
    let cap = lp.add_var(ann * params.unit_cost_chf_per_kwh, cap_lo, cap_hi);
    let mut ch = Vec::with_capacity(n);
    let mut dis = Vec::with_capacity(n);
    let mut imp = Vec::with_capacity(n);
    let mut exp = Vec::with_capacity(n);
    let mut soc: Vec<Var> = Vec::with_capacity(n);
    for t in 0..n {
        ch.push(lp.add_var(0.0, 0.0, f64::INFINITY));
        dis.push(lp.add_var(params.sigma_weight * w, 0.0, f64::INFINITY));
        imp.push(lp.add_var(input.import_chf[t] * dt * w, 0.0, f64::INFINITY));
        exp.push(lp.add_var(-input.export_chf[t] * dt * w, 0.0, f64::INFINITY));
        soc.push(lp.add_var(0.0, 0.0, f64::INFINITY));
    }
    for t in 0..n {
        // exp - imp = pv - load + dis - ch
        lp.add_eq(
            input.pv_kw[t] - input.load_kw[t],
            vec![(exp[t], 1.0), (imp[t], -1.0), (dis[t], -1.0), (ch[t], 1.0)],
        );
        let next = soc[(t + 1) % n];
        let mut terms = vec![
            (soc[t], -1.0),
            (ch[t], -params.charge_efficiency * dt),
            (dis[t], dt / params.discharge_efficiency),
        ];
        if n == 1 {
            terms[0].1 = 0.0;
        } else {
            terms.push((next, 1.0));
        }
        lp.add_eq(0.0, terms);
        lp.add_le(0.0, vec![(soc[t], 1.0), (cap, -params.soc_max)]);
        lp.add_ge(0.0, vec![(soc[t], 1.0), (cap, -params.soc_min)]);
        lp.add_le(0.0, vec![(ch[t], 1.0), (cap, -params.power_ratio)]);
        lp.add_le(0.0, vec![(dis[t], 1.0), (cap, -params.power_ratio)]);
    }
    lp.add_eq(0.0, vec![(soc[0], 1.0), (cap, -params.initial_soc)]);

    let sol = lp.solve()?;
    let capacity = sol.value(cap).max(0.0);
    let p_bat: Vec<f64> = (0..n).map(|t| sol.value(dis[t]) - sol.value(ch[t])).collect();
    let p_grid: Vec<f64> = (0..n).map(|t| sol.value(exp[t]) - sol.value(imp[t])).collect();
    let mut soc_kwh: Vec<f64> = (0..n).map(|t| sol.value(soc[t]).clamp(0.0, capacity)).collect();
    soc_kwh.push(soc_kwh[0]);
    let opex = (0..n)
        .map(|t| sol.value(imp[t]) * input.import_chf[t] - sol.value(exp[t]) * input.export_chf[t])
        .sum::<f64>()
        * dt
        * w;
    let sigma = params.sigma_weight * w * (0..n).map(|t| sol.value(dis[t])).sum::<f64>();
    let capex = if capacity > 0.0 {
        ann * (params.fixed_cost_chf + params.unit_cost_chf_per_kwh * capacity)
    } else {
        0.0
    };
    Ok(DispatchSolution {
        bus_id: input.bus_id.clone(),
        pv_capacity_kw: input.pv_capacity_kw,
        capacity_kwh: capacity,
        power_kw: params.power_ratio * capacity,
        p_bat_kw: p_bat,
        soc_kwh,
        p_grid_kw: p_grid,
        opex_chf_yr: opex,
        sigma_chf_yr: sigma,
        totex_chf_yr: opex + sigma + capex,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct CapacityTable {
    pub rows: Vec<(String, f64)>,
    pub total_kwh: f64,
}

pub fn battery_count_summary(solutions: &[DispatchSolution]) -> CapacityTable {
    let rows: Vec<(String, f64)> = solutions.iter().map(|s| (s.bus_id.clone(), s.capacity_kwh)).collect();
    let total_kwh = rows.iter().map(|r| r.1).sum();
    CapacityTable { rows, total_kwh }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy(pv_peak: f64, flat_price: Option<f64>) -> DispatchInput {
        let n = 24;
        let load: Vec<f64> = (0..n).map(|h| if (17..22).contains(&h) { 2.0 } else { 0.6 }).collect();
        let pv: Vec<f64> = (0..n)
            .map(|h| {
                let x = (h as f64 + 0.5 - 13.0) / 4.0;
                if x.abs() < 1.0 { pv_peak * (1.0 - x * x) } else { 0.0 }
            })
            .collect();
        let (imp, exp) = match flat_price {
            Some(c) => (vec![c; n], vec![c; n]),
            None => (
                (0..n).map(|h| if (6..22).contains(&h) { 0.2392 } else { 0.1516 }).collect(),
                vec![0.0816; n],
            ),
        };
        DispatchInput {
            bus_id: "A".into(),
            pv_capacity_kw: pv_peak,
            load_kw: load,
            pv_kw: pv,
            import_chf: imp,
            export_chf: exp,
            dt_h: 1.0,
            year_weight: 365.0,
        }
    }

    #[test]
    fn no_arbitrage_means_no_battery() {
        let input = toy(0.0, Some(0.2));
        let sol = optimize_dispatch(&input, &BatteryParams::default()).unwrap();
        assert_eq!(sol.capacity_kwh, 0.0);
        assert!(sol.p_bat_kw.iter().all(|p| p.abs() < 1e-9));
        let expected: f64 = input.load_kw.iter().map(|l| l * 0.2).sum::<f64>() * 365.0;
        assert!((sol.opex_chf_yr - expected).abs() < 1e-6 * expected);
    }

    #[test]
    fn zero_capacity_passes_net_load_through() {
        let input = toy(4.0, None);
        let sol = optimize_dispatch_fixed(&input, &BatteryParams::default(), 0.0).unwrap();
        for t in 0..24 {
            assert_eq!(sol.p_grid_kw[t], input.pv_kw[t] - input.load_kw[t]);
        }
    }

    #[test]
    fn solution_invariants() {
        let input = toy(5.0, None);
        let params = BatteryParams {
            unit_cost_chf_per_kwh: 20.0,
            ..Default::default()
        };
        let sol = optimize_dispatch(&input, &params).unwrap();
        assert!(sol.capacity_kwh > 0.0);
        for t in 0..24 {
            assert!(sol.soc_kwh[t] >= -1e-9 && sol.soc_kwh[t] <= sol.capacity_kwh + 1e-9);
            assert!(sol.p_bat_kw[t].abs() <= params.power_ratio * sol.capacity_kwh + 1e-9);
            let balance = input.pv_kw[t] - input.load_kw[t] + sol.p_bat_kw[t];
            assert!((sol.p_grid_kw[t] - balance).abs() < 1e-9);
        }
        assert!((sol.soc_kwh[0] - 0.5 * sol.capacity_kwh).abs() < 1e-9);
        assert_eq!(sol.soc_kwh[0], sol.soc_kwh[24]);
    }

    #[test]
    fn fixed_cost_can_rule_out_battery() {
        let input = toy(5.0, None);
        let cheap = BatteryParams {
            unit_cost_chf_per_kwh: 20.0,
            ..Default::default()
        };
        assert!(optimize_dispatch(&input, &cheap).unwrap().capacity_kwh > 0.0);
        let lumpy = BatteryParams {
            fixed_cost_chf: 1e6,
            ..cheap
        };
        assert_eq!(optimize_dispatch(&input, &lumpy).unwrap().capacity_kwh, 0.0);
    }

    #[test]
    fn horizon_mismatch_rejected() {
        let mut input = toy(1.0, None);
        input.pv_kw.pop();
        assert!(optimize_dispatch(&input, &BatteryParams::default()).is_err());
    }

    #[test]
    fn capacity_table() {
        let input = toy(0.0, None);
        let params = BatteryParams::default();
        let a = optimize_dispatch(&input, &params).unwrap();
        let b = optimize_dispatch(&input, &params).unwrap();
        let table = battery_count_summary(&[a, b]);
        assert_eq!(table.rows.len(), 2);
        assert_eq!(table.rows[0].1, table.rows[1].1);
        assert_eq!(table.total_kwh, table.rows[0].1 * 2.0);
    }
}
