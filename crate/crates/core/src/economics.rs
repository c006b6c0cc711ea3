//! Reinforcement cost, cost and value of flexibility, and transformer-cost sensitivity.

use crate::dispatch::{opex_chf, DispatchSolution};
use crate::finance::annualization;
use crate::grid::{Network, OperatingLimits};
use crate::opf::SplicedTrajectory;
use crate::powerflow::NetworkState;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReinforcementInputs {
    pub c_line_kchf_per_km: f64,
    pub c_trafo_kchf_per_mva: f64,
    pub lifetime_years: f64,
    pub interest: f64,
}

impl Default for ReinforcementInputs {
    fn default() -> Self {
        Self {
            c_line_kchf_per_km: 70.0,
            c_trafo_kchf_per_mva: 60.0,
            lifetime_years: 30.0,
            interest: 0.03,
        }
    }
}

impl ReinforcementInputs {
    pub fn validate(&self) -> Result<()> {
        let ok = self.c_line_kchf_per_km >= 0.0
            && self.c_trafo_kchf_per_mva >= 0.0
            && self.lifetime_years >= 1.0
            && self.interest >= 0.0;
        if !ok {
            return Err(Error::invalid(format!("invalid reinforcement inputs {self:?}")));
        }
        Ok(())
    }

    pub fn annualization(&self) -> f64 {
        annualization(self.interest, self.lifetime_years)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ElementKind {
    Line,
    Transformer,
}

impl ElementKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ElementKind::Line => "line",
            ElementKind::Transformer => "transformer",
        }
    }
}

/// Peak loading of one branch over the horizon: kA for lines, MVA for transformers.
#[derive(Debug, Clone, PartialEq)]
pub struct ElementMax {
    pub element: String,
    pub kind: ElementKind,
    pub length_km: f64,
    pub max_value: f64,
    pub limit: f64,
}

impl ElementMax {
    pub fn replaced(&self) -> bool {
        self.max_value > self.limit
    }
}

pub fn element_maxima(states: &[NetworkState], network: &Network, limits: &OperatingLimits) -> Vec<ElementMax> {
    network
        .branches()
        .iter()
        .enumerate()
        .map(|(b, br)| {
            let (kind, limit, pick): (_, _, fn(&NetworkState, usize) -> f64) = match limits.rating_mva[b] {
                Some(r) => (ElementKind::Transformer, r, |s, b| s.apparent_mva[b]),
                None => (ElementKind::Line, limits.ampacity_ka[b], |s, b| s.current_ka[b]),
            };
            ElementMax {
                element: br.id.clone(),
                kind,
                length_km: br.length_km,
                max_value: states.iter().map(|s| pick(s, b)).fold(0.0, f64::max),
                limit,
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReinforcementCost {
    /// Investment in replaced lines, CHF.
    pub c_line_chf: f64,
    /// Investment in replacement transformers sized to the observed peak, CHF.
    pub c_trafo_chf: f64,
    pub annualization: f64,
    pub c_reinf_chf_yr: f64,
    pub replaced: Vec<String>,
}

pub fn reinforcement_cost_from_maxima(maxima: &[ElementMax], inputs: &ReinforcementInputs) -> ReinforcementCost {
    let mut c_line = 0.0;
    let mut c_trafo = 0.0;
    let mut replaced = Vec::new();
    for m in maxima.iter().filter(|m| m.replaced()) {
        match m.kind {
            ElementKind::Line => c_line += inputs.c_line_kchf_per_km * 1000.0 * m.length_km,
            ElementKind::Transformer => c_trafo += inputs.c_trafo_kchf_per_mva * 1000.0 * m.max_value,
        }
        replaced.push(m.element.clone());
    }
    let ann = inputs.annualization();
    ReinforcementCost {
        c_line_chf: c_line,
        c_trafo_chf: c_trafo,
        annualization: ann,
        c_reinf_chf_yr: ann * (c_line + c_trafo),
        replaced,
    }
}

/// Annualised cost of replacing every line whose peak current exceeds its
/// ampacity and every transformer whose peak loading exceeds its rating.
pub fn reinforcement_cost(
    states: &[NetworkState],
    network: &Network,
    limits: &OperatingLimits,
    inputs: &ReinforcementInputs,
) -> ReinforcementCost {
    reinforcement_cost_from_maxima(&element_maxima(states, network, limits), inputs)
}

/// Increase of the prosumers' yearly energy bill caused by flexibility
/// activation, CHF/yr. Signed: a negative value means the bills went down.
pub fn flexibility_cost(
    stage1: &[DispatchSolution],
    spliced: &[SplicedTrajectory],
    import_chf: &[f64],
    export_chf: &[f64],
    dt_h: f64,
    year_weight: f64,
) -> Result<f64> {
    if stage1.len() != spliced.len() {
        return Err(Error::invalid(format!(
            "{} stage-1 trajectories but {} spliced ones",
            stage1.len(),
            spliced.len()
        )));
    }
    let mut delta = 0.0;
    for (a, b) in stage1.iter().zip(spliced) {
        if a.bus_id != b.bus_id || a.p_grid_kw.len() != b.p_grid_kw.len() || a.p_grid_kw.len() != import_chf.len() {
            return Err(Error::invalid(format!("trajectories of {} do not line up", a.bus_id)));
        }
        let before = opex_chf(&a.p_grid_kw, import_chf, export_chf, dt_h, year_weight);
        let after = opex_chf(&b.p_grid_kw, import_chf, export_chf, dt_h, year_weight);
        delta += after - before;
    }
    Ok(delta)
}

/// One-off value per kW of flexible capacity that leaves the grid operator
/// indifferent between reinforcing and paying for flexibility, CHF/kW.
pub fn flexibility_capacity_value(c_reinf_chf_yr: f64, delta_opex_chf_yr: f64, grid_annualization: f64, flex_capacity_kw: &[f64]) -> Result<f64> {
    let total: f64 = flex_capacity_kw.iter().sum();
    if !(total > 0.0) {
        return Err(Error::invalid("total flexibility capacity must be positive"));
    }
    if !(grid_annualization > 0.0) {
        return Err(Error::invalid("grid annualization factor must be positive"));
    }
    Ok((c_reinf_chf_yr - delta_opex_chf_yr) / grid_annualization / total)
}

/// One scenario of a sweep: its penetration, flexibility cost and branch peaks.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepPoint {
    pub penetration_pct: f64,
    pub delta_opex_chf_yr: f64,
    pub maxima: Vec<ElementMax>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BreakEven {
    pub c_trafo_kchf_per_mva: f64,
    /// `(penetration, C_reinf, delta opex)` per scenario, in ladder order.
    pub points: Vec<(f64, f64, f64)>,
    /// Highest penetration up to which flexibility stays no more expensive
    /// than reinforcement in every scenario. `None` when it never gets more
    /// expensive over the ladder.
    pub break_even_pct: Option<f64>,
}

/// Re-prices reinforcement for each transformer cost and locates the break-even.
/// Scenarios must be ordered by increasing penetration.
pub fn sensitivity_sweep(scenarios: &[SweepPoint], c_trafo_values: &[f64], inputs: &ReinforcementInputs) -> Result<Vec<BreakEven>> {
    if c_trafo_values.len() < 2 {
        return Err(Error::invalid("a sensitivity sweep needs at least two transformer costs"));
    }
    if scenarios.windows(2).any(|w| w[1].penetration_pct < w[0].penetration_pct) {
        return Err(Error::invalid("sweep scenarios must be ordered by penetration"));
    }
    c_trafo_values
        .iter()
        .map(|&c| {
            let inp = ReinforcementInputs {
                c_trafo_kchf_per_mva: c,
                ..*inputs
            };
            inp.validate()?;
            let points: Vec<(f64, f64, f64)> = scenarios
                .iter()
                .map(|s| {
                    let cost = reinforcement_cost_from_maxima(&s.maxima, &inp);
                    (s.penetration_pct, cost.c_reinf_chf_yr, s.delta_opex_chf_yr)
                })
                .collect();
            Ok(BreakEven {
                c_trafo_kchf_per_mva: c,
                break_even_pct: break_even(&points),
                points,
            })
        })
        .collect()
}

/// Last penetration of the leading run where delta opex <= C_reinf, provided
/// the run ends inside the ladder.
pub fn break_even(points: &[(f64, f64, f64)]) -> Option<f64> {
    let run = points.iter().take_while(|p| p.2 <= p.1).count();
    if run == points.len() {
        return None;
    }
    Some(if run == 0 { 0.0 } else { points[run - 1].0 })
}
