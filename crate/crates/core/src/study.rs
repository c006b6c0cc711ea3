//! End-to-end study over the PV scenario ladder.

use rayon::prelude::*;

use crate::config::{ProfileSource, StudyConfig};
use crate::dispatch::{optimize_dispatch, optimize_dispatch_fixed, DispatchInput, DispatchSolution, Tariff};
use crate::economics::{
    element_maxima, flexibility_capacity_value, flexibility_cost, reinforcement_cost_from_maxima, sensitivity_sweep,
    BreakEven, ElementMax, ReinforcementCost, ReinforcementInputs, SweepPoint,
};
use crate::grid::{AdmittanceModel, Network, OperatingLimits};
use crate::opf::{solve_period, splice_controls, FlexContext, FlexMode, OpfSolution, SplicedTrajectory};
use crate::powerflow::{
    audit, audit_step, extract_periods, solve_loadflow_from, solve_series, summarize, worst_slack, CategorySummary,
    InjectionFrame, InterventionPeriod, NetworkState, PfOptions, ViolationRecord,
};
use crate::profiles::{synthesize_profiles, PvScenario, SynthOptions, SystemSpec, TimeSeriesSet};
use crate::{Error, Result};

/// Network, profiles and prices shared by every scenario.
#[derive(Debug, Clone)]
pub struct StudyInputs {
    pub network: Network,
    pub model: AdmittanceModel,
    pub limits: OperatingLimits,
    pub systems: Vec<SystemSpec>,
    pub profiles: TimeSeriesSet,
    pub import_chf: Vec<f64>,
    pub export_chf: Vec<f64>,
}

impl StudyInputs {
    pub fn prepare(config: &StudyConfig) -> Result<Self> {
        let network = match &config.network {
            Some(p) => Network::load(p)?,
            None => Network::cigre_lv(),
        };
        let systems = match &config.systems {
            Some(p) => SystemSpec::load(p)?,
            None => SystemSpec::cigre_table(),
        };
        let demand: Vec<f64> = network
            .prosumer_ids()
            .iter()
            .map(|id| {
                systems
                    .iter()
                    .find(|s| s.bus_id == *id)
                    .map(|s| s.annual_demand_mwh)
                    .ok_or_else(|| Error::invalid(format!("no system data for prosumer {id}")))
            })
            .collect::<Result<_>>()?;
        let full = match &config.profiles {
            ProfileSource::Synthetic { seed } => synthesize_profiles(*seed, &demand, &network, &SynthOptions::default())?,
            ProfileSource::Files { load, pv } => {
                let mut set = TimeSeriesSet::load(load, &network)?;
                match pv {
                    Some(p) => set.read_pv_yield(p, &network)?,
                    None => {
                        let opts = SynthOptions {
                            start: set.timestamps[0],
                            step_seconds: set.step_seconds,
                            ..SynthOptions::default()
                        };
                        set.pv_yield = synthesize_profiles(config.seed, &demand, &network, &opts)?.pv_yield;
                    }
                }
                set
            }
        };
        let profiles = match &config.weeks {
            Some(w) => full.representative_weeks(w)?,
            None => full,
        };
        Self::from_parts(network, systems, profiles, &config.tariff, config.v_min, config.v_max)
    }

    pub fn from_parts(
        network: Network,
        systems: Vec<SystemSpec>,
        profiles: TimeSeriesSet,
        tariff: &Tariff,
        v_min: f64,
        v_max: f64,
    ) -> Result<Self> {
        let model = AdmittanceModel::build(&network)?;
        let limits = OperatingLimits::new(&network, v_min, v_max)?;
        let (import_chf, export_chf) = profiles
            .timestamps
            .iter()
            .map(|ts| {
                let (i, e) = tariff.rate(*ts);
                (i / 100.0, e / 100.0)
            })
            .unzip();
        Ok(Self {
            network,
            model,
            limits,
            systems,
            profiles,
            import_chf,
            export_chf,
        })
    }
}

/// Stage 1: battery sizing and dispatch per prosumer. Without storage every
/// prosumer simply exchanges its net PV surplus.
pub fn dispatch_stage(inputs: &StudyInputs, capacities_kw: &[f64], mode: FlexMode, config: &StudyConfig) -> Result<Vec<DispatchSolution>> {
    let tariff = &config.tariff;
    (0..inputs.profiles.num_prosumers())
        .into_par_iter()
        .map(|p| {
            let input = DispatchInput::from_profiles(&inputs.profiles, p, capacities_kw[p], tariff);
            match mode {
                FlexMode::WithStorage => optimize_dispatch(&input, &config.battery),
                FlexMode::NoStorage => optimize_dispatch_fixed(&input, &config.battery, 0.0),
            }
        })
        .collect()
}

/// Injection frames from per-prosumer grid exchange (kW, export positive)
/// and reactive injection (kvar).
pub fn injection_frames(network: &Network, p_grid_kw: &[&[f64]], q_kvar: Option<&[&[f64]]>) -> Result<Vec<InjectionFrame>> {
    let n = p_grid_kw.first().map_or(0, |s| s.len());
    (0..n)
        .map(|t| {
            let p: Vec<f64> = p_grid_kw.iter().map(|s| s[t]).collect();
            let q: Vec<f64> = match q_kvar {
                Some(q) => q.iter().map(|s| s[t]).collect(),
                None => vec![0.0; p.len()],
            };
            InjectionFrame::from_prosumers(network, &p, &q)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct CostRow {
    pub c_trafo_kchf_per_mva: f64,
    pub reinforcement: ReinforcementCost,
    /// `None` when the scenario has no flexible capacity.
    pub flex_value_chf_per_kw: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct ModeOutcome {
    pub mode: FlexMode,
    pub dispatch: Vec<DispatchSolution>,
    pub violations: Vec<ViolationRecord>,
    pub summary: Vec<CategorySummary>,
    pub maxima: Vec<ElementMax>,
    pub periods: Vec<InterventionPeriod>,
    /// Solved periods; operating points are dropped after certification.
    pub opf: Vec<OpfSolution>,
    pub period_errors: Vec<(usize, String)>,
    pub spliced: Vec<SplicedTrajectory>,
    /// Tightest limit over all period steps after splicing, re-solved from scratch.
    pub certified_slack: Option<f64>,
    /// Violations left after splicing; empty when every period was solved.
    pub residual_violations: Vec<ViolationRecord>,
    pub delta_opex_chf_yr: f64,
    pub curtailed_kwh_yr: f64,
    pub pv_energy_kwh_yr: f64,
    pub curtailed_pct: f64,
    pub flex_capacity_kw: Vec<f64>,
    /// Simulated hours inside intervention periods.
    pub intervention_hours: f64,
    pub costs: Vec<CostRow>,
}

#[derive(Debug, Clone)]
pub struct ScenarioOutcome {
    pub index: usize,
    pub scale: f64,
    pub scenario: Option<PvScenario>,
    pub modes: Vec<ModeOutcome>,
    pub errors: Vec<String>,
}

impl ScenarioOutcome {
    pub fn mode(&self, mode: FlexMode) -> Option<&ModeOutcome> {
        self.modes.iter().find(|m| m.mode == mode)
    }

    pub fn penetration_pct(&self) -> f64 {
        self.scenario.as_ref().map_or(f64::NAN, |s| s.penetration_pct)
    }

    pub fn failed(&self) -> bool {
        !self.errors.is_empty() || self.modes.iter().any(|m| !m.period_errors.is_empty())
    }
}

#[derive(Debug, Clone)]
pub struct StudyRun {
    pub dt_h: f64,
    pub year_weight: f64,
    pub horizon: usize,
    pub timestamps: Vec<chrono::NaiveDateTime>,
    pub c_trafo_values: Vec<f64>,
    pub scenarios: Vec<ScenarioOutcome>,
    /// Break-even analysis per mode over the successful scenarios.
    pub sweeps: Vec<(FlexMode, Vec<BreakEven>)>,
}

impl StudyRun {
    pub fn failures(&self) -> usize {
        self.scenarios.iter().filter(|s| s.failed()).count()
    }
}

/// Runs every scenario and mode. Errors inside a scenario are recorded in its
/// outcome; only failures to load the shared inputs abort the study.
pub fn run_study(config: &StudyConfig) -> Result<StudyRun> {
    let run = || -> Result<StudyRun> {
        let inputs = StudyInputs::prepare(config)?;
        Ok(run_prepared(&inputs, config))
    };
    match config.workers {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::invalid(format!("cannot start {n} workers: {e}")))?
            .install(run),
        None => run(),
    }
}

pub fn run_prepared(inputs: &StudyInputs, config: &StudyConfig) -> StudyRun {
    let scenarios: Vec<ScenarioOutcome> = config
        .scales
        .par_iter()
        .enumerate()
        .map(|(index, &scale)| run_scenario(inputs, config, index, scale))
        .collect();
    let mut sweeps = Vec::new();
    if config.c_trafo_values.len() >= 2 {
        for &mode in &config.modes {
            let mut points: Vec<SweepPoint> = scenarios
                .iter()
                .filter_map(|s| {
                    let m = s.mode(mode).filter(|m| m.period_errors.is_empty())?;
                    Some(SweepPoint {
                        penetration_pct: s.penetration_pct(),
                        delta_opex_chf_yr: m.delta_opex_chf_yr,
                        maxima: m.maxima.clone(),
                    })
                })
                .collect();
            points.sort_by(|a, b| a.penetration_pct.total_cmp(&b.penetration_pct));
            if let Ok(table) = sensitivity_sweep(&points, &config.c_trafo_values, &config.reinforcement) {
                sweeps.push((mode, table));
            }
        }
    }
    StudyRun {
        dt_h: inputs.profiles.dt_hours(),
        year_weight: inputs.profiles.year_weight,
        horizon: inputs.profiles.horizon(),
        timestamps: inputs.profiles.timestamps.clone(),
        c_trafo_values: config.c_trafo_values.clone(),
        scenarios,
        sweeps,
    }
}

pub fn run_scenario(inputs: &StudyInputs, config: &StudyConfig, index: usize, scale: f64) -> ScenarioOutcome {
    let mut out = ScenarioOutcome {
        index,
        scale,
        scenario: None,
        modes: Vec::new(),
        errors: Vec::new(),
    };
    let scenario = match PvScenario::build(scale, &inputs.systems, config.module_kw, &config.lcoe, &inputs.profiles) {
        Ok(s) => s,
        Err(e) => {
            out.errors.push(format!("scenario: {e}"));
            return out;
        }
    };
    for &mode in &config.modes {
        match run_mode(inputs, config, &scenario, mode) {
            Ok(m) => {
                log::info!(
                    "scenario {index} ({:.1} %, {mode}): {} periods, {:.2} h, curtailed {:.3} %",
                    scenario.penetration_pct,
                    m.periods.len(),
                    m.intervention_hours,
                    m.curtailed_pct
                );
                out.modes.push(m)
            }
            Err(e) => {
                log::warn!("scenario {index} ({mode}): {e}");
                out.errors.push(format!("{mode}: {e}"));
            }
        }
    }
    out.scenario = Some(scenario);
    out
}

pub fn run_mode(inputs: &StudyInputs, config: &StudyConfig, scenario: &PvScenario, mode: FlexMode) -> Result<ModeOutcome> {
    let net = &inputs.network;
    let prof = &inputs.profiles;
    let dt = prof.dt_hours();
    let w = prof.year_weight;
    let caps = scenario.capacities_kw();

    let dispatch = dispatch_stage(inputs, &caps, mode, config)?;
    let grid: Vec<&[f64]> = dispatch.iter().map(|d| d.p_grid_kw.as_slice()).collect();
    let frames = injection_frames(net, &grid, None)?;
    let states = solve_series(&inputs.model, &frames, &config.pf)?;
    let violations = audit(&states, net, &inputs.limits);
    let maxima = element_maxima(&states, net, &inputs.limits);
    let periods = extract_periods(&violations, prof.horizon(), config.padding);

    let ctx = FlexContext::new(net, &inputs.model, &inputs.limits, prof, &dispatch, &config.battery)?;
    let results: Vec<Result<OpfSolution>> = periods
        .par_iter()
        .map(|p| solve_period(&ctx, p, mode, &config.opf))
        .collect();
    let mut opf = Vec::new();
    let mut period_errors = Vec::new();
    for (p, r) in periods.iter().zip(results) {
        match r {
            Ok(s) => opf.push(s),
            Err(e) => {
                log::warn!("period {} [{}..{}] ({mode}): {e}", p.index, p.start, p.end);
                period_errors.push((p.index, e.to_string()));
            }
        }
    }
    let spliced = splice_controls(&dispatch, &opf)?;
    let (certified_slack, residual_violations) = certify(inputs, &spliced, &periods, &config.pf, &states)?;
    for s in &mut opf {
        s.states.clear();
    }

    let delta_opex = flexibility_cost(&dispatch, &spliced, &inputs.import_chf, &inputs.export_chf, dt, w)?;
    let curtailed_kwh_yr = spliced.iter().map(|s| s.curtailed_kwh(dt)).sum::<f64>() * w;
    let pv_energy_kwh_yr: f64 = (0..prof.num_prosumers())
        .map(|j| prof.annual_energy_kwh(&prof.pv_yield[j]) * caps[j])
        .sum();
    let curtailed_pct = if pv_energy_kwh_yr > 0.0 {
        100.0 * curtailed_kwh_yr / pv_energy_kwh_yr
    } else {
        0.0
    };
    let flex_capacity_kw: Vec<f64> = dispatch.iter().map(|d| d.pv_capacity_kw + d.power_kw).collect();
    let costs = config
        .c_trafo_values
        .iter()
        .map(|&c| {
            let inp = ReinforcementInputs {
                c_trafo_kchf_per_mva: c,
                ..config.reinforcement
            };
            let reinforcement = reinforcement_cost_from_maxima(&maxima, &inp);
            let flex_value = flexibility_capacity_value(
                reinforcement.c_reinf_chf_yr,
                delta_opex,
                inp.annualization(),
                &flex_capacity_kw,
            )
            .ok();
            CostRow {
                c_trafo_kchf_per_mva: c,
                reinforcement,
                flex_value_chf_per_kw: flex_value,
            }
        })
        .collect();
    Ok(ModeOutcome {
        mode,
        summary: summarize(&violations, dt),
        intervention_hours: periods.iter().fold(0.0, |h, p| h + p.duration_h(dt)),
        dispatch,
        violations,
        maxima,
        periods,
        opf,
        period_errors,
        spliced,
        certified_slack,
        residual_violations,
        delta_opex_chf_yr: delta_opex,
        curtailed_kwh_yr,
        pv_energy_kwh_yr,
        curtailed_pct,
        flex_capacity_kw,
        costs,
    })
}

/// Re-solves every period step from the spliced injections and re-audits it.
fn certify(
    inputs: &StudyInputs,
    spliced: &[SplicedTrajectory],
    periods: &[InterventionPeriod],
    pf: &PfOptions,
    stage1_states: &[NetworkState],
) -> Result<(Option<f64>, Vec<ViolationRecord>)> {
    let net = &inputs.network;
    let checks: Vec<Result<(f64, Vec<ViolationRecord>)>> = periods
        .par_iter()
        .map(|p| {
            let mut worst = f64::INFINITY;
            let mut recs = Vec::new();
            let mut prev: Option<NetworkState> = None;
            for t in p.steps() {
                let pg: Vec<f64> = spliced.iter().map(|s| s.p_grid_kw[t]).collect();
                let q: Vec<f64> = spliced.iter().map(|s| s.q_kvar[t]).collect();
                let frame = InjectionFrame::from_prosumers(net, &pg, &q)?;
                let start = prev.as_ref().or(Some(&stage1_states[t]));
                let st = solve_loadflow_from(&inputs.model, &frame, pf, start).map_err(|e| Error::AtStep {
                    t,
                    source: Box::new(e),
                })?;
                worst = worst.min(worst_slack(&st, net, &inputs.limits).value);
                audit_step(t, &st, net, &inputs.limits, &mut recs);
                prev = Some(st);
            }
            Ok((worst, recs))
        })
        .collect();
    let mut worst: Option<f64> = None;
    let mut recs = Vec::new();
    for c in checks {
        let (w, r) = c?;
        worst = Some(worst.map_or(w, |x: f64| x.min(w)));
        recs.extend(r);
    }
    Ok((worst, recs))
}
