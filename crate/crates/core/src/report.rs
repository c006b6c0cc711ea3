//! CSV outputs of a study and the artifacts exchanged between CLI stages.

use std::path::Path;

use crate::csvio::{
    fmt_sig, write_table, Table, AUDIT_HEADER, DISPATCH_HEADER, DISPATCH_SUMMARY_HEADER, INTERVENTION_HEADER,
    OPF_HEADER, REINFORCE_HEADER, REPORT_HEADER, STATE_HEADER,
};
use crate::dispatch::DispatchSolution;
use crate::economics::{ElementKind, ElementMax};
use crate::grid::Network;
use crate::opf::{FlexMode, OpfSolution};
use crate::powerflow::{NetworkState, ViolationKind, ViolationRecord};
use crate::study::StudyRun;
use crate::{Error, Result};

pub const VIOLATION_SUMMARY_HEADER: [&str; 8] =
    ["scenario", "penetration_pct", "mode", "kind", "steps", "hours", "extreme", "extreme_ratio"];
pub const BREAK_EVEN_HEADER: [&str; 3] = ["mode", "c_trafo_kchf_mva", "break_even_pct"];
pub const SCENARIO_HEADER: [&str; 7] =
    ["scenario", "scale", "penetration_pct", "pv_capacity_kw", "battery_kwh", "mode", "status"];

fn opt(x: Option<f64>) -> String {
    x.map_or_else(|| "NaN".to_string(), fmt_sig)
}

/// Writes every table of a finished run below `outdir`.
pub fn emit_reports(run: &StudyRun, outdir: &Path) -> Result<()> {
    std::fs::create_dir_all(outdir).map_err(|e| Error::io(outdir, e))?;
    let mut report = Vec::new();
    let mut summary = Vec::new();
    let mut interventions = Vec::new();
    let mut scenarios = Vec::new();
    for s in &run.scenarios {
        let pen = fmt_sig(s.penetration_pct());
        let pv = s.scenario.as_ref().map_or(0.0, |sc| sc.total_capacity_kw());
        for e in &s.errors {
            scenarios.push(vec![
                s.index.to_string(),
                fmt_sig(s.scale),
                pen.clone(),
                fmt_sig(pv),
                "NaN".into(),
                e.split_once(':').map_or("", |x| x.0).to_string(),
                format!("error: {e}"),
            ]);
        }
        for m in &s.modes {
            let mode = m.mode.as_str().to_string();
            let status = if m.period_errors.is_empty() {
                "ok".to_string()
            } else {
                let list: Vec<String> = m.period_errors.iter().map(|(p, e)| format!("period {p}: {e}")).collect();
                format!("error: {}", list.join("; "))
            };
            scenarios.push(vec![
                s.index.to_string(),
                fmt_sig(s.scale),
                pen.clone(),
                fmt_sig(pv),
                fmt_sig(m.dispatch.iter().map(|d| d.capacity_kwh).sum()),
                mode.clone(),
                status,
            ]);
            for c in &m.costs {
                report.push(vec![
                    s.index.to_string(),
                    pen.clone(),
                    mode.clone(),
                    fmt_sig(c.c_trafo_kchf_per_mva),
                    fmt_sig(c.reinforcement.c_reinf_chf_yr),
                    fmt_sig(m.delta_opex_chf_yr),
                    fmt_sig(m.curtailed_kwh_yr / 1000.0),
                    fmt_sig(m.curtailed_pct),
                    opt(c.flex_value_chf_per_kw),
                ]);
            }
            for c in &m.summary {
                summary.push(vec![
                    s.index.to_string(),
                    pen.clone(),
                    mode.clone(),
                    c.kind.as_str().to_string(),
                    c.steps.to_string(),
                    fmt_sig(c.hours),
                    opt(c.extreme),
                    opt(c.extreme_ratio),
                ]);
            }
            for p in &m.periods {
                interventions.push(vec![
                    s.index.to_string(),
                    mode.clone(),
                    p.index.to_string(),
                    p.start.to_string(),
                    p.end.to_string(),
                    p.len().to_string(),
                    fmt_sig(p.duration_h(run.dt_h)),
                ]);
            }
            let stem = format!("s{}_{}.csv", s.index, mode);
            write_dispatch(&outdir.join("dispatch").join(&stem), &m.dispatch)?;
            write_dispatch_summary(&outdir.join("dispatch").join(format!("s{}_{}_summary.csv", s.index, mode)), &m.dispatch)?;
            write_opf(&outdir.join("opf").join(&stem), &m.opf)?;
            write_audit(&outdir.join("audit").join(&stem), &m.violations)?;
            write_reinforce(&outdir.join("reinforce").join(&stem), &m.maxima)?;
        }
    }
    write_table(&outdir.join("report.csv"), &REPORT_HEADER, report)?;
    write_table(&outdir.join("violations.csv"), &VIOLATION_SUMMARY_HEADER, summary)?;
    write_table(&outdir.join("interventions.csv"), &INTERVENTION_HEADER, interventions)?;
    write_table(&outdir.join("scenarios.csv"), &SCENARIO_HEADER, scenarios)?;
    let breakeven = run.sweeps.iter().flat_map(|(mode, table)| {
        table.iter().map(move |b| {
            vec![
                mode.as_str().to_string(),
                fmt_sig(b.c_trafo_kchf_per_mva),
                opt(b.break_even_pct),
            ]
        })
    });
    write_table(&outdir.join("breakeven.csv"), &BREAK_EVEN_HEADER, breakeven)?;
    Ok(())
}

/// One row of `report.csv`.
#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub scenario: usize,
    pub penetration_pct: f64,
    pub mode: FlexMode,
    pub c_trafo_kchf_mva: f64,
    pub c_reinf_chf_yr: f64,
    pub delta_opex_chf_yr: f64,
    pub curtailed_mwh: f64,
    pub curtailed_pct: f64,
    pub flex_value_chf_kw: f64,
}

pub fn read_report(path: &Path) -> Result<Vec<ReportRow>> {
    let t = Table::read(path, &REPORT_HEADER)?;
    (0..t.len())
        .map(|r| {
            Ok(ReportRow {
                scenario: t.int(r, 0)?,
                penetration_pct: t.num(r, 1)?,
                mode: t.str(r, 2).parse().map_err(|e: Error| t.err(r, e.to_string()))?,
                c_trafo_kchf_mva: t.num(r, 3)?,
                c_reinf_chf_yr: t.num(r, 4)?,
                delta_opex_chf_yr: t.num(r, 5)?,
                curtailed_mwh: t.num(r, 6)?,
                curtailed_pct: t.num(r, 7)?,
                flex_value_chf_kw: t.num(r, 8)?,
            })
        })
        .collect()
}

pub fn write_dispatch(path: &Path, solutions: &[DispatchSolution]) -> Result<()> {
    let rows = solutions.iter().flat_map(|s| {
        (0..s.horizon()).map(move |t| {
            vec![
                s.bus_id.clone(),
                t.to_string(),
                fmt_sig(s.p_bat_kw[t]),
                fmt_sig(s.soc_kwh[t]),
                fmt_sig(s.p_grid_kw[t]),
            ]
        })
    });
    write_table(path, &DISPATCH_HEADER, rows)
}

pub fn write_dispatch_summary(path: &Path, solutions: &[DispatchSolution]) -> Result<()> {
    let rows = solutions.iter().map(|s| {
        vec![
            s.bus_id.clone(),
            fmt_sig(s.pv_capacity_kw),
            fmt_sig(s.capacity_kwh),
            fmt_sig(s.power_kw),
            fmt_sig(s.opex_chf_yr),
            fmt_sig(s.sigma_chf_yr),
            fmt_sig(s.totex_chf_yr),
        ]
    });
    write_table(path, &DISPATCH_SUMMARY_HEADER, rows)
}

/// Reads a dispatch file and, when given, its summary. Prosumers come back
/// in `network` order; without a summary, sizes and costs are zero.
pub fn read_dispatch(path: &Path, summary: Option<&Path>, network: &Network) -> Result<Vec<DispatchSolution>> {
    let t = Table::read(path, &DISPATCH_HEADER)?;
    let ids = network.prosumer_ids();
    let mut sols: Vec<DispatchSolution> = ids
        .iter()
        .map(|id| DispatchSolution {
            bus_id: id.to_string(),
            pv_capacity_kw: 0.0,
            capacity_kwh: 0.0,
            power_kw: 0.0,
            p_bat_kw: Vec::new(),
            soc_kwh: Vec::new(),
            p_grid_kw: Vec::new(),
            opex_chf_yr: 0.0,
            sigma_chf_yr: 0.0,
            totex_chf_yr: 0.0,
        })
        .collect();
    for r in 0..t.len() {
        let j = ids
            .iter()
            .position(|id| *id == t.str(r, 0))
            .ok_or_else(|| t.err(r, format!("unknown prosumer {:?}", t.str(r, 0))))?;
        let s = &mut sols[j];
        if t.int(r, 1)? != s.p_grid_kw.len() {
            return Err(t.err(r, format!("steps of {} must be consecutive from 0", s.bus_id)));
        }
        s.p_bat_kw.push(t.num(r, 2)?);
        s.soc_kwh.push(t.num(r, 3)?);
        s.p_grid_kw.push(t.num(r, 4)?);
    }
    let horizon = sols.first().map_or(0, |s| s.p_grid_kw.len());
    for s in &mut sols {
        if s.p_grid_kw.len() != horizon || horizon == 0 {
            return Err(Error::Horizon {
                expected: horizon,
                found: s.p_grid_kw.len(),
            });
        }
        s.soc_kwh.push(s.soc_kwh[0]);
    }
    if let Some(sp) = summary {
        let t = Table::read(sp, &DISPATCH_SUMMARY_HEADER)?;
        for r in 0..t.len() {
            let s = sols
                .iter_mut()
                .find(|s| s.bus_id == t.str(r, 0))
                .ok_or_else(|| t.err(r, format!("unknown prosumer {:?}", t.str(r, 0))))?;
            s.pv_capacity_kw = t.num(r, 1)?;
            s.capacity_kwh = t.num(r, 2)?;
            s.power_kw = t.num(r, 3)?;
            s.opex_chf_yr = t.num(r, 4)?;
            s.sigma_chf_yr = t.num(r, 5)?;
            s.totex_chf_yr = t.num(r, 6)?;
        }
    }
    Ok(sols)
}

const STATE_KINDS: [&str; 4] = ["vm", "va", "current_ka", "apparent_mva"];

/// Long-format state table: bus voltages, line currents and transformer loading.
pub fn write_states(path: &Path, states: &[NetworkState], network: &Network) -> Result<()> {
    let rows = states.iter().enumerate().flat_map(|(t, st)| {
        let buses = network.buses().iter().enumerate().flat_map(move |(i, b)| {
            [
                vec![t.to_string(), "vm".into(), b.id.clone(), fmt_sig(st.vm[i])],
                vec![t.to_string(), "va".into(), b.id.clone(), fmt_sig(st.va[i])],
            ]
        });
        let branches = network.branches().iter().enumerate().map(move |(k, br)| {
            if br.is_transformer {
                vec![t.to_string(), "apparent_mva".into(), br.id.clone(), fmt_sig(st.apparent_mva[k])]
            } else {
                vec![t.to_string(), "current_ka".into(), br.id.clone(), fmt_sig(st.current_ka[k])]
            }
        });
        buses.chain(branches)
    });
    write_table(path, &STATE_HEADER, rows)
}

pub fn read_states(path: &Path, network: &Network) -> Result<Vec<NetworkState>> {
    let t = Table::read(path, &STATE_HEADER)?;
    let (nb, nl) = (network.buses().len(), network.branches().len());
    let mut states: Vec<NetworkState> = Vec::new();
    for r in 0..t.len() {
        let step = t.int(r, 0)?;
        if step > states.len() {
            return Err(t.err(r, format!("step {step} skips ahead")));
        }
        if step == states.len() {
            states.push(NetworkState {
                vm: vec![f64::NAN; nb],
                va: vec![f64::NAN; nb],
                current_ka: vec![0.0; nl],
                apparent_mva: vec![0.0; nl],
                iterations: 0,
            });
        }
        let st = &mut states[step];
        let kind = t.str(r, 1);
        let el = t.str(r, 2);
        let v = t.num(r, 3)?;
        match kind {
            "vm" | "va" => {
                let i = network.bus_index(el).ok_or_else(|| t.err(r, format!("unknown bus {el:?}")))?;
                if kind == "vm" {
                    st.vm[i] = v
                } else {
                    st.va[i] = v
                }
            }
            "current_ka" | "apparent_mva" => {
                let b = network.branch_index(el).ok_or_else(|| t.err(r, format!("unknown branch {el:?}")))?;
                if kind == "current_ka" {
                    st.current_ka[b] = v
                } else {
                    st.apparent_mva[b] = v
                }
            }
            other => {
                return Err(t.err(r, format!("unknown state kind {other:?}, expected one of {STATE_KINDS:?}")));
            }
        }
    }
    if let Some(t_bad) = states.iter().position(|s| s.vm.iter().chain(&s.va).any(|x| x.is_nan())) {
        return Err(Error::invalid(format!("{}: step {t_bad} lacks some bus voltages", path.display())));
    }
    Ok(states)
}

pub fn write_audit(path: &Path, records: &[ViolationRecord]) -> Result<()> {
    let rows = records.iter().map(|r| {
        vec![
            r.t.to_string(),
            r.kind.as_str().to_string(),
            r.element.clone(),
            fmt_sig(r.value),
            fmt_sig(r.limit),
        ]
    });
    write_table(path, &AUDIT_HEADER, rows)
}

pub fn read_audit(path: &Path) -> Result<Vec<ViolationRecord>> {
    let t = Table::read(path, &AUDIT_HEADER)?;
    (0..t.len())
        .map(|r| {
            Ok(ViolationRecord {
                t: t.int(r, 0)?,
                kind: t.str(r, 1).parse::<ViolationKind>().map_err(|e| t.err(r, e.to_string()))?,
                element: t.str(r, 2).to_string(),
                value: t.num(r, 3)?,
                limit: t.num(r, 4)?,
            })
        })
        .collect()
}

pub fn write_opf(path: &Path, solutions: &[OpfSolution]) -> Result<()> {
    let rows = solutions.iter().flat_map(|s| {
        s.bus_ids.iter().enumerate().flat_map(move |(j, id)| {
            (0..s.len()).map(move |k| {
                vec![
                    s.period.to_string(),
                    id.clone(),
                    (s.start + k).to_string(),
                    fmt_sig(s.p_cur_kw[j][k]),
                    fmt_sig(s.p_bat_kw[j][k]),
                    fmt_sig(s.q_kvar[j][k]),
                ]
            })
        })
    });
    write_table(path, &OPF_HEADER, rows)
}

pub fn write_reinforce(path: &Path, maxima: &[ElementMax]) -> Result<()> {
    let rows = maxima.iter().map(|m| {
        vec![
            m.element.clone(),
            m.kind.as_str().to_string(),
            fmt_sig(m.max_value),
            fmt_sig(m.limit),
            (m.replaced() as u8).to_string(),
        ]
    });
    write_table(path, &REINFORCE_HEADER, rows)
}

pub fn read_reinforce(path: &Path, network: &Network) -> Result<Vec<ElementMax>> {
    let t = Table::read(path, &REINFORCE_HEADER)?;
    (0..t.len())
        .map(|r| {
            let el = t.str(r, 0);
            let b = network.branch_index(el).ok_or_else(|| t.err(r, format!("unknown branch {el:?}")))?;
            let kind = match t.str(r, 1) {
                "line" => ElementKind::Line,
                "transformer" => ElementKind::Transformer,
                other => return Err(t.err(r, format!("unknown element kind {other:?}"))),
            };
            Ok(ElementMax {
                element: el.to_string(),
                kind,
                length_km: network.branches()[b].length_km,
                max_value: t.num(r, 2)?,
                limit: t.num(r, 3)?,
            })
        })
        .collect()
}
