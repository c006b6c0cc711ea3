use super::OpfSolution;
use crate::dispatch::DispatchSolution;
use crate::{Error, Result};

const SOC_TOL_KWH: f64 = 1e-6;

/// Year-long trajectory of one prosumer after flexibility activation.
#[derive(Debug, Clone, PartialEq)]
pub struct SplicedTrajectory {
    pub bus_id: String,
    pub p_grid_kw: Vec<f64>,
    pub p_bat_kw: Vec<f64>,
    pub soc_kwh: Vec<f64>,
    pub p_cur_kw: Vec<f64>,
    pub q_kvar: Vec<f64>,
}

impl SplicedTrajectory {
    pub fn unchanged(stage1: &DispatchSolution) -> Self {
        let n = stage1.horizon();
        Self {
            bus_id: stage1.bus_id.clone(),
            p_grid_kw: stage1.p_grid_kw.clone(),
            p_bat_kw: stage1.p_bat_kw.clone(),
            soc_kwh: stage1.soc_kwh.clone(),
            p_cur_kw: vec![0.0; n],
            q_kvar: vec![0.0; n],
        }
    }

    pub fn curtailed_kwh(&self, dt_h: f64) -> f64 {
        self.p_cur_kw.iter().sum::<f64>() * dt_h
    }
}

/// Replaces the stage-1 trajectories inside every solved period.
pub fn splice_controls(stage1: &[DispatchSolution], solutions: &[OpfSolution]) -> Result<Vec<SplicedTrajectory>> {
    let mut order: Vec<&OpfSolution> = solutions.iter().collect();
    order.sort_by_key(|s| s.start);
    for w in order.windows(2) {
        if w[1].start <= w[0].end {
            return Err(Error::invalid(format!(
                "periods {} and {} overlap",
                w[0].period, w[1].period
            )));
        }
    }
    let mut out: Vec<SplicedTrajectory> = stage1.iter().map(SplicedTrajectory::unchanged).collect();
    for sol in order {
        if sol.bus_ids.len() != stage1.len() {
            return Err(Error::invalid(format!(
                "period {} covers {} prosumers, stage 1 has {}",
                sol.period,
                sol.bus_ids.len(),
                stage1.len()
            )));
        }
        for (j, tr) in out.iter_mut().enumerate() {
            if sol.bus_ids[j] != tr.bus_id {
                return Err(Error::invalid(format!("period {} prosumer order differs", sol.period)));
            }
            if sol.end >= tr.p_grid_kw.len() {
                return Err(Error::Horizon {
                    expected: tr.p_grid_kw.len(),
                    found: sol.end + 1,
                });
            }
            for edge in [0, sol.len()] {
                let t = sol.start + edge;
                let diff = sol.soc_kwh[j][edge] - stage1[j].soc_kwh[t];
                if diff.abs() > SOC_TOL_KWH {
                    return Err(Error::SocMismatch {
                        bus: tr.bus_id.clone(),
                        step: t,
                        diff,
                    });
                }
            }
            for k in 0..sol.len() {
                let t = sol.start + k;
                tr.p_grid_kw[t] = sol.p_grid_kw[j][k];
                tr.p_bat_kw[t] = sol.p_bat_kw[j][k];
                tr.p_cur_kw[t] = sol.p_cur_kw[j][k];
                tr.q_kvar[t] = sol.q_kvar[j][k];
                if k > 0 {
                    tr.soc_kwh[t] = sol.soc_kwh[j][k];
                }
            }
        }
    }
    Ok(out)
}
