use super::{FlexContext, FlexMode, OpfOptions, OpfSolution};
use crate::grid::OperatingLimits;
use crate::lp::{LinearProgram, Var};
use crate::powerflow::{
    sensitivities, solve_loadflow_from, worst_slack, InjectionFrame, InterventionPeriod, NetworkState, Sensitivities,
};
use crate::{Error, Result};

/// Minimises curtailed PV energy over one period by sequential linear
/// programming on the AC load flow.
///
/// Each outer iteration linearises voltages and thermal loadings around the
/// exact load-flow point, solves an LP with elastic limit rows inside a box
/// trust region, and accepts the step on the actual decrease of an exact
/// penalty merit. The returned point is re-solved and checked against the
/// unmodified limits.
pub fn solve_period(ctx: &FlexContext<'_>, period: &InterventionPeriod, mode: FlexMode, opts: &OpfOptions) -> Result<OpfSolution> {
    opts.validate()?;
    let problem = Problem::new(ctx, period, mode, opts)?;
    problem.run()
}

#[derive(Debug, Clone, PartialEq)]
struct Point {
    cur: Vec<Vec<f64>>,
    q: Vec<Vec<f64>>,
    d: Vec<Vec<f64>>,
}

struct Eval {
    states: Vec<NetworkState>,
    violation: f64,
}

struct Problem<'c> {
    ctx: &'c FlexContext<'c>,
    opts: &'c OpfOptions,
    mode: FlexMode,
    index: usize,
    start: usize,
    len: usize,
    dt: f64,
    buses: Vec<usize>,
    pv: Vec<Vec<f64>>,
    load: Vec<Vec<f64>>,
    p1: Vec<Vec<f64>>,
    grid1: Vec<Vec<f64>>,
    e1: Vec<Vec<f64>>,
    pmax: Vec<f64>,
    emin: Vec<f64>,
    emax: Vec<f64>,
    qmax: Vec<f64>,
    storage: Vec<bool>,
}

impl<'c> Problem<'c> {
    fn new(ctx: &'c FlexContext<'c>, period: &InterventionPeriod, mode: FlexMode, opts: &'c OpfOptions) -> Result<Self> {
        let horizon = ctx.profiles.horizon();
        if period.end < period.start || period.end >= horizon {
            return Err(Error::invalid(format!(
                "period {} [{}..{}] outside horizon {horizon}",
                period.index, period.start, period.end
            )));
        }
        if mode == FlexMode::NoStorage {
            if let Some(s) = ctx.stage1.iter().find(|s| s.capacity_kwh > 0.0) {
                return Err(Error::invalid(format!(
                    "no_storage mode needs battery-free stage-1 dispatch, {} has {} kWh",
                    s.bus_id, s.capacity_kwh
                )));
            }
        }
        let (start, len) = (period.start, period.end - period.start + 1);
        let steps = start..=period.end;
        let n = ctx.stage1.len();
        let bp = ctx.battery;
        let mut pb = Self {
            ctx,
            opts,
            mode,
            index: period.index,
            start,
            len,
            dt: ctx.profiles.dt_hours(),
            buses: ctx.network.prosumers().to_vec(),
            pv: Vec::with_capacity(n),
            load: Vec::with_capacity(n),
            p1: Vec::with_capacity(n),
            grid1: Vec::with_capacity(n),
            e1: Vec::with_capacity(n),
            pmax: Vec::with_capacity(n),
            emin: Vec::with_capacity(n),
            emax: Vec::with_capacity(n),
            qmax: Vec::with_capacity(n),
            storage: Vec::with_capacity(n),
        };
        for (j, s) in ctx.stage1.iter().enumerate() {
            pb.pv.push(steps.clone().map(|t| ctx.pv_kw(j, t)).collect());
            pb.load.push(steps.clone().map(|t| ctx.profiles.load_kw[j][t]).collect());
            pb.p1.push(s.p_bat_kw[steps.clone()].to_vec());
            pb.grid1.push(s.p_grid_kw[steps.clone()].to_vec());
            pb.e1.push(s.soc_kwh[start..=period.end + 1].to_vec());
            pb.pmax.push(bp.power_ratio * s.capacity_kwh);
            pb.emin.push(bp.soc_min * s.capacity_kwh);
            pb.emax.push(bp.soc_max * s.capacity_kwh);
            pb.qmax.push(opts.q_ratio * s.pv_capacity_kw);
            pb.storage.push(mode == FlexMode::WithStorage && s.capacity_kwh > 0.0 && len > 1);
        }
        Ok(pb)
    }

    fn zero(&self) -> Point {
        let z = vec![vec![0.0; self.len]; self.buses.len()];
        Point {
            cur: z.clone(),
            q: z.clone(),
            d: z,
        }
    }

    fn frame(&self, x: &Point, k: usize) -> InjectionFrame {
        let n = self.buses.len();
        let mut p = Vec::with_capacity(n);
        let mut q = Vec::with_capacity(n);
        for j in 0..n {
            p.push(self.pv[j][k] - x.cur[j][k] - self.load[j][k] + self.p1[j][k] + x.d[j][k]);
            q.push(x.q[j][k]);
        }
        InjectionFrame::from_prosumers(self.ctx.network, &p, &q).expect("prosumer count fixed at construction")
    }

    fn evaluate(&self, x: &Point, warm: Option<&[NetworkState]>) -> Result<Eval> {
        let mut states: Vec<NetworkState> = Vec::with_capacity(self.len);
        let mut violation = 0.0;
        for k in 0..self.len {
            let start = warm.map(|w| &w[k]).or(states.last());
            let st = solve_loadflow_from(self.ctx.model, &self.frame(x, k), &self.opts.pf, start).map_err(|e| {
                Error::AtStep {
                    t: self.start + k,
                    source: Box::new(e),
                }
            })?;
            violation += excess(&st, self.ctx.limits, self.opts.backoff);
            states.push(st);
        }
        Ok(Eval { states, violation })
    }

    fn objective(&self, x: &Point) -> f64 {
        let cur: f64 = x.cur.iter().flatten().sum();
        let dev: f64 = x.d.iter().flatten().map(|d| d.abs()).sum();
        cur * self.dt + self.opts.tie_break * dev
    }

    fn merit(&self, x: &Point, ev: &Eval) -> f64 {
        self.objective(x) + self.opts.penalty * ev.violation
    }

    fn run(&self) -> Result<OpfSolution> {
        let mut x = self.zero();
        let mut ev = self.evaluate(&x, None)?;
        let mut merit = self.merit(&x, &ev);
        let mut delta = self.opts.trust_region;
        let max_delta = 8.0 * self.opts.trust_region;

        for iter in 1..=self.opts.max_outer_iter {
            let (x_new, model_merit) = self.lp_step(&x, &ev.states, delta)?;
            let pred = merit - model_merit;
            let step = max_change(&x, &x_new) / 1000.0;
            if pred <= 1e-10 * merit.abs().max(1.0) || step == 0.0 {
                return self.finish(x, ev, iter);
            }
            let trial = self.evaluate(&x_new, Some(&ev.states));
            let (rho, accepted) = match trial {
                Ok(ev_new) => {
                    let merit_new = self.merit(&x_new, &ev_new);
                    let rho = (merit - merit_new) / pred;
                    if rho > 0.1 {
                        x = x_new;
                        ev = ev_new;
                        merit = merit_new;
                        (rho, true)
                    } else {
                        (rho, false)
                    }
                }
                Err(_) => (f64::NEG_INFINITY, false),
            };
            log::trace!("period {} iter {iter}: step {step:.3e} pred {pred:.3e} rho {rho:.3} viol {:.3e}", self.index, ev.violation);
            if accepted && step < self.opts.tol && ev.violation <= self.opts.feas_tol {
                return self.finish(x, ev, iter);
            }
            if rho < 0.25 {
                delta = 0.5 * delta.min(step);
            } else if rho > 0.75 && step >= 0.99 * delta {
                delta = (2.0 * delta).min(max_delta);
            }
            if delta < 1e-10 {
                return self.finish(x, ev, iter);
            }
        }
        if ev.violation <= self.opts.feas_tol {
            return self.finish(x, ev, self.opts.max_outer_iter);
        }
        let worst = self.worst(&ev.states);
        Err(Error::Stagnation {
            period: self.index,
            iterations: self.opts.max_outer_iter,
            violation: -worst.value,
            element: worst.element,
        })
    }

    fn worst(&self, states: &[NetworkState]) -> crate::powerflow::Slack {
        states
            .iter()
            .map(|s| worst_slack(s, self.ctx.network, self.ctx.limits))
            .min_by(|a, b| a.value.total_cmp(&b.value))
            .expect("period has at least one step")
    }

    fn finish(&self, x: Point, ev: Eval, iterations: usize) -> Result<OpfSolution> {
        let worst = self.worst(&ev.states);
        if ev.violation > self.opts.feas_tol {
            return Err(Error::Infeasible {
                period: self.index,
                element: worst.element,
            });
        }
        let n = self.buses.len();
        let mut p_bat = Vec::with_capacity(n);
        let mut soc = Vec::with_capacity(n);
        let mut grid = Vec::with_capacity(n);
        for j in 0..n {
            p_bat.push((0..self.len).map(|k| self.p1[j][k] + x.d[j][k]).collect());
            let mut e = Vec::with_capacity(self.len + 1);
            let mut shift = 0.0;
            e.push(self.e1[j][0]);
            for k in 0..self.len {
                shift += x.d[j][k];
                e.push(self.e1[j][k + 1] - self.dt * shift);
            }
            soc.push(e);
            grid.push((0..self.len).map(|k| self.grid1[j][k] - x.cur[j][k] + x.d[j][k]).collect());
        }
        let curtailed_kwh = x.cur.iter().flatten().sum::<f64>() * self.dt;
        Ok(OpfSolution {
            period: self.index,
            start: self.start,
            end: self.start + self.len - 1,
            mode: self.mode,
            bus_ids: self.ctx.stage1.iter().map(|s| s.bus_id.clone()).collect(),
            p_cur_kw: x.cur,
            p_bat_kw: p_bat,
            q_kvar: x.q,
            soc_kwh: soc,
            p_grid_kw: grid,
            states: ev.states,
            curtailed_kwh,
            worst_slack: worst,
            iterations,
        })
    }

    /// Solves the trust-region LP around `x`. Returns the candidate point and
    /// the model merit at it.
    fn lp_step(&self, x: &Point, states: &[NetworkState], delta: f64) -> Result<(Point, f64)> {
        let n = self.buses.len();
        let dkw = 1000.0 * delta;
        let mut lp = LinearProgram::new();
        let mut cur = vec![Vec::with_capacity(self.len); n];
        let mut q: Vec<Vec<Option<Var>>> = vec![Vec::with_capacity(self.len); n];
        let mut d: Vec<Vec<Option<Var>>> = vec![Vec::with_capacity(self.len); n];
        for j in 0..n {
            for k in 0..self.len {
                let c = x.cur[j][k];
                let pv = self.pv[j][k];
                cur[j].push(lp.add_var(self.dt, (c - dkw).max(0.0).min(c), (c + dkw).min(pv).max(c)));
                q[j].push((self.qmax[j] > 0.0).then(|| {
                    let v = x.q[j][k];
                    let qm = self.qmax[j];
                    lp.add_var(0.0, (v - dkw).max(-qm).min(v), (v + dkw).min(qm).max(v))
                }));
                d[j].push(self.storage[j].then(|| {
                    let v = x.d[j][k];
                    let lo = (-self.pmax[j] - self.p1[j][k]).min(0.0);
                    let hi = (self.pmax[j] - self.p1[j][k]).max(0.0);
                    let dv = lp.add_var(0.0, (v - dkw).max(lo).min(v), (v + dkw).min(hi).max(v));
                    if self.opts.tie_break > 0.0 {
                        let a = lp.add_var(self.opts.tie_break, 0.0, f64::INFINITY);
                        lp.add_ge(0.0, vec![(a, 1.0), (dv, -1.0)]);
                        lp.add_ge(0.0, vec![(a, 1.0), (dv, 1.0)]);
                    }
                    dv
                }));
            }
            if self.storage[j] {
                // g_k: cumulative deviation before step k; SOC' = SOC1 - dt * g
                let mut prev: Option<Var> = None;
                for k in 0..self.len {
                    let dk = d[j][k].expect("storage prosumer has deviation variables");
                    if k + 1 == self.len {
                        let mut terms = vec![(dk, 1.0)];
                        if let Some(g) = prev {
                            terms.push((g, 1.0));
                        }
                        lp.add_eq(0.0, terms);
                    } else {
                        let e = self.e1[j][k + 1];
                        let lo = ((e - self.emax[j]) / self.dt).min(0.0);
                        let hi = ((e - self.emin[j]) / self.dt).max(0.0);
                        let g = lp.add_var(0.0, lo, hi);
                        let mut terms = vec![(g, 1.0), (dk, -1.0)];
                        if let Some(p) = prev {
                            terms.push((p, -1.0));
                        }
                        lp.add_eq(0.0, terms);
                        prev = Some(g);
                    }
                }
            }
        }

        let penalty = self.opts.penalty;
        let bo = self.opts.backoff;
        let limits = self.ctx.limits;
        for (k, st) in states.iter().enumerate() {
            let sens = sensitivities(self.ctx.model, st, &self.buses)?;
            // linear row: sum_j cp_j * (d - cur) + cq_j * q, written relative to x
            let row = |m: &Sensitivities, which: Which, idx: usize, scale: f64| -> (Vec<(Var, f64)>, f64, f64) {
                let mat = match which {
                    Which::Vm => &m.vm,
                    Which::Current => &m.current_ka,
                    Which::Apparent => &m.apparent_mva,
                };
                let mut terms = Vec::with_capacity(3 * n);
                let mut base = 0.0;
                let mut reach = 0.0;
                for j in 0..n {
                    let cp = mat[(idx, 2 * j)] * scale / 1000.0;
                    let cq = mat[(idx, 2 * j + 1)] * scale / 1000.0;
                    if cp != 0.0 {
                        terms.push((cur[j][k], -cp));
                        base -= cp * x.cur[j][k];
                        reach += cp.abs() * dkw;
                        if let Some(dv) = d[j][k] {
                            terms.push((dv, cp));
                            base += cp * x.d[j][k];
                            reach += cp.abs() * dkw;
                        }
                    }
                    if let (Some(qv), true) = (q[j][k], cq != 0.0) {
                        terms.push((qv, cq));
                        base += cq * x.q[j][k];
                        reach += cq.abs() * dkw;
                    }
                }
                (terms, base, reach)
            };
            let add_upper = |lp: &mut LinearProgram, terms: Vec<(Var, f64)>, rhs: f64| {
                let s = lp.add_var(penalty, 0.0, f64::INFINITY);
                let mut terms = terms;
                terms.push((s, -1.0));
                lp.add_le(rhs, terms);
            };
            for i in 0..st.vm.len() {
                if i == self.ctx.model.slack {
                    continue;
                }
                let (terms, base, reach) = row(&sens, Which::Vm, i, 1.0);
                let upper = limits.v_max - bo - st.vm[i];
                let lower = limits.v_min + bo - st.vm[i];
                if upper < reach + 1e-9 {
                    add_upper(&mut lp, terms.clone(), upper + base);
                }
                if -lower < reach + 1e-9 {
                    let s = lp.add_var(penalty, 0.0, f64::INFINITY);
                    let mut terms = terms;
                    terms.push((s, 1.0));
                    lp.add_ge(lower + base, terms);
                }
            }
            for b in 0..st.current_ka.len() {
                let (which, value, limit) = match limits.rating_mva[b] {
                    Some(r) => (Which::Apparent, st.apparent_mva[b], r),
                    None => (Which::Current, st.current_ka[b], limits.ampacity_ka[b]),
                };
                let (terms, base, reach) = row(&sens, which, b, 1.0 / limit);
                let upper = 1.0 - bo - value / limit;
                if upper < reach + 1e-9 {
                    add_upper(&mut lp, terms, upper + base);
                }
            }
        }

        let sol = lp.solve()?;
        let pick = |v: &Vec<Vec<Option<Var>>>| -> Vec<Vec<f64>> {
            v.iter()
                .map(|row| row.iter().map(|o| o.map_or(0.0, |v| sol.value(v))).collect())
                .collect()
        };
        let mut next = Point {
            cur: cur.iter().map(|row| row.iter().map(|&v| sol.value(v)).collect()).collect(),
            q: pick(&q),
            d: pick(&d),
        };
        for j in 0..n {
            for k in 0..self.len {
                next.cur[j][k] = next.cur[j][k].clamp(0.0, self.pv[j][k]);
                next.q[j][k] = next.q[j][k].clamp(-self.qmax[j], self.qmax[j]);
            }
        }
        Ok((next, sol.objective))
    }
}

#[derive(Clone, Copy)]
enum Which {
    Vm,
    Current,
    Apparent,
}

fn max_change(a: &Point, b: &Point) -> f64 {
    let pairs = [(&a.cur, &b.cur), (&a.q, &b.q), (&a.d, &b.d)];
    pairs
        .iter()
        .flat_map(|(x, y)| x.iter().flatten().zip(y.iter().flatten()))
        .map(|(u, v)| (u - v).abs())
        .fold(0.0, f64::max)
}

/// Total amount by which a state exceeds the tightened limits, in pu for
/// voltages and in fractions of the limit for thermal loading.
fn excess(state: &NetworkState, limits: &OperatingLimits, backoff: f64) -> f64 {
    let mut total = 0.0;
    for &v in &state.vm {
        total += (v - (limits.v_max - backoff)).max(0.0) + ((limits.v_min + backoff) - v).max(0.0);
    }
    for b in 0..state.current_ka.len() {
        let ratio = match limits.rating_mva[b] {
            Some(r) => state.apparent_mva[b] / r,
            None => state.current_ka[b] / limits.ampacity_ka[b],
        };
        total += (ratio - (1.0 - backoff)).max(0.0);
    }
    total
}
