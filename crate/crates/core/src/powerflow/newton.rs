use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rayon::prelude::*;

use crate::grid::{AdmittanceModel, Network, S_BASE_MVA};
use crate::{Error, Result};

/// Steps per warm-started block in [`solve_series`]. Fixed so results do not
/// depend on the number of worker threads.
pub const SERIES_CHUNK: usize = 96;

/// Specified bus injections in pu, generation positive.
#[derive(Debug, Clone, PartialEq)]
pub struct InjectionFrame {
    pub p: Vec<f64>,
    pub q: Vec<f64>,
}

impl InjectionFrame {
    pub fn zeros(num_buses: usize) -> Self {
        Self {
            p: vec![0.0; num_buses],
            q: vec![0.0; num_buses],
        }
    }

    /// Places prosumer injections (kW, kvar, ordered as `network.prosumers()`)
    /// on their buses; every other bus gets zero.
    pub fn from_prosumers(network: &Network, p_kw: &[f64], q_kvar: &[f64]) -> Result<Self> {
        let pros = network.prosumers();
        if p_kw.len() != pros.len() || q_kvar.len() != pros.len() {
            return Err(Error::invalid(format!(
                "expected {} prosumer injections, got {} P and {} Q",
                pros.len(),
                p_kw.len(),
                q_kvar.len()
            )));
        }
        let mut frame = Self::zeros(network.buses().len());
        for (k, &bus) in pros.iter().enumerate() {
            frame.p[bus] = p_kw[k] / 1000.0 / S_BASE_MVA;
            frame.q[bus] = q_kvar[k] / 1000.0 / S_BASE_MVA;
        }
        Ok(frame)
    }

    fn check(&self, n: usize) -> Result<()> {
        if self.p.len() != n || self.q.len() != n {
            return Err(Error::invalid(format!(
                "injection frame has {} / {} entries for {n} buses",
                self.p.len(),
                self.q.len()
            )));
        }
        if self.p.iter().chain(&self.q).any(|x| !x.is_finite()) {
            return Err(Error::invalid("non-finite injection"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PfOptions {
    /// Largest admissible complex power mismatch at any bus, pu.
    pub tol: f64,
    pub max_iter: usize,
    /// Start each step of a series from the previous solution.
    pub warm_start: bool,
}

impl Default for PfOptions {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_iter: 50,
            warm_start: true,
        }
    }
}

/// Solved operating point of one step.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkState {
    pub vm: Vec<f64>,
    pub va: Vec<f64>,
    /// Series current magnitude per branch, kA on the from-side base.
    pub current_ka: Vec<f64>,
    /// `|V_from| |I|` per branch, MVA. Meaningful for transformers.
    pub apparent_mva: Vec<f64>,
    pub iterations: usize,
}

impl NetworkState {
    pub fn voltages(&self) -> Vec<Complex64> {
        self.vm
            .iter()
            .zip(&self.va)
            .map(|(&m, &a)| Complex64::from_polar(m, a))
            .collect()
    }

    /// Power drawn from the slack bus into the network, pu.
    pub fn slack_injection(&self, model: &AdmittanceModel) -> Complex64 {
        let v = self.voltages();
        let i: Complex64 = model.row(model.slack).iter().map(|&(k, y)| y * v[k]).sum();
        v[model.slack] * i.conj()
    }
}

struct Indexing {
    pq: Vec<usize>,
    pos: Vec<Option<usize>>,
}

impl Indexing {
    fn new(model: &AdmittanceModel) -> Self {
        let n = model.num_buses();
        let pq: Vec<usize> = (0..n).filter(|&i| i != model.slack).collect();
        let mut pos = vec![None; n];
        for (a, &i) in pq.iter().enumerate() {
            pos[i] = Some(a);
        }
        Self { pq, pos }
    }
}

/// Newton-Raphson load flow from a flat start.
pub fn solve_loadflow(model: &AdmittanceModel, injections: &InjectionFrame, options: &PfOptions) -> Result<NetworkState> {
    solve_loadflow_from(model, injections, options, None)
}

/// Newton-Raphson load flow in polar coordinates, optionally warm-started.
pub fn solve_loadflow_from(
    model: &AdmittanceModel,
    injections: &InjectionFrame,
    options: &PfOptions,
    start: Option<&NetworkState>,
) -> Result<NetworkState> {
    let n = model.num_buses();
    injections.check(n)?;
    let idx = Indexing::new(model);
    let npq = idx.pq.len();
    let (mut vm, mut va) = match start {
        Some(s) if s.vm.len() == n => (s.vm.clone(), s.va.clone()),
        _ => (vec![1.0; n], vec![0.0; n]),
    };
    vm[model.slack] = 1.0;
    va[model.slack] = 0.0;

    for iter in 0..=options.max_iter {
        let v: Vec<Complex64> = vm.iter().zip(&va).map(|(&m, &a)| Complex64::from_polar(m, a)).collect();
        let ibus = model.currents(&v);
        let mut f = DVector::zeros(2 * npq);
        let mut worst = (0.0, 0);
        for (a, &i) in idx.pq.iter().enumerate() {
            let s = v[i] * ibus[i].conj();
            f[a] = s.re - injections.p[i];
            f[npq + a] = s.im - injections.q[i];
            let m = f[a].hypot(f[npq + a]);
            if !(m <= worst.0) {
                worst = (m, i);
            }
        }
        if worst.0 < options.tol {
            return Ok(finish(model, vm, va, iter));
        }
        if iter == options.max_iter || !worst.0.is_finite() {
            return Err(Error::NonConvergence {
                iterations: iter,
                worst_mismatch: worst.0,
                bus: worst.1.to_string(),
            });
        }
        let jac = jacobian(model, &v, &ibus, &idx);
        let dx = jac.lu().solve(&f).ok_or(Error::SingularJacobian)?;
        for (a, &i) in idx.pq.iter().enumerate() {
            va[i] -= dx[a];
            vm[i] -= dx[npq + a];
        }
    }
    unreachable!("loop returns on its last iteration")
}

fn finish(model: &AdmittanceModel, vm: Vec<f64>, va: Vec<f64>, iterations: usize) -> NetworkState {
    let v: Vec<Complex64> = vm.iter().zip(&va).map(|(&m, &a)| Complex64::from_polar(m, a)).collect();
    let mut current_ka = Vec::with_capacity(model.branches.len());
    let mut apparent_mva = Vec::with_capacity(model.branches.len());
    for (b, br) in model.branches.iter().enumerate() {
        let i = model.branch_current(b, &v).norm();
        current_ka.push(br.pu_to_ka(i));
        apparent_mva.push(vm[br.from] * i * S_BASE_MVA);
    }
    NetworkState {
        vm,
        va,
        current_ka,
        apparent_mva,
        iterations,
    }
}

/// Jacobian of `[P; Q]` at PQ buses with respect to `[theta; |V|]` at PQ buses.
fn jacobian(model: &AdmittanceModel, v: &[Complex64], ibus: &[Complex64], idx: &Indexing) -> DMatrix<f64> {
    let npq = idx.pq.len();
    let j = Complex64::i();
    let mut jac = DMatrix::zeros(2 * npq, 2 * npq);
    for (a, &i) in idx.pq.iter().enumerate() {
        for &(k, y) in model.row(i) {
            let Some(b) = idx.pos[k] else { continue };
            let vn_k = v[k] / v[k].norm();
            let mut d_th = -j * v[i] * (y * v[k]).conj();
            let mut d_vm = v[i] * (y * vn_k).conj();
            if k == i {
                d_th += j * v[i] * ibus[i].conj();
                d_vm += ibus[i].conj() * vn_k;
            }
            jac[(a, b)] = d_th.re;
            jac[(npq + a, b)] = d_th.im;
            jac[(a, npq + b)] = d_vm.re;
            jac[(npq + a, npq + b)] = d_vm.im;
        }
    }
    jac
}

/// Solves every frame of a series. Frames are processed in fixed blocks of
/// [`SERIES_CHUNK`] steps in parallel; within a block each step warm-starts
/// from its predecessor when enabled. The first failing step is reported.
pub fn solve_series(model: &AdmittanceModel, frames: &[InjectionFrame], options: &PfOptions) -> Result<Vec<NetworkState>> {
    let blocks: Vec<Result<Vec<NetworkState>>> = frames
        .par_chunks(SERIES_CHUNK)
        .enumerate()
        .map(|(c, chunk)| {
            let mut out: Vec<NetworkState> = Vec::with_capacity(chunk.len());
            for (k, frame) in chunk.iter().enumerate() {
                let start = if options.warm_start { out.last() } else { None };
                let state = solve_loadflow_from(model, frame, options, start).map_err(|e| Error::AtStep {
                    t: c * SERIES_CHUNK + k,
                    source: Box::new(e),
                })?;
                out.push(state);
            }
            Ok(out)
        })
        .collect();
    let mut states = Vec::with_capacity(frames.len());
    for block in blocks {
        states.extend(block?);
    }
    Ok(states)
}

/// First-order response of the operating point to prosumer injections.
///
/// Column `2j` is the derivative with respect to active injection at
/// `controls[j]`, column `2j + 1` with respect to reactive injection, both per pu.
#[derive(Debug, Clone)]
pub struct Sensitivities {
    pub controls: Vec<usize>,
    /// Bus voltage magnitude, pu per pu.
    pub vm: DMatrix<f64>,
    /// Branch current magnitude, kA per pu.
    pub current_ka: DMatrix<f64>,
    /// Branch `|V_from| |I|`, MVA per pu.
    pub apparent_mva: DMatrix<f64>,
}

pub fn sensitivities(model: &AdmittanceModel, state: &NetworkState, controls: &[usize]) -> Result<Sensitivities> {
    let n = model.num_buses();
    let idx = Indexing::new(model);
    let npq = idx.pq.len();
    let v = state.voltages();
    let ibus = model.currents(&v);
    let jac = jacobian(model, &v, &ibus, &idx);
    let cols = 2 * controls.len();
    let mut rhs = DMatrix::zeros(2 * npq, cols);
    for (c, &bus) in controls.iter().enumerate() {
        let a = idx.pos[bus].ok_or_else(|| Error::invalid("the slack bus cannot be a control bus"))?;
        rhs[(a, 2 * c)] = 1.0;
        rhs[(npq + a, 2 * c + 1)] = 1.0;
    }
    let dx = jac.lu().solve(&rhs).ok_or(Error::SingularJacobian)?;

    let mut dvm = DMatrix::zeros(n, cols);
    let mut dva = DMatrix::zeros(n, cols);
    for (a, &i) in idx.pq.iter().enumerate() {
        for c in 0..cols {
            dva[(i, c)] = dx[(a, c)];
            dvm[(i, c)] = dx[(npq + a, c)];
        }
    }
    let nb = model.branches.len();
    let mut di = DMatrix::zeros(nb, cols);
    let mut ds = DMatrix::zeros(nb, cols);
    let dv = |k: usize, c: usize| Complex64::from_polar(1.0, state.va[k]) * Complex64::new(dvm[(k, c)], state.vm[k] * dva[(k, c)]);
    for (b, br) in model.branches.iter().enumerate() {
        let i = model.branch_current(b, &v);
        let mag = i.norm();
        for c in 0..cols {
            let d_mag = if mag > 1e-12 {
                (i.conj() * br.y * (dv(br.from, c) - dv(br.to, c))).re / mag
            } else {
                0.0
            };
            di[(b, c)] = br.pu_to_ka(d_mag);
            ds[(b, c)] = (mag * dvm[(br.from, c)] + state.vm[br.from] * d_mag) * S_BASE_MVA;
        }
    }
    Ok(Sensitivities {
        controls: controls.to_vec(),
        vm: dvm,
        current_ka: di,
        apparent_mva: ds,
    })
}
