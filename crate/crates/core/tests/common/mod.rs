//! Independent reference computations shared by the integration tests.
//!
//! Nothing here goes through the admittance model or the Newton solver; the
//! oracles rebuild impedances from the raw branch records and search for
//! roots by bisection.
#![allow(dead_code)]

use gridflex::dispatch::{BatteryParams, DispatchInput};
use gridflex::grid::{Network, OperatingLimits};
use gridflex::lp::LinearProgram;
use gridflex::powerflow::{audit_step, solve_loadflow, InjectionFrame, NetworkState, PfOptions};
use num_complex::Complex64;

/// Present value form of the capital recovery factor: one over the sum of the
/// discount factors of `lifetime` yearly payments.
pub fn annuity_by_discounting(rate: f64, lifetime: u32) -> f64 {
    let pv: f64 = (1..=lifetime).map(|k| (1.0 + rate).powi(-(k as i32))).sum();
    1.0 / pv
}

/// Series impedance of every branch in pu on a 1 MVA base, from the raw records.
pub fn branch_impedances(net: &Network) -> Vec<Complex64> {
    net.branches()
        .iter()
        .map(|b| {
            if b.is_transformer {
                let (r, x) = if b.r == 0.0 && b.x == 0.0 { (1.0, 4.0) } else { (b.r, b.x) };
                Complex64::new(r, x) / 100.0 / b.rating_mva
            } else {
                let kv = net.buses()[b.from].base_kv;
                Complex64::new(b.r, b.x) * b.length_km / (kv * kv)
            }
        })
        .collect()
}

/// Largest power mismatch over the non-slack buses, pu, with injections
/// rebuilt from branch flows.
pub fn injection_residual(net: &Network, state: &NetworkState, frame: &InjectionFrame) -> f64 {
    let z = branch_impedances(net);
    let v = state.voltages();
    let mut s = vec![Complex64::new(0.0, 0.0); v.len()];
    for (b, br) in net.branches().iter().enumerate() {
        let i = (v[br.from] - v[br.to]) / z[b];
        s[br.from] += v[br.from] * i.conj();
        s[br.to] -= v[br.to] * i.conj();
    }
    (0..v.len())
        .filter(|&i| i != net.slack())
        .map(|i| (s[i] - Complex64::new(frame.p[i], frame.q[i])).norm())
        .fold(0.0, f64::max)
}

pub fn bisect(mut lo: f64, mut hi: f64, f: impl Fn(f64) -> f64) -> f64 {
    let flo = f(lo);
    assert!(flo * f(hi) <= 0.0, "bisection bracket [{lo}, {hi}] holds no sign change");
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if (f(mid) > 0.0) == (flo > 0.0) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Receiving-end voltage of a single line feeding consumption `s` (pu) from
/// a 1 pu source: the upper root of the branch-flow quartic in `|V|^2`, then
/// the angle from the sending-end phasor.
pub fn two_bus_oracle(z: Complex64, s: Complex64) -> (f64, f64) {
    let (r, x, p, q) = (z.re, z.im, s.re, s.im);
    let b = 1.0 - 2.0 * (r * p + x * q);
    let c = (r * r + x * x) * (p * p + q * q);
    let u = bisect(b / 2.0, b, |u| u * u - b * u + c);
    let vm = u.sqrt();
    let v1 = Complex64::new(vm, 0.0) + z * Complex64::new(p, -q) / vm;
    (vm, -v1.arg())
}

/// Voltages of a radial chain `0 - 1 - ... - n` with the source at bus 0.
///
/// Shoots backwards from a real leaf voltage: every downstream current is
/// known once the voltages below are, and a common rotation leaves all
/// magnitudes unchanged, so only the leaf magnitude needs a 1-D search.
pub fn chain_oracle(z: &[Complex64], s: &[Complex64], bracket: (f64, f64)) -> Vec<Complex64> {
    assert_eq!(z.len(), s.len());
    let shoot = |leaf: f64| -> Vec<Complex64> {
        let n = z.len();
        let mut v = vec![Complex64::new(0.0, 0.0); n + 1];
        v[n] = Complex64::new(leaf, 0.0);
        let mut i = Complex64::new(0.0, 0.0);
        for k in (1..=n).rev() {
            i += (s[k - 1] / v[k]).conj();
            v[k - 1] = v[k] + z[k - 1] * i;
        }
        v
    };
    let leaf = bisect(bracket.0, bracket.1, |m| shoot(m)[0].norm() - 1.0);
    let v = shoot(leaf);
    let rot = Complex64::from_polar(1.0, -v[0].arg());
    v.iter().map(|x| x * rot).collect()
}

/// Totex of one prosumer for a fixed battery size, solved without the
/// production formulation. Returns the totex and the largest step-wise
/// overlap of import and export.
pub fn dispatch_oracle(input: &DispatchInput, p: &BatteryParams, cap: f64) -> (f64, f64) {
    let n = input.load_kw.len();
    let (dt, w) = (input.dt_h, input.year_weight);
    let mut lp = LinearProgram::new();
    let e0 = p.initial_soc * cap;
    let energy: Vec<_> = (0..=n)
        .map(|t| {
            if t == 0 || t == n {
                lp.add_var(0.0, e0, e0)
            } else {
                lp.add_var(0.0, p.soc_min * cap, p.soc_max * cap)
            }
        })
        .collect();
    let mut flows = Vec::new();
    for t in 0..n {
        let imp = lp.add_var(input.import_chf[t] * dt * w, 0.0, f64::INFINITY);
        let exp = lp.add_var(-input.export_chf[t] * dt * w, 0.0, f64::INFINITY);
        let ch = lp.add_var(0.0, 0.0, p.power_ratio * cap);
        let dis = lp.add_var(p.sigma_weight * w, 0.0, p.power_ratio * cap);
        // load + ch + exp = pv + dis + imp
        lp.add_eq(input.pv_kw[t] - input.load_kw[t], vec![(ch, 1.0), (exp, 1.0), (dis, -1.0), (imp, -1.0)]);
        lp.add_eq(
            0.0,
            vec![
                (energy[t + 1], 1.0),
                (energy[t], -1.0),
                (ch, -p.charge_efficiency * dt),
                (dis, dt / p.discharge_efficiency),
            ],
        );
        flows.push((imp, exp));
    }
    let sol = lp.solve().expect("oracle LP solves");
    let overlap = flows
        .iter()
        .map(|&(i, e)| sol.value(i).min(sol.value(e)))
        .fold(0.0, f64::max);
    let capex = if cap > 0.0 {
        p.annualization() * (p.fixed_cost_chf + p.unit_cost_chf_per_kwh * cap)
    } else {
        0.0
    };
    (sol.objective + capex, overlap)
}

/// Smallest uniform PV curtailment fraction over `steps` that clears every
/// violation with all other injections left at `p_grid_kw`, and the energy it
/// curtails. `None` when even full curtailment leaves a violation.
#[allow(clippy::too_many_arguments)]
pub fn uniform_curtailment_oracle(
    net: &Network,
    model: &gridflex::grid::AdmittanceModel,
    limits: &OperatingLimits,
    steps: std::ops::RangeInclusive<usize>,
    p_grid_kw: &[Vec<f64>],
    pv_kw: &[Vec<f64>],
    dt_h: f64,
) -> Option<(f64, f64)> {
    let clean = |alpha: f64| -> bool {
        steps.clone().all(|t| {
            let p: Vec<f64> = (0..p_grid_kw.len()).map(|j| p_grid_kw[j][t] - alpha * pv_kw[j][t]).collect();
            let frame = InjectionFrame::from_prosumers(net, &p, &vec![0.0; p.len()]).unwrap();
            match solve_loadflow(model, &frame, &PfOptions::default()) {
                Ok(st) => {
                    let mut recs = Vec::new();
                    audit_step(t, &st, net, limits, &mut recs);
                    recs.is_empty()
                }
                Err(_) => false,
            }
        })
    };
    if !clean(1.0) {
        return None;
    }
    let alpha = if clean(0.0) {
        0.0
    } else {
        let (mut lo, mut hi) = (0.0, 1.0);
        while hi - lo > 1e-10 {
            let mid = 0.5 * (lo + hi);
            if clean(mid) {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        hi
    };
    let energy: f64 = steps.clone().map(|t| pv_kw.iter().map(|s| s[t]).sum::<f64>()).sum::<f64>() * alpha * dt_h;
    Some((alpha, energy))
}
