use nalgebra::DMatrix;
use num_complex::Complex64;

use super::Network;
use crate::{Error, Result};

/// System power base.
pub const S_BASE_MVA: f64 = 1.0;

/// Short-circuit data applied to transformer rows that leave both impedance columns at zero.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransformerDefaults {
    pub r_pct: f64,
    pub x_pct: f64,
}

impl Default for TransformerDefaults {
    fn default() -> Self {
        Self { r_pct: 1.0, x_pct: 4.0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BranchAdmittance {
    pub from: usize,
    pub to: usize,
    /// Series admittance in pu on the system base.
    pub y: Complex64,
    /// Current base at the branch's (sending-end) voltage level.
    pub i_base_ka: f64,
    pub is_transformer: bool,
}

impl BranchAdmittance {
    pub fn conductance(&self) -> f64 {
        self.y.re
    }

    pub fn susceptance(&self) -> f64 {
        self.y.im
    }

    pub fn impedance(&self) -> Complex64 {
        1.0 / self.y
    }

    pub fn ka_to_pu(&self, ka: f64) -> f64 {
        ka / self.i_base_ka
    }

    pub fn pu_to_ka(&self, pu: f64) -> f64 {
        pu * self.i_base_ka
    }
}

/// Per-unit series admittances and their nodal aggregation.
///
/// The nodal matrix is kept row-sparse: `rows[i]` lists `(k, Y_ik)` with the
/// diagonal first. No shunt elements are modelled.
#[derive(Debug, Clone)]
pub struct AdmittanceModel {
    pub v_base_kv: Vec<f64>,
    pub branches: Vec<BranchAdmittance>,
    pub slack: usize,
    rows: Vec<Vec<(usize, Complex64)>>,
}

impl AdmittanceModel {
    pub fn build(network: &Network) -> Result<Self> {
        Self::build_with(network, TransformerDefaults::default())
    }

    pub fn build_with(network: &Network, trafo: TransformerDefaults) -> Result<Self> {
        let buses = network.buses();
        let v_base_kv: Vec<f64> = buses.iter().map(|b| b.base_kv).collect();
        let mut branches = Vec::with_capacity(network.branches().len());
        for br in network.branches() {
            let z_pu = if br.is_transformer {
                let (r, x) = if br.r == 0.0 && br.x == 0.0 {
                    (trafo.r_pct, trafo.x_pct)
                } else {
                    (br.r, br.x)
                };
                Complex64::new(r, x) / 100.0 * (S_BASE_MVA / br.rating_mva)
            } else {
                let z_base = v_base_kv[br.from].powi(2) / S_BASE_MVA;
                Complex64::new(br.r, br.x) * br.length_km / z_base
            };
            if z_pu.norm() == 0.0 || !z_pu.norm().is_finite() {
                return Err(Error::ZeroImpedance { branch: br.id.clone() });
            }
            branches.push(BranchAdmittance {
                from: br.from,
                to: br.to,
                y: 1.0 / z_pu,
                i_base_ka: S_BASE_MVA / (3f64.sqrt() * v_base_kv[br.from]),
                is_transformer: br.is_transformer,
            });
        }
        Ok(Self::from_branches(v_base_kv, branches, network.slack()))
    }

    pub(crate) fn from_branches(v_base_kv: Vec<f64>, branches: Vec<BranchAdmittance>, slack: usize) -> Self {
        let n = v_base_kv.len();
        let mut rows: Vec<Vec<(usize, Complex64)>> = (0..n).map(|i| vec![(i, Complex64::new(0.0, 0.0))]).collect();
        let mut add = |i: usize, k: usize, y: Complex64| {
            let row = &mut rows[i];
            match row.iter_mut().find(|(c, _)| *c == k) {
                Some(entry) => entry.1 += y,
                None => row.push((k, y)),
            }
        };
        for br in &branches {
            add(br.from, br.from, br.y);
            add(br.to, br.to, br.y);
            add(br.from, br.to, -br.y);
            add(br.to, br.from, -br.y);
        }
        Self {
            v_base_kv,
            branches,
            slack,
            rows,
        }
    }

    pub fn num_buses(&self) -> usize {
        self.rows.len()
    }

    /// Sparse row `i` of the nodal admittance matrix.
    pub fn row(&self, i: usize) -> &[(usize, Complex64)] {
        &self.rows[i]
    }

    pub fn nodal(&self, i: usize, k: usize) -> Complex64 {
        self.rows[i]
            .iter()
            .find(|(c, _)| *c == k)
            .map(|e| e.1)
            .unwrap_or_default()
    }

    pub fn to_dense(&self) -> DMatrix<Complex64> {
        let n = self.num_buses();
        let mut m = DMatrix::zeros(n, n);
        for (i, row) in self.rows.iter().enumerate() {
            for &(k, y) in row {
                m[(i, k)] = y;
            }
        }
        m
    }

    /// Complex nodal current injections `Y V`.
    pub fn currents(&self, v: &[Complex64]) -> Vec<Complex64> {
        self.rows
            .iter()
            .map(|row| row.iter().map(|&(k, y)| y * v[k]).sum())
            .collect()
    }

    /// Complex power injections `V conj(Y V)` in pu.
    pub fn injections(&self, v: &[Complex64]) -> Vec<Complex64> {
        self.currents(v)
            .iter()
            .zip(v)
            .map(|(i, v)| v * i.conj())
            .collect()
    }

    /// Series current `y (V_from - V_to)` of branch `b` in pu.
    pub fn branch_current(&self, b: usize, v: &[Complex64]) -> Complex64 {
        let br = &self.branches[b];
        br.y * (v[br.from] - v[br.to])
    }
}
