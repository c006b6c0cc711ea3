//! Sparse linear programs, solved with HiGHS.
//!
//! Models are assembled column-first, then row by row with sparse coefficient lists,
//! and always minimised.

use highs::{HighsModelStatus, RowProblem, Sense};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone, Default)]
pub struct LinearProgram {
    cost: Vec<f64>,
    lower: Vec<f64>,
    upper: Vec<f64>,
    rows: Vec<(f64, f64, Vec<(Var, f64)>)>,
}

#[derive(Debug, Clone)]
pub struct LpSolution {
    pub values: Vec<f64>,
    pub objective: f64,
}

impl LpSolution {
    pub fn value(&self, v: Var) -> f64 {
        self.values[v.0]
    }
}

impl LinearProgram {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds a variable with objective coefficient `cost` and bounds `[lower, upper]`.
    /// Infinite bounds are allowed.
    pub fn add_var(&mut self, cost: f64, lower: f64, upper: f64) -> Var {
        debug_assert!(lower <= upper, "empty bounds [{lower}, {upper}]");
        self.cost.push(cost);
        self.lower.push(lower);
        self.upper.push(upper);
        Var(self.cost.len() - 1)
    }

    pub fn set_cost(&mut self, v: Var, cost: f64) {
        self.cost[v.0] = cost;
    }

    /// `lower <= sum(coef * var) <= upper`
    pub fn add_row(&mut self, lower: f64, upper: f64, terms: Vec<(Var, f64)>) {
        self.rows.push((lower, upper, terms));
    }

    pub fn add_eq(&mut self, rhs: f64, terms: Vec<(Var, f64)>) {
        self.add_row(rhs, rhs, terms);
    }

    pub fn add_le(&mut self, rhs: f64, terms: Vec<(Var, f64)>) {
        self.add_row(f64::NEG_INFINITY, rhs, terms);
    }

    pub fn add_ge(&mut self, rhs: f64, terms: Vec<(Var, f64)>) {
        self.add_row(rhs, f64::INFINITY, terms);
    }

    pub fn num_vars(&self) -> usize {
        self.cost.len()
    }

    pub fn num_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn solve(&self) -> Result<LpSolution> {
        let mut pb = RowProblem::default();
        let cols: Vec<_> = (0..self.cost.len())
            .map(|j| pb.add_column(self.cost[j], self.lower[j]..=self.upper[j]))
            .collect();
        for (lo, hi, terms) in &self.rows {
            // HiGHS drops entries below its small_matrix_value and warns about it
            let factors: Vec<_> = terms
                .iter()
                .filter(|(_, c)| c.abs() > 1e-9)
                .map(|(v, c)| (cols[v.0], *c))
                .collect();
            pb.add_row(*lo..=*hi, factors);
        }
        let mut model = pb.optimise(Sense::Minimise);
        model.make_quiet();
        model.set_option("threads", 1);
        model.set_option("random_seed", 0);
        let solved = model
            .try_solve()
            .map_err(|s| Error::Solver(format!("HiGHS returned {s:?}")))?;
        match solved.status() {
            HighsModelStatus::Optimal => {}
            HighsModelStatus::ModelEmpty => {
                return Ok(LpSolution {
                    values: vec![],
                    objective: 0.0,
                })
            }
            other => return Err(Error::Solver(format!("model status {other:?}"))),
        }
        let values = solved.get_solution().columns().to_vec();
        let objective = self.cost.iter().zip(&values).map(|(c, x)| c * x).sum();
        Ok(LpSolution { values, objective })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_lp() {
        // max x + 2y s.t. 3x + y <= 6, y + 2z <= 7  (as minimisation)
        let mut lp = LinearProgram::new();
        let x = lp.add_var(-1.0, 0.0, f64::INFINITY);
        let y = lp.add_var(-2.0, 0.0, f64::INFINITY);
        let z = lp.add_var(-1.0, 0.0, f64::INFINITY);
        lp.add_le(6.0, vec![(x, 3.0), (y, 1.0)]);
        lp.add_le(7.0, vec![(y, 1.0), (z, 2.0)]);
        let sol = lp.solve().unwrap();
        assert!((sol.objective + 12.5).abs() < 1e-9);
        assert!((sol.value(y) - 6.0).abs() < 1e-9);
    }

    #[test]
    fn infeasible_is_an_error() {
        let mut lp = LinearProgram::new();
        let x = lp.add_var(1.0, 0.0, 1.0);
        lp.add_ge(2.0, vec![(x, 1.0)]);
        assert!(matches!(lp.solve(), Err(Error::Solver(_))));
    }
}
