//! Exact linear programming over the rationals.
//!
//! [`solve_lp`] runs a dense two-phase primal simplex and returns, besides
//! the optimum, a certificate: dual multipliers for optimal problems, a
//! Farkas vector for infeasible ones and a ray for unbounded ones. The
//! [`format`] submodule reads and writes the plain-text LP/QP interchange
//! format.

pub mod format;
mod simplex;

use crate::rational::Rational;
use num_traits::{Signed, Zero};
use std::collections::HashMap;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize)]
pub enum Relation {
    #[serde(rename = "<=")]
    Le,
    #[serde(rename = ">=")]
    Ge,
    #[serde(rename = "=")]
    Eq,
}

impl Relation {
    pub fn flipped(self) -> Relation {
        match self {
            Relation::Le => Relation::Ge,
            Relation::Ge => Relation::Le,
            Relation::Eq => Relation::Eq,
        }
    }

    pub fn symbol(self) -> &'static str {
        match self {
            Relation::Le => "<=",
            Relation::Ge => ">=",
            Relation::Eq => "=",
        }
    }

    pub fn holds(self, lhs: &Rational, rhs: &Rational) -> bool {
        match self {
            Relation::Le => lhs <= rhs,
            Relation::Ge => lhs >= rhs,
            Relation::Eq => lhs == rhs,
        }
    }
}

/// Linear row `Σ coeffs·x  rel  rhs`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Constraint {
    pub name: String,
    pub coeffs: Vec<(usize, Rational)>,
    pub relation: Relation,
    pub rhs: Rational,
}

/// `maximize objective·x` subject to the constraints and `lower ≤ x ≤ upper`.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct LpProblem {
    pub variables: Vec<String>,
    pub objective: Vec<(usize, Rational)>,
    pub constraints: Vec<Constraint>,
    pub lower: Vec<Rational>,
    pub upper: Vec<Option<Rational>>,
}

impl LpProblem {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds a variable with bounds `[0, ∞)` and returns its index.
    pub fn add_variable(&mut self, name: impl Into<String>) -> usize {
        self.variables.push(name.into());
        self.lower.push(Rational::zero());
        self.upper.push(None);
        self.variables.len() - 1
    }

    pub fn add_constraint(&mut self, coeffs: Vec<(usize, Rational)>, relation: Relation, rhs: Rational) -> usize {
        let name = format!("c{}", self.constraints.len() + 1);
        self.constraints.push(Constraint { name, coeffs, relation, rhs });
        self.constraints.len() - 1
    }

    pub fn variable_index(&self, name: &str) -> Option<usize> {
        self.variables.iter().position(|v| v == name)
    }

    pub fn index_map(&self) -> HashMap<&str, usize> {
        self.variables.iter().enumerate().map(|(i, v)| (v.as_str(), i)).collect()
    }

    pub fn objective_value(&self, x: &[Rational]) -> Rational {
        self.objective.iter().map(|(j, c)| c * &x[*j]).sum()
    }

    /// True when `x` satisfies every row and bound exactly.
    pub fn is_feasible(&self, x: &[Rational]) -> bool {
        x.len() == self.variables.len()
            && x.iter().zip(&self.lower).all(|(v, l)| v >= l)
            && x.iter().zip(&self.upper).all(|(v, u)| u.as_ref().map_or(true, |u| v <= u))
            && self.constraints.iter().all(|c| {
                let lhs: Rational = c.coeffs.iter().map(|(j, a)| a * &x[*j]).sum();
                c.relation.holds(&lhs, &c.rhs)
            })
    }

    /// Constraint rows followed by one `x_j ≤ u_j` row per finite upper bound.
    pub fn rows_with_bounds(&self) -> Vec<Constraint> {
        let mut rows = self.constraints.clone();
        for (j, u) in self.upper.iter().enumerate() {
            if let Some(u) = u {
                rows.push(Constraint {
                    name: format!("ub_{}", self.variables[j]),
                    coeffs: vec![(j, Rational::from_integer(1.into()))],
                    relation: Relation::Le,
                    rhs: u.clone(),
                });
            }
        }
        rows
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "lowercase")]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LpSolution {
    pub status: LpStatus,
    /// Primal values (optimal only).
    pub values: Vec<Rational>,
    pub objective: Rational,
    /// Names of the basic variables, slacks and artificials included.
    pub basis: Vec<String>,
    /// Dual multipliers per row of [`LpProblem::rows_with_bounds`] (optimal only).
    pub duals: Vec<Rational>,
    /// Farkas multipliers per row (infeasible only).
    pub farkas: Option<Vec<Rational>>,
    /// Improving direction (unbounded only).
    pub ray: Option<Vec<Rational>>,
    pub pivots: usize,
}

/// Solves `p` exactly.
pub fn solve_lp(p: &LpProblem) -> LpSolution {
    simplex::solve(p)
}

fn column_sums(rows: &[Constraint], y: &[Rational], n: usize) -> Vec<Rational> {
    let mut out = vec![Rational::zero(); n];
    for (row, yi) in rows.iter().zip(y) {
        if yi.is_zero() {
            continue;
        }
        for (j, a) in &row.coeffs {
            out[*j] += yi * a;
        }
    }
    out
}

/// Sign condition of a multiplier for a maximization dual.
fn dual_sign_ok(rel: Relation, y: &Rational) -> bool {
    match rel {
        Relation::Le => !y.is_negative(),
        Relation::Ge => !y.is_positive(),
        Relation::Eq => true,
    }
}

/// Checks an optimal solution against its dual certificate: primal
/// feasibility, dual feasibility (`yᵀA_j ≥ c_j` with sign conditions) and
/// equal objective values. Lower bounds are taken into account by shifting.
pub fn verify_optimality(p: &LpProblem, sol: &LpSolution) -> bool {
    if sol.status != LpStatus::Optimal || !p.is_feasible(&sol.values) {
        return false;
    }
    let rows = p.rows_with_bounds();
    if sol.duals.len() != rows.len() || !rows.iter().zip(&sol.duals).all(|(r, y)| dual_sign_ok(r.relation, y)) {
        return false;
    }
    let n = p.variables.len();
    let ya = column_sums(&rows, &sol.duals, n);
    let mut c = vec![Rational::zero(); n];
    for (j, v) in &p.objective {
        c[*j] += v;
    }
    if !(0..n).all(|j| ya[j] >= c[j]) {
        return false;
    }
    // Dual objective yᵀ(b − A l) + cᵀl must equal the primal objective.
    let shifted: Rational = rows
        .iter()
        .zip(&sol.duals)
        .map(|(r, y)| y * (&r.rhs - r.coeffs.iter().map(|(j, a)| a * &p.lower[*j]).sum::<Rational>()))
        .sum();
    let base: Rational = (0..n).map(|j| &c[j] * &p.lower[j]).sum();
    shifted + base == sol.objective && p.objective_value(&sol.values) == sol.objective
}

/// Checks a Farkas certificate `y`: `yᵀA_j ≤ 0` for every column,
/// multipliers signed so that `yᵀAx ≥ yᵀb` for feasible `x`, and
/// `yᵀ(b − A l) > 0`, which together rule out any feasible point.
pub fn verify_infeasibility(p: &LpProblem, y: &[Rational]) -> bool {
    let rows = p.rows_with_bounds();
    if y.len() != rows.len() {
        return false;
    }
    let sign_ok = rows.iter().zip(y).all(|(r, yi)| match r.relation {
        Relation::Le => !yi.is_positive(),
        Relation::Ge => !yi.is_negative(),
        Relation::Eq => true,
    });
    let ya = column_sums(&rows, y, p.variables.len());
    let rhs: Rational = rows
        .iter()
        .zip(y)
        .map(|(r, yi)| yi * (&r.rhs - r.coeffs.iter().map(|(j, a)| a * &p.lower[*j]).sum::<Rational>()))
        .sum();
    sign_ok && ya.iter().all(|v| !v.is_positive()) && rhs.is_positive()
}

/// Checks an unbounded ray `d ≥ 0`: homogeneous rows hold and `c·d > 0`.
pub fn verify_ray(p: &LpProblem, d: &[Rational]) -> bool {
    if d.len() != p.variables.len() || d.iter().any(|v| v.is_negative()) {
        return false;
    }
    let homogeneous = p.rows_with_bounds().iter().all(|r| {
        let lhs: Rational = r.coeffs.iter().map(|(j, a)| a * &d[*j]).sum();
        r.relation.holds(&lhs, &Rational::zero())
    });
    homogeneous && p.objective_value(d).is_positive()
}
