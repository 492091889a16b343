//! Dense rational two-phase primal simplex.
//!
//! Rows are normalized to non-negative right-hand sides. `≤` rows start with
//! their slack in the basis, `≥` and `=` rows with an artificial variable.
//! Phase 1 maximizes minus the sum of artificials; phase 2 keeps the
//! artificial columns in the tableau (they never re-enter) so that the dual
//! multipliers can be read off their reduced costs. Pricing is Dantzig's
//! largest coefficient until the first degenerate pivot, then Bland's rule
//! for the rest of the solve.

use super::{LpProblem, LpSolution, LpStatus, Relation};
use crate::rational::Rational;
use num_traits::{One, Signed, Zero};

struct Tableau {
    rows: Vec<Vec<Rational>>,
    /// Objective row: `π·A_j − c_j` per column, current objective in the last slot.
    obj: Vec<Rational>,
    basis: Vec<usize>,
    ncols: usize,
    bland: bool,
    pivots: usize,
}

enum Step {
    Optimal,
    Unbounded(usize),
    Pivoted,
}

impl Tableau {
    fn rhs(&self, r: usize) -> &Rational {
        &self.rows[r][self.ncols]
    }

    fn pivot(&mut self, r: usize, j: usize) {
        let inv = Rational::one() / &self.rows[r][j];
        let nz: Vec<usize> = (0..=self.ncols).filter(|&k| !self.rows[r][k].is_zero()).collect();
        for &k in &nz {
            self.rows[r][k] *= &inv;
        }
        let pivot_row: Vec<(usize, Rational)> = nz.iter().map(|&k| (k, self.rows[r][k].clone())).collect();
        for i in 0..self.rows.len() {
            if i == r || self.rows[i][j].is_zero() {
                continue;
            }
            let f = self.rows[i][j].clone();
            for (k, v) in &pivot_row {
                let d = &f * v;
                self.rows[i][*k] -= d;
            }
        }
        if !self.obj[j].is_zero() {
            let f = self.obj[j].clone();
            for (k, v) in &pivot_row {
                let d = &f * v;
                self.obj[*k] -= d;
            }
        }
        self.basis[r] = j;
        self.pivots += 1;
    }

    /// One pricing + ratio-test step over the columns allowed by `eligible`.
    fn step(&mut self, eligible: &dyn Fn(usize) -> bool) -> Step {
        let mut enter: Option<usize> = None;
        for j in (0..self.ncols).filter(|&j| eligible(j)) {
            if !self.obj[j].is_negative() {
                continue;
            }
            match enter {
                None => enter = Some(j),
                Some(e) if !self.bland && self.obj[j] < self.obj[e] => enter = Some(j),
                _ => {}
            }
            if self.bland {
                break;
            }
        }
        let Some(j) = enter else { return Step::Optimal };
        let mut leave: Option<(usize, Rational)> = None;
        for r in 0..self.rows.len() {
            let a = &self.rows[r][j];
            if !a.is_positive() {
                continue;
            }
            let ratio = self.rhs(r) / a;
            let better = match &leave {
                None => true,
                Some((lr, best)) => ratio < *best || (ratio == *best && self.basis[r] < self.basis[*lr]),
            };
            if better {
                leave = Some((r, ratio));
            }
        }
        let Some((r, ratio)) = leave else { return Step::Unbounded(j) };
        if ratio.is_zero() {
            self.bland = true;
        }
        self.pivot(r, j);
        Step::Pivoted
    }

    fn reset_objective(&mut self, cost: &[Rational]) {
        let mut obj: Vec<Rational> = cost.iter().map(|c| -c).collect();
        obj.push(Rational::zero());
        for (r, &b) in self.basis.iter().enumerate() {
            if obj[b].is_zero() {
                continue;
            }
            let f = obj[b].clone();
            for k in 0..=self.ncols {
                if !self.rows[r][k].is_zero() {
                    let d = &f * &self.rows[r][k];
                    obj[k] -= d;
                }
            }
        }
        self.obj = obj;
    }
}

/// Row of the standard-form system: `coeffs·x rel rhs` with `rhs ≥ 0`.
struct Row {
    coeffs: Vec<(usize, Rational)>,
    relation: Relation,
    rhs: Rational,
    /// −1 when the row was negated during normalization.
    sign: i8,
}

pub(super) fn solve(p: &LpProblem) -> LpSolution {
    let n = p.variables.len();
    // Shift lower bounds to zero: x = l + x'.
    let mut rows: Vec<Row> = Vec::new();
    let mut push = |coeffs: Vec<(usize, Rational)>, relation: Relation, rhs: Rational| {
        let shift: Rational = coeffs.iter().map(|(j, a)| a * &p.lower[*j]).sum();
        let mut rhs = rhs - shift;
        let mut coeffs = coeffs;
        let mut relation = relation;
        let mut sign = 1;
        if rhs.is_negative() {
            rhs = -rhs;
            for (_, a) in coeffs.iter_mut() {
                *a = -a.clone();
            }
            relation = relation.flipped();
            sign = -1;
        }
        rows.push(Row { coeffs, relation, rhs, sign });
    };
    for c in &p.constraints {
        push(c.coeffs.clone(), c.relation, c.rhs.clone());
    }
    for (j, u) in p.upper.iter().enumerate() {
        if let Some(u) = u {
            push(vec![(j, Rational::one())], Relation::Le, u.clone());
        }
    }
    let m = rows.len();
    let nslack = rows.iter().filter(|r| r.relation != Relation::Eq).count();
    let nart = rows.iter().filter(|r| r.relation != Relation::Le).count();
    let ncols = n + nslack + nart;
    let art_start = n + nslack;
    let mut table = vec![vec![Rational::zero(); ncols + 1]; m];
    let mut basis = vec![0usize; m];
    let mut identity = vec![0usize; m];
    let (mut s_next, mut a_next) = (n, art_start);
    for (i, row) in rows.iter().enumerate() {
        for (j, a) in &row.coeffs {
            table[i][*j] += a;
        }
        table[i][ncols] = row.rhs.clone();
        match row.relation {
            Relation::Le => {
                table[i][s_next] = Rational::one();
                basis[i] = s_next;
                identity[i] = s_next;
                s_next += 1;
            }
            Relation::Ge => {
                table[i][s_next] = -Rational::one();
                s_next += 1;
                table[i][a_next] = Rational::one();
                basis[i] = a_next;
                identity[i] = a_next;
                a_next += 1;
            }
            Relation::Eq => {
                table[i][a_next] = Rational::one();
                basis[i] = a_next;
                identity[i] = a_next;
                a_next += 1;
            }
        }
    }
    let mut t = Tableau { rows: table, obj: Vec::new(), basis, ncols, bland: false, pivots: 0 };
    let is_art = |j: usize| j >= art_start;
    let mut alive = vec![true; m];

    if nart > 0 {
        let mut cost = vec![Rational::zero(); ncols];
        for c in cost.iter_mut().skip(art_start) {
            *c = -Rational::one();
        }
        t.reset_objective(&cost);
        loop {
            match t.step(&|_| true) {
                Step::Optimal => break,
                Step::Pivoted => continue,
                Step::Unbounded(_) => unreachable!("phase 1 is bounded"),
            }
        }
        if t.obj[ncols].is_negative() {
            let farkas = read_duals(&t, &identity, &rows, &cost, &alive).into_iter().map(|y| -y).collect();
            return LpSolution {
                status: LpStatus::Infeasible,
                values: Vec::new(),
                objective: Rational::zero(),
                basis: Vec::new(),
                duals: Vec::new(),
                farkas: Some(farkas),
                ray: None,
                pivots: t.pivots,
            };
        }
        // Drive remaining artificials out of the basis or drop redundant rows.
        for r in 0..m {
            if !is_art(t.basis[r]) {
                continue;
            }
            match (0..art_start).find(|&j| !t.rows[r][j].is_zero()) {
                Some(j) => t.pivot(r, j),
                None => {
                    alive[r] = false;
                    t.rows[r].iter_mut().for_each(|v| *v = Rational::zero());
                }
            }
        }
    }

    let mut cost = vec![Rational::zero(); ncols];
    for (j, c) in &p.objective {
        cost[*j] += c;
    }
    let keep: Vec<usize> = (0..m).filter(|&r| alive[r]).collect();
    if keep.len() < m {
        let rows_kept: Vec<Vec<Rational>> = keep.iter().map(|&r| t.rows[r].clone()).collect();
        let basis_kept: Vec<usize> = keep.iter().map(|&r| t.basis[r]).collect();
        t.rows = rows_kept;
        t.basis = basis_kept;
    }
    t.reset_objective(&cost);
    loop {
        match t.step(&|j| !is_art(j)) {
            Step::Optimal => break,
            Step::Pivoted => continue,
            Step::Unbounded(j) => {
                let mut ray = vec![Rational::zero(); n];
                if j < n {
                    ray[j] = Rational::one();
                }
                for (r, &b) in t.basis.iter().enumerate() {
                    if b < n {
                        ray[b] = -t.rows[r][j].clone();
                    }
                }
                return LpSolution {
                    status: LpStatus::Unbounded,
                    values: Vec::new(),
                    objective: Rational::zero(),
                    basis: Vec::new(),
                    duals: Vec::new(),
                    farkas: None,
                    ray: Some(ray),
                    pivots: t.pivots,
                };
            }
        }
    }
    let mut x: Vec<Rational> = p.lower.clone();
    for (r, &b) in t.basis.iter().enumerate() {
        if b < n {
            x[b] += t.rhs(r);
        }
    }
    let objective: Rational = p.objective.iter().map(|(j, c)| c * &x[*j]).sum();
    // Rows were compacted; map duals back to the original row numbering.
    let mut full_rows: Vec<Vec<Rational>> = vec![Vec::new(); m];
    let mut full_basis = vec![usize::MAX; m];
    for (k, &r) in keep.iter().enumerate() {
        full_rows[r] = std::mem::take(&mut t.rows[k]);
        full_basis[r] = t.basis[k];
    }
    t.rows = full_rows;
    t.basis = full_basis;
    let duals = read_duals(&t, &identity, &rows, &cost, &alive);
    let mut slack_names = Vec::new();
    let mut art_names = Vec::new();
    for (i, row) in rows.iter().enumerate() {
        if row.relation != Relation::Eq {
            slack_names.push(format!("slack_{}", row_name(p, i)));
        }
        if row.relation != Relation::Le {
            art_names.push(format!("artificial_{}", row_name(p, i)));
        }
    }
    let basis = keep
        .iter()
        .map(|&r| {
            let b = t.basis[r];
            if b < n {
                p.variables[b].clone()
            } else if b < art_start {
                slack_names[b - n].clone()
            } else {
                art_names[b - art_start].clone()
            }
        })
        .collect();
    LpSolution {
        status: LpStatus::Optimal,
        values: x,
        objective,
        basis,
        duals,
        farkas: None,
        ray: None,
        pivots: t.pivots,
    }
}

fn row_name(p: &LpProblem, i: usize) -> String {
    match p.constraints.get(i) {
        Some(c) => c.name.clone(),
        None => {
            let j = p.upper.iter().enumerate().filter(|(_, u)| u.is_some()).nth(i - p.constraints.len()).unwrap().0;
            format!("ub_{}", p.variables[j])
        }
    }
}

/// Row multipliers `π_i = obj[identity_i] + c_{identity_i}`, mapped back to
/// the orientation of the rows as given.
fn read_duals(t: &Tableau, identity: &[usize], rows: &[Row], cost: &[Rational], alive: &[bool]) -> Vec<Rational> {
    identity
        .iter()
        .enumerate()
        .map(|(i, &col)| {
            if !alive[i] {
                return Rational::zero();
            }
            let pi = &t.obj[col] + &cost[col];
            if rows[i].sign < 0 {
                -pi
            } else {
                pi
            }
        })
        .collect()
}
