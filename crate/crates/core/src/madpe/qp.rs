//! The bilinear program over the frequency polytope and its text export.

use super::{build_frequency_constraints, check_lambda, MadpeError, UnfoldedN};
use crate::lp::format::{
    canonical_order, parse_document, write_document, Document, DocumentKind, FormatError, QuadTerm,
};
use crate::lp::{Constraint, Relation};
use crate::rational::{int, one, parse_rational, Rational};
use num_traits::Zero;
use thiserror::Error;

/// Frequencies, expectation `e`, deviation bounds `g_w`/`h_{s,w}` and the
/// objective `e − λ(Σ x_{t,w,τ}·g_w + Σ x_{s,w,τ}·h_{s,w})`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QpModel {
    pub lambda: Rational,
    pub k: u64,
    pub ell: u64,
    pub model_hash: String,
    pub document: Document,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum QpParseError {
    #[error(transparent)]
    Format(#[from] FormatError),
    #[error("not a qp document")]
    NotQp,
    #[error("header field `{0}` missing or malformed")]
    Header(&'static str),
}

/// Builds the program for `0 < λ ≤ 1/2`.
///
/// Variables are numbered by first appearance in the written document.
pub fn build_qp(n: &UnfoldedN, lambda: &Rational) -> Result<QpModel, MadpeError> {
    check_lambda(lambda)?;
    let f = build_frequency_constraints(n);
    let mut p = f.problem;
    let m = &n.original;
    let e = p.add_variable("e");
    p.objective = vec![(e, one())];
    let mut quadratic = Vec::new();
    let mut expectation: Vec<(usize, Rational)> = vec![(e, one())];
    for (j, v) in &f.tau {
        expectation.push((*j, -v.clone()));
    }
    p.add_constraint(expectation, Relation::Eq, Rational::zero());
    let tau_var = |p: &crate::lp::LpProblem, s: usize, w: u64| {
        p.variable_index(&super::frequency_name(m.state_name(s), w, super::TAU)).expect("tau variable exists")
    };
    let bound_rows = |p: &mut crate::lp::LpProblem, var: usize, v: Rational| {
        p.add_constraint(vec![(var, one()), (e, -one())], Relation::Ge, -v.clone());
        p.add_constraint(vec![(var, one()), (e, one())], Relation::Ge, v);
    };
    let traps: Vec<usize> = (0..m.num_states()).filter(|&s| m.is_trap(s)).collect();
    for w in 0..n.k {
        let g = p.add_variable(format!("g_{w}"));
        bound_rows(&mut p, g, int(w as i64));
        for &t in &traps {
            let x = tau_var(&p, t, w);
            quadratic.push(QuadTerm { coef: -lambda.clone(), a: x, b: g });
        }
    }
    for s in 0..m.num_states() {
        for w in n.k..n.levels() {
            let h = p.add_variable(format!("h_{}_{w}", m.state_name(s)));
            let v = n.tau_value(n.pair_state(s, w)).expect("tau above the bound").clone();
            bound_rows(&mut p, h, v);
            let x = tau_var(&p, s, w);
            quadratic.push(QuadTerm { coef: -lambda.clone(), a: x, b: h });
        }
    }
    quadratic.sort_by_key(|q| (q.b, q.a));
    for (i, c) in p.constraints.iter_mut().enumerate() {
        c.name = format!("c{}", i + 1);
    }
    let mut document = Document {
        kind: DocumentKind::Qp,
        meta: vec![
            ("lambda".into(), lambda.to_string()),
            ("k".into(), n.k.to_string()),
            ("ell".into(), n.ell.to_string()),
            ("model".into(), n.model_hash.clone()),
        ],
        problem: p,
        quadratic,
        constant: Rational::zero(),
    };
    canonical_order(&mut document);
    Ok(QpModel { lambda: lambda.clone(), k: n.k, ell: n.ell, model_hash: n.model_hash.clone(), document })
}

/// Deterministic text with LF line endings.
pub fn export_qp(q: &QpModel) -> Result<String, FormatError> {
    write_document(&q.document)
}

pub fn parse_qp(text: &str) -> Result<QpModel, QpParseError> {
    let document = parse_document(text)?;
    if document.kind != DocumentKind::Qp {
        return Err(QpParseError::NotQp);
    }
    let lambda =
        document.meta_value("lambda").and_then(|v| parse_rational(v).ok()).ok_or(QpParseError::Header("lambda"))?;
    let k = document.meta_value("k").and_then(|v| v.parse().ok()).ok_or(QpParseError::Header("k"))?;
    let ell = document.meta_value("ell").and_then(|v| v.parse().ok()).ok_or(QpParseError::Header("ell"))?;
    let model_hash = document.meta_value("model").ok_or(QpParseError::Header("model"))?.to_string();
    Ok(QpModel { lambda, k, ell, model_hash, document })
}

impl QpModel {
    /// Objective value at a point (one value per variable).
    pub fn objective_value(&self, x: &[Rational]) -> Rational {
        let p = &self.document.problem;
        let linear = p.objective_value(x);
        let quad: Rational = self.document.quadratic.iter().map(|q| &q.coef * &x[q.a] * &x[q.b]).sum();
        linear + quad + &self.document.constant
    }

    pub fn constraints(&self) -> &[Constraint] {
        &self.document.problem.constraints
    }
}
