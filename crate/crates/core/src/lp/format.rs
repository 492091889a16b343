//! Plain-text LP/QP interchange format.
//!
//! ```text
//! \ riskmdp qp v1  lambda=2/5 k=2 ell=2 model=0123abcd
//! maximize: e - 2/5 x_goal_0_tau * g_0
//! subject to:
//! c1: x_s_init_0_alpha + x_s_init_0_beta - 1 = 0
//! bounds: all >= 0
//! end
//! ```
//!
//! Tokens are whitespace separated. A term is `[coef] var`, `[coef] var * var`
//! or a bare constant, joined by `+`/`-` tokens. Every row is written as
//! `name: expr rel 0`. Bound overrides (`x >= 1/2`, `x <= 3`) may follow the
//! `bounds:` line. An optional `variables:` line after the header fixes the
//! variable order; without it variables are numbered by first appearance.

use super::{Constraint, LpProblem, Relation};
use crate::rational::{parse_rational, Rational};
use num_traits::{One, Signed, Zero};
use std::collections::HashMap;
use std::fmt::Write as _;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FormatError {
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("invalid variable name `{0}`")]
    BadName(String),
    #[error("linear format cannot hold quadratic objective terms")]
    NotLinear,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DocumentKind {
    Lp,
    Qp,
}

impl DocumentKind {
    fn tag(self) -> &'static str {
        match self {
            DocumentKind::Lp => "lp",
            DocumentKind::Qp => "qp",
        }
    }
}

/// Bilinear objective term `coef · a · b`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QuadTerm {
    pub coef: Rational,
    pub a: usize,
    pub b: usize,
}

/// A parsed or to-be-written document: linear program plus optional
/// bilinear objective terms, an objective constant and header metadata.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Document {
    pub kind: DocumentKind,
    pub meta: Vec<(String, String)>,
    pub problem: LpProblem,
    pub quadratic: Vec<QuadTerm>,
    pub constant: Rational,
}

impl Document {
    pub fn linear(problem: LpProblem) -> Self {
        Document {
            kind: DocumentKind::Lp,
            meta: Vec::new(),
            problem,
            quadratic: Vec::new(),
            constant: Rational::zero(),
        }
    }

    pub fn meta_value(&self, key: &str) -> Option<&str> {
        self.meta.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }
}

fn valid_name(name: &str) -> bool {
    !name.is_empty()
        && !name.chars().any(|c| c.is_whitespace())
        && !matches!(name, "+" | "-" | "*" | "=" | "<=" | ">=")
        && !name.ends_with(':')
        && !name.starts_with('\\')
        && parse_rational(name).is_err()
}

struct Terms {
    out: String,
    first: bool,
}

impl Terms {
    fn new() -> Self {
        Terms { out: String::new(), first: true }
    }

    fn push(&mut self, coef: &Rational, body: &str) {
        let negative = coef.is_negative();
        let magnitude = coef.abs();
        if self.first {
            if negative {
                self.out.push_str("- ");
            }
        } else {
            self.out.push_str(if negative { " - " } else { " + " });
        }
        self.first = false;
        if body.is_empty() {
            let _ = write!(self.out, "{magnitude}");
        } else if magnitude.is_one() {
            self.out.push_str(body);
        } else {
            let _ = write!(self.out, "{magnitude} {body}");
        }
    }

    fn finish(self) -> String {
        if self.first {
            "0".to_string()
        } else {
            self.out
        }
    }
}

/// Variable order implied by first appearance in the written document.
fn appearance_order(doc: &Document) -> Vec<usize> {
    let p = &doc.problem;
    let mut seen = vec![false; p.variables.len()];
    let mut order = Vec::new();
    let mut visit = |j: usize| {
        if !seen[j] {
            seen[j] = true;
            order.push(j);
        }
    };
    for (j, _) in &p.objective {
        visit(*j);
    }
    for q in &doc.quadratic {
        visit(q.a);
        visit(q.b);
    }
    for c in &p.constraints {
        for (j, _) in &c.coeffs {
            visit(*j);
        }
    }
    for j in 0..p.variables.len() {
        if !p.lower[j].is_zero() || p.upper[j].is_some() {
            visit(j);
        }
    }
    order
}

/// Renumbers variables in order of first appearance (unused variables last),
/// so that the written document needs no `variables:` line unless some
/// variable is unused.
pub fn canonical_order(doc: &mut Document) {
    let mut order = appearance_order(doc);
    let n = doc.problem.variables.len();
    let mut used = vec![false; n];
    for &j in &order {
        used[j] = true;
    }
    order.extend((0..n).filter(|&j| !used[j]));
    let mut new_index = vec![0; n];
    for (new, &old) in order.iter().enumerate() {
        new_index[old] = new;
    }
    let p = &mut doc.problem;
    p.variables = order.iter().map(|&j| p.variables[j].clone()).collect();
    p.lower = order.iter().map(|&j| p.lower[j].clone()).collect();
    p.upper = order.iter().map(|&j| p.upper[j].clone()).collect();
    for (j, _) in p.objective.iter_mut() {
        *j = new_index[*j];
    }
    for c in p.constraints.iter_mut() {
        for (j, _) in c.coeffs.iter_mut() {
            *j = new_index[*j];
        }
    }
    for q in doc.quadratic.iter_mut() {
        q.a = new_index[q.a];
        q.b = new_index[q.b];
    }
}

/// Renders `doc` deterministically with LF line endings.
pub fn write_document(doc: &Document) -> Result<String, FormatError> {
    let p = &doc.problem;
    if let Some(bad) = p.variables.iter().find(|v| !valid_name(v)) {
        return Err(FormatError::BadName(bad.clone()));
    }
    if doc.kind == DocumentKind::Lp && !doc.quadratic.is_empty() {
        return Err(FormatError::NotLinear);
    }
    let mut out = format!("\\ riskmdp {} v1", doc.kind.tag());
    if !doc.meta.is_empty() {
        out.push(' ');
        for (k, v) in &doc.meta {
            let _ = write!(out, " {k}={v}");
        }
    }
    out.push('\n');
    let natural: Vec<usize> = (0..p.variables.len()).collect();
    if appearance_order(doc) != natural {
        out.push_str("variables:");
        for v in &p.variables {
            out.push(' ');
            out.push_str(v);
        }
        out.push('\n');
    }
    let mut obj = Terms::new();
    for (j, c) in &p.objective {
        obj.push(c, &p.variables[*j]);
    }
    for q in &doc.quadratic {
        obj.push(&q.coef, &format!("{} * {}", p.variables[q.a], p.variables[q.b]));
    }
    if !doc.constant.is_zero() {
        obj.push(&doc.constant, "");
    }
    let _ = writeln!(out, "maximize: {}", obj.finish());
    out.push_str("subject to:\n");
    for c in &p.constraints {
        let mut row = Terms::new();
        for (j, a) in &c.coeffs {
            row.push(a, &p.variables[*j]);
        }
        if !c.rhs.is_zero() {
            row.push(&-c.rhs.clone(), "");
        }
        let _ = writeln!(out, "{}: {} {} 0", c.name, row.finish(), c.relation.symbol());
    }
    out.push_str("bounds: all >= 0\n");
    for (j, v) in p.variables.iter().enumerate() {
        if !p.lower[j].is_zero() {
            let _ = writeln!(out, "{v} >= {}", p.lower[j]);
        }
        if let Some(u) = &p.upper[j] {
            let _ = writeln!(out, "{v} <= {u}");
        }
    }
    out.push_str("end\n");
    Ok(out)
}

/// Writes a linear program.
pub fn write_lp(p: &LpProblem) -> Result<String, FormatError> {
    write_document(&Document::linear(p.clone()))
}

struct Parser {
    vars: Vec<String>,
    index: HashMap<String, usize>,
    fixed: bool,
}

enum Term {
    Constant(Rational),
    Linear(Rational, usize),
    Quad(Rational, usize, usize),
}

impl Parser {
    fn var(&mut self, name: &str, line: usize) -> Result<usize, FormatError> {
        if let Some(&j) = self.index.get(name) {
            return Ok(j);
        }
        if self.fixed || !valid_name(name) {
            return Err(FormatError::Syntax { line, message: format!("unknown variable `{name}`") });
        }
        self.vars.push(name.to_string());
        self.index.insert(name.to_string(), self.vars.len() - 1);
        Ok(self.vars.len() - 1)
    }

    fn expr(&mut self, tokens: &[&str], line: usize) -> Result<Vec<Term>, FormatError> {
        let err = |message: String| FormatError::Syntax { line, message };
        let mut terms = Vec::new();
        let mut i = 0;
        if tokens == ["0"] {
            return Ok(terms);
        }
        while i < tokens.len() {
            let mut sign = Rational::one();
            if tokens[i] == "+" || tokens[i] == "-" {
                if tokens[i] == "-" {
                    sign = -sign;
                }
                i += 1;
            } else if !terms.is_empty() {
                return Err(err(format!("expected `+` or `-`, found `{}`", tokens[i])));
            }
            let Some(&tok) = tokens.get(i) else { return Err(err("dangling sign".into())) };
            let mut coef = sign;
            let mut has_coef = false;
            if let Ok(c) = parse_rational(tok) {
                coef *= c;
                has_coef = true;
                i += 1;
            }
            match tokens.get(i) {
                Some(&name) if name != "+" && name != "-" => {
                    let a = self.var(name, line)?;
                    i += 1;
                    if tokens.get(i) == Some(&"*") {
                        let Some(&other) = tokens.get(i + 1) else { return Err(err("dangling `*`".into())) };
                        let b = self.var(other, line)?;
                        i += 2;
                        terms.push(Term::Quad(coef, a, b));
                    } else {
                        terms.push(Term::Linear(coef, a));
                    }
                }
                _ if has_coef => terms.push(Term::Constant(coef)),
                _ => return Err(err("missing term".into())),
            }
        }
        Ok(terms)
    }
}

/// Parses a document produced by [`write_document`] (or written by hand).
pub fn parse_document(text: &str) -> Result<Document, FormatError> {
    let syntax = |line: usize, message: &str| FormatError::Syntax { line, message: message.to_string() };
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim())).filter(|(_, l)| !l.is_empty());
    let (ln, head) = lines.next().ok_or_else(|| syntax(1, "empty document"))?;
    let head_tokens: Vec<&str> = head.split_whitespace().collect();
    let kind = match head_tokens.as_slice() {
        ["\\", "riskmdp", "lp", "v1", ..] => DocumentKind::Lp,
        ["\\", "riskmdp", "qp", "v1", ..] => DocumentKind::Qp,
        _ => return Err(syntax(ln, "expected `\\ riskmdp lp v1` or `\\ riskmdp qp v1` header")),
    };
    let mut meta = Vec::new();
    for tok in &head_tokens[4..] {
        let (k, v) = tok.split_once('=').ok_or_else(|| syntax(ln, "header metadata must be key=value"))?;
        meta.push((k.to_string(), v.to_string()));
    }
    let mut parser = Parser { vars: Vec::new(), index: HashMap::new(), fixed: false };
    let (mut ln, mut line) = lines.next().ok_or_else(|| syntax(ln, "missing objective"))?;
    if let Some(rest) = line.strip_prefix("variables:") {
        for name in rest.split_whitespace() {
            if !valid_name(name) || parser.index.contains_key(name) {
                return Err(syntax(ln, &format!("bad variable declaration `{name}`")));
            }
            parser.var(name, ln)?;
        }
        parser.fixed = true;
        (ln, line) = lines.next().ok_or_else(|| syntax(ln, "missing objective"))?;
    }
    let rest = line.strip_prefix("maximize:").ok_or_else(|| syntax(ln, "expected `maximize:`"))?;
    let tokens: Vec<&str> = rest.split_whitespace().collect();
    let mut objective = Vec::new();
    let mut quadratic = Vec::new();
    let mut constant = Rational::zero();
    for t in parser.expr(&tokens, ln)? {
        match t {
            Term::Constant(c) => constant += c,
            Term::Linear(c, j) => objective.push((j, c)),
            Term::Quad(coef, a, b) => quadratic.push(QuadTerm { coef, a, b }),
        }
    }
    if kind == DocumentKind::Lp && !quadratic.is_empty() {
        return Err(syntax(ln, "quadratic term in an lp document"));
    }
    let (ln, line) = lines.next().ok_or_else(|| syntax(ln, "missing `subject to:`"))?;
    if line != "subject to:" {
        return Err(syntax(ln, "expected `subject to:`"));
    }
    let mut constraints = Vec::new();
    let mut bound_lines = Vec::new();
    let mut in_bounds = false;
    let mut ended = false;
    for (ln, line) in lines.by_ref() {
        if line == "end" {
            ended = true;
            break;
        }
        if !in_bounds && line == "bounds: all >= 0" {
            in_bounds = true;
            continue;
        }
        if in_bounds {
            bound_lines.push((ln, line));
            continue;
        }
        let (name, body) = line.split_once(':').ok_or_else(|| syntax(ln, "expected `name: expr rel 0`"))?;
        let tokens: Vec<&str> = body.split_whitespace().collect();
        let n = tokens.len();
        if n < 3 || tokens[n - 1] != "0" {
            return Err(syntax(ln, "row must end with `rel 0`"));
        }
        let relation = match tokens[n - 2] {
            "<=" => Relation::Le,
            ">=" => Relation::Ge,
            "=" => Relation::Eq,
            _ => return Err(syntax(ln, "expected relation `<=`, `>=` or `=`")),
        };
        let mut coeffs = Vec::new();
        let mut rhs = Rational::zero();
        for t in parser.expr(&tokens[..n - 2], ln)? {
            match t {
                Term::Constant(c) => rhs -= c,
                Term::Linear(c, j) => coeffs.push((j, c)),
                Term::Quad(..) => return Err(syntax(ln, "quadratic term in a constraint")),
            }
        }
        constraints.push(Constraint { name: name.trim().to_string(), coeffs, relation, rhs });
    }
    if !ended {
        return Err(syntax(text.lines().count(), "missing `end`"));
    }
    if let Some((ln, _)) = lines.next() {
        return Err(syntax(ln, "content after `end`"));
    }
    let mut bounds = Vec::new();
    for (ln, line) in bound_lines {
        let tokens: Vec<&str> = line.split_whitespace().collect();
        let [name, rel, value] = tokens.as_slice() else {
            return Err(syntax(ln, "expected `var >= value` or `var <= value`"));
        };
        let j = parser.var(name, ln)?;
        let value = parse_rational(value).map_err(|e| syntax(ln, &e.to_string()))?;
        match *rel {
            ">=" => bounds.push((j, true, value)),
            "<=" => bounds.push((j, false, value)),
            _ => return Err(syntax(ln, "bound relation must be `>=` or `<=`")),
        }
    }
    let n = parser.vars.len();
    let mut problem = LpProblem {
        variables: parser.vars,
        objective,
        constraints,
        lower: vec![Rational::zero(); n],
        upper: vec![None; n],
    };
    for (j, is_lower, value) in bounds {
        if is_lower {
            problem.lower[j] = value;
        } else {
            problem.upper[j] = Some(value);
        }
    }
    Ok(Document { kind, meta, problem, quadratic, constant })
}

/// Parses a linear document into its problem.
pub fn parse_lp(text: &str) -> Result<LpProblem, FormatError> {
    let doc = parse_document(text)?;
    if !doc.quadratic.is_empty() {
        return Err(FormatError::NotLinear);
    }
    Ok(doc.problem)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rational::{int, ratio};

    fn sample() -> LpProblem {
        let mut p = LpProblem::new();
        let x = p.add_variable("x");
        let y = p.add_variable("y_s/alpha");
        p.objective = vec![(x, int(3)), (y, ratio(-1, 2))];
        p.add_constraint(vec![(x, int(1)), (y, int(1))], Relation::Le, int(4));
        p.add_constraint(vec![(y, int(-2))], Relation::Ge, ratio(-7, 3));
        p.add_constraint(vec![], Relation::Eq, int(0));
        p.upper[x] = Some(int(3));
        p.lower[y] = ratio(1, 2);
        p
    }

    #[test]
    fn writes_expected_text() {
        let text = write_lp(&sample()).unwrap();
        let expected = "\\ riskmdp lp v1\n\
            maximize: 3 x - 1/2 y_s/alpha\n\
            subject to:\n\
            c1: x + y_s/alpha - 4 <= 0\n\
            c2: - 2 y_s/alpha + 7/3 >= 0\n\
            c3: 0 = 0\n\
            bounds: all >= 0\n\
            x <= 3\n\
            y_s/alpha >= 1/2\n\
            end\n";
        assert_eq!(text, expected);
    }

    #[test]
    fn lp_round_trip() {
        let p = sample();
        assert_eq!(parse_lp(&write_lp(&p).unwrap()).unwrap(), p);
    }

    #[test]
    fn variables_line_keeps_unused_and_reordered() {
        let mut p = LpProblem::new();
        let a = p.add_variable("a");
        let b = p.add_variable("b");
        p.add_variable("unused");
        p.objective = vec![(b, int(1)), (a, int(1))];
        let text = write_lp(&p).unwrap();
        assert!(text.contains("variables: a b unused\n"));
        assert_eq!(parse_lp(&text).unwrap(), p);
    }

    #[test]
    fn qp_round_trip_with_meta() {
        let mut p = LpProblem::new();
        let e = p.add_variable("e");
        let x = p.add_variable("x_goal_0_tau");
        let g = p.add_variable("g_0");
        p.objective = vec![(e, int(1))];
        p.add_constraint(vec![(x, int(1))], Relation::Eq, int(1));
        p.add_constraint(vec![(g, int(1)), (e, int(1))], Relation::Ge, int(0));
        let doc = Document {
            kind: DocumentKind::Qp,
            meta: vec![("lambda".into(), "2/5".into()), ("k".into(), "2".into())],
            problem: p,
            quadratic: vec![QuadTerm { coef: ratio(-2, 5), a: x, b: g }],
            constant: int(0),
        };
        let text = write_document(&doc).unwrap();
        assert!(text.starts_with("\\ riskmdp qp v1  lambda=2/5 k=2\n"));
        assert!(text.contains("maximize: e - 2/5 x_goal_0_tau * g_0\n"));
        assert_eq!(parse_document(&text).unwrap(), doc);
        assert_eq!(parse_document(&text).unwrap().meta_value("k"), Some("2"));
    }

    #[test]
    fn objective_constant_round_trip() {
        let mut p = LpProblem::new();
        let x = p.add_variable("x");
        p.objective = vec![(x, int(-2))];
        let mut doc = Document::linear(p);
        doc.constant = ratio(5, 4);
        let text = write_document(&doc).unwrap();
        assert!(text.contains("maximize: - 2 x + 5/4\n"));
        assert_eq!(parse_document(&text).unwrap(), doc);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(matches!(parse_lp(""), Err(FormatError::Syntax { line: 1, .. })));
        assert!(parse_lp("\\ riskmdp lp v1\nmaximize: x\nsubject to:\nc1: x <= 1\nend\n").is_err());
        assert!(parse_lp("\\ riskmdp lp v1\nmaximize: x * x\nsubject to:\nend\n").is_err());
        assert!(parse_lp("\\ riskmdp lp v1\nmaximize: x\nsubject to:\nbounds: all >= 0\n").is_err());
        let mut p = LpProblem::new();
        p.add_variable("3/4");
        assert_eq!(write_lp(&p), Err(FormatError::BadName("3/4".into())));
    }
}
