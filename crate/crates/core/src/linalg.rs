//! Exact linear solves over the rationals.
//!
//! Dense systems use fraction-free (Bareiss) elimination on integer-scaled
//! rows with partial pivoting by magnitude. Sparse absorbing systems of the
//! form `v = r + P v` are split into strongly connected components and solved
//! component by component, sinks first.

use crate::graph::strongly_connected_components;
use crate::rational::Rational;
use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::{One, Signed, Zero};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LinalgError {
    #[error("linear system is singular")]
    Singular,
    #[error("dimension mismatch: {0}")]
    Dimension(String),
}

/// Solves `A x = b` exactly. `a` must be square with `b.len()` rows.
pub fn solve_dense(a: &[Vec<Rational>], b: &[Rational]) -> Result<Vec<Rational>, LinalgError> {
    let n = a.len();
    if b.len() != n || a.iter().any(|row| row.len() != n) {
        return Err(LinalgError::Dimension(format!("{}x? system with {} right-hand sides", n, b.len())));
    }
    if n == 0 {
        return Ok(Vec::new());
    }
    // Scale each row to integers.
    let mut m: Vec<Vec<BigInt>> = Vec::with_capacity(n);
    for (row, rhs) in a.iter().zip(b) {
        let scale = row.iter().chain(std::iter::once(rhs)).fold(BigInt::one(), |acc, r| acc.lcm(r.denom()));
        let scaled = row.iter().chain(std::iter::once(rhs)).map(|r| r.numer() * (&scale / r.denom())).collect();
        m.push(scaled);
    }
    let mut prev = BigInt::one();
    for k in 0..n {
        let pivot = (k..n)
            .filter(|&i| !m[i][k].is_zero())
            .max_by(|&i, &j| m[i][k].abs().cmp(&m[j][k].abs()).then(j.cmp(&i)))
            .ok_or(LinalgError::Singular)?;
        m.swap(k, pivot);
        let (upper, lower) = m.split_at_mut(k + 1);
        let pivot_row = &upper[k];
        for row in lower.iter_mut() {
            let factor = row[k].clone();
            for j in k + 1..=n {
                let value = &row[j] * &pivot_row[k] - &factor * &pivot_row[j];
                row[j] = value / &prev;
            }
            row[k] = BigInt::zero();
        }
        prev = m[k][k].clone();
    }
    let mut x = vec![Rational::zero(); n];
    for i in (0..n).rev() {
        let mut acc = Rational::from_integer(m[i][n].clone());
        for j in i + 1..n {
            if !m[i][j].is_zero() {
                acc -= Rational::from_integer(m[i][j].clone()) * &x[j];
            }
        }
        x[i] = acc / Rational::from_integer(m[i][i].clone());
    }
    Ok(x)
}

/// Solves `v = rhs + P v` where `rows[s]` lists `(t, P(s,t))`.
///
/// States with an empty row take the value `rhs[s]`. The system must be
/// non-singular on every cyclic component (true for transient chains).
pub fn solve_absorbing(rows: &[Vec<(usize, Rational)>], rhs: &[Rational]) -> Result<Vec<Rational>, LinalgError> {
    let n = rows.len();
    if rhs.len() != n {
        return Err(LinalgError::Dimension(format!("{} rows, {} right-hand sides", n, rhs.len())));
    }
    let adj: Vec<Vec<usize>> = rows.iter().map(|r| r.iter().map(|(t, _)| *t).collect()).collect();
    let mut value: Vec<Option<Rational>> = vec![None; n];
    for comp in strongly_connected_components(&adj) {
        if comp.len() == 1 && !adj[comp[0]].contains(&comp[0]) {
            let s = comp[0];
            let mut acc = rhs[s].clone();
            for (t, p) in &rows[s] {
                acc += p * value[*t].as_ref().expect("successor solved first");
            }
            value[s] = Some(acc);
            continue;
        }
        let local: std::collections::HashMap<usize, usize> = comp.iter().enumerate().map(|(i, &s)| (s, i)).collect();
        let size = comp.len();
        let mut a = vec![vec![Rational::zero(); size]; size];
        let mut b = vec![Rational::zero(); size];
        for (i, &s) in comp.iter().enumerate() {
            a[i][i] += Rational::one();
            b[i] = rhs[s].clone();
            for (t, p) in &rows[s] {
                match local.get(t) {
                    Some(&j) => a[i][j] -= p,
                    None => b[i] += p * value[*t].as_ref().expect("successor solved first"),
                }
            }
        }
        let x = solve_dense(&a, &b)?;
        for (i, &s) in comp.iter().enumerate() {
            value[s] = Some(x[i].clone());
        }
    }
    Ok(value.into_iter().map(|v| v.expect("every state solved")).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rational::{int, ratio};

    #[test]
    fn dense_solve_with_pivoting() {
        let a = vec![vec![int(0), int(2)], vec![int(3), ratio(1, 2)]];
        let b = vec![int(4), int(7)];
        let x = solve_dense(&a, &b).unwrap();
        assert_eq!(x, vec![int(2), int(2)]);
    }

    #[test]
    fn singular_detected() {
        let a = vec![vec![int(1), int(2)], vec![int(2), int(4)]];
        assert_eq!(solve_dense(&a, &[int(1), int(2)]), Err(LinalgError::Singular));
    }

    #[test]
    fn absorbing_geometric_loop() {
        // s0 loops with 1/2 and collects reward 1 per step: value 2.
        let rows = vec![vec![(0, ratio(1, 2)), (1, ratio(1, 2))], vec![]];
        let v = solve_absorbing(&rows, &[int(1), int(0)]).unwrap();
        assert_eq!(v, vec![int(2), int(0)]);
    }

    #[test]
    fn random_systems_round_trip() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for _ in 0..30 {
            let n = rng.gen_range(1..6);
            let a: Vec<Vec<Rational>> =
                (0..n).map(|_| (0..n).map(|_| ratio(rng.gen_range(-5..6), rng.gen_range(1..4))).collect()).collect();
            let x: Vec<Rational> = (0..n).map(|_| ratio(rng.gen_range(-9..10), rng.gen_range(1..5))).collect();
            let b: Vec<Rational> = a.iter().map(|row| row.iter().zip(&x).map(|(p, q)| p * q).sum()).collect();
            if let Ok(sol) = solve_dense(&a, &b) {
                let back: Vec<Rational> = a.iter().map(|row| row.iter().zip(&sol).map(|(p, q)| p * q).sum()).collect();
                assert_eq!(back, b);
            }
        }
    }
}
