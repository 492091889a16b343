//! Expected total reward: exact policy iteration and float value iteration.
//!
//! Both solvers process the strongly connected components of the model graph
//! in reverse topological order, so every component only depends on values
//! that are already final. Rewards may be arbitrary rationals (negative ones
//! included) as long as the model has no end components.

use crate::graph::strongly_connected_components;
use crate::linalg::{solve_absorbing, solve_dense, LinalgError};
use crate::model::{Mdp, MemorylessScheduler, ModelError, Scheduler};
use crate::rational::{to_f64, Rational};
use num_traits::{One, Signed, Zero};
use std::cmp::Ordering;
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Max,
    Min,
}

impl Direction {
    /// True when `a` is strictly better than `b`.
    fn better<T: PartialOrd>(self, a: &T, b: &T) -> bool {
        match self {
            Direction::Max => a > b,
            Direction::Min => a < b,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ExpectError {
    #[error("policy at `{0}` never reaches a trap; the model has an end component")]
    Improper(String),
    #[error("value iteration did not converge within {0} sweeps")]
    NonConvergence(usize),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

/// Optimal values and a memoryless deterministic policy.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ValueTable {
    pub values: Vec<Rational>,
    /// Choice index per non-trap state.
    pub policy: Vec<Option<usize>>,
    pub direction: Direction,
}

impl ValueTable {
    pub fn value(&self, s: usize) -> &Rational {
        &self.values[s]
    }

    pub fn scheduler(&self, m: &Mdp) -> MemorylessScheduler {
        MemorylessScheduler::from_policy(m, &self.policy)
    }
}

/// Choice indices of every state sorted by action name.
fn lexicographic_orders(m: &Mdp) -> Vec<Vec<usize>> {
    (0..m.num_states())
        .map(|s| {
            let mut order: Vec<usize> = (0..m.choices(s).len()).collect();
            order.sort_by(|&a, &b| m.choices(s)[a].action.cmp(&m.choices(s)[b].action));
            order
        })
        .collect()
}

fn q_value(m: &Mdp, s: usize, c: usize, values: &[Rational]) -> Rational {
    let ch = &m.choices(s)[c];
    let mut q = ch.reward.clone();
    for (t, p) in &ch.successors {
        if !values[*t].is_zero() {
            q += p * &values[*t];
        }
    }
    q
}

/// Lexicographically smallest optimal choice under `values`.
fn best_choice(m: &Mdp, s: usize, order: &[usize], values: &[Rational], dir: Direction) -> (usize, Rational) {
    let mut best: Option<(usize, Rational)> = None;
    for &c in order {
        let q = q_value(m, s, c, values);
        if best.as_ref().map_or(true, |(_, b)| dir.better(&q, b)) {
            best = Some((c, q));
        }
    }
    best.expect("non-trap state")
}

/// `E^max_{M,s}(rew)` for every state by exact policy iteration.
pub fn max_expected_reward(m: &Mdp) -> Result<ValueTable, ExpectError> {
    optimize(m, Direction::Max)
}

/// `E^min_{M,s}(rew)` for every state by exact policy iteration.
pub fn min_expected_reward(m: &Mdp) -> Result<ValueTable, ExpectError> {
    optimize(m, Direction::Min)
}

/// Exact policy iteration per strongly connected component.
///
/// The returned policy picks, at each state, the lexicographically smallest
/// action attaining the optimal value.
pub fn optimize(m: &Mdp, dir: Direction) -> Result<ValueTable, ExpectError> {
    let n = m.num_states();
    let orders = lexicographic_orders(m);
    let mut values = vec![Rational::zero(); n];
    let mut policy: Vec<Option<usize>> = vec![None; n];
    let mut local = vec![usize::MAX; n];
    for comp in strongly_connected_components(&m.adjacency()) {
        if comp.len() == 1 && m.is_trap(comp[0]) {
            continue;
        }
        for (i, &s) in comp.iter().enumerate() {
            local[s] = i;
        }
        // Initial policy: greedy on values outside the component.
        for &s in &comp {
            policy[s] = Some(best_choice(m, s, &orders[s], &values, dir).0);
        }
        loop {
            evaluate_component(m, &comp, &local, &policy, &mut values)?;
            let mut changed = false;
            for &s in &comp {
                let current = q_value(m, s, policy[s].unwrap(), &values);
                let (c, q) = best_choice(m, s, &orders[s], &values, dir);
                if dir.better(&q, &current) {
                    policy[s] = Some(c);
                    changed = true;
                }
            }
            if !changed {
                break;
            }
        }
        for &s in &comp {
            let first = orders[s].iter().copied().find(|&c| q_value(m, s, c, &values) == values[s]);
            policy[s] = first.or(policy[s]);
        }
        for &s in &comp {
            local[s] = usize::MAX;
        }
    }
    Ok(ValueTable { values, policy, direction: dir })
}

fn evaluate_component(
    m: &Mdp,
    comp: &[usize],
    local: &[usize],
    policy: &[Option<usize>],
    values: &mut [Rational],
) -> Result<(), ExpectError> {
    let k = comp.len();
    let mut a = vec![vec![Rational::zero(); k]; k];
    let mut b = vec![Rational::zero(); k];
    for (i, &s) in comp.iter().enumerate() {
        let ch = &m.choices(s)[policy[s].expect("non-trap")];
        a[i][i] += Rational::one();
        b[i] = ch.reward.clone();
        for (t, p) in &ch.successors {
            if local[*t] != usize::MAX {
                a[i][local[*t]] -= p;
            } else {
                b[i] += p * &values[*t];
            }
        }
    }
    let sol = if k == 1 {
        if a[0][0].is_zero() {
            return Err(ExpectError::Improper(m.state_name(comp[0]).to_string()));
        }
        vec![&b[0] / &a[0][0]]
    } else {
        solve_dense(&a, &b).map_err(|e| match e {
            LinalgError::Singular => ExpectError::Improper(m.state_name(comp[0]).to_string()),
            other => ExpectError::Linalg(other),
        })?
    };
    for (i, &s) in comp.iter().enumerate() {
        values[s] = sol[i].clone();
    }
    Ok(())
}

/// Largest absolute Bellman residual of `t` (0 for an exact optimum).
pub fn bellman_residual(m: &Mdp, t: &ValueTable) -> Rational {
    let mut worst = Rational::zero();
    for s in 0..m.num_states() {
        let r = if m.is_trap(s) {
            t.values[s].abs()
        } else {
            let orders: Vec<usize> = (0..m.choices(s).len()).collect();
            let (_, q) = best_choice(m, s, &orders, &t.values, t.direction);
            (q - &t.values[s]).abs()
        };
        if r > worst {
            worst = r;
        }
    }
    worst
}

/// Per-state chain rows and expected one-step rewards of a memoryless scheduler.
fn mixed_rows(
    m: &Mdp,
    sched: &MemorylessScheduler,
) -> Result<(Vec<Vec<(usize, Rational)>>, Vec<Rational>), ExpectError> {
    let resolved = Scheduler::Memoryless(sched.clone()).resolve(m)?;
    let n = m.num_states();
    let mut rows = vec![Vec::new(); n];
    let mut rew = vec![Rational::zero(); n];
    for s in 0..n {
        let dist = resolved.decide(m, s, &Rational::zero(), 0)?;
        let mut row: Vec<(usize, Rational)> = Vec::new();
        for (c, pa) in dist.iter() {
            let ch = &m.choices(s)[*c];
            rew[s] += pa * &ch.reward;
            for (t, p) in &ch.successors {
                let q = pa * p;
                match row.iter_mut().find(|(u, _)| u == t) {
                    Some(e) => e.1 += q,
                    None => row.push((*t, q)),
                }
            }
        }
        rows[s] = row;
    }
    Ok((rows, rew))
}

/// Expected total reward from every state under a memoryless randomized scheduler.
pub fn evaluate_memoryless(m: &Mdp, sched: &MemorylessScheduler) -> Result<Vec<Rational>, ExpectError> {
    let (rows, rew) = mixed_rows(m, sched)?;
    solve_absorbing(&rows, &rew).map_err(|e| match e {
        LinalgError::Singular => ExpectError::Improper(m.state_name(m.initial()).to_string()),
        other => ExpectError::Linalg(other),
    })
}

/// Expected total reward of a deterministic policy.
pub fn evaluate_policy(m: &Mdp, policy: &[Option<usize>]) -> Result<Vec<Rational>, ExpectError> {
    evaluate_memoryless(m, &MemorylessScheduler::from_policy(m, policy))
}

/// Probability of eventually reaching `target` from every state under `sched`.
pub fn reach_probability(m: &Mdp, sched: &MemorylessScheduler, target: usize) -> Result<Vec<Rational>, ExpectError> {
    let (mut rows, _) = mixed_rows(m, sched)?;
    rows[target].clear();
    let mut rhs = vec![Rational::zero(); m.num_states()];
    rhs[target] = Rational::one();
    // States that cannot reach the target with positive probability keep value 0;
    // drop them so the remaining system is absorbing.
    let mut rev: Vec<Vec<usize>> = vec![Vec::new(); rows.len()];
    for (s, row) in rows.iter().enumerate() {
        for (t, _) in row {
            rev[*t].push(s);
        }
    }
    let mut can = vec![false; rows.len()];
    let mut todo = vec![target];
    can[target] = true;
    while let Some(t) = todo.pop() {
        for &s in &rev[t] {
            if !can[s] {
                can[s] = true;
                todo.push(s);
            }
        }
    }
    for (s, row) in rows.iter_mut().enumerate() {
        if !can[s] {
            row.clear();
        } else {
            row.retain(|(t, _)| can[*t]);
        }
    }
    Ok(solve_absorbing(&rows, &rhs)?)
}

/// Float-valued optimum from [`value_iteration`].
#[derive(Debug, Clone, PartialEq)]
pub struct FloatValueTable {
    pub values: Vec<f64>,
    pub policy: Vec<Option<usize>>,
    pub direction: Direction,
    pub sweeps: usize,
}

/// Gauss–Seidel value iteration per strongly connected component.
///
/// A component is done when one sweep changes no value by more than
/// `tolerance`; `max_sweeps` bounds the total number of sweeps.
pub fn value_iteration(
    m: &Mdp,
    dir: Direction,
    tolerance: f64,
    max_sweeps: usize,
) -> Result<FloatValueTable, ExpectError> {
    assert!(tolerance > 0.0, "tolerance must be positive");
    let n = m.num_states();
    let orders = lexicographic_orders(m);
    let probs: Vec<Vec<(f64, Vec<(usize, f64)>)>> = (0..n)
        .map(|s| {
            m.choices(s)
                .iter()
                .map(|c| (to_f64(&c.reward), c.successors.iter().map(|(t, p)| (*t, to_f64(p))).collect()))
                .collect()
        })
        .collect();
    let q = |values: &[f64], s: usize, c: usize| {
        let (r, succ) = &probs[s][c];
        r + succ.iter().map(|(t, p)| p * values[*t]).sum::<f64>()
    };
    let mut values = vec![0.0f64; n];
    let mut sweeps = 0usize;
    for comp in strongly_connected_components(&m.adjacency()) {
        if comp.len() == 1 && m.is_trap(comp[0]) {
            continue;
        }
        loop {
            if sweeps >= max_sweeps {
                return Err(ExpectError::NonConvergence(max_sweeps));
            }
            sweeps += 1;
            let mut diff = 0.0f64;
            for &s in &comp {
                let best = orders[s]
                    .iter()
                    .map(|&c| q(&values, s, c))
                    .reduce(|a, b| if dir.better(&b, &a) { b } else { a })
                    .expect("non-trap");
                diff = diff.max((best - values[s]).abs());
                values[s] = best;
            }
            if diff <= tolerance {
                break;
            }
        }
    }
    let policy = (0..n)
        .map(|s| {
            if m.is_trap(s) {
                return None;
            }
            let best = orders[s]
                .iter()
                .map(|&c| q(&values, s, c))
                .reduce(|a, b| if dir.better(&b, &a) { b } else { a })
                .expect("non-trap");
            orders[s].iter().copied().find(|&c| (q(&values, s, c) - best).abs() <= tolerance)
        })
        .collect();
    Ok(FloatValueTable { values, policy, direction: dir, sweeps })
}

/// Compares two exact values in the given direction (`Greater` = better).
pub fn compare(dir: Direction, a: &Rational, b: &Rational) -> Ordering {
    match dir {
        Direction::Max => a.cmp(b),
        Direction::Min => b.cmp(a),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::model::MdpBuilder;
    use crate::rational::{int, one, ratio};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn two_branch_extremes() {
        let m = fixtures::two_branch();
        let max = max_expected_reward(&m).unwrap();
        assert_eq!(max.values[0], ratio(5, 4));
        assert_eq!(m.choices(0)[max.policy[0].unwrap()].action, "beta");
        let min = min_expected_reward(&m).unwrap();
        assert_eq!(min.values[0], ratio(3, 4));
        assert_eq!(m.choices(0)[min.policy[0].unwrap()].action, "alpha");
        assert!(bellman_residual(&m, &max).is_zero());
    }

    #[test]
    fn geometric_loop_loop_values() {
        for p in [ratio(1, 4), ratio(1, 3), ratio(1, 7)] {
            let m = fixtures::geometric_loop(&p);
            let max = max_expected_reward(&m).unwrap();
            assert_eq!(max.values[m.initial()], int(3) * &p);
            let dec = m.state_index("s_dec").unwrap();
            assert_eq!(m.choices(dec)[max.policy[dec].unwrap()].action, "alpha");
            let min = min_expected_reward(&m).unwrap();
            assert_eq!(min.values[m.initial()], int(2) * &p);
            assert_eq!(m.choices(dec)[min.policy[dec].unwrap()].action, "beta");
        }
    }

    #[test]
    fn safe_or_gamble_and_trap() {
        let max = max_expected_reward(&fixtures::safe_or_gamble()).unwrap();
        assert_eq!(max.values[0], int(50));
        let mut b = MdpBuilder::new();
        b.initial("goal");
        b.goal("goal");
        let t = min_expected_reward(&b.build().unwrap()).unwrap();
        assert_eq!(t.values, vec![int(0)]);
    }

    #[test]
    fn multi_state_component() {
        let mut b = MdpBuilder::new();
        b.initial("a");
        b.goal("goal");
        b.action("a", "x", int(1), &[("b", ratio(1, 2)), ("goal", ratio(1, 2))]);
        b.action("a", "y", int(0), &[("goal", one())]);
        b.action("b", "x", int(2), &[("a", ratio(2, 3)), ("goal", ratio(1, 3))]);
        let m = b.build().unwrap();
        let t = max_expected_reward(&m).unwrap();
        // v_a = 1 + v_b/2, v_b = 2 + 2/3 v_a  => v_a = 3
        assert_eq!(t.values[0], int(3));
        assert_eq!(t.values[m.state_index("b").unwrap()], int(4));
        let vi = value_iteration(&m, Direction::Max, 1e-13, 100_000).unwrap();
        assert!((vi.values[0] - 3.0).abs() < 1e-10);
    }

    #[test]
    fn value_iteration_matches_exact() {
        let m = fixtures::split_loop(101);
        let exact = max_expected_reward(&m).unwrap();
        let vi = value_iteration(&m, Direction::Max, 1e-12, 1_000_000).unwrap();
        assert!((vi.values[0] - to_f64(&exact.values[0])).abs() <= 1e-9);
        let small = value_iteration(&fixtures::two_branch(), Direction::Max, 1e-12, 100).unwrap();
        assert!((small.values[0] - 1.25).abs() <= 1e-12);
    }

    #[test]
    fn negative_rewards() {
        let mut b = MdpBuilder::new();
        b.initial("a");
        b.goal("goal");
        b.action("a", "x", int(-1), &[("a", ratio(1, 2)), ("goal", ratio(1, 2))]);
        b.action("a", "y", ratio(-3, 2), &[("goal", one())]);
        let t = max_expected_reward(&b.build().unwrap()).unwrap();
        assert_eq!(t.values[0], ratio(-3, 2));
        assert_eq!(t.policy[0], Some(1));
    }

    #[test]
    fn policies_reproduce_values_and_dominate_random_schedulers() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for m in [fixtures::two_branch(), fixtures::geometric_loop(&ratio(1, 3)), fixtures::ladder(4)] {
            let t = max_expected_reward(&m).unwrap();
            assert_eq!(evaluate_policy(&m, &t.policy).unwrap(), t.values);
            for _ in 0..20 {
                let s = fixtures::random_memoryless(&mut rng, &m, 6);
                let v = evaluate_memoryless(&m, &s).unwrap();
                assert!(v[m.initial()] <= t.values[m.initial()]);
                let reach = reach_probability(&m, &s, m.goal().unwrap()).unwrap();
                assert_eq!(reach[m.initial()], one());
            }
        }
    }

    #[test]
    fn end_component_is_reported() {
        let mut b = MdpBuilder::new();
        b.initial("a");
        b.goal("goal");
        b.action("a", "stay", int(0), &[("a", one())]);
        b.action("a", "go", int(1), &[("goal", one())]);
        let m = b.build().unwrap();
        assert_eq!(max_expected_reward(&m).unwrap().values[0], int(1));
        assert!(matches!(min_expected_reward(&m), Err(ExpectError::Improper(_))));
    }
}
