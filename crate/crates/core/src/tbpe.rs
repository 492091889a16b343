//! Threshold-based penalized expectation.
//!
//! For a penalty `m` that is the identity (up to a constant) from the
//! threshold `t` on, `E^max(m ∘ rew)` is the maximal expected reward of the
//! counter product M′: states `(s, w)` with `w ∈ {0..⌈t⌉}`, where the counter
//! stops at `⌈t⌉` once the accumulated reward reaches `t`, and action rewards
//! `m(w + r) − m(w)`. A fresh initial state pays `m(0)`.

use crate::expect::{max_expected_reward, value_iteration, Direction, ExpectError};
use crate::model::{Chain, Choice, FiniteMemoryScheduler, Mdp, MemoryUpdate, ModelError};
use crate::rational::{ceil, int, one, parse_rational, Rational};
use num_traits::{Signed, ToPrimitive, Zero};
use std::collections::BTreeMap;
use thiserror::Error;

/// Name of the action of the fresh initial state.
pub const INIT_ACTION: &str = "tau";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PenaltyError {
    #[error("threshold must be non-negative, got {0}")]
    NegativeThreshold(Rational),
    #[error("lambda must be positive, got {0}")]
    NonPositiveLambda(Rational),
    #[error("breakpoints: {0}")]
    Breakpoints(String),
    #[error("penalty is not the identity at {x} (value {value}); m(x) = x is required from the threshold on")]
    NotIdentity { x: Rational, value: Rational },
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TbpeError {
    #[error(transparent)]
    Penalty(#[from] PenaltyError),
    #[error(transparent)]
    Expect(#[from] ExpectError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("threshold {0} is too large for the counter product")]
    ThresholdTooLarge(Rational),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PenaltyShape {
    /// `x − λ·max(t − x, 0)`.
    Tbp { lambda: Rational },
    /// `2x` below `t`, `x + t` from `t` on.
    Crinkle2,
    /// Linear interpolation of breakpoints below `t`, identity from `t` on.
    Custom { points: Vec<(Rational, Rational)> },
}

/// A penalty function `m` with threshold `t`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PenaltyFunction {
    pub threshold: Rational,
    pub shape: PenaltyShape,
}

impl PenaltyFunction {
    pub fn tbp(lambda: Rational, threshold: Rational) -> Result<Self, PenaltyError> {
        check_threshold(&threshold)?;
        if !lambda.is_positive() {
            return Err(PenaltyError::NonPositiveLambda(lambda));
        }
        Ok(PenaltyFunction { threshold, shape: PenaltyShape::Tbp { lambda } })
    }

    pub fn crinkle2(threshold: Rational) -> Result<Self, PenaltyError> {
        check_threshold(&threshold)?;
        Ok(PenaltyFunction { threshold, shape: PenaltyShape::Crinkle2 })
    }

    /// Piecewise-linear penalty through `points`, which must start at `x = 0`,
    /// be strictly increasing in `x`, reach at least `t`, and satisfy
    /// `m(x) = x` at `t`, at `⌈t⌉` and at every breakpoint from `t` on.
    pub fn custom(threshold: Rational, points: Vec<(Rational, Rational)>) -> Result<Self, PenaltyError> {
        check_threshold(&threshold)?;
        let err = |m: &str| Err(PenaltyError::Breakpoints(m.to_string()));
        match points.first() {
            None => return err("no breakpoints"),
            Some((x, _)) if !x.is_zero() => return err("the first breakpoint must be at 0"),
            _ => {}
        }
        if points.windows(2).any(|w| w[0].0 >= w[1].0) {
            return err("breakpoints must be strictly increasing");
        }
        if points.last().map(|(x, _)| x < &threshold).unwrap_or(true) {
            return err("breakpoints must reach the threshold");
        }
        let f =
            PenaltyFunction { threshold: threshold.clone(), shape: PenaltyShape::Custom { points: points.clone() } };
        let mut checks: Vec<Rational> = vec![threshold.clone(), Rational::from_integer(ceil(&threshold))];
        checks.extend(points.iter().map(|(x, _)| x.clone()).filter(|x| *x >= threshold));
        for x in checks {
            let value = f.interpolate(&x).unwrap_or_else(|| x.clone());
            if value != x {
                return Err(PenaltyError::NotIdentity { x, value });
            }
        }
        Ok(f)
    }

    fn interpolate(&self, x: &Rational) -> Option<Rational> {
        let PenaltyShape::Custom { points } = &self.shape else { return None };
        let i = points.iter().position(|(px, _)| px >= x)?;
        let (x1, y1) = &points[i];
        if x1 == x || i == 0 {
            return Some(y1.clone());
        }
        let (x0, y0) = &points[i - 1];
        Some(y0 + (y1 - y0) * (x - x0) / (x1 - x0))
    }

    /// `m(x)`.
    pub fn eval(&self, x: &Rational) -> Rational {
        let t = &self.threshold;
        match &self.shape {
            PenaltyShape::Tbp { lambda } => {
                if x < t {
                    x - lambda * (t - x)
                } else {
                    x.clone()
                }
            }
            PenaltyShape::Crinkle2 => {
                if x < t {
                    x * int(2)
                } else {
                    x + t
                }
            }
            PenaltyShape::Custom { .. } => {
                if x >= t {
                    x.clone()
                } else {
                    self.interpolate(x).unwrap_or_else(|| x.clone())
                }
            }
        }
    }

    /// Constant `m(x) − x` for `x ≥ t`.
    pub fn offset(&self) -> Rational {
        match self.shape {
            PenaltyShape::Crinkle2 => self.threshold.clone(),
            _ => Rational::zero(),
        }
    }
}

fn check_threshold(t: &Rational) -> Result<(), PenaltyError> {
    if t.is_negative() {
        Err(PenaltyError::NegativeThreshold(t.clone()))
    } else {
        Ok(())
    }
}

/// Parses `x y` breakpoint lines; `#` starts a comment.
pub fn parse_breakpoints(text: &str) -> Result<Vec<(Rational, Rational)>, PenaltyError> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let parts: Vec<&str> = line.split_whitespace().collect();
        let [x, y] = parts.as_slice() else {
            return Err(PenaltyError::Breakpoints(format!("line {}: expected `x y`", i + 1)));
        };
        let parse = |s: &str| parse_rational(s).map_err(|e| PenaltyError::Breakpoints(format!("line {}: {e}", i + 1)));
        out.push((parse(x)?, parse(y)?));
    }
    Ok(out)
}

/// The counter product M′.
#[derive(Debug, Clone)]
pub struct UnfoldedT {
    pub mdp: Mdp,
    pub penalty: PenaltyFunction,
    /// Counter cap `⌈t⌉`.
    pub cap: u64,
    original_states: usize,
}

impl UnfoldedT {
    pub fn pair_state(&self, s: usize, w: u64) -> usize {
        s * (self.cap as usize + 1) + w as usize
    }

    /// `(s, w)` behind a state of M′, `None` for the fresh initial state.
    pub fn pair_of(&self, i: usize) -> Option<(usize, u64)> {
        let levels = self.cap as usize + 1;
        (i < self.original_states * levels).then(|| (i / levels, (i % levels) as u64))
    }

    pub fn initial_prime(&self) -> usize {
        self.mdp.initial()
    }
}

/// Builds M′ for `pen`. M′ has `|S|·(⌈t⌉+1) + 1` states.
pub fn build_unfolding_t(m: &Mdp, pen: &PenaltyFunction) -> Result<UnfoldedT, TbpeError> {
    let t = &pen.threshold;
    let cap = ceil(t).to_u64().ok_or_else(|| TbpeError::ThresholdTooLarge(t.clone()))?;
    let levels = cap as usize + 1;
    let n = m.num_states();
    let size =
        n.checked_mul(levels).and_then(|v| v.checked_add(1)).ok_or_else(|| TbpeError::ThresholdTooLarge(t.clone()))?;
    let init_prime = size - 1;
    let mut names = Vec::with_capacity(size);
    let mut choices = Vec::with_capacity(size);
    let m_at: Vec<Rational> = (0..levels).map(|w| pen.eval(&int(w as i64))).collect();
    for s in 0..n {
        for w in 0..=cap {
            names.push(format!("{}@{}", m.state_name(s), w));
            let wr = int(w as i64);
            let capped = wr >= *t;
            let list = m
                .choices(s)
                .iter()
                .map(|c| {
                    let total = &wr + &c.reward;
                    let (next, reward) = if capped {
                        (cap, c.reward.clone())
                    } else if total >= *t {
                        (cap, pen.eval(&total) - &m_at[w as usize])
                    } else {
                        let v = total.to_integer().to_u64().expect("natural rewards");
                        (v, pen.eval(&total) - &m_at[w as usize])
                    };
                    Choice {
                        action: c.action.clone(),
                        reward,
                        successors: c.successors.iter().map(|(r, p)| (r * levels + next as usize, p.clone())).collect(),
                    }
                })
                .collect();
            choices.push(list);
        }
    }
    names.push(fresh_name(m, "init'"));
    let start = if Rational::zero() >= *t { cap } else { 0 };
    choices.push(vec![Choice {
        action: INIT_ACTION.to_string(),
        reward: pen.eval(&Rational::zero()),
        successors: vec![(m.initial() * levels + start as usize, one())],
    }]);
    let mdp = Mdp::from_parts(names, init_prime, None, choices)?;
    Ok(UnfoldedT { mdp, penalty: pen.clone(), cap, original_states: n })
}

fn fresh_name(m: &Mdp, base: &str) -> String {
    let mut name = base.to_string();
    while m.state_index(&name).is_some() || name.contains('@') {
        name.push('\'');
    }
    name
}

#[derive(Debug, Clone)]
pub struct TbpeSolution {
    /// `E^max_M(m ∘ rew)`.
    pub value: Rational,
    /// Deterministic scheduler whose memory is the capped reward counter.
    pub scheduler: FiniteMemoryScheduler,
    /// Optimal value of every pair `(state, w)`.
    pub table: Vec<(String, u64, Rational)>,
    pub unfolded_states: usize,
}

/// Solves TBPE (or any admissible penalty) exactly by policy iteration on M′.
pub fn solve_tbpe(m: &Mdp, pen: &PenaltyFunction) -> Result<TbpeSolution, TbpeError> {
    let u = build_unfolding_t(m, pen)?;
    let table = max_expected_reward(&u.mdp)?;
    let mut choice = BTreeMap::new();
    let mut values = Vec::new();
    for i in 0..u.mdp.num_states() {
        let Some((s, w)) = u.pair_of(i) else { continue };
        values.push((m.state_name(s).to_string(), w, table.values[i].clone()));
        if let Some(c) = table.policy[i] {
            if m.choices(s).len() > 1 {
                choice.insert((m.state_name(s).to_string(), w), m.choices(s)[c].action.clone());
            }
        }
    }
    let scheduler = FiniteMemoryScheduler {
        modes: u.cap + 1,
        initial_mode: if Rational::zero() >= pen.threshold { u.cap } else { 0 },
        update: MemoryUpdate::RewardCounter { threshold: pen.threshold.clone(), cap: u.cap },
        choice,
    };
    Ok(TbpeSolution {
        value: table.values[u.initial_prime()].clone(),
        scheduler,
        table: values,
        unfolded_states: u.mdp.num_states(),
    })
}

/// Floating-point optimum of M′ by value iteration.
pub fn solve_tbpe_float(m: &Mdp, pen: &PenaltyFunction, tolerance: f64, max_sweeps: usize) -> Result<f64, TbpeError> {
    let u = build_unfolding_t(m, pen)?;
    let t = value_iteration(&u.mdp, Direction::Max, tolerance, max_sweeps)?;
    Ok(t.values[u.initial_prime()])
}

/// `E(m ∘ rew)` of a chain, via its counter product.
pub fn expectation_of_penalty(c: &Chain, pen: &PenaltyFunction) -> Result<Rational, TbpeError> {
    Ok(solve_tbpe(c.as_mdp(), pen)?.value)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::{safe_or_gamble, split_loop, two_branch};
    use crate::measures::{distribution_of, penalized, PenaltySpec};
    use crate::model::Scheduler;
    use crate::rational::ratio;

    #[test]
    fn penalty_values() {
        let p = PenaltyFunction::tbp(one(), one()).unwrap();
        assert_eq!([p.eval(&int(0)), p.eval(&int(1)), p.eval(&int(2))], [int(-1), int(1), int(2)]);
        let c = PenaltyFunction::crinkle2(int(3)).unwrap();
        assert_eq!((c.eval(&int(2)), c.eval(&int(5))), (int(4), int(8)));
        let c1 = PenaltyFunction::crinkle2(int(1)).unwrap();
        let c2 = PenaltyFunction::crinkle2(int(2)).unwrap();
        assert_eq!(c2.eval(&int(2)) - c1.eval(&int(2)), int(1));
    }

    #[test]
    fn custom_penalties() {
        let pts = parse_breakpoints("0 -3\n1 0  # kink\n2 2\n3 3\n").unwrap();
        let p = PenaltyFunction::custom(int(2), pts).unwrap();
        assert_eq!(p.eval(&ratio(1, 2)), ratio(-3, 2));
        assert_eq!(p.eval(&ratio(3, 2)), int(1));
        assert_eq!(p.eval(&int(7)), int(7));
        let bad = vec![(int(0), int(0)), (int(2), int(3))];
        assert!(matches!(PenaltyFunction::custom(int(2), bad), Err(PenaltyError::NotIdentity { .. })));
        assert!(PenaltyFunction::custom(int(2), vec![(int(1), int(1)), (int(2), int(2))]).is_err());
        assert!(PenaltyFunction::custom(int(2), vec![(int(0), int(0)), (int(1), int(1))]).is_err());
        assert!(PenaltyFunction::tbp(int(0), int(1)).is_err());
        assert!(PenaltyFunction::crinkle2(int(-1)).is_err());
    }

    #[test]
    fn two_branch_unfolding() {
        let u = build_unfolding_t(&two_branch(), &PenaltyFunction::tbp(one(), one()).unwrap()).unwrap();
        assert_eq!(u.cap, 1);
        assert_eq!(u.mdp.num_states(), 5 * 2 + 1);
        assert_eq!(u.mdp.choices(u.initial_prime())[0].reward, int(-1));
    }

    #[test]
    fn split_loop_levels_keep_self_loop() {
        let m = split_loop(101);
        let u = build_unfolding_t(&m, &PenaltyFunction::tbp(one(), int(5)).unwrap()).unwrap();
        assert_eq!(u.cap, 5);
        let s1 = m.state_index("s1").unwrap();
        let capped = u.pair_state(s1, 5);
        assert!(u.mdp.choices(capped)[0].successors.iter().any(|(t, _)| *t == capped));
    }

    #[test]
    fn golden_values() {
        let s = solve_tbpe(&two_branch(), &PenaltyFunction::tbp(one(), one()).unwrap()).unwrap();
        assert_eq!(s.value, ratio(5, 4));
        assert_eq!(s.scheduler.choice[&("s_init".to_string(), 0)], "beta");
        let s = solve_tbpe(&safe_or_gamble(), &PenaltyFunction::tbp(one(), int(30)).unwrap()).unwrap();
        assert_eq!(s.value, int(40));
        let d = distribution_of(&safe_or_gamble(), &Scheduler::FiniteMemory(s.scheduler.clone())).unwrap();
        assert_eq!(penalized(&d, &PenaltySpec::tbpe(one(), int(30))).unwrap(), int(40));
    }

    #[test]
    fn zero_threshold_is_expectation() {
        let m = safe_or_gamble();
        let s = solve_tbpe(&m, &PenaltyFunction::tbp(int(3), int(0)).unwrap()).unwrap();
        assert_eq!(s.value, int(50));
        assert_eq!(s.unfolded_states, m.num_states() + 1);
    }

    #[test]
    fn rational_threshold() {
        let s = solve_tbpe(&two_branch(), &PenaltyFunction::tbp(one(), ratio(3, 2)).unwrap()).unwrap();
        // beta: 3/4·(1 − 1/2) + 1/4·2 = 7/8; alpha: 1/4·(−3/2) + 3/4·(1/2) = 0.
        assert_eq!(s.value, ratio(7, 8));
    }

    #[test]
    fn chain_crinkle_expectations() {
        let c = Chain::from_atoms(&[(int(1), ratio(3, 4)), (int(2), ratio(1, 4))]).unwrap();
        assert_eq!(expectation_of_penalty(&c, &PenaltyFunction::crinkle2(int(2)).unwrap()).unwrap(), ratio(5, 2));
        assert_eq!(expectation_of_penalty(&c, &PenaltyFunction::crinkle2(int(1)).unwrap()).unwrap(), ratio(9, 4));
        let point = Chain::from_atoms(&[(int(4), one())]).unwrap();
        let pen = PenaltyFunction::tbp(int(2), int(3)).unwrap();
        assert_eq!(expectation_of_penalty(&point, &pen).unwrap(), int(4));
    }

    #[test]
    fn float_matches_exact() {
        let v =
            solve_tbpe_float(&split_loop(3), &PenaltyFunction::tbp(one(), int(4)).unwrap(), 1e-12, 100_000).unwrap();
        let exact = solve_tbpe(&split_loop(3), &PenaltyFunction::tbp(one(), int(4)).unwrap()).unwrap().value;
        assert!((v - crate::rational::to_f64(&exact)).abs() < 1e-9);
    }
}
