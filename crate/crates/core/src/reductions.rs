//! Constructions from the hardness arguments: the chain pair whose MADs
//! reveal a tail probability, tail recovery through crinkle penalties, and
//! exact MAD by binary search against a threshold oracle.

use crate::graph::has_cycle;
use crate::measures::{deviation_report, exact_distribution, expectation, MeasureError};
use crate::model::{Chain, MdpBuilder, ModelError, CHAIN_ACTION};
use crate::rational::{int, one, ratio, Rational};
use crate::tbpe::{expectation_of_penalty, PenaltyFunction, TbpeError};
use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::{One, Signed, ToPrimitive, Zero};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ReductionError {
    #[error("the chain has a cycle")]
    Cyclic,
    #[error("reward {0} is not a natural number")]
    NonNaturalReward(Rational),
    #[error("threshold {t} lies below the expectation 0")]
    DegenerateSplit { t: u64 },
    #[error("crinkle recovery needs t >= 1")]
    ThresholdBelowOne,
    #[error("oracle answered `MAD >= {theta}` although the MAD never exceeds {bound}")]
    Inconsistent { theta: Rational, bound: Rational },
    #[error("gadget expectation {actual} differs from the target {expected}")]
    Expectation { expected: Rational, actual: Rational },
    #[error(transparent)]
    Measure(#[from] MeasureError),
    #[error(transparent)]
    Tbpe(#[from] TbpeError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// How the new initial state reaches the original chain.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Branch {
    /// Half to the chain, half to a trap paying `2τ − E`.
    Half { trap_reward: Rational },
    /// Probability `τ/E` to the chain, the rest to a zero-reward trap.
    Scaled { split: Rational },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReductionGadget {
    /// Expectation `t`.
    pub m1: Chain,
    /// Expectation `t + 1/2`.
    pub m2: Chain,
    pub branch1: Branch,
    pub branch2: Branch,
    pub l: BigInt,
    pub k: u64,
    pub e: Rational,
    pub t: u64,
}

/// Product over states of the least common denominator of their successor
/// probabilities. Every path probability is a multiple of `1/L`.
pub fn denominator_product(c: &Chain) -> BigInt {
    let mut l = BigInt::one();
    for s in 0..c.num_states() {
        let d = c.successors(s).iter().fold(BigInt::one(), |acc, (_, p)| acc.lcm(p.denom()));
        l *= d;
    }
    l
}

/// Largest reward collected along a path.
pub fn max_path_reward(c: &Chain) -> Result<u64, ReductionError> {
    check_chain(c)?;
    fn go(c: &Chain, s: usize, memo: &mut Vec<Option<u64>>) -> u64 {
        if let Some(v) = memo[s] {
            return v;
        }
        let r = c.reward(s).to_integer().to_u64().expect("checked");
        let v = c.successors(s).iter().map(|(t, _)| go(c, *t, memo)).max().map_or(0, |best| r + best);
        memo[s] = Some(v);
        v
    }
    let mut memo = vec![None; c.num_states()];
    Ok(go(c, c.initial(), &mut memo))
}

fn check_chain(c: &Chain) -> Result<(), ReductionError> {
    if has_cycle(&c.as_mdp().adjacency()) {
        return Err(ReductionError::Cyclic);
    }
    for s in 0..c.num_states() {
        let r = c.reward(s);
        if !r.is_integer() || r.is_negative() {
            return Err(ReductionError::NonNaturalReward(r));
        }
    }
    Ok(())
}

fn fresh(c: &Chain, base: &str) -> String {
    let mut name = base.to_string();
    while c.as_mdp().state_index(&name).is_some() {
        name.push('\'');
    }
    name
}

fn branch_for(target: &Rational, e: &Rational) -> Branch {
    if target >= e {
        Branch::Half { trap_reward: target * int(2) - e }
    } else {
        Branch::Scaled { split: target / e }
    }
}

/// Chain with a new initial state entering `c` according to `branch`.
fn attach(c: &Chain, branch: &Branch) -> Result<Chain, ReductionError> {
    let m = c.as_mdp();
    let init = fresh(c, "init");
    let side = fresh(c, "side");
    let sink = fresh(c, "sink");
    let mut b = MdpBuilder::new();
    for s in 0..m.num_states() {
        b.state(m.state_name(s));
    }
    b.initial(&init);
    b.state(&side);
    b.state(&sink);
    if let Some(g) = m.goal() {
        b.goal(m.state_name(g));
    }
    for s in 0..m.num_states() {
        let succ: Vec<(&str, Rational)> = c.successors(s).iter().map(|(t, p)| (m.state_name(*t), p.clone())).collect();
        if !succ.is_empty() {
            b.action(m.state_name(s), CHAIN_ACTION, c.reward(s), &succ);
        }
    }
    let (to_chain, side_reward) = match branch {
        Branch::Half { trap_reward } => (ratio(1, 2), trap_reward.clone()),
        Branch::Scaled { split } => (split.clone(), Rational::zero()),
    };
    let original = m.state_name(m.initial());
    let mut entry = Vec::new();
    if !to_chain.is_zero() {
        entry.push((original, to_chain.clone()));
    }
    if to_chain != one() {
        entry.push((side.as_str(), one() - &to_chain));
    }
    b.action(&init, CHAIN_ACTION, Rational::zero(), &entry);
    b.action(&side, CHAIN_ACTION, side_reward, &[(sink.as_str(), one())]);
    Ok(Chain::from_mdp(b.build()?)?)
}

/// The chains `M1` and `M2` with expectations `t` and `t + 1/2`.
///
/// Each target `τ` picks its own entry: `τ ≥ E` splits in half, `τ < E`
/// enters the chain with probability `τ/E`.
pub fn build_gadgets(c: &Chain, t: u64) -> Result<ReductionGadget, ReductionError> {
    check_chain(c)?;
    let e = expectation(&exact_distribution(c)?);
    let t1 = int(t as i64);
    let t2 = &t1 + ratio(1, 2);
    if t1 < e && e.is_zero() {
        return Err(ReductionError::DegenerateSplit { t });
    }
    let branch1 = branch_for(&t1, &e);
    let branch2 = branch_for(&t2, &e);
    let m1 = attach(c, &branch1)?;
    let m2 = attach(c, &branch2)?;
    for (chain, target) in [(&m1, &t1), (&m2, &t2)] {
        let actual = expectation(&exact_distribution(chain)?);
        if actual != *target {
            return Err(ReductionError::Expectation { expected: target.clone(), actual });
        }
    }
    Ok(ReductionGadget { m1, m2, branch1, branch2, l: denominator_product(c), k: max_path_reward(c)?, e, t })
}

/// `Σ p_w·|w − τ|` of the original chain, from the MAD of the gadget with
/// expectation `τ`.
fn chain_deviation(mad: &Rational, target: &Rational, e: &Rational, branch: &Branch) -> Rational {
    match branch {
        Branch::Half { .. } => mad * int(2) - (target - e).abs(),
        Branch::Scaled { split } if split.is_zero() => e.clone(),
        Branch::Scaled { split } => (mad - (one() - split) * target) / split,
    }
}

/// Trace of a tail recovery through the gadget MADs.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MadRecovery {
    pub gadget: ReductionGadget,
    pub mad1: Rational,
    pub mad2: Rational,
    pub deviation1: Rational,
    pub deviation2: Rational,
    /// `Pr(rew > t)`.
    pub probability: Rational,
}

/// `Pr(rew > t)` from the MADs of the two gadgets only.
pub fn recover_tail_probability_mad(c: &Chain, t: u64) -> Result<MadRecovery, ReductionError> {
    let gadget = build_gadgets(c, t)?;
    let mad1 = deviation_report(&exact_distribution(&gadget.m1)?)?.mad;
    let mad2 = deviation_report(&exact_distribution(&gadget.m2)?)?.mad;
    let t1 = int(t as i64);
    let t2 = &t1 + ratio(1, 2);
    let deviation1 = chain_deviation(&mad1, &t1, &gadget.e, &gadget.branch1);
    let deviation2 = chain_deviation(&mad2, &t2, &gadget.e, &gadget.branch2);
    let probability = &deviation1 - &deviation2 + ratio(1, 2);
    Ok(MadRecovery { gadget, mad1, mad2, deviation1, deviation2, probability })
}

/// Trace of a tail recovery through two crinkle expectations.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CrinkleRecovery {
    pub upper: Rational,
    pub lower: Rational,
    /// `Pr(rew ≥ t)`.
    pub probability: Rational,
}

/// `Pr(rew ≥ t) = E(crinkle_t ∘ rew) − E(crinkle_{t−1} ∘ rew)`.
pub fn recover_tail_probability_crinkle(c: &Chain, t: u64) -> Result<CrinkleRecovery, ReductionError> {
    if t < 1 {
        return Err(ReductionError::ThresholdBelowOne);
    }
    check_chain(c)?;
    let upper = expectation_of_penalty(c, &PenaltyFunction::crinkle2(int(t as i64)).expect("t >= 0"))?;
    let lower = expectation_of_penalty(c, &PenaltyFunction::crinkle2(int(t as i64 - 1)).expect("t >= 0"))?;
    let probability = &upper - &lower;
    Ok(CrinkleRecovery { upper, lower, probability })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SearchTrace {
    pub mad: Rational,
    /// Queried thresholds and answers, in order.
    pub calls: Vec<(Rational, bool)>,
    pub l: BigInt,
    pub k: u64,
    /// `⌈log₂(L²·K)⌉ + 1` (1 when `K = 0`).
    pub call_bound: u64,
}

/// Exact MAD of `c` from answers to `MAD ≥ ϑ?`.
///
/// The MAD is a multiple of `1/L²` and at most `K/2`, so a bisection over
/// `j/L²` with `0 ≤ j ≤ ⌊L²K/2⌋` finds it. One more call at the first
/// multiple above `K/2` checks the oracle, which must answer no there.
pub fn binary_search_mad(c: &Chain, mut oracle: impl FnMut(&Rational) -> bool) -> Result<SearchTrace, ReductionError> {
    check_chain(c)?;
    let l = denominator_product(c);
    let k = max_path_reward(c)?;
    let l2 = &l * &l;
    let n = &l2 * BigInt::from(k);
    let scale = |j: &BigInt| Rational::new(j.clone(), l2.clone());
    let mut calls = Vec::new();
    let mut ask = |j: &BigInt, calls: &mut Vec<(Rational, bool)>| {
        let theta = scale(j);
        let answer = oracle(&theta);
        calls.push((theta, answer));
        answer
    };
    let mut lo = BigInt::zero();
    let mut hi = &n / BigInt::from(2) + BigInt::one();
    while &hi - &lo > BigInt::one() {
        let mid = (&lo + &hi) / BigInt::from(2);
        if ask(&mid, &mut calls) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let above = &n / BigInt::from(2) + BigInt::one();
    if ask(&above, &mut calls) {
        return Err(ReductionError::Inconsistent {
            theta: scale(&above),
            bound: Rational::new(BigInt::from(k), BigInt::from(2)),
        });
    }
    let call_bound = if k == 0 { 1 } else { ceil_log2(&n) + 1 };
    Ok(SearchTrace { mad: scale(&lo), calls, l, k, call_bound })
}

fn ceil_log2(n: &BigInt) -> u64 {
    let bits = n.bits();
    if (n - BigInt::one()).bits() < bits {
        // n is a power of two
        bits - 1
    } else {
        bits
    }
}
