//! Reference models and random model generators.
//!
//! The named models are small hand-built MDPs used throughout the tests,
//! the CLI examples and the `models/` directory.

use crate::model::{Chain, Mdp, MdpBuilder, MemorylessScheduler, RewardBasedScheduler};
use crate::rational::{int, one, ratio, Rational};
use num_traits::Zero;
use rand::seq::SliceRandom;
use rand::Rng;

/// Two decision actions at `s_init` leading to rewards 0, 1 or 2.
///
/// `alpha`: 1/4 to `s0` (reward 0), 3/4 to `s1` (reward 1).
/// `beta`: 1/4 to `s2` (reward 2), 3/4 to `s1`.
pub fn two_branch() -> Mdp {
    let mut b = MdpBuilder::new();
    b.initial("s_init");
    for s in ["s0", "s1", "s2"] {
        b.state(s);
    }
    b.goal("goal");
    b.action("s_init", "alpha", int(0), &[("s0", ratio(1, 4)), ("s1", ratio(3, 4))]);
    b.action("s_init", "beta", int(0), &[("s2", ratio(1, 4)), ("s1", ratio(3, 4))]);
    b.action("s0", "tau", int(0), &[("goal", one())]);
    b.action("s1", "tau", int(1), &[("goal", one())]);
    b.action("s2", "tau", int(2), &[("goal", one())]);
    b.build().expect("fixture")
}

/// Loop model with a late decision.
///
/// `s_init` moves to `s1` with probability `p` and to `goal` otherwise. `s1`
/// collects `loop_reward` and moves to `s_dec` or back to itself with
/// probability 1/2 each. At `s_dec`, `alpha` collects 1 and `beta` nothing.
pub fn loop_decision(p: &Rational, loop_reward: u64, split_init: bool) -> Mdp {
    let mut b = MdpBuilder::new();
    b.initial("s_init");
    b.state("s1");
    b.state("s_dec");
    b.goal("goal");
    let p = if split_init { ratio(1, 2) } else { p.clone() };
    let mut init_succ = vec![("s1", p.clone())];
    if p != one() {
        init_succ.push(("goal", one() - &p));
    }
    b.action("s_init", "tau", int(0), &init_succ);
    b.action("s1", "tau", Rational::from_integer(loop_reward.into()), &[("s_dec", ratio(1, 2)), ("s1", ratio(1, 2))]);
    b.action("s_dec", "alpha", int(1), &[("goal", one())]);
    b.action("s_dec", "beta", int(0), &[("goal", one())]);
    b.build().expect("fixture")
}

/// [`loop_decision`] with loop reward 1 and entry probability `p`.
pub fn geometric_loop(p: &Rational) -> Mdp {
    loop_decision(p, 1, false)
}

/// [`loop_decision`] with loop reward `k` and entry probability 1/2.
pub fn split_loop(k: u64) -> Mdp {
    loop_decision(&Rational::zero(), k, true)
}

/// `alpha` gambles between 0 and 100, `beta` takes 40 for sure.
pub fn safe_or_gamble() -> Mdp {
    let mut b = MdpBuilder::new();
    b.initial("s_init");
    for s in ["s0", "s1", "s2"] {
        b.state(s);
    }
    b.goal("goal");
    b.action("s_init", "alpha", int(0), &[("s0", ratio(1, 2)), ("s1", ratio(1, 2))]);
    b.action("s_init", "beta", int(0), &[("s2", one())]);
    b.action("s0", "tau", int(0), &[("goal", one())]);
    b.action("s1", "tau", int(100), &[("goal", one())]);
    b.action("s2", "tau", int(40), &[("goal", one())]);
    b.build().expect("fixture")
}

/// Chain of [`two_branch`] under `beta`: rewards 1 and 2 with probabilities 3/4 and 1/4.
pub fn beta_chain() -> Chain {
    Chain::from_atoms(&[(int(1), ratio(3, 4)), (int(2), ratio(1, 4))]).expect("fixture")
}

/// Memoryless scheduler choosing `alpha` at `state` with probability `p`, `beta` otherwise.
pub fn mix(state: &str, p: &Rational) -> MemorylessScheduler {
    let mut s = MemorylessScheduler::default();
    let mut dist = Vec::new();
    if !p.is_zero() {
        dist.push(("alpha".to_string(), p.clone()));
    }
    if *p != one() {
        dist.push(("beta".to_string(), one() - p));
    }
    s.choices.insert(state.to_string(), dist);
    s
}

/// Random probability vector of length `n` with denominators dividing `denom`.
pub fn random_distribution<R: Rng>(rng: &mut R, n: usize, denom: u32) -> Vec<Rational> {
    assert!(n >= 1 && denom as usize >= n);
    let mut cuts: Vec<u32> = (1..denom).collect();
    cuts.shuffle(rng);
    let mut cuts: Vec<u32> = cuts.into_iter().take(n - 1).collect();
    cuts.sort_unstable();
    let mut out = Vec::with_capacity(n);
    let mut prev = 0;
    for c in cuts.into_iter().chain(std::iter::once(denom)) {
        out.push(ratio((c - prev) as i64, denom as i64));
        prev = c;
    }
    out
}

/// Parameters of [`random_acyclic_mdp`].
#[derive(Debug, Clone)]
pub struct RandomMdpConfig {
    pub states: usize,
    pub max_actions: usize,
    pub max_successors: usize,
    pub max_reward: u64,
    pub denominator: u32,
    /// Cap on the number of states with more than one action.
    pub max_decision_states: usize,
}

impl Default for RandomMdpConfig {
    fn default() -> Self {
        RandomMdpConfig {
            states: 8,
            max_actions: 2,
            max_successors: 2,
            max_reward: 3,
            denominator: 4,
            max_decision_states: usize::MAX,
        }
    }
}

/// Random acyclic MDP: states `q0..q{n-2}` in topological order plus `goal`.
/// Every transition moves strictly forward, so `goal` is reached surely.
pub fn random_acyclic_mdp<R: Rng>(rng: &mut R, cfg: &RandomMdpConfig) -> Mdp {
    assert!(cfg.states >= 2);
    let n = cfg.states - 1;
    let names: Vec<String> = (0..n).map(|i| format!("q{i}")).collect();
    let mut b = MdpBuilder::new();
    b.initial(&names[0]);
    for name in &names {
        b.state(name);
    }
    b.goal("goal");
    let mut decisions = 0;
    for i in 0..n {
        let later: Vec<&str> = names[i + 1..].iter().map(String::as_str).chain(std::iter::once("goal")).collect();
        let mut actions = rng.gen_range(1..=cfg.max_actions);
        if actions > 1 {
            if decisions >= cfg.max_decision_states {
                actions = 1;
            } else {
                decisions += 1;
            }
        }
        for a in 0..actions {
            let k = rng.gen_range(1..=cfg.max_successors.min(later.len()).min(cfg.denominator as usize));
            let mut targets = later.clone();
            targets.shuffle(rng);
            targets.truncate(k);
            let probs = random_distribution(rng, k, cfg.denominator);
            let succ: Vec<(&str, Rational)> = targets.into_iter().zip(probs).collect();
            let reward = int(rng.gen_range(0..=cfg.max_reward) as i64);
            b.action(&names[i], &format!("a{a}"), reward, &succ);
        }
    }
    b.build().expect("random model")
}

/// Random acyclic chain with natural rewards.
pub fn random_acyclic_chain<R: Rng>(rng: &mut R, states: usize, max_reward: u64, denominator: u32) -> Chain {
    let cfg =
        RandomMdpConfig { states, max_actions: 1, max_successors: 3, max_reward, denominator, max_decision_states: 0 };
    Chain::from_mdp(random_acyclic_mdp(rng, &cfg)).expect("single action per state")
}

/// Random memoryless scheduler with probabilities in multiples of `1/denom`.
pub fn random_memoryless<R: Rng>(rng: &mut R, m: &Mdp, denom: u32) -> MemorylessScheduler {
    let mut out = MemorylessScheduler::default();
    for s in 0..m.num_states() {
        let k = m.choices(s).len();
        if k > 1 {
            out.choices.insert(m.state_name(s).to_string(), random_action_dist(rng, m, s, denom));
        }
    }
    out
}

fn random_action_dist<R: Rng>(rng: &mut R, m: &Mdp, s: usize, denom: u32) -> Vec<(String, Rational)> {
    let k = m.choices(s).len();
    let mut weights = vec![0u32; k];
    for _ in 0..denom {
        weights[rng.gen_range(0..k)] += 1;
    }
    m.choices(s)
        .iter()
        .zip(weights)
        .filter(|(_, w)| *w > 0)
        .map(|(c, w)| (c.action.clone(), ratio(w as i64, denom as i64)))
        .collect()
}

/// Random reward-based scheduler deciding separately for every state and
/// accumulated reward below `limit`; the default rule is memoryless random.
pub fn random_reward_based<R: Rng>(rng: &mut R, m: &Mdp, limit: u64, denom: u32) -> RewardBasedScheduler {
    let mut out = RewardBasedScheduler { limit, default: random_memoryless(rng, m, denom), ..Default::default() };
    for s in 0..m.num_states() {
        if m.choices(s).len() > 1 {
            for w in 0..limit {
                out.entries.insert((m.state_name(s).to_string(), w), random_action_dist(rng, m, s, denom));
            }
        }
    }
    out
}

/// Scaling family: `len` stages `r0..r{len-1}` before `goal`.
///
/// At each stage `safe` collects 1 and advances; `risky` collects 3 and
/// retries the stage, advances, or stops with probabilities 1/2, 1/4, 1/4.
pub fn ladder(len: usize) -> Mdp {
    let names: Vec<String> = (0..len).map(|i| format!("r{i}")).collect();
    let mut b = MdpBuilder::new();
    b.initial(&names[0]);
    for n in &names {
        b.state(n);
    }
    b.goal("goal");
    for i in 0..len {
        let next = names.get(i + 1).map(String::as_str).unwrap_or("goal");
        b.action(&names[i], "safe", int(1), &[(next, one())]);
        if next == "goal" {
            b.action(&names[i], "risky", int(3), &[(&names[i], ratio(1, 2)), ("goal", ratio(1, 2))]);
        } else {
            b.action(
                &names[i],
                "risky",
                int(3),
                &[(&names[i], ratio(1, 2)), (next, ratio(1, 4)), ("goal", ratio(1, 4))],
            );
        }
    }
    b.build().expect("fixture")
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn fixtures_validate() {
        for m in [two_branch(), geometric_loop(&ratio(1, 4)), split_loop(101), safe_or_gamble(), ladder(5)] {
            assert!(m.validate().is_empty(), "{:?}", m.validate());
        }
        assert!(beta_chain().as_mdp().validate().is_empty());
    }

    #[test]
    fn random_models_are_valid_and_acyclic() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..50 {
            let cfg = RandomMdpConfig { max_decision_states: 2, ..Default::default() };
            let m = random_acyclic_mdp(&mut rng, &cfg);
            assert!(m.validate().is_empty());
            assert!(!crate::graph::has_cycle(&m.adjacency()));
            let decisions = (0..m.num_states()).filter(|&s| m.choices(s).len() > 1).count();
            assert!(decisions <= 2);
        }
    }

    #[test]
    fn random_distribution_sums_to_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for n in 1..5 {
            let d = random_distribution(&mut rng, n, 12);
            assert_eq!(d.iter().sum::<Rational>(), one());
            assert!(d.iter().all(|p| *p > Rational::zero()));
        }
    }
}
