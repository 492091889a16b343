//! Independent ground truth: explicit path enumeration, grid search over
//! randomized schedulers and seeded Monte Carlo simulation.
//!
//! Nothing here calls the solver modules; objectives and expectation-optimal
//! schedulers are recomputed with deliberately simple code.

mod grid;
mod simulate;

pub use grid::{deterministic_optimum, grid_search, GridPoint, GridResult, GridSpec, SchedulerClass};
pub use simulate::{simulate, total_variation, SimConfig, SimReport};

use crate::graph::{has_cycle, reachable_from};
use crate::measures::{PenaltyKind, PenaltySpec};
use crate::model::{Mdp, MemorylessScheduler, ModelError, RewardDistribution, Scheduler};
use crate::rational::{one, Rational};
use num_traits::{Signed, Zero};
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum OracleError {
    #[error("path budget of {0} maximal paths exceeded")]
    PathBudget(usize),
    #[error("grid of {points} points exceeds the budget of {budget}")]
    GridBudget { points: u128, budget: u128 },
    #[error("grid search needs a model without cycles reachable from the initial state")]
    Cyclic,
    #[error("resolution must be at least 1")]
    Resolution,
    #[error("penalty kind `tbpe` needs a threshold")]
    MissingThreshold,
    #[error("path {index} exceeded {steps} steps on every one of {retries} attempts")]
    StepCap { index: u64, steps: usize, retries: usize },
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Limits of [`enumerate_paths`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PathBudget {
    /// Maximal number of enumerated paths (complete or cut).
    pub max_paths: usize,
    /// Paths longer than this are cut and their mass becomes tail mass.
    pub max_depth: usize,
}

impl Default for PathBudget {
    fn default() -> Self {
        PathBudget { max_paths: 10_000_000, max_depth: 10_000 }
    }
}

/// Reward law by explicit depth-first enumeration of maximal paths.
///
/// Every path is followed separately; nothing is merged. Paths cut at
/// `max_depth` contribute to the tail mass.
pub fn enumerate_paths(m: &Mdp, sched: &Scheduler, budget: PathBudget) -> Result<RewardDistribution, OracleError> {
    let resolved = sched.resolve(m)?;
    let mut atoms: BTreeMap<Rational, Rational> = BTreeMap::new();
    let mut tail = Rational::zero();
    let mut paths = 0usize;
    // (state, accumulated reward, memory mode, path probability, depth)
    let mut stack = vec![(m.initial(), Rational::zero(), resolved.initial_mode(), one(), 0usize)];
    while let Some((s, w, mode, p, depth)) = stack.pop() {
        if m.is_trap(s) || depth >= budget.max_depth {
            paths += 1;
            if paths > budget.max_paths {
                return Err(OracleError::PathBudget(budget.max_paths));
            }
            if m.is_trap(s) {
                *atoms.entry(w).or_insert_with(Rational::zero) += p;
            } else {
                tail += p;
            }
            continue;
        }
        let dist = resolved.decide(m, s, &w, mode)?;
        for (c, pc) in dist.iter().rev() {
            let ch = &m.choices(s)[*c];
            for (t, pt) in ch.successors.iter().rev() {
                let next_mode = resolved.next_mode(m, s, *c, *t, mode)?;
                stack.push((*t, &w + &ch.reward, next_mode, &p * pc * pt, depth + 1));
            }
        }
    }
    Ok(RewardDistribution::with_tail(atoms, tail)?)
}

/// Objective of `spec` on an exact list of `(value, probability)` atoms,
/// computed directly from the definitions.
pub fn objective(atoms: &[(Rational, Rational)], spec: &PenaltySpec) -> Result<Rational, OracleError> {
    let e: Rational = atoms.iter().map(|(v, p)| v * p).sum();
    let penalty: Rational = match spec.kind {
        PenaltyKind::Madpe => atoms.iter().map(|(v, p)| p * (v - &e).abs()).sum(),
        PenaltyKind::Smadpe => atoms.iter().filter(|(v, _)| *v < e).map(|(v, p)| p * (&e - v)).sum(),
        PenaltyKind::Vpe => atoms.iter().map(|(v, p)| p * (v - &e) * (v - &e)).sum(),
        PenaltyKind::Svpe => atoms.iter().filter(|(v, _)| *v < e).map(|(v, p)| p * (v - &e) * (v - &e)).sum(),
        PenaltyKind::Tbpe => {
            let t = spec.threshold.as_ref().ok_or(OracleError::MissingThreshold)?;
            atoms.iter().filter(|(v, _)| v < t).map(|(v, p)| p * (t - v)).sum()
        }
    };
    Ok(e - &spec.lambda * penalty)
}

/// Expectation-optimal memoryless scheduler by backward induction over the
/// states reachable from the initial one, ties broken towards the
/// lexicographically smallest action. Unreachable states get value 0 and
/// their lexicographically smallest action.
pub fn backward_induction(m: &Mdp) -> Result<(Vec<Rational>, MemorylessScheduler), OracleError> {
    if reachable_cycle(m) {
        return Err(OracleError::Cyclic);
    }
    let reach = reachable_from(&m.adjacency(), m.initial());
    let n = m.num_states();
    let mut value: Vec<Option<Rational>> = vec![None; n];
    let mut sched = MemorylessScheduler::default();
    fn visit(m: &Mdp, s: usize, value: &mut Vec<Option<Rational>>, sched: &mut MemorylessScheduler) -> Rational {
        if let Some(v) = &value[s] {
            return v.clone();
        }
        let mut best: Option<(Rational, &str)> = None;
        for ch in m.choices(s) {
            let mut q = ch.reward.clone();
            for (t, p) in &ch.successors {
                q += p * visit(m, *t, value, sched);
            }
            let replace = match &best {
                None => true,
                Some((b, name)) => q > *b || (q == *b && ch.action.as_str() < *name),
            };
            if replace {
                best = Some((q, ch.action.as_str()));
            }
        }
        let v = match best {
            Some((q, action)) => {
                sched.set(m.state_name(s), action);
                q
            }
            None => Rational::zero(),
        };
        value[s] = Some(v.clone());
        v
    }
    visit(m, m.initial(), &mut value, &mut sched);
    for s in (0..n).filter(|&s| !reach[s] && !m.is_trap(s)) {
        let first = m.choices(s).iter().map(|c| c.action.as_str()).min().expect("non-trap");
        sched.set(m.state_name(s), first);
    }
    Ok((value.into_iter().map(|v| v.unwrap_or_else(Rational::zero)).collect(), sched))
}

/// True when some cycle is reachable from the initial state.
pub(crate) fn reachable_cycle(m: &Mdp) -> bool {
    let adj = m.adjacency();
    let reach = reachable_from(&adj, m.initial());
    let restricted: Vec<Vec<usize>> =
        adj.iter().enumerate().map(|(s, succ)| if reach[s] { succ.clone() } else { Vec::new() }).collect();
    has_cycle(&restricted)
}
