//! Reward distributions of chains and scheduled MDPs, and the deviation
//! measures and penalized expectations evaluated on them.

use crate::graph::{has_cycle, strongly_connected_components};
use crate::model::{Chain, Mdp, MemorylessScheduler, ModelError, RewardDistribution, Scheduler};
use crate::rational::{one, Rational};
use num_traits::{Signed, Zero};
use std::collections::{BTreeMap, HashMap};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MeasureError {
    #[error("the scheduled model has a cycle; use the truncated distribution instead")]
    Cyclic,
    #[error("distribution has unenumerated tail mass {0}; exact measures need tail mass 0")]
    TailMass(Rational),
    #[error("step budget of {steps} exhausted with residual mass {residual} above epsilon")]
    BudgetExceeded { steps: usize, residual: Rational },
    #[error("penalty kind `tbpe` needs a threshold")]
    MissingThreshold,
    #[error("epsilon must lie in (0, 1)")]
    BadEpsilon,
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Exact deviation measures of a finite distribution.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MeasureReport {
    pub expectation: Rational,
    pub variance: Rational,
    pub mad: Rational,
    pub smad: Rational,
    pub semivariance: Rational,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PenaltyKind {
    Vpe,
    Madpe,
    Smadpe,
    Svpe,
    Tbpe,
}

impl std::str::FromStr for PenaltyKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "vpe" => Ok(PenaltyKind::Vpe),
            "madpe" => Ok(PenaltyKind::Madpe),
            "smadpe" => Ok(PenaltyKind::Smadpe),
            "svpe" => Ok(PenaltyKind::Svpe),
            "tbpe" => Ok(PenaltyKind::Tbpe),
            other => Err(format!("unknown penalty kind `{other}`")),
        }
    }
}

/// Objective `E − λ·DEV` (or the threshold penalty for `Tbpe`).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PenaltySpec {
    pub kind: PenaltyKind,
    pub lambda: Rational,
    pub threshold: Option<Rational>,
}

impl PenaltySpec {
    pub fn new(kind: PenaltyKind, lambda: Rational) -> Self {
        PenaltySpec { kind, lambda, threshold: None }
    }

    pub fn tbpe(lambda: Rational, threshold: Rational) -> Self {
        PenaltySpec { kind: PenaltyKind::Tbpe, lambda, threshold: Some(threshold) }
    }
}

/// Options of the truncated unrolling.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Truncation {
    pub epsilon: Rational,
    pub max_steps: usize,
}

impl Truncation {
    pub fn new(epsilon: Rational) -> Self {
        Truncation { epsilon, max_steps: 1_000_000 }
    }
}

type Node = (usize, Rational, u64);

/// Exact reward law of an acyclic chain.
pub fn exact_distribution(c: &Chain) -> Result<RewardDistribution, MeasureError> {
    distribution_of(c.as_mdp(), &Scheduler::Memoryless(MemorylessScheduler::default()))
}

/// Reward law of a chain unrolled until at most `epsilon` mass is still moving.
pub fn truncated_distribution(c: &Chain, epsilon: &Rational) -> Result<RewardDistribution, MeasureError> {
    truncated_distribution_of(
        c.as_mdp(),
        &Scheduler::Memoryless(MemorylessScheduler::default()),
        &Truncation::new(epsilon.clone()),
    )
}

/// Exact reward law of `m` under `sched`.
///
/// Dynamic programming over `(state, accumulated reward, memory mode)`
/// nodes, processed in topological order of the states the scheduler can
/// visit. Fails with [`MeasureError::Cyclic`] if that graph has a cycle.
pub fn distribution_of(m: &Mdp, sched: &Scheduler) -> Result<RewardDistribution, MeasureError> {
    let resolved = sched.resolve(m)?;
    let support = resolved.support_graph(m);
    if has_cycle(&support) {
        return Err(MeasureError::Cyclic);
    }
    let reachable = crate::graph::reachable_from(&support, m.initial());
    let mut order: Vec<usize> = strongly_connected_components(&support).into_iter().map(|c| c[0]).collect();
    order.reverse();
    let mut buckets: Vec<HashMap<(Rational, u64), Rational>> = vec![HashMap::new(); m.num_states()];
    buckets[m.initial()].insert((Rational::zero(), resolved.initial_mode()), one());
    let mut atoms: BTreeMap<Rational, Rational> = BTreeMap::new();
    for s in order.into_iter().filter(|s| reachable[*s]) {
        let bucket = std::mem::take(&mut buckets[s]);
        let mut entries: Vec<((Rational, u64), Rational)> = bucket.into_iter().collect();
        entries.sort();
        for ((w, mode), p) in entries {
            if m.is_trap(s) {
                *atoms.entry(w).or_insert_with(Rational::zero) += p;
                continue;
            }
            let dist = resolved.decide(m, s, &w, mode)?;
            for (c, pa) in dist.iter() {
                let ch = &m.choices(s)[*c];
                let next_w = &w + &ch.reward;
                let pc = &p * pa;
                for (t, pt) in &ch.successors {
                    let next_mode = resolved.next_mode(m, s, *c, *t, mode)?;
                    *buckets[*t].entry((next_w.clone(), next_mode)).or_insert_with(Rational::zero) += &pc * pt;
                }
            }
        }
    }
    Ok(RewardDistribution::from_atoms(atoms)?)
}

/// Reward law of `m` under `sched`, unrolled step by step until the mass
/// not yet absorbed is at most `epsilon`.
pub fn truncated_distribution_of(
    m: &Mdp,
    sched: &Scheduler,
    cfg: &Truncation,
) -> Result<RewardDistribution, MeasureError> {
    if !cfg.epsilon.is_positive() || cfg.epsilon >= one() {
        return Err(MeasureError::BadEpsilon);
    }
    let resolved = sched.resolve(m)?;
    let mut frontier: BTreeMap<Node, Rational> = BTreeMap::new();
    frontier.insert((m.initial(), Rational::zero(), resolved.initial_mode()), one());
    let mut atoms: BTreeMap<Rational, Rational> = BTreeMap::new();
    let mut steps = 0usize;
    loop {
        let mut moving = Rational::zero();
        let mut next: BTreeMap<Node, Rational> = BTreeMap::new();
        for ((s, w, mode), p) in std::mem::take(&mut frontier) {
            if m.is_trap(s) {
                *atoms.entry(w).or_insert_with(Rational::zero) += p;
                continue;
            }
            moving += &p;
            next.insert((s, w, mode), p);
        }
        if moving <= cfg.epsilon {
            return Ok(RewardDistribution::with_tail(atoms, moving)?);
        }
        if steps >= cfg.max_steps {
            return Err(MeasureError::BudgetExceeded { steps, residual: moving });
        }
        steps += 1;
        for ((s, w, mode), p) in next {
            let dist = resolved.decide(m, s, &w, mode)?;
            for (c, pa) in dist.iter() {
                let ch = &m.choices(s)[*c];
                let next_w = &w + &ch.reward;
                let pc = &p * pa;
                for (t, pt) in &ch.successors {
                    let next_mode = resolved.next_mode(m, s, *c, *t, mode)?;
                    *frontier.entry((*t, next_w.clone(), next_mode)).or_insert_with(Rational::zero) += &pc * pt;
                }
            }
        }
    }
}

fn require_exact(d: &RewardDistribution) -> Result<(), MeasureError> {
    if d.is_exact() {
        Ok(())
    } else {
        Err(MeasureError::TailMass(d.tail_mass().clone()))
    }
}

pub fn expectation(d: &RewardDistribution) -> Rational {
    d.atoms().iter().map(|(v, p)| v * p).sum()
}

/// E, V, MAD, SMAD and SV of an exact distribution.
pub fn deviation_report(d: &RewardDistribution) -> Result<MeasureReport, MeasureError> {
    require_exact(d)?;
    let e = expectation(d);
    let mut variance = Rational::zero();
    let mut mad = Rational::zero();
    let mut smad = Rational::zero();
    let mut semivariance = Rational::zero();
    for (v, p) in d.atoms() {
        let dev = v - &e;
        let sq = &dev * &dev;
        variance += p * &sq;
        mad += p * dev.abs();
        if dev.is_negative() {
            smad -= p * &dev;
            semivariance += p * &sq;
        }
    }
    Ok(MeasureReport { expectation: e, variance, mad, smad, semivariance })
}

/// `E(max(t − X, 0))`.
pub fn shortfall(d: &RewardDistribution, t: &Rational) -> Rational {
    d.atoms().iter().filter(|(v, _)| *v < t).map(|(v, p)| p * (t - v)).sum()
}

/// The penalized expectation selected by `spec`.
pub fn penalized(d: &RewardDistribution, spec: &PenaltySpec) -> Result<Rational, MeasureError> {
    let r = deviation_report(d)?;
    let penalty = match spec.kind {
        PenaltyKind::Vpe => r.variance,
        PenaltyKind::Madpe => r.mad,
        PenaltyKind::Smadpe => r.smad,
        PenaltyKind::Svpe => r.semivariance,
        PenaltyKind::Tbpe => shortfall(d, spec.threshold.as_ref().ok_or(MeasureError::MissingThreshold)?),
    };
    Ok(r.expectation - &spec.lambda * penalty)
}

/// Closed interval `[lo, hi]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Interval {
    pub lo: Rational,
    pub hi: Rational,
}

impl Interval {
    fn hull(a: Rational, b: Rational) -> Interval {
        if a <= b {
            Interval { lo: a, hi: b }
        } else {
            Interval { lo: b, hi: a }
        }
    }

    pub fn contains(&self, x: &Rational) -> bool {
        self.lo <= *x && *x <= self.hi
    }

    pub fn overlaps(&self, other: &Interval) -> bool {
        self.lo <= other.hi && other.lo <= self.hi
    }
}

/// Measures of a truncated distribution as intervals over two completions:
/// the tail placed at reward 0 and at the largest enumerated reward plus
/// `period`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MeasureBounds {
    pub expectation: Interval,
    pub variance: Interval,
    pub mad: Interval,
    pub smad: Interval,
    pub semivariance: Interval,
    /// The two completed reports (tail at 0, tail at the top).
    pub completions: [MeasureReport; 2],
}

/// The two exact completions used by [`deviation_bounds`].
pub fn completions(d: &RewardDistribution, period: &Rational) -> [RewardDistribution; 2] {
    let top = d.atoms().keys().next_back().cloned().unwrap_or_else(Rational::zero) + period;
    let complete = |at: Rational| {
        let mut atoms: Vec<(Rational, Rational)> = d.atoms().iter().map(|(v, p)| (v.clone(), p.clone())).collect();
        atoms.push((at, d.tail_mass().clone()));
        RewardDistribution::from_atoms(atoms).expect("completion has mass 1")
    };
    [complete(Rational::zero()), complete(top)]
}

pub fn deviation_bounds(d: &RewardDistribution, period: &Rational) -> MeasureBounds {
    let [low, high] = completions(d, period);
    let a = deviation_report(&low).expect("exact");
    let b = deviation_report(&high).expect("exact");
    MeasureBounds {
        expectation: Interval::hull(a.expectation.clone(), b.expectation.clone()),
        variance: Interval::hull(a.variance.clone(), b.variance.clone()),
        mad: Interval::hull(a.mad.clone(), b.mad.clone()),
        smad: Interval::hull(a.smad.clone(), b.smad.clone()),
        semivariance: Interval::hull(a.semivariance.clone(), b.semivariance.clone()),
        completions: [a, b],
    }
}

/// [`penalized`] over the two completions of a truncated distribution.
pub fn penalized_bounds(
    d: &RewardDistribution,
    spec: &PenaltySpec,
    period: &Rational,
) -> Result<Interval, MeasureError> {
    let [low, high] = completions(d, period);
    Ok(Interval::hull(penalized(&low, spec)?, penalized(&high, spec)?))
}
