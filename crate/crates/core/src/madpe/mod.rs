//! MAD-penalized expectation maximization for `λ ∈ (0, 1/2]`.
//!
//! The model is unfolded into 𝒩, whose states are pairs `(s, w)` of an
//! original state and the reward accumulated so far. Below the bound
//! `k = ⌈E^max⌉` the original actions are available; at `w ≥ k` (and at
//! traps) only the terminal action `tau` remains, which pays the final
//! outcome in one step: `w` at traps, `w + E^max_s` elsewhere. Expected
//! state-action frequencies of 𝒩 form a polytope; pinning the expectation
//! `e = ē` turns the penalized objective into a linear one, which the sweep
//! solves over a grid of candidates.

mod qp;

pub use qp::{build_qp, export_qp, parse_qp, QpModel, QpParseError};

use crate::expect::{max_expected_reward, ExpectError};
use crate::linalg::{solve_absorbing, LinalgError};
use crate::lp::{solve_lp, LpProblem, LpStatus, Relation};
use crate::measures::{penalized, MeasureError, PenaltyKind, PenaltySpec};
use crate::model::{
    model_hash, Choice, Mdp, MemorylessScheduler, ModelError, RewardBasedScheduler, RewardDistribution, Scheduler,
};
use crate::preprocess::NormalizedMdp;
use crate::rational::{ceil, int, one, ratio, Rational};
use num_traits::{Signed, ToPrimitive, Zero};
use rayon::prelude::*;
use std::collections::{BTreeMap, BTreeSet};
use thiserror::Error;

/// Name of the terminal action of the unfolding.
pub const TAU: &str = "tau";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MadpeError {
    #[error("lambda must be positive, got {0}")]
    NonPositiveLambda(Rational),
    #[error(
        "lambda {0} exceeds 1/2: above the reward bound an ERMin scheduler (minimizing the future expectation) \
         can be strictly better than the ERMax continuation the sweep relies on, so the sweep does not apply; \
         use `oracle grid` to explore"
    )]
    LambdaAboveHalf(Rational),
    #[error("no sweep candidate produced a feasible linear program")]
    NoFeasibleCandidate,
    #[error("frequencies are not feasible: {0}")]
    InfeasibleFrequencies(String),
    #[error(transparent)]
    Expect(#[from] ExpectError),
    #[error(transparent)]
    Measure(#[from] MeasureError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

/// Accepts `0 < λ ≤ 1/2`.
pub fn check_lambda(lambda: &Rational) -> Result<(), MadpeError> {
    if !lambda.is_positive() {
        Err(MadpeError::NonPositiveLambda(lambda.clone()))
    } else if *lambda > ratio(1, 2) {
        Err(MadpeError::LambdaAboveHalf(lambda.clone()))
    } else {
        Ok(())
    }
}

/// The unfolded MDP 𝒩 with its index maps.
#[derive(Debug, Clone)]
pub struct UnfoldedN {
    pub mdp: Mdp,
    pub original: Mdp,
    pub k: u64,
    pub ell: u64,
    /// `E^max_{M,s}` per original state.
    pub emax: Vec<Rational>,
    /// Expectation-optimal memoryless scheduler 𝔗 used above the bound and on
    /// pairs the frequencies never visit.
    pub terminal: MemorylessScheduler,
    pub model_hash: String,
    tau_value: Vec<Option<Rational>>,
}

impl UnfoldedN {
    /// Counter levels `0..k+ℓ`.
    pub fn levels(&self) -> u64 {
        self.k + self.ell
    }

    pub fn num_pairs(&self) -> usize {
        self.original.num_states() * self.levels() as usize
    }

    /// 𝒩 state of pair `(s, w)`.
    pub fn pair_state(&self, s: usize, w: u64) -> usize {
        s * self.levels() as usize + w as usize
    }

    /// Pair behind an 𝒩 state, `None` for `goal'`.
    pub fn pair_of(&self, i: usize) -> Option<(usize, u64)> {
        (i < self.num_pairs()).then(|| (i / self.levels() as usize, (i % self.levels() as usize) as u64))
    }

    pub fn goal_prime(&self) -> usize {
        self.num_pairs()
    }

    /// Terminal reward of `tau` at 𝒩 state `i`, if `tau` is its only action.
    pub fn tau_value(&self, i: usize) -> Option<&Rational> {
        self.tau_value.get(i).and_then(Option::as_ref)
    }

    /// `E^max_M` at the initial state.
    pub fn emax_initial(&self) -> &Rational {
        &self.emax[self.original.initial()]
    }
}

/// Builds 𝒩 for a normalized model.
pub fn build_unfolding_n(m: &NormalizedMdp) -> Result<UnfoldedN, MadpeError> {
    unfold(m.mdp())
}

/// Builds 𝒩 for a model whose maximal expectation is finite.
///
/// `k` and `ℓ` are clamped to at least 1 so the construction stays
/// non-empty when all rewards are 0.
pub fn unfold(m: &Mdp) -> Result<UnfoldedN, MadpeError> {
    let table = max_expected_reward(m)?;
    let emax = table.values.clone();
    let k = ceil(&emax[m.initial()]).to_u64().unwrap_or(u64::MAX).max(1);
    let ell = ceil(&m.max_reward()).to_u64().unwrap_or(u64::MAX).max(1);
    let levels = k + ell;
    let n_orig = m.num_states();
    let pairs = n_orig * levels as usize;
    let goal_prime = pairs;
    let mut names = Vec::with_capacity(pairs + 1);
    let mut choices = Vec::with_capacity(pairs + 1);
    let mut tau_value = Vec::with_capacity(pairs + 1);
    for s in 0..n_orig {
        for w in 0..levels {
            names.push(format!("{}@{}", m.state_name(s), w));
            let terminal = if m.is_trap(s) {
                Some(int(w as i64))
            } else if w >= k {
                Some(int(w as i64) + &emax[s])
            } else {
                None
            };
            match terminal {
                Some(v) => {
                    choices.push(vec![Choice {
                        action: TAU.to_string(),
                        reward: v.clone(),
                        successors: vec![(goal_prime, one())],
                    }]);
                    tau_value.push(Some(v));
                }
                None => {
                    let list = m
                        .choices(s)
                        .iter()
                        .map(|c| {
                            let next = w + c.reward.to_integer().to_u64().expect("natural reward");
                            Choice {
                                action: c.action.clone(),
                                reward: Rational::zero(),
                                successors: c
                                    .successors
                                    .iter()
                                    .map(|(t, p)| (*t * levels as usize + next as usize, p.clone()))
                                    .collect(),
                            }
                        })
                        .collect();
                    choices.push(list);
                    tau_value.push(None);
                }
            }
        }
    }
    names.push("goal'".to_string());
    choices.push(Vec::new());
    tau_value.push(None);
    let init = m.initial() * levels as usize;
    let mdp = Mdp::from_parts(names, init, Some(goal_prime), choices)?;
    Ok(UnfoldedN {
        mdp,
        original: m.clone(),
        k,
        ell,
        emax,
        terminal: table.scheduler(m),
        model_hash: model_hash(m),
        tau_value,
    })
}

/// Variable name of the frequency of `action` at pair `(state, w)`.
pub fn frequency_name(state: &str, w: u64, action: &str) -> String {
    format!("x_{state}_{w}_{action}")
}

/// Frequency variables and flow-balance rows of 𝒩.
#[derive(Debug, Clone)]
pub struct FrequencyLp {
    /// Variables `x_<state>_<w>_<action>` and one balance row per pair.
    pub problem: LpProblem,
    /// `(𝒩 state, choice index)` of every variable.
    pub vars: Vec<(usize, usize)>,
    /// `(variable, terminal reward)` of every `tau` variable.
    pub tau: Vec<(usize, Rational)>,
}

/// Non-negativity and flow balance over every pair of 𝒩:
/// `Σ_α x_{s,w,α} − Σ x_{s',w',β}·P′((s',w'),β,(s,w)) = 𝟙[(s,w) = (s_init,0)]`.
pub fn build_frequency_constraints(n: &UnfoldedN) -> FrequencyLp {
    frequency_lp(n, &vec![true; n.mdp.num_states()])
}

/// Restriction of the frequency constraints to pairs reachable from `(s_init, 0)`.
pub fn reachable_frequency_constraints(n: &UnfoldedN) -> FrequencyLp {
    let reach = crate::graph::reachable_from(&n.mdp.adjacency(), n.mdp.initial());
    frequency_lp(n, &reach)
}

fn frequency_lp(n: &UnfoldedN, keep: &[bool]) -> FrequencyLp {
    let nm = &n.mdp;
    let mut problem = LpProblem::new();
    let mut vars = Vec::new();
    let mut own: Vec<Vec<usize>> = vec![Vec::new(); nm.num_states()];
    let mut tau = Vec::new();
    for i in (0..nm.num_states()).filter(|&i| keep[i]) {
        let (s, w) = match n.pair_of(i) {
            Some(p) => p,
            None => continue,
        };
        for (c, ch) in nm.choices(i).iter().enumerate() {
            let j = problem.add_variable(frequency_name(n.original.state_name(s), w, &ch.action));
            vars.push((i, c));
            own[i].push(j);
            if let Some(v) = n.tau_value(i) {
                tau.push((j, v.clone()));
            }
        }
    }
    let mut incoming: Vec<BTreeMap<usize, Rational>> = vec![BTreeMap::new(); nm.num_states()];
    for (j, &(i, c)) in vars.iter().enumerate() {
        for (t, p) in &nm.choices(i)[c].successors {
            *incoming[*t].entry(j).or_insert_with(Rational::zero) += p;
        }
    }
    for i in (0..nm.num_states()).filter(|&i| keep[i] && i != n.goal_prime()) {
        let mut row: BTreeMap<usize, Rational> = own[i].iter().map(|&j| (j, one())).collect();
        for (j, p) in &incoming[i] {
            *row.entry(*j).or_insert_with(Rational::zero) -= p;
        }
        let coeffs = row.into_iter().filter(|(_, a)| !a.is_zero()).collect();
        let rhs = if i == nm.initial() { one() } else { Rational::zero() };
        problem.add_constraint(coeffs, Relation::Eq, rhs);
    }
    FrequencyLp { problem, vars, tau }
}

/// Sweep resolution.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SweepConfig {
    /// Grid step is `E^max / divisions`.
    pub divisions: u64,
    /// Rounds halving the step around the incumbent.
    pub refinement_rounds: u32,
    /// Parabola steps after refinement.
    pub polish_steps: u32,
    /// Evaluate candidate LPs on the rayon pool.
    pub parallel: bool,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig { divisions: 64, refinement_rounds: 3, polish_steps: 8, parallel: true }
    }
}

/// One evaluated candidate; `value` is `None` when the pinned LP is infeasible.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SweepPoint {
    pub e: Rational,
    pub value: Option<Rational>,
}

#[derive(Debug, Clone)]
pub struct MadpeSolution {
    /// `MADPE[λ]` of `scheduler`, a lower bound on the optimum.
    pub value: Rational,
    pub e_star: Rational,
    /// Frequencies of the reachable pairs at the best candidate.
    pub frequencies: Vec<(String, Rational)>,
    pub scheduler: RewardBasedScheduler,
    /// Candidates in evaluation order.
    pub sweep_log: Vec<SweepPoint>,
    /// Grid step `δ`.
    pub delta: Rational,
    /// `(1 + 2λ)·δ/2`.
    pub gap_bound: Rational,
    pub k: u64,
    pub ell: u64,
}

struct Evaluated {
    value: Rational,
    x: Vec<Rational>,
}

/// Pinned LP at `e`: frequency rows, `Σ v·x_τ = e`, objective `−λ Σ |v − e|·x_τ`.
pub fn pinned_lp(f: &FrequencyLp, lambda: &Rational, e: &Rational) -> LpProblem {
    let mut p = f.problem.clone();
    p.add_constraint(f.tau.iter().map(|(j, v)| (*j, v.clone())).collect(), Relation::Eq, e.clone());
    p.objective = f.tau.iter().filter(|(_, v)| v != e).map(|(j, v)| (*j, -(lambda * (v - e).abs()))).collect();
    p
}

fn evaluate(f: &FrequencyLp, lambda: &Rational, e: &Rational) -> Option<Evaluated> {
    let sol = solve_lp(&pinned_lp(f, lambda, e));
    (sol.status == LpStatus::Optimal).then(|| Evaluated { value: e + sol.objective, x: sol.values })
}

struct Sweep<'a> {
    f: &'a FrequencyLp,
    lambda: &'a Rational,
    lo: Rational,
    hi: Rational,
    parallel: bool,
    cache: BTreeMap<Rational, Option<Evaluated>>,
    log: Vec<SweepPoint>,
    best: Option<Rational>,
}

impl Sweep<'_> {
    fn run(&mut self, candidates: Vec<Rational>) {
        let fresh: Vec<Rational> = candidates
            .into_iter()
            .filter(|e| *e >= self.lo && *e <= self.hi)
            .collect::<BTreeSet<_>>()
            .into_iter()
            .filter(|e| !self.cache.contains_key(e))
            .collect();
        let results: Vec<Option<Evaluated>> = if self.parallel {
            fresh.par_iter().map(|e| evaluate(self.f, self.lambda, e)).collect()
        } else {
            fresh.iter().map(|e| evaluate(self.f, self.lambda, e)).collect()
        };
        for (e, r) in fresh.into_iter().zip(results) {
            self.log.push(SweepPoint { e: e.clone(), value: r.as_ref().map(|r| r.value.clone()) });
            if let Some(r) = &r {
                let better = match &self.best {
                    None => true,
                    Some(b) => {
                        let bv = &self.cache[b].as_ref().expect("incumbent is feasible").value;
                        r.value > *bv || (r.value == *bv && e < *b)
                    }
                };
                if better {
                    self.best = Some(e.clone());
                }
            }
            self.cache.insert(e, r);
        }
    }

    fn value_at(&self, e: &Rational) -> Option<&Rational> {
        self.cache.get(e).and_then(|r| r.as_ref()).map(|r| &r.value)
    }
}

/// Maximizes `MADPE[λ]` by sweeping the pinned expectation.
///
/// Candidates are the terminal rewards, the grid `{0, δ, …, E^max}` with
/// `δ = E^max / divisions`, points at `±δ/2^r` around the incumbent for each
/// refinement round, and parabola vertices through the incumbent and its
/// neighbours. The returned value is recomputed from the extracted
/// scheduler's outcome distribution.
pub fn solve_madpe_sweep(m: &NormalizedMdp, lambda: &Rational, cfg: &SweepConfig) -> Result<MadpeSolution, MadpeError> {
    check_lambda(lambda)?;
    let n = build_unfolding_n(m)?;
    sweep_unfolded(&n, lambda, cfg)
}

/// [`solve_madpe_sweep`] on an already built unfolding.
pub fn sweep_unfolded(n: &UnfoldedN, lambda: &Rational, cfg: &SweepConfig) -> Result<MadpeSolution, MadpeError> {
    check_lambda(lambda)?;
    let f = reachable_frequency_constraints(n);
    let emax = n.emax_initial().clone();
    let divisions = cfg.divisions.max(1);
    let delta = &emax / int(divisions as i64);
    let mut sweep = Sweep {
        f: &f,
        lambda,
        lo: Rational::zero(),
        hi: emax.clone(),
        parallel: cfg.parallel,
        cache: BTreeMap::new(),
        log: Vec::new(),
        best: None,
    };
    let mut initial: Vec<Rational> = f.tau.iter().map(|(_, v)| v.clone()).collect();
    initial.extend((0..=divisions).map(|i| &delta * int(i as i64)));
    sweep.run(initial);
    if sweep.best.is_none() {
        return Err(MadpeError::NoFeasibleCandidate);
    }
    let mut h = delta.clone();
    for _ in 0..cfg.refinement_rounds {
        h /= int(2);
        let e = sweep.best.clone().expect("incumbent");
        sweep.run(vec![&e - &h, &e + &h]);
    }
    for _ in 0..cfg.polish_steps {
        if h.is_zero() {
            break;
        }
        let e = sweep.best.clone().expect("incumbent");
        sweep.run(vec![&e - &h, &e + &h]);
        let (Some(fm), Some(f0), Some(fp)) =
            (sweep.value_at(&(&e - &h)), sweep.value_at(&e), sweep.value_at(&(&e + &h)))
        else {
            h /= int(2);
            continue;
        };
        let curvature = fp - f0 * int(2) + fm;
        if !curvature.is_negative() {
            h /= int(2);
            continue;
        }
        let vertex = &e + &h * (fm - fp) / (curvature * int(2));
        sweep.run(vec![vertex.clone()]);
        if sweep.best.as_ref() == Some(&vertex) {
            h = (&vertex - &e).abs().max(&h / int(4));
        } else {
            h /= int(2);
        }
    }
    let e_star = sweep.best.clone().expect("incumbent");
    let best = sweep.cache.remove(&e_star).flatten().expect("incumbent is feasible");
    let frequencies = f.problem.variables.iter().cloned().zip(best.x.iter().cloned()).collect();
    let mut full = vec![Rational::zero(); n.mdp.num_states()];
    let mut per_choice: BTreeMap<(usize, usize), Rational> = BTreeMap::new();
    for (j, &(i, c)) in f.vars.iter().enumerate() {
        full[i] += &best.x[j];
        per_choice.insert((i, c), best.x[j].clone());
    }
    let scheduler = scheduler_from_frequencies(n, &per_choice);
    let dist = terminal_distribution(f.tau.iter().map(|(j, v)| (v.clone(), best.x[*j].clone())))?;
    let value = penalized(&dist, &PenaltySpec::new(PenaltyKind::Madpe, lambda.clone()))?;
    let gap_bound = (one() + lambda * int(2)) * &delta / int(2);
    Ok(MadpeSolution {
        value,
        e_star,
        frequencies,
        scheduler,
        sweep_log: sweep.log,
        delta,
        gap_bound,
        k: n.k,
        ell: n.ell,
    })
}

fn terminal_distribution(
    atoms: impl IntoIterator<Item = (Rational, Rational)>,
) -> Result<RewardDistribution, MadpeError> {
    let mut merged: BTreeMap<Rational, Rational> = BTreeMap::new();
    for (v, p) in atoms {
        if !p.is_zero() {
            *merged.entry(v).or_insert_with(Rational::zero) += p;
        }
    }
    Ok(RewardDistribution::from_atoms(merged)?)
}

fn scheduler_from_frequencies(n: &UnfoldedN, x: &BTreeMap<(usize, usize), Rational>) -> RewardBasedScheduler {
    let mut out = RewardBasedScheduler { limit: n.k, entries: BTreeMap::new(), default: n.terminal.clone() };
    for s in 0..n.original.num_states() {
        if n.original.is_trap(s) {
            continue;
        }
        for w in 0..n.k {
            let i = n.pair_state(s, w);
            let list: Vec<(usize, &Rational)> = (0..n.mdp.choices(i).len())
                .filter_map(|c| x.get(&(i, c)).filter(|v| v.is_positive()).map(|v| (c, v)))
                .collect();
            let total: Rational = list.iter().map(|(_, v)| (*v).clone()).sum();
            if total.is_zero() {
                continue;
            }
            let dist = list.into_iter().map(|(c, v)| (n.original.choices(s)[c].action.clone(), v / &total)).collect();
            out.entries.insert((n.original.state_name(s).to_string(), w), dist);
        }
    }
    out
}

/// The randomized reward-based scheduler 𝔖↑ₖ𝔗 read off feasible frequencies.
///
/// `x` holds one value per variable of [`build_frequency_constraints`]. Pairs
/// with zero total frequency, and all pairs at `w ≥ k`, follow 𝔗.
pub fn extract_scheduler(n: &UnfoldedN, x: &[Rational]) -> Result<RewardBasedScheduler, MadpeError> {
    let f = build_frequency_constraints(n);
    if x.len() != f.problem.variables.len() {
        return Err(MadpeError::InfeasibleFrequencies(format!(
            "expected {} values, got {}",
            f.problem.variables.len(),
            x.len()
        )));
    }
    if !f.problem.is_feasible(x) {
        return Err(MadpeError::InfeasibleFrequencies("flow balance or non-negativity violated".into()));
    }
    let per_choice = f.vars.iter().zip(x).map(|(&ic, v)| (ic, v.clone())).collect();
    Ok(scheduler_from_frequencies(n, &per_choice))
}

/// Reward-counter finite-memory schedulers as reward-based ones.
fn counter_form(sched: &Scheduler) -> Result<Scheduler, MadpeError> {
    match sched {
        Scheduler::FiniteMemory(f) => Ok(Scheduler::RewardBased(f.to_reward_based().ok_or_else(|| {
            ModelError::Scheduler("table memory is not a function of the accumulated reward".into())
        })?)),
        other => Ok(other.clone()),
    }
}

/// 𝔖↑ₖ𝔗: `sched` below accumulated reward `k`, `terminal` from `k` on.
pub fn switch_to_terminal(
    m: &Mdp,
    sched: &Scheduler,
    k: u64,
    terminal: &MemorylessScheduler,
) -> Result<RewardBasedScheduler, MadpeError> {
    let resolved = counter_form(sched)?.resolve(m)?;
    let mut out = RewardBasedScheduler { limit: k, entries: BTreeMap::new(), default: terminal.clone() };
    for s in (0..m.num_states()).filter(|&s| m.choices(s).len() > 1) {
        for w in 0..k {
            let d = resolved.decide(m, s, &int(w as i64), 0)?;
            let dist = d.iter().map(|(c, p)| (m.choices(s)[*c].action.clone(), p.clone())).collect();
            out.entries.insert((m.state_name(s).to_string(), w), dist);
        }
    }
    Ok(out)
}

/// Memoryless scheduler of 𝒩 playing `sched`'s decision at `(s, w)` for `w < k`.
///
/// Finite-memory schedulers are accepted when their memory is the reward counter.
pub fn lift_scheduler(n: &UnfoldedN, sched: &Scheduler) -> Result<MemorylessScheduler, MadpeError> {
    let m = &n.original;
    let resolved = counter_form(sched)?.resolve(m)?;
    let mut out = MemorylessScheduler::default();
    for s in (0..m.num_states()).filter(|&s| m.choices(s).len() > 1) {
        for w in 0..n.k {
            let d = resolved.decide(m, s, &int(w as i64), 0)?;
            let dist = d.iter().map(|(c, p)| (m.choices(s)[*c].action.clone(), p.clone())).collect();
            out.choices.insert(n.mdp.state_name(n.pair_state(s, w)).to_string(), dist);
        }
    }
    Ok(out)
}

/// Expected visits of every 𝒩 state under a memoryless scheduler of 𝒩.
fn visit_frequencies(n: &UnfoldedN, lifted: &MemorylessScheduler) -> Result<Vec<Rational>, MadpeError> {
    let nm = &n.mdp;
    let resolved = Scheduler::Memoryless(lifted.clone()).resolve(nm)?;
    let size = nm.num_states();
    let mut rows: Vec<Vec<(usize, Rational)>> = vec![Vec::new(); size];
    for s in 0..size {
        for (c, pc) in resolved.decide(nm, s, &Rational::zero(), 0)?.iter() {
            for (t, pt) in &nm.choices(s)[*c].successors {
                rows[*t].push((s, pc * pt));
            }
        }
    }
    let mut rhs = vec![Rational::zero(); size];
    rhs[nm.initial()] = one();
    Ok(solve_absorbing(&rows, &rhs)?)
}

/// Frequencies `x_{s,w,α}` of [`build_frequency_constraints`]'s variables
/// under a scheduler of the original model.
pub fn frequencies_of(n: &UnfoldedN, sched: &Scheduler) -> Result<Vec<Rational>, MadpeError> {
    let lifted = lift_scheduler(n, sched)?;
    let visits = visit_frequencies(n, &lifted)?;
    let resolved = Scheduler::Memoryless(lifted).resolve(&n.mdp)?;
    let f = build_frequency_constraints(n);
    let mut out = Vec::with_capacity(f.vars.len());
    for &(i, c) in &f.vars {
        let d = resolved.decide(&n.mdp, i, &Rational::zero(), 0)?;
        let p = d.iter().find(|(cc, _)| *cc == c).map(|(_, p)| p.clone()).unwrap_or_else(Rational::zero);
        out.push(&visits[i] * p);
    }
    Ok(out)
}

/// Outcome distribution of 𝒩 (terminal `tau` rewards) under `sched`.
pub fn unfolding_distribution(n: &UnfoldedN, sched: &Scheduler) -> Result<RewardDistribution, MadpeError> {
    let lifted = lift_scheduler(n, sched)?;
    let visits = visit_frequencies(n, &lifted)?;
    let atoms = (0..n.num_pairs()).filter_map(|i| n.tau_value(i).map(|v| (v.clone(), visits[i].clone())));
    terminal_distribution(atoms)
}

/// `MADPE[λ]` of `sched` evaluated in 𝒩.
pub fn madpe_in_unfolding(n: &UnfoldedN, sched: &Scheduler, lambda: &Rational) -> Result<Rational, MadpeError> {
    let d = unfolding_distribution(n, sched)?;
    Ok(penalized(&d, &PenaltySpec::new(PenaltyKind::Madpe, lambda.clone()))?)
}
