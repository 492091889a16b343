//! Exhaustive grid search over randomized schedulers.
//!
//! On a model without reachable cycles every decision (a state, or a
//! `(state, w)` pair) is met at most once per path, so the probability of
//! each outcome is multilinear in the decisions' action distributions. The
//! outcome law at a grid point is therefore the weighted sum of the laws of
//! the deterministic corner schedulers, each obtained by explicit path
//! enumeration. Points are evaluated with scaled `i128` integers and fall
//! back to exact rationals on overflow.

use super::{backward_induction, enumerate_paths, objective, reachable_cycle, OracleError, PathBudget};
use crate::measures::{PenaltyKind, PenaltySpec};
use crate::model::{ActionDist, Mdp, MemorylessScheduler, RewardBasedScheduler, Scheduler};
use crate::rational::{int, one, Rational};
use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::{One, ToPrimitive, Zero};
use rayon::prelude::*;
use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet, VecDeque};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SchedulerClass {
    Memoryless,
    /// Separate decisions for every `(state, w)` with `w ≤ bound`; above the
    /// bound the expectation-optimal scheduler 𝔗 is followed.
    RewardBased {
        bound: u64,
    },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GridSpec {
    /// Probabilities are multiples of `1/resolution`.
    pub resolution: u64,
    pub class: SchedulerClass,
    pub objective: PenaltySpec,
    /// Largest number of grid points evaluated.
    pub budget: u128,
    /// Also return the value at every point.
    pub keep_surface: bool,
    pub parallel: bool,
}

impl GridSpec {
    pub fn new(resolution: u64, class: SchedulerClass, objective: PenaltySpec) -> Self {
        GridSpec { resolution, class, objective, budget: 50_000_000, keep_surface: false, parallel: true }
    }
}

/// One evaluated point: the action distribution of every decision.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GridPoint {
    pub probabilities: Vec<Vec<Rational>>,
    pub value: Rational,
}

#[derive(Debug, Clone)]
pub struct GridResult {
    pub value: Rational,
    pub scheduler: Scheduler,
    pub best: GridPoint,
    /// `(state, reward level, actions)` per decision, in grid order.
    pub decisions: Vec<(String, Option<u64>, Vec<String>)>,
    pub points: u128,
    pub surface: Option<Vec<GridPoint>>,
}

struct Decision {
    state: usize,
    level: Option<u64>,
    actions: usize,
}

fn decisions(m: &Mdp, class: SchedulerClass) -> Result<Vec<Decision>, OracleError> {
    let reach = crate::graph::reachable_from(&m.adjacency(), m.initial());
    match class {
        SchedulerClass::Memoryless => Ok((0..m.num_states())
            .filter(|&s| reach[s] && m.choices(s).len() > 1)
            .map(|s| Decision { state: s, level: None, actions: m.choices(s).len() })
            .collect()),
        SchedulerClass::RewardBased { bound } => {
            let mut seen: BTreeSet<(usize, u64)> = BTreeSet::new();
            let mut queue = VecDeque::from([(m.initial(), 0u64)]);
            seen.insert((m.initial(), 0));
            while let Some((s, w)) = queue.pop_front() {
                for ch in m.choices(s) {
                    let r = ch.reward.to_integer().to_u64().ok_or_else(|| {
                        crate::model::ModelError::Scheduler(format!("reward {} is not a natural number", ch.reward))
                    })?;
                    let next = w.saturating_add(r);
                    if next > bound {
                        continue;
                    }
                    for (t, _) in &ch.successors {
                        if seen.insert((*t, next)) {
                            queue.push_back((*t, next));
                        }
                    }
                }
            }
            Ok(seen
                .into_iter()
                .filter(|&(s, _)| m.choices(s).len() > 1)
                .map(|(s, w)| Decision { state: s, level: Some(w), actions: m.choices(s).len() })
                .collect())
        }
    }
}

/// Compositions of `g` into `parts` non-negative parts, lexicographically ascending.
fn compositions(g: u64, parts: usize) -> Vec<Vec<u64>> {
    if parts == 1 {
        return vec![vec![g]];
    }
    let mut out = Vec::new();
    for first in 0..=g {
        for mut rest in compositions(g - first, parts - 1) {
            rest.insert(0, first);
            out.push(rest);
        }
    }
    out
}

fn lexicographic_action(m: &Mdp, s: usize) -> &str {
    m.choices(s).iter().map(|c| c.action.as_str()).min().expect("non-trap")
}

fn build_scheduler(
    m: &Mdp,
    class: SchedulerClass,
    decisions: &[Decision],
    dists: &[Vec<Rational>],
    terminal: Option<&MemorylessScheduler>,
) -> Scheduler {
    let named = |d: &Decision, dist: &[Rational]| -> ActionDist {
        m.choices(d.state)
            .iter()
            .zip(dist)
            .filter(|(_, p)| !p.is_zero())
            .map(|(c, p)| (c.action.clone(), p.clone()))
            .collect()
    };
    match class {
        SchedulerClass::Memoryless => {
            let mut out = MemorylessScheduler::default();
            for s in (0..m.num_states()).filter(|&s| m.choices(s).len() > 1) {
                out.set(m.state_name(s), lexicographic_action(m, s));
            }
            for (d, dist) in decisions.iter().zip(dists) {
                out.choices.insert(m.state_name(d.state).to_string(), named(d, dist));
            }
            Scheduler::Memoryless(out)
        }
        SchedulerClass::RewardBased { bound } => {
            let mut out = RewardBasedScheduler {
                limit: bound.saturating_add(1),
                entries: BTreeMap::new(),
                default: terminal.cloned().unwrap_or_default(),
            };
            for (d, dist) in decisions.iter().zip(dists) {
                out.entries.insert((m.state_name(d.state).to_string(), d.level.expect("level")), named(d, dist));
            }
            Scheduler::RewardBased(out)
        }
    }
}

/// Objective value as an integer numerator over a denominator fixed for the
/// whole grid, or an exact rational when the integers overflow.
#[derive(Debug, Clone)]
enum Val {
    Int(i128),
    Exact(Rational),
}

struct Scaled {
    /// Outcome values as integers.
    values: Vec<i128>,
    /// `P_c(v)·L` per corner and outcome.
    corner_mass: Vec<Vec<i128>>,
    d: i128,
    denominator: Rational,
}

struct Evaluator<'a> {
    spec: &'a PenaltySpec,
    values: Vec<Rational>,
    /// Exact corner laws.
    corner_prob: Vec<Vec<Rational>>,
    scaled: Option<Scaled>,
    comps: Vec<Vec<Vec<u64>>>,
    radix: Vec<usize>,
    corner_digits: Vec<Vec<usize>>,
    g: u64,
}

impl Evaluator<'_> {
    fn digits(&self, mut index: u128) -> Vec<usize> {
        let mut out = vec![0; self.radix.len()];
        for d in (0..self.radix.len()).rev() {
            let r = self.radix[d] as u128;
            out[d] = (index % r) as usize;
            index /= r;
        }
        out
    }

    fn point(&self, digits: &[usize]) -> Vec<&Vec<u64>> {
        digits.iter().enumerate().map(|(d, &i)| &self.comps[d][i]).collect()
    }

    fn weights(&self, point: &[&Vec<u64>]) -> Option<Vec<i128>> {
        self.corner_digits
            .iter()
            .map(|c| c.iter().enumerate().try_fold(1i128, |acc, (d, &a)| acc.checked_mul(point[d][a] as i128)))
            .collect()
    }

    fn eval(&self, digits: &[usize]) -> Val {
        let point = self.point(digits);
        if let Some(v) = self.eval_int(&point) {
            return Val::Int(v);
        }
        Val::Exact(self.eval_exact(&point))
    }

    fn eval_int(&self, point: &[&Vec<u64>]) -> Option<i128> {
        let sc = self.scaled.as_ref()?;
        let w = self.weights(point)?;
        let mut q = vec![0i128; sc.values.len()];
        for (c, wc) in w.iter().enumerate() {
            if *wc == 0 {
                continue;
            }
            for (v, mass) in sc.corner_mass[c].iter().enumerate() {
                if *mass != 0 {
                    q[v] = q[v].checked_add(mass.checked_mul(*wc)?)?;
                }
            }
        }
        let d = sc.d;
        let mut ed = 0i128;
        for (v, qv) in sc.values.iter().zip(&q) {
            ed = ed.checked_add(v.checked_mul(*qv)?)?;
        }
        let (ln, ld) = small(&self.spec.lambda)?;
        let mut pen = 0i128;
        match self.spec.kind {
            PenaltyKind::Madpe | PenaltyKind::Smadpe | PenaltyKind::Vpe | PenaltyKind::Svpe => {
                for (v, qv) in sc.values.iter().zip(&q) {
                    if *qv == 0 {
                        continue;
                    }
                    let dev = v.checked_mul(d)?.checked_sub(ed)?;
                    let below = dev < 0;
                    let term = match self.spec.kind {
                        PenaltyKind::Madpe => dev.checked_abs()?,
                        PenaltyKind::Smadpe if below => dev.checked_neg()?,
                        PenaltyKind::Vpe => dev.checked_mul(dev)?,
                        PenaltyKind::Svpe if below => dev.checked_mul(dev)?,
                        _ => 0,
                    };
                    pen = pen.checked_add(qv.checked_mul(term)?)?;
                }
                let scale = match self.spec.kind {
                    PenaltyKind::Vpe | PenaltyKind::Svpe => d.checked_mul(d)?,
                    _ => d,
                };
                ld.checked_mul(ed)?.checked_mul(scale)?.checked_sub(ln.checked_mul(pen)?)
            }
            PenaltyKind::Tbpe => {
                let (tn, td) = small(self.spec.threshold.as_ref()?)?;
                for (v, qv) in sc.values.iter().zip(&q) {
                    let vt = v.checked_mul(td)?;
                    if vt < tn {
                        pen = pen.checked_add(qv.checked_mul(tn - vt)?)?;
                    }
                }
                ld.checked_mul(ed)?.checked_mul(td)?.checked_sub(ln.checked_mul(pen)?)
            }
        }
    }

    fn eval_exact(&self, point: &[&Vec<u64>]) -> Rational {
        let g = int(self.g as i64);
        let mut probs = vec![Rational::zero(); self.values.len()];
        for (c, digits) in self.corner_digits.iter().enumerate() {
            let mut w = one();
            for (d, &a) in digits.iter().enumerate() {
                w *= Rational::from_integer(point[d][a].into()) / &g;
            }
            if w.is_zero() {
                continue;
            }
            for (v, p) in self.corner_prob[c].iter().enumerate() {
                probs[v] += &w * p;
            }
        }
        let atoms: Vec<(Rational, Rational)> = self.values.iter().cloned().zip(probs).collect();
        objective(&atoms, self.spec).expect("threshold checked")
    }

    fn to_rational(&self, v: &Val) -> Rational {
        match v {
            Val::Int(n) => {
                Rational::from_integer(BigInt::from(*n)) / &self.scaled.as_ref().expect("scaled").denominator
            }
            Val::Exact(r) => r.clone(),
        }
    }

    fn compare(&self, a: &Val, b: &Val) -> Ordering {
        match (a, b) {
            (Val::Int(x), Val::Int(y)) => x.cmp(y),
            _ => self.to_rational(a).cmp(&self.to_rational(b)),
        }
    }
}

fn small(r: &Rational) -> Option<(i128, i128)> {
    Some((r.numer().to_i128()?, r.denom().to_i128()?))
}

/// Evaluates the objective at every grid scheduler and returns the best one,
/// ties broken towards the lexicographically smallest probability vector.
pub fn grid_search(m: &Mdp, spec: &GridSpec) -> Result<GridResult, OracleError> {
    if spec.resolution == 0 {
        return Err(OracleError::Resolution);
    }
    if spec.objective.kind == PenaltyKind::Tbpe && spec.objective.threshold.is_none() {
        return Err(OracleError::MissingThreshold);
    }
    if reachable_cycle(m) {
        return Err(OracleError::Cyclic);
    }
    let decs = decisions(m, spec.class)?;
    let comps: Vec<Vec<Vec<u64>>> = decs.iter().map(|d| compositions(spec.resolution, d.actions)).collect();
    let radix: Vec<usize> = comps.iter().map(Vec::len).collect();
    let total = radix
        .iter()
        .try_fold(1u128, |acc, &r| acc.checked_mul(r as u128))
        .ok_or(OracleError::GridBudget { points: u128::MAX, budget: spec.budget })?;
    if total > spec.budget {
        return Err(OracleError::GridBudget { points: total, budget: spec.budget });
    }
    let corner_count: usize = decs.iter().map(|d| d.actions).product();
    let terminal = match spec.class {
        SchedulerClass::RewardBased { .. } => Some(backward_induction(m)?.1),
        SchedulerClass::Memoryless => None,
    };
    let corner_digits: Vec<Vec<usize>> = (0..corner_count)
        .map(|mut c| {
            let mut out = vec![0; decs.len()];
            for d in (0..decs.len()).rev() {
                out[d] = c % decs[d].actions;
                c /= decs[d].actions;
            }
            out
        })
        .collect();
    let mut laws = Vec::with_capacity(corner_count);
    for digits in &corner_digits {
        let dists: Vec<Vec<Rational>> = digits
            .iter()
            .zip(&decs)
            .map(|(&a, d)| (0..d.actions).map(|i| if i == a { one() } else { Rational::zero() }).collect())
            .collect();
        let sched = build_scheduler(m, spec.class, &decs, &dists, terminal.as_ref());
        laws.push(enumerate_paths(m, &sched, PathBudget::default())?);
    }
    let values: Vec<Rational> =
        laws.iter().flat_map(|d| d.atoms().keys().cloned()).collect::<BTreeSet<_>>().into_iter().collect();
    let corner_prob: Vec<Vec<Rational>> =
        laws.iter().map(|d| values.iter().map(|v| d.probability(v)).collect()).collect();
    let scaled = scale(&values, &corner_prob, spec, decs.len());
    let ev = Evaluator {
        spec: &spec.objective,
        values,
        corner_prob,
        scaled,
        comps,
        radix,
        corner_digits,
        g: spec.resolution,
    };
    let chunk = 4096u128;
    let chunks = total.div_ceil(chunk);
    let best_in = |c: u128| -> (Val, u128) {
        let start = c * chunk;
        let end = (start + chunk).min(total);
        let mut best: Option<(Val, u128)> = None;
        for i in start..end {
            let v = ev.eval(&ev.digits(i));
            if best.as_ref().map_or(true, |(b, _)| ev.compare(&v, b) == Ordering::Greater) {
                best = Some((v, i));
            }
        }
        best.expect("non-empty chunk")
    };
    let partial: Vec<(Val, u128)> = if spec.parallel {
        (0..chunks).into_par_iter().map(best_in).collect()
    } else {
        (0..chunks).map(best_in).collect()
    };
    let mut best: Option<(Val, u128)> = None;
    for (v, i) in partial {
        if best.as_ref().map_or(true, |(b, _)| ev.compare(&v, b) == Ordering::Greater) {
            best = Some((v, i));
        }
    }
    let (best_val, best_index) = best.expect("at least one grid point");
    let to_probs = |digits: &[usize]| -> Vec<Vec<Rational>> {
        ev.point(digits)
            .iter()
            .map(|c| c.iter().map(|&n| Rational::new(n.into(), spec.resolution.into())).collect())
            .collect()
    };
    let best_probs = to_probs(&ev.digits(best_index));
    let surface = spec.keep_surface.then(|| {
        (0..total)
            .map(|i| {
                let digits = ev.digits(i);
                GridPoint { probabilities: to_probs(&digits), value: ev.to_rational(&ev.eval(&digits)) }
            })
            .collect()
    });
    let scheduler = build_scheduler(m, spec.class, &decs, &best_probs, terminal.as_ref());
    let value = ev.to_rational(&best_val);
    Ok(GridResult {
        value: value.clone(),
        scheduler,
        best: GridPoint { probabilities: best_probs, value },
        decisions: decs
            .iter()
            .map(|d| {
                (
                    m.state_name(d.state).to_string(),
                    d.level,
                    m.choices(d.state).iter().map(|c| c.action.clone()).collect(),
                )
            })
            .collect(),
        points: total,
        surface,
    })
}

/// Integer form of the corner laws, when every quantity fits in `i128`.
fn scale(values: &[Rational], corner_prob: &[Vec<Rational>], spec: &GridSpec, dims: usize) -> Option<Scaled> {
    if values.iter().any(|v| !v.is_integer()) {
        return None;
    }
    let mut l = BigInt::one();
    for row in corner_prob {
        for p in row {
            l = l.lcm(p.denom());
        }
    }
    let lf = Rational::from_integer(l.clone());
    let corner_mass: Option<Vec<Vec<i128>>> =
        corner_prob.iter().map(|row| row.iter().map(|p| (p * &lf).to_integer().to_i128()).collect()).collect();
    let gpow = BigInt::from(spec.resolution).pow(dims as u32);
    let d = &l * &gpow;
    let di = d.to_i128()?;
    let (_, ld) = small(&spec.objective.lambda)?;
    let d_rat = Rational::from_integer(d.clone());
    let ld_rat = Rational::from_integer(BigInt::from(ld));
    let denominator = match spec.objective.kind {
        PenaltyKind::Madpe | PenaltyKind::Smadpe => &d_rat * &d_rat * ld_rat,
        PenaltyKind::Vpe | PenaltyKind::Svpe => &d_rat * &d_rat * &d_rat * ld_rat,
        PenaltyKind::Tbpe => {
            let (_, td) = small(spec.objective.threshold.as_ref()?)?;
            &d_rat * ld_rat * Rational::from_integer(BigInt::from(td))
        }
    };
    Some(Scaled {
        values: values.iter().map(|v| v.to_integer().to_i128()).collect::<Option<_>>()?,
        corner_mass: corner_mass?,
        d: di,
        denominator,
    })
}

/// Best deterministic reward-based scheduler by exhaustive enumeration
/// (every reachable `(state, w)` pair decides separately).
pub fn deterministic_optimum(m: &Mdp, objective: &PenaltySpec) -> Result<GridResult, OracleError> {
    if reachable_cycle(m) {
        return Err(OracleError::Cyclic);
    }
    let bound = longest_reward(m);
    let mut spec = GridSpec::new(1, SchedulerClass::RewardBased { bound }, objective.clone());
    spec.parallel = false;
    grid_search(m, &spec)
}

fn longest_reward(m: &Mdp) -> u64 {
    fn go(m: &Mdp, s: usize, memo: &mut Vec<Option<u64>>) -> u64 {
        if let Some(v) = memo[s] {
            return v;
        }
        let mut best = 0;
        for ch in m.choices(s) {
            let r = ch.reward.to_integer().to_u64().unwrap_or(0);
            for (t, _) in &ch.successors {
                best = best.max(r + go(m, *t, memo));
            }
        }
        memo[s] = Some(best);
        best
    }
    let mut memo = vec![None; m.num_states()];
    go(m, m.initial(), &mut memo)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::{geometric_loop, safe_or_gamble, two_branch};
    use crate::rational::ratio;

    #[test]
    fn two_branch_madpe_lambda_four() {
        let spec = GridSpec::new(2, SchedulerClass::Memoryless, PenaltySpec::new(PenaltyKind::Madpe, int(4)));
        let r = grid_search(&two_branch(), &spec).unwrap();
        assert_eq!(r.value, int(0));
        assert_eq!(r.best.probabilities, vec![vec![ratio(1, 2), ratio(1, 2)]]);
        assert_eq!(r.points, 3);
    }

    #[test]
    fn safe_or_gamble_svpe_interior_optimum() {
        let spec = GridSpec::new(500, SchedulerClass::Memoryless, PenaltySpec::new(PenaltyKind::Svpe, ratio(1, 100)));
        let r = grid_search(&safe_or_gamble(), &spec).unwrap();
        let p = &r.best.probabilities[0][0];
        assert!((crate::rational::to_f64(p) - 0.206).abs() <= 1.0 / 500.0);
        let cubic = int(40) + p * int(2) - p * p * int(5) + p * p * p / int(2);
        assert_eq!(r.value, cubic);
    }

    #[test]
    fn safe_or_gamble_vpe_is_deterministic() {
        for lambda in [ratio(1, 100), ratio(1, 10), one()] {
            let spec = GridSpec::new(100, SchedulerClass::Memoryless, PenaltySpec::new(PenaltyKind::Vpe, lambda));
            let p = grid_search(&safe_or_gamble(), &spec).unwrap().best.probabilities[0][0].clone();
            assert!(p.is_zero() || p == one());
        }
    }

    #[test]
    fn surface_and_sequential_agree() {
        let mut spec = GridSpec::new(20, SchedulerClass::Memoryless, PenaltySpec::new(PenaltyKind::Madpe, ratio(2, 5)));
        spec.keep_surface = true;
        let par = grid_search(&two_branch(), &spec).unwrap();
        spec.parallel = false;
        let seq = grid_search(&two_branch(), &spec).unwrap();
        assert_eq!(par.value, seq.value);
        let surface = seq.surface.unwrap();
        assert_eq!(surface.len(), 21);
        assert_eq!(surface.iter().map(|p| p.value.clone()).max().unwrap(), seq.value);
        assert_eq!(seq.value, ratio(11, 10));
    }

    #[test]
    fn reward_based_class_and_budget() {
        let spec = GridSpec::new(4, SchedulerClass::RewardBased { bound: 1 }, PenaltySpec::tbpe(one(), one()));
        let r = grid_search(&two_branch(), &spec).unwrap();
        assert_eq!(r.value, ratio(5, 4));
        assert_eq!(r.decisions, vec![("s_init".to_string(), Some(0), vec!["alpha".to_string(), "beta".to_string()])]);
        let mut tiny = spec.clone();
        tiny.budget = 2;
        assert!(matches!(grid_search(&two_branch(), &tiny), Err(OracleError::GridBudget { .. })));
        assert!(matches!(grid_search(&geometric_loop(&ratio(1, 4)), &spec), Err(OracleError::Cyclic)));
    }

    #[test]
    fn deterministic_enumeration() {
        let r = deterministic_optimum(&safe_or_gamble(), &PenaltySpec::tbpe(one(), int(30))).unwrap();
        assert_eq!(r.value, int(40));
        assert_eq!(r.points, 2);
    }
}
