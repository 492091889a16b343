use super::chain::{Chain, CHAIN_ACTION};
use super::error::ModelError;
use super::mdp::{Choice, Mdp};
use crate::rational::Rational;
use num_traits::{One, Signed, Zero};
use std::borrow::Cow;
use std::collections::{BTreeMap, HashMap};

/// Distribution over action names, in the order written.
pub type ActionDist = Vec<(String, Rational)>;

/// Memoryless randomized scheduler keyed by state name.
///
/// States with a single enabled action may be omitted; traps never need an entry.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct MemorylessScheduler {
    pub choices: BTreeMap<String, ActionDist>,
}

impl MemorylessScheduler {
    /// Deterministic scheduler from a choice index per state (`None` for traps).
    pub fn from_policy(m: &Mdp, policy: &[Option<usize>]) -> Self {
        let choices = policy
            .iter()
            .enumerate()
            .filter_map(|(s, c)| {
                c.map(|c| (m.state_name(s).to_string(), vec![(m.choices(s)[c].action.clone(), Rational::one())]))
            })
            .collect();
        MemorylessScheduler { choices }
    }

    /// Sets a deterministic choice.
    pub fn set(&mut self, state: &str, action: &str) {
        self.choices.insert(state.to_string(), vec![(action.to_string(), Rational::one())]);
    }
}

/// Scheduler depending on the state and the reward accumulated so far.
///
/// `entries` are consulted for accumulated rewards `w < limit`; missing
/// entries and rewards `w ≥ limit` fall back to `default`.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RewardBasedScheduler {
    pub limit: u64,
    pub entries: BTreeMap<(String, u64), ActionDist>,
    pub default: MemorylessScheduler,
}

/// Memory update of a [`FiniteMemoryScheduler`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum MemoryUpdate {
    /// Mode is the accumulated reward, clamped to `cap` as soon as it reaches `threshold`.
    RewardCounter { threshold: Rational, cap: u64 },
    /// Explicit table `(state, action, successor, mode) → mode`.
    Table(BTreeMap<(String, String, String, u64), u64>),
}

/// Deterministic scheduler with finitely many memory modes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FiniteMemoryScheduler {
    pub modes: u64,
    pub initial_mode: u64,
    pub update: MemoryUpdate,
    pub choice: BTreeMap<(String, u64), String>,
}

impl FiniteMemoryScheduler {
    /// The equivalent reward-based scheduler when memory is a reward counter.
    ///
    /// With integer rewards the counter equals `min(w, cap)`, so counter values
    /// below the cap become explicit entries and the cap level becomes the default.
    pub fn to_reward_based(&self) -> Option<RewardBasedScheduler> {
        let MemoryUpdate::RewardCounter { cap, .. } = &self.update else {
            return None;
        };
        let mut out = RewardBasedScheduler { limit: *cap, ..Default::default() };
        for ((state, mode), action) in &self.choice {
            let dist = vec![(action.clone(), Rational::one())];
            if mode < cap {
                out.entries.insert((state.clone(), *mode), dist);
            } else if mode == cap {
                out.default.choices.insert(state.clone(), dist);
            }
        }
        Some(out)
    }
}

/// Resolution of nondeterminism.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Scheduler {
    Memoryless(MemorylessScheduler),
    RewardBased(RewardBasedScheduler),
    FiniteMemory(FiniteMemoryScheduler),
}

impl From<MemorylessScheduler> for Scheduler {
    fn from(s: MemorylessScheduler) -> Self {
        Scheduler::Memoryless(s)
    }
}

impl From<RewardBasedScheduler> for Scheduler {
    fn from(s: RewardBasedScheduler) -> Self {
        Scheduler::RewardBased(s)
    }
}

impl From<FiniteMemoryScheduler> for Scheduler {
    fn from(s: FiniteMemoryScheduler) -> Self {
        Scheduler::FiniteMemory(s)
    }
}

type IndexDist = Vec<(usize, Rational)>;

/// A scheduler bound to a concrete model: names resolved to indices and
/// distributions checked.
#[derive(Debug, Clone)]
pub struct ResolvedScheduler {
    kind: ResolvedKind,
}

#[derive(Debug, Clone)]
enum ResolvedKind {
    Memoryless(Vec<IndexDist>),
    RewardBased { limit: u64, entries: HashMap<(usize, u64), IndexDist>, default: Vec<IndexDist> },
    FiniteMemory { initial: u64, choice: HashMap<(usize, u64), usize>, update: ResolvedUpdate },
}

#[derive(Debug, Clone)]
enum ResolvedUpdate {
    Counter { threshold: Rational, cap: u64 },
    Table(HashMap<(usize, usize, usize, u64), u64>),
}

fn resolve_dist(m: &Mdp, state: &str, dist: &ActionDist) -> Result<(usize, IndexDist), ModelError> {
    let s = m.state_index(state).ok_or_else(|| ModelError::UnknownState { name: state.to_string(), line: None })?;
    let mut out: IndexDist = Vec::new();
    let mut sum = Rational::zero();
    for (action, p) in dist {
        let c = m.choice_index(s, action).ok_or_else(|| ModelError::UnknownAction {
            state: state.to_string(),
            action: action.clone(),
            line: None,
        })?;
        if p.is_negative() || *p > Rational::one() {
            return Err(ModelError::Scheduler(format!("probability {p} for `{action}` at `{state}` outside [0,1]")));
        }
        sum += p;
        if p.is_zero() {
            continue;
        }
        match out.iter_mut().find(|(i, _)| *i == c) {
            Some(entry) => entry.1 += p,
            None => out.push((c, p.clone())),
        }
    }
    if sum != Rational::one() {
        return Err(ModelError::Scheduler(format!("distribution at `{state}` sums to {sum}")));
    }
    Ok((s, out))
}

fn resolve_memoryless(m: &Mdp, sched: &MemorylessScheduler) -> Result<Vec<IndexDist>, ModelError> {
    let mut table: Vec<Option<IndexDist>> = vec![None; m.num_states()];
    for (state, dist) in &sched.choices {
        let (s, d) = resolve_dist(m, state, dist)?;
        if m.is_trap(s) {
            continue;
        }
        table[s] = Some(d);
    }
    table
        .into_iter()
        .enumerate()
        .map(|(s, d)| match d {
            Some(d) => Ok(d),
            None if m.is_trap(s) => Ok(Vec::new()),
            None if m.choices(s).len() == 1 => Ok(vec![(0, Rational::one())]),
            None => Err(ModelError::Scheduler(format!("no decision for state `{}`", m.state_name(s)))),
        })
        .collect()
}

impl Scheduler {
    /// Binds the scheduler to `m`, checking that every referenced state and
    /// action exists and every distribution sums to 1.
    pub fn resolve(&self, m: &Mdp) -> Result<ResolvedScheduler, ModelError> {
        let kind = match self {
            Scheduler::Memoryless(s) => ResolvedKind::Memoryless(resolve_memoryless(m, s)?),
            Scheduler::RewardBased(r) => {
                let default = resolve_memoryless(m, &r.default)?;
                let mut entries = HashMap::new();
                for ((state, w), dist) in &r.entries {
                    let (s, d) = resolve_dist(m, state, dist)?;
                    if !m.is_trap(s) {
                        entries.insert((s, *w), d);
                    }
                }
                ResolvedKind::RewardBased { limit: r.limit, entries, default }
            }
            Scheduler::FiniteMemory(f) => {
                let mut choice = HashMap::new();
                for ((state, mode), action) in &f.choice {
                    let (s, d) = resolve_dist(m, state, &vec![(action.clone(), Rational::one())])?;
                    if let Some((c, _)) = d.first() {
                        choice.insert((s, *mode), *c);
                    }
                }
                let update = match &f.update {
                    MemoryUpdate::RewardCounter { threshold, cap } => {
                        ResolvedUpdate::Counter { threshold: threshold.clone(), cap: *cap }
                    }
                    MemoryUpdate::Table(table) => {
                        let mut out = HashMap::new();
                        for ((state, action, succ, mode), next) in table {
                            let (s, d) = resolve_dist(m, state, &vec![(action.clone(), Rational::one())])?;
                            let t = m
                                .state_index(succ)
                                .ok_or_else(|| ModelError::UnknownState { name: succ.clone(), line: None })?;
                            out.insert((s, d[0].0, t, *mode), *next);
                        }
                        ResolvedUpdate::Table(out)
                    }
                };
                ResolvedKind::FiniteMemory { initial: f.initial_mode, choice, update }
            }
        };
        Ok(ResolvedScheduler { kind })
    }
}

impl ResolvedScheduler {
    pub fn initial_mode(&self) -> u64 {
        match &self.kind {
            ResolvedKind::FiniteMemory { initial, .. } => *initial,
            _ => 0,
        }
    }

    /// True when decisions depend on the accumulated reward or memory.
    pub fn is_memoryless(&self) -> bool {
        matches!(self.kind, ResolvedKind::Memoryless(_))
    }

    /// Distribution over choice indices at state `s` with accumulated reward `w` and memory `mode`.
    pub fn decide(
        &self,
        m: &Mdp,
        s: usize,
        w: &Rational,
        mode: u64,
    ) -> Result<Cow<'_, [(usize, Rational)]>, ModelError> {
        if m.is_trap(s) {
            return Ok(Cow::Owned(Vec::new()));
        }
        match &self.kind {
            ResolvedKind::Memoryless(t) => Ok(Cow::Borrowed(&t[s])),
            ResolvedKind::RewardBased { limit, entries, default } => {
                if w.is_integer() && !w.is_negative() {
                    let wi = crate::rational::to_u64(w).unwrap_or(u64::MAX);
                    if wi < *limit {
                        if let Some(d) = entries.get(&(s, wi)) {
                            return Ok(Cow::Borrowed(d));
                        }
                    }
                    Ok(Cow::Borrowed(&default[s]))
                } else {
                    Err(ModelError::Scheduler(format!("accumulated reward {w} is not a natural number")))
                }
            }
            ResolvedKind::FiniteMemory { choice, .. } => match choice.get(&(s, mode)) {
                Some(&c) => Ok(Cow::Owned(vec![(c, Rational::one())])),
                None if m.choices(s).len() == 1 => Ok(Cow::Owned(vec![(0, Rational::one())])),
                None => {
                    Err(ModelError::Scheduler(format!("no decision for state `{}` in mode {mode}", m.state_name(s))))
                }
            },
        }
    }

    /// Memory mode after taking choice `c` at `s` and moving to `t`.
    pub fn next_mode(&self, m: &Mdp, s: usize, c: usize, t: usize, mode: u64) -> Result<u64, ModelError> {
        match &self.kind {
            ResolvedKind::FiniteMemory { update, .. } => match update {
                ResolvedUpdate::Counter { threshold, cap } => {
                    let next = Rational::from_integer(mode.into()) + &m.choices(s)[c].reward;
                    if next >= *threshold {
                        Ok(*cap)
                    } else {
                        crate::rational::to_u64(&next).ok_or_else(|| {
                            ModelError::Scheduler(format!("reward counter {next} is not a natural number"))
                        })
                    }
                }
                ResolvedUpdate::Table(table) => table.get(&(s, c, t, mode)).copied().ok_or_else(|| {
                    ModelError::Scheduler(format!(
                        "no memory update for ({}, {}, {}, {mode})",
                        m.state_name(s),
                        m.choices(s)[c].action,
                        m.state_name(t)
                    ))
                }),
            },
            _ => Ok(mode),
        }
    }

    /// Union over all rules of the actions the scheduler may pick at each state.
    pub fn support_graph(&self, m: &Mdp) -> Vec<Vec<usize>> {
        let n = m.num_states();
        let mut used: Vec<Vec<bool>> = (0..n).map(|s| vec![false; m.choices(s).len()]).collect();
        let mut mark = |s: usize, d: &IndexDist| {
            for (c, _) in d {
                used[s][*c] = true;
            }
        };
        match &self.kind {
            ResolvedKind::Memoryless(t) => t.iter().enumerate().for_each(|(s, d)| mark(s, d)),
            ResolvedKind::RewardBased { entries, default, .. } => {
                default.iter().enumerate().for_each(|(s, d)| mark(s, d));
                entries.iter().for_each(|((s, _), d)| mark(*s, d));
            }
            ResolvedKind::FiniteMemory { choice, .. } => {
                for ((s, _), c) in choice {
                    used[*s][*c] = true;
                }
                for s in 0..n {
                    if m.choices(s).len() == 1 {
                        used[s][0] = true;
                    }
                }
            }
        }
        (0..n)
            .map(|s| {
                let mut succ: Vec<usize> = m
                    .choices(s)
                    .iter()
                    .enumerate()
                    .filter(|(c, _)| used[s][*c])
                    .flat_map(|(_, ch)| ch.successors.iter().map(|(t, _)| *t))
                    .collect();
                succ.sort_unstable();
                succ.dedup();
                succ
            })
            .collect()
    }
}

/// Markov chain induced by a memoryless scheduler.
///
/// A state whose chosen actions all carry the same reward keeps that reward
/// and gets the mixed successor distribution. Otherwise the state gets reward
/// 0 and moves to one intermediate node `s|action` per chosen action; the
/// node carries the action's reward and distribution. Intermediate nodes are
/// appended after the original states.
pub fn induce_chain(m: &Mdp, sched: &MemorylessScheduler) -> Result<Chain, ModelError> {
    let table = resolve_memoryless(m, sched)?;
    let n = m.num_states();
    let mut states: Vec<String> = m.states().to_vec();
    let mut choices: Vec<Vec<Choice>> = vec![Vec::new(); n];
    let mut extra: Vec<Vec<Choice>> = Vec::new();
    for s in 0..n {
        let dist = &table[s];
        if dist.is_empty() {
            continue;
        }
        let first_reward = &m.choices(s)[dist[0].0].reward;
        if dist.iter().all(|(c, _)| m.choices(s)[*c].reward == *first_reward) {
            let mut mixed: Vec<(usize, Rational)> = Vec::new();
            for (c, pa) in dist {
                for (t, p) in &m.choices(s)[*c].successors {
                    let q = pa * p;
                    match mixed.iter_mut().find(|(u, _)| u == t) {
                        Some(e) => e.1 += q,
                        None => mixed.push((*t, q)),
                    }
                }
            }
            choices[s] = vec![Choice { action: CHAIN_ACTION.into(), reward: first_reward.clone(), successors: mixed }];
        } else {
            let mut succ = Vec::new();
            for (c, pa) in dist {
                let ch = &m.choices(s)[*c];
                let node = states.len();
                states.push(format!("{}|{}", m.state_name(s), ch.action));
                extra.push(vec![Choice {
                    action: CHAIN_ACTION.into(),
                    reward: ch.reward.clone(),
                    successors: ch.successors.clone(),
                }]);
                succ.push((node, pa.clone()));
            }
            choices[s] = vec![Choice { action: CHAIN_ACTION.into(), reward: Rational::zero(), successors: succ }];
        }
    }
    choices.extend(extra);
    let mdp = Mdp::from_parts(states, m.initial(), m.goal(), choices)?;
    Chain::from_mdp(mdp)
}
