//! End components and normalization.
//!
//! [`normalize`] turns an MDP with finite maximal expected reward into one
//! with a single trap `goal` that every scheduler reaches almost surely:
//! traps are merged into `goal`, and every maximal end component (all of
//! which carry zero reward) becomes one fresh state `ec#k` whose actions are
//! the component's exits plus an `escape` action to `goal`.

use crate::graph::strongly_connected_components;
use crate::model::{Choice, Mdp, ModelError};
use crate::rational::Rational;
use num_traits::{One, Zero};
use std::collections::{BTreeMap, HashSet};
use thiserror::Error;

/// Action name of the zero-reward exit added to collapsed end components.
pub const ESCAPE_ACTION: &str = "escape";

/// A maximal end component: states and the retained choice indices per state.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EndComponent {
    pub states: Vec<usize>,
    pub actions: BTreeMap<usize, Vec<usize>>,
    pub is_zero: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PreprocessError {
    #[error("maximal expected reward is infinite: end component {{{}}} collects positive reward", .states.join(", "))]
    InfiniteExpectation { states: Vec<String> },
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Maximal end components ordered by smallest member state.
///
/// Iterative refinement: compute SCCs of the graph of surviving actions,
/// drop actions that can leave their SCC and states left without actions,
/// and repeat until nothing changes.
pub fn mec_decomposition(m: &Mdp) -> Vec<EndComponent> {
    let n = m.num_states();
    let mut active: Vec<Vec<bool>> = (0..n).map(|s| vec![true; m.choices(s).len()]).collect();
    let mut alive: Vec<bool> = (0..n).map(|s| !m.is_trap(s)).collect();
    let mut comp = vec![usize::MAX; n];
    loop {
        let adj: Vec<Vec<usize>> = (0..n)
            .map(|s| {
                if !alive[s] {
                    return Vec::new();
                }
                let mut out: Vec<usize> = m
                    .choices(s)
                    .iter()
                    .enumerate()
                    .filter(|(c, _)| active[s][*c])
                    .flat_map(|(_, ch)| ch.successors.iter().map(|(t, _)| *t))
                    .filter(|t| alive[*t])
                    .collect();
                out.sort_unstable();
                out.dedup();
                out
            })
            .collect();
        for (k, scc) in strongly_connected_components(&adj).iter().enumerate() {
            for &s in scc {
                comp[s] = k;
            }
        }
        let mut changed = false;
        for s in 0..n {
            if !alive[s] {
                continue;
            }
            for (c, ch) in m.choices(s).iter().enumerate() {
                if active[s][c] && ch.successors.iter().any(|(t, _)| !alive[*t] || comp[*t] != comp[s]) {
                    active[s][c] = false;
                    changed = true;
                }
            }
            if !active[s].iter().any(|a| *a) {
                alive[s] = false;
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
    let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for s in (0..n).filter(|s| alive[*s]) {
        groups.entry(comp[s]).or_default().push(s);
    }
    let mut out: Vec<EndComponent> = groups
        .into_values()
        .map(|states| {
            let actions: BTreeMap<usize, Vec<usize>> =
                states.iter().map(|&s| (s, (0..m.choices(s).len()).filter(|c| active[s][*c]).collect())).collect();
            let is_zero = actions.iter().all(|(s, cs)| cs.iter().all(|c| m.choices(*s)[*c].reward.is_zero()));
            EndComponent { states, actions, is_zero }
        })
        .collect();
    out.sort_by_key(|e| e.states[0]);
    out
}

/// True iff every maximal end component is a 0-end component, which is
/// equivalent to the maximal expected total reward being finite.
pub fn check_finite_expectation(m: &Mdp) -> bool {
    mec_decomposition(m).iter().all(|e| e.is_zero)
}

/// States from which no positive-reward action is reachable, i.e. whose
/// maximal expected reward is 0. Computed by backward graph search.
pub fn zero_value_states(m: &Mdp) -> Vec<bool> {
    let n = m.num_states();
    let mut rev: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (s, succ) in m.adjacency().iter().enumerate() {
        for &t in succ {
            rev[t].push(s);
        }
    }
    let mut positive = vec![false; n];
    let mut todo: Vec<usize> = (0..n).filter(|&s| m.choices(s).iter().any(|c| c.reward > Rational::zero())).collect();
    for &s in &todo {
        positive[s] = true;
    }
    while let Some(t) = todo.pop() {
        for &s in &rev[t] {
            if !positive[s] {
                positive[s] = true;
                todo.push(s);
            }
        }
    }
    positive.into_iter().map(|p| !p).collect()
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct NormalizeOptions {
    /// Also merge states with maximal expected reward 0 into `goal`.
    pub collapse_zero_value: bool,
}

/// Normalized MDP together with the original states behind each new state.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NormalizedMdp {
    mdp: Mdp,
    provenance: Vec<Vec<String>>,
}

impl NormalizedMdp {
    pub fn mdp(&self) -> &Mdp {
        &self.mdp
    }

    pub fn into_mdp(self) -> Mdp {
        self.mdp
    }

    pub fn goal(&self) -> usize {
        self.mdp.goal().expect("normalized models have a goal")
    }

    /// Original state names merged into new state `s`.
    pub fn provenance(&self, s: usize) -> &[String] {
        &self.provenance[s]
    }
}

/// Normalizes with default options (traps merged, zero-value states kept).
pub fn normalize(m: &Mdp) -> Result<NormalizedMdp, PreprocessError> {
    normalize_with(m, NormalizeOptions::default())
}

pub fn normalize_with(m: &Mdp, opts: NormalizeOptions) -> Result<NormalizedMdp, PreprocessError> {
    let mecs = mec_decomposition(m);
    if let Some(bad) = mecs.iter().find(|e| !e.is_zero) {
        return Err(PreprocessError::InfiniteExpectation {
            states: bad.states.iter().map(|&s| m.state_name(s).to_string()).collect(),
        });
    }
    let n = m.num_states();
    #[derive(Clone, Copy, PartialEq, Eq)]
    enum Group {
        Keep,
        Goal,
        Ec(usize),
    }
    let zero = if opts.collapse_zero_value { zero_value_states(m) } else { vec![false; n] };
    let mut group = vec![Group::Keep; n];
    for (k, e) in mecs.iter().enumerate() {
        for &s in &e.states {
            group[s] = Group::Ec(k);
        }
    }
    for s in 0..n {
        if m.is_trap(s) || zero[s] {
            group[s] = Group::Goal;
        }
    }

    let kept: HashSet<&str> = (0..n).filter(|&s| group[s] == Group::Keep).map(|s| m.state_name(s)).collect();
    let mut taken: HashSet<String> = kept.iter().map(|s| s.to_string()).collect();
    let mut fresh = |base: &str| {
        let mut name = base.to_string();
        while taken.contains(&name) {
            name.push('\'');
        }
        taken.insert(name.clone());
        name
    };
    let goal_name = fresh(m.goal().map(|g| m.state_name(g)).unwrap_or("goal"));
    let ec_names: Vec<String> = (0..mecs.len()).map(|k| fresh(&format!("ec#{k}"))).collect();

    let mut names: Vec<String> = Vec::new();
    let mut provenance: Vec<Vec<String>> = Vec::new();
    let mut goal_idx: Option<usize> = None;
    let mut ec_idx: Vec<Option<usize>> = vec![None; mecs.len()];
    let mut image = vec![0usize; n];
    for s in 0..n {
        let slot = match group[s] {
            Group::Keep => None,
            Group::Goal => goal_idx,
            Group::Ec(k) => ec_idx[k],
        };
        let idx = match slot {
            Some(i) => i,
            None => {
                let i = names.len();
                names.push(match group[s] {
                    Group::Keep => m.state_name(s).to_string(),
                    Group::Goal => goal_name.clone(),
                    Group::Ec(k) => ec_names[k].clone(),
                });
                provenance.push(Vec::new());
                match group[s] {
                    Group::Goal => goal_idx = Some(i),
                    Group::Ec(k) => ec_idx[k] = Some(i),
                    Group::Keep => {}
                }
                i
            }
        };
        image[s] = idx;
        provenance[idx].push(m.state_name(s).to_string());
    }
    let goal = match goal_idx {
        Some(g) => g,
        None => {
            names.push(goal_name);
            provenance.push(Vec::new());
            names.len() - 1
        }
    };

    let map_choice = |action: String, ch: &Choice| {
        let mut successors: Vec<(usize, Rational)> = Vec::new();
        for (t, p) in &ch.successors {
            let u = image[*t];
            match successors.iter_mut().find(|(v, _)| *v == u) {
                Some(e) => e.1 += p,
                None => successors.push((u, p.clone())),
            }
        }
        Choice { action, reward: ch.reward.clone(), successors }
    };
    let mut choices: Vec<Vec<Choice>> = vec![Vec::new(); names.len()];
    for s in 0..n {
        if group[s] == Group::Keep {
            choices[image[s]] = m.choices(s).iter().map(|ch| map_choice(ch.action.clone(), ch)).collect();
        }
    }
    for (k, e) in mecs.iter().enumerate() {
        let Some(idx) = ec_idx[k] else { continue };
        if group[e.states[0]] != Group::Ec(k) {
            continue;
        }
        let mut list = Vec::new();
        for &s in &e.states {
            for (c, ch) in m.choices(s).iter().enumerate() {
                if !e.actions[&s].contains(&c) {
                    list.push(map_choice(format!("{}/{}", m.state_name(s), ch.action), ch));
                }
            }
        }
        list.push(Choice {
            action: ESCAPE_ACTION.into(),
            reward: Rational::zero(),
            successors: vec![(goal, Rational::one())],
        });
        choices[idx] = list;
    }
    let mdp = Mdp::from_parts(names, image[m.initial()], Some(goal), choices)?;
    Ok(NormalizedMdp { mdp, provenance })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::model::MdpBuilder;
    use crate::rational::{int, one, ratio};

    fn zero_cycle() -> Mdp {
        let mut b = MdpBuilder::new();
        b.initial("a");
        b.goal("goal");
        b.action("a", "to_b", int(0), &[("b", one())]);
        b.action("a", "exit", int(2), &[("goal", one())]);
        b.action("b", "back", int(0), &[("a", one())]);
        b.build().unwrap()
    }

    #[test]
    fn geometric_loop_has_no_end_components() {
        assert!(mec_decomposition(&fixtures::geometric_loop(&ratio(1, 4))).is_empty());
        assert!(check_finite_expectation(&fixtures::split_loop(3)));
    }

    #[test]
    fn closed_cycle_is_zero_end_component() {
        let mut b = MdpBuilder::new();
        b.initial("a");
        b.action("a", "go", int(0), &[("b", one())]);
        b.action("b", "go", int(0), &[("a", one())]);
        let m = b.build().unwrap();
        let mecs = mec_decomposition(&m);
        assert_eq!(mecs.len(), 1);
        assert_eq!(mecs[0].states, vec![0, 1]);
        assert!(mecs[0].is_zero);
    }

    #[test]
    fn positive_reward_cycle_is_infinite() {
        let mut b = MdpBuilder::new();
        b.initial("a");
        b.goal("goal");
        b.action("a", "go", int(1), &[("b", one())]);
        b.action("a", "stop", int(0), &[("goal", one())]);
        b.action("b", "go", int(0), &[("a", one())]);
        let m = b.build().unwrap();
        assert!(!check_finite_expectation(&m));
        assert!(matches!(normalize(&m), Err(PreprocessError::InfiniteExpectation { .. })));
    }

    #[test]
    fn acyclic_models_are_fixed_points() {
        assert!(mec_decomposition(&fixtures::two_branch()).is_empty());
        let n = normalize(&fixtures::two_branch()).unwrap();
        assert_eq!(n.mdp(), &fixtures::two_branch());
    }

    #[test]
    fn zero_cycle_collapses_with_escape() {
        let n = normalize(&zero_cycle()).unwrap();
        let m = n.mdp();
        assert_eq!(m.states(), &["ec#0".to_string(), "goal".to_string()]);
        assert_eq!(n.provenance(0), &["a".to_string(), "b".to_string()]);
        let actions: Vec<&str> = m.choices(0).iter().map(|c| c.action.as_str()).collect();
        assert_eq!(actions, vec!["a/exit", ESCAPE_ACTION]);
        assert_eq!(m.choices(0)[0].reward, int(2));
        assert!(mec_decomposition(m).is_empty());
    }

    #[test]
    fn traps_and_zero_value_states_merge_into_goal() {
        let mut b = MdpBuilder::new();
        b.initial("s");
        b.goal("goal");
        b.state("t");
        b.action("s", "a", int(1), &[("goal", ratio(1, 2)), ("t", ratio(1, 2))]);
        b.action("s", "b", int(0), &[("z", one())]);
        b.action("z", "c", int(0), &[("t", one())]);
        let m = b.build().unwrap();
        let plain = normalize(&m).unwrap();
        assert_eq!(plain.mdp().num_states(), 3);
        assert_eq!(plain.provenance(plain.goal()), &["goal".to_string(), "t".to_string()]);
        let collapsed = normalize_with(&m, NormalizeOptions { collapse_zero_value: true }).unwrap();
        assert_eq!(collapsed.mdp().num_states(), 2);
        assert_eq!(collapsed.mdp().choices(0)[1].successors, vec![(1, one())]);
    }

    #[test]
    fn fresh_names_avoid_collisions() {
        let mut b = MdpBuilder::new();
        b.initial("a");
        b.state("end");
        b.action("a", "go", int(0), &[("x", one())]);
        b.action("a", "stop", int(1), &[("end", one())]);
        b.action("x", "go", int(0), &[("a", one())]);
        b.action("ec#0", "w", int(1), &[("end", one())]);
        b.action("goal", "w", int(1), &[("end", one())]);
        let m = b.build().unwrap();
        let n = normalize(&m).unwrap();
        assert!(n.mdp().state_index("ec#0'").is_some());
        assert!(n.mdp().state_index("goal'").is_some());
    }
}
