use super::error::ModelError;
use crate::rational::Rational;
use num_traits::{One, Signed, Zero};
use std::collections::{BTreeSet, HashMap};

/// One enabled action of a state: its reward and successor distribution.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Choice {
    pub action: String,
    pub reward: Rational,
    /// `(successor index, probability)` in declaration order.
    pub successors: Vec<(usize, Rational)>,
}

/// Finite MDP with exact rational probabilities.
///
/// States and actions keep their declaration order; tie-breaking elsewhere in
/// the crate is lexicographic on identifiers. Rewards are rationals so that
/// derived models (unfoldings, gadgets) fit the same type; models read from
/// files carry non-negative integer rewards, which [`Mdp::validate`] checks.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mdp {
    states: Vec<String>,
    index: HashMap<String, usize>,
    initial: usize,
    goal: Option<usize>,
    choices: Vec<Vec<Choice>>,
}

/// Category of a [`ValidationIssue`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, serde::Serialize)]
#[serde(rename_all = "snake_case")]
pub enum IssueKind {
    ProbabilitySum,
    InvalidProbability,
    NegativeReward,
    NonIntegerReward,
    GoalNotTrap,
    DuplicateAction,
    DuplicateSuccessor,
}

impl IssueKind {
    pub fn label(self) -> &'static str {
        match self {
            IssueKind::ProbabilitySum => "probability sum",
            IssueKind::InvalidProbability => "invalid probability",
            IssueKind::NegativeReward => "negative reward",
            IssueKind::NonIntegerReward => "non-integer reward",
            IssueKind::GoalNotTrap => "goal is not a trap",
            IssueKind::DuplicateAction => "duplicate action",
            IssueKind::DuplicateSuccessor => "duplicate transition",
        }
    }
}

/// One invariant violation found by [`Mdp::validate`].
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize)]
pub struct ValidationIssue {
    pub kind: IssueKind,
    pub state: String,
    pub action: Option<String>,
    pub message: String,
}

/// Result of [`Mdp::validate`]; empty iff the model satisfies every invariant.
#[derive(Debug, Clone, Default, PartialEq, Eq, serde::Serialize)]
pub struct ValidationReport {
    pub issues: Vec<ValidationIssue>,
}

impl ValidationReport {
    pub fn is_empty(&self) -> bool {
        self.issues.is_empty()
    }

    pub fn count(&self, kind: IssueKind) -> usize {
        self.issues.iter().filter(|i| i.kind == kind).count()
    }

    /// First issue as a [`ModelError`].
    pub fn into_error(self) -> Option<ModelError> {
        self.issues.into_iter().next().map(|issue| match issue.kind {
            IssueKind::ProbabilitySum => ModelError::ProbabilitySum {
                state: issue.state,
                action: issue.action.unwrap_or_default(),
                detail: issue.message,
            },
            IssueKind::InvalidProbability => ModelError::InvalidProbability {
                state: issue.state,
                action: issue.action.unwrap_or_default(),
                detail: issue.message,
            },
            IssueKind::NegativeReward => ModelError::NegativeReward {
                state: issue.state,
                action: issue.action.unwrap_or_default(),
                detail: issue.message,
            },
            IssueKind::NonIntegerReward => ModelError::NonIntegerReward {
                state: issue.state,
                action: issue.action.unwrap_or_default(),
                detail: issue.message,
            },
            IssueKind::GoalNotTrap => ModelError::GoalNotTrap { state: issue.state },
            IssueKind::DuplicateAction => {
                ModelError::Duplicate { what: "action".into(), name: issue.action.unwrap_or_default(), line: None }
            }
            IssueKind::DuplicateSuccessor => {
                ModelError::Duplicate { what: "transition".into(), name: issue.message, line: None }
            }
        })
    }
}

impl Mdp {
    /// Builds a model from resolved parts without semantic validation.
    ///
    /// Fails only on structural problems: duplicate state names, or indices
    /// out of range.
    pub fn from_parts(
        states: Vec<String>,
        initial: usize,
        goal: Option<usize>,
        choices: Vec<Vec<Choice>>,
    ) -> Result<Mdp, ModelError> {
        let n = states.len();
        let mut index = HashMap::with_capacity(n);
        for (i, name) in states.iter().enumerate() {
            if index.insert(name.clone(), i).is_some() {
                return Err(ModelError::Duplicate { what: "state".into(), name: name.clone(), line: None });
            }
        }
        if choices.len() != n {
            return Err(ModelError::Structure(format!("{} states but {} choice lists", n, choices.len())));
        }
        let check = |i: usize| -> Result<(), ModelError> {
            if i < n {
                Ok(())
            } else {
                Err(ModelError::UnknownState { name: format!("#{i}"), line: None })
            }
        };
        check(initial)?;
        if let Some(g) = goal {
            check(g)?;
        }
        for list in &choices {
            for c in list {
                for (t, _) in &c.successors {
                    check(*t)?;
                }
            }
        }
        Ok(Mdp { states, index, initial, goal, choices })
    }

    pub fn num_states(&self) -> usize {
        self.states.len()
    }

    pub fn states(&self) -> &[String] {
        &self.states
    }

    pub fn state_name(&self, s: usize) -> &str {
        &self.states[s]
    }

    pub fn state_index(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn initial(&self) -> usize {
        self.initial
    }

    pub fn goal(&self) -> Option<usize> {
        self.goal
    }

    pub fn choices(&self, s: usize) -> &[Choice] {
        &self.choices[s]
    }

    pub fn all_choices(&self) -> &[Vec<Choice>] {
        &self.choices
    }

    pub fn is_trap(&self, s: usize) -> bool {
        self.choices[s].is_empty()
    }

    /// Index of the enabled action named `action` at `s`.
    pub fn choice_index(&self, s: usize, action: &str) -> Option<usize> {
        self.choices[s].iter().position(|c| c.action == action)
    }

    /// All action identifiers, sorted lexicographically.
    pub fn actions(&self) -> Vec<String> {
        let set: BTreeSet<&String> = self.choices.iter().flatten().map(|c| &c.action).collect();
        set.into_iter().cloned().collect()
    }

    /// Largest reward over all state-action pairs (0 for trap-only models).
    pub fn max_reward(&self) -> Rational {
        self.choices.iter().flatten().map(|c| c.reward.clone()).max().unwrap_or_else(Rational::zero)
    }

    /// Trap states in index order.
    pub fn traps(&self) -> Vec<usize> {
        (0..self.num_states()).filter(|&s| self.is_trap(s)).collect()
    }

    /// Successor adjacency over all enabled actions.
    pub fn adjacency(&self) -> Vec<Vec<usize>> {
        self.choices
            .iter()
            .map(|list| {
                let mut succ: Vec<usize> = list.iter().flat_map(|c| c.successors.iter().map(|(t, _)| *t)).collect();
                succ.sort_unstable();
                succ.dedup();
                succ
            })
            .collect()
    }

    /// True when all rewards are non-negative integers.
    pub fn has_natural_rewards(&self) -> bool {
        self.choices.iter().flatten().all(|c| c.reward.is_integer() && !c.reward.is_negative())
    }

    /// Checks every model invariant and lists the violations.
    pub fn validate(&self) -> ValidationReport {
        let mut issues = Vec::new();
        for (s, list) in self.choices.iter().enumerate() {
            let state = &self.states[s];
            let mut seen_actions = BTreeSet::new();
            for c in list {
                let action = Some(c.action.clone());
                if !seen_actions.insert(&c.action) {
                    issues.push(ValidationIssue {
                        kind: IssueKind::DuplicateAction,
                        state: state.clone(),
                        action: action.clone(),
                        message: format!("action `{}` declared twice at `{}`", c.action, state),
                    });
                }
                if c.reward.is_negative() {
                    issues.push(ValidationIssue {
                        kind: IssueKind::NegativeReward,
                        state: state.clone(),
                        action: action.clone(),
                        message: format!("reward {} is negative", c.reward),
                    });
                } else if !c.reward.is_integer() {
                    issues.push(ValidationIssue {
                        kind: IssueKind::NonIntegerReward,
                        state: state.clone(),
                        action: action.clone(),
                        message: format!("reward {} is not an integer", c.reward),
                    });
                }
                let mut seen_succ = BTreeSet::new();
                let mut sum = Rational::zero();
                for (t, p) in &c.successors {
                    if !seen_succ.insert(*t) {
                        issues.push(ValidationIssue {
                            kind: IssueKind::DuplicateSuccessor,
                            state: state.clone(),
                            action: action.clone(),
                            message: format!("{} -> {}", c.action, self.states[*t]),
                        });
                    }
                    if !p.is_positive() || *p > Rational::one() {
                        issues.push(ValidationIssue {
                            kind: IssueKind::InvalidProbability,
                            state: state.clone(),
                            action: action.clone(),
                            message: format!("probability {} to `{}` outside (0,1]", p, self.states[*t]),
                        });
                    }
                    sum += p;
                }
                if sum != Rational::one() {
                    issues.push(ValidationIssue {
                        kind: IssueKind::ProbabilitySum,
                        state: state.clone(),
                        action: action.clone(),
                        message: format!("successor probabilities sum to {sum}"),
                    });
                }
            }
        }
        if let Some(g) = self.goal {
            if !self.is_trap(g) {
                issues.push(ValidationIssue {
                    kind: IssueKind::GoalNotTrap,
                    state: self.states[g].clone(),
                    action: None,
                    message: format!("goal `{}` has enabled actions", self.states[g]),
                });
            }
        }
        ValidationReport { issues }
    }
}

/// Incremental construction of an [`Mdp`] by state name.
#[derive(Debug, Default, Clone)]
pub struct MdpBuilder {
    states: Vec<String>,
    index: HashMap<String, usize>,
    initial: Option<String>,
    goal: Option<String>,
    choices: Vec<Vec<(String, Rational, Vec<(String, Rational)>)>>,
}

impl MdpBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    /// Declares a state (idempotent) and returns its index.
    pub fn state(&mut self, name: &str) -> usize {
        if let Some(&i) = self.index.get(name) {
            return i;
        }
        let i = self.states.len();
        self.states.push(name.to_string());
        self.index.insert(name.to_string(), i);
        self.choices.push(Vec::new());
        i
    }

    pub fn initial(&mut self, name: &str) -> &mut Self {
        self.state(name);
        self.initial = Some(name.to_string());
        self
    }

    pub fn goal(&mut self, name: &str) -> &mut Self {
        self.state(name);
        self.goal = Some(name.to_string());
        self
    }

    /// Adds an action at `state`; successors are resolved at [`build`](Self::build).
    pub fn action(
        &mut self,
        state: &str,
        action: &str,
        reward: Rational,
        successors: &[(&str, Rational)],
    ) -> &mut Self {
        let s = self.state(state);
        self.choices[s].push((
            action.to_string(),
            reward,
            successors.iter().map(|(t, p)| (t.to_string(), p.clone())).collect(),
        ));
        self
    }

    pub fn build(&self) -> Result<Mdp, ModelError> {
        let lookup = |name: &str| {
            self.index.get(name).copied().ok_or_else(|| ModelError::UnknownState { name: name.to_string(), line: None })
        };
        let initial = match &self.initial {
            Some(name) => lookup(name)?,
            None => return Err(ModelError::Structure("no initial state".into())),
        };
        let goal = self.goal.as_deref().map(lookup).transpose()?;
        let mut choices = Vec::with_capacity(self.states.len());
        for list in &self.choices {
            let mut resolved = Vec::with_capacity(list.len());
            for (action, reward, succ) in list {
                let successors =
                    succ.iter().map(|(t, p)| lookup(t).map(|i| (i, p.clone()))).collect::<Result<Vec<_>, _>>()?;
                resolved.push(Choice { action: action.clone(), reward: reward.clone(), successors });
            }
            choices.push(resolved);
        }
        Mdp::from_parts(self.states.clone(), initial, goal, choices)
    }
}
