use thiserror::Error;

/// Errors raised while reading or assembling models and schedulers.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ModelError {
    #[error("syntax error at line {line}, column {column}: {message}")]
    Syntax { line: usize, column: usize, message: String },
    #[error("probability sum violation at {state}/{action}: {detail}")]
    ProbabilitySum { state: String, action: String, detail: String },
    #[error("invalid probability at {state}/{action}: {detail}")]
    InvalidProbability { state: String, action: String, detail: String },
    #[error("negative reward at {state}/{action}: {detail}")]
    NegativeReward { state: String, action: String, detail: String },
    #[error("non-integer reward at {state}/{action}: {detail}")]
    NonIntegerReward { state: String, action: String, detail: String },
    #[error("unknown state `{name}`{}", line_suffix(*.line))]
    UnknownState { name: String, line: Option<usize> },
    #[error("unknown action `{action}` at state `{state}`{}", line_suffix(*.line))]
    UnknownAction { state: String, action: String, line: Option<usize> },
    #[error("duplicate {what} `{name}`{}", line_suffix(*.line))]
    Duplicate { what: String, name: String, line: Option<usize> },
    #[error("goal state `{state}` is not a trap")]
    GoalNotTrap { state: String },
    #[error("state `{state}` has more than one action, so the model is not a chain")]
    NotAChain { state: String },
    #[error("scheduler error: {0}")]
    Scheduler(String),
    #[error("malformed model: {0}")]
    Structure(String),
}

fn line_suffix(line: Option<usize>) -> String {
    line.map(|l| format!(" (line {l})")).unwrap_or_default()
}

impl ModelError {
    /// Stable category label used in reports.
    pub fn category(&self) -> &'static str {
        match self {
            ModelError::Syntax { .. } => "syntax",
            ModelError::ProbabilitySum { .. } => "probability_sum",
            ModelError::InvalidProbability { .. } => "invalid_probability",
            ModelError::NegativeReward { .. } => "negative_reward",
            ModelError::NonIntegerReward { .. } => "non_integer_reward",
            ModelError::UnknownState { .. } => "unknown_state",
            ModelError::UnknownAction { .. } => "unknown_action",
            ModelError::Duplicate { .. } => "duplicate",
            ModelError::GoalNotTrap { .. } => "goal_not_trap",
            ModelError::NotAChain { .. } => "not_a_chain",
            ModelError::Scheduler(_) => "scheduler",
            ModelError::Structure(_) => "structure",
        }
    }
}
