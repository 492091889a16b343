//! Domain types: MDPs, Markov chains, schedulers and reward distributions,
//! together with the text formats used to read and write them.

mod chain;
mod distribution;
mod error;
mod format;
mod mdp;
mod scheduler;

pub use chain::{chain_choice, Chain, CHAIN_ACTION};
pub use distribution::RewardDistribution;
pub use error::ModelError;
pub use format::{
    model_hash, parse_model, parse_model_unvalidated, parse_scheduler, serialize_chain, serialize_model,
    write_scheduler, ParsedModel,
};
pub use mdp::{Choice, IssueKind, Mdp, MdpBuilder, ValidationIssue, ValidationReport};
pub use scheduler::{
    induce_chain, ActionDist, FiniteMemoryScheduler, MemoryUpdate, MemorylessScheduler, ResolvedScheduler,
    RewardBasedScheduler, Scheduler,
};

/// Validates `m` (free-function form of [`Mdp::validate`]).
pub fn validate(m: &Mdp) -> ValidationReport {
    m.validate()
}
