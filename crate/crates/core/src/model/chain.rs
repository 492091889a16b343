use super::error::ModelError;
use super::mdp::{Choice, Mdp, MdpBuilder};
use crate::rational::Rational;
use num_traits::Zero;

/// Action label used for the single action of chain states.
pub const CHAIN_ACTION: &str = "tau";

/// Markov chain: a validated view of an [`Mdp`] whose states have at most one action.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Chain {
    mdp: Mdp,
}

impl Chain {
    pub fn from_mdp(mdp: Mdp) -> Result<Chain, ModelError> {
        for s in 0..mdp.num_states() {
            if mdp.choices(s).len() > 1 {
                return Err(ModelError::NotAChain { state: mdp.state_name(s).to_string() });
            }
        }
        Ok(Chain { mdp })
    }

    pub fn as_mdp(&self) -> &Mdp {
        &self.mdp
    }

    pub fn into_mdp(self) -> Mdp {
        self.mdp
    }

    pub fn num_states(&self) -> usize {
        self.mdp.num_states()
    }

    pub fn initial(&self) -> usize {
        self.mdp.initial()
    }

    /// Reward collected when leaving `s` (0 for traps).
    pub fn reward(&self, s: usize) -> Rational {
        self.mdp.choices(s).first().map(|c| c.reward.clone()).unwrap_or_else(Rational::zero)
    }

    /// Successor distribution of `s` (empty for traps).
    pub fn successors(&self, s: usize) -> &[(usize, Rational)] {
        self.mdp.choices(s).first().map(|c| c.successors.as_slice()).unwrap_or(&[])
    }

    /// Two-level chain realizing a finite reward law: from the initial state
    /// `c` one step reaches `a<i>` with probability `p_i`, and `a<i>` moves to
    /// `goal` collecting reward `v_i`.
    pub fn from_atoms(atoms: &[(Rational, Rational)]) -> Result<Chain, ModelError> {
        let mut b = MdpBuilder::new();
        b.initial("c");
        let names: Vec<String> = (0..atoms.len()).map(|i| format!("a{i}")).collect();
        let succ: Vec<(&str, Rational)> = names.iter().zip(atoms).map(|(n, (_, p))| (n.as_str(), p.clone())).collect();
        b.goal("goal");
        b.action("c", CHAIN_ACTION, Rational::zero(), &succ);
        for (name, (v, _)) in names.iter().zip(atoms) {
            b.action(name, CHAIN_ACTION, v.clone(), &[("goal", crate::rational::one())]);
        }
        Chain::from_mdp(b.build()?)
    }
}

/// Builds chain states from `(name, reward, successors)` triples.
pub fn chain_choice(reward: Rational, successors: Vec<(usize, Rational)>) -> Vec<Choice> {
    vec![Choice { action: CHAIN_ACTION.to_string(), reward, successors }]
}
