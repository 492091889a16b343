//! Risk-averse total-reward optimization on finite Markov decision processes.
//!
//! All quantities are exact rationals unless a function says otherwise.

pub mod expect;
pub mod fixtures;
pub mod graph;
pub mod linalg;
pub mod lp;
pub mod madpe;
pub mod measures;
pub mod model;
pub mod oracle;
pub mod preprocess;
pub mod rational;
pub mod reductions;
pub mod tbpe;

pub use rational::Rational;
