use super::error::ModelError;
use crate::rational::{fmt_rational, parse_rational, Rational};
use num_traits::{One, Signed, Zero};
use std::collections::BTreeMap;

/// Law of the total reward: exact atoms plus the mass left unenumerated.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RewardDistribution {
    atoms: BTreeMap<Rational, Rational>,
    tail_mass: Rational,
}

impl RewardDistribution {
    /// Exact distribution from `(value, probability)` pairs.
    ///
    /// Zero-probability pairs are dropped and repeated values merged; the
    /// probabilities must be non-negative and sum to 1.
    pub fn from_atoms<I: IntoIterator<Item = (Rational, Rational)>>(atoms: I) -> Result<Self, ModelError> {
        Self::with_tail(atoms, Rational::zero())
    }

    /// Distribution with `tail_mass` left unenumerated.
    pub fn with_tail<I: IntoIterator<Item = (Rational, Rational)>>(
        atoms: I,
        tail_mass: Rational,
    ) -> Result<Self, ModelError> {
        let mut map = BTreeMap::new();
        for (v, p) in atoms {
            if p.is_negative() {
                return Err(ModelError::Structure(format!("negative probability {p} at reward {v}")));
            }
            if p.is_zero() {
                continue;
            }
            *map.entry(v).or_insert_with(Rational::zero) += p;
        }
        if tail_mass.is_negative() {
            return Err(ModelError::Structure(format!("negative tail mass {tail_mass}")));
        }
        let total: Rational = map.values().sum::<Rational>() + &tail_mass;
        if total != Rational::one() {
            return Err(ModelError::Structure(format!("distribution mass is {total}, expected 1")));
        }
        Ok(RewardDistribution { atoms: map, tail_mass })
    }

    /// Point mass at `v`.
    pub fn point(v: Rational) -> Self {
        RewardDistribution { atoms: BTreeMap::from([(v, Rational::one())]), tail_mass: Rational::zero() }
    }

    /// Atoms sorted ascending by value.
    pub fn atoms(&self) -> &BTreeMap<Rational, Rational> {
        &self.atoms
    }

    pub fn tail_mass(&self) -> &Rational {
        &self.tail_mass
    }

    pub fn is_exact(&self) -> bool {
        self.tail_mass.is_zero()
    }

    /// Probability of exactly `v`.
    pub fn probability(&self, v: &Rational) -> Rational {
        self.atoms.get(v).cloned().unwrap_or_else(Rational::zero)
    }

    /// `Pr(X ≥ v)` over the enumerated atoms.
    pub fn probability_at_least(&self, v: &Rational) -> Rational {
        self.atoms.range(v.clone()..).map(|(_, p)| p).sum()
    }

    /// `Pr(X > v)` over the enumerated atoms.
    pub fn probability_above(&self, v: &Rational) -> Rational {
        self.atoms.iter().filter(|(x, _)| *x > v).map(|(_, p)| p).sum()
    }

    /// `[["value", "prob"], ...]` pairs, ascending by value.
    pub fn to_json_pairs(&self) -> serde_json::Value {
        serde_json::Value::Array(
            self.atoms.iter().map(|(v, p)| serde_json::json!([fmt_rational(v), fmt_rational(p)])).collect(),
        )
    }

    /// Inverse of [`to_json_pairs`](Self::to_json_pairs) for exact distributions.
    pub fn from_json_pairs(value: &serde_json::Value) -> Result<Self, ModelError> {
        let bad = || ModelError::Structure("expected an array of [value, prob] string pairs".into());
        let arr = value.as_array().ok_or_else(bad)?;
        let mut atoms = Vec::with_capacity(arr.len());
        for pair in arr {
            let pair = pair.as_array().filter(|p| p.len() == 2).ok_or_else(bad)?;
            let v = pair[0].as_str().ok_or_else(bad)?;
            let p = pair[1].as_str().ok_or_else(bad)?;
            let v = parse_rational(v).map_err(|e| ModelError::Structure(e.to_string()))?;
            let p = parse_rational(p).map_err(|e| ModelError::Structure(e.to_string()))?;
            atoms.push((v, p));
        }
        Self::from_atoms(atoms)
    }
}
