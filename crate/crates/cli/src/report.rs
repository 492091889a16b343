//! Run context, error classification and JSON rendering.

use riskmdp::expect::ExpectError;
use riskmdp::lp::format::FormatError;
use riskmdp::madpe::MadpeError;
use riskmdp::measures::{Interval, MeasureError, MeasureReport};
use riskmdp::model::{model_hash, Mdp, ModelError, RewardDistribution};
use riskmdp::oracle::OracleError;
use riskmdp::preprocess::PreprocessError;
use riskmdp::rational::{fmt_rational, to_decimal, Rational};
use riskmdp::reductions::ReductionError;
use riskmdp::tbpe::{PenaltyError, TbpeError};
use serde_json::{json, Map, Value};
use std::time::Instant;

pub const USAGE: u8 = 1;
pub const MODEL: u8 = 2;
pub const REFUSED: u8 = 3;
pub const BUDGET: u8 = 4;

/// A failed run: exit code, stable category and message.
#[derive(Debug, Clone)]
pub struct Failure {
    pub code: u8,
    pub category: String,
    pub message: String,
    pub diagnostic: Option<String>,
    /// Partial result still worth reporting.
    pub result: Option<Box<Value>>,
}

impl Failure {
    pub fn new(code: u8, category: impl Into<String>, message: impl Into<String>) -> Self {
        Failure { code, category: category.into(), message: message.into(), diagnostic: None, result: None }
    }

    pub fn usage(message: impl Into<String>) -> Self {
        Failure::new(USAGE, "usage", message)
    }

    pub fn to_json(&self) -> Value {
        let mut e = Map::new();
        e.insert("category".into(), json!(self.category));
        e.insert("message".into(), json!(self.message));
        if let Some(d) = &self.diagnostic {
            e.insert("diagnostic".into(), json!(d));
        }
        Value::Object(e)
    }
}

impl From<ModelError> for Failure {
    fn from(e: ModelError) -> Self {
        Failure::new(MODEL, e.category(), e.to_string())
    }
}

impl From<PreprocessError> for Failure {
    fn from(e: PreprocessError) -> Self {
        match e {
            PreprocessError::InfiniteExpectation { .. } => Failure::new(REFUSED, "infinite_expectation", e.to_string()),
            PreprocessError::Model(m) => m.into(),
        }
    }
}

impl From<ExpectError> for Failure {
    fn from(e: ExpectError) -> Self {
        match e {
            ExpectError::Improper(_) => Failure::new(REFUSED, "improper", e.to_string()),
            ExpectError::NonConvergence(_) => Failure::new(BUDGET, "non_convergence", e.to_string()),
            ExpectError::Model(m) => m.into(),
            ExpectError::Linalg(_) => Failure::new(REFUSED, "linear_algebra", e.to_string()),
        }
    }
}

impl From<MeasureError> for Failure {
    fn from(e: MeasureError) -> Self {
        match e {
            MeasureError::Cyclic => Failure::new(REFUSED, "cyclic", e.to_string()),
            MeasureError::TailMass(_) => Failure::new(REFUSED, "tail_mass", e.to_string()),
            MeasureError::BudgetExceeded { .. } => Failure::new(BUDGET, "step_budget", e.to_string()),
            MeasureError::MissingThreshold | MeasureError::BadEpsilon => Failure::usage(e.to_string()),
            MeasureError::Model(m) => m.into(),
        }
    }
}

impl From<MadpeError> for Failure {
    fn from(e: MadpeError) -> Self {
        match e {
            MadpeError::NonPositiveLambda(_) => Failure::usage(e.to_string()),
            MadpeError::LambdaAboveHalf(_) => {
                let mut f = Failure::new(REFUSED, "lambda_above_half", e.to_string());
                f.diagnostic = Some("ERMin".into());
                f
            }
            MadpeError::NoFeasibleCandidate | MadpeError::InfeasibleFrequencies(_) => {
                Failure::new(REFUSED, "infeasible", e.to_string())
            }
            MadpeError::Expect(x) => x.into(),
            MadpeError::Measure(x) => x.into(),
            MadpeError::Model(x) => x.into(),
            MadpeError::Linalg(_) => Failure::new(REFUSED, "linear_algebra", e.to_string()),
        }
    }
}

impl From<PenaltyError> for Failure {
    fn from(e: PenaltyError) -> Self {
        Failure::usage(e.to_string())
    }
}

impl From<TbpeError> for Failure {
    fn from(e: TbpeError) -> Self {
        match e {
            TbpeError::Penalty(p) => p.into(),
            TbpeError::Expect(x) => x.into(),
            TbpeError::Model(x) => x.into(),
            TbpeError::ThresholdTooLarge(_) => Failure::new(BUDGET, "threshold_too_large", e.to_string()),
        }
    }
}

impl From<OracleError> for Failure {
    fn from(e: OracleError) -> Self {
        match e {
            OracleError::PathBudget(_) => Failure::new(BUDGET, "path_budget", e.to_string()),
            OracleError::GridBudget { .. } => Failure::new(BUDGET, "grid_budget", e.to_string()),
            OracleError::StepCap { .. } => Failure::new(BUDGET, "step_cap", e.to_string()),
            OracleError::Cyclic => Failure::new(REFUSED, "cyclic", e.to_string()),
            OracleError::Resolution | OracleError::MissingThreshold => Failure::usage(e.to_string()),
            OracleError::Model(m) => m.into(),
        }
    }
}

impl From<ReductionError> for Failure {
    fn from(e: ReductionError) -> Self {
        match e {
            ReductionError::Cyclic => Failure::new(MODEL, "cyclic", e.to_string()),
            ReductionError::NonNaturalReward(_) => Failure::new(MODEL, "non_natural_reward", e.to_string()),
            ReductionError::DegenerateSplit { .. } | ReductionError::ThresholdBelowOne => Failure::usage(e.to_string()),
            ReductionError::Inconsistent { .. } | ReductionError::Expectation { .. } => {
                Failure::new(REFUSED, "inconsistent", e.to_string())
            }
            ReductionError::Measure(x) => x.into(),
            ReductionError::Tbpe(x) => x.into(),
            ReductionError::Model(x) => x.into(),
        }
    }
}

impl From<FormatError> for Failure {
    fn from(e: FormatError) -> Self {
        Failure::new(REFUSED, "format", e.to_string())
    }
}

/// Settings shared by every subcommand plus what the run collects.
pub struct Ctx {
    pub decimals: Option<usize>,
    pub parallel: bool,
    pub model_hash: Option<String>,
    pub timings: Vec<(String, f64)>,
    pub summary: Vec<String>,
}

impl Ctx {
    pub fn new(decimals: Option<usize>, parallel: bool) -> Self {
        Ctx { decimals, parallel, model_hash: None, timings: Vec::new(), summary: Vec::new() }
    }

    pub fn hash(&mut self, m: &Mdp) {
        self.model_hash = Some(model_hash(m));
    }

    pub fn say(&mut self, line: impl Into<String>) {
        self.summary.push(line.into());
    }

    /// Runs `f` and records its wall time under `phase`.
    pub fn phase<T>(&mut self, phase: &str, f: impl FnOnce() -> T) -> T {
        let start = Instant::now();
        let out = f();
        self.timings.push((phase.to_string(), start.elapsed().as_secs_f64() * 1000.0));
        out
    }

    /// Inserts `key` as `p/q` and, with `--decimals`, `key_decimal`.
    pub fn put(&self, obj: &mut Map<String, Value>, key: &str, r: &Rational) {
        obj.insert(key.to_string(), json!(fmt_rational(r)));
        if let Some(d) = self.decimals {
            obj.insert(format!("{key}_decimal"), json!(to_decimal(r, d)));
        }
    }

    pub fn interval(&self, obj: &mut Map<String, Value>, key: &str, i: &Interval) {
        let mut o = Map::new();
        self.put(&mut o, "lo", &i.lo);
        self.put(&mut o, "hi", &i.hi);
        obj.insert(key.to_string(), Value::Object(o));
    }

    pub fn measures(&self, obj: &mut Map<String, Value>, r: &MeasureReport) {
        self.put(obj, "E", &r.expectation);
        self.put(obj, "V", &r.variance);
        self.put(obj, "MAD", &r.mad);
        self.put(obj, "SMAD", &r.smad);
        self.put(obj, "SV", &r.semivariance);
    }
}

pub fn pairs(d: &RewardDistribution) -> Value {
    Value::Array(d.atoms().iter().map(|(v, p)| json!([fmt_rational(v), fmt_rational(p)])).collect())
}
