//! Text formats for models and schedulers.
//!
//! Model documents are line oriented:
//!
//! ```text
//! mdp                          # or: chain
//! initial s_init
//! goal goal
//! state s_init
//!   action alpha reward 0
//!     -> s0 1/4
//!     -> s1 3/4
//! state goal
//! ```
//!
//! In `chain` documents a state carries its reward directly
//! (`state s reward 2`) and lists its successors without an action line.
//! A `#` at the start of a token begins a comment, so identifiers such as
//! `ec#0` stay intact.
//!
//! Scheduler documents hold one decision per line:
//!
//! ```text
//! limit 2
//! state s_init: alpha=1/2 beta=1/2
//! state s_init reward 0: beta=1
//! ```
//!
//! Lines with a `reward <w>` qualifier make the scheduler reward based; they
//! apply for accumulated reward `w < limit`, and unqualified lines form the
//! default rule. `limit` defaults to one more than the largest qualifier.

use super::chain::{Chain, CHAIN_ACTION};
use super::error::ModelError;
use super::mdp::{Choice, Mdp};
use super::scheduler::{ActionDist, MemoryUpdate, MemorylessScheduler, RewardBasedScheduler, Scheduler};
use crate::rational::{fmt_rational, parse_rational, Rational};
use num_traits::Zero;
use sha2::{Digest, Sha256};
use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt::Write;

/// A parsed model document.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ParsedModel {
    Mdp(Mdp),
    Chain(Chain),
}

impl ParsedModel {
    pub fn as_mdp(&self) -> &Mdp {
        match self {
            ParsedModel::Mdp(m) => m,
            ParsedModel::Chain(c) => c.as_mdp(),
        }
    }

    pub fn into_mdp(self) -> Mdp {
        match self {
            ParsedModel::Mdp(m) => m,
            ParsedModel::Chain(c) => c.into_mdp(),
        }
    }

    pub fn is_chain(&self) -> bool {
        matches!(self, ParsedModel::Chain(_))
    }
}

struct Token<'a> {
    text: &'a str,
    column: usize,
}

fn tokenize(line: &str) -> Vec<Token<'_>> {
    let mut out = Vec::new();
    let mut start: Option<usize> = None;
    let mut column = 0usize;
    let mut col_at = 0usize;
    for (i, ch) in line.char_indices() {
        column += 1;
        if ch.is_whitespace() {
            if let Some(s) = start.take() {
                out.push(Token { text: &line[s..i], column: col_at });
            }
        } else if start.is_none() {
            if ch == '#' {
                return out;
            }
            start = Some(i);
            col_at = column;
        }
    }
    if let Some(s) = start {
        out.push(Token { text: &line[s..], column: col_at });
    }
    out
}

fn syntax(line: usize, column: usize, message: impl Into<String>) -> ModelError {
    ModelError::Syntax { line, column, message: message.into() }
}

struct RawAction {
    name: String,
    reward: Rational,
    line: usize,
    successors: Vec<(String, Rational, usize)>,
}

struct RawState {
    name: String,
    line: usize,
    chain_reward: Option<(Rational, usize)>,
    actions: Vec<RawAction>,
}

fn parse_number(tok: &Token<'_>, line: usize, what: &str) -> Result<Rational, ModelError> {
    parse_rational(tok.text).map_err(|_| syntax(line, tok.column, format!("expected {what}, found `{}`", tok.text)))
}

/// Parses a model document and validates every model invariant.
pub fn parse_model(text: &str) -> Result<ParsedModel, ModelError> {
    let parsed = parse_model_unvalidated(text)?;
    if let Some(err) = parsed.as_mdp().validate().into_error() {
        return Err(err);
    }
    Ok(parsed)
}

/// Parses a model document, checking syntax and references only.
///
/// Probability sums, reward signs and the goal-trap condition are left to
/// [`Mdp::validate`].
pub fn parse_model_unvalidated(text: &str) -> Result<ParsedModel, ModelError> {
    let mut kind: Option<bool> = None; // Some(true) = chain
    let mut initial: Option<(String, usize)> = None;
    let mut goal: Option<(String, usize)> = None;
    let mut states: Vec<RawState> = Vec::new();
    let mut seen_states: HashMap<String, usize> = HashMap::new();

    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let toks = tokenize(raw);
        if toks.is_empty() {
            continue;
        }
        let head = &toks[0];
        let Some(is_chain) = kind else {
            match (head.text, toks.len()) {
                ("mdp", 1) => kind = Some(false),
                ("chain", 1) => kind = Some(true),
                _ => return Err(syntax(line, head.column, "expected header `mdp` or `chain`")),
            }
            continue;
        };
        let arity = |n: usize| -> Result<(), ModelError> {
            if toks.len() == n {
                Ok(())
            } else {
                let col = toks.get(n).map(|t| t.column).unwrap_or(raw.len() + 1);
                Err(syntax(line, col, format!("`{}` takes {} argument(s)", head.text, n - 1)))
            }
        };
        match head.text {
            "initial" => {
                arity(2)?;
                if initial.is_some() {
                    return Err(ModelError::Duplicate {
                        what: "initial directive".into(),
                        name: toks[1].text.into(),
                        line: Some(line),
                    });
                }
                initial = Some((toks[1].text.to_string(), line));
            }
            "goal" => {
                arity(2)?;
                if goal.is_some() {
                    return Err(ModelError::Duplicate {
                        what: "goal directive".into(),
                        name: toks[1].text.into(),
                        line: Some(line),
                    });
                }
                goal = Some((toks[1].text.to_string(), line));
            }
            "state" => {
                if toks.len() < 2 {
                    return Err(syntax(line, raw.len() + 1, "missing state identifier"));
                }
                let name = toks[1].text.to_string();
                let chain_reward = if is_chain && toks.len() > 2 {
                    arity(4)?;
                    if toks[2].text != "reward" {
                        return Err(syntax(line, toks[2].column, "expected `reward`"));
                    }
                    Some((parse_number(&toks[3], line, "a reward")?, line))
                } else {
                    arity(2)?;
                    None
                };
                if seen_states.insert(name.clone(), line).is_some() {
                    return Err(ModelError::Duplicate { what: "state".into(), name, line: Some(line) });
                }
                let mut actions = Vec::new();
                if is_chain {
                    actions.push(RawAction {
                        name: CHAIN_ACTION.into(),
                        reward: chain_reward.as_ref().map(|r| r.0.clone()).unwrap_or_else(Rational::zero),
                        line,
                        successors: Vec::new(),
                    });
                }
                states.push(RawState { name, line, chain_reward, actions });
            }
            "action" => {
                if is_chain {
                    return Err(syntax(line, head.column, "`action` is not allowed in chain documents"));
                }
                let Some(state) = states.last_mut() else {
                    return Err(syntax(line, head.column, "`action` before any `state`"));
                };
                if toks.len() < 2 {
                    return Err(syntax(line, raw.len() + 1, "missing action identifier"));
                }
                let reward = if toks.len() > 2 {
                    arity(4)?;
                    if toks[2].text != "reward" {
                        return Err(syntax(line, toks[2].column, "expected `reward`"));
                    }
                    parse_number(&toks[3], line, "a reward")?
                } else {
                    Rational::zero()
                };
                let name = toks[1].text.to_string();
                if state.actions.iter().any(|a| a.name == name) {
                    return Err(ModelError::Duplicate { what: "action".into(), name, line: Some(line) });
                }
                state.actions.push(RawAction { name, reward, line, successors: Vec::new() });
            }
            "->" => {
                arity(3)?;
                let Some(action) = states.last_mut().and_then(|s| s.actions.last_mut()) else {
                    return Err(syntax(line, head.column, "transition outside of an action"));
                };
                let target = toks[1].text.to_string();
                let prob = parse_number(&toks[2], line, "a probability")?;
                if action.successors.iter().any(|(t, _, _)| *t == target) {
                    return Err(ModelError::Duplicate { what: "transition".into(), name: target, line: Some(line) });
                }
                action.successors.push((target, prob, line));
            }
            other => return Err(syntax(line, head.column, format!("unknown directive `{other}`"))),
        }
    }

    let Some(is_chain) = kind else {
        return Err(syntax(1, 1, "empty document"));
    };
    let mut names: Vec<String> = states.iter().map(|s| s.name.clone()).collect();
    let mut choices: Vec<Vec<Choice>> = Vec::with_capacity(names.len() + 1);
    if let Some((g, _)) = &goal {
        if !seen_states.contains_key(g) {
            names.push(g.clone());
        }
    }
    let index: HashMap<&str, usize> = names.iter().enumerate().map(|(i, n)| (n.as_str(), i)).collect();
    let lookup = |name: &str, line: usize| {
        index.get(name).copied().ok_or_else(|| ModelError::UnknownState { name: name.to_string(), line: Some(line) })
    };
    for state in &states {
        let mut list = Vec::new();
        for a in &state.actions {
            if is_chain && a.successors.is_empty() {
                if let Some((_, l)) = &state.chain_reward {
                    return Err(syntax(*l, 1, format!("trap state `{}` cannot carry a reward", state.name)));
                }
                continue;
            }
            let successors = a
                .successors
                .iter()
                .map(|(t, p, l)| lookup(t, *l).map(|i| (i, p.clone())))
                .collect::<Result<Vec<_>, _>>()?;
            if successors.is_empty() {
                return Err(syntax(a.line, 1, format!("action `{}` at `{}` has no transitions", a.name, state.name)));
            }
            list.push(Choice { action: a.name.clone(), reward: a.reward.clone(), successors });
        }
        let _ = state.line;
        choices.push(list);
    }
    while choices.len() < names.len() {
        choices.push(Vec::new());
    }
    let (init_name, init_line) = initial.ok_or_else(|| syntax(1, 1, "missing `initial` directive"))?;
    let init = lookup(&init_name, init_line)?;
    let goal_idx = match &goal {
        Some((g, l)) => Some(lookup(g, *l)?),
        None => None,
    };
    let mdp = Mdp::from_parts(names, init, goal_idx, choices)?;
    if is_chain {
        Ok(ParsedModel::Chain(Chain::from_mdp(mdp)?))
    } else {
        Ok(ParsedModel::Mdp(mdp))
    }
}

/// Writes an MDP document; `parse_model` reads it back to an equal value.
pub fn serialize_model(m: &Mdp) -> String {
    let mut out = String::from("mdp\n");
    write_header(&mut out, m);
    for s in 0..m.num_states() {
        let _ = writeln!(out, "state {}", m.state_name(s));
        for c in m.choices(s) {
            let _ = writeln!(out, "  action {} reward {}", c.action, fmt_rational(&c.reward));
            for (t, p) in &c.successors {
                let _ = writeln!(out, "    -> {} {}", m.state_name(*t), fmt_rational(p));
            }
        }
    }
    out
}

/// Writes a chain document.
pub fn serialize_chain(c: &Chain) -> String {
    let m = c.as_mdp();
    let mut out = String::from("chain\n");
    write_header(&mut out, m);
    for s in 0..m.num_states() {
        match m.choices(s).first() {
            None => {
                let _ = writeln!(out, "state {}", m.state_name(s));
            }
            Some(ch) => {
                let _ = writeln!(out, "state {} reward {}", m.state_name(s), fmt_rational(&ch.reward));
                for (t, p) in &ch.successors {
                    let _ = writeln!(out, "  -> {} {}", m.state_name(*t), fmt_rational(p));
                }
            }
        }
    }
    out
}

fn write_header(out: &mut String, m: &Mdp) {
    let _ = writeln!(out, "initial {}", m.state_name(m.initial()));
    if let Some(g) = m.goal() {
        let _ = writeln!(out, "goal {}", m.state_name(g));
    }
}

/// First 16 hex digits of the SHA-256 of the serialized model.
pub fn model_hash(m: &Mdp) -> String {
    let digest = Sha256::digest(serialize_model(m).as_bytes());
    hex::encode(digest)[..16].to_string()
}

/// Parses a scheduler document (see module docs).
pub fn parse_scheduler(text: &str) -> Result<Scheduler, ModelError> {
    let mut limit: Option<u64> = None;
    let mut default = MemorylessScheduler::default();
    let mut entries: BTreeMap<(String, u64), ActionDist> = BTreeMap::new();
    let mut seen: HashSet<(String, Option<u64>)> = HashSet::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let toks = tokenize(raw);
        if toks.is_empty() {
            continue;
        }
        if toks[0].text == "limit" {
            if toks.len() != 2 {
                return Err(syntax(line, toks[0].column, "`limit` takes one argument"));
            }
            let n =
                toks[1].text.parse::<u64>().map_err(|_| syntax(line, toks[1].column, "expected a natural number"))?;
            limit = Some(n);
            continue;
        }
        if toks[0].text != "state" {
            return Err(syntax(line, toks[0].column, "expected `state` or `limit`"));
        }
        let content: String = raw.split('#').next().unwrap_or("").to_string();
        let Some(colon) = content.find(':') else {
            return Err(syntax(line, raw.len() + 1, "missing `:` after the state"));
        };
        let head = tokenize(&content[..colon]);
        let state = head.get(1).ok_or_else(|| syntax(line, 1, "missing state identifier"))?.text.to_string();
        let reward = match head.len() {
            2 => None,
            4 if head[2].text == "reward" => Some(
                head[3]
                    .text
                    .parse::<u64>()
                    .map_err(|_| syntax(line, head[3].column, "expected a natural-number reward"))?,
            ),
            _ => return Err(syntax(line, head.get(2).map(|t| t.column).unwrap_or(1), "expected `reward <w>` or `:`")),
        };
        let mut dist: ActionDist = Vec::new();
        for tok in tokenize(&content[colon + 1..]) {
            let Some((a, p)) = tok.text.split_once('=') else {
                return Err(syntax(line, colon + 1 + tok.column, "expected `action=prob`"));
            };
            let p = parse_rational(p)
                .map_err(|_| syntax(line, colon + 1 + tok.column, format!("bad probability `{p}`")))?;
            dist.push((a.to_string(), p));
        }
        if dist.is_empty() {
            return Err(syntax(line, colon + 1, "empty distribution"));
        }
        if !seen.insert((state.clone(), reward)) {
            return Err(ModelError::Duplicate { what: "scheduler entry".into(), name: state, line: Some(line) });
        }
        match reward {
            Some(w) => {
                entries.insert((state, w), dist);
            }
            None => {
                default.choices.insert(state, dist);
            }
        }
    }
    if entries.is_empty() && limit.is_none() {
        return Ok(Scheduler::Memoryless(default));
    }
    let limit = limit.unwrap_or_else(|| entries.keys().map(|(_, w)| w + 1).max().unwrap_or(0));
    Ok(Scheduler::RewardBased(RewardBasedScheduler { limit, entries, default }))
}

fn write_dist(out: &mut String, head: &str, dist: &ActionDist) {
    out.push_str(head);
    out.push(':');
    for (a, p) in dist {
        let _ = write!(out, " {}={}", a, fmt_rational(p));
    }
    out.push('\n');
}

/// Writes a scheduler document. Finite-memory schedulers are written in their
/// reward-based form, which requires a reward-counter memory.
pub fn write_scheduler(s: &Scheduler) -> Result<String, ModelError> {
    let mut out = String::new();
    match s {
        Scheduler::Memoryless(m) => {
            for (state, dist) in &m.choices {
                write_dist(&mut out, &format!("state {state}"), dist);
            }
        }
        Scheduler::RewardBased(r) => write_reward_based(&mut out, r),
        Scheduler::FiniteMemory(f) => {
            let MemoryUpdate::RewardCounter { threshold, cap } = &f.update else {
                return Err(ModelError::Scheduler("only reward-counter memory can be written".into()));
            };
            let _ = writeln!(out, "# reward counter memory: threshold {} cap {}", fmt_rational(threshold), cap);
            let r = f.to_reward_based().expect("counter memory");
            write_reward_based(&mut out, &r);
        }
    }
    Ok(out)
}

fn write_reward_based(out: &mut String, r: &RewardBasedScheduler) {
    let _ = writeln!(out, "limit {}", r.limit);
    for (state, dist) in &r.default.choices {
        write_dist(out, &format!("state {state}"), dist);
    }
    for ((state, w), dist) in &r.entries {
        write_dist(out, &format!("state {state} reward {w}"), dist);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::rational::{int, ratio};

    const TWO_BRANCH: &str = "\
mdp
initial s_init
goal goal
state s_init
  action alpha reward 0
    -> s0 1/4
    -> s1 0.75
  action beta
    -> s2 1/4
    -> s1 3/4
state s0
  action tau reward 0
    -> goal 1
state s1   # middle outcome
  action tau reward 1
    -> goal 1
state s2
  action tau reward 2
    -> goal 1
";

    #[test]
    fn parses_two_branch() {
        let m = parse_model(TWO_BRANCH).unwrap().into_mdp();
        assert_eq!(m.num_states(), 5);
        assert_eq!(m.choices(m.initial()).len(), 2);
        assert_eq!(m.choices(0)[0].successors[1].1, ratio(3, 4));
        assert_eq!(m, fixtures::two_branch());
    }

    #[test]
    fn goal_only_document() {
        let m = parse_model("mdp\ninitial goal\ngoal goal\n").unwrap().into_mdp();
        assert_eq!(m.num_states(), 1);
        assert!(m.is_trap(0));
    }

    #[test]
    fn error_categories() {
        let bad_sum = TWO_BRANCH.replace("-> s1 0.75", "-> s1 13/20");
        assert_eq!(parse_model(&bad_sum).unwrap_err().category(), "probability_sum");
        let neg = TWO_BRANCH.replace("reward 2", "reward -1");
        assert_eq!(parse_model(&neg).unwrap_err().category(), "negative_reward");
        let unknown = TWO_BRANCH.replace("-> s2 1/4", "-> s9 1/4");
        assert!(matches!(parse_model(&unknown).unwrap_err(), ModelError::UnknownState { line: Some(9), .. }));
        let dup = TWO_BRANCH.replace("-> s2 1/4", "-> s1 1/4");
        assert_eq!(parse_model(&dup).unwrap_err().category(), "duplicate");
        let syn = TWO_BRANCH.replace("action beta", "action beta reward");
        match parse_model(&syn).unwrap_err() {
            ModelError::Syntax { line, .. } => assert_eq!(line, 8),
            e => panic!("{e:?}"),
        }
        assert_eq!(parse_model("chain\nfoo\n").unwrap_err().category(), "syntax");
    }

    #[test]
    fn hash_in_identifier_is_not_a_comment() {
        let text = "mdp\ninitial ec#0\ngoal goal\nstate ec#0 # comment\n  action tau reward 1\n    -> goal 1\n";
        let m = parse_model(text).unwrap().into_mdp();
        assert_eq!(m.state_name(0), "ec#0");
    }

    #[test]
    fn chain_documents() {
        let text = "chain\ninitial c\ngoal goal\nstate c\n  -> a 3/4\n  -> b 1/4\nstate a reward 1\n  -> goal 1\nstate b reward 2\n  -> goal 1\n";
        let parsed = parse_model(text).unwrap();
        let ParsedModel::Chain(c) = &parsed else { panic!("expected chain") };
        assert_eq!(c.reward(2), int(2));
        let again = parse_model(&serialize_chain(c)).unwrap();
        assert_eq!(again, parsed);
    }

    #[test]
    fn round_trips() {
        for m in [
            fixtures::two_branch(),
            fixtures::geometric_loop(&ratio(1, 3)),
            fixtures::safe_or_gamble(),
            fixtures::ladder(3),
        ] {
            let text = serialize_model(&m);
            assert_eq!(parse_model(&text).unwrap().into_mdp(), m);
            assert_eq!(model_hash(&m).len(), 16);
        }
    }

    #[test]
    fn scheduler_documents() {
        let text = "state s_init: alpha=1/2 beta=1/2\n";
        let s = parse_scheduler(text).unwrap();
        assert!(matches!(s, Scheduler::Memoryless(_)));
        assert_eq!(write_scheduler(&s).unwrap(), text);

        let text = "limit 2\nstate s_init: beta=1\nstate s_init reward 0: alpha=1\nstate s_init reward 1: alpha=1/3 beta=2/3\n";
        let s = parse_scheduler(text).unwrap();
        let Scheduler::RewardBased(r) = &s else { panic!() };
        assert_eq!(r.limit, 2);
        assert_eq!(r.entries.len(), 2);
        assert_eq!(write_scheduler(&s).unwrap(), text);
        assert!(s.resolve(&fixtures::two_branch()).is_ok());

        assert!(parse_scheduler("state s_init alpha=1\n").is_err());
        assert!(parse_scheduler("state s: a=1\nstate s: a=1\n").is_err());
    }
}
