//! Subcommand implementations. Each returns the `result` payload of the report.

use crate::report::{pairs, Ctx, Failure, MODEL, REFUSED};
use crate::{
    Class, Command, Distribution, EvalArgs, ExpmaxArgs, ExportQpArgs, GridArgs, MadpeArgs, MeasuresArgs, Method,
    ModelArg, NormalizeArgs, Objective, OracleCommand, Penalty, ReduceArgs, SimulateArgs, TbpeArgs,
};
use num_traits::Zero;
use riskmdp::expect::{optimize, Direction, ExpectError};
use riskmdp::madpe::{build_qp, build_unfolding_n, check_lambda, export_qp, solve_madpe_sweep, unfold, SweepConfig};
use riskmdp::measures::{
    deviation_bounds, deviation_report, distribution_of, exact_distribution, penalized, penalized_bounds,
    truncated_distribution_of, MeasureError, PenaltyKind, PenaltySpec, Truncation,
};
use riskmdp::model::{
    parse_model, parse_model_unvalidated, parse_scheduler, serialize_chain, serialize_model, write_scheduler, Chain,
    Mdp, MemorylessScheduler, ParsedModel, RewardDistribution, Scheduler,
};
use riskmdp::oracle::{grid_search, simulate, total_variation, GridSpec, SchedulerClass, SimConfig};
use riskmdp::preprocess::{check_finite_expectation, normalize, normalize_with, NormalizeOptions};
use riskmdp::rational::{fmt_rational, int, Rational};
use riskmdp::reductions::{binary_search_mad, recover_tail_probability_crinkle, recover_tail_probability_mad, Branch};
use riskmdp::tbpe::{parse_breakpoints, solve_tbpe, solve_tbpe_float, PenaltyFunction, TbpeError};
use serde_json::{json, Map, Value};
use std::path::Path;

type Outcome = Result<Value, Failure>;

pub fn run(cmd: &Command, ctx: &mut Ctx) -> Outcome {
    match cmd {
        Command::Validate(a) => validate(a, ctx),
        Command::Normalize(a) => normalize_cmd(a, ctx),
        Command::Expmax(a) => expmax(a, ctx),
        Command::Measures(a) => measures(a, ctx),
        Command::SolveTbpe(a) => solve_tbpe_cmd(a, ctx),
        Command::SolveMadpe(a) => solve_madpe(a, ctx),
        Command::ExportQp(a) => export_qp_cmd(a, ctx),
        Command::Oracle { command: OracleCommand::Grid(a) } => grid(a, ctx),
        Command::Oracle { command: OracleCommand::Simulate(a) } => simulate_cmd(a, ctx),
        Command::Reduce(a) => reduce(a, ctx),
        Command::EvalScheduler(a) => eval_scheduler(a, ctx),
    }
}

fn read(path: &Path) -> Result<String, Failure> {
    std::fs::read_to_string(path).map_err(|e| Failure::new(MODEL, "io", format!("{}: {e}", path.display())))
}

fn write(path: &Path, text: &str) -> Result<(), Failure> {
    std::fs::write(path, text).map_err(|e| Failure::usage(format!("{}: {e}", path.display())))
}

fn load(path: &Path, ctx: &mut Ctx) -> Result<Mdp, Failure> {
    let m = ctx.phase("parse", || -> Result<Mdp, Failure> { Ok(parse_model(&read(path)?)?.into_mdp()) })?;
    ctx.hash(&m);
    Ok(m)
}

fn load_scheduler(path: Option<&Path>) -> Result<Scheduler, Failure> {
    match path {
        Some(p) => Ok(parse_scheduler(&read(p)?)?),
        None => Ok(MemorylessScheduler::default().into()),
    }
}

/// Refuses models whose maximal expected reward is infinite.
fn require_finite(m: &Mdp) -> Result<(), Failure> {
    if check_finite_expectation(m) {
        return Ok(());
    }
    match normalize(m) {
        Err(e) => Err(e.into()),
        Ok(_) => Err(Failure::new(REFUSED, "infinite_expectation", "maximal expected reward is infinite")),
    }
}

fn distinct_decisions(m: &Mdp) -> usize {
    (0..m.num_states()).filter(|&s| m.choices(s).len() > 1).count()
}

fn validate(a: &ModelArg, ctx: &mut Ctx) -> Outcome {
    let text = read(&a.model)?;
    let parsed = parse_model_unvalidated(&text)?;
    let m = parsed.as_mdp();
    ctx.hash(m);
    let report = ctx.phase("validate", || m.validate());
    let choices: usize = m.all_choices().iter().map(Vec::len).sum();
    let result = json!({
        "kind": if parsed.is_chain() { "chain" } else { "mdp" },
        "states": m.num_states(),
        "choices": choices,
        "valid": report.is_empty(),
        "issues": serde_json::to_value(&report.issues).expect("issues serialize"),
    });
    ctx.say(format!("{} states, {} choices, {} issue(s)", m.num_states(), choices, report.issues.len()));
    for i in &report.issues {
        ctx.say(format!("  {}: {}", i.kind.label(), i.message));
    }
    if report.is_empty() {
        Ok(result)
    } else {
        let mut f = Failure::new(MODEL, "invalid", format!("{} invariant violation(s)", report.issues.len()));
        f.result = Some(Box::new(result));
        Err(f)
    }
}

fn normalize_cmd(a: &NormalizeArgs, ctx: &mut Ctx) -> Outcome {
    let m = load(&a.model, ctx)?;
    let n =
        ctx.phase("normalize", || normalize_with(&m, NormalizeOptions { collapse_zero_value: a.collapse_zero_value }))?;
    let text = serialize_model(n.mdp());
    let provenance: Map<String, Value> =
        (0..n.mdp().num_states()).map(|s| (n.mdp().state_name(s).to_string(), json!(n.provenance(s)))).collect();
    let mut r = Map::new();
    r.insert("states_in".into(), json!(m.num_states()));
    r.insert("states_out".into(), json!(n.mdp().num_states()));
    r.insert("goal".into(), json!(n.mdp().state_name(n.goal())));
    r.insert("normalized_hash".into(), json!(riskmdp::model::model_hash(n.mdp())));
    r.insert("provenance".into(), Value::Object(provenance));
    match &a.out {
        Some(p) => {
            write(p, &text)?;
            r.insert("written".into(), json!(p.display().to_string()));
        }
        None => {
            r.insert("model".into(), json!(text));
        }
    }
    ctx.say(format!("{} states -> {} states", m.num_states(), n.mdp().num_states()));
    Ok(Value::Object(r))
}

fn expmax(a: &ExpmaxArgs, ctx: &mut Ctx) -> Outcome {
    let m = load(&a.model, ctx)?;
    let dir = if a.min { Direction::Min } else { Direction::Max };
    if dir == Direction::Max {
        require_finite(&m)?;
    }
    let (model, table, normalized) = match ctx.phase("solve", || optimize(&m, dir)) {
        Ok(t) => (m, t, false),
        Err(ExpectError::Improper(_)) => {
            let n = normalize(&m)?;
            let t = ctx.phase("solve_normalized", || optimize(n.mdp(), dir))?;
            (n.into_mdp(), t, true)
        }
        Err(e) => return Err(e.into()),
    };
    let sched = write_scheduler(&table.scheduler(&model).into())?;
    let mut values = Map::new();
    for s in 0..model.num_states() {
        ctx.put(&mut values, model.state_name(s), &table.values[s]);
    }
    let mut r = Map::new();
    r.insert("direction".into(), json!(if a.min { "min" } else { "max" }));
    ctx.put(&mut r, "value", &table.values[model.initial()]);
    r.insert("values".into(), Value::Object(values));
    r.insert("normalized".into(), json!(normalized));
    r.insert("scheduler".into(), json!(sched));
    if let Some(p) = &a.scheduler_out {
        write(p, &sched)?;
        r.insert("scheduler_file".into(), json!(p.display().to_string()));
    }
    ctx.say(format!("E^{} = {}", if a.min { "min" } else { "max" }, table.values[model.initial()]));
    Ok(Value::Object(r))
}

/// Reward law of a chain or scheduled model; cyclic ones are cut at `epsilon`.
fn law(d: &Distribution, ctx: &mut Ctx) -> Result<(Mdp, RewardDistribution), Failure> {
    let (m, sched) = match (&d.chain, &d.model) {
        (Some(c), _) => {
            let m = load(c, ctx)?;
            if distinct_decisions(&m) > 0 {
                return Err(Failure::new(MODEL, "not_a_chain", format!("{} has decisions", c.display())));
            }
            (m, MemorylessScheduler::default().into())
        }
        (None, Some(p)) => {
            let m = load(p, ctx)?;
            let s = load_scheduler(d.scheduler.as_deref())?;
            (m, s)
        }
        (None, None) => return Err(Failure::usage("pass --chain or --model")),
    };
    let dist = match ctx.phase("distribution", || distribution_of(&m, &sched)) {
        Ok(x) => x,
        Err(MeasureError::Cyclic) => ctx.phase("truncated_distribution", || {
            truncated_distribution_of(&m, &sched, &Truncation::new(d.epsilon.clone()))
        })?,
        Err(e) => return Err(e.into()),
    };
    Ok((m, dist))
}

fn law_json(
    d: &RewardDistribution,
    args: &Distribution,
    ctx: &mut Ctx,
    r: &mut Map<String, Value>,
) -> Result<(), Failure> {
    if d.is_exact() {
        let rep = deviation_report(d)?;
        r.insert("mode".into(), json!("exact"));
        ctx.measures(r, &rep);
        ctx.say(format!(
            "E = {}  V = {}  MAD = {}  SMAD = {}  SV = {}",
            rep.expectation, rep.variance, rep.mad, rep.smad, rep.semivariance
        ));
    } else {
        let b = deviation_bounds(d, &args.period);
        r.insert("mode".into(), json!("bounds"));
        ctx.put(r, "tail_mass", d.tail_mass());
        ctx.put(r, "epsilon", &args.epsilon);
        ctx.interval(r, "E", &b.expectation);
        ctx.interval(r, "V", &b.variance);
        ctx.interval(r, "MAD", &b.mad);
        ctx.interval(r, "SMAD", &b.smad);
        ctx.interval(r, "SV", &b.semivariance);
        ctx.say(format!("cyclic: bounds with tail mass {}", d.tail_mass()));
        ctx.say(format!("E in [{}, {}]  MAD in [{}, {}]", b.expectation.lo, b.expectation.hi, b.mad.lo, b.mad.hi));
    }
    Ok(())
}

fn measures(a: &MeasuresArgs, ctx: &mut Ctx) -> Outcome {
    let (_, d) = law(&a.dist, ctx)?;
    let mut r = Map::new();
    law_json(&d, &a.dist, ctx, &mut r)?;
    if a.distribution {
        r.insert("distribution".into(), pairs(&d));
    }
    Ok(Value::Object(r))
}

fn eval_scheduler(a: &EvalArgs, ctx: &mut Ctx) -> Outcome {
    let (_, d) = law(&a.dist, ctx)?;
    let mut r = Map::new();
    law_json(&d, &a.dist, ctx, &mut r)?;
    r.insert("distribution".into(), pairs(&d));
    let mut specs = vec![
        ("vpe", PenaltySpec::new(PenaltyKind::Vpe, a.lambda.clone())),
        ("madpe", PenaltySpec::new(PenaltyKind::Madpe, a.lambda.clone())),
        ("smadpe", PenaltySpec::new(PenaltyKind::Smadpe, a.lambda.clone())),
        ("svpe", PenaltySpec::new(PenaltyKind::Svpe, a.lambda.clone())),
    ];
    if let Some(t) = &a.threshold {
        specs.push(("tbpe", PenaltySpec::tbpe(a.lambda.clone(), t.clone())));
    }
    let mut obj = Map::new();
    for (name, spec) in &specs {
        if d.is_exact() {
            let v = penalized(&d, spec)?;
            ctx.say(format!("{name}[{}] = {v}", a.lambda));
            ctx.put(&mut obj, name, &v);
        } else {
            let i = penalized_bounds(&d, spec, &a.dist.period)?;
            ctx.say(format!("{name}[{}] in [{}, {}]", a.lambda, i.lo, i.hi));
            ctx.interval(&mut obj, name, &i);
        }
    }
    ctx.put(&mut r, "lambda", &a.lambda);
    r.insert("objectives".into(), Value::Object(obj));
    Ok(Value::Object(r))
}

fn penalty(a: &TbpeArgs) -> Result<PenaltyFunction, Failure> {
    Ok(match a.penalty {
        Penalty::Tbp => PenaltyFunction::tbp(a.lambda.clone(), a.threshold.clone())?,
        Penalty::Crinkle2 => PenaltyFunction::crinkle2(a.threshold.clone())?,
        Penalty::Custom => {
            let path =
                a.breakpoints.as_deref().ok_or_else(|| Failure::usage("--penalty custom needs --breakpoints"))?;
            let text = std::fs::read_to_string(path).map_err(|e| Failure::usage(format!("{}: {e}", path.display())))?;
            PenaltyFunction::custom(a.threshold.clone(), parse_breakpoints(&text)?)?
        }
    })
}

fn solve_tbpe_cmd(a: &TbpeArgs, ctx: &mut Ctx) -> Outcome {
    let m = load(&a.model, ctx)?;
    let pen = penalty(a)?;
    require_finite(&m)?;
    let (model, sol, normalized) = match ctx.phase("solve", || solve_tbpe(&m, &pen)) {
        Ok(s) => (m, s, false),
        Err(TbpeError::Expect(ExpectError::Improper(_))) => {
            let n = normalize(&m)?.into_mdp();
            let s = ctx.phase("solve_normalized", || solve_tbpe(&n, &pen))?;
            (n, s, true)
        }
        Err(e) => return Err(e.into()),
    };
    let sched = write_scheduler(&sol.scheduler.clone().into())?;
    let mut r = Map::new();
    ctx.put(&mut r, "value", &sol.value);
    let mut p = Map::new();
    p.insert(
        "kind".into(),
        json!(match a.penalty {
            Penalty::Tbp => "tbp",
            Penalty::Crinkle2 => "crinkle2",
            Penalty::Custom => "custom",
        }),
    );
    if a.penalty == Penalty::Tbp {
        ctx.put(&mut p, "lambda", &a.lambda);
    }
    ctx.put(&mut p, "threshold", &a.threshold);
    r.insert("penalty".into(), Value::Object(p));
    r.insert("unfolded_states".into(), json!(sol.unfolded_states));
    r.insert("normalized".into(), json!(normalized));
    r.insert("scheduler".into(), json!(sched));
    if let Some(path) = &a.scheduler_out {
        write(path, &sched)?;
        r.insert("scheduler_file".into(), json!(path.display().to_string()));
    }
    if a.table {
        let rows: Vec<Value> = sol.table.iter().map(|(s, w, v)| json!([s, w, fmt_rational(v)])).collect();
        r.insert("table".into(), Value::Array(rows));
    }
    if let Some(tol) = a.float {
        let v = ctx.phase("value_iteration", || solve_tbpe_float(&model, &pen, tol, 10_000_000))?;
        r.insert("float_value".into(), json!(v));
    }
    ctx.say(format!("value = {}  ({} unfolded states)", sol.value, sol.unfolded_states));
    Ok(Value::Object(r))
}

fn solve_madpe(a: &MadpeArgs, ctx: &mut Ctx) -> Outcome {
    let m = load(&a.model, ctx)?;
    check_lambda(&a.lambda)?;
    if a.divisions == 0 {
        return Err(Failure::usage("--divisions must be at least 1"));
    }
    let n = ctx.phase("normalize", || normalize(&m))?;
    let cfg = SweepConfig {
        divisions: a.divisions,
        refinement_rounds: a.refinement_rounds,
        polish_steps: a.polish_steps,
        parallel: ctx.parallel,
    };
    let sol = ctx.phase("sweep", || solve_madpe_sweep(&n, &a.lambda, &cfg))?;
    let sched = write_scheduler(&sol.scheduler.clone().into())?;
    let mut r = Map::new();
    ctx.put(&mut r, "value", &sol.value);
    ctx.put(&mut r, "upper_bound", &(&sol.value + &sol.gap_bound));
    ctx.put(&mut r, "gap_bound", &sol.gap_bound);
    ctx.put(&mut r, "e_star", &sol.e_star);
    ctx.put(&mut r, "delta", &sol.delta);
    ctx.put(&mut r, "lambda", &a.lambda);
    r.insert("k".into(), json!(sol.k));
    r.insert("ell".into(), json!(sol.ell));
    r.insert("candidates".into(), json!(sol.sweep_log.len()));
    let freq: Map<String, Value> = sol
        .frequencies
        .iter()
        .filter(|(_, v)| !v.is_zero())
        .map(|(k, v)| (k.clone(), json!(fmt_rational(v))))
        .collect();
    r.insert("frequencies".into(), Value::Object(freq));
    r.insert("scheduler".into(), json!(sched));
    if let Some(p) = &a.scheduler_out {
        write(p, &sched)?;
        r.insert("scheduler_file".into(), json!(p.display().to_string()));
    }
    if a.sweep_log {
        let log: Vec<Value> =
            sol.sweep_log.iter().map(|p| json!([fmt_rational(&p.e), p.value.as_ref().map(fmt_rational)])).collect();
        r.insert("sweep_log".into(), Value::Array(log));
    }
    ctx.say(format!("MADPE[{}] in [{}, {}]  (E = {})", a.lambda, sol.value, &sol.value + &sol.gap_bound, sol.e_star));
    Ok(Value::Object(r))
}

fn export_qp_cmd(a: &ExportQpArgs, ctx: &mut Ctx) -> Outcome {
    let m = load(&a.model, ctx)?;
    check_lambda(&a.lambda)?;
    let n = normalize(&m)?;
    let u = ctx.phase("unfold", || build_unfolding_n(&n))?;
    let q = build_qp(&u, &a.lambda)?;
    let text = export_qp(&q)?;
    let mut r = Map::new();
    ctx.put(&mut r, "lambda", &a.lambda);
    r.insert("k".into(), json!(q.k));
    r.insert("ell".into(), json!(q.ell));
    r.insert("variables".into(), json!(q.document.problem.variables.len()));
    r.insert("constraints".into(), json!(q.document.problem.constraints.len()));
    r.insert("quadratic_terms".into(), json!(q.document.quadratic.len()));
    match &a.out {
        Some(p) => {
            write(p, &text)?;
            r.insert("written".into(), json!(p.display().to_string()));
        }
        None => {
            r.insert("qp".into(), json!(text));
        }
    }
    ctx.say(format!(
        "{} variables, {} constraints, {} bilinear terms",
        q.document.problem.variables.len(),
        q.document.problem.constraints.len(),
        q.document.quadratic.len()
    ));
    Ok(Value::Object(r))
}

fn grid(a: &GridArgs, ctx: &mut Ctx) -> Outcome {
    let m = load(&a.model, ctx)?;
    let kind = match a.objective {
        Objective::Vpe => PenaltyKind::Vpe,
        Objective::Madpe => PenaltyKind::Madpe,
        Objective::Smadpe => PenaltyKind::Smadpe,
        Objective::Svpe => PenaltyKind::Svpe,
        Objective::Tbpe => PenaltyKind::Tbpe,
    };
    let objective = PenaltySpec { kind, lambda: a.lambda.clone(), threshold: a.threshold.clone() };
    let class = match a.class {
        Class::Memoryless => SchedulerClass::Memoryless,
        Class::RewardBased => {
            let bound = match a.bound {
                Some(b) => b,
                None => {
                    require_finite(&m)?;
                    unfold(&m)?.k - 1
                }
            };
            SchedulerClass::RewardBased { bound }
        }
    };
    let spec = GridSpec {
        resolution: a.resolution,
        class,
        objective,
        budget: a.budget,
        keep_surface: a.surface,
        parallel: ctx.parallel,
    };
    let res = ctx.phase("grid", || grid_search(&m, &spec))?;
    let best: Vec<Value> = res
        .decisions
        .iter()
        .zip(&res.best.probabilities)
        .map(|((state, level, actions), probs)| {
            let mut d = Map::new();
            d.insert("state".into(), json!(state));
            if let Some(w) = level {
                d.insert("reward".into(), json!(w));
            }
            let mut dist = Map::new();
            for (act, p) in actions.iter().zip(probs) {
                ctx.put(&mut dist, act, p);
            }
            d.insert("actions".into(), Value::Object(dist));
            Value::Object(d)
        })
        .collect();
    let mut r = Map::new();
    ctx.put(&mut r, "value", &res.value);
    r.insert("resolution".into(), json!(a.resolution));
    r.insert("points".into(), json!(res.points.to_string()));
    r.insert("best".into(), Value::Array(best));
    if let SchedulerClass::RewardBased { bound } = class {
        r.insert("bound".into(), json!(bound));
    }
    r.insert("scheduler".into(), json!(write_scheduler(&res.scheduler)?));
    if let Some(surface) = &res.surface {
        let pts: Vec<Value> = surface
            .iter()
            .map(|p| {
                let probs: Vec<Vec<String>> =
                    p.probabilities.iter().map(|v| v.iter().map(fmt_rational).collect()).collect();
                json!({ "probabilities": probs, "value": fmt_rational(&p.value) })
            })
            .collect();
        r.insert("surface".into(), Value::Array(pts));
    }
    ctx.say(format!("best value {} over {} grid points", res.value, res.points));
    Ok(Value::Object(r))
}

fn seed(flag: Option<u64>) -> Result<(u64, &'static str), Failure> {
    if let Some(s) = flag {
        return Ok((s, "flag"));
    }
    match std::env::var("RISKMDP_SEED") {
        Ok(v) => v
            .trim()
            .parse::<u64>()
            .map(|s| (s, "env"))
            .map_err(|_| Failure::usage(format!("RISKMDP_SEED must be a natural number, got `{v}`"))),
        Err(_) => Ok((0, "default")),
    }
}

fn simulate_cmd(a: &SimulateArgs, ctx: &mut Ctx) -> Outcome {
    let m = load(&a.model, ctx)?;
    let sched = load_scheduler(a.scheduler.as_deref())?;
    let (seed, source) = seed(a.seed)?;
    let cfg =
        SimConfig { samples: a.samples, seed, max_steps: a.max_steps, retries: a.retries, parallel: ctx.parallel };
    let rep = ctx.phase("simulate", || simulate(&m, &sched, &cfg))?;
    let mut r = Map::new();
    r.insert("samples".into(), json!(rep.samples));
    r.insert("seed".into(), json!(seed));
    r.insert("seed_source".into(), json!(source));
    r.insert("mean".into(), json!(rep.mean));
    r.insert("mad".into(), json!(rep.mad));
    r.insert("smad".into(), json!(rep.smad));
    r.insert("sv".into(), json!(rep.sv));
    r.insert("variance".into(), json!(rep.variance));
    r.insert(
        "standard_errors".into(),
        json!({
            "mean": rep.se_mean, "mad": rep.se_mad, "smad": rep.se_smad, "sv": rep.se_sv, "variance": rep.se_variance,
        }),
    );
    r.insert("resampled".into(), json!(rep.resampled));
    r.insert("distinct_values".into(), json!(rep.histogram.len()));
    if a.histogram {
        let h: Vec<Value> = rep.histogram.iter().map(|(v, c)| json!([fmt_rational(v), c])).collect();
        r.insert("histogram".into(), Value::Array(h));
    }
    ctx.say(format!(
        "n = {}  seed = {}  mean = {:.6} ± {:.6}  MAD = {:.6} ± {:.6}",
        rep.samples, seed, rep.mean, rep.se_mean, rep.mad, rep.se_mad
    ));
    if let Ok(exact) = ctx.phase("exact", || distribution_of(&m, &sched)) {
        let e = deviation_report(&exact)?;
        let mut x = Map::new();
        ctx.measures(&mut x, &e);
        x.insert("total_variation".into(), json!(total_variation(&rep, &exact)));
        r.insert("exact".into(), Value::Object(x));
        ctx.say(format!("exact E = {}  MAD = {}", e.expectation, e.mad));
    }
    Ok(Value::Object(r))
}

fn branch(b: &Branch, ctx: &Ctx) -> Value {
    let mut o = Map::new();
    match b {
        Branch::Half { trap_reward } => {
            o.insert("kind".into(), json!("half"));
            ctx.put(&mut o, "trap_reward", trap_reward);
        }
        Branch::Scaled { split } => {
            o.insert("kind".into(), json!("scaled"));
            ctx.put(&mut o, "split", split);
        }
    }
    Value::Object(o)
}

fn reduce(a: &ReduceArgs, ctx: &mut Ctx) -> Outcome {
    let text = read(&a.chain)?;
    let c = match parse_model(&text)? {
        ParsedModel::Chain(c) => c,
        ParsedModel::Mdp(m) => Chain::from_mdp(m)?,
    };
    ctx.hash(c.as_mdp());
    let exact = exact_distribution(&c).map_err(|e| match e {
        MeasureError::Cyclic => Failure::new(MODEL, "cyclic", "reductions need an acyclic chain"),
        e => e.into(),
    })?;
    let need_t = || a.t.ok_or_else(|| Failure::usage("--t is required for this method"));
    let mut r = Map::new();
    match a.method {
        Method::Mad => {
            let t = need_t()?;
            let rec = ctx.phase("recover", || recover_tail_probability_mad(&c, t))?;
            let direct = exact.probability_above(&int(t as i64));
            r.insert("method".into(), json!("mad"));
            r.insert("t".into(), json!(t));
            ctx.put(&mut r, "probability", &rec.probability);
            ctx.put(&mut r, "exact_probability", &direct);
            r.insert("agrees".into(), json!(rec.probability == direct));
            ctx.put(&mut r, "E", &rec.gadget.e);
            r.insert("L".into(), json!(rec.gadget.l.to_string()));
            r.insert("K".into(), json!(rec.gadget.k));
            ctx.put(&mut r, "mad1", &rec.mad1);
            ctx.put(&mut r, "mad2", &rec.mad2);
            ctx.put(&mut r, "deviation1", &rec.deviation1);
            ctx.put(&mut r, "deviation2", &rec.deviation2);
            r.insert("branch1".into(), branch(&rec.gadget.branch1, ctx));
            r.insert("branch2".into(), branch(&rec.gadget.branch2, ctx));
            if a.gadgets {
                r.insert("m1".into(), json!(serialize_chain(&rec.gadget.m1)));
                r.insert("m2".into(), json!(serialize_chain(&rec.gadget.m2)));
            }
            ctx.say(format!("Pr(rew > {t}) = {} (direct {})", rec.probability, direct));
        }
        Method::Crinkle => {
            let t = need_t()?;
            let rec = ctx.phase("recover", || recover_tail_probability_crinkle(&c, t))?;
            let direct = exact.probability_at_least(&int(t as i64));
            r.insert("method".into(), json!("crinkle"));
            r.insert("t".into(), json!(t));
            ctx.put(&mut r, "probability", &rec.probability);
            ctx.put(&mut r, "exact_probability", &direct);
            r.insert("agrees".into(), json!(rec.probability == direct));
            ctx.put(&mut r, "upper", &rec.upper);
            ctx.put(&mut r, "lower", &rec.lower);
            ctx.say(format!("Pr(rew >= {t}) = {} (direct {})", rec.probability, direct));
        }
        Method::Search => {
            let mad = deviation_report(&exact)?.mad;
            let trace = ctx.phase("search", || binary_search_mad(&c, |theta: &Rational| mad >= *theta))?;
            r.insert("method".into(), json!("search"));
            ctx.put(&mut r, "mad", &trace.mad);
            ctx.put(&mut r, "exact_mad", &mad);
            r.insert("agrees".into(), json!(trace.mad == mad));
            let calls: Vec<Value> = trace.calls.iter().map(|(th, ans)| json!([fmt_rational(th), ans])).collect();
            r.insert("call_count".into(), json!(calls.len()));
            r.insert("call_bound".into(), json!(trace.call_bound));
            r.insert("calls".into(), Value::Array(calls));
            r.insert("L".into(), json!(trace.l.to_string()));
            r.insert("K".into(), json!(trace.k));
            ctx.say(format!(
                "MAD = {} after {} oracle calls (bound {})",
                trace.mad,
                trace.calls.len(),
                trace.call_bound
            ));
        }
    }
    Ok(Value::Object(r))
}
