//! Acceptance checks. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any fails.

use num_traits::{Signed, ToPrimitive, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use riskmdp::expect::{max_expected_reward, min_expected_reward, value_iteration, Direction};
use riskmdp::fixtures::{
    beta_chain, geometric_loop, ladder, mix, random_acyclic_chain, random_acyclic_mdp, random_distribution,
    random_memoryless, random_reward_based, safe_or_gamble, split_loop, two_branch, RandomMdpConfig,
};
use riskmdp::lp::{solve_lp, LpProblem, LpStatus, Relation};
use riskmdp::madpe::{
    build_frequency_constraints, frequencies_of, madpe_in_unfolding, solve_madpe_sweep, switch_to_terminal, unfold,
    SweepConfig,
};
use riskmdp::measures::{
    deviation_bounds, deviation_report, distribution_of, exact_distribution, penalized, penalized_bounds,
    truncated_distribution_of, PenaltyKind, PenaltySpec, Truncation,
};
use riskmdp::model::{Chain, Mdp, RewardDistribution, Scheduler};
use riskmdp::oracle::{
    deterministic_optimum, enumerate_paths, grid_search, simulate, GridSpec, PathBudget, SchedulerClass, SimConfig,
};
use riskmdp::preprocess::normalize;
use riskmdp::rational::{int, one, ratio, to_f64, Rational};
use riskmdp::reductions::{binary_search_mad, recover_tail_probability_crinkle, recover_tail_probability_mad, Branch};
use riskmdp::tbpe::{build_unfolding_t, solve_tbpe, PenaltyFunction};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::Instant;

type Outcome = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if !$cond {
            return Err(format!($($fmt)+));
        }
    };
}

fn madpe(lambda: &Rational) -> PenaltySpec {
    PenaltySpec::new(PenaltyKind::Madpe, lambda.clone())
}

fn value(m: &Mdp, s: &Scheduler, spec: &PenaltySpec) -> Rational {
    penalized(&distribution_of(m, s).expect("acyclic"), spec).expect("exact")
}

/// Random acyclic MDPs with at most `max_states` states.
fn random_models(seed: u64, count: usize, max_states: usize, max_decisions: usize) -> Vec<Mdp> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let cfg = RandomMdpConfig {
                states: rng.gen_range(4..=max_states),
                max_actions: 2,
                max_successors: 2,
                max_reward: 3,
                denominator: 4,
                max_decision_states: max_decisions,
            };
            random_acyclic_mdp(&mut rng, &cfg)
        })
        .collect()
}

fn tail_at_least(d: &RewardDistribution, t: u64) -> Rational {
    d.probability_at_least(&int(t as i64))
}

fn example_golden() -> Outcome {
    let m = two_branch();
    let cases = [
        (one(), ratio(3, 4), ratio(3, 8), None),
        (ratio(1, 2), one(), ratio(1, 4), Some(int(0))),
        (Rational::zero(), ratio(5, 4), ratio(3, 8), Some(ratio(-1, 4))),
    ];
    for (p, e, mad, madpe4) in cases {
        let s: Scheduler = mix("s_init", &p).into();
        let r = deviation_report(&distribution_of(&m, &s).unwrap()).unwrap();
        ensure!(r.expectation == e && r.mad == mad, "p_alpha={p}: E={} MAD={}", r.expectation, r.mad);
        if let Some(v) = madpe4 {
            let got = value(&m, &s, &madpe(&int(4)));
            ensure!(got == v, "p_alpha={p}: MADPE[4]={got}");
        }
    }
    Ok("E, MAD and MADPE[4] of alpha, S_1/2, beta exact".into())
}

fn loop_closed_form() -> Outcome {
    let p = ratio(1, 4);
    let m = geometric_loop(&p);
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let cfg = Truncation::new(Rational::new(1.into(), num_bigint::BigInt::from(1u64 << 40)));
    let mut widest = Rational::zero();
    for i in 0..20 {
        let s: Scheduler = if i % 2 == 0 {
            random_memoryless(&mut rng, &m, 8).into()
        } else {
            random_reward_based(&mut rng, &m, 6, 8).into()
        };
        let d = truncated_distribution_of(&m, &s, &cfg).map_err(|e| e.to_string())?;
        let b = deviation_bounds(&d, &one());
        let factor = (one() - &p) * int(2);
        let predicted =
            riskmdp::measures::Interval { lo: &b.expectation.lo * &factor, hi: &b.expectation.hi * &factor };
        ensure!(b.mad.overlaps(&predicted), "scheduler {i}: MAD {:?} vs 2(1-p)E {:?}", b.mad, predicted);
        widest = widest.max(&b.mad.hi - &b.mad.lo);
    }
    Ok(format!("20 schedulers, widest MAD interval {:.3e}", to_f64(&widest)))
}

fn svpe_interior() -> Outcome {
    let m = safe_or_gamble();
    let lambda = ratio(1, 100);
    let mut spec = GridSpec::new(1000, SchedulerClass::Memoryless, PenaltySpec::new(PenaltyKind::Svpe, lambda.clone()));
    spec.keep_surface = true;
    let r = grid_search(&m, &spec).map_err(|e| e.to_string())?;
    let p_star = r.best.probabilities[0][0].clone();
    ensure!((to_f64(&p_star) - 0.206).abs() <= 2.0 / 1000.0, "p* = {p_star}");
    let surface = r.surface.unwrap();
    for point in &surface {
        let p = &point.probabilities[0][0];
        let cubic = int(40) + p * int(2) - p * p * int(5) + p * p * p / int(2);
        ensure!(point.value == cubic, "surface at {p}: {} != cubic {cubic}", point.value);
        let direct = value(&m, &mix("s_init", p).into(), &spec.objective);
        ensure!(direct == cubic, "penalized at {p}: {direct} != cubic {cubic}");
    }
    for lambda in [ratio(1, 100), ratio(1, 10), one()] {
        let spec = GridSpec::new(1000, SchedulerClass::Memoryless, PenaltySpec::new(PenaltyKind::Vpe, lambda.clone()));
        let p = grid_search(&m, &spec).map_err(|e| e.to_string())?.best.probabilities[0][0].clone();
        ensure!(p.is_zero() || p == one(), "vpe lambda={lambda}: interior optimum {p}");
    }
    Ok(format!("p* = {p_star}, {} points match the cubic", surface.len()))
}

fn smad_halving() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for i in 0..1000 {
        let n = rng.gen_range(1..=8);
        let denom = rng.gen_range(n as u32..=60);
        let probs = random_distribution(&mut rng, n, denom);
        let atoms: Vec<(Rational, Rational)> =
            probs.into_iter().map(|p| (ratio(rng.gen_range(-50..=50), rng.gen_range(1..=12)), p)).collect();
        let d = RewardDistribution::from_atoms(atoms).map_err(|e| e.to_string())?;
        let r = deviation_report(&d).unwrap();
        ensure!(r.smad * int(2) == r.mad, "distribution {i}");
    }
    Ok("1000 distributions".into())
}

fn improvement() -> Outcome {
    let mut models = vec![two_branch(), safe_or_gamble()];
    models.extend(random_models(5, 5, 12, usize::MAX));
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut checks = 0;
    for (i, m) in models.iter().enumerate() {
        let n = unfold(m).map_err(|e| e.to_string())?;
        for lambda in [ratio(1, 10), ratio(1, 4), ratio(1, 2)] {
            let spec = madpe(&lambda);
            for _ in 0..100 {
                let s: Scheduler = random_reward_based(&mut rng, m, n.k + 2, 6).into();
                let switched: Scheduler =
                    switch_to_terminal(m, &s, n.k, &n.terminal).map_err(|e| e.to_string())?.into();
                let (before, after) = (value(m, &s, &spec), value(m, &switched, &spec));
                ensure!(after >= before, "model {i}, lambda {lambda}: {after} < {before}");
                checks += 1;
            }
        }
    }
    // Above 1/2 switching to the expectation-maximal continuation can hurt.
    let lambda = ratio(3, 5);
    let eps = Rational::new(1.into(), num_bigint::BigInt::from(1u64 << 40));
    let mut witness = None;
    for q in [ratio(1, 2), ratio(1, 4), ratio(1, 8), ratio(1, 10), ratio(1, 16)] {
        let m = geometric_loop(&q);
        let n = unfold(&m).map_err(|e| e.to_string())?;
        let s: Scheduler = mix("s_dec", &Rational::zero()).into();
        let switched: Scheduler = switch_to_terminal(&m, &s, n.k, &n.terminal).map_err(|e| e.to_string())?.into();
        let bound = |s: &Scheduler| {
            let d = truncated_distribution_of(&m, s, &Truncation::new(eps.clone())).expect("truncation");
            penalized_bounds(&d, &madpe(&lambda), &one()).expect("bounds")
        };
        let (before, after) = (bound(&s), bound(&switched));
        if after.hi < before.lo {
            witness = Some(format!("p={q}: beta {:.6} > switched {:.6}", to_f64(&before.lo), to_f64(&after.hi)));
            break;
        }
    }
    let witness = witness.ok_or("no violation witness at lambda = 3/5")?;
    Ok(format!("{checks} comparisons; lambda=3/5 witness {witness}"))
}

fn unfolding_equivalence() -> Outcome {
    let mut models = vec![two_branch(), safe_or_gamble()];
    models.extend(random_models(6, 5, 10, usize::MAX));
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let lambda = ratio(2, 5);
    for (i, m) in models.iter().enumerate() {
        let n = unfold(m).map_err(|e| e.to_string())?;
        for j in 0..50 {
            let s = random_reward_based(&mut rng, m, n.k, 6);
            let s: Scheduler = switch_to_terminal(m, &s.into(), n.k, &n.terminal).map_err(|e| e.to_string())?.into();
            let direct = value(m, &s, &madpe(&lambda));
            let unfolded = madpe_in_unfolding(&n, &s, &lambda).map_err(|e| e.to_string())?;
            ensure!(direct == unfolded, "model {i}, scheduler {j}: {direct} vs {unfolded}");
        }
    }
    Ok(format!("{} acyclic models x 50 schedulers", models.len()))
}

fn decision_pairs(m: &Mdp, bound: u64) -> usize {
    let mut seen = std::collections::BTreeSet::from([(m.initial(), 0u64)]);
    let mut stack = vec![(m.initial(), 0u64)];
    while let Some((s, w)) = stack.pop() {
        for ch in m.choices(s) {
            let next = w + ch.reward.to_integer().to_u64().unwrap();
            if next > bound {
                continue;
            }
            for (t, _) in &ch.successors {
                if seen.insert((*t, next)) {
                    stack.push((*t, next));
                }
            }
        }
    }
    seen.iter().filter(|(s, _)| m.choices(*s).len() > 1).count()
}

fn madpe_vs_oracle() -> Outcome {
    let lambda = ratio(2, 5);
    let mut models = vec![two_branch()];
    let mut rng_seed = 700;
    while models.len() < 6 {
        rng_seed += 1;
        let m = random_models(rng_seed, 1, 7, 3).pop().unwrap();
        let n = unfold(&m).map_err(|e| e.to_string())?;
        let pairs = decision_pairs(&m, n.k - 1);
        if (1..=3).contains(&pairs) {
            models.push(m);
        }
    }
    let mut lines = Vec::new();
    for (i, m) in models.iter().enumerate() {
        let nm = normalize(m).map_err(|e| e.to_string())?;
        let sol = solve_madpe_sweep(&nm, &lambda, &SweepConfig::default()).map_err(|e| e.to_string())?;
        let n = unfold(m).map_err(|e| e.to_string())?;
        let spec = GridSpec::new(200, SchedulerClass::RewardBased { bound: n.k - 1 }, madpe(&lambda));
        let grid = grid_search(m, &spec).map_err(|e| e.to_string())?;
        ensure!(sol.value >= grid.value, "model {i}: sweep {} < grid {}", sol.value, grid.value);
        ensure!(
            sol.value <= &grid.value + &sol.gap_bound,
            "model {i}: sweep {} > grid {} + gap {}",
            sol.value,
            grid.value,
            sol.gap_bound
        );
        // Reconstruction: the extracted scheduler realizes the value and the frequencies.
        let sched: Scheduler = sol.scheduler.clone().into();
        let realized = value(m, &sched, &madpe(&lambda));
        ensure!(realized == sol.value, "model {i}: scheduler realizes {realized}, sweep reports {}", sol.value);
        let f = build_frequency_constraints(&n);
        let x = frequencies_of(&n, &sched).map_err(|e| e.to_string())?;
        for (name, v) in &sol.frequencies {
            let j = f.problem.variable_index(name).ok_or(format!("unknown variable {name}"))?;
            ensure!(x[j] == *v, "model {i}: frequency {name} = {} but LP reported {v}", x[j]);
        }
        if i == 0 {
            ensure!((&sol.value - ratio(11, 10)).abs() <= sol.gap_bound, "two_branch value {}", sol.value);
        }
        lines.push(format!("{}<={}", grid.value, sol.value));
    }
    Ok(lines.join(", "))
}

fn tbpe_exactness() -> Outcome {
    let mut cases: Vec<(Mdp, Rational, Rational)> = vec![
        (two_branch(), one(), one()),
        (two_branch(), ratio(1, 2), ratio(3, 2)),
        (safe_or_gamble(), one(), int(30)),
        (safe_or_gamble(), int(2), int(60)),
    ];
    for (i, m) in random_models(8, 8, 7, usize::MAX).into_iter().enumerate() {
        cases.push((m, ratio(1 + i as i64, 2), int(1 + i as i64 % 5)));
    }
    for (i, (m, lambda, t)) in cases.iter().enumerate() {
        let pen = PenaltyFunction::tbp(lambda.clone(), t.clone()).map_err(|e| e.to_string())?;
        let solved = solve_tbpe(m, &pen).map_err(|e| e.to_string())?.value;
        let enumerated =
            deterministic_optimum(m, &PenaltySpec::tbpe(lambda.clone(), t.clone())).map_err(|e| e.to_string())?;
        ensure!(solved == enumerated.value, "case {i}: solver {solved} vs enumeration {}", enumerated.value);
        let zero = solve_tbpe(m, &PenaltyFunction::tbp(lambda.clone(), int(0)).unwrap()).unwrap().value;
        let emax = max_expected_reward(m).unwrap().values[m.initial()].clone();
        ensure!(zero == emax, "case {i}: t = 0 gives {zero}, E^max {emax}");
    }
    let v = solve_tbpe(&two_branch(), &PenaltyFunction::tbp(one(), one()).unwrap()).unwrap().value;
    ensure!(v == ratio(5, 4), "two_branch: {v}");
    let v = solve_tbpe(&safe_or_gamble(), &PenaltyFunction::tbp(one(), int(30)).unwrap()).unwrap().value;
    ensure!(v == int(40), "safe_or_gamble: {v}");
    Ok(format!("{} cases match enumeration", cases.len()))
}

fn test_chains(seed: u64, count: usize) -> Vec<Chain> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = vec![
        beta_chain(),
        Chain::from_atoms(&[(int(0), one())]).unwrap(),
        Chain::from_atoms(&[(int(5), one())]).unwrap(),
        Chain::from_atoms(&[(int(0), ratio(1, 2)), (int(2), ratio(1, 2))]).unwrap(),
    ];
    for _ in 0..count {
        let states = rng.gen_range(3..=8);
        out.push(random_acyclic_chain(&mut rng, states, 4, 6));
    }
    out
}

fn max_reward(d: &RewardDistribution) -> u64 {
    d.atoms().keys().next_back().map_or(0, |v| v.to_integer().to_u64().unwrap())
}

fn crinkle_identity() -> Outcome {
    let mut checks = 0;
    for (i, c) in test_chains(9, 20).iter().enumerate() {
        let d = exact_distribution(c).unwrap();
        for t in 1..=max_reward(&d) + 1 {
            let r = recover_tail_probability_crinkle(c, t).map_err(|e| e.to_string())?;
            ensure!(r.probability == tail_at_least(&d, t), "chain {i}, t={t}: {}", r.probability);
            checks += 1;
        }
    }
    Ok(format!("{checks} thresholds"))
}

fn gadget_recovery() -> Outcome {
    let (mut half, mut scaled, mut checks, mut calls) = (0, 0, 0, 0);
    for (i, c) in test_chains(10, 20).iter().enumerate() {
        let d = exact_distribution(c).unwrap();
        for t in 0..=max_reward(&d) + 1 {
            let r = recover_tail_probability_mad(c, t).map_err(|e| e.to_string())?;
            ensure!(r.probability == d.probability_above(&int(t as i64)), "chain {i}, t={t}: {}", r.probability);
            match r.gadget.branch1 {
                Branch::Half { .. } => half += 1,
                Branch::Scaled { .. } => scaled += 1,
            }
            checks += 1;
        }
        let mad = deviation_report(&d).unwrap().mad;
        let trace = binary_search_mad(c, |theta| mad >= *theta).map_err(|e| e.to_string())?;
        ensure!(trace.mad == mad, "chain {i}: search found {} for MAD {mad}", trace.mad);
        ensure!(
            trace.calls.len() as u64 <= trace.call_bound,
            "chain {i}: {} calls > {}",
            trace.calls.len(),
            trace.call_bound
        );
        calls = calls.max(trace.calls.len());
    }
    ensure!(half > 0 && scaled > 0, "branches exercised: half {half}, scaled {scaled}");
    Ok(format!("{checks} thresholds (t>=E {half}, t<E {scaled}); at most {calls} oracle calls"))
}

/// Largest objective over the vertices of `{x ≥ 0 : rows}` by brute force.
fn vertex_optimum(n: usize, rows: &[(Vec<Rational>, Relation, Rational)], c: &[Rational]) -> Option<Rational> {
    // Hyperplanes: every row, and x_j = 0.
    let mut planes: Vec<(Vec<Rational>, Rational)> = rows.iter().map(|(a, _, b)| (a.clone(), b.clone())).collect();
    for j in 0..n {
        let mut a = vec![Rational::zero(); n];
        a[j] = one();
        planes.push((a, Rational::zero()));
    }
    let feasible = |x: &[Rational]| {
        x.iter().all(|v| !v.is_negative())
            && rows.iter().all(|(a, rel, b)| {
                let lhs: Rational = a.iter().zip(x).map(|(ai, xi)| ai * xi).sum();
                rel.holds(&lhs, b)
            })
    };
    let mut best: Option<Rational> = None;
    let mut pick = vec![0usize; n];
    fn combos(k: usize, start: usize, total: usize, pick: &mut Vec<usize>, f: &mut dyn FnMut(&[usize])) {
        if k == pick.len() {
            f(pick);
            return;
        }
        for i in start..total {
            pick[k] = i;
            combos(k + 1, i + 1, total, pick, f);
        }
    }
    combos(0, 0, planes.len(), &mut pick, &mut |idx| {
        let a: Vec<Vec<Rational>> = idx.iter().map(|&i| planes[i].0.clone()).collect();
        let b: Vec<Rational> = idx.iter().map(|&i| planes[i].1.clone()).collect();
        if let Some(x) = gauss(a, b) {
            if feasible(&x) {
                let v: Rational = c.iter().zip(&x).map(|(ci, xi)| ci * xi).sum();
                if best.as_ref().map_or(true, |b| v > *b) {
                    best = Some(v);
                }
            }
        }
    });
    best
}

/// Unique solution of a square system, if any.
fn gauss(mut a: Vec<Vec<Rational>>, mut b: Vec<Rational>) -> Option<Vec<Rational>> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n).find(|&r| !a[r][col].is_zero())?;
        a.swap(col, piv);
        b.swap(col, piv);
        for r in 0..n {
            if r != col && !a[r][col].is_zero() {
                let f = &a[r][col] / &a[col][col];
                for k in col..n {
                    let d = &f * &a[col][k];
                    a[r][k] -= d;
                }
                let d = &f * &b[col];
                b[r] -= d;
            }
        }
    }
    Some((0..n).map(|i| &b[i] / &a[i][i]).collect())
}

fn solver_cross_checks() -> Outcome {
    let mut models = vec![two_branch(), geometric_loop(&ratio(1, 4)), split_loop(3), safe_or_gamble(), ladder(6)];
    models.extend(random_models(11, 5, 12, usize::MAX));
    let mut worst = 0.0f64;
    for (i, m) in models.iter().enumerate() {
        for dir in [Direction::Max, Direction::Min] {
            let exact = match dir {
                Direction::Max => max_expected_reward(m),
                Direction::Min => min_expected_reward(m),
            }
            .map_err(|e| e.to_string())?;
            let float = value_iteration(m, dir, 1e-13, 1_000_000).map_err(|e| e.to_string())?;
            for s in 0..m.num_states() {
                let diff = (to_f64(&exact.values[s]) - float.values[s]).abs();
                ensure!(diff <= 1e-10, "model {i} {dir:?} state {s}: {diff:e}");
                worst = worst.max(diff);
            }
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let mut statuses = [0; 2];
    for k in 0..50 {
        let n = rng.gen_range(2..=3);
        let mut p = LpProblem::new();
        for j in 0..n {
            p.add_variable(format!("x{j}"));
        }
        let c: Vec<Rational> = (0..n).map(|_| int(rng.gen_range(-3..=5))).collect();
        p.objective = c.iter().cloned().enumerate().collect();
        let mut rows = Vec::new();
        for _ in 0..rng.gen_range(1..=4) {
            let a: Vec<Rational> = (0..n).map(|_| int(rng.gen_range(-2..=4))).collect();
            let rel = [Relation::Le, Relation::Le, Relation::Ge, Relation::Eq][rng.gen_range(0..4)];
            rows.push((a, rel, int(rng.gen_range(0..=8))));
        }
        rows.push((vec![one(); n], Relation::Le, int(10)));
        for (a, rel, b) in &rows {
            p.add_constraint(a.iter().cloned().enumerate().collect(), *rel, b.clone());
        }
        let sol = solve_lp(&p);
        match vertex_optimum(n, &rows, &c) {
            Some(v) => {
                ensure!(
                    sol.status == LpStatus::Optimal && sol.objective == v,
                    "lp {k}: simplex {:?} {} vs {v}",
                    sol.status,
                    sol.objective
                );
                statuses[0] += 1;
            }
            None => {
                ensure!(sol.status == LpStatus::Infeasible, "lp {k}: simplex {:?}, no feasible vertex", sol.status);
                statuses[1] += 1;
            }
        }
    }
    let mut pairs = 0;
    let mut acyclic = vec![two_branch(), safe_or_gamble()];
    acyclic.extend(random_models(13, 8, 10, usize::MAX));
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for (i, m) in acyclic.iter().enumerate() {
        for j in 0..10 {
            let s: Scheduler = if j % 2 == 0 {
                random_memoryless(&mut rng, m, 4).into()
            } else {
                random_reward_based(&mut rng, m, 4, 4).into()
            };
            let a = enumerate_paths(m, &s, PathBudget::default()).map_err(|e| e.to_string())?;
            let b = distribution_of(m, &s).map_err(|e| e.to_string())?;
            ensure!(a == b, "model {i}, scheduler {j}: enumeration differs");
            pairs += 1;
        }
    }
    Ok(format!(
        "{} models, max |PI - VI| {worst:.1e}; 50 LPs ({} optimal, {} infeasible); {pairs} path enumerations",
        models.len(),
        statuses[0],
        statuses[1]
    ))
}

fn monte_carlo() -> Outcome {
    let cases: [(&str, Mdp, Scheduler); 2] = [
        ("two_branch/beta", two_branch(), mix("s_init", &Rational::zero()).into()),
        ("safe_or_gamble/half", safe_or_gamble(), mix("s_init", &ratio(1, 2)).into()),
    ];
    let mut failures = Vec::new();
    let check = |m: &Mdp, s: &Scheduler, seed: u64| -> Result<bool, String> {
        let exact = deviation_report(&distribution_of(m, s).unwrap()).unwrap();
        let r = simulate(m, s, &SimConfig::new(1_000_000, seed)).map_err(|e| e.to_string())?;
        let e_ok = (r.mean - to_f64(&exact.expectation)).abs() <= 4.0 * r.se_mean;
        let mad_ok = (r.mad - to_f64(&exact.mad)).abs() <= 4.0 * r.se_mad.max(f64::MIN_POSITIVE);
        Ok(e_ok && mad_ok)
    };
    for (name, m, s) in &cases {
        for seed in 1..=5u64 {
            if !check(m, s, seed)? {
                failures.push((*name, m, s, seed));
            }
        }
    }
    ensure!(failures.len() <= 1, "{} seed failures", failures.len());
    if let Some((name, m, s, seed)) = failures.first() {
        ensure!(check(m, s, seed + 100)?, "{name}: seed {seed} and its rerun both failed");
        return Ok(format!("10 runs, 1 failure ({name} seed {seed}) passed on rerun"));
    }
    Ok("10 runs of 10^6 paths within 4 standard errors".into())
}

fn scaling() -> Outcome {
    let m = ladder(99);
    let pen = |t: i64| PenaltyFunction::tbp(ratio(1, 2), int(t)).unwrap();
    for t in [10, 20, 40] {
        let u = build_unfolding_t(&m, &pen(t)).map_err(|e| e.to_string())?;
        let expected = m.num_states() * (t as usize + 1) + 1;
        ensure!(u.mdp.num_states() == expected, "t={t}: {} states, expected {expected}", u.mdp.num_states());
    }
    let t = 1000;
    let start = Instant::now();
    let sol = solve_tbpe(&m, &pen(t)).map_err(|e| e.to_string())?;
    let secs = start.elapsed().as_secs_f64();
    ensure!(secs < 60.0, "took {secs:.1} s");
    Ok(format!("|S|={} t={t}: {} unfolded states solved in {secs:.2} s", m.num_states(), sol.unfolded_states))
}

fn main() {
    let criteria: Vec<(&str, fn() -> Outcome)> = vec![
        ("golden values on the two-action model", example_golden),
        ("loop model MAD closed form", loop_closed_form),
        ("semi-variance interior optimum", svpe_interior),
        ("SMAD halving", smad_halving),
        ("improvement by switching", improvement),
        ("unfolding equivalence", unfolding_equivalence),
        ("MADPE solver vs oracle", madpe_vs_oracle),
        ("TBPE exactness", tbpe_exactness),
        ("crinkle identity", crinkle_identity),
        ("MAD gadget recovery", gadget_recovery),
        ("solver cross-checks", solver_cross_checks),
        ("Monte Carlo consistency", monte_carlo),
        ("scaling smoke test", scaling),
    ];
    let filter: Option<String> = std::env::args().nth(1).filter(|a| !a.starts_with('-'));
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        if filter.as_ref().is_some_and(|f| !name.contains(f.as_str()) && *f != (i + 1).to_string()) {
            continue;
        }
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or(p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default())
        });
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS {:>2} {name}: {detail} ({secs:.1} s)", i + 1),
            Err(why) => {
                failed += 1;
                println!("FAIL {:>2} {name}: {why} ({secs:.1} s)", i + 1);
            }
        }
    }
    if failed > 0 {
        std::process::exit(1);
    }
}
