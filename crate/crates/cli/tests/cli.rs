//! End-to-end runs of the `riskmdp` binary.

use serde_json::Value;
use std::path::PathBuf;
use std::process::{Command, Output};

fn model(name: &str) -> String {
    let root = PathBuf::from(env!("CARGO_MANIFEST_DIR"));
    let p =
        if name.starts_with("data/") { root.join("tests").join(name) } else { root.join("../../models").join(name) };
    p.to_str().unwrap().to_string()
}

fn riskmdp(args: &[&str]) -> Output {
    riskmdp_env(args, &[])
}

fn riskmdp_env(args: &[&str], env: &[(&str, &str)]) -> Output {
    let mut c = Command::new(env!("CARGO_BIN_EXE_riskmdp"));
    c.args(args).env_remove("RISKMDP_SEED");
    for (k, v) in env {
        c.env(k, v);
    }
    c.output().expect("binary runs")
}

fn report(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).unwrap_or_else(|e| panic!("{e}: {}", String::from_utf8_lossy(&out.stdout)))
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

#[test]
fn tbpe_value_and_scheduler_file() {
    let dir = tempfile::tempdir().unwrap();
    let sched = dir.path().join("tbpe.sched");
    let m = model("two_branch.mdp");
    let out = riskmdp(&[
        "solve-tbpe",
        "--model",
        &m,
        "--penalty",
        "tbp",
        "--lambda",
        "1",
        "--threshold",
        "1",
        "--scheduler-out",
        sched.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0);
    let r = report(&out);
    assert_eq!(r["result"]["value"], "5/4");
    assert_eq!(r["exit_code"], 0);
    let text = std::fs::read_to_string(&sched).unwrap();
    assert_eq!(text, r["result"]["scheduler"].as_str().unwrap());
    let eval = riskmdp(&[
        "eval-scheduler",
        "--model",
        &m,
        "--scheduler",
        sched.to_str().unwrap(),
        "--lambda",
        "1",
        "--threshold",
        "1",
    ]);
    assert_eq!(report(&eval)["result"]["objectives"]["tbpe"], "5/4");
}

#[test]
fn madpe_above_half_is_refused() {
    let out = riskmdp(&["solve-madpe", "--model", &model("two_branch.mdp"), "--lambda", "3/5"]);
    assert_eq!(code(&out), 3);
    let r = report(&out);
    assert_eq!(r["exit_code"], 3);
    assert_eq!(r["error"]["diagnostic"], "ERMin");
    assert!(r["error"]["message"].as_str().unwrap().contains("ERMin"));
    assert!(r.get("result").is_none());
}

#[test]
fn beta_chain_measures() {
    let out = riskmdp(&["measures", "--chain", &model("beta_chain.mc")]);
    assert_eq!(code(&out), 0);
    let r = &report(&out)["result"];
    assert_eq!(r["E"], "5/4");
    assert_eq!(r["MAD"], "3/8");
    assert_eq!(r["SMAD"], "3/16");
    assert_eq!(r["V"], "3/16");
    assert_eq!(r["SV"], "3/64");
    assert_eq!(r["mode"], "exact");
}

#[test]
fn decimals_sit_next_to_exact_values() {
    let out = riskmdp(&["--decimals", "3", "measures", "--chain", &model("beta_chain.mc")]);
    let r = &report(&out)["result"];
    assert_eq!(r["MAD"], "3/8");
    assert_eq!(r["MAD_decimal"], "0.375");
    assert_eq!(r["E_decimal"], "1.250");
    let plain = riskmdp(&["measures", "--chain", &model("beta_chain.mc")]);
    assert!(report(&plain)["result"].get("MAD_decimal").is_none());
}

#[test]
fn madpe_sweep_brackets_the_grid_optimum() {
    let m = model("two_branch.mdp");
    let sweep = report(&riskmdp(&["solve-madpe", "--model", &m, "--lambda", "2/5"]));
    let grid = report(&riskmdp(&[
        "oracle",
        "grid",
        "--model",
        &m,
        "--objective",
        "madpe",
        "--lambda",
        "2/5",
        "--class",
        "reward-based",
        "--resolution",
        "20",
    ]));
    assert_eq!(sweep["result"]["value"], "11/10");
    assert_eq!(grid["result"]["value"], "11/10");
}

#[test]
fn reruns_are_byte_identical() {
    let m = model("two_branch.mdp");
    let s = model("safe_or_gamble.mdp");
    let c = model("beta_chain.mc");
    let runs: Vec<Vec<&str>> = vec![
        vec!["solve-madpe", "--model", &m, "--lambda", "1/4"],
        vec!["oracle", "grid", "--model", &s, "--objective", "svpe", "--lambda", "1/100", "--resolution", "200"],
        vec!["oracle", "simulate", "--model", &c, "--samples", "20000", "--seed", "3", "--histogram"],
        vec!["export-qp", "--model", &m, "--lambda", "1/3"],
        vec!["reduce", "--chain", &c, "--method", "search"],
    ];
    for args in runs {
        let a = riskmdp(&args);
        let b = riskmdp(&args);
        assert_eq!(code(&a), 0, "{args:?}");
        assert_eq!(a.stdout, b.stdout, "{args:?}");
        let mut seq = vec!["--jobs", "1"];
        seq.extend(&args);
        let c = riskmdp(&seq);
        assert_eq!(report(&a)["result"], report(&c)["result"], "{args:?}");
    }
}

#[test]
fn seed_defaults_to_environment() {
    let m = model("beta_chain.mc");
    let env = riskmdp_env(&["oracle", "simulate", "--model", &m, "--samples", "5000"], &[("RISKMDP_SEED", "9")]);
    let flag = riskmdp(&["oracle", "simulate", "--model", &m, "--samples", "5000", "--seed", "9"]);
    let other = riskmdp(&["oracle", "simulate", "--model", &m, "--samples", "5000"]);
    let (e, f, o) = (report(&env), report(&flag), report(&other));
    assert_eq!(e["result"]["seed_source"], "env");
    assert_eq!(o["result"]["seed_source"], "default");
    assert_eq!(e["result"]["seed"], 9);
    assert_eq!(e["result"]["mean"], f["result"]["mean"]);
    assert_eq!(e["result"]["mad"], f["result"]["mad"]);
    assert_ne!(e["result"]["mean"], o["result"]["mean"]);
    let bad = riskmdp_env(&["oracle", "simulate", "--model", &m], &[("RISKMDP_SEED", "x")]);
    assert_eq!(code(&bad), 1);
}

#[test]
fn exit_codes() {
    assert_eq!(code(&riskmdp(&["no-such-command"])), 1);
    assert_eq!(code(&riskmdp(&["measures", "--chain"])), 1);
    assert_eq!(code(&riskmdp(&["--help"])), 0);
    assert_eq!(code(&riskmdp(&["--version"])), 0);

    let missing = riskmdp(&["expmax", "--model", "/nonexistent/m.mdp"]);
    assert_eq!(code(&missing), 2);
    assert_eq!(report(&missing)["error"]["category"], "io");

    let broken = riskmdp(&["expmax", "--model", &model("data/broken.mdp")]);
    assert_eq!(code(&broken), 2);
    assert_eq!(report(&broken)["error"]["category"], "probability_sum");

    let invalid = riskmdp(&["validate", "--model", &model("data/broken.mdp")]);
    assert_eq!(code(&invalid), 2);
    let r = report(&invalid);
    assert_eq!(r["result"]["valid"], false);
    assert_eq!(r["result"]["issues"][0]["kind"], "probability_sum");

    let infinite = riskmdp(&["expmax", "--model", &model("data/positive_loop.mdp")]);
    assert_eq!(code(&infinite), 3);
    assert_eq!(report(&infinite)["error"]["category"], "infinite_expectation");

    let cyclic = riskmdp(&[
        "oracle",
        "grid",
        "--model",
        &model("geometric_loop.mdp"),
        "--objective",
        "madpe",
        "--lambda",
        "1/2",
    ]);
    assert_eq!(code(&cyclic), 3);

    let budget = riskmdp(&[
        "oracle",
        "grid",
        "--model",
        &model("two_branch.mdp"),
        "--objective",
        "vpe",
        "--lambda",
        "1",
        "--resolution",
        "100",
        "--budget",
        "10",
    ]);
    assert_eq!(code(&budget), 4);
    assert_eq!(report(&budget)["error"]["category"], "grid_budget");

    let steps =
        riskmdp(&["oracle", "simulate", "--model", &model("beta_chain.mc"), "--max-steps", "1", "--samples", "5"]);
    assert_eq!(code(&steps), 4);
}

#[test]
fn timings_and_summary_are_opt_in() {
    let m = model("beta_chain.mc");
    let plain = riskmdp(&["measures", "--chain", &m]);
    assert!(report(&plain).get("timings_ms").is_none());
    assert!(String::from_utf8_lossy(&plain.stderr).contains("MAD = 3/8"));
    let timed = riskmdp(&["--timings", "measures", "--chain", &m]);
    assert!(report(&timed)["timings_ms"]["parse"].is_number());
    let quiet = riskmdp(&["--quiet", "measures", "--chain", &m]);
    assert!(quiet.stderr.is_empty());
    let text = riskmdp(&["--format", "text", "measures", "--chain", &m]);
    assert!(String::from_utf8_lossy(&text.stdout).starts_with("E = 5/4"));
}

#[test]
fn reductions_agree_with_direct_computation() {
    let c = model("beta_chain.mc");
    for t in 0..=3 {
        let ts = t.to_string();
        let mad = report(&riskmdp(&["reduce", "--chain", &c, "--t", &ts, "--method", "mad", "--gadgets"]));
        assert_eq!(mad["result"]["agrees"], true, "t={t}");
        assert!(mad["result"]["m1"].as_str().unwrap().starts_with("chain"));
        if t >= 1 {
            let cr = report(&riskmdp(&["reduce", "--chain", &c, "--t", &ts, "--method", "crinkle"]));
            assert_eq!(cr["result"]["agrees"], true, "t={t}");
        }
    }
    let s = report(&riskmdp(&["reduce", "--chain", &c, "--method", "search"]));
    assert_eq!(s["result"]["mad"], "3/8");
    assert!(s["result"]["call_count"].as_u64().unwrap() <= s["result"]["call_bound"].as_u64().unwrap());
}

#[test]
fn written_files_read_back() {
    let dir = tempfile::tempdir().unwrap();
    let norm = dir.path().join("n.mdp");
    let qp = dir.path().join("m.qp");
    let out = riskmdp(&["normalize", "--model", &model("geometric_loop.mdp"), "--out", norm.to_str().unwrap()]);
    assert_eq!(code(&out), 0);
    let m = riskmdp::model::parse_model(&std::fs::read_to_string(&norm).unwrap()).unwrap().into_mdp();
    assert_eq!(riskmdp::model::model_hash(&m), report(&out)["result"]["normalized_hash"].as_str().unwrap());
    let out =
        riskmdp(&["export-qp", "--model", &model("two_branch.mdp"), "--lambda", "2/5", "--out", qp.to_str().unwrap()]);
    assert_eq!(code(&out), 0);
    let q = riskmdp::madpe::parse_qp(&std::fs::read_to_string(&qp).unwrap()).unwrap();
    assert_eq!(q.document.problem.variables.len() as u64, report(&out)["result"]["variables"].as_u64().unwrap());
    assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 2);
}

#[test]
fn expectation_extremes_and_bounds_mode() {
    let e = report(&riskmdp(&["expmax", "--model", &model("two_branch.mdp")]));
    assert_eq!(e["result"]["value"], "5/4");
    let e = report(&riskmdp(&["expmax", "--model", &model("two_branch.mdp"), "--min"]));
    assert_eq!(e["result"]["value"], "3/4");
    let dir = tempfile::tempdir().unwrap();
    let s = dir.path().join("alpha.sched");
    std::fs::write(&s, "state s_dec: alpha=1\n").unwrap();
    let r =
        report(&riskmdp(&["measures", "--model", &model("geometric_loop.mdp"), "--scheduler", s.to_str().unwrap()]));
    assert_eq!(r["result"]["mode"], "bounds");
    let q = |x: &Value| riskmdp::rational::to_f64(&riskmdp::rational::parse_rational(x.as_str().unwrap()).unwrap());
    for end in ["lo", "hi"] {
        assert!((q(&r["result"]["MAD"][end]) - 1.125).abs() <= 1e-9);
        assert!((q(&r["result"]["E"][end]) - 0.75).abs() <= 1e-9);
    }
}
