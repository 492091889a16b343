//! `riskmdp`: risk-averse optimization of total-reward MDPs from the command line.

mod commands;
mod report;

use clap::{Args, Parser, Subcommand, ValueEnum};
use report::{Ctx, Failure};
use riskmdp::rational::{parse_rational, Rational};
use serde_json::{json, Map, Value};
use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser, Debug)]
#[command(name = "riskmdp", version, about = "Risk-averse total-reward MDP optimization")]
pub struct Cli {
    /// Report format on standard output.
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    format: Format,
    /// Add `<key>_decimal` renderings with N fractional digits next to exact values.
    #[arg(long, global = true, value_name = "N")]
    decimals: Option<usize>,
    /// Suppress the summary on standard error.
    #[arg(long, global = true)]
    quiet: bool,
    /// Worker threads for parallel regions; 1 runs sequentially.
    #[arg(long, global = true, value_name = "N")]
    jobs: Option<usize>,
    /// Include per-phase wall times (makes output non-reproducible).
    #[arg(long, global = true)]
    timings: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Text,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Check a model file against every structural invariant.
    Validate(ModelArg),
    /// Merge traps into one goal and collapse zero-reward end components.
    Normalize(NormalizeArgs),
    /// Maximal (or minimal) expected total reward per state.
    Expmax(ExpmaxArgs),
    /// Expectation, variance, MAD, SMAD and semi-variance of a chain or scheduled model.
    Measures(MeasuresArgs),
    /// Exact TBPE (or crinkle/custom penalty) optimum via the reward-counter product.
    SolveTbpe(TbpeArgs),
    /// MADPE for lambda in (0, 1/2] by the pinned-expectation LP sweep.
    SolveMadpe(MadpeArgs),
    /// Write the MADPE quadratic program in LP-style text.
    ExportQp(ExportQpArgs),
    /// Brute-force and sampling cross-checks.
    Oracle {
        #[command(subcommand)]
        command: OracleCommand,
    },
    /// Tail probabilities recovered from deviation measures of a chain.
    Reduce(ReduceArgs),
    /// Reward law, measures and penalized objectives of a given scheduler.
    EvalScheduler(EvalArgs),
}

#[derive(Subcommand, Debug)]
pub enum OracleCommand {
    /// Exhaustive search over randomized schedulers with probabilities on a 1/G grid.
    Grid(GridArgs),
    /// Seeded Monte Carlo estimates under a scheduler.
    Simulate(SimulateArgs),
}

fn rational(s: &str) -> Result<Rational, String> {
    parse_rational(s).map_err(|e| e.to_string())
}

#[derive(Args, Debug)]
pub struct ModelArg {
    #[arg(long)]
    pub model: PathBuf,
}

#[derive(Args, Debug)]
pub struct NormalizeArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Also merge states whose maximal expected reward is 0 into the goal.
    #[arg(long)]
    pub collapse_zero_value: bool,
    /// Write the normalized model here instead of embedding it in the report.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct ExpmaxArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Minimize instead of maximize.
    #[arg(long)]
    pub min: bool,
    #[arg(long)]
    pub scheduler_out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct Distribution {
    /// A chain file.
    #[arg(long, conflicts_with_all = ["model", "scheduler"])]
    pub chain: Option<PathBuf>,
    /// A model file; needs `--scheduler` when it has decisions.
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long)]
    pub scheduler: Option<PathBuf>,
    /// Unabsorbed mass at which a cyclic model is cut (bounds mode).
    #[arg(long, value_parser = rational, default_value = "1/1099511627776")]
    pub epsilon: Rational,
    /// Offset above the largest enumerated reward for the upper tail completion.
    #[arg(long, value_parser = rational, default_value = "1")]
    pub period: Rational,
}

#[derive(Args, Debug)]
pub struct MeasuresArgs {
    #[command(flatten)]
    pub dist: Distribution,
    /// Include the reward law in the report.
    #[arg(long)]
    pub distribution: bool,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    #[command(flatten)]
    pub dist: Distribution,
    #[arg(long, value_parser = rational, default_value = "1/2")]
    pub lambda: Rational,
    /// Threshold for the TBPE objective.
    #[arg(long, value_parser = rational)]
    pub threshold: Option<Rational>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Penalty {
    Tbp,
    Crinkle2,
    Custom,
}

#[derive(Args, Debug)]
pub struct TbpeArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long, value_enum, default_value_t = Penalty::Tbp)]
    pub penalty: Penalty,
    #[arg(long, value_parser = rational, default_value = "1")]
    pub lambda: Rational,
    #[arg(long, value_parser = rational)]
    pub threshold: Rational,
    /// Breakpoint file for `--penalty custom` (`x y` per line).
    #[arg(long)]
    pub breakpoints: Option<PathBuf>,
    #[arg(long)]
    pub scheduler_out: Option<PathBuf>,
    /// Include the optimal value of every (state, counter) pair.
    #[arg(long)]
    pub table: bool,
    /// Also run floating-point value iteration with this tolerance.
    #[arg(long)]
    pub float: Option<f64>,
}

#[derive(Args, Debug)]
pub struct MadpeArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long, value_parser = rational)]
    pub lambda: Rational,
    /// Initial grid step is E^max / divisions.
    #[arg(long, default_value_t = 64)]
    pub divisions: u64,
    #[arg(long, default_value_t = 3)]
    pub refinement_rounds: u32,
    #[arg(long, default_value_t = 8)]
    pub polish_steps: u32,
    #[arg(long)]
    pub scheduler_out: Option<PathBuf>,
    /// Include every evaluated candidate expectation.
    #[arg(long)]
    pub sweep_log: bool,
}

#[derive(Args, Debug)]
pub struct ExportQpArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long, value_parser = rational)]
    pub lambda: Rational,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Objective {
    Vpe,
    Madpe,
    Smadpe,
    Svpe,
    Tbpe,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Class {
    Memoryless,
    RewardBased,
}

#[derive(Args, Debug)]
pub struct GridArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long, value_enum)]
    pub objective: Objective,
    #[arg(long, value_parser = rational)]
    pub lambda: Rational,
    #[arg(long, value_parser = rational)]
    pub threshold: Option<Rational>,
    /// Probabilities are multiples of 1/G.
    #[arg(long, default_value_t = 100)]
    pub resolution: u64,
    #[arg(long, value_enum, default_value_t = Class::Memoryless)]
    pub class: Class,
    /// Largest accumulated reward with its own decisions (reward-based class).
    #[arg(long)]
    pub bound: Option<u64>,
    /// Largest number of grid points.
    #[arg(long, default_value_t = 50_000_000)]
    pub budget: u128,
    /// Include the value at every grid point.
    #[arg(long)]
    pub surface: bool,
}

#[derive(Args, Debug)]
pub struct SimulateArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub scheduler: Option<PathBuf>,
    #[arg(long, default_value_t = 100_000)]
    pub samples: u64,
    /// Defaults to RISKMDP_SEED, then 0.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, default_value_t = 1_000_000)]
    pub max_steps: usize,
    #[arg(long, default_value_t = 3)]
    pub retries: usize,
    /// Include the path count of every observed reward.
    #[arg(long)]
    pub histogram: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Method {
    Mad,
    Crinkle,
    Search,
}

#[derive(Args, Debug)]
pub struct ReduceArgs {
    #[arg(long)]
    pub chain: PathBuf,
    /// Threshold (not used by `search`).
    #[arg(long)]
    pub t: Option<u64>,
    #[arg(long, value_enum, default_value_t = Method::Mad)]
    pub method: Method,
    /// Include the serialized gadget chains (`mad`).
    #[arg(long)]
    pub gadgets: bool,
}

fn command_name(c: &Command) -> &'static str {
    match c {
        Command::Validate(_) => "validate",
        Command::Normalize(_) => "normalize",
        Command::Expmax(_) => "expmax",
        Command::Measures(_) => "measures",
        Command::SolveTbpe(_) => "solve-tbpe",
        Command::SolveMadpe(_) => "solve-madpe",
        Command::ExportQp(_) => "export-qp",
        Command::Oracle { command: OracleCommand::Grid(_) } => "oracle grid",
        Command::Oracle { command: OracleCommand::Simulate(_) } => "oracle simulate",
        Command::Reduce(_) => "reduce",
        Command::EvalScheduler(_) => "eval-scheduler",
    }
}

struct Emit {
    format: Format,
    quiet: bool,
    timings: bool,
}

fn emit(argv: &[String], name: &str, ctx: &Ctx, outcome: &Result<Value, Failure>, opts: Emit) -> u8 {
    let code = match outcome {
        Ok(_) => 0,
        Err(f) => f.code,
    };
    let mut report = Map::new();
    report.insert("command".into(), json!(argv));
    report.insert("subcommand".into(), json!(name));
    if let Some(h) = &ctx.model_hash {
        report.insert("model_hash".into(), json!(h));
    }
    match outcome {
        Ok(v) => {
            report.insert("result".into(), v.clone());
        }
        Err(f) => {
            if let Some(v) = &f.result {
                report.insert("result".into(), (**v).clone());
            }
            report.insert("error".into(), f.to_json());
        }
    }
    report.insert("exit_code".into(), json!(code));
    if opts.timings {
        let t: Map<String, Value> = ctx.timings.iter().map(|(k, ms)| (k.clone(), json!(ms))).collect();
        report.insert("timings_ms".into(), Value::Object(t));
    }
    let mut lines = ctx.summary.clone();
    if let Err(f) = outcome {
        lines.push(format!("error ({}): {}", f.category, f.message));
    }
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    match opts.format {
        Format::Json => {
            let _ = writeln!(out, "{}", serde_json::to_string_pretty(&Value::Object(report)).expect("json"));
            if !opts.quiet {
                for l in &lines {
                    eprintln!("{l}");
                }
            }
        }
        Format::Text => {
            for l in &lines {
                let _ = writeln!(out, "{l}");
            }
            if opts.timings {
                for (k, ms) in &ctx.timings {
                    let _ = writeln!(out, "time {k}: {ms:.3} ms");
                }
            }
        }
    }
    code
}

fn main() -> ExitCode {
    let argv: Vec<String> = std::env::args().collect();
    let echo: Vec<String> = argv.iter().skip(1).cloned().collect();
    let cli = match Cli::try_parse_from(&argv) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                return ExitCode::SUCCESS;
            }
            let _ = e.print();
            return ExitCode::from(report::USAGE);
        }
    };
    let parallel = cli.jobs != Some(1);
    let mut ctx = Ctx::new(cli.decimals, parallel);
    let outcome = match cli.jobs {
        Some(0) => Err(Failure::usage("--jobs must be at least 1")),
        Some(n) => match rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            Ok(()) => commands::run(&cli.command, &mut ctx),
            Err(e) => Err(Failure::usage(format!("thread pool: {e}"))),
        },
        None => commands::run(&cli.command, &mut ctx),
    };
    let opts = Emit { format: cli.format, quiet: cli.quiet, timings: cli.timings };
    ExitCode::from(emit(&echo, command_name(&cli.command), &ctx, &outcome, opts))
}
