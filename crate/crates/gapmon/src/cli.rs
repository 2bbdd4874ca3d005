//! Command-line surface: `learn`, `simulate`, `precompute`, `run`,
//! `compare`, and `bench`.
//!
//! Reports go to standard output as JSON (one object per step for `run`,
//! one document for the others); diagnostics and timing go to standard
//! error, so two runs with identical inputs and seeds produce byte-identical
//! standard output. Most tuning flags can also be set through `GAPMON_*`
//! environment variables; explicit flags win.

use std::fmt::Write as _;
use std::io::Write;
use std::path::PathBuf;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::bench::{run_bench, AlgoSpec, BenchOptions};
use crate::learn::{baum_welch, LearnOptions, ZeroMask};
use crate::model::{
    load_model, parse_trace, save_model, write_trace, ModelBundle, TraceItem, Verdict, VerdictProbs,
};
use crate::particle::PfOptions;
use crate::report::{OnImpossible, RunSummary, StepRecord};
use crate::sim::{brute_force_posterior, filling_count, merge_declared_dists, score, GapPolicy};
use crate::{exact, particle, sim, table, Error, Result};

#[derive(Parser)]
#[command(
    name = "gapmon",
    version,
    about = "Runtime verification over event traces with monitoring gaps",
    after_help = "Exit codes: 0 success, 2 invalid input or model, 3 impossible observation, \
                  4 resource limit, 5 internal error."
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Learn a hidden-Markov program model from complete traces (Baum-Welch)
    Learn(LearnArgs),
    /// Sample a ground-truth execution and its gapped observation
    Simulate(SimulateArgs),
    /// Unfold the belief graph of a model into a lookup table
    Precompute(PrecomputeArgs),
    /// Estimate verdict probabilities for a trace with one engine
    Run(RunArgs),
    /// Run several engines on one trace and compare them (optionally against
    /// the brute-force oracle and a known ground truth)
    Compare(CompareArgs),
    /// Measure per-item cost of the engines on a model and trace
    Bench(BenchArgs),
}

#[derive(Args)]
struct LearnArgs {
    /// Training trace files, one trace per file, `evt` lines only
    #[arg(long, num_args = 1.., required = true)]
    traces: Vec<PathBuf>,
    /// Number of hidden states
    #[arg(long)]
    states: usize,
    /// JSON file with boolean matrices `A` and `B`; true pins an entry to 0
    #[arg(long)]
    mask: Option<PathBuf>,
    #[arg(long, env = "GAPMON_SEED", default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 500)]
    max_iters: usize,
    /// Convergence threshold on per-iteration log-likelihood gain (nats)
    #[arg(long, default_value_t = 1e-6)]
    tol: f64,
    #[arg(long, default_value_t = 5)]
    restarts: usize,
    /// Existing bundle whose alphabet, monitor, peek channel, and gap
    /// distributions are copied into the output
    #[arg(long)]
    dfsm: Option<PathBuf>,
    /// Output model bundle
    #[arg(short = 'o', long)]
    output: PathBuf,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    model: PathBuf,
    /// Number of events to sample
    #[arg(long)]
    length: usize,
    /// `none`, `dutycycle:<on>:<off>`, or `bernoulli:<p_off>:<dist-id>`
    #[arg(long, default_value = "none")]
    policy: String,
    #[arg(long, env = "GAPMON_SEED", default_value_t = 0)]
    seed: u64,
    /// Output trace file
    #[arg(short = 'o', long)]
    output: PathBuf,
    /// Also write the ground truth (hidden path, verdict, declared gap
    /// distributions) as JSON
    #[arg(long)]
    truth: Option<PathBuf>,
    /// Write a copy of the model with the declared gap distributions merged
    /// in, ready to run the emitted trace
    #[arg(long)]
    emit_model: Option<PathBuf>,
}

#[derive(Args)]
struct PrecomputeArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long, env = "GAPMON_EPSILON")]
    epsilon: f64,
    #[arg(long, env = "GAPMON_MAX_NODES", default_value_t = 100_000)]
    max_nodes: usize,
    /// Output table file
    #[arg(short = 'o', long)]
    output: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum AlgoKind {
    Exact,
    Table,
    Pf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ReportMode {
    PerStep,
    Final,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum OnImpossibleArg {
    Error,
    UniformReset,
}

impl From<OnImpossibleArg> for OnImpossible {
    fn from(a: OnImpossibleArg) -> Self {
        match a {
            OnImpossibleArg::Error => OnImpossible::Error,
            OnImpossibleArg::UniformReset => OnImpossible::UniformReset,
        }
    }
}

#[derive(Args)]
struct RunArgs {
    #[arg(long, value_enum)]
    algo: AlgoKind,
    /// Model bundle; required for exact and pf, optional for table (used to
    /// verify the table digest)
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long)]
    trace: PathBuf,
    /// Precomputed table file (table engine)
    #[arg(long)]
    table: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "per-step")]
    report: ReportMode,
    #[arg(long, value_enum, env = "GAPMON_ON_IMPOSSIBLE", default_value = "error")]
    on_impossible: OnImpossibleArg,
    #[arg(long, env = "GAPMON_PARTICLES", default_value_t = 10_000)]
    particles: usize,
    #[arg(long, env = "GAPMON_SEED", default_value_t = 0)]
    seed: u64,
    /// Resample when ESS falls below this fraction of the particle count
    #[arg(long, env = "GAPMON_ESS_RATIO", default_value_t = 0.5)]
    ess_ratio: f64,
    /// Also print a human-readable summary table on stderr
    #[arg(long)]
    summary: bool,
}

#[derive(Args)]
struct CompareArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    trace: PathBuf,
    /// Comma-separated engine list, e.g. `exact,table:0.01,pf:10000`
    #[arg(long, default_value = "exact")]
    algos: String,
    /// Enumerate the brute-force posterior if it needs at most this many gap
    /// fillings
    #[arg(long, env = "GAPMON_ORACLE_BUDGET")]
    oracle_budget: Option<u64>,
    /// Ground-truth file from `simulate --truth`; enables Brier scoring
    #[arg(long)]
    truth: Option<PathBuf>,
    #[arg(long, env = "GAPMON_SEED", default_value_t = 0)]
    seed: u64,
    #[arg(long, env = "GAPMON_ESS_RATIO", default_value_t = 0.5)]
    ess_ratio: f64,
    #[arg(long, env = "GAPMON_MAX_NODES", default_value_t = 100_000)]
    max_nodes: usize,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    trace: PathBuf,
    /// Comma-separated engine list, e.g. `exact,table:0.01,pf:1000`
    #[arg(long, default_value = "exact,table:0,pf:10000")]
    algos: String,
    /// Timed repetitions per engine (at least 5)
    #[arg(long, default_value_t = 5)]
    reps: usize,
    #[arg(long, env = "GAPMON_SEED", default_value_t = 0)]
    seed: u64,
    #[arg(long, env = "GAPMON_MAX_NODES", default_value_t = 100_000)]
    max_nodes: usize,
}

/// Ground-truth file written by `simulate --truth`.
#[derive(Serialize, Deserialize)]
struct TruthFile {
    verdict: Verdict,
    #[serde(default)]
    hidden: Vec<usize>,
    #[serde(default)]
    emitted: Vec<String>,
    #[serde(default)]
    monitor: Vec<String>,
    #[serde(default)]
    declared_dists: Vec<DeclaredDist>,
}

#[derive(Serialize, Deserialize)]
struct DeclaredDist {
    id: String,
    mass: Vec<(u32, f64)>,
}

/// Entry point used by the `gapmon` binary; returns the process exit code.
pub fn main() -> i32 {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("gapmon: {e}");
            e.exit_code()
        }
    }
}

fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::Learn(args) => cmd_learn(args),
        Command::Simulate(args) => cmd_simulate(args),
        Command::Precompute(args) => cmd_precompute(args),
        Command::Run(args) => cmd_run(args),
        Command::Compare(args) => cmd_compare(args),
        Command::Bench(args) => cmd_bench(args),
    }
}

fn print_json(value: &impl Serialize) -> Result<()> {
    let mut stdout = std::io::stdout().lock();
    serde_json::to_writer(&mut stdout, value).map_err(|e| Error::Io(e.into()))?;
    stdout.write_all(b"\n")?;
    Ok(())
}

#[derive(Serialize, Deserialize)]
struct MaskFile {
    #[serde(rename = "A")]
    a: Vec<Vec<bool>>,
    #[serde(rename = "B")]
    b: Vec<Vec<bool>>,
}

fn cmd_learn(args: LearnArgs) -> Result<()> {
    // each file holds one trace; only program events are allowed
    let mut symbol_traces: Vec<Vec<String>> = Vec::new();
    for path in &args.traces {
        let items = parse_trace(path)?;
        let mut symbols = Vec::with_capacity(items.len());
        for item in items {
            match item {
                TraceItem::Event(s) => symbols.push(s),
                other => {
                    return Err(Error::InvalidArgument(format!(
                        "training trace {} contains `{other}`; only evt lines are allowed",
                        path.display()
                    )))
                }
            }
        }
        symbol_traces.push(symbols);
    }

    let base = args.dfsm.as_deref().map(load_model).transpose()?;
    let alphabet = match &base {
        Some(bundle) => bundle.hmm.alphabet.clone(),
        None => {
            let mut symbols: Vec<String> = symbol_traces.iter().flatten().cloned().collect();
            symbols.sort();
            symbols.dedup();
            crate::model::Alphabet::new(symbols)?
        }
    };
    let traces: Vec<Vec<usize>> = symbol_traces
        .iter()
        .map(|symbols| {
            symbols
                .iter()
                .map(|s| {
                    alphabet
                        .index_of(s)
                        .ok_or_else(|| Error::UnknownLabel(format!("event symbol {s:?}")))
                })
                .collect()
        })
        .collect::<Result<_>>()?;

    let zero_mask = args
        .mask
        .as_deref()
        .map(|path| -> Result<ZeroMask> {
            let text = std::fs::read_to_string(path)?;
            let file: MaskFile = serde_json::from_str(&text).map_err(|e| Error::Parse {
                origin: path.display().to_string(),
                message: e.to_string(),
            })?;
            Ok(ZeroMask { a: file.a, b: file.b })
        })
        .transpose()?;

    let opts = LearnOptions {
        n_states: args.states,
        max_iters: args.max_iters,
        tol: args.tol,
        seed: args.seed,
        restarts: args.restarts,
        zero_mask,
    };
    let outcome = baum_welch(&alphabet, &traces, &opts)?;
    for warning in &outcome.warnings {
        eprintln!("gapmon: warning: {warning}");
    }

    let bundle = ModelBundle {
        hmm: outcome.hmm,
        dfsm: base.as_ref().and_then(|b| b.dfsm.clone()),
        peek: base.as_ref().and_then(|b| b.peek.clone()),
        gap_dists: base.map(|b| b.gap_dists).unwrap_or_default(),
    };
    bundle.validate()?;
    save_model(&bundle, &args.output)?;

    print_json(&serde_json::json!({
        "log_likelihood": outcome.log_likelihood,
        "iterations": outcome.history.len(),
        "states": args.states,
        "traces": traces.len(),
        "model": args.output.display().to_string(),
    }))
}

fn parse_policy(text: &str, bundle: &ModelBundle) -> Result<GapPolicy> {
    let parts: Vec<&str> = text.split(':').collect();
    match parts.as_slice() {
        ["none"] => Ok(GapPolicy::None),
        ["dutycycle", on, off] => {
            let on_len = on.parse().map_err(|_| {
                Error::InvalidArgument(format!("bad on-length in policy {text:?}"))
            })?;
            let off_len = off.parse().map_err(|_| {
                Error::InvalidArgument(format!("bad off-length in policy {text:?}"))
            })?;
            Ok(GapPolicy::DutyCycle { on_len, off_len })
        }
        ["bernoulli", p, dist_id] => {
            let p_off: f64 = p.parse().map_err(|_| {
                Error::InvalidArgument(format!("bad probability in policy {text:?}"))
            })?;
            let dist = bundle
                .gap_dist(dist_id)
                .ok_or_else(|| Error::UnknownLabel(format!("gap distribution {dist_id:?}")))?
                .clone();
            Ok(GapPolicy::Bernoulli { p_off, dist })
        }
        _ => Err(Error::InvalidArgument(format!(
            "unknown policy {text:?} (expected none, dutycycle:<on>:<off>, or bernoulli:<p>:<dist-id>)"
        ))),
    }
}

fn cmd_simulate(args: SimulateArgs) -> Result<()> {
    let bundle = load_model(&args.model)?;
    let dfsm = bundle.dfsm()?;
    let policy = parse_policy(&args.policy, &bundle)?;
    let truth = sim::simulate(
        &bundle.hmm,
        dfsm,
        bundle.peek.as_ref(),
        args.length,
        &policy,
        args.seed,
    )?;

    write_trace(&truth.observed, &args.output)?;
    if let Some(path) = &args.truth {
        let file = TruthFile {
            verdict: truth.verdict,
            hidden: truth.hidden.clone(),
            emitted: truth
                .emitted
                .iter()
                .map(|&o| bundle.hmm.alphabet.symbol(o).to_string())
                .collect(),
            monitor: truth.monitor.iter().map(|&m| dfsm.states[m].clone()).collect(),
            declared_dists: truth
                .declared_dists
                .iter()
                .map(|d| DeclaredDist {
                    id: d.id.clone(),
                    mass: d.mass.clone(),
                })
                .collect(),
        };
        let mut text = serde_json::to_string_pretty(&file).expect("truth serialization cannot fail");
        text.push('\n');
        std::fs::write(path, text)?;
    }
    if let Some(path) = &args.emit_model {
        let merged = merge_declared_dists(&bundle, &truth.declared_dists)?;
        save_model(&merged, path)?;
    } else if truth
        .declared_dists
        .iter()
        .any(|d| bundle.gap_dist(&d.id).is_none())
    {
        eprintln!(
            "gapmon: note: the trace references gap distributions the model does not declare; \
             pass --emit-model to write a runnable bundle"
        );
    }

    print_json(&serde_json::json!({
        "events": args.length,
        "observed_items": truth.observed.len(),
        "verdict": truth.verdict,
        "trace": args.output.display().to_string(),
    }))
}

fn cmd_precompute(args: PrecomputeArgs) -> Result<()> {
    let bundle = load_model(&args.model)?;
    let start = Instant::now();
    let tbl = table::precompute(&bundle, args.epsilon, args.max_nodes)?;
    let elapsed = start.elapsed();
    table::save_table(&tbl, &args.output)?;
    eprintln!(
        "gapmon: precomputed {} nodes / {} edges in {:.1} ms",
        tbl.node_count(),
        tbl.meta.edge_count,
        elapsed.as_secs_f64() * 1e3
    );
    print_json(&serde_json::json!({
        "nodes": tbl.node_count(),
        "edges": tbl.meta.edge_count,
        "epsilon": args.epsilon,
        "table": args.output.display().to_string(),
    }))
}

#[derive(Serialize)]
struct SummaryLine<'a> {
    summary: &'a RunSummary,
}

fn emit_run_report(
    steps: &[StepRecord],
    summary: &RunSummary,
    mode: ReportMode,
    human: bool,
    elapsed_ms: f64,
) -> Result<()> {
    if mode == ReportMode::PerStep {
        let mut stdout = std::io::stdout().lock();
        for step in steps {
            serde_json::to_writer(&mut stdout, step).map_err(|e| Error::Io(e.into()))?;
            stdout.write_all(b"\n")?;
        }
    }
    print_json(&SummaryLine { summary })?;
    let items_per_sec = if elapsed_ms > 0.0 {
        summary.steps as f64 / (elapsed_ms / 1e3)
    } else {
        f64::INFINITY
    };
    eprintln!(
        "gapmon: {} items in {elapsed_ms:.3} ms ({items_per_sec:.0} items/sec)",
        summary.steps
    );
    if human {
        let mut text = String::new();
        let _ = writeln!(text, "  {:<12} {:>10} {:>10} {:>10}", "", "accepting", "pending", "violated");
        let _ = writeln!(
            text,
            "  {:<12} {:>10.6} {:>10.6} {:>10.6}",
            "final", summary.verdicts.accepting, summary.verdicts.pending, summary.verdicts.violated
        );
        if let Some(ll) = summary.log_likelihood {
            let _ = writeln!(text, "  log-likelihood: {ll:.6} nats");
        }
        eprint!("{text}");
    }
    Ok(())
}

fn cmd_run(args: RunArgs) -> Result<()> {
    let trace = parse_trace(&args.trace)?;
    let on_impossible: OnImpossible = args.on_impossible.into();

    match args.algo {
        AlgoKind::Exact | AlgoKind::Pf => {
            let model_path = args.model.as_ref().ok_or_else(|| {
                Error::InvalidArgument("--model is required for this engine".into())
            })?;
            let bundle = load_model(model_path)?;
            let start = Instant::now();
            if args.algo == AlgoKind::Exact {
                let out = exact::run(&bundle, &trace, on_impossible)?;
                let elapsed_ms = start.elapsed().as_secs_f64() * 1e3;
                let summary = RunSummary {
                    steps: out.steps.len(),
                    verdicts: out
                        .steps
                        .last()
                        .map(|s| s.verdicts)
                        .unwrap_or_else(|| {
                            crate::model::verdict_probabilities(
                                &out.final_belief,
                                bundle.dfsm().expect("checked by run"),
                            )
                        }),
                    log_likelihood: Some(out.log_likelihood),
                    resets: out.resets,
                };
                emit_run_report(&out.steps, &summary, args.report, args.summary, elapsed_ms)
            } else {
                let opts = PfOptions {
                    particles: args.particles,
                    seed: args.seed,
                    ess_ratio: args.ess_ratio,
                    on_impossible,
                };
                let out = particle::run(&bundle, &trace, &opts)?;
                let elapsed_ms = start.elapsed().as_secs_f64() * 1e3;
                let summary = RunSummary {
                    steps: out.steps.len(),
                    verdicts: out.final_verdicts,
                    log_likelihood: Some(out.log_likelihood),
                    resets: out.resets,
                };
                emit_run_report(&out.steps, &summary, args.report, args.summary, elapsed_ms)
            }
        }
        AlgoKind::Table => {
            let table_path = args.table.as_ref().ok_or_else(|| {
                Error::InvalidArgument("--table is required for the table engine".into())
            })?;
            let tbl = table::load_table(table_path)?;
            if let Some(model_path) = &args.model {
                let bundle = load_model(model_path)?;
                tbl.verify_model(&bundle)?;
            }
            let start = Instant::now();
            let out = table::run(&tbl, &trace)?;
            let elapsed_ms = start.elapsed().as_secs_f64() * 1e3;
            let summary = RunSummary {
                steps: out.steps.len(),
                verdicts: tbl.node_verdicts(out.final_node),
                log_likelihood: None,
                resets: 0,
            };
            emit_run_report(&out.steps, &summary, args.report, args.summary, elapsed_ms)
        }
    }
}

#[derive(Serialize)]
struct CompareAlgo {
    algo: String,
    final_verdicts: VerdictProbs,
    #[serde(skip_serializing_if = "Option::is_none")]
    log_likelihood: Option<f64>,
    /// Per-step RMSE of verdict probabilities against the exact engine.
    #[serde(skip_serializing_if = "Option::is_none")]
    rmse_vs_exact: Option<f64>,
    /// Largest per-step verdict deviation against the exact engine.
    #[serde(skip_serializing_if = "Option::is_none")]
    max_step_divergence: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    nodes: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    brier_vs_truth: Option<f64>,
    wall_ms: f64,
}

#[derive(Serialize)]
struct CompareOracle {
    final_verdicts: VerdictProbs,
    max_cell_error_vs_exact: f64,
    fillings: u128,
}

#[derive(Serialize)]
struct CompareReport {
    items: usize,
    algos: Vec<CompareAlgo>,
    #[serde(skip_serializing_if = "Option::is_none")]
    oracle: Option<CompareOracle>,
    #[serde(skip_serializing_if = "Option::is_none")]
    truth_verdict: Option<Verdict>,
}

fn divergence_stats(steps: &[StepRecord], reference: &[StepRecord]) -> (Option<f64>, Option<f64>) {
    if steps.len() != reference.len() || steps.is_empty() {
        return (None, None);
    }
    let mut acc = 0.0;
    let mut max_div: f64 = 0.0;
    for (s, r) in steps.iter().zip(reference) {
        let dv = s.verdicts;
        let rv = r.verdicts;
        for (a, b) in [
            (dv.accepting, rv.accepting),
            (dv.pending, rv.pending),
            (dv.violated, rv.violated),
        ] {
            acc += (a - b) * (a - b);
            max_div = max_div.max((a - b).abs());
        }
    }
    let rmse = (acc / (3.0 * steps.len() as f64)).sqrt();
    (Some(rmse), Some(max_div))
}

fn cmd_compare(args: CompareArgs) -> Result<()> {
    let bundle = load_model(&args.model)?;
    let trace = parse_trace(&args.trace)?;
    let specs = AlgoSpec::parse_list(&args.algos)?;
    let truth_verdict: Option<Verdict> = args
        .truth
        .as_deref()
        .map(|path| -> Result<Verdict> {
            let text = std::fs::read_to_string(path)?;
            let file: TruthFile = serde_json::from_str(&text).map_err(|e| Error::Parse {
                origin: path.display().to_string(),
                message: e.to_string(),
            })?;
            Ok(file.verdict)
        })
        .transpose()?;

    let start = Instant::now();
    let exact_run = exact::run(&bundle, &trace, OnImpossible::Error)?;
    let exact_ms = start.elapsed().as_secs_f64() * 1e3;
    let exact_final = exact_run
        .steps
        .last()
        .map(|s| s.verdicts)
        .unwrap_or_else(|| {
            crate::model::verdict_probabilities(&exact_run.final_belief, bundle.dfsm().expect("validated"))
        });
    let brier_of = |verdicts: VerdictProbs| -> Option<f64> {
        truth_verdict.map(|v| score(&[verdicts], &[v], None).expect("lengths match").brier)
    };

    let mut algos = vec![CompareAlgo {
        algo: "exact".into(),
        final_verdicts: exact_final,
        log_likelihood: Some(exact_run.log_likelihood),
        rmse_vs_exact: None,
        max_step_divergence: None,
        nodes: None,
        brier_vs_truth: brier_of(exact_final),
        wall_ms: exact_ms,
    }];

    for spec in specs {
        match spec {
            AlgoSpec::Exact => {} // already included as the reference
            AlgoSpec::Table { epsilon } => {
                let tbl = table::precompute(&bundle, epsilon, args.max_nodes)?;
                let start = Instant::now();
                let out = table::run(&tbl, &trace)?;
                let wall_ms = start.elapsed().as_secs_f64() * 1e3;
                let final_verdicts = tbl.node_verdicts(out.final_node);
                let (rmse, max_div) = divergence_stats(&out.steps, &exact_run.steps);
                algos.push(CompareAlgo {
                    algo: spec.name(),
                    final_verdicts,
                    log_likelihood: None,
                    rmse_vs_exact: rmse,
                    max_step_divergence: max_div,
                    nodes: Some(tbl.node_count()),
                    brier_vs_truth: brier_of(final_verdicts),
                    wall_ms,
                });
            }
            AlgoSpec::Pf { particles } => {
                let opts = PfOptions {
                    particles,
                    seed: args.seed,
                    ess_ratio: args.ess_ratio,
                    on_impossible: OnImpossible::Error,
                };
                let start = Instant::now();
                let out = particle::run(&bundle, &trace, &opts)?;
                let wall_ms = start.elapsed().as_secs_f64() * 1e3;
                let (rmse, max_div) = divergence_stats(&out.steps, &exact_run.steps);
                algos.push(CompareAlgo {
                    algo: spec.name(),
                    final_verdicts: out.final_verdicts,
                    log_likelihood: Some(out.log_likelihood),
                    rmse_vs_exact: rmse,
                    max_step_divergence: max_div,
                    nodes: None,
                    brier_vs_truth: brier_of(out.final_verdicts),
                    wall_ms,
                });
            }
        }
    }

    let oracle = args
        .oracle_budget
        .map(|budget| -> Result<CompareOracle> {
            let fillings = filling_count(&bundle, &trace)?;
            let posterior = brute_force_posterior(&bundle, &trace, budget)?;
            let max_cell_error = posterior.l1_distance(&exact_run.final_belief);
            Ok(CompareOracle {
                final_verdicts: crate::model::verdict_probabilities(
                    &posterior,
                    bundle.dfsm().expect("validated"),
                ),
                max_cell_error_vs_exact: max_cell_error,
                fillings,
            })
        })
        .transpose()?;

    print_json(&CompareReport {
        items: trace.len(),
        algos,
        oracle,
        truth_verdict,
    })
}

fn cmd_bench(args: BenchArgs) -> Result<()> {
    let bundle = load_model(&args.model)?;
    let trace = parse_trace(&args.trace)?;
    let specs = AlgoSpec::parse_list(&args.algos)?;
    let report = run_bench(
        &bundle,
        &trace,
        &specs,
        &BenchOptions {
            reps: args.reps,
            seed: args.seed,
            max_nodes: args.max_nodes,
        },
    )?;
    if let Some(ratio) = report.exact_over_table {
        eprintln!("gapmon: exact/table per-item cost ratio: {ratio:.2}x");
    }
    print_json(&report)
}
