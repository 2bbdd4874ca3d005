//! Comparative timing of the estimation engines on a fixed model and trace.
//!
//! Each engine gets a warmup pass and at least five timed repetitions over
//! pre-resolved trace items; the median per-item cost is reported together
//! with a memory estimate (table size or particle storage). Inputs are
//! resolved to indices before the clock starts, so the loops measure the
//! per-event update work itself.

use std::hint::black_box;
use std::str::FromStr;
use std::time::Instant;

use serde::Serialize;

use crate::exact;
use crate::model::{verdict_probabilities, ModelBundle, TraceItem};
use crate::particle::ParticleFilter;
use crate::table::{self, EdgeTarget, PrecomputedTable};
use crate::{Error, Result};

/// An engine selection such as `exact`, `table:0.01`, or `pf:10000`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AlgoSpec {
    Exact,
    Table { epsilon: f64 },
    Pf { particles: usize },
}

impl AlgoSpec {
    pub fn name(&self) -> String {
        match self {
            AlgoSpec::Exact => "exact".into(),
            AlgoSpec::Table { epsilon } => format!("table:{epsilon}"),
            AlgoSpec::Pf { particles } => format!("pf:{particles}"),
        }
    }

    /// Parse a comma-separated list of specs.
    pub fn parse_list(text: &str) -> Result<Vec<AlgoSpec>> {
        text.split(',')
            .map(|s| s.trim().parse())
            .collect::<Result<Vec<_>>>()
    }
}

impl FromStr for AlgoSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut parts = s.splitn(2, ':');
        let head = parts.next().unwrap_or("");
        let arg = parts.next();
        match (head, arg) {
            ("exact", None) => Ok(AlgoSpec::Exact),
            ("table", None) => Ok(AlgoSpec::Table { epsilon: 0.0 }),
            ("table", Some(eps)) => {
                let epsilon: f64 = eps.parse().map_err(|_| {
                    Error::InvalidArgument(format!("bad epsilon in algo spec {s:?}"))
                })?;
                Ok(AlgoSpec::Table { epsilon })
            }
            ("pf", None) => Ok(AlgoSpec::Pf { particles: 10_000 }),
            ("pf", Some(n)) => {
                let particles: usize = n.parse().map_err(|_| {
                    Error::InvalidArgument(format!("bad particle count in algo spec {s:?}"))
                })?;
                Ok(AlgoSpec::Pf { particles })
            }
            _ => Err(Error::InvalidArgument(format!(
                "unknown algo spec {s:?} (expected exact, table[:eps], or pf[:n])"
            ))),
        }
    }
}

enum ResolvedItem {
    Event(usize),
    Gap(usize),
    Peek(usize),
}

fn resolve_items(bundle: &ModelBundle, trace: &[TraceItem]) -> Result<Vec<ResolvedItem>> {
    trace
        .iter()
        .map(|item| match item {
            TraceItem::Event(sym) => bundle
                .hmm
                .alphabet
                .index_of(sym)
                .map(ResolvedItem::Event)
                .ok_or_else(|| Error::UnknownLabel(format!("event symbol {sym:?}"))),
            TraceItem::Gap(id) => bundle
                .gap_dist_index(id)
                .map(ResolvedItem::Gap)
                .ok_or_else(|| Error::UnknownLabel(format!("gap distribution {id:?}"))),
            TraceItem::Peek(value) => bundle
                .peek
                .as_ref()
                .and_then(|p| p.value_index(value))
                .map(ResolvedItem::Peek)
                .ok_or_else(|| Error::UnknownLabel(format!("peek value {value:?}"))),
        })
        .collect()
}

/// Timing and memory figures for one engine.
#[derive(Debug, Clone, Serialize)]
pub struct AlgoBench {
    pub algo: String,
    pub items: usize,
    pub reps: usize,
    /// Median per-item cost; absent for an empty trace.
    pub median_ns_per_item: Option<f64>,
    pub memory_bytes: usize,
    /// Table precompute time, for the table engine.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub setup_ms: Option<f64>,
    /// Table node count, for the table engine.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub nodes: Option<usize>,
}

/// The full comparative report.
#[derive(Debug, Clone, Serialize)]
pub struct BenchReport {
    pub items: usize,
    pub reps: usize,
    pub algos: Vec<AlgoBench>,
    /// exact-vs-table speed ratio (first table spec), when both were run.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub exact_over_table: Option<f64>,
}

fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mid = xs.len() / 2;
    if xs.len() % 2 == 1 {
        xs[mid]
    } else {
        (xs[mid - 1] + xs[mid]) / 2.0
    }
}

fn time_reps(reps: usize, mut pass: impl FnMut() -> Result<f64>) -> Result<Vec<f64>> {
    pass()?; // warmup
    let mut out = Vec::with_capacity(reps);
    for _ in 0..reps {
        let start = Instant::now();
        let sink = pass()?;
        let elapsed = start.elapsed().as_nanos() as f64;
        black_box(sink);
        out.push(elapsed);
    }
    Ok(out)
}

fn exact_pass(bundle: &ModelBundle, items: &[ResolvedItem]) -> Result<f64> {
    let hmm = &bundle.hmm;
    let dfsm = bundle.dfsm()?;
    let mut belief = exact::init_belief(hmm, dfsm);
    let mut sink = 0.0;
    for item in items {
        match *item {
            ResolvedItem::Event(o) => {
                belief = exact::observe_event(hmm, dfsm, &belief, o)?.0;
            }
            ResolvedItem::Gap(g) => {
                belief = exact::observe_gap(hmm, dfsm, &belief, &bundle.gap_dists[g]);
            }
            ResolvedItem::Peek(v) => {
                let peek = bundle.peek.as_ref().expect("resolved earlier");
                belief = exact::observe_peek(peek, &belief, v)?.0;
            }
        }
        sink += verdict_probabilities(&belief, dfsm).accepting;
    }
    Ok(sink)
}

fn table_pass(tbl: &PrecomputedTable, labels: &[usize]) -> Result<f64> {
    let mut node = 0usize;
    let mut sink = 0.0;
    for &label in labels {
        match tbl.edge(node, label) {
            EdgeTarget::Node(v) => node = v,
            EdgeTarget::Impossible => {
                return Err(Error::ImpossibleObservation(format!(
                    "benchmark trace hits an impossible input at table node {node}"
                )))
            }
        }
        sink += tbl.node_verdicts(node).accepting;
    }
    Ok(sink)
}

fn pf_pass(bundle: &ModelBundle, items: &[ResolvedItem], particles: usize, seed: u64) -> Result<f64> {
    let hmm = &bundle.hmm;
    let dfsm = bundle.dfsm()?;
    let mut filter = ParticleFilter::new(hmm, dfsm, particles, seed, 0.5)?;
    let mut sink = 0.0;
    for item in items {
        match *item {
            ResolvedItem::Event(o) => {
                filter.step_event(o)?;
            }
            ResolvedItem::Gap(g) => {
                filter.step_gap(&bundle.gap_dists[g]);
            }
            ResolvedItem::Peek(v) => {
                let peek = bundle.peek.as_ref().expect("resolved earlier");
                filter.step_peek(peek, v)?;
            }
        }
        sink += filter.estimate().accepting;
    }
    Ok(sink)
}

/// Benchmark configuration.
#[derive(Debug, Clone, Copy)]
pub struct BenchOptions {
    pub reps: usize,
    pub seed: u64,
    pub max_nodes: usize,
}

impl Default for BenchOptions {
    fn default() -> Self {
        BenchOptions {
            reps: 5,
            seed: 0,
            max_nodes: 100_000,
        }
    }
}

/// Run every requested engine over the trace and report median per-item
/// costs. The trace is resolved to indices before timing starts.
pub fn run_bench(
    bundle: &ModelBundle,
    trace: &[TraceItem],
    algos: &[AlgoSpec],
    opts: &BenchOptions,
) -> Result<BenchReport> {
    let reps = opts.reps.max(5);
    let items = resolve_items(bundle, trace)?;
    let n_items = items.len();
    let dfsm = bundle.dfsm()?;
    let cell_bytes = 8 * bundle.hmm.n() * dfsm.q();

    let mut report = BenchReport {
        items: n_items,
        reps,
        algos: Vec::new(),
        exact_over_table: None,
    };
    let mut exact_ns: Option<f64> = None;
    let mut table_ns: Option<f64> = None;

    for spec in algos {
        let bench = match *spec {
            AlgoSpec::Exact => {
                let ns = if n_items == 0 {
                    None
                } else {
                    let times = time_reps(reps, || exact_pass(bundle, &items))?;
                    Some(median(times) / n_items as f64)
                };
                if exact_ns.is_none() {
                    exact_ns = ns;
                }
                AlgoBench {
                    algo: spec.name(),
                    items: n_items,
                    reps,
                    median_ns_per_item: ns,
                    memory_bytes: 2 * cell_bytes, // current + successor belief
                    setup_ms: None,
                    nodes: None,
                }
            }
            AlgoSpec::Table { epsilon } => {
                let setup_start = Instant::now();
                let tbl = table::precompute(bundle, epsilon, opts.max_nodes)?;
                let setup_ms = setup_start.elapsed().as_secs_f64() * 1e3;
                let labels: Vec<usize> = trace
                    .iter()
                    .map(|item| tbl.label_of(item))
                    .collect::<Result<_>>()?;
                let ns = if n_items == 0 {
                    None
                } else {
                    let times = time_reps(reps, || table_pass(&tbl, &labels))?;
                    Some(median(times) / n_items as f64)
                };
                if table_ns.is_none() {
                    table_ns = ns;
                }
                AlgoBench {
                    algo: spec.name(),
                    items: n_items,
                    reps,
                    median_ns_per_item: ns,
                    memory_bytes: tbl.node_count() * cell_bytes
                        + tbl.meta.edge_count * std::mem::size_of::<EdgeTarget>(),
                    setup_ms: Some(setup_ms),
                    nodes: Some(tbl.node_count()),
                }
            }
            AlgoSpec::Pf { particles } => {
                let ns = if n_items == 0 {
                    None
                } else {
                    let times = time_reps(reps, || pf_pass(bundle, &items, particles, opts.seed))?;
                    Some(median(times) / n_items as f64)
                };
                AlgoBench {
                    algo: spec.name(),
                    items: n_items,
                    reps,
                    median_ns_per_item: ns,
                    memory_bytes: particles * (2 * std::mem::size_of::<u32>() + 8),
                    setup_ms: None,
                    nodes: None,
                }
            }
        };
        report.algos.push(bench);
    }

    if let (Some(e), Some(t)) = (exact_ns, table_ns) {
        if t > 0.0 {
            report.exact_over_table = Some(e / t);
        }
    }
    Ok(report)
}
