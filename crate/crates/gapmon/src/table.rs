//! Precomputed estimation: unfold the reachable belief graph offline so
//! that each runtime step is a table lookup.
//!
//! Nodes are belief states, edges are labeled with the declared inputs (all
//! event symbols, all gap-distribution ids, all peek values). A newly
//! computed belief is merged with the first existing node within `epsilon`
//! in the 1-norm, which keeps the otherwise infinite unfolding finite at the
//! price of approximation. Runtime cost per item is O(1) plus the verdict
//! lookup, independent of the desired accuracy; the cost moved into table
//! size. If a trace can use gap distributions that were not declared at
//! precompute time, precomputation is infeasible and the exact engine must
//! be used instead.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::exact;
use crate::model::{
    verdict_probabilities, BeliefState, ModelBundle, TraceItem, Verdict, VerdictProbs,
};
use crate::report::StepRecord;
use crate::{Error, Result};

/// One input the table is complete over.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", content = "name", rename_all = "snake_case")]
pub enum InputLabel {
    Event(String),
    Gap(String),
    Peek(String),
}

impl From<&TraceItem> for InputLabel {
    fn from(item: &TraceItem) -> Self {
        match item {
            TraceItem::Event(s) => InputLabel::Event(s.clone()),
            TraceItem::Gap(g) => InputLabel::Gap(g.clone()),
            TraceItem::Peek(v) => InputLabel::Peek(v.clone()),
        }
    }
}

impl std::fmt::Display for InputLabel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            InputLabel::Event(s) => write!(f, "evt {s}"),
            InputLabel::Gap(g) => write!(f, "gap {g}"),
            InputLabel::Peek(v) => write!(f, "peek {v}"),
        }
    }
}

/// Where an edge leads: a node, or nowhere because the model assigns the
/// input probability 0 from that belief.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EdgeTarget {
    Node(usize),
    Impossible,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableMeta {
    pub epsilon: f64,
    pub model_digest: String,
    pub n: usize,
    pub q: usize,
    pub verdict: Vec<Verdict>,
    pub labels: Vec<InputLabel>,
    pub node_count: usize,
    pub edge_count: usize,
}

/// The finished unfolding: belief nodes, a total edge map over the declared
/// labels, and per-node verdict probabilities.
#[derive(Debug, Clone)]
pub struct PrecomputedTable {
    pub meta: TableMeta,
    nodes: Vec<BeliefState>,
    /// `edges[node][label]`
    edges: Vec<Vec<EdgeTarget>>,
    node_verdicts: Vec<VerdictProbs>,
    label_index: HashMap<InputLabel, usize>,
}

impl PrecomputedTable {
    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn node(&self, id: usize) -> &BeliefState {
        &self.nodes[id]
    }

    pub fn edge(&self, node: usize, label: usize) -> EdgeTarget {
        self.edges[node][label]
    }

    pub fn node_verdicts(&self, id: usize) -> VerdictProbs {
        self.node_verdicts[id]
    }

    pub fn label_of(&self, item: &TraceItem) -> Result<usize> {
        self.label_index
            .get(&InputLabel::from(item))
            .copied()
            .ok_or_else(|| Error::UnknownLabel(item.to_string()))
    }

    /// Check that the table was built from exactly this model.
    pub fn verify_model(&self, bundle: &ModelBundle) -> Result<()> {
        let actual = bundle.digest();
        if actual != self.meta.model_digest {
            return Err(Error::DigestMismatch {
                expected: self.meta.model_digest.clone(),
                actual,
            });
        }
        Ok(())
    }

    /// Recompute every edge from its source belief and check the stored
    /// target is within `epsilon` in the 1-norm.
    pub fn audit(&self, bundle: &ModelBundle) -> Result<()> {
        self.verify_model(bundle)?;
        for (u, row) in self.edges.iter().enumerate() {
            for (label_idx, &target) in row.iter().enumerate() {
                let computed = successor(bundle, &self.nodes[u], &self.meta.labels[label_idx])?;
                match (computed, target) {
                    (Some(belief), EdgeTarget::Node(v)) => {
                        let dist = belief.l1_distance(&self.nodes[v]);
                        if dist > self.meta.epsilon {
                            return Err(Error::InvalidArgument(format!(
                                "edge {u} --{}--> {v} violates the epsilon bound: {dist} > {}",
                                self.meta.labels[label_idx], self.meta.epsilon
                            )));
                        }
                    }
                    (None, EdgeTarget::Impossible) => {}
                    (computed, target) => {
                        return Err(Error::InvalidArgument(format!(
                            "edge {u} --{}--> {target:?} disagrees with recomputation (impossible: {})",
                            self.meta.labels[label_idx],
                            computed.is_none()
                        )))
                    }
                }
            }
        }
        Ok(())
    }
}

/// The exact one-step successor of `belief` under `label`, or `None` when
/// the input has probability 0.
fn successor(
    bundle: &ModelBundle,
    belief: &BeliefState,
    label: &InputLabel,
) -> Result<Option<BeliefState>> {
    let hmm = &bundle.hmm;
    let dfsm = bundle.dfsm()?;
    match label {
        InputLabel::Event(sym) => {
            let o = hmm
                .alphabet
                .index_of(sym)
                .ok_or_else(|| Error::UnknownLabel(format!("event symbol {sym:?}")))?;
            match exact::observe_event(hmm, dfsm, belief, o) {
                Ok((next, _)) => Ok(Some(next)),
                Err(Error::ImpossibleObservation(_)) => Ok(None),
                Err(e) => Err(e),
            }
        }
        InputLabel::Gap(id) => {
            let gap = bundle
                .gap_dist(id)
                .ok_or_else(|| Error::UnknownLabel(format!("gap distribution {id:?}")))?;
            Ok(Some(exact::observe_gap(hmm, dfsm, belief, gap)))
        }
        InputLabel::Peek(value) => {
            let peek = bundle
                .peek
                .as_ref()
                .ok_or_else(|| Error::UnknownLabel(format!("peek {value:?} (model has no peek channel)")))?;
            let v = peek
                .value_index(value)
                .ok_or_else(|| Error::UnknownLabel(format!("peek value {value:?}")))?;
            match exact::observe_peek(peek, belief, v) {
                Ok((next, _)) => Ok(Some(next)),
                Err(Error::ImpossibleObservation(_)) => Ok(None),
                Err(e) => Err(e),
            }
        }
    }
}

/// The label set a bundle declares: every symbol, every gap-distribution id,
/// every peek value, in that order.
pub fn declared_labels(bundle: &ModelBundle) -> Vec<InputLabel> {
    let mut labels = Vec::new();
    for sym in bundle.hmm.alphabet.symbols() {
        labels.push(InputLabel::Event(sym.clone()));
    }
    for gap in &bundle.gap_dists {
        labels.push(InputLabel::Gap(gap.id.clone()));
    }
    if let Some(peek) = &bundle.peek {
        for v in &peek.values {
            labels.push(InputLabel::Peek(v.clone()));
        }
    }
    labels
}

/// Breadth-first unfolding from the initial belief. For each frontier node
/// and each declared label the exact successor is computed from the stored
/// node belief; existing nodes are scanned in creation order and the first
/// within `epsilon` (1-norm) is reused, otherwise a new node is appended.
/// The output is a pure function of (model, epsilon, max_nodes).
pub fn precompute(bundle: &ModelBundle, epsilon: f64, max_nodes: usize) -> Result<PrecomputedTable> {
    bundle.validate()?;
    let dfsm = bundle.dfsm()?;
    if !(epsilon >= 0.0) {
        return Err(Error::InvalidArgument(format!("epsilon {epsilon} must be >= 0")));
    }
    if max_nodes == 0 {
        return Err(Error::InvalidArgument("max_nodes must be positive".into()));
    }
    let labels = declared_labels(bundle);

    let mut nodes = vec![exact::init_belief(&bundle.hmm, dfsm)];
    let mut edges: Vec<Vec<EdgeTarget>> = Vec::new();
    let mut frontier = 0usize; // nodes below this index are fully expanded

    while frontier < nodes.len() {
        let u = frontier;
        frontier += 1;
        let mut row = Vec::with_capacity(labels.len());
        for label in &labels {
            let Some(belief) = successor(bundle, &nodes[u], label)? else {
                row.push(EdgeTarget::Impossible);
                continue;
            };
            let found = nodes.iter().position(|node| belief.l1_distance(node) <= epsilon);
            let v = match found {
                Some(v) => v,
                None => {
                    if nodes.len() >= max_nodes {
                        return Err(Error::TableLimitExceeded { max_nodes });
                    }
                    nodes.push(belief);
                    nodes.len() - 1
                }
            };
            row.push(EdgeTarget::Node(v));
        }
        edges.push(row);
    }

    let node_verdicts: Vec<VerdictProbs> = nodes
        .iter()
        .map(|b| verdict_probabilities(b, dfsm))
        .collect();
    let label_index = labels
        .iter()
        .cloned()
        .enumerate()
        .map(|(i, l)| (l, i))
        .collect();
    let meta = TableMeta {
        epsilon,
        model_digest: bundle.digest(),
        n: bundle.hmm.n(),
        q: dfsm.q(),
        verdict: dfsm.verdict.clone(),
        labels,
        node_count: nodes.len(),
        edge_count: edges.iter().map(|r| r.len()).sum(),
    };
    Ok(PrecomputedTable {
        meta,
        nodes,
        edges,
        node_verdicts,
        label_index,
    })
}

/// Result of folding a trace through the table.
#[derive(Debug, Clone)]
pub struct TableRun {
    pub steps: Vec<StepRecord>,
    /// Node reached after the last item (node 0 for an empty trace).
    pub final_node: usize,
}

/// Pure lookups: resolve each item to a label index, then walk edges. No
/// matrix arithmetic happens per item.
pub fn run(table: &PrecomputedTable, trace: &[TraceItem]) -> Result<TableRun> {
    let labels: Vec<usize> = trace
        .iter()
        .map(|item| table.label_of(item))
        .collect::<Result<_>>()?;

    let mut node = 0usize;
    let mut steps = Vec::with_capacity(trace.len());
    for (index, &label) in labels.iter().enumerate() {
        match table.edge(node, label) {
            EdgeTarget::Node(v) => node = v,
            EdgeTarget::Impossible => {
                return Err(Error::ImpossibleObservation(format!(
                    "{} has probability 0 from table node {node}",
                    trace[index]
                )))
            }
        }
        let mut record = StepRecord::new(index, trace[index].clone(), table.node_verdicts(node));
        record.node = Some(node);
        steps.push(record);
    }
    Ok(TableRun {
        steps,
        final_node: node,
    })
}

#[derive(Serialize, Deserialize)]
struct TableFile {
    meta: TableMeta,
    nodes: Vec<Vec<Vec<f64>>>,
    /// `[from, label, to]` triples; `to = -1` marks an impossible input.
    edges: Vec<[i64; 3]>,
}

/// Serialize a table to JSON. Beliefs keep full precision; the output is a
/// deterministic function of the table.
pub fn table_to_string(table: &PrecomputedTable) -> String {
    let file = TableFile {
        meta: table.meta.clone(),
        nodes: table.nodes.iter().map(|b| b.to_rows()).collect(),
        edges: table
            .edges
            .iter()
            .enumerate()
            .flat_map(|(u, row)| {
                row.iter().enumerate().map(move |(label, &target)| {
                    let to = match target {
                        EdgeTarget::Node(v) => v as i64,
                        EdgeTarget::Impossible => -1,
                    };
                    [u as i64, label as i64, to]
                })
            })
            .collect(),
    };
    let mut text = serde_json::to_string(&file).expect("table serialization cannot fail");
    text.push('\n');
    text
}

pub fn save_table(table: &PrecomputedTable, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, table_to_string(table))?;
    Ok(())
}

/// Parse a table from JSON text. `origin` names the source in errors.
pub fn load_table_str(text: &str, origin: &str) -> Result<PrecomputedTable> {
    let file: TableFile = serde_json::from_str(text).map_err(|e| Error::Parse {
        origin: origin.to_string(),
        message: e.to_string(),
    })?;
    let meta = file.meta;
    let parse_err = |message: String| Error::Parse {
        origin: origin.to_string(),
        message,
    };

    if meta.node_count != file.nodes.len() {
        return Err(parse_err(format!(
            "meta declares {} nodes, file has {}",
            meta.node_count,
            file.nodes.len()
        )));
    }
    let mut nodes = Vec::with_capacity(file.nodes.len());
    for (i, rows) in file.nodes.iter().enumerate() {
        if rows.len() != meta.n || rows.iter().any(|r| r.len() != meta.q) {
            return Err(parse_err(format!("node {i} is not a {}x{} matrix", meta.n, meta.q)));
        }
        nodes.push(BeliefState::from_rows(rows)?);
    }

    let n_labels = meta.labels.len();
    if meta.edge_count != file.edges.len() {
        return Err(parse_err(format!(
            "meta declares {} edges, file has {}",
            meta.edge_count,
            file.edges.len()
        )));
    }
    let mut edges: Vec<Vec<Option<EdgeTarget>>> = vec![vec![None; n_labels]; nodes.len()];
    for &[from, label, to] in &file.edges {
        let (Ok(from), Ok(label)) = (usize::try_from(from), usize::try_from(label)) else {
            return Err(parse_err(format!("negative edge source or label: [{from}, {label}, {to}]")));
        };
        if from >= nodes.len() || label >= n_labels {
            return Err(parse_err(format!("edge [{from}, {label}, {to}] out of range")));
        }
        let target = match to {
            -1 => EdgeTarget::Impossible,
            v if v >= 0 && (v as usize) < nodes.len() => EdgeTarget::Node(v as usize),
            v => return Err(parse_err(format!("edge destination {v} out of range"))),
        };
        if edges[from][label].replace(target).is_some() {
            return Err(parse_err(format!("duplicate edge for node {from}, label {label}")));
        }
    }
    let edges: Vec<Vec<EdgeTarget>> = edges
        .into_iter()
        .enumerate()
        .map(|(u, row)| {
            row.into_iter()
                .enumerate()
                .map(|(label, t)| t.ok_or_else(|| parse_err(format!("missing edge for node {u}, label {label}"))))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;

    if meta.verdict.len() != meta.q {
        return Err(parse_err(format!(
            "meta declares {} verdict labels for {} monitor states",
            meta.verdict.len(),
            meta.q
        )));
    }
    let node_verdicts = nodes
        .iter()
        .map(|b| {
            let mut out = VerdictProbs::ZERO;
            for x in 0..b.n() {
                for m in 0..b.q() {
                    out.add(meta.verdict[m], b.get(x, m));
                }
            }
            out
        })
        .collect();
    let label_index = meta
        .labels
        .iter()
        .cloned()
        .enumerate()
        .map(|(i, l)| (l, i))
        .collect();
    Ok(PrecomputedTable {
        meta,
        nodes,
        edges,
        node_verdicts,
        label_index,
    })
}

pub fn load_table(path: impl AsRef<Path>) -> Result<PrecomputedTable> {
    let path = path.as_ref();
    let origin = path.display().to_string();
    let text = fs::read_to_string(path).map_err(|e| Error::Parse {
        origin: origin.clone(),
        message: format!("cannot read file: {e}"),
    })?;
    load_table_str(&text, &origin)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::report::OnImpossible;
    use crate::testutil::m1_bundle;

    /// M1/D1 with the label set {a, c, gap g1}: no peek, one point gap.
    fn fixture() -> ModelBundle {
        let mut bundle = m1_bundle();
        bundle.peek = None;
        bundle.gap_dists.truncate(1);
        bundle
    }

    #[test]
    fn m1_unfolding_has_exactly_four_nodes() {
        let bundle = fixture();
        let table = precompute(&bundle, 0.0, 1000).unwrap();
        assert_eq!(table.node_count(), 4);

        let point = |x: usize, m: usize| {
            let mut b = BeliefState::zeros(2, 2);
            b.set(x, m, 1.0);
            b
        };
        assert!(table.node(0).l1_distance(&point(0, 0)) == 0.0);
        assert!(table.node(1).l1_distance(&point(0, 1)) == 0.0);
        assert!(table.node(2).l1_distance(&point(1, 0)) == 0.0);
        let mixed = BeliefState::from_rows(&[vec![0.0, 0.5], vec![0.5, 0.0]]).unwrap();
        assert!(table.node(3).l1_distance(&mixed) == 0.0);

        // labels are [evt a, evt c, gap g1]
        assert_eq!(table.edge(0, 0), EdgeTarget::Node(1));
        assert_eq!(table.edge(0, 1), EdgeTarget::Node(2));
        assert_eq!(table.edge(0, 2), EdgeTarget::Node(3));
        assert_eq!(table.edge(3, 2), EdgeTarget::Node(3));

        table.audit(&bundle).unwrap();
    }

    #[test]
    fn huge_epsilon_collapses_to_one_node() {
        let bundle = fixture();
        let table = precompute(&bundle, 2.0, 1000).unwrap();
        assert_eq!(table.node_count(), 1);
        for label in 0..table.meta.labels.len() {
            assert_eq!(table.edge(0, label), EdgeTarget::Node(0));
        }
    }

    #[test]
    fn max_nodes_limit_is_enforced() {
        let bundle = fixture();
        let err = precompute(&bundle, 0.0, 2).unwrap_err();
        assert!(matches!(err, Error::TableLimitExceeded { max_nodes: 2 }), "got {err:?}");
    }

    #[test]
    fn run_follows_the_expected_node_path() {
        let bundle = fixture();
        let table = precompute(&bundle, 0.0, 1000).unwrap();
        let trace = vec![TraceItem::event("a"), TraceItem::gap("g1")];
        let out = run(&table, &trace).unwrap();
        let path: Vec<usize> = out.steps.iter().map(|s| s.node.unwrap()).collect();
        assert_eq!(path, vec![1, 3]);

        let exact_run = crate::exact::run(&bundle, &trace, OnImpossible::Error).unwrap();
        for (t_step, e_step) in out.steps.iter().zip(&exact_run.steps) {
            assert!(t_step.verdicts.max_abs_diff(&e_step.verdicts) <= 1e-12);
        }
    }

    #[test]
    fn run_empty_trace_stays_at_the_initial_node() {
        let bundle = fixture();
        let table = precompute(&bundle, 0.0, 1000).unwrap();
        let out = run(&table, &[]).unwrap();
        assert!(out.steps.is_empty());
        assert_eq!(out.final_node, 0);
        assert_eq!(table.node_verdicts(0).accepting, 1.0);
    }

    #[test]
    fn unknown_gap_id_is_rejected() {
        let bundle = fixture();
        let table = precompute(&bundle, 0.0, 1000).unwrap();
        let err = run(&table, &[TraceItem::gap("g9")]).unwrap_err();
        assert!(matches!(err, Error::UnknownLabel(_)), "got {err:?}");
    }

    #[test]
    fn save_load_round_trip_and_digest_check() {
        let bundle = fixture();
        let table = precompute(&bundle, 0.0, 1000).unwrap();
        let text = table_to_string(&table);
        let loaded = load_table_str(&text, "mem").unwrap();
        assert_eq!(loaded.meta, table.meta);
        assert_eq!(table_to_string(&loaded), text);
        loaded.verify_model(&bundle).unwrap();

        let other = m1_bundle();
        let err = loaded.verify_model(&other).unwrap_err();
        assert!(matches!(err, Error::DigestMismatch { .. }), "got {err:?}");

        let err = load_table_str(&text[..text.len() / 2], "mem").unwrap_err();
        assert!(matches!(err, Error::Parse { .. }), "got {err:?}");
    }

    #[test]
    fn precompute_is_deterministic() {
        let bundle = m1_bundle();
        let a = table_to_string(&precompute(&bundle, 0.25, 1000).unwrap());
        let b = table_to_string(&precompute(&bundle, 0.25, 1000).unwrap());
        assert_eq!(a, b);
    }
}
