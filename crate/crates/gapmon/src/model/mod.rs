//! Core domain types: event alphabets, the hidden-Markov program model, the
//! DFSM property monitor, gap-length distributions, the peek observation
//! channel, and joint belief states.
//!
//! All types are immutable after construction and safe to share across
//! threads. Matrices are dense row-major `Vec<Vec<f64>>`; probability rows
//! must be stochastic within [`PROB_TOL`].

mod io;
mod trace;

pub use io::{load_model, save_model};
pub use trace::{parse_trace, parse_trace_str, write_trace, TraceItem};

use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::{Error, Result};

/// Tolerance used when checking that probability vectors sum to 1.
pub const PROB_TOL: f64 = 1e-9;

fn check_row(row: &[f64], at: impl Fn() -> String) -> Result<()> {
    for &p in row {
        if !(0.0..=1.0).contains(&p) || !p.is_finite() {
            return Err(Error::InvalidModel {
                at: at(),
                reason: format!("entry {p} outside [0, 1]"),
            });
        }
    }
    let sum: f64 = row.iter().sum();
    if (sum - 1.0).abs() > PROB_TOL {
        return Err(Error::InvalidModel {
            at: at(),
            reason: format!("row sums to {sum}, expected 1"),
        });
    }
    Ok(())
}

/// Ordered list of distinct event symbols. The order is canonical and fixes
/// column indices in every emission matrix and DFSM transition table.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Alphabet {
    symbols: Vec<String>,
}

impl Alphabet {
    pub fn new(symbols: Vec<String>) -> Result<Self> {
        let a = Alphabet { symbols };
        a.validate()?;
        Ok(a)
    }

    pub fn from_strs(symbols: &[&str]) -> Result<Self> {
        Self::new(symbols.iter().map(|s| s.to_string()).collect())
    }

    pub(crate) fn validate(&self) -> Result<()> {
        if self.symbols.is_empty() {
            return Err(Error::InvalidModel {
                at: "alphabet".into(),
                reason: "alphabet is empty".into(),
            });
        }
        for (i, s) in self.symbols.iter().enumerate() {
            if self.symbols[..i].contains(s) {
                return Err(Error::InvalidModel {
                    at: format!("alphabet.symbols[{i}]"),
                    reason: format!("duplicate symbol {s:?}"),
                });
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }

    pub fn symbols(&self) -> &[String] {
        &self.symbols
    }

    pub fn symbol(&self, idx: usize) -> &str {
        &self.symbols[idx]
    }

    pub fn index_of(&self, symbol: &str) -> Option<usize> {
        self.symbols.iter().position(|s| s == symbol)
    }
}

/// Hidden-Markov program model.
///
/// `pi` is the distribution of a silent time-0 state that emits nothing;
/// symbols are emitted by the destination state of each transition, so one
/// step is "apply `a`, then weight by `b`".
#[derive(Debug, Clone, PartialEq)]
pub struct Hmm {
    pub pi: Vec<f64>,
    pub a: Vec<Vec<f64>>,
    pub b: Vec<Vec<f64>>,
    pub alphabet: Alphabet,
}

impl Hmm {
    pub fn new(pi: Vec<f64>, a: Vec<Vec<f64>>, b: Vec<Vec<f64>>, alphabet: Alphabet) -> Result<Self> {
        let hmm = Hmm { pi, a, b, alphabet };
        hmm.validate()?;
        Ok(hmm)
    }

    /// Number of hidden states.
    pub fn n(&self) -> usize {
        self.pi.len()
    }

    pub(crate) fn validate(&self) -> Result<()> {
        self.alphabet.validate()?;
        let n = self.n();
        if n == 0 {
            return Err(Error::InvalidModel {
                at: "hmm.pi".into(),
                reason: "model has no hidden states".into(),
            });
        }
        check_row(&self.pi, || "hmm.pi".into())?;
        if self.a.len() != n {
            return Err(Error::InvalidModel {
                at: "hmm.A".into(),
                reason: format!("expected {n} rows, found {}", self.a.len()),
            });
        }
        for (i, row) in self.a.iter().enumerate() {
            if row.len() != n {
                return Err(Error::InvalidModel {
                    at: format!("hmm.A.row[{i}]"),
                    reason: format!("expected {n} entries, found {}", row.len()),
                });
            }
            check_row(row, || format!("hmm.A.row[{i}]"))?;
        }
        let k = self.alphabet.len();
        if self.b.len() != n {
            return Err(Error::InvalidModel {
                at: "hmm.B".into(),
                reason: format!("expected {n} rows, found {}", self.b.len()),
            });
        }
        for (j, row) in self.b.iter().enumerate() {
            if row.len() != k {
                return Err(Error::InvalidModel {
                    at: format!("hmm.B.row[{j}]"),
                    reason: format!("expected {k} entries, found {}", row.len()),
                });
            }
            check_row(row, || format!("hmm.B.row[{j}]"))?;
        }
        Ok(())
    }
}

/// Peek observation channel: `c[x][v]` is the probability that a peek reads
/// value `v` while the program is in hidden state `x`.
#[derive(Debug, Clone, PartialEq)]
pub struct PeekModel {
    pub values: Vec<String>,
    pub c: Vec<Vec<f64>>,
}

impl PeekModel {
    pub fn new(values: Vec<String>, c: Vec<Vec<f64>>) -> Result<Self> {
        let peek = PeekModel { values, c };
        peek.validate(None)?;
        Ok(peek)
    }

    pub fn value_index(&self, value: &str) -> Option<usize> {
        self.values.iter().position(|v| v == value)
    }

    pub(crate) fn validate(&self, n_states: Option<usize>) -> Result<()> {
        if self.values.is_empty() {
            return Err(Error::InvalidModel {
                at: "peek.values".into(),
                reason: "no peek values declared".into(),
            });
        }
        for (i, v) in self.values.iter().enumerate() {
            if self.values[..i].contains(v) {
                return Err(Error::InvalidModel {
                    at: format!("peek.values[{i}]"),
                    reason: format!("duplicate value {v:?}"),
                });
            }
        }
        if let Some(n) = n_states {
            if self.c.len() != n {
                return Err(Error::InvalidModel {
                    at: "peek.C".into(),
                    reason: format!("expected {n} rows, found {}", self.c.len()),
                });
            }
        }
        for (x, row) in self.c.iter().enumerate() {
            if row.len() != self.values.len() {
                return Err(Error::InvalidModel {
                    at: format!("peek.C.row[{x}]"),
                    reason: format!("expected {} entries, found {}", self.values.len(), row.len()),
                });
            }
            check_row(row, || format!("peek.C.row[{x}]"))?;
        }
        Ok(())
    }
}

/// Monitor verdict attached to each DFSM state.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Accepting,
    Pending,
    Violated,
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Verdict::Accepting => write!(f, "accepting"),
            Verdict::Pending => write!(f, "pending"),
            Verdict::Violated => write!(f, "violated"),
        }
    }
}

/// Probability assigned to each verdict class. Sums to 1 for any normalized
/// belief.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VerdictProbs {
    pub accepting: f64,
    pub pending: f64,
    pub violated: f64,
}

impl VerdictProbs {
    pub const ZERO: VerdictProbs = VerdictProbs {
        accepting: 0.0,
        pending: 0.0,
        violated: 0.0,
    };

    pub fn get(&self, v: Verdict) -> f64 {
        match v {
            Verdict::Accepting => self.accepting,
            Verdict::Pending => self.pending,
            Verdict::Violated => self.violated,
        }
    }

    pub fn add(&mut self, v: Verdict, p: f64) {
        match v {
            Verdict::Accepting => self.accepting += p,
            Verdict::Pending => self.pending += p,
            Verdict::Violated => self.violated += p,
        }
    }

    pub fn total(&self) -> f64 {
        self.accepting + self.pending + self.violated
    }

    /// Largest absolute per-class difference.
    pub fn max_abs_diff(&self, other: &VerdictProbs) -> f64 {
        (self.accepting - other.accepting)
            .abs()
            .max((self.pending - other.pending).abs())
            .max((self.violated - other.violated).abs())
    }
}

/// Deterministic finite state machine monitor with verdict-labeled states.
///
/// `delta` is a total `|Q| x |sigma|` table of destination state indices.
#[derive(Debug, Clone, PartialEq)]
pub struct Dfsm {
    pub states: Vec<String>,
    pub alphabet: Alphabet,
    pub delta: Vec<Vec<usize>>,
    pub initial: usize,
    pub verdict: Vec<Verdict>,
    pub absorbing_violations: bool,
}

impl Dfsm {
    pub fn new(
        states: Vec<String>,
        alphabet: Alphabet,
        delta: Vec<Vec<usize>>,
        initial: usize,
        verdict: Vec<Verdict>,
        absorbing_violations: bool,
    ) -> Result<Self> {
        let dfsm = Dfsm {
            states,
            alphabet,
            delta,
            initial,
            verdict,
            absorbing_violations,
        };
        dfsm.validate()?;
        Ok(dfsm)
    }

    /// Number of monitor states.
    pub fn q(&self) -> usize {
        self.states.len()
    }

    pub fn state_index(&self, name: &str) -> Option<usize> {
        self.states.iter().position(|s| s == name)
    }

    pub(crate) fn validate(&self) -> Result<()> {
        if self.states.is_empty() {
            return Err(Error::InvalidModel {
                at: "dfsm.states".into(),
                reason: "monitor has no states".into(),
            });
        }
        for (i, s) in self.states.iter().enumerate() {
            if self.states[..i].contains(s) {
                return Err(Error::InvalidModel {
                    at: format!("dfsm.states[{i}]"),
                    reason: format!("duplicate state {s:?}"),
                });
            }
        }
        self.alphabet.validate()?;
        let q = self.q();
        let k = self.alphabet.len();
        if self.initial >= q {
            return Err(Error::InvalidModel {
                at: "dfsm.initial".into(),
                reason: format!("initial state {} out of range", self.initial),
            });
        }
        if self.verdict.len() != q {
            return Err(Error::InvalidModel {
                at: "dfsm.verdict".into(),
                reason: format!("expected {q} labels, found {}", self.verdict.len()),
            });
        }
        if self.delta.len() != q {
            return Err(Error::InvalidModel {
                at: "dfsm.delta".into(),
                reason: format!("expected {q} rows, found {}", self.delta.len()),
            });
        }
        for (i, row) in self.delta.iter().enumerate() {
            for (j, sym) in self.alphabet.symbols().iter().enumerate() {
                match row.get(j) {
                    Some(&to) if to < q => {}
                    Some(&to) => {
                        return Err(Error::InvalidModel {
                            at: format!("dfsm.delta[{i}][{sym}]"),
                            reason: format!("destination {to} out of range"),
                        });
                    }
                    None => {
                        return Err(Error::InvalidModel {
                            at: format!("dfsm.delta[{i}][{sym}]"),
                            reason: "missing transition".into(),
                        });
                    }
                }
            }
            if row.len() > k {
                return Err(Error::InvalidModel {
                    at: format!("dfsm.delta[{i}]"),
                    reason: format!("expected {k} entries, found {}", row.len()),
                });
            }
        }
        if self.absorbing_violations {
            for (i, row) in self.delta.iter().enumerate() {
                if self.verdict[i] != Verdict::Violated {
                    continue;
                }
                for (j, sym) in self.alphabet.symbols().iter().enumerate() {
                    if self.verdict[row[j]] != Verdict::Violated {
                        return Err(Error::InvalidModel {
                            at: format!("dfsm.delta[{i}][{sym}]"),
                            reason: "violated state escapes under absorbing_violations".into(),
                        });
                    }
                }
            }
        }
        Ok(())
    }
}

/// Single monitor transition: `delta[m][o]`.
pub fn dfsm_step(dfsm: &Dfsm, m: usize, o: usize) -> usize {
    dfsm.delta[m][o]
}

/// Fold [`dfsm_step`] over a gap-free event sequence from the initial state.
/// Returns the final state and its verdict.
pub fn run_dfsm(dfsm: &Dfsm, events: &[usize]) -> (usize, Verdict) {
    let m = events.iter().fold(dfsm.initial, |m, &o| dfsm_step(dfsm, m, o));
    (m, dfsm.verdict[m])
}

/// Finite-support distribution over the number of events missed in one gap.
#[derive(Debug, Clone, PartialEq)]
pub struct GapDist {
    pub id: String,
    /// `(length, probability)` pairs sorted by length, no duplicates.
    pub mass: Vec<(u32, f64)>,
}

impl GapDist {
    pub fn new(id: impl Into<String>, mut mass: Vec<(u32, f64)>) -> Result<Self> {
        mass.sort_by_key(|&(l, _)| l);
        let dist = GapDist { id: id.into(), mass };
        dist.validate()?;
        Ok(dist)
    }

    /// Point mass: always exactly `len` events missed.
    pub fn point(id: impl Into<String>, len: u32) -> Self {
        GapDist {
            id: id.into(),
            mass: vec![(len, 1.0)],
        }
    }

    /// Uniform over `lo..=hi`.
    pub fn uniform(id: impl Into<String>, lo: u32, hi: u32) -> Result<Self> {
        if lo > hi {
            return Err(Error::InvalidArgument(format!(
                "uniform gap distribution with empty range {lo}..={hi}"
            )));
        }
        let p = 1.0 / (hi - lo + 1) as f64;
        Self::new(id, (lo..=hi).map(|l| (l, p)).collect())
    }

    /// Geometric on {0, 1, ...} with success probability `p`, truncated at the
    /// smallest length whose cumulative mass reaches `1 - 1e-9`, then
    /// renormalized.
    pub fn geometric(id: impl Into<String>, p: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&(1.0 - p)) || !(p > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "geometric parameter {p} outside (0, 1]"
            )));
        }
        let mut mass = Vec::new();
        let mut cum = 0.0;
        let mut term = p;
        let mut len = 0u32;
        while cum < 1.0 - PROB_TOL {
            mass.push((len, term));
            cum += term;
            term *= 1.0 - p;
            len += 1;
        }
        let total: f64 = mass.iter().map(|&(_, m)| m).sum();
        for entry in &mut mass {
            entry.1 /= total;
        }
        Self::new(id, mass)
    }

    pub fn max_len(&self) -> u32 {
        self.mass.last().map(|&(l, _)| l).unwrap_or(0)
    }

    pub fn prob_of(&self, len: u32) -> f64 {
        self.mass
            .iter()
            .find(|&&(l, _)| l == len)
            .map(|&(_, p)| p)
            .unwrap_or(0.0)
    }

    pub(crate) fn validate(&self) -> Result<()> {
        let at = || format!("gap_dists[{}].mass", self.id);
        if self.id.is_empty() {
            return Err(Error::InvalidModel {
                at: "gap_dists".into(),
                reason: "empty distribution id".into(),
            });
        }
        if self.mass.is_empty() {
            return Err(Error::InvalidModel {
                at: at(),
                reason: "empty support".into(),
            });
        }
        for (i, &(l, _)) in self.mass.iter().enumerate() {
            if i > 0 && self.mass[i - 1].0 == l {
                return Err(Error::InvalidModel {
                    at: at(),
                    reason: format!("duplicate length {l}"),
                });
            }
        }
        let probs: Vec<f64> = self.mass.iter().map(|&(_, p)| p).collect();
        check_row(&probs, at)
    }
}

/// Joint probability distribution over (hidden state, monitor state) pairs,
/// stored dense row-major: `cell(x, m) = Pr(hmm = x, monitor = m | obs)`.
#[derive(Debug, Clone, PartialEq)]
pub struct BeliefState {
    n: usize,
    q: usize,
    cells: Vec<f64>,
}

impl BeliefState {
    pub fn zeros(n: usize, q: usize) -> Self {
        BeliefState {
            n,
            q,
            cells: vec![0.0; n * q],
        }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        let q = rows.first().map(|r| r.len()).unwrap_or(0);
        if n == 0 || q == 0 || rows.iter().any(|r| r.len() != q) {
            return Err(Error::InvalidArgument("belief matrix must be rectangular and non-empty".into()));
        }
        Ok(BeliefState {
            n,
            q,
            cells: rows.iter().flatten().copied().collect(),
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn q(&self) -> usize {
        self.q
    }

    #[inline]
    pub fn get(&self, x: usize, m: usize) -> f64 {
        self.cells[x * self.q + m]
    }

    #[inline]
    pub fn set(&mut self, x: usize, m: usize, v: f64) {
        self.cells[x * self.q + m] = v;
    }

    #[inline]
    pub fn add(&mut self, x: usize, m: usize, v: f64) {
        self.cells[x * self.q + m] += v;
    }

    pub fn cells(&self) -> &[f64] {
        &self.cells
    }

    pub fn total(&self) -> f64 {
        self.cells.iter().sum()
    }

    pub fn scale(&mut self, factor: f64) {
        for c in &mut self.cells {
            *c *= factor;
        }
    }

    /// In-place `self += factor * other`.
    pub fn add_scaled(&mut self, other: &BeliefState, factor: f64) {
        debug_assert_eq!(self.cells.len(), other.cells.len());
        for (c, o) in self.cells.iter_mut().zip(&other.cells) {
            *c += factor * o;
        }
    }

    /// 1-norm distance, the node-merging metric of the precomputed table.
    pub fn l1_distance(&self, other: &BeliefState) -> f64 {
        debug_assert_eq!(self.cells.len(), other.cells.len());
        self.cells
            .iter()
            .zip(&other.cells)
            .map(|(a, b)| (a - b).abs())
            .sum()
    }

    /// Marginal distribution over monitor states.
    pub fn monitor_marginal(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.q];
        for x in 0..self.n {
            for m in 0..self.q {
                out[m] += self.get(x, m);
            }
        }
        out
    }

    /// Marginal distribution over hidden states.
    pub fn hidden_marginal(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.n];
        for x in 0..self.n {
            out[x] = self.cells[x * self.q..(x + 1) * self.q].iter().sum();
        }
        out
    }

    /// Shannon entropy (nats) of the monitor-state marginal.
    pub fn monitor_entropy(&self) -> f64 {
        -self
            .monitor_marginal()
            .iter()
            .filter(|&&p| p > 0.0)
            .map(|&p| p * p.ln())
            .sum::<f64>()
    }

    pub(crate) fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.n)
            .map(|x| self.cells[x * self.q..(x + 1) * self.q].to_vec())
            .collect()
    }
}

/// Sum belief mass per verdict class. The three probabilities sum to 1 for
/// any normalized belief.
pub fn verdict_probabilities(belief: &BeliefState, dfsm: &Dfsm) -> VerdictProbs {
    let mut out = VerdictProbs::ZERO;
    for x in 0..belief.n() {
        for m in 0..belief.q() {
            out.add(dfsm.verdict[m], belief.get(x, m));
        }
    }
    out
}

/// Everything a monitoring run needs: program model, property monitor, and
/// the optional peek channel and gap distributions referenced by traces.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelBundle {
    pub hmm: Hmm,
    pub dfsm: Option<Dfsm>,
    pub peek: Option<PeekModel>,
    pub gap_dists: Vec<GapDist>,
}

impl ModelBundle {
    pub fn new(hmm: Hmm, dfsm: Dfsm, peek: Option<PeekModel>, gap_dists: Vec<GapDist>) -> Result<Self> {
        let bundle = ModelBundle {
            hmm,
            dfsm: Some(dfsm),
            peek,
            gap_dists,
        };
        bundle.validate()?;
        Ok(bundle)
    }

    pub fn validate(&self) -> Result<()> {
        match &self.dfsm {
            Some(dfsm) => validate_model(&self.hmm, dfsm, self.peek.as_ref(), &self.gap_dists),
            None => {
                self.hmm.validate()?;
                if let Some(peek) = &self.peek {
                    peek.validate(Some(self.hmm.n()))?;
                }
                validate_gap_dists(&self.gap_dists)
            }
        }
    }

    /// The monitor, or an error for bundles that carry only a learned model.
    pub fn dfsm(&self) -> Result<&Dfsm> {
        self.dfsm.as_ref().ok_or_else(|| Error::InvalidModel {
            at: "dfsm".into(),
            reason: "model bundle has no monitor; add a `dfsm` section".into(),
        })
    }

    pub fn gap_dist(&self, id: &str) -> Option<&GapDist> {
        self.gap_dists.iter().find(|g| g.id == id)
    }

    /// Index of a gap distribution by id.
    pub fn gap_dist_index(&self, id: &str) -> Option<usize> {
        self.gap_dists.iter().position(|g| g.id == id)
    }

    /// SHA-256 of the canonical JSON serialization, used to bind precomputed
    /// tables to the model they were built from.
    pub fn digest(&self) -> String {
        let bytes = io::to_canonical_json(self);
        let mut hasher = Sha256::new();
        hasher.update(&bytes);
        let out = hasher.finalize();
        out.iter().map(|b| format!("{b:02x}")).collect()
    }
}

fn validate_gap_dists(gap_dists: &[GapDist]) -> Result<()> {
    let mut seen: HashMap<&str, ()> = HashMap::new();
    for dist in gap_dists {
        dist.validate()?;
        if seen.insert(&dist.id, ()).is_some() {
            return Err(Error::InvalidModel {
                at: format!("gap_dists[{}]", dist.id),
                reason: "duplicate distribution id".into(),
            });
        }
    }
    Ok(())
}

/// Check every type invariant and cross-component consistency constraint.
/// Returns the first violation as [`Error::InvalidModel`] with a path-like
/// locator.
pub fn validate_model(
    hmm: &Hmm,
    dfsm: &Dfsm,
    peek: Option<&PeekModel>,
    gap_dists: &[GapDist],
) -> Result<()> {
    hmm.validate()?;
    dfsm.validate()?;
    if dfsm.alphabet != hmm.alphabet {
        return Err(Error::InvalidModel {
            at: "dfsm.alphabet".into(),
            reason: "monitor alphabet differs from the model alphabet".into(),
        });
    }
    if let Some(peek) = peek {
        peek.validate(Some(hmm.n()))?;
    }
    validate_gap_dists(gap_dists)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testutil::{m1_bundle, m1_d1};

    #[test]
    fn validate_accepts_m1() {
        let bundle = m1_bundle();
        assert!(bundle.validate().is_ok());
    }

    #[test]
    fn validate_rejects_bad_transition_row() {
        let (mut hmm, dfsm) = m1_d1();
        hmm.a[0] = vec![0.5, 0.6];
        let err = validate_model(&hmm, &dfsm, None, &[]).unwrap_err();
        match err {
            Error::InvalidModel { at, .. } => assert_eq!(at, "hmm.A.row[0]"),
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn validate_rejects_missing_delta_cell() {
        let (hmm, mut dfsm) = m1_d1();
        dfsm.delta[1].pop();
        let err = validate_model(&hmm, &dfsm, None, &[]).unwrap_err();
        match err {
            Error::InvalidModel { at, .. } => assert_eq!(at, "dfsm.delta[1][c]"),
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn validate_rejects_negative_probability() {
        let (mut hmm, dfsm) = m1_d1();
        hmm.pi = vec![1.5, -0.5];
        let err = validate_model(&hmm, &dfsm, None, &[]).unwrap_err();
        match err {
            Error::InvalidModel { at, .. } => assert_eq!(at, "hmm.pi"),
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn validate_rejects_alphabet_mismatch() {
        let (hmm, mut dfsm) = m1_d1();
        dfsm.alphabet = Alphabet::from_strs(&["a", "d"]).unwrap();
        let err = validate_model(&hmm, &dfsm, None, &[]).unwrap_err();
        match err {
            Error::InvalidModel { at, .. } => assert_eq!(at, "dfsm.alphabet"),
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn validate_rejects_escaping_violated_state() {
        let alphabet = Alphabet::from_strs(&["a"]).unwrap();
        let dfsm = Dfsm {
            states: vec!["ok".into(), "bad".into()],
            alphabet,
            delta: vec![vec![1], vec![0]],
            initial: 0,
            verdict: vec![Verdict::Accepting, Verdict::Violated],
            absorbing_violations: true,
        };
        let err = dfsm.validate().unwrap_err();
        match err {
            Error::InvalidModel { at, .. } => assert_eq!(at, "dfsm.delta[1][a]"),
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn dfsm_steps_follow_the_monitor_for_always_a_implies_finally_c() {
        let (_, dfsm) = m1_d1();
        // a opens an obligation, c discharges it
        assert_eq!(dfsm_step(&dfsm, 0, 0), 1);
        assert_eq!(dfsm_step(&dfsm, 1, 1), 0);
        // irrelevant symbol self-loops
        assert_eq!(dfsm_step(&dfsm, 0, 1), 0);
    }

    #[test]
    fn run_dfsm_full_trace_accepts() {
        let dfsm = crate::testutil::d1_four_symbols();
        let idx = |s: &str| dfsm.alphabet.index_of(s).unwrap();
        let events: Vec<usize> = "a b b c a d b c".split_whitespace().map(idx).collect();
        let (m, verdict) = run_dfsm(&dfsm, &events);
        assert_eq!(m, 0);
        assert_eq!(verdict, Verdict::Accepting);
    }

    #[test]
    fn run_dfsm_pending_and_empty() {
        let dfsm = crate::testutil::d1_four_symbols();
        let idx = |s: &str| dfsm.alphabet.index_of(s).unwrap();
        let events: Vec<usize> = "a b".split_whitespace().map(idx).collect();
        assert_eq!(run_dfsm(&dfsm, &events), (1, Verdict::Pending));
        assert_eq!(run_dfsm(&dfsm, &[]), (0, Verdict::Accepting));
    }

    #[test]
    fn verdict_probabilities_sum_cells_by_label() {
        let (_, dfsm) = m1_d1();
        let point = BeliefState::from_rows(&[vec![1.0, 0.0], vec![0.0, 0.0]]).unwrap();
        let probs = verdict_probabilities(&point, &dfsm);
        assert_eq!(probs.accepting, 1.0);
        assert_eq!(probs.pending, 0.0);
        assert_eq!(probs.violated, 0.0);

        let split = BeliefState::from_rows(&[vec![0.0, 0.5], vec![0.5, 0.0]]).unwrap();
        let probs = verdict_probabilities(&split, &dfsm);
        assert_eq!(probs.accepting, 0.5);
        assert_eq!(probs.pending, 0.5);

        let uniform = BeliefState::from_rows(&[vec![0.25, 0.25], vec![0.25, 0.25]]).unwrap();
        let probs = verdict_probabilities(&uniform, &dfsm);
        assert_eq!(probs.accepting, 0.5);
        assert_eq!(probs.pending, 0.5);
        assert!((probs.total() - 1.0).abs() < PROB_TOL);
    }

    #[test]
    fn geometric_gap_dist_truncates_and_renormalizes() {
        let g = GapDist::geometric("g", 0.5).unwrap();
        let total: f64 = g.mass.iter().map(|&(_, p)| p).sum();
        assert!((total - 1.0).abs() < 1e-12);
        assert!(g.max_len() >= 29); // 2^-30 < 1e-9
        assert!((g.prob_of(0) - 0.5).abs() < 1e-9);
    }

    #[test]
    fn gap_dist_rejects_short_mass() {
        let err = GapDist::new("g", vec![(0, 0.5), (1, 0.4)]).unwrap_err();
        match err {
            Error::InvalidModel { at, .. } => assert_eq!(at, "gap_dists[g].mass"),
            other => panic!("unexpected error {other:?}"),
        }
    }
}
