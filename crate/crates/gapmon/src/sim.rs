//! Ground-truth trace generation with gap policies, the brute-force
//! exact-posterior oracle, and accuracy metrics.
//!
//! The simulator samples a hidden path and its emissions from the model,
//! runs the monitor on the complete event sequence, then applies a gap
//! policy that replaces maximal unmonitored windows with single gap items.
//! The oracle computes the posterior belief by enumerating every way each
//! gap could have been filled; it shares no code with the estimators it
//! validates, stepping only the plain hidden-state forward recurrence and
//! the deterministic monitor.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::model::{
    BeliefState, Dfsm, GapDist, Hmm, ModelBundle, PeekModel, TraceItem, Verdict, VerdictProbs,
};
use crate::rng::sample_categorical;
use crate::{Error, Result};

/// How the simulator decides which events go unobserved.
#[derive(Debug, Clone, PartialEq)]
pub enum GapPolicy {
    /// Monitor everything.
    None,
    /// Monitoring alternates `on_len` observed events with `off_len` missed
    /// ones. Each off-window declares a point-mass distribution of its true
    /// length, modeling a controller that knows how long it was off.
    DutyCycle { on_len: usize, off_len: usize },
    /// Each event is independently missed with probability `p_off`; maximal
    /// missed runs become one gap declaring the configured distribution,
    /// modeling uncertainty in the number of missed events.
    Bernoulli { p_off: f64, dist: GapDist },
}

impl GapPolicy {
    fn validate(&self) -> Result<()> {
        match self {
            GapPolicy::None => Ok(()),
            GapPolicy::DutyCycle { on_len, off_len } => {
                if *on_len == 0 || *off_len == 0 {
                    return Err(Error::InvalidArgument(
                        "duty cycle lengths must be at least 1".into(),
                    ));
                }
                Ok(())
            }
            GapPolicy::Bernoulli { p_off, dist } => {
                if !(0.0..1.0).contains(p_off) {
                    return Err(Error::InvalidArgument(format!(
                        "bernoulli p_off {p_off} outside [0, 1)"
                    )));
                }
                dist.validate()
            }
        }
    }
}

/// A simulated execution: the hidden truth plus the gapped observation of it.
#[derive(Debug, Clone)]
pub struct GroundTruth {
    /// Hidden states x_1..x_T (the silent time-0 state is not recorded).
    pub hidden: Vec<usize>,
    /// Emitted symbols o_1..o_T.
    pub emitted: Vec<usize>,
    /// Monitor states m_0..m_T along the complete event sequence.
    pub monitor: Vec<usize>,
    pub verdict: Verdict,
    /// What the monitor actually saw: events, gaps, and peeks.
    pub observed: Vec<TraceItem>,
    /// Gap distributions the observed trace references; duty-cycle policies
    /// declare these on the fly.
    pub declared_dists: Vec<GapDist>,
}

/// Sample a length-`T` execution and apply the gap policy. With a peek
/// model present, one peek (sampled at the hidden state that ends the gap)
/// follows each gap item.
pub fn simulate(
    hmm: &Hmm,
    dfsm: &Dfsm,
    peek: Option<&PeekModel>,
    t_len: usize,
    policy: &GapPolicy,
    seed: u64,
) -> Result<GroundTruth> {
    policy.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    // hidden path and emissions; x0 is silent
    let mut hidden = Vec::with_capacity(t_len);
    let mut emitted = Vec::with_capacity(t_len);
    let mut x = sample_categorical(&mut rng, &hmm.pi);
    for _ in 0..t_len {
        x = sample_categorical(&mut rng, &hmm.a[x]);
        hidden.push(x);
        emitted.push(sample_categorical(&mut rng, &hmm.b[x]));
    }

    let mut monitor = Vec::with_capacity(t_len + 1);
    monitor.push(dfsm.initial);
    for &o in &emitted {
        monitor.push(dfsm.delta[*monitor.last().unwrap()][o]);
    }
    let verdict = dfsm.verdict[*monitor.last().unwrap()];

    // which event indices are observed
    let observed_mask: Vec<bool> = match policy {
        GapPolicy::None => vec![true; t_len],
        GapPolicy::DutyCycle { on_len, off_len } => (0..t_len)
            .map(|t| t % (on_len + off_len) < *on_len)
            .collect(),
        GapPolicy::Bernoulli { p_off, .. } => {
            (0..t_len).map(|_| rng.gen::<f64>() >= *p_off).collect()
        }
    };

    let mut observed = Vec::new();
    let mut declared_dists: Vec<GapDist> = Vec::new();
    let mut t = 0usize;
    while t < t_len {
        if observed_mask[t] {
            observed.push(TraceItem::event(hmm.alphabet.symbol(emitted[t])));
            t += 1;
            continue;
        }
        let start = t;
        while t < t_len && !observed_mask[t] {
            t += 1;
        }
        let window = t - start;
        let dist = match policy {
            GapPolicy::DutyCycle { .. } => {
                let dist = GapDist::point(format!("len{window}"), window as u32);
                if !declared_dists.iter().any(|d| d.id == dist.id) {
                    declared_dists.push(dist.clone());
                }
                dist
            }
            GapPolicy::Bernoulli { dist, .. } => {
                if !declared_dists.iter().any(|d| d.id == dist.id) {
                    declared_dists.push(dist.clone());
                }
                dist.clone()
            }
            GapPolicy::None => unreachable!("no gaps under GapPolicy::None"),
        };
        observed.push(TraceItem::gap(&dist.id));
        if let Some(peek) = peek {
            // peek at the hidden state that ends the gap
            let x_end = hidden[t - 1];
            let v = sample_categorical(&mut rng, &peek.c[x_end]);
            observed.push(TraceItem::peek(&peek.values[v]));
        }
    }

    Ok(GroundTruth {
        hidden,
        emitted,
        monitor,
        verdict,
        observed,
        declared_dists,
    })
}

/// Merge the distributions a simulation declared into a copy of the bundle,
/// so the emitted trace can be run against it. An existing distribution with
/// the same id must be identical.
pub fn merge_declared_dists(bundle: &ModelBundle, declared: &[GapDist]) -> Result<ModelBundle> {
    let mut out = bundle.clone();
    for dist in declared {
        match out.gap_dist(&dist.id) {
            Some(existing) if existing == dist => {}
            Some(_) => {
                return Err(Error::InvalidArgument(format!(
                    "bundle already declares a different gap distribution {:?}",
                    dist.id
                )))
            }
            None => out.gap_dists.push(dist.clone()),
        }
    }
    Ok(out)
}

fn trace_gap_dists<'a>(bundle: &'a ModelBundle, trace: &[TraceItem]) -> Result<Vec<&'a GapDist>> {
    trace
        .iter()
        .filter_map(|item| match item {
            TraceItem::Gap(id) => Some(
                bundle
                    .gap_dist(id)
                    .ok_or_else(|| Error::UnknownLabel(format!("gap distribution {id:?}"))),
            ),
            _ => None,
        })
        .collect()
}

/// Number of (length, symbol sequence) assignments the oracle would
/// enumerate for this trace.
pub fn filling_count(bundle: &ModelBundle, trace: &[TraceItem]) -> Result<u128> {
    let k = bundle.hmm.alphabet.len() as u128;
    let mut total: u128 = 1;
    for gap in trace_gap_dists(bundle, trace)? {
        let per_gap: u128 = gap
            .mass
            .iter()
            .map(|&(len, _)| k.checked_pow(len).unwrap_or(u128::MAX))
            .fold(0u128, |acc, v| acc.saturating_add(v));
        total = total.saturating_mul(per_gap);
    }
    Ok(total)
}

/// Exhaustive posterior: enumerate every assignment of (length, symbols) to
/// every gap, weight each completed trace by gap-length mass times its
/// hidden-path probability (plain forward recurrence) times peek factors,
/// and accumulate the joint (hidden, monitor) distribution at trace end.
pub fn brute_force_posterior(
    bundle: &ModelBundle,
    trace: &[TraceItem],
    budget: u64,
) -> Result<BeliefState> {
    let hmm = &bundle.hmm;
    let dfsm = bundle.dfsm()?;
    let needed = filling_count(bundle, trace)?;
    if needed > budget as u128 {
        return Err(Error::BudgetExceeded {
            needed,
            budget,
        });
    }

    enum Step {
        Emit(usize),
        PeekFactor(usize),
    }

    // recursively expand gaps into concrete steps, then score each completion
    fn expand(
        bundle: &ModelBundle,
        hmm: &Hmm,
        dfsm: &Dfsm,
        trace: &[TraceItem],
        steps: &mut Vec<Step>,
        weight: f64,
        out: &mut BeliefState,
    ) -> Result<()> {
        let Some((item, rest)) = trace.split_first() else {
            // score this completion with the hidden-only forward pass
            let n = hmm.n();
            let mut alpha = hmm.pi.clone();
            let mut m = dfsm.initial;
            for step in steps.iter() {
                match *step {
                    Step::Emit(o) => {
                        let mut next = vec![0.0; n];
                        for x in 0..n {
                            let mass = alpha[x];
                            if mass == 0.0 {
                                continue;
                            }
                            for (x2, slot) in next.iter_mut().enumerate() {
                                *slot += mass * hmm.a[x][x2];
                            }
                        }
                        for (x2, slot) in next.iter_mut().enumerate() {
                            *slot *= hmm.b[x2][o];
                        }
                        alpha = next;
                        m = dfsm.delta[m][o];
                    }
                    Step::PeekFactor(v) => {
                        let peek = bundle.peek.as_ref().expect("peek resolved earlier");
                        for (x, slot) in alpha.iter_mut().enumerate() {
                            *slot *= peek.c[x][v];
                        }
                    }
                }
            }
            for (x, &mass) in alpha.iter().enumerate() {
                out.add(x, m, weight * mass);
            }
            return Ok(());
        };

        match item {
            TraceItem::Event(sym) => {
                let o = hmm
                    .alphabet
                    .index_of(sym)
                    .ok_or_else(|| Error::UnknownLabel(format!("event symbol {sym:?}")))?;
                steps.push(Step::Emit(o));
                expand(bundle, hmm, dfsm, rest, steps, weight, out)?;
                steps.pop();
            }
            TraceItem::Peek(value) => {
                let peek = bundle
                    .peek
                    .as_ref()
                    .ok_or_else(|| Error::UnknownLabel(format!("peek {value:?} (model has no peek channel)")))?;
                let v = peek
                    .value_index(value)
                    .ok_or_else(|| Error::UnknownLabel(format!("peek value {value:?}")))?;
                steps.push(Step::PeekFactor(v));
                expand(bundle, hmm, dfsm, rest, steps, weight, out)?;
                steps.pop();
            }
            TraceItem::Gap(id) => {
                let gap = bundle
                    .gap_dist(id)
                    .ok_or_else(|| Error::UnknownLabel(format!("gap distribution {id:?}")))?
                    .clone();
                let k = hmm.alphabet.len();
                for &(len, prob) in &gap.mass {
                    // every symbol sequence of this length
                    let mut fill = vec![0usize; len as usize];
                    loop {
                        for &o in &fill {
                            steps.push(Step::Emit(o));
                        }
                        expand(bundle, hmm, dfsm, rest, steps, weight * prob, out)?;
                        for _ in 0..len {
                            steps.pop();
                        }
                        // odometer increment
                        let mut pos = fill.len();
                        loop {
                            if pos == 0 {
                                break;
                            }
                            pos -= 1;
                            fill[pos] += 1;
                            if fill[pos] < k {
                                break;
                            }
                            fill[pos] = 0;
                        }
                        if fill.iter().all(|&o| o == 0) {
                            break;
                        }
                    }
                }
            }
        }
        Ok(())
    }

    let mut out = BeliefState::zeros(hmm.n(), dfsm.q());
    let mut steps = Vec::new();
    expand(bundle, hmm, dfsm, trace, &mut steps, 1.0, &mut out)?;
    let total = out.total();
    if total <= 0.0 {
        return Err(Error::ImpossibleObservation(
            "trace has probability 0 under the model".into(),
        ));
    }
    out.scale(1.0 / total);
    Ok(out)
}

/// One bin of a reliability table.
#[derive(Debug, Clone, Serialize)]
pub struct CalibrationBin {
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
    pub mean_predicted: f64,
    pub empirical_frequency: f64,
}

/// Accuracy metrics over a set of predicted verdict distributions.
#[derive(Debug, Clone, Serialize)]
pub struct Metrics {
    /// Mean over cases of the squared error between the predicted verdict
    /// distribution and the realized verdict indicator.
    pub brier: f64,
    /// Reliability table over all (case, verdict-class) pairs, 10 bins.
    pub calibration: Vec<CalibrationBin>,
    /// Root-mean-square difference to a reference estimator's predictions,
    /// when one was supplied.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rmse_vs_reference: Option<f64>,
}

/// Score predictions against realized verdicts, optionally also against a
/// reference estimator's predictions for the same cases.
pub fn score(
    predictions: &[VerdictProbs],
    truths: &[Verdict],
    reference: Option<&[VerdictProbs]>,
) -> Result<Metrics> {
    if predictions.len() != truths.len() {
        return Err(Error::InvalidArgument(format!(
            "{} predictions vs {} truths",
            predictions.len(),
            truths.len()
        )));
    }
    if let Some(r) = reference {
        if r.len() != predictions.len() {
            return Err(Error::InvalidArgument(format!(
                "{} reference predictions vs {} predictions",
                r.len(),
                predictions.len()
            )));
        }
    }
    let labels = [Verdict::Accepting, Verdict::Pending, Verdict::Violated];

    let mut brier = 0.0;
    for (pred, &truth) in predictions.iter().zip(truths) {
        for label in labels {
            let target = if truth == label { 1.0 } else { 0.0 };
            brier += (pred.get(label) - target).powi(2);
        }
    }
    if !predictions.is_empty() {
        brier /= predictions.len() as f64;
    }

    let mut bins: Vec<CalibrationBin> = (0..10)
        .map(|i| CalibrationBin {
            lo: i as f64 / 10.0,
            hi: (i + 1) as f64 / 10.0,
            count: 0,
            mean_predicted: 0.0,
            empirical_frequency: 0.0,
        })
        .collect();
    for (pred, &truth) in predictions.iter().zip(truths) {
        for label in labels {
            let p = pred.get(label);
            let idx = ((p * 10.0) as usize).min(9);
            let bin = &mut bins[idx];
            bin.count += 1;
            bin.mean_predicted += p;
            if truth == label {
                bin.empirical_frequency += 1.0;
            }
        }
    }
    for bin in &mut bins {
        if bin.count > 0 {
            bin.mean_predicted /= bin.count as f64;
            bin.empirical_frequency /= bin.count as f64;
        }
    }

    let rmse_vs_reference = reference.map(|refs| {
        if predictions.is_empty() {
            return 0.0;
        }
        let mut acc = 0.0;
        let mut count = 0usize;
        for (pred, r) in predictions.iter().zip(refs) {
            for label in labels {
                acc += (pred.get(label) - r.get(label)).powi(2);
                count += 1;
            }
        }
        (acc / count as f64).sqrt()
    });

    Ok(Metrics {
        brier,
        calibration: bins,
        rmse_vs_reference,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exact;
    use crate::model::run_dfsm;
    use crate::report::OnImpossible;
    use crate::testutil::{m1_bundle, m1_four_bundle};

    #[test]
    fn simulate_none_policy_reports_all_events() {
        let bundle = m1_bundle();
        let truth = simulate(
            &bundle.hmm,
            bundle.dfsm().unwrap(),
            None,
            16,
            &GapPolicy::None,
            5,
        )
        .unwrap();
        assert_eq!(truth.observed.len(), 16);
        assert!(truth
            .observed
            .iter()
            .all(|item| matches!(item, TraceItem::Event(_))));
        assert!(truth.declared_dists.is_empty());
    }

    #[test]
    fn simulate_duty_cycle_declares_true_window_lengths() {
        let bundle = m1_bundle();
        let truth = simulate(
            &bundle.hmm,
            bundle.dfsm().unwrap(),
            None,
            8,
            &GapPolicy::DutyCycle {
                on_len: 2,
                off_len: 2,
            },
            5,
        )
        .unwrap();
        let pattern: Vec<&str> = truth
            .observed
            .iter()
            .map(|item| match item {
                TraceItem::Event(_) => "evt",
                TraceItem::Gap(_) => "gap",
                TraceItem::Peek(_) => "peek",
            })
            .collect();
        assert_eq!(pattern, vec!["evt", "evt", "gap", "evt", "evt", "gap"]);
        assert_eq!(truth.declared_dists.len(), 1);
        assert_eq!(truth.declared_dists[0], GapDist::point("len2", 2));
    }

    #[test]
    fn simulate_is_deterministic_and_replayable() {
        let bundle = m1_four_bundle();
        let policy = GapPolicy::Bernoulli {
            p_off: 0.3,
            dist: GapDist::uniform("g1", 1, 3).unwrap(),
        };
        let a = simulate(&bundle.hmm, bundle.dfsm().unwrap(), None, 32, &policy, 9).unwrap();
        let b = simulate(&bundle.hmm, bundle.dfsm().unwrap(), None, 32, &policy, 9).unwrap();
        assert_eq!(a.observed, b.observed);
        assert_eq!(a.hidden, b.hidden);

        // replay invariant: the complete event sequence reproduces the
        // monitor path and verdict
        let dfsm = bundle.dfsm().unwrap();
        let mut m = dfsm.initial;
        for (t, &o) in a.emitted.iter().enumerate() {
            assert_eq!(a.monitor[t], m);
            m = dfsm.delta[m][o];
        }
        assert_eq!(*a.monitor.last().unwrap(), m);
        assert_eq!(run_dfsm(dfsm, &a.emitted).1, a.verdict);
    }

    #[test]
    fn oracle_matches_exact_on_gap_free_traces() {
        let bundle = m1_four_bundle();
        let trace: Vec<TraceItem> = "a b b c a d b c"
            .split_whitespace()
            .map(TraceItem::event)
            .collect();
        let oracle = brute_force_posterior(&bundle, &trace, 10_000).unwrap();
        let run = exact::run(&bundle, &trace, OnImpossible::Error).unwrap();
        assert!(oracle.l1_distance(&run.final_belief) < 1e-12);
    }

    #[test]
    fn oracle_hand_weighted_single_gap() {
        let mut bundle = m1_bundle();
        bundle.peek = None;
        let trace = vec![TraceItem::event("a"), TraceItem::gap("g1")];
        let oracle = brute_force_posterior(&bundle, &trace, 10_000).unwrap();
        assert!((oracle.get(0, 1) - 0.5).abs() < 1e-12);
        assert!((oracle.get(1, 0) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn oracle_budget_is_enforced() {
        let mut bundle = m1_four_bundle();
        bundle.gap_dists = vec![GapDist::point("big", 10)];
        let trace = vec![TraceItem::gap("big")];
        let err = brute_force_posterior(&bundle, &trace, 1000).unwrap_err();
        assert!(matches!(err, Error::BudgetExceeded { .. }), "got {err:?}");
    }

    #[test]
    fn brier_extremes() {
        let confident = VerdictProbs {
            accepting: 1.0,
            pending: 0.0,
            violated: 0.0,
        };
        let metrics = score(&[confident], &[Verdict::Accepting], None).unwrap();
        assert_eq!(metrics.brier, 0.0);

        let uniform2 = VerdictProbs {
            accepting: 0.5,
            pending: 0.5,
            violated: 0.0,
        };
        let metrics = score(
            &[uniform2, uniform2],
            &[Verdict::Accepting, Verdict::Pending],
            None,
        )
        .unwrap();
        assert!((metrics.brier - 0.5).abs() < 1e-12);
    }
}
