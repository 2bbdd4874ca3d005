//! Exact state estimation: the forward algorithm over the joint
//! (hidden state, monitor state) space, extended with gap and peek updates.
//!
//! This is the reference-precision engine. Each event multiplies the belief
//! through the transition matrix, weights by the emission probability of the
//! observed symbol, and moves monitor mass along the DFSM edge for that
//! symbol. A gap marginalizes over the unseen symbols instead, weighting
//! every DFSM edge by its emission probability; a peek reweights hidden
//! states by the peek channel. Beliefs are renormalized after every
//! likelihood-bearing update.

use crate::model::{
    verdict_probabilities, BeliefState, Dfsm, GapDist, Hmm, ModelBundle, PeekModel, TraceItem,
};
use crate::report::{OnImpossible, StepRecord};
use crate::{Error, Result};

/// Belief at time 0: the silent initial distribution paired with the
/// monitor's initial state.
pub fn init_belief(hmm: &Hmm, dfsm: &Dfsm) -> BeliefState {
    let mut belief = BeliefState::zeros(hmm.n(), dfsm.q());
    for (x, &p) in hmm.pi.iter().enumerate() {
        belief.set(x, dfsm.initial, p);
    }
    belief
}

/// Condition the belief on one observed event. Returns the normalized
/// posterior and the step likelihood `Pr(o | belief)`.
pub fn observe_event(
    hmm: &Hmm,
    dfsm: &Dfsm,
    belief: &BeliefState,
    o: usize,
) -> Result<(BeliefState, f64)> {
    let n = hmm.n();
    let q = dfsm.q();
    let mut next = BeliefState::zeros(n, q);
    for m in 0..q {
        let m2 = dfsm.delta[m][o];
        for x in 0..n {
            let mass = belief.get(x, m);
            if mass == 0.0 {
                continue;
            }
            let row = &hmm.a[x];
            for x2 in 0..n {
                let w = mass * row[x2] * hmm.b[x2][o];
                if w != 0.0 {
                    next.add(x2, m2, w);
                }
            }
        }
    }
    let likelihood = next.total();
    if likelihood <= 0.0 {
        return Err(Error::ImpossibleObservation(format!(
            "event {:?} has probability 0 under the model",
            hmm.alphabet.symbol(o)
        )));
    }
    next.scale(1.0 / likelihood);
    Ok((next, likelihood))
}

/// Advance the belief across one missed observation, marginalizing over the
/// unseen symbol. Mass-preserving; no normalization is applied.
pub fn gap_step(hmm: &Hmm, dfsm: &Dfsm, belief: &BeliefState) -> BeliefState {
    let n = hmm.n();
    let q = dfsm.q();
    let k = hmm.alphabet.len();
    let mut next = BeliefState::zeros(n, q);
    let mut hidden = vec![0.0; n];
    for m in 0..q {
        // hidden[x2] = sum_x belief(x, m) * A[x][x2]
        hidden.iter_mut().for_each(|h| *h = 0.0);
        let mut any = false;
        for x in 0..n {
            let mass = belief.get(x, m);
            if mass == 0.0 {
                continue;
            }
            any = true;
            let row = &hmm.a[x];
            for x2 in 0..n {
                hidden[x2] += mass * row[x2];
            }
        }
        if !any {
            continue;
        }
        for o in 0..k {
            let m2 = dfsm.delta[m][o];
            for x2 in 0..n {
                let w = hidden[x2] * hmm.b[x2][o];
                if w != 0.0 {
                    next.add(x2, m2, w);
                }
            }
        }
    }
    next
}

/// Apply a whole gap: the mixture of `gap_step^len` over the gap length
/// distribution. Gaps carry no evidence, so there is no likelihood factor.
pub fn observe_gap(hmm: &Hmm, dfsm: &Dfsm, belief: &BeliefState, gap: &GapDist) -> BeliefState {
    let mut out = BeliefState::zeros(belief.n(), belief.q());
    let mut current = belief.clone();
    let mut reached = 0u32;
    for &(len, prob) in &gap.mass {
        while reached < len {
            current = gap_step(hmm, dfsm, &current);
            reached += 1;
        }
        out.add_scaled(&current, prob);
    }
    out
}

/// Condition the belief on a peek value. Returns the normalized posterior
/// and the step likelihood.
pub fn observe_peek(
    peek: &PeekModel,
    belief: &BeliefState,
    v: usize,
) -> Result<(BeliefState, f64)> {
    let mut next = belief.clone();
    for x in 0..belief.n() {
        let factor = peek.c[x][v];
        for m in 0..belief.q() {
            next.set(x, m, belief.get(x, m) * factor);
        }
    }
    let likelihood = next.total();
    if likelihood <= 0.0 {
        return Err(Error::ImpossibleObservation(format!(
            "peek {:?} has probability 0 under the model",
            peek.values[v]
        )));
    }
    next.scale(1.0 / likelihood);
    Ok((next, likelihood))
}

/// Result of folding the exact estimator over a trace.
#[derive(Debug, Clone)]
pub struct ExactRun {
    pub steps: Vec<StepRecord>,
    pub final_belief: BeliefState,
    /// Cumulative log-likelihood (nats) over event and peek items.
    pub log_likelihood: f64,
    /// Impossible observations absorbed by uniform resets.
    pub resets: usize,
}

fn uniform_reset_event(dfsm: &Dfsm, belief: &BeliefState, o: usize) -> BeliefState {
    let n = belief.n();
    let mut next = BeliefState::zeros(n, belief.q());
    let monitor = belief.monitor_marginal();
    for (m, &mass) in monitor.iter().enumerate() {
        if mass == 0.0 {
            continue;
        }
        let m2 = dfsm.delta[m][o];
        for x in 0..n {
            next.add(x, m2, mass / n as f64);
        }
    }
    next
}

fn uniform_reset_peek(belief: &BeliefState) -> BeliefState {
    let n = belief.n();
    let mut next = BeliefState::zeros(n, belief.q());
    let monitor = belief.monitor_marginal();
    for (m, &mass) in monitor.iter().enumerate() {
        for x in 0..n {
            next.set(x, m, mass / n as f64);
        }
    }
    next
}

/// Fold the trace through the exact estimator, producing one record per
/// item. Gap items contribute no likelihood factor.
pub fn run(
    bundle: &ModelBundle,
    trace: &[TraceItem],
    on_impossible: OnImpossible,
) -> Result<ExactRun> {
    let hmm = &bundle.hmm;
    let dfsm = bundle.dfsm()?;
    let mut belief = init_belief(hmm, dfsm);
    let mut log_likelihood = 0.0;
    let mut resets = 0usize;
    let mut steps = Vec::with_capacity(trace.len());

    for (index, item) in trace.iter().enumerate() {
        let mut reset = false;
        match item {
            TraceItem::Event(sym) => {
                let o = hmm
                    .alphabet
                    .index_of(sym)
                    .ok_or_else(|| Error::UnknownLabel(format!("event symbol {sym:?}")))?;
                match observe_event(hmm, dfsm, &belief, o) {
                    Ok((next, likelihood)) => {
                        belief = next;
                        log_likelihood += likelihood.ln();
                    }
                    Err(Error::ImpossibleObservation(_)) if on_impossible == OnImpossible::UniformReset => {
                        belief = uniform_reset_event(dfsm, &belief, o);
                        resets += 1;
                        reset = true;
                    }
                    Err(e) => return Err(e),
                }
            }
            TraceItem::Gap(id) => {
                let gap = bundle
                    .gap_dist(id)
                    .ok_or_else(|| Error::UnknownLabel(format!("gap distribution {id:?}")))?;
                belief = observe_gap(hmm, dfsm, &belief, gap);
            }
            TraceItem::Peek(value) => {
                let peek = bundle
                    .peek
                    .as_ref()
                    .ok_or_else(|| Error::UnknownLabel(format!("peek {value:?} (model has no peek channel)")))?;
                let v = peek
                    .value_index(value)
                    .ok_or_else(|| Error::UnknownLabel(format!("peek value {value:?}")))?;
                match observe_peek(peek, &belief, v) {
                    Ok((next, likelihood)) => {
                        belief = next;
                        log_likelihood += likelihood.ln();
                    }
                    Err(Error::ImpossibleObservation(_)) if on_impossible == OnImpossible::UniformReset => {
                        belief = uniform_reset_peek(&belief);
                        resets += 1;
                        reset = true;
                    }
                    Err(e) => return Err(e),
                }
            }
        }
        let mut record = StepRecord::new(index, item.clone(), verdict_probabilities(&belief, dfsm));
        record.log_likelihood = Some(log_likelihood);
        record.reset = reset;
        steps.push(record);
    }

    Ok(ExactRun {
        steps,
        final_belief: belief,
        log_likelihood,
        resets,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{verdict_probabilities, GapDist};
    use crate::testutil::{m1_bundle, m1_d1, m1_peek};

    fn belief(rows: &[Vec<f64>]) -> BeliefState {
        BeliefState::from_rows(rows).unwrap()
    }

    #[test]
    fn init_belief_is_pi_at_the_initial_monitor_state() {
        let (hmm, dfsm) = m1_d1();
        let b = init_belief(&hmm, &dfsm);
        assert_eq!(b.get(0, 0), 1.0);
        assert_eq!(b.total(), 1.0);

        let mut uniform = hmm.clone();
        uniform.pi = vec![0.5, 0.5];
        let b = init_belief(&uniform, &dfsm);
        assert_eq!(b.get(0, 0), 0.5);
        assert_eq!(b.get(1, 0), 0.5);
        assert!((b.total() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn observe_event_conditions_and_reports_likelihood() {
        let (hmm, dfsm) = m1_d1();
        let init = init_belief(&hmm, &dfsm);

        // only x0 can emit a; the monitor opens an obligation
        let (b, l) = observe_event(&hmm, &dfsm, &init, 0).unwrap();
        assert_eq!(b.get(0, 1), 1.0);
        assert!((l - 0.5).abs() < 1e-15);

        // symmetric case for c
        let (b, l) = observe_event(&hmm, &dfsm, &init, 1).unwrap();
        assert_eq!(b.get(1, 0), 1.0);
        assert!((l - 0.5).abs() < 1e-15);
    }

    #[test]
    fn observe_event_rejects_zero_probability_symbols() {
        let (mut hmm, dfsm) = m1_d1();
        hmm.b = vec![vec![1.0, 0.0], vec![1.0, 0.0]]; // nobody emits c
        let init = init_belief(&hmm, &dfsm);
        let err = observe_event(&hmm, &dfsm, &init, 1).unwrap_err();
        assert!(matches!(err, Error::ImpossibleObservation(_)));
    }

    #[test]
    fn gap_step_spreads_mass_and_fixes_the_m1_point() {
        let (hmm, dfsm) = m1_d1();

        let b = gap_step(&hmm, &dfsm, &belief(&[vec![0.0, 1.0], vec![0.0, 0.0]]));
        assert!((b.get(0, 1) - 0.5).abs() < 1e-15);
        assert!((b.get(1, 0) - 0.5).abs() < 1e-15);

        // {(x0,s1): 0.5, (x1,s0): 0.5} is a fixed point
        let fixed = belief(&[vec![0.0, 0.5], vec![0.5, 0.0]]);
        let b = gap_step(&hmm, &dfsm, &fixed);
        assert!(b.l1_distance(&fixed) < 1e-15);
    }

    #[test]
    fn gap_step_preserves_mass() {
        let (hmm, dfsm) = m1_d1();
        let b = belief(&[vec![0.125, 0.25], vec![0.5, 0.125]]);
        let out = gap_step(&hmm, &dfsm, &b);
        assert!((out.total() - b.total()).abs() < 1e-12);
    }

    #[test]
    fn observe_gap_point_masses() {
        let (hmm, dfsm) = m1_d1();
        let b = belief(&[vec![0.0, 1.0], vec![0.0, 0.0]]);

        let unchanged = observe_gap(&hmm, &dfsm, &b, &GapDist::point("z", 0));
        assert!(unchanged.l1_distance(&b) < 1e-15);

        let one = observe_gap(&hmm, &dfsm, &b, &GapDist::point("g1", 1));
        assert!(one.l1_distance(&gap_step(&hmm, &dfsm, &b)) < 1e-15);

        // both lengths of a uniform {1,2} gap land on the fixed point
        let mix = observe_gap(&hmm, &dfsm, &b, &GapDist::uniform("gu", 1, 2).unwrap());
        let fixed = belief(&[vec![0.0, 0.5], vec![0.5, 0.0]]);
        assert!(mix.l1_distance(&fixed) < 1e-12);
    }

    #[test]
    fn observe_peek_refocuses_the_belief() {
        let peek = m1_peek();
        let spread = belief(&[vec![0.0, 0.5], vec![0.5, 0.0]]);
        let (b, l) = observe_peek(&peek, &spread, 1).unwrap();
        assert_eq!(b.get(1, 0), 1.0);
        assert!((l - 0.5).abs() < 1e-15);
    }

    #[test]
    fn observe_peek_uninformative_and_impossible_cases() {
        let flat = PeekModel {
            values: vec!["p0".into(), "p1".into()],
            c: vec![vec![0.5, 0.5], vec![0.5, 0.5]],
        };
        let spread = belief(&[vec![0.0, 0.5], vec![0.5, 0.0]]);
        let (b, _) = observe_peek(&flat, &spread, 0).unwrap();
        assert!(b.l1_distance(&spread) < 1e-15);

        let zero = PeekModel {
            values: vec!["p0".into(), "p1".into()],
            c: vec![vec![1.0, 0.0], vec![1.0, 0.0]],
        };
        let err = observe_peek(&zero, &spread, 1).unwrap_err();
        assert!(matches!(err, Error::ImpossibleObservation(_)));
    }

    #[test]
    fn run_composes_event_gap_peek() {
        let bundle = m1_bundle();
        let trace = vec![
            TraceItem::event("a"),
            TraceItem::gap("g1"),
            TraceItem::peek("p1"),
        ];
        let out = run(&bundle, &trace, OnImpossible::Error).unwrap();
        assert_eq!(out.final_belief.get(1, 0), 1.0);
        let verdicts = verdict_probabilities(&out.final_belief, bundle.dfsm().unwrap());
        assert_eq!(verdicts.accepting, 1.0);
    }

    #[test]
    fn run_empty_trace_reports_initial_verdict() {
        let bundle = m1_bundle();
        let out = run(&bundle, &[], OnImpossible::Error).unwrap();
        assert!(out.steps.is_empty());
        let verdicts = verdict_probabilities(&out.final_belief, bundle.dfsm().unwrap());
        assert_eq!(verdicts.accepting, 1.0);
        assert_eq!(out.log_likelihood, 0.0);
    }

    #[test]
    fn run_rejects_unknown_labels() {
        let bundle = m1_bundle();
        let err = run(&bundle, &[TraceItem::gap("g9")], OnImpossible::Error).unwrap_err();
        assert!(matches!(err, Error::UnknownLabel(_)));
        let err = run(&bundle, &[TraceItem::event("z")], OnImpossible::Error).unwrap_err();
        assert!(matches!(err, Error::UnknownLabel(_)));
    }

    #[test]
    fn uniform_reset_steps_the_monitor_and_counts_resets() {
        let mut bundle = m1_bundle();
        bundle.hmm.b = vec![vec![1.0, 0.0], vec![1.0, 0.0]]; // c is impossible
        let trace = vec![TraceItem::event("c")];
        let out = run(&bundle, &trace, OnImpossible::UniformReset).unwrap();
        assert_eq!(out.resets, 1);
        assert!(out.steps[0].reset);
        // monitor stays at s0 (c self-loops), hidden is uniform
        assert!((out.final_belief.get(0, 0) - 0.5).abs() < 1e-15);
        assert!((out.final_belief.get(1, 0) - 0.5).abs() < 1e-15);
    }
}
