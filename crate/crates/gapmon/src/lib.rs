//! Runtime verification of temporal properties over event traces that
//! contain monitoring gaps.
//!
//! A property monitor (a DFSM with verdict-labeled states) normally consumes
//! every program event. When monitoring is switched off to bound overhead,
//! stretches of events go unobserved and the monitor verdict becomes
//! uncertain. This crate quantifies that uncertainty: a hidden-Markov model
//! of the program fills in the gaps and each estimator maintains a joint
//! probability distribution over (program state, monitor state) pairs.
//!
//! Three estimators share one model:
//!
//! - [`exact`]: the forward algorithm over the joint state, extended with
//!   gap and peek updates; the reference-precision engine.
//! - [`table`]: precomputes the reachable belief graph with epsilon-approximate
//!   node merging, so each runtime step is a table lookup.
//! - [`particle`]: a sequential-importance-resampling particle filter with
//!   observation-conditioned proposals and deferred resampling; accuracy,
//!   memory, and speed are tuned through the particle count.
//!
//! [`learn`] fits the hidden-Markov model from complete traces (Baum-Welch),
//! and [`sim`] generates ground-truth traces with configurable gap policies
//! plus a brute-force posterior oracle used to validate every estimator.

mod error;
mod rng;

pub mod bench;
pub mod cli;
pub mod exact;
pub mod learn;
pub mod model;
pub mod particle;
pub mod report;
pub mod sim;
pub mod table;

pub use error::{Error, Result};

#[cfg(test)]
pub(crate) mod testutil {
    //! Shared unit-test fixtures. `m1`/`d1` is the 2-state, 2-symbol model
    //! used throughout: state x0 always emits `a`, state x1 always emits `c`,
    //! the monitor tracks the obligation "after `a`, eventually `c`".

    use crate::model::{Alphabet, Dfsm, GapDist, Hmm, ModelBundle, PeekModel, Verdict};

    pub fn m1_d1() -> (Hmm, Dfsm) {
        let alphabet = Alphabet::from_strs(&["a", "c"]).unwrap();
        let hmm = Hmm {
            pi: vec![1.0, 0.0],
            a: vec![vec![0.5, 0.5], vec![0.5, 0.5]],
            b: vec![vec![1.0, 0.0], vec![0.0, 1.0]],
            alphabet: alphabet.clone(),
        };
        let dfsm = Dfsm {
            states: vec!["s0".into(), "s1".into()],
            alphabet,
            // a opens an obligation, c discharges it, everything else loops
            delta: vec![vec![1, 0], vec![1, 0]],
            initial: 0,
            verdict: vec![Verdict::Accepting, Verdict::Pending],
            absorbing_violations: false,
        };
        (hmm, dfsm)
    }

    pub fn m1_peek() -> PeekModel {
        PeekModel {
            values: vec!["p0".into(), "p1".into()],
            c: vec![vec![1.0, 0.0], vec![0.0, 1.0]],
        }
    }

    /// M1/D1 plus the identity peek channel and two gap distributions:
    /// `g1` = exactly one missed event, `gu` = uniform over one or two.
    pub fn m1_bundle() -> ModelBundle {
        let (hmm, dfsm) = m1_d1();
        ModelBundle {
            hmm,
            dfsm: Some(dfsm),
            peek: Some(m1_peek()),
            gap_dists: vec![
                GapDist::point("g1", 1),
                GapDist::uniform("gu", 1, 2).unwrap(),
            ],
        }
    }

    /// The four-symbol monitor for "always a implies finally c" over
    /// {a, b, c, d}: b and d are irrelevant self-loop symbols.
    pub fn d1_four_symbols() -> Dfsm {
        let alphabet = Alphabet::from_strs(&["a", "b", "c", "d"]).unwrap();
        Dfsm {
            states: vec!["s0".into(), "s1".into()],
            alphabet,
            delta: vec![vec![1, 0, 0, 0], vec![1, 1, 0, 1]],
            initial: 0,
            verdict: vec![Verdict::Accepting, Verdict::Pending],
            absorbing_violations: false,
        }
    }

    /// Four-symbol variant of M1: two hidden states that mostly emit `a`
    /// and `c` with small mass on `b` and `d`.
    pub fn m1_four_bundle() -> ModelBundle {
        let dfsm = d1_four_symbols();
        let hmm = Hmm {
            pi: vec![1.0, 0.0],
            a: vec![vec![0.5, 0.5], vec![0.5, 0.5]],
            b: vec![
                vec![0.85, 0.05, 0.05, 0.05],
                vec![0.05, 0.05, 0.85, 0.05],
            ],
            alphabet: dfsm.alphabet.clone(),
        };
        ModelBundle {
            hmm,
            dfsm: Some(dfsm),
            peek: None,
            gap_dists: vec![GapDist::uniform("g1", 1, 3).unwrap()],
        }
    }
}
