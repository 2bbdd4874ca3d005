//! Per-step run records shared by the three estimation engines, serialized
//! as JSON lines by the CLI.

use serde::Serialize;

use crate::model::{TraceItem, VerdictProbs};

/// What to do when an observed item has probability zero under the model.
///
/// The library default is [`OnImpossible::Error`]: a zero-probability event
/// means the model is wrong, and hiding that corrupts results. The reset
/// mode replaces the hidden-state belief with a uniform distribution while
/// still stepping the monitor, and skips the step's likelihood factor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum OnImpossible {
    #[default]
    Error,
    UniformReset,
}

/// One record per trace item.
#[derive(Debug, Clone, Serialize)]
pub struct StepRecord {
    pub index: usize,
    pub item: TraceItem,
    pub verdicts: VerdictProbs,
    /// Cumulative log-likelihood (nats) of the evidence-bearing items seen so
    /// far; absent for the table engine, which stores no likelihoods.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub log_likelihood: Option<f64>,
    /// Table node reached after this item (table engine only).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub node: Option<usize>,
    /// Effective sample size after this item (particle engine only).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ess: Option<f64>,
    /// Whether this item triggered a resampling pass (particle engine only).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub resampled: Option<bool>,
    /// Whether an impossible observation was absorbed by a uniform reset.
    #[serde(skip_serializing_if = "std::ops::Not::not")]
    pub reset: bool,
}

impl StepRecord {
    pub fn new(index: usize, item: TraceItem, verdicts: VerdictProbs) -> Self {
        StepRecord {
            index,
            item,
            verdicts,
            log_likelihood: None,
            node: None,
            ess: None,
            resampled: None,
            reset: false,
        }
    }
}

/// End-of-run summary. Timing is reported separately on stderr so that
/// standard output stays byte-identical across reruns.
#[derive(Debug, Clone, Serialize)]
pub struct RunSummary {
    pub steps: usize,
    pub verdicts: VerdictProbs,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub log_likelihood: Option<f64>,
    /// Impossible observations absorbed by uniform resets.
    #[serde(skip_serializing_if = "is_zero")]
    pub resets: usize,
}

fn is_zero(n: &usize) -> bool {
    *n == 0
}
