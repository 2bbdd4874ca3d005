//! Baum-Welch learning of the hidden-Markov program model from complete
//! (gap-free) traces, plus trace scoring by log-likelihood.
//!
//! The learner follows the crate-wide emission convention: symbols are
//! emitted by the destination state of each transition and `pi` describes a
//! silent time-0 state, so the first event is updated exactly like every
//! later one. A zero mask can pin transition or emission entries to exactly
//! 0, the hard version of "these entries are known to be near zero".
//! Forward/backward passes use per-step scaling to avoid underflow.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::model::{Alphabet, Hmm};
use crate::rng::dirichlet_row;
use crate::{Error, Result};

/// Boolean masks marking entries of `A` and `B` that are pinned to exactly 0.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ZeroMask {
    pub a: Vec<Vec<bool>>,
    pub b: Vec<Vec<bool>>,
}

/// Training configuration.
#[derive(Debug, Clone)]
pub struct LearnOptions {
    pub n_states: usize,
    pub max_iters: usize,
    /// Stop when one iteration improves total log-likelihood by less than
    /// this many nats.
    pub tol: f64,
    pub seed: u64,
    /// Independent seeded initializations; the best final log-likelihood
    /// wins, earlier restart winning ties.
    pub restarts: usize,
    pub zero_mask: Option<ZeroMask>,
}

impl LearnOptions {
    pub fn new(n_states: usize) -> Self {
        LearnOptions {
            n_states,
            max_iters: 500,
            tol: 1e-6,
            seed: 0,
            restarts: 5,
            zero_mask: None,
        }
    }
}

/// Output of [`baum_welch`].
#[derive(Debug, Clone)]
pub struct BaumWelchOutcome {
    pub hmm: Hmm,
    /// Total training log-likelihood of the returned parameters (nats).
    pub log_likelihood: f64,
    /// Per-iteration log-likelihood of the winning restart; non-decreasing.
    pub history: Vec<f64>,
    /// Rows that received zero expected counts and were reset to uniform.
    pub warnings: Vec<String>,
}

struct Params {
    pi: Vec<f64>,
    a: Vec<Vec<f64>>,
    b: Vec<Vec<f64>>,
}

struct Stats {
    log_likelihood: f64,
    pi: Vec<f64>,
    a: Vec<Vec<f64>>,
    b: Vec<Vec<f64>>,
}

fn validate_options(alphabet: &Alphabet, traces: &[Vec<usize>], opts: &LearnOptions) -> Result<()> {
    if opts.n_states == 0 {
        return Err(Error::InvalidArgument("n_states must be positive".into()));
    }
    if opts.max_iters == 0 || opts.restarts == 0 {
        return Err(Error::InvalidArgument("max_iters and restarts must be positive".into()));
    }
    if traces.is_empty() {
        return Err(Error::InvalidArgument("no training traces".into()));
    }
    for (i, trace) in traces.iter().enumerate() {
        if trace.is_empty() {
            return Err(Error::InvalidArgument(format!("training trace {i} is empty")));
        }
        if let Some(&bad) = trace.iter().find(|&&o| o >= alphabet.len()) {
            return Err(Error::InvalidArgument(format!(
                "training trace {i} uses symbol index {bad}, alphabet has {}",
                alphabet.len()
            )));
        }
    }
    if let Some(mask) = &opts.zero_mask {
        let n = opts.n_states;
        let k = alphabet.len();
        if mask.a.len() != n || mask.a.iter().any(|r| r.len() != n) {
            return Err(Error::InvalidArgument(format!("zero mask for A must be {n}x{n}")));
        }
        if mask.b.len() != n || mask.b.iter().any(|r| r.len() != k) {
            return Err(Error::InvalidArgument(format!("zero mask for B must be {n}x{k}")));
        }
        for (i, row) in mask.a.iter().enumerate() {
            if row.iter().all(|&m| m) {
                return Err(Error::InvalidArgument(format!("zero mask leaves A row {i} empty")));
            }
        }
        for (j, row) in mask.b.iter().enumerate() {
            if row.iter().all(|&m| m) {
                return Err(Error::InvalidArgument(format!("zero mask leaves B row {j} empty")));
            }
        }
    }
    Ok(())
}

fn init_params(rng: &mut ChaCha8Rng, n: usize, k: usize, mask: Option<&ZeroMask>) -> Params {
    Params {
        pi: dirichlet_row(rng, n, None),
        a: (0..n)
            .map(|i| dirichlet_row(rng, n, mask.map(|m| m.a[i].as_slice())))
            .collect(),
        b: (0..n)
            .map(|j| dirichlet_row(rng, k, mask.map(|m| m.b[j].as_slice())))
            .collect(),
    }
}

/// One scaled forward/backward sweep over every trace, accumulating expected
/// counts. Fails with `DegenerateInput` if some trace has probability 0
/// under the current parameters (a zero mask that forbids it).
fn e_step(params: &Params, traces: &[Vec<usize>]) -> Result<Stats> {
    let n = params.pi.len();
    let k = params.b[0].len();
    let mut stats = Stats {
        log_likelihood: 0.0,
        pi: vec![0.0; n],
        a: vec![vec![0.0; n]; n],
        b: vec![vec![0.0; k]; n],
    };

    for trace in traces {
        let t_len = trace.len();
        // scaled forward: alpha[t] for t = 1..=T, plus alpha[0] = pi
        let mut alphas: Vec<Vec<f64>> = Vec::with_capacity(t_len + 1);
        let mut scales: Vec<f64> = Vec::with_capacity(t_len);
        alphas.push(params.pi.clone());
        for (t, &o) in trace.iter().enumerate() {
            let prev = &alphas[t];
            let mut next = vec![0.0; n];
            for x in 0..n {
                let mass = prev[x];
                if mass == 0.0 {
                    continue;
                }
                let row = &params.a[x];
                for (x2, slot) in next.iter_mut().enumerate() {
                    *slot += mass * row[x2];
                }
            }
            for (x2, slot) in next.iter_mut().enumerate() {
                *slot *= params.b[x2][o];
            }
            let c: f64 = next.iter().sum();
            if c <= 0.0 {
                return Err(Error::DegenerateInput(format!(
                    "trace has probability 0 at position {t} under the zero mask"
                )));
            }
            next.iter_mut().for_each(|v| *v /= c);
            scales.push(c);
            alphas.push(next);
        }
        stats.log_likelihood += scales.iter().map(|c| c.ln()).sum::<f64>();

        // scaled backward: beta[t] for t = 0..=T
        let mut betas: Vec<Vec<f64>> = vec![vec![0.0; n]; t_len + 1];
        betas[t_len] = vec![1.0; n];
        for t in (0..t_len).rev() {
            let o = trace[t];
            let c = scales[t];
            let next = betas[t + 1].clone();
            let row_out = &mut betas[t];
            for x in 0..n {
                let mut acc = 0.0;
                let a_row = &params.a[x];
                for x2 in 0..n {
                    acc += a_row[x2] * params.b[x2][o] * next[x2];
                }
                row_out[x] = acc / c;
            }
        }

        // accumulate gamma and xi; time 0 is the silent pre-emission step
        for x in 0..n {
            stats.pi[x] += params.pi[x] * betas[0][x];
        }
        for t in 0..t_len {
            let o = trace[t];
            let alpha_t = &alphas[t];
            let beta_next = &betas[t + 1];
            let c = scales[t];
            for x in 0..n {
                let mass = alpha_t[x];
                if mass == 0.0 {
                    continue;
                }
                let a_row = &params.a[x];
                let xi_row = &mut stats.a[x];
                for x2 in 0..n {
                    xi_row[x2] += mass * a_row[x2] * params.b[x2][o] * beta_next[x2] / c;
                }
            }
            let alpha_t1 = &alphas[t + 1];
            let beta_t1 = &betas[t + 1];
            for x2 in 0..n {
                stats.b[x2][o] += alpha_t1[x2] * beta_t1[x2];
            }
        }
    }
    Ok(stats)
}

/// Normalize expected counts into new parameters. Rows with zero counts are
/// reset to uniform over unmasked entries and recorded as warnings.
fn m_step(stats: &Stats, mask: Option<&ZeroMask>, warnings: &mut Vec<String>) -> Params {
    let normalize = |counts: &[f64], row_mask: Option<&[bool]>, what: &str, warnings: &mut Vec<String>| {
        let mut row: Vec<f64> = counts
            .iter()
            .enumerate()
            .map(|(i, &v)| if row_mask.map(|m| m[i]).unwrap_or(false) { 0.0 } else { v })
            .collect();
        let total: f64 = row.iter().sum();
        if total > 0.0 {
            row.iter_mut().for_each(|v| *v /= total);
        } else {
            let free: Vec<usize> = (0..row.len())
                .filter(|&i| !row_mask.map(|m| m[i]).unwrap_or(false))
                .collect();
            let p = 1.0 / free.len() as f64;
            for &i in &free {
                row[i] = p;
            }
            warnings.push(format!("{what} received zero expected counts; reset to uniform"));
        }
        row
    };

    Params {
        pi: normalize(&stats.pi, None, "pi", warnings),
        a: stats
            .a
            .iter()
            .enumerate()
            .map(|(i, row)| normalize(row, mask.map(|m| m.a[i].as_slice()), &format!("A row {i}"), warnings))
            .collect(),
        b: stats
            .b
            .iter()
            .enumerate()
            .map(|(j, row)| normalize(row, mask.map(|m| m.b[j].as_slice()), &format!("B row {j}"), warnings))
            .collect(),
    }
}

fn total_log_likelihood(params: &Params, traces: &[Vec<usize>]) -> Result<f64> {
    let mut total = 0.0;
    for trace in traces {
        total += forward_log_likelihood(&params.pi, &params.a, &params.b, trace)?.0;
    }
    Ok(total)
}

/// Learn an HMM over `alphabet` from symbol-index traces. Returns the
/// restart with the highest final training log-likelihood.
pub fn baum_welch(
    alphabet: &Alphabet,
    traces: &[Vec<usize>],
    opts: &LearnOptions,
) -> Result<BaumWelchOutcome> {
    validate_options(alphabet, traces, opts)?;
    let n = opts.n_states;
    let k = alphabet.len();
    let mask = opts.zero_mask.as_ref();
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);

    let mut best: Option<BaumWelchOutcome> = None;
    for _restart in 0..opts.restarts {
        let mut params = init_params(&mut rng, n, k, mask);
        let mut warnings = Vec::new();
        let mut history = Vec::new();
        let mut prev_ll = f64::NEG_INFINITY;

        for _iter in 0..opts.max_iters {
            let stats = e_step(&params, traces)?;
            let ll = stats.log_likelihood;
            debug_assert!(
                ll >= prev_ll - 1e-8,
                "log-likelihood decreased: {prev_ll} -> {ll}"
            );
            history.push(ll);
            if prev_ll.is_finite() && ll - prev_ll < opts.tol {
                break;
            }
            prev_ll = ll;
            params = m_step(&stats, mask, &mut warnings);
        }
        // history entries score the params *before* each M-step; score the
        // kept parameters themselves
        let final_ll = total_log_likelihood(&params, traces).map_err(|_| {
            Error::DegenerateInput("trained model assigns probability 0 to a training trace".into())
        })?;
        debug_assert!(final_ll >= *history.last().unwrap() - 1e-8);
        history.push(final_ll);

        let better = match &best {
            None => true,
            Some(b) => final_ll > b.log_likelihood,
        };
        if better {
            best = Some(BaumWelchOutcome {
                hmm: Hmm {
                    pi: params.pi,
                    a: params.a,
                    b: params.b,
                    alphabet: alphabet.clone(),
                },
                log_likelihood: final_ll,
                history,
                warnings,
            });
        }
    }
    Ok(best.expect("restarts >= 1"))
}

fn forward_log_likelihood(
    pi: &[f64],
    a: &[Vec<f64>],
    b: &[Vec<f64>],
    trace: &[usize],
) -> Result<(f64, Vec<f64>)> {
    let n = pi.len();
    let mut alpha = pi.to_vec();
    let mut factors = Vec::with_capacity(trace.len());
    let mut total = 0.0;
    for (t, &o) in trace.iter().enumerate() {
        let mut next = vec![0.0; n];
        for x in 0..n {
            let mass = alpha[x];
            if mass == 0.0 {
                continue;
            }
            let row = &a[x];
            for (x2, slot) in next.iter_mut().enumerate() {
                *slot += mass * row[x2];
            }
        }
        for (x2, slot) in next.iter_mut().enumerate() {
            *slot *= b[x2][o];
        }
        let c: f64 = next.iter().sum();
        if c <= 0.0 {
            return Err(Error::ImpossibleObservation(format!(
                "trace prefix of length {} has probability 0",
                t + 1
            )));
        }
        next.iter_mut().for_each(|v| *v /= c);
        factors.push(c);
        total += c.ln();
        alpha = next;
    }
    Ok((total, factors))
}

/// Per-step scaling factors of the plain (gap-free) forward recurrence:
/// `factors[t] = Pr(o_t | o_1..o_{t-1})`.
pub fn forward_factors(hmm: &Hmm, trace: &[usize]) -> Result<Vec<f64>> {
    forward_log_likelihood(&hmm.pi, &hmm.a, &hmm.b, trace).map(|(_, f)| f)
}

/// `log Pr(trace | hmm)` in nats via the scaled forward pass.
pub fn log_likelihood(hmm: &Hmm, trace: &[usize]) -> Result<f64> {
    forward_log_likelihood(&hmm.pi, &hmm.a, &hmm.b, trace).map(|(ll, _)| ll)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Alphabet;
    use crate::testutil::m1_d1;

    #[test]
    fn single_state_closed_form() {
        let alphabet = Alphabet::from_strs(&["a", "c"]).unwrap();
        let traces = vec![vec![0, 0, 1]]; // "a a c"
        let out = baum_welch(&alphabet, &traces, &LearnOptions::new(1)).unwrap();
        assert_eq!(out.hmm.pi, vec![1.0]);
        assert_eq!(out.hmm.a, vec![vec![1.0]]);
        assert!((out.hmm.b[0][0] - 2.0 / 3.0).abs() < 1e-12);
        assert!((out.hmm.b[0][1] - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn zero_mask_pins_entries_exactly() {
        let alphabet = Alphabet::from_strs(&["a", "c"]).unwrap();
        let traces = vec![vec![0, 1, 0, 1, 1, 0], vec![1, 0, 0, 1]];
        let mut opts = LearnOptions::new(2);
        opts.zero_mask = Some(ZeroMask {
            a: vec![vec![true, false], vec![false, false]],
            b: vec![vec![false, false], vec![false, false]],
        });
        opts.seed = 3;
        let out = baum_welch(&alphabet, &traces, &opts).unwrap();
        assert_eq!(out.hmm.a[0][0], 0.0);
        assert_eq!(out.hmm.a[0][1], 1.0);
        out.hmm.validate().unwrap();
    }

    #[test]
    fn impossible_mask_is_degenerate_input() {
        let alphabet = Alphabet::from_strs(&["a", "c"]).unwrap();
        let traces = vec![vec![0, 1]];
        let mut opts = LearnOptions::new(2);
        // no state may emit c
        opts.zero_mask = Some(ZeroMask {
            a: vec![vec![false, false], vec![false, false]],
            b: vec![vec![false, true], vec![false, true]],
        });
        let err = baum_welch(&alphabet, &traces, &opts).unwrap_err();
        assert!(matches!(err, Error::DegenerateInput(_)), "got {err:?}");
    }

    #[test]
    fn history_is_monotone_and_rows_stochastic() {
        let alphabet = Alphabet::from_strs(&["a", "b", "c"]).unwrap();
        let traces = vec![
            vec![0, 1, 2, 0, 1, 2, 0, 0, 1],
            vec![2, 2, 1, 0, 1, 2],
            vec![0, 0, 0, 1, 2],
        ];
        let mut opts = LearnOptions::new(3);
        opts.seed = 11;
        opts.restarts = 2;
        let out = baum_welch(&alphabet, &traces, &opts).unwrap();
        for pair in out.history.windows(2) {
            assert!(pair[1] >= pair[0] - 1e-8, "history not monotone: {:?}", out.history);
        }
        out.hmm.validate().unwrap();
        assert_eq!(out.log_likelihood, *out.history.last().unwrap());
    }

    #[test]
    fn log_likelihood_of_single_event_on_m1() {
        let (hmm, _) = m1_d1();
        let ll = log_likelihood(&hmm, &[0]).unwrap();
        assert!((ll - 0.5f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn log_likelihood_uniform_model() {
        let alphabet = Alphabet::from_strs(&["a", "b", "c", "d"]).unwrap();
        let hmm = Hmm {
            pi: vec![1.0],
            a: vec![vec![1.0]],
            b: vec![vec![0.25; 4]],
            alphabet,
        };
        let ll = log_likelihood(&hmm, &[0, 3, 1]).unwrap();
        assert!((ll - 3.0 * 0.25f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn impossible_symbol_is_an_error() {
        let (mut hmm, _) = m1_d1();
        hmm.b = vec![vec![1.0, 0.0], vec![1.0, 0.0]];
        let err = log_likelihood(&hmm, &[1]).unwrap_err();
        assert!(matches!(err, Error::ImpossibleObservation(_)));
    }
}
