//! Particle-filter estimation: sequential importance resampling over the
//! joint (hidden state, monitor state) space.
//!
//! Particles advance by sampling from the transition distribution
//! conditioned on the current observation; each particle's weight picks up
//! the per-particle evidence of that observation, which keeps the filter
//! unbiased for the exact update. Resampling is deferred until the
//! effective sample size falls below a threshold and uses the systematic
//! scheme (a single uniform offset against the cumulative weights). The
//! particle count tunes memory, runtime, and accuracy.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::model::{Dfsm, GapDist, Hmm, ModelBundle, PeekModel, TraceItem, VerdictProbs};
use crate::report::{OnImpossible, StepRecord};
use crate::rng::sample_categorical;
use crate::{Error, Result};

/// `1 / sum(w_i^2)` for normalized weights: the number of particles that
/// still carry information.
pub fn effective_sample_size(weights: &[f64]) -> f64 {
    let sum_sq: f64 = weights.iter().map(|w| w * w).sum();
    if sum_sq == 0.0 {
        0.0
    } else {
        1.0 / sum_sq
    }
}

/// Ancestor indices of systematic resampling: pick points `u0 + k/N` against
/// the cumulative weight vector. `u0` must lie in `[0, 1/N)`.
pub fn systematic_ancestors(weights: &[f64], u0: f64) -> Vec<usize> {
    let n = weights.len();
    let mut ancestors = Vec::with_capacity(n);
    let mut i = 0usize;
    let mut cum = weights[0];
    for k in 0..n {
        let point = u0 + k as f64 / n as f64;
        while point > cum && i + 1 < n {
            i += 1;
            cum += weights[i];
        }
        ancestors.push(i);
    }
    ancestors
}

/// Weighted particle population over (hidden state, monitor state) pairs.
#[derive(Debug, Clone)]
pub struct ParticleFilter<'a> {
    hmm: &'a Hmm,
    dfsm: &'a Dfsm,
    xs: Vec<u32>,
    ms: Vec<u32>,
    weights: Vec<f64>,
    rng: ChaCha8Rng,
    /// Resample when ESS drops below this fraction of the particle count.
    pub ess_ratio: f64,
}

impl<'a> ParticleFilter<'a> {
    /// Draw `n_particles` particles from the initial distribution, all at the
    /// monitor's initial state with uniform weights.
    pub fn new(
        hmm: &'a Hmm,
        dfsm: &'a Dfsm,
        n_particles: usize,
        seed: u64,
        ess_ratio: f64,
    ) -> Result<Self> {
        if n_particles == 0 {
            return Err(Error::InvalidArgument("particle count must be positive".into()));
        }
        if !(0.0..=1.0).contains(&ess_ratio) {
            return Err(Error::InvalidArgument(format!(
                "ess ratio {ess_ratio} outside [0, 1]"
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let xs = (0..n_particles)
            .map(|_| sample_categorical(&mut rng, &hmm.pi) as u32)
            .collect();
        Ok(ParticleFilter {
            hmm,
            dfsm,
            xs,
            ms: vec![dfsm.initial as u32; n_particles],
            weights: vec![1.0 / n_particles as f64; n_particles],
            rng,
            ess_ratio,
        })
    }

    pub fn len(&self) -> usize {
        self.xs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.xs.is_empty()
    }

    /// (hidden state, monitor state) of each particle.
    pub fn states(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.xs.iter().zip(&self.ms).map(|(&x, &m)| (x as usize, m as usize))
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn ess(&self) -> f64 {
        effective_sample_size(&self.weights)
    }

    /// Advance every particle through one observed event: sample the
    /// successor from `A[x][.] * B[.][o]` (the observation-conditioned
    /// proposal), multiply the weight by the per-particle evidence
    /// `sum_x' A[x][x'] B[x'][o]`, and step the monitor. Returns the step
    /// evidence estimate and whether a resampling pass ran.
    pub fn step_event(&mut self, o: usize) -> Result<(f64, bool)> {
        let n = self.hmm.n();
        // conditioned proposal rows and their normalizers, shared by all
        // particles in the same hidden state
        let mut proposal = vec![0.0; n * n];
        let mut evidence = vec![0.0; n];
        for x in 0..n {
            let row = &mut proposal[x * n..(x + 1) * n];
            let a_row = &self.hmm.a[x];
            let mut total = 0.0;
            for x2 in 0..n {
                let w = a_row[x2] * self.hmm.b[x2][o];
                row[x2] = w;
                total += w;
            }
            evidence[x] = total;
        }

        let step_likelihood: f64 = self
            .xs
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| w * evidence[x as usize])
            .sum();
        if step_likelihood <= 0.0 {
            return Err(Error::ImpossibleObservation(format!(
                "event {:?} has probability 0 for every particle",
                self.hmm.alphabet.symbol(o)
            )));
        }

        for i in 0..self.xs.len() {
            let x = self.xs[i] as usize;
            let mult = evidence[x];
            let x2 = if mult > 0.0 {
                let u: f64 = self.rng.gen::<f64>() * mult;
                let row = &proposal[x * n..(x + 1) * n];
                let mut cum = 0.0;
                let mut picked = n - 1;
                for (j, &w) in row.iter().enumerate() {
                    if w > 0.0 {
                        cum += w;
                        if u < cum {
                            picked = j;
                            break;
                        }
                    }
                }
                picked
            } else {
                // dead proposal: advance from the prior with weight 0; the
                // particle is culled at the next resample
                sample_categorical(&mut self.rng, &self.hmm.a[x])
            };
            self.xs[i] = x2 as u32;
            self.ms[i] = self.dfsm.delta[self.ms[i] as usize][o] as u32;
            self.weights[i] *= mult;
        }
        self.normalize();
        let resampled = self.resample_if_needed();
        Ok((step_likelihood, resampled))
    }

    /// Advance every particle through a gap: sample a length from the gap
    /// distribution independently per particle, then that many prior
    /// transitions with sampled emissions driving the monitor. Gaps carry no
    /// evidence, so weights are untouched.
    pub fn step_gap(&mut self, gap: &GapDist) {
        let lengths: Vec<f64> = gap.mass.iter().map(|&(_, p)| p).collect();
        for i in 0..self.xs.len() {
            let pick = sample_categorical(&mut self.rng, &lengths);
            let len = gap.mass[pick].0;
            let mut x = self.xs[i] as usize;
            let mut m = self.ms[i] as usize;
            for _ in 0..len {
                x = sample_categorical(&mut self.rng, &self.hmm.a[x]);
                let o = sample_categorical(&mut self.rng, &self.hmm.b[x]);
                m = self.dfsm.delta[m][o];
            }
            self.xs[i] = x as u32;
            self.ms[i] = m as u32;
        }
    }

    /// Reweight every particle by the peek channel. Returns the step
    /// evidence estimate and whether a resampling pass ran.
    pub fn step_peek(&mut self, peek: &PeekModel, v: usize) -> Result<(f64, bool)> {
        let step_likelihood: f64 = self
            .xs
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| w * peek.c[x as usize][v])
            .sum();
        if step_likelihood <= 0.0 {
            return Err(Error::ImpossibleObservation(format!(
                "peek {:?} has probability 0 for every particle",
                peek.values[v]
            )));
        }
        for (x, w) in self.xs.iter().zip(&mut self.weights) {
            *w *= peek.c[*x as usize][v];
        }
        self.normalize();
        let resampled = self.resample_if_needed();
        Ok((step_likelihood, resampled))
    }

    fn normalize(&mut self) {
        let total: f64 = self.weights.iter().sum();
        debug_assert!(total > 0.0);
        for w in &mut self.weights {
            *w /= total;
        }
    }

    /// Systematic resampling if the ESS fell below `ess_ratio * N`.
    pub fn resample_if_needed(&mut self) -> bool {
        if self.ess() >= self.ess_ratio * self.len() as f64 {
            return false;
        }
        self.force_resample();
        true
    }

    /// Unconditional systematic resampling; weights reset to `1/N`.
    pub fn force_resample(&mut self) {
        let n = self.len();
        let u0 = self.rng.gen::<f64>() / n as f64;
        let ancestors = systematic_ancestors(&self.weights, u0);
        self.xs = ancestors.iter().map(|&i| self.xs[i]).collect();
        self.ms = ancestors.iter().map(|&i| self.ms[i]).collect();
        self.weights = vec![1.0 / n as f64; n];
    }

    /// Weighted fraction of particles in each verdict class, normalized by
    /// the actual weight total so a one-class population reports exactly 1.
    pub fn estimate(&self) -> VerdictProbs {
        let mut out = VerdictProbs::ZERO;
        let mut total = 0.0;
        for (&m, &w) in self.ms.iter().zip(&self.weights) {
            out.add(self.dfsm.verdict[m as usize], w);
            total += w;
        }
        if total > 0.0 {
            out.accepting /= total;
            out.pending /= total;
            out.violated /= total;
        }
        out
    }

    fn uniform_reset(&mut self, monitor_event: Option<usize>) {
        let n = self.hmm.n();
        for i in 0..self.xs.len() {
            self.xs[i] = (self.rng.gen::<f64>() * n as f64) as u32 % n as u32;
            if let Some(o) = monitor_event {
                self.ms[i] = self.dfsm.delta[self.ms[i] as usize][o] as u32;
            }
        }
        let w = 1.0 / self.len() as f64;
        self.weights.iter_mut().for_each(|slot| *slot = w);
    }
}

/// Result of folding a trace through the particle filter.
#[derive(Debug, Clone)]
pub struct PfRun {
    pub steps: Vec<StepRecord>,
    pub final_verdicts: VerdictProbs,
    /// Cumulative log of the filter's evidence estimates (nats).
    pub log_likelihood: f64,
    pub resample_count: usize,
    pub resets: usize,
}

/// Particle-engine configuration.
#[derive(Debug, Clone, Copy)]
pub struct PfOptions {
    pub particles: usize,
    pub seed: u64,
    pub ess_ratio: f64,
    pub on_impossible: OnImpossible,
}

impl Default for PfOptions {
    fn default() -> Self {
        PfOptions {
            particles: 10_000,
            seed: 0,
            ess_ratio: 0.5,
            on_impossible: OnImpossible::Error,
        }
    }
}

/// Fold a trace through the particle filter, producing one record per item
/// with the ESS and resampling events of each step.
pub fn run(bundle: &ModelBundle, trace: &[TraceItem], opts: &PfOptions) -> Result<PfRun> {
    let hmm = &bundle.hmm;
    let dfsm = bundle.dfsm()?;
    let mut filter = ParticleFilter::new(hmm, dfsm, opts.particles, opts.seed, opts.ess_ratio)?;
    let mut log_likelihood = 0.0;
    let mut resample_count = 0usize;
    let mut resets = 0usize;
    let mut steps = Vec::with_capacity(trace.len());

    for (index, item) in trace.iter().enumerate() {
        let mut resampled = false;
        let mut reset = false;
        match item {
            TraceItem::Event(sym) => {
                let o = hmm
                    .alphabet
                    .index_of(sym)
                    .ok_or_else(|| Error::UnknownLabel(format!("event symbol {sym:?}")))?;
                match filter.step_event(o) {
                    Ok((likelihood, r)) => {
                        log_likelihood += likelihood.ln();
                        resampled = r;
                    }
                    Err(Error::ImpossibleObservation(_))
                        if opts.on_impossible == OnImpossible::UniformReset =>
                    {
                        filter.uniform_reset(Some(o));
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
                filter.step_gap(gap);
            }
            TraceItem::Peek(value) => {
                let peek = bundle
                    .peek
                    .as_ref()
                    .ok_or_else(|| Error::UnknownLabel(format!("peek {value:?} (model has no peek channel)")))?;
                let v = peek
                    .value_index(value)
                    .ok_or_else(|| Error::UnknownLabel(format!("peek value {value:?}")))?;
                match filter.step_peek(peek, v) {
                    Ok((likelihood, r)) => {
                        log_likelihood += likelihood.ln();
                        resampled = r;
                    }
                    Err(Error::ImpossibleObservation(_))
                        if opts.on_impossible == OnImpossible::UniformReset =>
                    {
                        filter.uniform_reset(None);
                        resets += 1;
                        reset = true;
                    }
                    Err(e) => return Err(e),
                }
            }
        }
        if resampled {
            resample_count += 1;
        }
        let mut record = StepRecord::new(index, item.clone(), filter.estimate());
        record.log_likelihood = Some(log_likelihood);
        record.ess = Some(filter.ess());
        record.resampled = Some(resampled);
        record.reset = reset;
        steps.push(record);
    }

    Ok(PfRun {
        final_verdicts: filter.estimate(),
        steps,
        log_likelihood,
        resample_count,
        resets,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::GapDist;
    use crate::testutil::{m1_bundle, m1_d1, m1_peek};
    use rand::SeedableRng;

    #[test]
    fn init_places_particles_at_pi_and_q0() {
        let (hmm, dfsm) = m1_d1();
        let pf = ParticleFilter::new(&hmm, &dfsm, 4, 1, 0.5).unwrap();
        assert!(pf.states().all(|(x, m)| x == 0 && m == 0));
        assert!(pf.weights().iter().all(|&w| w == 0.25));
    }

    #[test]
    fn init_empirical_distribution_approaches_pi() {
        let (mut hmm, dfsm) = m1_d1();
        hmm.pi = vec![0.5, 0.5];
        let pf = ParticleFilter::new(&hmm, &dfsm, 100_000, 2, 0.5).unwrap();
        let mut counts = [0.0f64; 2];
        for (x, _) in pf.states() {
            counts[x] += 1.0;
        }
        let l1: f64 = counts
            .iter()
            .zip(&hmm.pi)
            .map(|(c, p)| (c / 100_000.0 - p).abs())
            .sum();
        assert!(l1 < 0.02, "L1 error {l1}");
    }

    #[test]
    fn zero_particles_is_invalid() {
        let (hmm, dfsm) = m1_d1();
        let err = ParticleFilter::new(&hmm, &dfsm, 0, 1, 0.5).unwrap_err();
        assert!(matches!(err, Error::InvalidArgument(_)));
    }

    #[test]
    fn step_event_matches_the_exact_update_on_m1() {
        let (hmm, dfsm) = m1_d1();
        let mut pf = ParticleFilter::new(&hmm, &dfsm, 64, 3, 0.5).unwrap();
        let (likelihood, _) = pf.step_event(0).unwrap();
        // the conditioned proposal is a point mass on x0
        assert!(pf.states().all(|(x, m)| x == 0 && m == 1));
        assert!(pf.weights().iter().all(|&w| (w - 1.0 / 64.0).abs() < 1e-15));
        // per-particle evidence for a from x0 is 0.5*1 + 0.5*0
        assert!((likelihood - 0.5).abs() < 1e-12);
    }

    #[test]
    fn step_event_rejects_globally_impossible_symbols() {
        let (mut hmm, dfsm) = m1_d1();
        hmm.b = vec![vec![1.0, 0.0], vec![1.0, 0.0]];
        let mut pf = ParticleFilter::new(&hmm, &dfsm, 8, 4, 0.5).unwrap();
        let err = pf.step_event(1).unwrap_err();
        assert!(matches!(err, Error::ImpossibleObservation(_)));
    }

    #[test]
    fn step_gap_spreads_particles_like_the_exact_operator() {
        let (hmm, dfsm) = m1_d1();
        let mut pf = ParticleFilter::new(&hmm, &dfsm, 100_000, 5, 0.5).unwrap();
        pf.step_event(0).unwrap(); // all at (x0, s1)
        let weights_before = pf.weights().to_vec();
        pf.step_gap(&GapDist::point("g1", 1));
        assert_eq!(pf.weights(), weights_before.as_slice());
        let frac = pf.states().filter(|&(x, m)| x == 1 && m == 0).count() as f64 / 100_000.0;
        assert!((frac - 0.5).abs() < 0.01, "fraction {frac}");
    }

    #[test]
    fn step_gap_zero_length_is_identity() {
        let (hmm, dfsm) = m1_d1();
        let mut pf = ParticleFilter::new(&hmm, &dfsm, 16, 6, 0.5).unwrap();
        let before: Vec<_> = pf.states().collect();
        pf.step_gap(&GapDist::point("z", 0));
        assert_eq!(pf.states().collect::<Vec<_>>(), before);
    }

    #[test]
    fn step_peek_refocuses_particles() {
        let (hmm, dfsm) = m1_d1();
        let peek = m1_peek();
        let mut pf = ParticleFilter::new(&hmm, &dfsm, 10_000, 7, 0.5).unwrap();
        pf.step_event(0).unwrap();
        pf.step_gap(&GapDist::point("g1", 1));
        pf.step_peek(&peek, 1).unwrap();
        let verdicts = pf.estimate();
        assert_eq!(verdicts.accepting, 1.0);
        pf.force_resample();
        assert!(pf.states().all(|(x, m)| x == 1 && m == 0));
    }

    #[test]
    fn constant_peek_column_leaves_weights_unchanged() {
        let (hmm, dfsm) = m1_d1();
        let flat = PeekModel {
            values: vec!["p0".into(), "p1".into()],
            c: vec![vec![0.5, 0.5], vec![0.5, 0.5]],
        };
        let mut pf = ParticleFilter::new(&hmm, &dfsm, 32, 8, 0.0).unwrap();
        let before = pf.weights().to_vec();
        pf.step_peek(&flat, 0).unwrap();
        for (a, b) in pf.weights().iter().zip(&before) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn all_zero_peek_is_impossible() {
        let (hmm, dfsm) = m1_d1();
        let zero = PeekModel {
            values: vec!["p0".into(), "p1".into()],
            c: vec![vec![1.0, 0.0], vec![1.0, 0.0]],
        };
        let mut pf = ParticleFilter::new(&hmm, &dfsm, 8, 9, 0.5).unwrap();
        let err = pf.step_peek(&zero, 1).unwrap_err();
        assert!(matches!(err, Error::ImpossibleObservation(_)));
    }

    #[test]
    fn ess_formula() {
        assert!((effective_sample_size(&[0.01; 100]) - 100.0).abs() < 1e-9);
        assert_eq!(effective_sample_size(&[1.0, 0.0, 0.0]), 1.0);
        assert_eq!(effective_sample_size(&[0.5, 0.5, 0.0, 0.0]), 2.0);
    }

    #[test]
    fn systematic_rule_hand_case() {
        // picks {0.1, 0.35, 0.6, 0.85} against cumulative {0.4, 0.8, 0.9, 1.0}
        let ancestors = systematic_ancestors(&[0.4, 0.4, 0.1, 0.1], 0.1);
        assert_eq!(ancestors, vec![0, 0, 1, 2]);
    }

    #[test]
    fn uniform_weights_do_not_resample() {
        let (hmm, dfsm) = m1_d1();
        let mut pf = ParticleFilter::new(&hmm, &dfsm, 16, 10, 0.5).unwrap();
        assert!(!pf.resample_if_needed());
    }

    #[test]
    fn systematic_resampling_is_unbiased() {
        // chi-square over 10^4 resamplings, 3 dof, 1% critical value
        let weights = [0.4, 0.4, 0.1, 0.1];
        let reps = 10_000usize;
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let mut counts = [0.0f64; 4];
        for _ in 0..reps {
            let u0 = rng.gen::<f64>() / 4.0;
            for a in systematic_ancestors(&weights, u0) {
                counts[a] += 1.0;
            }
        }
        let mut chi2 = 0.0;
        for (i, &w) in weights.iter().enumerate() {
            let expected = reps as f64 * 4.0 * w;
            chi2 += (counts[i] - expected).powi(2) / expected;
        }
        assert!(chi2 < 11.345, "chi-square {chi2}, counts {counts:?}");
    }

    #[test]
    fn run_is_deterministic_and_collapses_after_peek() {
        let bundle = m1_bundle();
        let trace = vec![
            TraceItem::event("a"),
            TraceItem::gap("g1"),
            TraceItem::peek("p1"),
        ];
        let opts = PfOptions {
            particles: 100_000,
            seed: 12,
            ..PfOptions::default()
        };
        let a = run(&bundle, &trace, &opts).unwrap();
        let b = run(&bundle, &trace, &opts).unwrap();
        assert_eq!(
            serde_json::to_string(&a.steps).unwrap(),
            serde_json::to_string(&b.steps).unwrap()
        );
        assert_eq!(a.final_verdicts.accepting, 1.0);
    }

    #[test]
    fn gap_free_traces_have_certain_verdicts_at_any_n() {
        let bundle = m1_bundle();
        let trace = vec![
            TraceItem::event("a"),
            TraceItem::event("a"),
            TraceItem::event("c"),
        ];
        for n in [1usize, 7, 100] {
            let opts = PfOptions {
                particles: n,
                seed: 13,
                ..PfOptions::default()
            };
            let out = run(&bundle, &trace, &opts).unwrap();
            assert_eq!(out.final_verdicts.accepting, 1.0);
        }
    }
}
