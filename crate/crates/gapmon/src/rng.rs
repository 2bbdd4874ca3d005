//! Small sampling helpers shared by the learner, the simulator, and the
//! particle filter. All randomness flows through seedable ChaCha streams so
//! runs are reproducible.

use rand::Rng;

/// Sample an index from a discrete distribution by inverse CDF. `probs` need
/// not be exactly normalized; leftover mass lands on the last positive entry.
pub(crate) fn sample_categorical<R: Rng>(rng: &mut R, probs: &[f64]) -> usize {
    let u: f64 = rng.gen();
    let mut cum = 0.0;
    let mut last_positive = 0;
    for (i, &p) in probs.iter().enumerate() {
        if p > 0.0 {
            last_positive = i;
            cum += p;
            if u < cum {
                return i;
            }
        }
    }
    last_positive
}

/// Symmetric Dirichlet(1.0) draw over the unmasked entries of a length-`k`
/// row; masked entries are exactly 0. At least one entry must be unmasked.
pub(crate) fn dirichlet_row<R: Rng>(rng: &mut R, k: usize, mask: Option<&[bool]>) -> Vec<f64> {
    let mut row = vec![0.0; k];
    let mut total = 0.0;
    for (i, slot) in row.iter_mut().enumerate() {
        if mask.map(|m| m[i]).unwrap_or(false) {
            continue;
        }
        // Exp(1) draws normalized over the row give Dirichlet(1)
        let u: f64 = rng.gen();
        let e = -(1.0 - u).ln();
        *slot = e;
        total += e;
    }
    debug_assert!(total > 0.0, "fully masked row");
    for slot in &mut row {
        *slot /= total;
    }
    row
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn categorical_respects_point_mass() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..32 {
            assert_eq!(sample_categorical(&mut rng, &[0.0, 1.0, 0.0]), 1);
        }
    }

    #[test]
    fn dirichlet_row_is_stochastic_and_respects_mask() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let row = dirichlet_row(&mut rng, 4, Some(&[false, true, false, true]));
        assert_eq!(row[1], 0.0);
        assert_eq!(row[3], 0.0);
        assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(row[0] > 0.0 && row[2] > 0.0);
    }
}
