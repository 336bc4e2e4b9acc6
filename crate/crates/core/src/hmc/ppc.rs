//! Posterior predictive replicates.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::PosteriorDraws;

/// A model that can simulate its response vector from one stored draw.
pub trait PosteriorPredictive {
    fn replicate(&self, draw: &[f64], rng: &mut dyn RngCore) -> Vec<f64>;
}

/// `n_reps` replicated response vectors, each from a different posterior
/// draw spread evenly over the pooled chains.
pub fn posterior_predictive_replicates<M: PosteriorPredictive + ?Sized>(
    draws: &PosteriorDraws,
    model: &M,
    n_reps: usize,
    seed: u64,
) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let total = draws.n_total();
    (0..n_reps)
        .map(|r| {
            let k = (r * total) / n_reps.max(1);
            model.replicate(draws.pooled_draw(k), &mut rng)
        })
        .collect()
}

/// Signed short-step density gap: the average fraction of replicated values
/// falling below the observed `prob` quantile, minus `prob`. Positive values
/// mean the replicates put too much mass on short steps.
pub fn short_step_density_gap(observed: &[f64], replicates: &[Vec<f64>], prob: f64) -> f64 {
    if replicates.is_empty() {
        return 0.0;
    }
    let cut = crate::stats::quantile(observed, prob);
    let frac: f64 = replicates
        .iter()
        .map(|r| r.iter().filter(|&&x| x < cut).count() as f64 / r.len() as f64)
        .sum::<f64>()
        / replicates.len() as f64;
    frac - prob
}
