//! Hamiltonian Monte Carlo with adaptation, convergence diagnostics and draw storage.
//!
//! Each transition integrates Hamiltonian dynamics for a uniformly jittered
//! integration time under a diagonal Euclidean metric. Warmup adapts the step
//! size by dual averaging and the metric from windowed sample variances.

mod diagnostics;
mod ppc;
mod sampler;
mod store;
mod target;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use diagnostics::{compute_ess, compute_rhat, diagnose, ess, split_rhat, Diagnostics, ESS_THRESHOLD, RHAT_THRESHOLD};
pub use ppc::{posterior_predictive_replicates, short_step_density_gap, PosteriorPredictive};
pub use sampler::{finite_difference_gradient, hamiltonian, leapfrog, run_hmc, ChainStats};
pub use store::{config_hash, load_draws, save_draws};
pub use target::LogDensity;

#[derive(Debug, Error)]
pub enum HmcError {
    #[error("{divergent} of {total} post-warmup transitions diverged")]
    DivergenceExplosion { divergent: usize, total: usize, draws: Box<PosteriorDraws> },
    #[error("log density is not finite at the initial point of chain {0}")]
    NonFiniteDensityAtInit(usize),
    #[error("gradient coordinate {index} is {analytic} but finite differences give {numeric}")]
    GradientCheckFailed { index: usize, analytic: f64, numeric: f64 },
    #[error("need at least {needed} draws per chain and 2 chains")]
    TooFewDraws { needed: usize },
    #[error("invalid sampler configuration: {0}")]
    InvalidConfig(String),
    #[error("draw store does not match its manifest: {0}")]
    ManifestMismatch(String),
    #[error("i/o failure: {0}")]
    IoFailure(#[from] std::io::Error),
}

/// Sampler settings. Defaults are the desk-scale 4 x 1500 with 750 warmup.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SamplerConfig {
    pub n_chains: usize,
    /// Iterations per chain, warmup included.
    pub n_iterations: usize,
    pub n_warmup: usize,
    pub target_accept: f64,
    pub min_step_size: f64,
    pub max_step_size: f64,
    pub max_leapfrog: usize,
    /// Integration times are drawn uniformly from `(0, max_integration_time]`.
    pub max_integration_time: f64,
    /// Half-width of the uniform jitter added to the initial point.
    pub init_jitter: f64,
    pub seed: u64,
    /// Chains run at most this many at a time.
    pub jobs: usize,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            n_chains: 4,
            n_iterations: 1500,
            n_warmup: 750,
            target_accept: 0.8,
            min_step_size: 1e-8,
            max_step_size: 10.0,
            max_leapfrog: 256,
            max_integration_time: std::f64::consts::PI,
            init_jitter: 0.1,
            seed: 20_250_101,
            jobs: 1,
        }
    }
}

impl SamplerConfig {
    /// The longer replication setting, 4 x 5000 with 2500 warmup.
    pub fn replication() -> Self {
        Self { n_iterations: 5000, n_warmup: 2500, ..Self::default() }
    }

    pub fn n_kept(&self) -> usize {
        self.n_iterations - self.n_warmup
    }

    pub fn validate(&self) -> Result<(), HmcError> {
        let bad = |m: &str| Err(HmcError::InvalidConfig(m.to_string()));
        if self.n_chains == 0 {
            return bad("n_chains must be at least 1");
        }
        if self.n_warmup >= self.n_iterations {
            return bad("n_warmup must be below n_iterations");
        }
        if !(self.target_accept > 0.0 && self.target_accept < 1.0) {
            return bad("target_accept must lie in (0, 1)");
        }
        if !(self.min_step_size > 0.0 && self.min_step_size <= self.max_step_size) {
            return bad("step size bounds must satisfy 0 < min <= max");
        }
        if self.max_leapfrog == 0 || !(self.max_integration_time > 0.0) {
            return bad("trajectory bounds must be positive");
        }
        if !(self.init_jitter >= 0.0) {
            return bad("init_jitter must be non-negative");
        }
        if self.jobs == 0 {
            return bad("jobs must be at least 1");
        }
        Ok(())
    }
}

/// Kept draws of the constrained parameters, stored `[chain][draw][parameter]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorDraws {
    pub names: Vec<String>,
    pub n_chains: usize,
    pub n_kept: usize,
    pub values: Vec<f64>,
    pub seed: u64,
    pub config: SamplerConfig,
    pub chain_stats: Vec<ChainStats>,
}

impl PosteriorDraws {
    pub fn n_params(&self) -> usize {
        self.names.len()
    }

    pub fn n_total(&self) -> usize {
        self.n_chains * self.n_kept
    }

    /// Parameter vector of draw `i` in chain `c`.
    pub fn draw(&self, c: usize, i: usize) -> &[f64] {
        let d = self.n_params();
        let start = (c * self.n_kept + i) * d;
        &self.values[start..start + d]
    }

    /// Draw `k` of the chains laid end to end.
    pub fn pooled_draw(&self, k: usize) -> &[f64] {
        self.draw(k / self.n_kept, k % self.n_kept)
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    /// Per-chain traces of parameter `j`.
    pub fn chains(&self, j: usize) -> Vec<Vec<f64>> {
        (0..self.n_chains).map(|c| (0..self.n_kept).map(|i| self.draw(c, i)[j]).collect()).collect()
    }

    pub fn pooled(&self, j: usize) -> Vec<f64> {
        (0..self.n_total()).map(|k| self.pooled_draw(k)[j]).collect()
    }

    pub fn mean(&self, j: usize) -> f64 {
        self.pooled(j).iter().sum::<f64>() / self.n_total() as f64
    }

    pub fn sd(&self, j: usize) -> f64 {
        let v = self.pooled(j);
        let m = v.iter().sum::<f64>() / v.len() as f64;
        (v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (v.len() as f64 - 1.0)).sqrt()
    }

    /// Sample quantile (linear interpolation between order statistics).
    pub fn quantile(&self, j: usize, prob: f64) -> f64 {
        let mut v = self.pooled(j);
        v.sort_by(f64::total_cmp);
        crate::stats::quantile_sorted(&v, prob)
    }

    pub fn divergences(&self) -> usize {
        self.chain_stats.iter().map(|s| s.divergences).sum()
    }
}

#[cfg(test)]
mod tests;
