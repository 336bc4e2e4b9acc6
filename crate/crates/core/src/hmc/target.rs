//! The interface a model exposes to the sampler.

/// A differentiable log density over unconstrained coordinates.
pub trait LogDensity: Sync {
    /// Number of unconstrained coordinates.
    fn dim(&self) -> usize;

    /// Log density (up to an additive constant) at `q`; writes the gradient.
    /// Non-finite values are treated as divergent by the sampler.
    fn log_density_gradient(&self, q: &[f64], grad: &mut [f64]) -> f64;

    /// Names of the constrained parameters returned by [`LogDensity::constrain`].
    fn parameter_names(&self) -> Vec<String> {
        (0..self.dim()).map(|i| format!("q[{i}]")).collect()
    }

    /// Map sampler coordinates to the stored parameter vector.
    fn constrain(&self, q: &[f64]) -> Vec<f64> {
        q.to_vec()
    }

    fn log_density(&self, q: &[f64]) -> f64 {
        let mut g = vec![0.0; self.dim()];
        self.log_density_gradient(q, &mut g)
    }
}
