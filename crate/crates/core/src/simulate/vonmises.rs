//! Von Mises sampling by the Best-Fisher rejection scheme.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::scalar::wrap_angle;

/// Below this concentration the distribution is treated as uniform.
pub const UNIFORM_KAPPA: f64 = 1e-9;

/// Above this concentration draws come from the normal limit `N(mu, 1/kappa)`;
/// the rejection envelope degenerates in floating point well before that.
pub const NORMAL_LIMIT_KAPPA: f64 = 1e8;

/// One draw from `vM(mu, kappa)`, wrapped to `(-pi, pi]`.
pub fn sample_von_mises<R: Rng + ?Sized>(mu: f64, kappa: f64, rng: &mut R) -> f64 {
    if !(kappa >= UNIFORM_KAPPA) {
        return wrap_angle(PI * (2.0 * rng.random::<f64>() - 1.0));
    }
    if kappa > NORMAL_LIMIT_KAPPA {
        let z: f64 = rng.sample(StandardNormal);
        return wrap_angle(mu + z / kappa.sqrt());
    }
    let tau = 1.0 + (1.0 + 4.0 * kappa * kappa).sqrt();
    let rho = (tau - (2.0 * tau).sqrt()) / (2.0 * kappa);
    let r = (1.0 + rho * rho) / (2.0 * rho);
    loop {
        let u1: f64 = rng.random();
        let u2: f64 = rng.random();
        let z = (PI * u1).cos();
        let f = (1.0 + r * z) / (r + z);
        let c = kappa * (r - f);
        if c * (2.0 - c) - u2 > 0.0 || (c / u2).ln() + 1.0 - c >= 0.0 {
            let u3: f64 = rng.random();
            let theta = f.clamp(-1.0, 1.0).acos();
            return wrap_angle(if u3 > 0.5 { mu + theta } else { mu - theta });
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::bessel_ratio;
    use crate::stats::circular_mean;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn draws(mu: f64, kappa: f64, n: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| sample_von_mises(mu, kappa, &mut rng)).collect()
    }

    #[test]
    fn concentrated_draws_hug_the_mean() {
        assert!(draws(0.7, 1e6, 1000, 1).iter().all(|d| (d - 0.7).abs() < 0.01));
    }

    #[test]
    fn huge_concentration_terminates() {
        assert!(draws(-0.3, 1e17, 1000, 4).iter().all(|d| (d + 0.3).abs() < 1e-6));
        assert!(draws(-0.3, f64::INFINITY, 10, 5).iter().all(|d| *d == -0.3));
    }

    #[test]
    fn diffuse_draws_are_uniform() {
        let (_, r) = circular_mean(&draws(0.7, 1e-6, 10_000, 2));
        assert!(r < 0.02, "{r}");
        let (_, r) = circular_mean(&draws(0.7, 1e-12, 10_000, 3));
        assert!(r < 0.02, "{r}");
    }

    #[test]
    fn moderate_kappa_moments() {
        let (m, r) = circular_mean(&draws(0.5, 2.0, 10_000, 4));
        assert!((m - 0.5).abs() < 0.05);
        assert!((r - bessel_ratio(2.0)).abs() < 0.02);
    }

    #[test]
    fn draws_are_wrapped() {
        assert!(draws(3.1, 0.5, 5000, 5).iter().all(|d| *d > -PI && *d <= PI));
    }
}
