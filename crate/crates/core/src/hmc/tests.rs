use super::*;

/// Zero-mean Gaussian with covariance `[[1, rho], [rho, 1]]` scaled by `sd`.
struct Gaussian {
    dim: usize,
    rho: f64,
    sd: f64,
}

impl LogDensity for Gaussian {
    fn dim(&self) -> usize {
        self.dim
    }

    fn log_density_gradient(&self, q: &[f64], grad: &mut [f64]) -> f64 {
        if self.dim == 1 {
            grad[0] = -q[0] / (self.sd * self.sd);
            return -0.5 * q[0] * q[0] / (self.sd * self.sd);
        }
        let (x, y) = (q[0] / self.sd, q[1] / self.sd);
        let c = 1.0 / (1.0 - self.rho * self.rho);
        grad[0] = -c * (x - self.rho * y) / self.sd;
        grad[1] = -c * (y - self.rho * x) / self.sd;
        -0.5 * c * (x * x - 2.0 * self.rho * x * y + y * y)
    }
}

struct Cliff;

impl LogDensity for Cliff {
    fn dim(&self) -> usize {
        1
    }

    fn log_density_gradient(&self, q: &[f64], grad: &mut [f64]) -> f64 {
        grad[0] = -q[0];
        if q[0] > 5.0 {
            f64::NEG_INFINITY
        } else {
            -0.5 * q[0] * q[0]
        }
    }
}

struct WrongGradient;

impl LogDensity for WrongGradient {
    fn dim(&self) -> usize {
        2
    }

    fn log_density_gradient(&self, q: &[f64], grad: &mut [f64]) -> f64 {
        grad[0] = -q[0];
        grad[1] = 3.0 - q[1];
        -0.5 * (q[0] * q[0] + q[1] * q[1])
    }
}

fn config(kept: usize, seed: u64) -> SamplerConfig {
    SamplerConfig { n_iterations: 1000 + kept, n_warmup: 1000, seed, ..SamplerConfig::default() }
}

#[test]
fn standard_normal_moments() {
    let draws = run_hmc(&Gaussian { dim: 1, rho: 0.0, sd: 1.0 }, &[0.0], &config(2000, 1)).unwrap();
    let v = draws.pooled(0);
    assert_eq!(v.len(), 8000);
    let m = crate::stats::mean(&v);
    let var = crate::stats::variance(&v);
    assert!(m.abs() < 0.02, "mean {m}");
    assert!((var - 1.0).abs() < 0.05, "variance {var}");
    let d = diagnose(&draws).unwrap();
    assert!(d.passes(), "{}", d.report());
}

#[test]
fn correlated_normal() {
    let draws = run_hmc(&Gaussian { dim: 2, rho: 0.9, sd: 2.0 }, &[0.0, 0.0], &config(2000, 2)).unwrap();
    let (x, y) = (draws.pooled(0), draws.pooled(1));
    let (mx, my) = (crate::stats::mean(&x), crate::stats::mean(&y));
    let cov: f64 = x.iter().zip(&y).map(|(a, b)| (a - mx) * (b - my)).sum::<f64>() / (x.len() as f64 - 1.0);
    let r = cov / (crate::stats::variance(&x) * crate::stats::variance(&y)).sqrt();
    assert!((r - 0.9).abs() < 0.03, "correlation {r}");
    let d = diagnose(&draws).unwrap();
    assert!(d.passes(), "{}", d.report());
}

#[test]
fn non_finite_init_rejected() {
    let cfg = SamplerConfig { init_jitter: 0.0, ..config(100, 3) };
    assert!(matches!(run_hmc(&Cliff, &[10.0], &cfg), Err(HmcError::NonFiniteDensityAtInit(0))));
}

#[test]
fn inconsistent_gradient_rejected() {
    assert!(matches!(run_hmc(&WrongGradient, &[0.0, 0.0], &config(100, 4)), Err(HmcError::GradientCheckFailed { .. })));
}

#[test]
fn invalid_configs() {
    let t = Gaussian { dim: 1, rho: 0.0, sd: 1.0 };
    let bad = SamplerConfig { n_warmup: 100, n_iterations: 100, ..SamplerConfig::default() };
    assert!(matches!(run_hmc(&t, &[0.0], &bad), Err(HmcError::InvalidConfig(_))));
    let bad = SamplerConfig { target_accept: 1.0, ..SamplerConfig::default() };
    assert!(matches!(run_hmc(&t, &[0.0], &bad), Err(HmcError::InvalidConfig(_))));
    assert!(matches!(run_hmc(&t, &[0.0, 1.0], &SamplerConfig::default()), Err(HmcError::InvalidConfig(_))));
}

#[test]
fn leapfrog_is_reversible() {
    let t = Gaussian { dim: 2, rho: 0.7, sd: 1.3 };
    let inv_metric = [0.8, 1.7];
    let q0 = vec![0.4, -1.1];
    let p0 = vec![1.2, 0.3];
    let (mut q, mut p) = (q0.clone(), p0.clone());
    let mut g = vec![0.0; 2];
    t.log_density_gradient(&q, &mut g);
    for _ in 0..50 {
        leapfrog(&t, &mut q, &mut p, &mut g, 0.1, &inv_metric);
    }
    p.iter_mut().for_each(|x| *x = -*x);
    for _ in 0..50 {
        leapfrog(&t, &mut q, &mut p, &mut g, 0.1, &inv_metric);
    }
    for k in 0..2 {
        assert!((q[k] - q0[k]).abs() < 1e-8);
        assert!((p[k] + p0[k]).abs() < 1e-8);
    }
}

#[test]
fn tiny_steps_conserve_energy() {
    let t = Gaussian { dim: 1, rho: 0.0, sd: 1.0 };
    let (mut q, mut p, mut g) = (vec![0.9], vec![-0.6], vec![0.0]);
    let lp0 = t.log_density_gradient(&q, &mut g);
    let h0 = hamiltonian(lp0, &p, &[1.0]);
    let mut lp = lp0;
    for _ in 0..10_000 {
        lp = leapfrog(&t, &mut q, &mut p, &mut g, 1e-4, &[1.0]);
    }
    assert!((hamiltonian(lp, &p, &[1.0]) - h0).abs() < 1e-6);
}

#[test]
fn gradient_vanishes_at_mode() {
    let t = Gaussian { dim: 2, rho: 0.5, sd: 1.0 };
    let g = finite_difference_gradient(&t, &[0.0, 0.0], 1e-5);
    assert!(g.iter().all(|v| v.abs() < 1e-8));
    let mut a = vec![0.0; 2];
    t.log_density_gradient(&[0.0, 0.0], &mut a);
    assert!(a.iter().all(|v| v.abs() < 1e-8));
}

#[test]
fn reproducible_and_independent_of_jobs() {
    let t = Gaussian { dim: 2, rho: 0.3, sd: 1.0 };
    let a = run_hmc(&t, &[0.0, 0.0], &config(200, 5)).unwrap();
    let b = run_hmc(&t, &[0.0, 0.0], &config(200, 5)).unwrap();
    assert_eq!(a, b);
    let c = run_hmc(&t, &[0.0, 0.0], &SamplerConfig { jobs: 4, ..config(200, 5) }).unwrap();
    assert_eq!(a.values, c.values);
    let d = run_hmc(&t, &[0.0, 0.0], &config(200, 6)).unwrap();
    assert_ne!(a.values, d.values);
}

#[test]
fn store_round_trip() {
    let t = Gaussian { dim: 2, rho: 0.3, sd: 1.0 };
    let draws = run_hmc(&t, &[0.0, 0.0], &config(50, 7)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    save_draws(&draws, dir.path()).unwrap();
    let back = load_draws(dir.path()).unwrap();
    assert_eq!(back, draws);
    let first = std::fs::read(dir.path().join("draws.f64")).unwrap();
    save_draws(&back, dir.path()).unwrap();
    assert_eq!(std::fs::read(dir.path().join("draws.f64")).unwrap(), first);

    let mut bytes = first.clone();
    bytes[3] ^= 1;
    std::fs::write(dir.path().join("draws.f64"), &bytes).unwrap();
    assert!(matches!(load_draws(dir.path()), Err(HmcError::ManifestMismatch(_))));
    std::fs::write(dir.path().join("draws.f64"), &first[..16]).unwrap();
    assert!(matches!(load_draws(dir.path()), Err(HmcError::ManifestMismatch(_))));
    assert!(matches!(load_draws(&dir.path().join("missing")), Err(HmcError::IoFailure(_))));
}

#[test]
fn zero_replicates() {
    struct Echo;
    impl PosteriorPredictive for Echo {
        fn replicate(&self, draw: &[f64], _: &mut dyn rand::RngCore) -> Vec<f64> {
            draw.to_vec()
        }
    }
    let t = Gaussian { dim: 1, rho: 0.0, sd: 1.0 };
    let draws = run_hmc(&t, &[0.0], &config(20, 8)).unwrap();
    assert!(posterior_predictive_replicates(&draws, &Echo, 0, 1).is_empty());
    assert_eq!(posterior_predictive_replicates(&draws, &Echo, 5, 1).len(), 5);
    assert_eq!(short_step_density_gap(&[1.0, 2.0], &[], 0.1), 0.0);
}
