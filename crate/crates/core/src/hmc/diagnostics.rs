//! Split-chain R-hat, effective sample size, and the diagnostics table.

use std::fmt::Write;

use serde::{Deserialize, Serialize};

use super::{HmcError, PosteriorDraws};

pub const RHAT_THRESHOLD: f64 = 1.01;
/// Conventional bulk-ESS bar.
pub const ESS_THRESHOLD: f64 = 400.0;

fn split(chains: &[Vec<f64>]) -> Vec<&[f64]> {
    let mut out = Vec::with_capacity(2 * chains.len());
    for c in chains {
        let half = c.len() / 2;
        out.push(&c[..half]);
        out.push(&c[c.len() - half..]);
    }
    out
}

fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

/// Within-chain variance `W` and between-chain variance `B` of split chains.
fn within_between(parts: &[&[f64]]) -> (f64, f64, Vec<f64>) {
    let n = parts[0].len() as f64;
    let means: Vec<f64> = parts.iter().map(|p| mean(p)).collect();
    let w = parts
        .iter()
        .zip(&means)
        .map(|(p, m)| p.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0))
        .sum::<f64>()
        / parts.len() as f64;
    let grand = mean(&means);
    let b = n * means.iter().map(|m| (m - grand) * (m - grand)).sum::<f64>() / (parts.len() as f64 - 1.0);
    (w, b, means)
}

fn check(chains: &[Vec<f64>]) -> Result<(), HmcError> {
    let shortest = chains.iter().map(|c| c.len()).min().unwrap_or(0);
    if chains.len() < 2 || shortest < 4 {
        return Err(HmcError::TooFewDraws { needed: 4 });
    }
    Ok(())
}

/// Split-chain potential scale reduction for one parameter.
///
/// The pooled variance estimate is `W + B/n`, which never falls below `W`,
/// so the statistic is at least 1 and equals 1 exactly when every split
/// half has the same mean. Returns NaN when all draws are identical.
pub fn split_rhat(chains: &[Vec<f64>]) -> Result<f64, HmcError> {
    check(chains)?;
    let parts = split(chains);
    let n = parts[0].len() as f64;
    let (w, b, _) = within_between(&parts);
    if w == 0.0 {
        return Ok(if b == 0.0 { f64::NAN } else { f64::INFINITY });
    }
    Ok(((w + b / n) / w).sqrt())
}

/// Effective sample size with Geyer's initial positive, monotone sequence
/// over split chains. A parameter with no variation has ESS 0.
pub fn ess(chains: &[Vec<f64>]) -> Result<f64, HmcError> {
    check(chains)?;
    let parts = split(chains);
    let m = parts.len();
    let n = parts[0].len();
    let (w, b, means) = within_between(&parts);
    if w == 0.0 {
        return Ok(0.0);
    }
    let nf = n as f64;
    let var_plus = (nf - 1.0) / nf * w + b / nf;
    let acov_mean = |lag: usize| -> f64 {
        let mut total = 0.0;
        for (p, mu) in parts.iter().zip(&means) {
            let s: f64 = (0..n - lag).map(|i| (p[i] - mu) * (p[i + lag] - mu)).sum();
            total += s / nf;
        }
        total / m as f64
    };
    let rho_at = |lag: usize| 1.0 - (w - acov_mean(lag)) / var_plus;
    let mut rho = vec![0.0; n];
    rho[0] = 1.0;
    let mut even = 1.0;
    let mut odd = rho_at(1);
    rho[1] = odd;
    let mut t = 1;
    while t + 4 < n && even + odd > 0.0 {
        even = rho_at(t + 1);
        odd = rho_at(t + 2);
        if even + odd >= 0.0 {
            rho[t + 1] = even;
            rho[t + 2] = odd;
        }
        t += 2;
    }
    let max_t = t;
    if rho[max_t] < 0.0 {
        rho[max_t] = 0.0;
    }
    let mut t = 1;
    while t + 2 <= max_t {
        if rho[t + 1] + rho[t + 2] > rho[t - 1] + rho[t] {
            rho[t + 1] = (rho[t - 1] + rho[t]) / 2.0;
            rho[t + 2] = rho[t + 1];
        }
        t += 2;
    }
    let total = (m * n) as f64;
    let tau = (-1.0 + 2.0 * rho[..max_t].iter().sum::<f64>() + rho[max_t]).max(1.0 / total.log10());
    Ok(total / tau)
}

/// R-hat for every stored parameter.
pub fn compute_rhat(draws: &PosteriorDraws) -> Result<Vec<f64>, HmcError> {
    (0..draws.n_params()).map(|j| split_rhat(&draws.chains(j))).collect()
}

/// ESS for every stored parameter.
pub fn compute_ess(draws: &PosteriorDraws) -> Result<Vec<f64>, HmcError> {
    (0..draws.n_params()).map(|j| ess(&draws.chains(j))).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub names: Vec<String>,
    pub rhat: Vec<f64>,
    pub ess: Vec<f64>,
    pub divergence_count: usize,
    pub acceptance_rate: f64,
}

impl Diagnostics {
    /// Parameters whose R-hat or ESS misses the thresholds (degenerate ones included).
    pub fn failures(&self) -> Vec<usize> {
        (0..self.names.len())
            .filter(|&j| !(self.rhat[j] < RHAT_THRESHOLD) || !(self.ess[j] > ESS_THRESHOLD))
            .collect()
    }

    pub fn passes(&self) -> bool {
        self.failures().is_empty()
    }

    /// Fixed-width text table followed by a one-line summary.
    pub fn report(&self) -> String {
        let width = self.names.iter().map(|n| n.len()).max().unwrap_or(4).max(9);
        let mut out = String::new();
        let _ = writeln!(out, "{:<width$}  {:>8}  {:>9}  status", "parameter", "rhat", "ess");
        for j in 0..self.names.len() {
            let ok = self.rhat[j] < RHAT_THRESHOLD && self.ess[j] > ESS_THRESHOLD;
            let _ = writeln!(
                out,
                "{:<width$}  {:>8.4}  {:>9.1}  {}",
                self.names[j],
                self.rhat[j],
                self.ess[j],
                if ok { "ok" } else { "FAIL" }
            );
        }
        let fails = self.failures().len();
        let _ = writeln!(
            out,
            "divergences {}  acceptance {:.3}  {}",
            self.divergence_count,
            self.acceptance_rate,
            if fails == 0 {
                format!("PASS (rhat < {RHAT_THRESHOLD}, ess > {ESS_THRESHOLD})")
            } else {
                format!("FAIL ({fails} parameters)")
            }
        );
        out
    }
}

pub fn diagnose(draws: &PosteriorDraws) -> Result<Diagnostics, HmcError> {
    let n_chains = draws.chain_stats.len().max(1) as f64;
    Ok(Diagnostics {
        names: draws.names.clone(),
        rhat: compute_rhat(draws)?,
        ess: compute_ess(draws)?,
        divergence_count: draws.divergences(),
        acceptance_rate: draws.chain_stats.iter().map(|s| s.accept_rate).sum::<f64>() / n_chains,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn normal_chains(means: &[f64], n: usize, seed: u64) -> Vec<Vec<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        means.iter().map(|m| (0..n).map(|_| m + rng.sample::<f64, _>(StandardNormal)).collect()).collect()
    }

    #[test]
    fn identical_halves_give_exactly_one() {
        let block = normal_chains(&[0.0], 500, 1).remove(0);
        let chain: Vec<f64> = block.iter().chain(&block).copied().collect();
        let r = split_rhat(&[chain.clone(), chain.clone(), chain]).unwrap();
        assert!((r - 1.0).abs() < 1e-10);
    }

    #[test]
    fn separated_chains_flagged() {
        let r = split_rhat(&normal_chains(&[0.0, 10.0], 1000, 2)).unwrap();
        assert!(r > 1.5, "{r}");
        // plug-in value: B/n is the variance of means ~ 25.0 (with four halves 100/3), W ~ 1
        let expected = (1.0f64 + 100.0 / 3.0).sqrt();
        assert!((r - expected).abs() < 0.3, "{r} vs {expected}");
    }

    #[test]
    fn well_mixed_chains_pass() {
        let mut under = 0;
        for seed in 0..20 {
            if split_rhat(&normal_chains(&[0.0; 4], 2000, 10 + seed)).unwrap() < 1.01 {
                under += 1;
            }
            assert!(split_rhat(&normal_chains(&[0.0; 4], 2000, 10 + seed)).unwrap() >= 1.0);
        }
        assert!(under >= 19);
    }

    #[test]
    fn white_noise_ess() {
        let e = ess(&normal_chains(&[0.0; 4], 2000, 3)).unwrap();
        assert!((e - 8000.0).abs() < 800.0, "{e}");
    }

    #[test]
    fn ar1_ess() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let phi: f64 = 0.9;
        let chains: Vec<Vec<f64>> = (0..4)
            .map(|_| {
                let mut x = rng.sample::<f64, _>(StandardNormal) / (1.0 - phi * phi).sqrt();
                (0..5000)
                    .map(|_| {
                        x = phi * x + rng.sample::<f64, _>(StandardNormal);
                        x
                    })
                    .collect()
            })
            .collect();
        let e = ess(&chains).unwrap();
        let want = 20_000.0 * (1.0 - phi) / (1.0 + phi);
        assert!((e - want).abs() < 0.25 * want, "{e} vs {want}");
    }

    #[test]
    fn constant_chain_is_degenerate() {
        let c = vec![vec![1.5; 100], vec![1.5; 100]];
        assert_eq!(ess(&c).unwrap(), 0.0);
        assert!(split_rhat(&c).unwrap().is_nan());
    }

    #[test]
    fn too_few_draws() {
        assert!(matches!(split_rhat(&[vec![0.0; 3], vec![1.0; 3]]), Err(HmcError::TooFewDraws { .. })));
        assert!(matches!(ess(&[vec![0.0; 10]]), Err(HmcError::TooFewDraws { .. })));
    }
}
