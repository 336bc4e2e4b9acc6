//! Deliberately naive re-implementations used to cross-check the models.
//!
//! Nothing here calls into `models`, `hmc` or `scalar`; every density,
//! transform and special function is spelled out again with plain arithmetic.

use crate::models::{ComparisonParams, StepModelParams, TurnModelParams};

/// One observation with its standardized covariates.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleObservation {
    pub x: Vec<f64>,
    /// Raw step length in yards.
    pub step_length: f64,
    pub turn_angle: f64,
    pub carrier: usize,
    pub defense: usize,
}

/// Which density to sum, with its natural-scale parameters.
#[derive(Debug, Clone, Copy)]
pub enum OracleModel<'a> {
    /// Normal on `asin(sqrt(s / s_max))`, no Jacobian.
    ArcsineStep { params: &'a StepModelParams, s_max: f64 },
    Turn(&'a TurnModelParams),
    Gamma(&'a ComparisonParams),
    LogNormal(&'a ComparisonParams),
}

fn linear(x: &[f64], beta: &[f64]) -> f64 {
    let mut acc = 0.0;
    for i in 0..x.len() {
        acc += x[i] * beta[i];
    }
    acc
}

fn normal_log_pdf(y: f64, mean: f64, sd: f64) -> f64 {
    let two_pi = 2.0 * std::f64::consts::PI;
    -0.5 * two_pi.ln() - sd.ln() - (y - mean) * (y - mean) / (2.0 * sd * sd)
}

/// `log I0(kappa)` by direct summation of the power series in log space.
pub fn oracle_log_i0(kappa: f64) -> f64 {
    if kappa == 0.0 {
        return 0.0;
    }
    let half_log = (kappa / 2.0).ln();
    let n_terms = (2.0 * kappa + 60.0) as usize;
    let mut logs = Vec::with_capacity(n_terms);
    let mut log_fact = 0.0;
    for m in 0..n_terms {
        if m > 0 {
            log_fact += (m as f64).ln();
        }
        logs.push(2.0 * m as f64 * half_log - 2.0 * log_fact);
    }
    let top = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    top + logs.iter().map(|l| (l - top).exp()).sum::<f64>().ln()
}

/// `ln Gamma(x)` for `x > 0`: shift up past 30 and use the Stirling series.
pub fn oracle_ln_gamma(mut x: f64) -> f64 {
    let mut shift = 0.0;
    while x < 30.0 {
        shift -= x.ln();
        x += 1.0;
    }
    let inv = 1.0 / x;
    let inv2 = inv * inv;
    let series = inv * (1.0 / 12.0 - inv2 * (1.0 / 360.0 - inv2 * (1.0 / 1260.0 - inv2 / 1680.0)));
    shift + (x - 0.5) * x.ln() - x + 0.5 * (2.0 * std::f64::consts::PI).ln() + series
}

/// Sum of per-observation log densities of `data` under `model`.
pub fn brute_force_density_oracle(model: OracleModel<'_>, data: &[OracleObservation]) -> f64 {
    let mut total = 0.0;
    for obs in data {
        total += match model {
            OracleModel::ArcsineStep { params, s_max } => {
                let z = (obs.step_length / s_max).sqrt().asin();
                let mean = params.alpha0 + linear(&obs.x, &params.beta) + params.u[obs.carrier] + params.v[obs.defense];
                normal_log_pdf(z, mean, params.sigma)
            }
            OracleModel::Turn(p) => {
                let mu = 2.0 * (p.alpha0 + linear(&obs.x, &p.beta)).atan();
                let kappa = (p.gamma0 + p.gamma1 * obs.step_length + p.w[obs.carrier]).exp();
                kappa * (obs.turn_angle - mu).cos() - (2.0 * std::f64::consts::PI).ln() - oracle_log_i0(kappa)
            }
            OracleModel::Gamma(p) => {
                let mean = (p.alpha0 + linear(&obs.x, &p.beta) + p.u[obs.carrier] + p.v[obs.defense]).exp();
                let shape = p.dispersion;
                let rate = shape / mean;
                shape * rate.ln() - oracle_ln_gamma(shape) + (shape - 1.0) * obs.step_length.ln() - rate * obs.step_length
            }
            OracleModel::LogNormal(p) => {
                let mean = p.alpha0 + linear(&obs.x, &p.beta) + p.u[obs.carrier] + p.v[obs.defense];
                normal_log_pdf(obs.step_length.ln(), mean, p.dispersion) - obs.step_length.ln()
            }
        };
    }
    total
}

/// Central differences of `f` at `x` with step `h` in every coordinate.
pub fn finite_difference_gradient<F: Fn(&[f64]) -> f64>(f: F, x: &[f64], h: f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    let mut out = Vec::with_capacity(x.len());
    for i in 0..x.len() {
        probe[i] = x[i] + h;
        let up = f(&probe);
        probe[i] = x[i] - h;
        let down = f(&probe);
        probe[i] = x[i];
        out.push((up - down) / (2.0 * h));
    }
    out
}
