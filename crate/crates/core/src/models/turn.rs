//! Von Mises regression for turn angle with a speed-dependent concentration.

use serde::{Deserialize, Serialize};

use crate::hmc::LogDensity;

use super::circular::{log_bessel_i0_and_ratio, log_i0_and_ratio_f64, tan_half_inverse_link};
use super::design::{dot, GroupLevels, ModelSpec, QrDesign, TurnData};
use super::prior::{half_t_on_log, normal, random_effects, student_t, PriorConfig};
use super::ModelError;

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Natural-scale parameters of the turn model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TurnModelParams {
    pub alpha0: f64,
    pub beta: Vec<f64>,
    pub gamma0: f64,
    /// Change in log concentration per yard of step length.
    pub gamma1: f64,
    pub tau_w: f64,
    /// One effect per carrier level.
    pub w: Vec<f64>,
}

impl TurnModelParams {
    pub fn to_vec(&self) -> Vec<f64> {
        let mut out = vec![self.alpha0];
        out.extend_from_slice(&self.beta);
        out.extend([self.gamma0, self.gamma1, self.tau_w]);
        out.extend_from_slice(&self.w);
        out
    }

    pub fn from_slice(v: &[f64], p: usize, n_carriers: usize) -> Result<Self, ModelError> {
        let expected = 4 + p + n_carriers;
        if v.len() != expected {
            return Err(ModelError::DimensionMismatch { expected, found: v.len() });
        }
        Ok(Self {
            alpha0: v[0],
            beta: v[1..1 + p].to_vec(),
            gamma0: v[1 + p],
            gamma1: v[2 + p],
            tau_w: v[3 + p],
            w: v[4 + p..].to_vec(),
        })
    }

    pub fn names(columns: &[String], levels: &GroupLevels) -> Vec<String> {
        let mut out = vec!["alpha0_turn".to_string()];
        out.extend(columns.iter().map(|c| format!("beta_turn[{c}]")));
        out.extend(["gamma0".to_string(), "gamma1".to_string(), "tau_w".to_string()]);
        out.extend(levels.carriers.iter().map(|c| format!("w[{c}]")));
        out
    }

    /// Mean direction for one standardized covariate row.
    pub fn mean_direction(&self, x: &[f64]) -> f64 {
        tan_half_inverse_link(self.alpha0 + dot(x, &self.beta))
    }

    /// Concentration after a step of length `step` by carrier level `carrier`.
    pub fn concentration(&self, step: f64, carrier: usize) -> f64 {
        (self.gamma0 + self.gamma1 * step + self.w[carrier]).exp()
    }

    fn check(&self, data: &TurnData) -> Result<(), ModelError> {
        for (found, expected) in [(self.beta.len(), data.p), (self.w.len(), data.n_carriers)] {
            if found != expected {
                return Err(ModelError::DimensionMismatch { expected, found });
            }
        }
        Ok(())
    }
}

/// Observation-by-observation von Mises log likelihood of `data`.
pub fn turn_log_likelihood(params: &TurnModelParams, data: &TurnData) -> Result<f64, ModelError> {
    params.check(data)?;
    let mut ll = 0.0;
    for i in 0..data.n {
        let mu = params.mean_direction(data.row(i));
        let kappa = params.concentration(data.step[i], data.carrier[i]);
        let (log_i0, _) = log_bessel_i0_and_ratio(kappa);
        ll += kappa * (data.turn[i] - mu).cos() - LN_2PI - log_i0;
    }
    Ok(ll)
}

/// Log prior density of natural-scale parameters (no Jacobian terms).
pub fn turn_log_prior(params: &TurnModelParams, prior: &PriorConfig) -> f64 {
    let mut sink = vec![0.0; params.w.len()];
    let (la, _) = student_t(params.alpha0, prior.alpha_turn_df, prior.alpha_turn_location, prior.alpha_turn_scale);
    let (lg, _) = normal(params.gamma0, prior.gamma0_mean, prior.gamma0_sd);
    let lt = half_t_on_log(params.tau_w.ln(), prior.half_t_df, prior.tau_w_scale).0 - params.tau_w.ln();
    let (rw, _) = random_effects(&params.w, params.tau_w.ln(), &mut sink);
    la + lg + lt + rw
}

/// Turn model bound to data, exposed to the sampler in coordinates
/// `[a, theta, c0, gamma1, ln tau_w, w]`. `(a, theta)` belong to the
/// orthogonalized design and `c0 = gamma0 + gamma1 * mean_step` centers the
/// concentration intercept.
#[derive(Debug, Clone)]
pub struct TurnModel {
    pub prior: PriorConfig,
    pub qr: QrDesign,
    pub levels: GroupLevels,
    pub columns: Vec<String>,
    pub mean_step: f64,
    data: TurnData,
    sin_turn: Vec<f64>,
    cos_turn: Vec<f64>,
    centered_step: Vec<f64>,
}

impl TurnModel {
    pub fn new(data: TurnData, spec: &ModelSpec, levels: GroupLevels) -> Result<Self, ModelError> {
        let qr = QrDesign::new(&data.x, data.n, data.p, &spec.turn.columns)?;
        let mean_step = data.step.iter().sum::<f64>() / data.n as f64;
        Ok(Self {
            prior: spec.prior.clone(),
            qr,
            levels,
            columns: spec.turn.columns.clone(),
            mean_step,
            sin_turn: data.turn.iter().map(|t| t.sin()).collect(),
            cos_turn: data.turn.iter().map(|t| t.cos()).collect(),
            centered_step: data.step.iter().map(|s| s - mean_step).collect(),
            data,
        })
    }

    pub fn data(&self) -> &TurnData {
        &self.data
    }

    fn p(&self) -> usize {
        self.data.p
    }

    pub fn params(&self, q: &[f64]) -> TurnModelParams {
        let p = self.p();
        let theta = &q[1..1 + p];
        TurnModelParams {
            alpha0: self.qr.alpha0(q[0], theta),
            beta: self.qr.beta(theta),
            gamma0: q[1 + p] - q[2 + p] * self.mean_step,
            gamma1: q[2 + p],
            tau_w: q[3 + p].exp(),
            w: q[4 + p..].to_vec(),
        }
    }

    pub fn unconstrain(&self, params: &TurnModelParams) -> Result<Vec<f64>, ModelError> {
        params.check(&self.data)?;
        let mut q = vec![self.qr.intercept_a(params.alpha0, &params.beta)];
        q.extend(self.qr.theta(&params.beta));
        q.extend([params.gamma0 + params.gamma1 * self.mean_step, params.gamma1, params.tau_w.ln()]);
        q.extend_from_slice(&params.w);
        Ok(q)
    }

    /// Natural-scale log posterior plus the log-Jacobian of `tau_w`.
    pub fn log_posterior(&self, params: &TurnModelParams) -> Result<f64, ModelError> {
        Ok(turn_log_likelihood(params, &self.data)? + turn_log_prior(params, &self.prior) + params.tau_w.ln())
    }
}

impl LogDensity for TurnModel {
    fn dim(&self) -> usize {
        4 + self.p() + self.data.n_carriers
    }

    fn log_density_gradient(&self, q: &[f64], grad: &mut [f64]) -> f64 {
        let p = self.p();
        let pr = &self.prior;
        grad.iter_mut().for_each(|g| *g = 0.0);
        let (a, theta) = (q[0], &q[1..1 + p]);
        let (c0, g1, lt) = (q[1 + p], q[2 + p], q[3 + p]);
        let w = &q[4 + p..];
        let mut lp = 0.0;
        let (mut d_a, mut d_c0, mut d_g1) = (0.0, 0.0, 0.0);
        let mut d_theta = vec![0.0; p];
        let mut d_w = vec![0.0; w.len()];
        for i in 0..self.data.n {
            let qi = self.qr.q_row(i);
            let eta = a + dot(qi, theta);
            // cos/sin of mu = 2 atan(eta) without trigonometric calls
            let h = 1.0 / (1.0 + eta * eta);
            let (cos_mu, sin_mu) = ((1.0 - eta * eta) * h, 2.0 * eta * h);
            let (st, ct) = (self.sin_turn[i], self.cos_turn[i]);
            let cos_d = ct * cos_mu + st * sin_mu;
            let sin_d = st * cos_mu - ct * sin_mu;
            let c = self.data.carrier[i];
            let log_kappa = c0 + g1 * self.centered_step[i] + w[c];
            let kappa = log_kappa.exp();
            let (log_i0, ratio) = log_i0_and_ratio_f64(kappa, log_kappa);
            lp += kappa * cos_d - LN_2PI - log_i0;
            let de = kappa * sin_d * 2.0 * h;
            d_a += de;
            for (d, &qv) in d_theta.iter_mut().zip(qi) {
                *d += de * qv;
            }
            let dk = kappa * (cos_d - ratio);
            d_c0 += dk;
            d_g1 += dk * self.centered_step[i];
            d_w[c] += dk;
        }
        let (la, da) = student_t(self.qr.alpha0(a, theta), pr.alpha_turn_df, pr.alpha_turn_location, pr.alpha_turn_scale);
        lp += la;
        d_a += da;
        for (d, o) in d_theta.iter_mut().zip(&self.qr.offset) {
            *d -= da * o;
        }
        let (lg, dg) = normal(c0 - g1 * self.mean_step, pr.gamma0_mean, pr.gamma0_sd);
        lp += lg;
        d_c0 += dg;
        d_g1 -= dg * self.mean_step;
        let (l, d) = half_t_on_log(lt, pr.half_t_df, pr.tau_w_scale);
        lp += l;
        grad[3 + p] += d;
        let (l, d) = random_effects(w, lt, &mut d_w);
        lp += l;
        grad[3 + p] += d;
        grad[0] = d_a;
        grad[1..1 + p].copy_from_slice(&d_theta);
        grad[1 + p] = d_c0;
        grad[2 + p] = d_g1;
        grad[4 + p..].copy_from_slice(&d_w);
        lp
    }

    fn parameter_names(&self) -> Vec<String> {
        TurnModelParams::names(&self.columns, &self.levels)
    }

    fn constrain(&self, q: &[f64]) -> Vec<f64> {
        self.params(q).to_vec()
    }
}
