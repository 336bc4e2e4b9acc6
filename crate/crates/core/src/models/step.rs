//! Arcsine-scale Gaussian model for step length with carrier and defense effects.

use serde::{Deserialize, Serialize};

use rand::{Rng, RngCore};
use rand_distr::StandardNormal;

use crate::hmc::{LogDensity, PosteriorPredictive};

use super::design::{dot, GroupLevels, ModelSpec, QrDesign, StepData};
use super::transform::inverse_arcsine_transform;
use super::prior::{half_t_on_log, random_effects, student_t, PriorConfig};
use super::ModelError;

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Natural-scale parameters of the step model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepModelParams {
    pub alpha0: f64,
    pub beta: Vec<f64>,
    pub sigma: f64,
    pub tau_u: f64,
    pub tau_v: f64,
    /// One effect per carrier level.
    pub u: Vec<f64>,
    /// One effect per defense level.
    pub v: Vec<f64>,
}

impl StepModelParams {
    pub fn to_vec(&self) -> Vec<f64> {
        let mut out = vec![self.alpha0];
        out.extend_from_slice(&self.beta);
        out.extend([self.sigma, self.tau_u, self.tau_v]);
        out.extend_from_slice(&self.u);
        out.extend_from_slice(&self.v);
        out
    }

    pub fn from_slice(v: &[f64], p: usize, n_carriers: usize, n_defenses: usize) -> Result<Self, ModelError> {
        let expected = 4 + p + n_carriers + n_defenses;
        if v.len() != expected {
            return Err(ModelError::DimensionMismatch { expected, found: v.len() });
        }
        Ok(Self {
            alpha0: v[0],
            beta: v[1..1 + p].to_vec(),
            sigma: v[1 + p],
            tau_u: v[2 + p],
            tau_v: v[3 + p],
            u: v[4 + p..4 + p + n_carriers].to_vec(),
            v: v[4 + p + n_carriers..].to_vec(),
        })
    }

    pub fn names(columns: &[String], levels: &GroupLevels) -> Vec<String> {
        let mut out = vec!["alpha0_step".to_string()];
        out.extend(columns.iter().map(|c| format!("beta_step[{c}]")));
        out.extend(["sigma".to_string(), "tau_u".to_string(), "tau_v".to_string()]);
        out.extend(levels.carriers.iter().map(|c| format!("u[{c}]")));
        out.extend(levels.defenses.iter().map(|d| format!("v[{d}]")));
        out
    }

    /// Mean of the transformed step for one standardized covariate row.
    pub fn linear_predictor(&self, x: &[f64], carrier: usize, defense: usize) -> f64 {
        self.alpha0 + dot(x, &self.beta) + self.u[carrier] + self.v[defense]
    }

    fn check(&self, data: &StepData) -> Result<(), ModelError> {
        let dims = [(self.beta.len(), data.p), (self.u.len(), data.n_carriers), (self.v.len(), data.n_defenses)];
        for (found, expected) in dims {
            if found != expected {
                return Err(ModelError::DimensionMismatch { expected, found });
            }
        }
        Ok(())
    }
}

/// Observation-by-observation log likelihood of `data` on the arcsine scale.
pub fn step_log_likelihood(params: &StepModelParams, data: &StepData) -> Result<f64, ModelError> {
    params.check(data)?;
    let mut ll = 0.0;
    for i in 0..data.n {
        let mu = params.linear_predictor(data.row(i), data.carrier[i], data.defense[i]);
        let z = (data.response[i] - mu) / params.sigma;
        ll += -0.5 * LN_2PI - params.sigma.ln() - 0.5 * z * z;
    }
    Ok(ll)
}

/// Log prior density of natural-scale parameters (no Jacobian terms).
pub fn step_log_prior(params: &StepModelParams, prior: &PriorConfig) -> f64 {
    let mut sink = vec![0.0; params.u.len().max(params.v.len())];
    let (la, _) = student_t(params.alpha0, prior.alpha_step_df, prior.alpha_step_location, prior.alpha_step_scale);
    let ls = half_t_on_log(params.sigma.ln(), prior.half_t_df, prior.sigma_scale).0 - params.sigma.ln();
    let lu = half_t_on_log(params.tau_u.ln(), prior.half_t_df, prior.tau_u_scale).0 - params.tau_u.ln();
    let lv = half_t_on_log(params.tau_v.ln(), prior.half_t_df, prior.tau_v_scale).0 - params.tau_v.ln();
    let (ru, _) = random_effects(&params.u, params.tau_u.ln(), &mut sink);
    let (rv, _) = random_effects(&params.v, params.tau_v.ln(), &mut sink);
    la + ls + lu + lv + ru + rv
}

/// Step model bound to data, exposed to the sampler in coordinates
/// `[a, theta, ln sigma, ln tau_u, ln tau_v, u, v]` where `(a, theta)` are the
/// intercept and coefficients of the orthogonalized design.
///
/// The likelihood is evaluated through the cross-products of the full design
/// `D = [1, Q, carrier indicators, defense indicators]`, so a gradient costs
/// `O(dim^2)` regardless of the number of observations.
#[derive(Debug, Clone)]
pub struct StepModel {
    pub prior: PriorConfig,
    pub qr: QrDesign,
    pub levels: GroupLevels,
    pub columns: Vec<String>,
    data: StepData,
    s_max: f64,
    /// Row-major `m x m` with `m = 1 + p + J + K`.
    gram: Vec<f64>,
    cross: Vec<f64>,
    yy: f64,
}

impl StepModel {
    pub fn new(data: StepData, spec: &ModelSpec, levels: GroupLevels) -> Result<Self, ModelError> {
        let qr = QrDesign::new(&data.x, data.n, data.p, &spec.step.columns)?;
        let (p, j) = (data.p, data.n_carriers);
        let m = 1 + p + j + data.n_defenses;
        let mut gram = vec![0.0; m * m];
        let mut cross = vec![0.0; m];
        let mut yy = 0.0;
        let mut idx = Vec::with_capacity(p + 3);
        let mut val = Vec::with_capacity(p + 3);
        for i in 0..data.n {
            idx.clear();
            val.clear();
            idx.push(0);
            val.push(1.0);
            for (c, &qv) in qr.q_row(i).iter().enumerate() {
                idx.push(1 + c);
                val.push(qv);
            }
            idx.push(1 + p + data.carrier[i]);
            val.push(1.0);
            idx.push(1 + p + j + data.defense[i]);
            val.push(1.0);
            let y = data.response[i];
            yy += y * y;
            for (a, (&ia, &va)) in idx.iter().zip(&val).enumerate() {
                cross[ia] += va * y;
                for (&ib, &vb) in idx[a..].iter().zip(&val[a..]) {
                    gram[ia * m + ib] += va * vb;
                }
            }
        }
        for a in 0..m {
            for b in 0..a {
                gram[a * m + b] = gram[b * m + a];
            }
        }
        Ok(Self { prior: spec.prior.clone(), qr, levels, columns: spec.step.columns.clone(), data, s_max: spec.s_max, gram, cross, yy })
    }

    pub fn data(&self) -> &StepData {
        &self.data
    }

    fn p(&self) -> usize {
        self.data.p
    }

    /// Natural-scale parameters at sampler coordinates `q`.
    pub fn params(&self, q: &[f64]) -> StepModelParams {
        let p = self.p();
        let j = self.data.n_carriers;
        let theta = &q[1..1 + p];
        StepModelParams {
            alpha0: self.qr.alpha0(q[0], theta),
            beta: self.qr.beta(theta),
            sigma: q[1 + p].exp(),
            tau_u: q[2 + p].exp(),
            tau_v: q[3 + p].exp(),
            u: q[4 + p..4 + p + j].to_vec(),
            v: q[4 + p + j..].to_vec(),
        }
    }

    /// Sampler coordinates of natural-scale parameters.
    pub fn unconstrain(&self, params: &StepModelParams) -> Result<Vec<f64>, ModelError> {
        params.check(&self.data)?;
        let mut q = vec![self.qr.intercept_a(params.alpha0, &params.beta)];
        q.extend(self.qr.theta(&params.beta));
        q.extend([params.sigma.ln(), params.tau_u.ln(), params.tau_v.ln()]);
        q.extend_from_slice(&params.u);
        q.extend_from_slice(&params.v);
        Ok(q)
    }

    /// Natural-scale log posterior plus the log-Jacobian of the three scales.
    pub fn log_posterior(&self, params: &StepModelParams) -> Result<f64, ModelError> {
        Ok(step_log_likelihood(params, &self.data)?
            + step_log_prior(params, &self.prior)
            + params.sigma.ln()
            + params.tau_u.ln()
            + params.tau_v.ln())
    }
}

impl LogDensity for StepModel {
    fn dim(&self) -> usize {
        4 + self.p() + self.data.n_carriers + self.data.n_defenses
    }

    fn log_density_gradient(&self, q: &[f64], grad: &mut [f64]) -> f64 {
        let p = self.p();
        let m = self.cross.len();
        let pr = &self.prior;
        grad.iter_mut().for_each(|g| *g = 0.0);
        // b = [a, theta, u, v]; the scale block sits between theta and u in q
        let q_of = |k: usize| if k < 1 + p { k } else { k + 3 };
        let b: Vec<f64> = (0..m).map(|k| q[q_of(k)]).collect();
        let mut rss = self.yy;
        for a in 0..m {
            let row = &self.gram[a * m..(a + 1) * m];
            let gb = dot(row, &b);
            rss += b[a] * (gb - 2.0 * self.cross[a]);
            grad[q_of(a)] = gb - self.cross[a];
        }
        let (ls, lu, lv) = (q[1 + p], q[2 + p], q[3 + p]);
        let inv_s2 = (-2.0 * ls).exp();
        let n = self.data.n as f64;
        for a in 0..m {
            grad[q_of(a)] *= -inv_s2;
        }
        let mut lp = -0.5 * n * LN_2PI - n * ls - 0.5 * rss * inv_s2;
        grad[1 + p] = -n + rss * inv_s2;

        let theta = &q[1..1 + p];
        let (la, da) = student_t(self.qr.alpha0(q[0], theta), pr.alpha_step_df, pr.alpha_step_location, pr.alpha_step_scale);
        lp += la;
        grad[0] += da;
        for (g, o) in grad[1..1 + p].iter_mut().zip(&self.qr.offset) {
            *g -= da * o;
        }
        for (k, (lx, scale)) in [(ls, pr.sigma_scale), (lu, pr.tau_u_scale), (lv, pr.tau_v_scale)].into_iter().enumerate() {
            let (l, d) = half_t_on_log(lx, pr.half_t_df, scale);
            lp += l;
            grad[1 + p + k] += d;
        }
        let j = self.data.n_carriers;
        let (head, effects) = grad.split_at_mut(4 + p);
        let (u_block, v_block) = effects.split_at_mut(j);
        let (l, d) = random_effects(&q[4 + p..4 + p + j], lu, u_block);
        lp += l;
        head[2 + p] += d;
        let (l, d) = random_effects(&q[4 + p + j..], lv, v_block);
        lp += l;
        head[3 + p] += d;
        lp
    }

    fn parameter_names(&self) -> Vec<String> {
        StepModelParams::names(&self.columns, &self.levels)
    }

    fn constrain(&self, q: &[f64]) -> Vec<f64> {
        self.params(q).to_vec()
    }
}

impl StepModel {
    /// Upper end of the step-length support used by the transform.
    pub fn s_max(&self) -> f64 {
        self.s_max
    }
}

impl PosteriorPredictive for StepModel {
    /// Replicated step lengths in yards for a stored natural-scale draw.
    fn replicate(&self, draw: &[f64], rng: &mut dyn RngCore) -> Vec<f64> {
        let d = &self.data;
        let params = StepModelParams::from_slice(draw, d.p, d.n_carriers, d.n_defenses).expect("draw matches model");
        (0..d.n)
            .map(|i| {
                let mu = params.linear_predictor(d.row(i), d.carrier[i], d.defense[i]);
                let z = mu + params.sigma * rng.sample::<f64, _>(StandardNormal);
                inverse_arcsine_transform(z, self.s_max).0
            })
            .collect()
    }
}
