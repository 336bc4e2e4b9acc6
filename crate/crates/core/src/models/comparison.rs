//! Gamma and log-normal step-length models used to check the arcsine model.
//!
//! Both share the step model's mean structure on the log scale:
//! `log E[s] = alpha0 + x'beta + u[carrier] + v[defense]` for the Gamma
//! model and `log s ~ N(alpha0 + x'beta + u + v, sigma^2)` for the log-normal.

use serde::{Deserialize, Serialize};

use rand::{Rng, RngCore};
use rand_distr::{Distribution, Gamma, StandardNormal};

use crate::hmc::{LogDensity, PosteriorPredictive};

use super::design::{dot, GroupLevels, ModelSpec, MovementRow, QrDesign, StepData};
use super::prior::{half_t_on_log, random_effects, student_t, PriorConfig};
use super::special::{digamma, ln_gamma};
use super::step::{StepModel, StepModelParams};
use super::ModelError;

/// Offset added to zero step lengths before taking logs.
pub const ZERO_STEP_OFFSET: f64 = 1e-6;

const LN_2PI: f64 = 1.837_877_066_409_345_5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ComparisonFamily {
    Gamma,
    LogNormal,
}

/// Natural-scale parameters shared by both comparison families. `dispersion`
/// is the Gamma shape or the log-normal standard deviation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonParams {
    pub alpha0: f64,
    pub beta: Vec<f64>,
    pub dispersion: f64,
    pub tau_u: f64,
    pub tau_v: f64,
    pub u: Vec<f64>,
    pub v: Vec<f64>,
}

impl ComparisonParams {
    pub fn log_mean(&self, x: &[f64], carrier: usize, defense: usize) -> f64 {
        self.alpha0 + dot(x, &self.beta) + self.u[carrier] + self.v[defense]
    }

    pub fn to_vec(&self) -> Vec<f64> {
        StepModelParams::from(self.clone()).to_vec()
    }

    pub fn from_slice(v: &[f64], p: usize, n_carriers: usize, n_defenses: usize) -> Result<Self, ModelError> {
        StepModelParams::from_slice(v, p, n_carriers, n_defenses).map(Self::from)
    }
}

impl From<StepModelParams> for ComparisonParams {
    fn from(s: StepModelParams) -> Self {
        Self { alpha0: s.alpha0, beta: s.beta, dispersion: s.sigma, tau_u: s.tau_u, tau_v: s.tau_v, u: s.u, v: s.v }
    }
}

impl From<ComparisonParams> for StepModelParams {
    fn from(c: ComparisonParams) -> Self {
        Self { alpha0: c.alpha0, beta: c.beta, sigma: c.dispersion, tau_u: c.tau_u, tau_v: c.tau_v, u: c.u, v: c.v }
    }
}

/// Raw step lengths with zeros moved to [`ZERO_STEP_OFFSET`]; returns the
/// data and the number of offset observations.
pub fn positive_step_data(
    rows: &[MovementRow],
    spec: &ModelSpec,
    levels: &GroupLevels,
) -> Result<(StepData, usize), ModelError> {
    let wide = ModelSpec { s_max: f64::MAX, ..spec.clone() };
    let mut data = StepData::build(rows, &wide, levels)?;
    let mut offset = 0;
    for (y, r) in data.response.iter_mut().zip(rows) {
        if r.step_length < 0.0 {
            return Err(ModelError::NonPositiveResponse(r.step_length));
        }
        *y = if r.step_length == 0.0 {
            offset += 1;
            ZERO_STEP_OFFSET
        } else {
            r.step_length
        };
    }
    Ok((data, offset))
}

/// Log likelihood of raw positive step lengths (`data.response`) under a
/// comparison family.
pub fn comparison_log_likelihood(
    family: ComparisonFamily,
    params: &ComparisonParams,
    data: &StepData,
) -> Result<f64, ModelError> {
    let mut ll = 0.0;
    for i in 0..data.n {
        let s = data.response[i];
        if !(s > 0.0) {
            return Err(ModelError::NonPositiveResponse(s));
        }
        let eta = params.log_mean(data.row(i), data.carrier[i], data.defense[i]);
        ll += match family {
            ComparisonFamily::Gamma => {
                let k = params.dispersion;
                k * (k.ln() - eta) - ln_gamma(k) + (k - 1.0) * s.ln() - k * s * (-eta).exp()
            }
            ComparisonFamily::LogNormal => {
                let sd = params.dispersion;
                let z = (s.ln() - eta) / sd;
                -0.5 * LN_2PI - sd.ln() - 0.5 * z * z - s.ln()
            }
        };
    }
    Ok(ll)
}

/// Log-normal model: the arcsine step model machinery applied to `log s`.
#[derive(Debug, Clone)]
pub struct LogNormalStepModel {
    inner: StepModel,
    sum_log_s: f64,
}

impl LogNormalStepModel {
    /// `data.response` must hold raw positive step lengths.
    pub fn new(mut data: StepData, spec: &ModelSpec, levels: GroupLevels) -> Result<Self, ModelError> {
        let mut sum_log_s = 0.0;
        for y in data.response.iter_mut() {
            if !(*y > 0.0) {
                return Err(ModelError::NonPositiveResponse(*y));
            }
            *y = y.ln();
            sum_log_s += *y;
        }
        Ok(Self { inner: StepModel::new(data, spec, levels)?, sum_log_s })
    }

    pub fn params(&self, q: &[f64]) -> ComparisonParams {
        self.inner.params(q).into()
    }

    pub fn unconstrain(&self, params: &ComparisonParams) -> Result<Vec<f64>, ModelError> {
        self.inner.unconstrain(&params.clone().into())
    }

    pub fn data(&self) -> &StepData {
        self.inner.data()
    }
}

impl LogDensity for LogNormalStepModel {
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn log_density_gradient(&self, q: &[f64], grad: &mut [f64]) -> f64 {
        // Jacobian of s -> log s
        self.inner.log_density_gradient(q, grad) - self.sum_log_s
    }

    fn parameter_names(&self) -> Vec<String> {
        let mut names = self.inner.parameter_names();
        names[1 + self.inner.qr.p] = "sigma_log".into();
        names
    }

    fn constrain(&self, q: &[f64]) -> Vec<f64> {
        self.inner.constrain(q)
    }
}

/// Gamma model in sampler coordinates `[a, theta, ln shape, ln tau_u, ln tau_v, u, v]`.
#[derive(Debug, Clone)]
pub struct GammaStepModel {
    pub prior: PriorConfig,
    pub qr: QrDesign,
    pub levels: GroupLevels,
    pub columns: Vec<String>,
    data: StepData,
    sum_log_s: f64,
}

impl GammaStepModel {
    /// `data.response` must hold raw positive step lengths.
    pub fn new(data: StepData, spec: &ModelSpec, levels: GroupLevels) -> Result<Self, ModelError> {
        if let Some(bad) = data.response.iter().find(|s| !(**s > 0.0)) {
            return Err(ModelError::NonPositiveResponse(*bad));
        }
        let qr = QrDesign::new(&data.x, data.n, data.p, &spec.step.columns)?;
        let sum_log_s = data.response.iter().map(|s| s.ln()).sum();
        Ok(Self { prior: spec.prior.clone(), qr, levels, columns: spec.step.columns.clone(), data, sum_log_s })
    }

    pub fn data(&self) -> &StepData {
        &self.data
    }

    pub fn params(&self, q: &[f64]) -> ComparisonParams {
        let p = self.data.p;
        let j = self.data.n_carriers;
        let theta = &q[1..1 + p];
        ComparisonParams {
            alpha0: self.qr.alpha0(q[0], theta),
            beta: self.qr.beta(theta),
            dispersion: q[1 + p].exp(),
            tau_u: q[2 + p].exp(),
            tau_v: q[3 + p].exp(),
            u: q[4 + p..4 + p + j].to_vec(),
            v: q[4 + p + j..].to_vec(),
        }
    }

    pub fn unconstrain(&self, params: &ComparisonParams) -> Result<Vec<f64>, ModelError> {
        let mut q = vec![self.qr.intercept_a(params.alpha0, &params.beta)];
        q.extend(self.qr.theta(&params.beta));
        q.extend([params.dispersion.ln(), params.tau_u.ln(), params.tau_v.ln()]);
        q.extend_from_slice(&params.u);
        q.extend_from_slice(&params.v);
        if q.len() != self.dim() {
            return Err(ModelError::DimensionMismatch { expected: self.dim(), found: q.len() });
        }
        Ok(q)
    }
}

impl LogDensity for GammaStepModel {
    fn dim(&self) -> usize {
        4 + self.data.p + self.data.n_carriers + self.data.n_defenses
    }

    fn log_density_gradient(&self, q: &[f64], grad: &mut [f64]) -> f64 {
        let p = self.data.p;
        let j = self.data.n_carriers;
        let pr = &self.prior;
        grad.iter_mut().for_each(|g| *g = 0.0);
        let (a, theta) = (q[0], &q[1..1 + p]);
        let (lk, lu, lv) = (q[1 + p], q[2 + p], q[3 + p]);
        let k = lk.exp();
        let (u, v) = (&q[4 + p..4 + p + j], &q[4 + p + j..]);
        let n = self.data.n as f64;
        let mut sum_eta = 0.0;
        let mut sum_ratio = 0.0;
        let mut d_theta = vec![0.0; p];
        let (mut d_a, mut d_u, mut d_v) = (0.0, vec![0.0; j], vec![0.0; v.len()]);
        for i in 0..self.data.n {
            let qi = self.qr.q_row(i);
            let (c, d) = (self.data.carrier[i], self.data.defense[i]);
            let eta = a + dot(qi, theta) + u[c] + v[d];
            let ratio = self.data.response[i] * (-eta).exp();
            sum_eta += eta;
            sum_ratio += ratio;
            let de = k * (ratio - 1.0);
            d_a += de;
            for (g, &qv) in d_theta.iter_mut().zip(qi) {
                *g += de * qv;
            }
            d_u[c] += de;
            d_v[d] += de;
        }
        let mut lp = n * (k * lk - ln_gamma(k)) - k * sum_eta + (k - 1.0) * self.sum_log_s - k * sum_ratio;
        let d_lk = k * (n * (lk + 1.0 - digamma(k)) - sum_eta + self.sum_log_s - sum_ratio);
        // Gamma(a, b) prior on the shape, sampled on the log scale
        let (sa, sb) = pr.gamma_shape_prior;
        lp += sa * sb.ln() - ln_gamma(sa) + sa * lk - sb * k;
        grad[1 + p] = d_lk + sa - sb * k;

        let (la, da) = student_t(self.qr.alpha0(a, theta), pr.alpha_step_df, pr.alpha_step_location, pr.alpha_step_scale);
        lp += la;
        grad[0] = d_a + da;
        for ((g, d), o) in grad[1..1 + p].iter_mut().zip(&d_theta).zip(&self.qr.offset) {
            *g = d - da * o;
        }
        for (idx, (lx, scale)) in [(2 + p, (lu, pr.tau_u_scale)), (3 + p, (lv, pr.tau_v_scale))] {
            let (l, d) = half_t_on_log(lx, pr.half_t_df, scale);
            lp += l;
            grad[idx] += d;
        }
        let (l, d) = random_effects(u, lu, &mut d_u);
        lp += l;
        grad[2 + p] += d;
        let (l, d) = random_effects(v, lv, &mut d_v);
        lp += l;
        grad[3 + p] += d;
        grad[4 + p..4 + p + j].copy_from_slice(&d_u);
        grad[4 + p + j..].copy_from_slice(&d_v);
        lp
    }

    fn parameter_names(&self) -> Vec<String> {
        let mut names = StepModelParams::names(&self.columns, &self.levels);
        names[0] = "alpha0_gamma".into();
        names[1 + self.data.p] = "shape".into();
        names
    }

    fn constrain(&self, q: &[f64]) -> Vec<f64> {
        self.params(q).to_vec()
    }
}

impl PosteriorPredictive for LogNormalStepModel {
    fn replicate(&self, draw: &[f64], rng: &mut dyn RngCore) -> Vec<f64> {
        let d = self.data();
        let params = ComparisonParams::from_slice(draw, d.p, d.n_carriers, d.n_defenses).expect("draw matches model");
        (0..d.n)
            .map(|i| {
                let eta = params.log_mean(d.row(i), d.carrier[i], d.defense[i]);
                (eta + params.dispersion * rng.sample::<f64, _>(StandardNormal)).exp()
            })
            .collect()
    }
}

impl PosteriorPredictive for GammaStepModel {
    fn replicate(&self, draw: &[f64], rng: &mut dyn RngCore) -> Vec<f64> {
        let d = &self.data;
        let params = ComparisonParams::from_slice(draw, d.p, d.n_carriers, d.n_defenses).expect("draw matches model");
        let k = params.dispersion;
        (0..d.n)
            .map(|i| {
                let mean = params.log_mean(d.row(i), d.carrier[i], d.defense[i]).exp();
                Gamma::new(k, mean / k).expect("positive shape and scale").sample(rng)
            })
            .collect()
    }
}
