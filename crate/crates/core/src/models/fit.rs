//! Starting points and the glue between models and the sampler.

use thiserror::Error;

use super::{
    positive_step_data, ComparisonFamily, GammaStepModel, GroupLevels, LogNormalStepModel, ModelError, ModelSpec,
    MovementRow, StepData, StepModel, TurnData, TurnModel,
};
use crate::hmc::{posterior_predictive_replicates, run_hmc, short_step_density_gap, HmcError, PosteriorDraws, SamplerConfig};

#[derive(Debug, Error)]
pub enum FitError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Sampler(#[from] HmcError),
}

fn mean_sd(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / n;
    (m, var.sqrt().max(1e-6))
}

/// Intercept at the mean, flat coefficients, dispersion at the marginal sd,
/// group scales at half of it and zero effects.
fn location_scale_start(response: &[f64], dispersion: f64, dim: usize, p: usize) -> Vec<f64> {
    let (m, sd) = mean_sd(response);
    let mut q = vec![0.0; dim];
    q[0] = m;
    q[1 + p] = dispersion;
    q[2 + p] = (0.5 * sd).ln();
    q[3 + p] = (0.5 * sd).ln();
    q
}

/// Approximate inverse of the mean resultant length `A(kappa) = I1/I0`.
fn kappa_from_resultant(r: f64) -> f64 {
    if r < 0.53 {
        2.0 * r + r.powi(3) + 5.0 * r.powi(5) / 6.0
    } else if r < 0.85 {
        -0.4 + 1.39 * r + 0.43 / (1.0 - r)
    } else {
        1.0 / (r.powi(3) - 4.0 * r * r + 3.0 * r)
    }
}

impl StepModel {
    pub fn initial_point(&self) -> Vec<f64> {
        use crate::hmc::LogDensity;
        let y = &self.data().response;
        location_scale_start(y, mean_sd(y).1.ln(), self.dim(), self.data().p)
    }
}

impl LogNormalStepModel {
    pub fn initial_point(&self) -> Vec<f64> {
        use crate::hmc::LogDensity;
        let y = &self.data().response;
        location_scale_start(y, mean_sd(y).1.ln(), self.dim(), self.data().p)
    }
}

impl GammaStepModel {
    pub fn initial_point(&self) -> Vec<f64> {
        use crate::hmc::LogDensity;
        let y = &self.data().response;
        let (m, sd) = mean_sd(y);
        let logs: Vec<f64> = y.iter().map(|s| s.ln()).collect();
        let mut q = location_scale_start(&logs, (m * m / (sd * sd)).ln(), self.dim(), self.data().p);
        q[0] = m.ln();
        q
    }
}

impl TurnModel {
    pub fn initial_point(&self) -> Vec<f64> {
        use crate::hmc::LogDensity;
        let d = self.data();
        let n = d.n as f64;
        let (s, c) = d.turn.iter().fold((0.0, 0.0), |(s, c), t| (s + t.sin(), c + t.cos()));
        let r = (s * s + c * c).sqrt() / n;
        let p = d.p;
        let mut q = vec![0.0; self.dim()];
        q[0] = (s.atan2(c) / 2.0).tan();
        q[1 + p] = kappa_from_resultant(r.clamp(1e-6, 1.0 - 1e-9)).max(1e-3).ln();
        q[3 + p] = (0.1f64).ln();
        q
    }
}

pub fn fit_step_model(
    rows: &[MovementRow],
    spec: &ModelSpec,
    levels: &GroupLevels,
    config: &SamplerConfig,
) -> Result<PosteriorDraws, FitError> {
    let model = StepModel::new(StepData::build(rows, spec, levels)?, spec, levels.clone())?;
    Ok(run_hmc(&model, &model.initial_point(), config)?)
}

pub fn fit_turn_model(
    rows: &[MovementRow],
    spec: &ModelSpec,
    levels: &GroupLevels,
    config: &SamplerConfig,
) -> Result<PosteriorDraws, FitError> {
    let model = TurnModel::new(TurnData::build(rows, spec, levels)?, spec, levels.clone())?;
    Ok(run_hmc(&model, &model.initial_point(), config)?)
}

/// Fits a comparison family to raw step lengths; zero steps are offset first.
pub fn fit_comparison_model(
    family: ComparisonFamily,
    rows: &[MovementRow],
    spec: &ModelSpec,
    levels: &GroupLevels,
    config: &SamplerConfig,
) -> Result<PosteriorDraws, FitError> {
    let (data, _) = positive_step_data(rows, spec, levels)?;
    match family {
        ComparisonFamily::Gamma => {
            let model = GammaStepModel::new(data, spec, levels.clone())?;
            Ok(run_hmc(&model, &model.initial_point(), config)?)
        }
        ComparisonFamily::LogNormal => {
            let model = LogNormalStepModel::new(data, spec, levels.clone())?;
            Ok(run_hmc(&model, &model.initial_point(), config)?)
        }
    }
}

/// Signed short-step density gap of a fitted comparison family: replicated
/// step lengths below the observed `prob` quantile, as a share, minus `prob`.
#[allow(clippy::too_many_arguments)]
pub fn comparison_density_gap(
    family: ComparisonFamily,
    rows: &[MovementRow],
    spec: &ModelSpec,
    levels: &GroupLevels,
    draws: &PosteriorDraws,
    n_reps: usize,
    prob: f64,
    seed: u64,
) -> Result<f64, FitError> {
    let (data, _) = positive_step_data(rows, spec, levels)?;
    let observed = data.response.clone();
    let reps = match family {
        ComparisonFamily::Gamma => posterior_predictive_replicates(draws, &GammaStepModel::new(data, spec, levels.clone())?, n_reps, seed),
        ComparisonFamily::LogNormal => {
            posterior_predictive_replicates(draws, &LogNormalStepModel::new(data, spec, levels.clone())?, n_reps, seed)
        }
    };
    Ok(short_step_density_gap(&observed, &reps, prob))
}
