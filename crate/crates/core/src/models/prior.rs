//! Prior families and their log densities (with normalizing constants).

use serde::{Deserialize, Serialize};

use super::special::ln_gamma;

/// Prior hyperparameters for both movement models and the comparison models.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PriorConfig {
    /// Degrees of freedom of the half-t priors on every standard deviation.
    pub half_t_df: f64,
    pub sigma_scale: f64,
    pub tau_u_scale: f64,
    pub tau_v_scale: f64,
    pub tau_w_scale: f64,
    pub alpha_step_df: f64,
    pub alpha_step_location: f64,
    pub alpha_step_scale: f64,
    pub alpha_turn_df: f64,
    pub alpha_turn_location: f64,
    pub alpha_turn_scale: f64,
    pub gamma0_mean: f64,
    pub gamma0_sd: f64,
    /// Gamma(shape, rate) prior on the shape of the Gamma comparison model.
    pub gamma_shape_prior: (f64, f64),
}

impl Default for PriorConfig {
    fn default() -> Self {
        Self {
            half_t_df: 3.0,
            sigma_scale: 2.5,
            tau_u_scale: 2.5,
            tau_v_scale: 2.5,
            tau_w_scale: 2.5,
            alpha_step_df: 3.0,
            alpha_step_location: 0.0,
            alpha_step_scale: 2.5,
            alpha_turn_df: 1.0,
            alpha_turn_location: 0.0,
            alpha_turn_scale: 2.5,
            gamma0_mean: 5.0,
            gamma0_sd: 0.8,
            gamma_shape_prior: (0.01, 0.01),
        }
    }
}

impl PriorConfig {
    /// Scales set to 2.5 times the spread of the transformed step response.
    pub fn scaled_to_step_response(response_sd: f64) -> Self {
        let s = 2.5 * response_sd.max(1e-3);
        Self {
            sigma_scale: s,
            tau_u_scale: s,
            tau_v_scale: s,
            alpha_step_scale: s,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        let checks = [
            ("half_t_df", self.half_t_df),
            ("sigma_scale", self.sigma_scale),
            ("tau_u_scale", self.tau_u_scale),
            ("tau_v_scale", self.tau_v_scale),
            ("tau_w_scale", self.tau_w_scale),
            ("alpha_step_df", self.alpha_step_df),
            ("alpha_step_scale", self.alpha_step_scale),
            ("alpha_turn_df", self.alpha_turn_df),
            ("alpha_turn_scale", self.alpha_turn_scale),
            ("gamma0_sd", self.gamma0_sd),
            ("gamma_shape_prior.0", self.gamma_shape_prior.0),
            ("gamma_shape_prior.1", self.gamma_shape_prior.1),
        ];
        match checks.iter().find(|(_, v)| !(*v > 0.0) || !v.is_finite()) {
            Some((name, v)) => Err(format!("{name} must be positive, got {v}")),
            None => Ok(()),
        }
    }
}

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Student-t log density and its derivative in `x`.
pub fn student_t(x: f64, df: f64, loc: f64, scale: f64) -> (f64, f64) {
    let z = (x - loc) / scale;
    let c = ln_gamma((df + 1.0) / 2.0) - ln_gamma(df / 2.0) - 0.5 * (df * std::f64::consts::PI).ln() - scale.ln();
    let lp = c - (df + 1.0) / 2.0 * (z * z / df).ln_1p();
    let d = -(df + 1.0) * (x - loc) / (df * scale * scale + (x - loc) * (x - loc));
    (lp, d)
}

/// Half-t (folded at zero) log density of a positive `x`, derivative in `x`.
pub fn half_student_t(x: f64, df: f64, scale: f64) -> (f64, f64) {
    let (lp, d) = student_t(x, df, 0.0, scale);
    (lp + std::f64::consts::LN_2, d)
}

/// Half-t prior on `exp(log_x)` including the log-Jacobian; derivative in `log_x`.
pub fn half_t_on_log(log_x: f64, df: f64, scale: f64) -> (f64, f64) {
    let x = log_x.exp();
    let (lp, d) = half_student_t(x, df, scale);
    (lp + log_x, d * x + 1.0)
}

/// Normal log density and derivative in `x`.
pub fn normal(x: f64, mean: f64, sd: f64) -> (f64, f64) {
    let z = (x - mean) / sd;
    (-0.5 * LN_2PI - sd.ln() - 0.5 * z * z, -z / sd)
}

/// Sum of `N(0, tau^2)` log densities of `effects` with `tau = exp(log_tau)`.
/// Returns the value, the derivative in `log_tau`, and writes `d/d effect`.
pub fn random_effects(effects: &[f64], log_tau: f64, grad: &mut [f64]) -> (f64, f64) {
    let tau2 = (2.0 * log_tau).exp();
    let mut ss = 0.0;
    for (g, &e) in grad.iter_mut().zip(effects) {
        ss += e * e;
        *g += -e / tau2;
    }
    let n = effects.len() as f64;
    (-0.5 * n * LN_2PI - n * log_tau - 0.5 * ss / tau2, -n + ss / tau2)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fd(f: impl Fn(f64) -> f64, x: f64) -> f64 {
        let h = 1e-6 * x.abs().max(1.0);
        (f(x + h) - f(x - h)) / (2.0 * h)
    }

    #[test]
    fn derivatives_match_differences() {
        for x in [-2.0, 0.1, 3.7] {
            let (_, d) = student_t(x, 3.0, 0.5, 2.5);
            assert!((d - fd(|v| student_t(v, 3.0, 0.5, 2.5).0, x)).abs() < 1e-7);
            let (_, d) = normal(x, 5.0, 0.8);
            assert!((d - fd(|v| normal(v, 5.0, 0.8).0, x)).abs() < 1e-7);
            let (_, d) = half_t_on_log(x, 3.0, 2.5);
            assert!((d - fd(|v| half_t_on_log(v, 3.0, 2.5).0, x)).abs() < 1e-6);
        }
    }

    #[test]
    fn cauchy_and_normal_constants() {
        // t with one degree of freedom is Cauchy: 1 / (pi * scale) at the location
        let (lp, _) = student_t(0.0, 1.0, 0.0, 2.0);
        assert!((lp + (std::f64::consts::PI * 2.0).ln()).abs() < 1e-12);
        let (lp, _) = normal(5.0, 5.0, 0.8);
        assert!((lp - (-0.5 * LN_2PI - 0.8f64.ln())).abs() < 1e-14);
        // gamma0 prior mode
        assert!(normal(5.0, 5.0, 0.8).0 > normal(5.01, 5.0, 0.8).0);
        assert!(normal(5.0, 5.0, 0.8).0 > normal(4.99, 5.0, 0.8).0);
    }

    #[test]
    fn random_effect_sum_at_zero() {
        let mut g = vec![0.0; 4];
        let (lp, dlt) = random_effects(&[0.0; 4], 0.3f64.ln(), &mut g);
        assert!((lp - 4.0 * normal(0.0, 0.0, 0.3).0).abs() < 1e-12);
        assert_eq!(dlt, -4.0);
        assert!(g.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn default_validates() {
        assert!(PriorConfig::default().validate().is_ok());
        let bad = PriorConfig { tau_w_scale: 0.0, ..Default::default() };
        assert!(bad.validate().unwrap_err().contains("tau_w_scale"));
    }
}
