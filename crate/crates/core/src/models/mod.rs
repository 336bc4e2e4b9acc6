//! Step-length and turn-angle models with their priors and gradients.
//!
//! Step lengths are modeled on the arcsine scale,
//! `asin(sqrt(s / s_max)) ~ N(alpha0 + x'beta + u[carrier] + v[defense], sigma^2)`,
//! and turn angles with a von Mises regression,
//! `phi ~ vM(2 atan(alpha0 + x'beta), exp(gamma0 + gamma1 s + w[carrier]))`.

use thiserror::Error;

pub mod circular;
pub mod comparison;
pub mod design;
pub mod fit;
pub mod prior;
pub mod special;
pub mod step;
pub mod transform;
pub mod turn;

pub use circular::{bessel_ratio, log_bessel_i0, tan_half_inverse_link, von_mises_log_density, BESSEL_SEAM};
pub use comparison::{ComparisonFamily, ComparisonParams, comparison_log_likelihood, positive_step_data, ZERO_STEP_OFFSET, GammaStepModel, LogNormalStepModel};
pub use design::{
    movement_rows, CovariateSpec, GroupLevels, ModelSpec, MovementRow, QrDesign, StepData, TurnData,
    DEFAULT_STEP_COLUMNS, DEFAULT_TURN_COLUMNS,
};
pub use fit::{comparison_density_gap, fit_comparison_model, fit_step_model, fit_turn_model, FitError};
pub use prior::PriorConfig;
pub use step::{step_log_likelihood, StepModel, StepModelParams};
pub use transform::{arcsine_transform, inverse_arcsine_transform};
pub use turn::{turn_log_likelihood, TurnModel, TurnModelParams};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("step length {0} outside [0, s_max]")]
    OutOfRange(f64),
    #[error("concentration must be positive, got {0}")]
    NonPositiveKappa(f64),
    #[error("expected dimension {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("response must be positive, got {0}")]
    NonPositiveResponse(f64),
    #[error("unknown covariate column {0}")]
    UnknownColumn(String),
    #[error("group level {0} not present in the fitted model")]
    UnknownLevel(String),
    #[error("covariate {0} is constant or collinear with earlier columns")]
    CollinearDesign(String),
    #[error("not enough observations ({0})")]
    InsufficientData(usize),
    #[error("invalid model specification: {0}")]
    InvalidSpec(String),
    #[error("{0}")]
    Upstream(String),
}
