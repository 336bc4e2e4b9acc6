//! Step-and-turn movement models for ball carriers, posterior predictive
//! hypothetical steps, and observed-versus-hypothetical yardage evaluation.

pub mod evaluate;
pub mod features;
pub mod hmc;
pub mod kinematics;
pub mod models;
pub mod report;
pub mod scalar;
pub mod simulate;
pub mod stats;
pub mod synthetic;
pub mod tracking;
pub mod yards;

/// Scalar used by the fitted models, sampler and evaluation.
pub type Scalar = f64;
pub type Point = kinematics::Point2<Scalar>;
pub type Observation = kinematics::StepTurnObservation<Scalar>;
