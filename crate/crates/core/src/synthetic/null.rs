//! Exchangeable-observed calibration: the "observed" step is one more draw
//! from the same predictive distribution as the hypothetical ones, so the
//! success rate should sit at one half and explosiveness at five percent.

use serde::{Deserialize, Serialize};

use super::{SyntheticData, SyntheticError};
use crate::evaluate::{frame_delta, EvalError, FrameEvaluation, PlayEvaluation, ValueFunction};
use crate::features::ValuationFeatureVector;
use crate::simulate::{simulate_play, BaselineMode, MovementPosterior, SimulationConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NullConfig {
    /// Plays taken from the front of the data set.
    pub n_plays: usize,
    /// Hypothetical steps per frame; one extra draw plays the observed step.
    pub n_hypothetical: usize,
    pub seed: u64,
    pub mode: BaselineMode,
}

impl Default for NullConfig {
    fn default() -> Self {
        Self { n_plays: 200, n_hypothetical: 100, seed: 1, mode: BaselineMode::OwnPlayer }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NullReport {
    pub n_plays: usize,
    pub n_frames: usize,
    pub yards_success_rate: f64,
    /// Standard error from the spread of per-play rates.
    pub success_se: f64,
    pub explosiveness: f64,
    pub explosiveness_se: f64,
}

/// A linear value function, enough for calibration runs where only continuity matters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearValue {
    pub intercept: f64,
    pub weights: Vec<f64>,
}

impl LinearValue {
    /// Gains grow toward the end zone and with room to the nearest defender.
    pub fn progress() -> Self {
        let mut weights = vec![0.0; crate::features::VALUATION_WIDTH];
        weights[0] = -0.1; // bc_endzone_dist
        weights[3] = 0.3; // bc_speed
        weights[10] = 0.8; // def1_dist
        Self { intercept: 8.0, weights }
    }
}

impl ValueFunction for LinearValue {
    fn expected_yards(&self, f: &ValuationFeatureVector) -> Result<f64, EvalError> {
        if f.values.len() != self.weights.len() {
            return Err(EvalError::Upstream(format!("{} features, expected {}", f.values.len(), self.weights.len())));
        }
        Ok(self.intercept + f.values.iter().zip(&self.weights).map(|(x, w)| x * w).sum::<f64>())
    }
}

fn mean_and_se(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
    (m, (var / n).sqrt())
}

/// Scores draw 0 of every simulated frame against draws `1..=H`.
pub fn null_evaluation_experiment(
    data: &SyntheticData,
    posterior: &MovementPosterior,
    value: &dyn ValueFunction,
    config: &NullConfig,
) -> Result<NullReport, SyntheticError> {
    let up = |e: &dyn std::fmt::Display| SyntheticError::Upstream(e.to_string());
    if config.n_plays == 0 || config.n_plays > data.plays.len() {
        return Err(SyntheticError::InvalidScenario(format!(
            "null experiment wants {} plays, data has {}",
            config.n_plays,
            data.plays.len()
        )));
    }
    let sim_cfg = SimulationConfig { n_draws: config.n_hypothetical + 1, mode: config.mode, seed: config.seed };
    let mut plays = Vec::with_capacity(config.n_plays);
    for p in &data.plays[..config.n_plays] {
        let sim = simulate_play(&p.sequence, posterior, &sim_cfg).map_err(|e| up(&e))?;
        let mut frames: Vec<FrameEvaluation> = Vec::with_capacity(sim.frames.len());
        for fs in &sim.frames {
            let values =
                fs.steps.iter().map(|s| value.expected_yards(&s.features)).collect::<Result<Vec<_>, _>>().map_err(|e| up(&e))?;
            let mut fe = frame_delta(values[0], &values[1..]).map_err(|e| up(&e))?;
            fe.frame_index = fs.frame_index;
            fe.frame_id = fs.frame_id;
            frames.push(fe);
        }
        plays.push(PlayEvaluation {
            game_id: sim.game_id,
            play_id: sim.play_id,
            carrier_id: sim.carrier_id,
            team: p.record.offense_club.clone(),
            frames,
            windows: Vec::new(),
        });
    }
    let scored: Vec<&PlayEvaluation> = plays.iter().filter(|p| !p.frames.is_empty()).collect();
    if scored.is_empty() {
        return Err(up(&EvalError::NoFrames));
    }
    let n_frames: usize = scored.iter().map(|p| p.frames.len()).sum();
    let pooled = scored.iter().flat_map(|p| p.frames.iter()).map(FrameEvaluation::success_rate).sum::<f64>() / n_frames as f64;
    let per_play: Vec<f64> = scored
        .iter()
        .map(|p| p.frames.iter().map(FrameEvaluation::success_rate).sum::<f64>() / p.frames.len() as f64)
        .collect();
    let (_, success_se) = mean_and_se(&per_play);
    let explosive = scored.iter().map(|p| p.explosiveness()).collect::<Result<Vec<_>, _>>().map_err(|e| up(&e))?;
    let (explosiveness, explosiveness_se) = mean_and_se(&explosive);
    Ok(NullReport {
        n_plays: scored.len(),
        n_frames,
        yards_success_rate: pooled,
        success_se,
        explosiveness,
        explosiveness_se,
    })
}
