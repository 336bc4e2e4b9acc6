//! One-step-ahead posterior predictive simulation of the ball carrier.
//!
//! For every eligible frame, each of `H` hypothetical steps takes its own
//! posterior draw, draws a step length and then a turn angle conditional on
//! it, and places the carrier at the resulting location with every other
//! player frozen at their observed next-frame position.

mod vonmises;

use std::fs;
use std::io::Write;
use std::path::Path;

use rand::seq::index::sample as sample_indices;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::{movement_features_at, refresh_features_for_hypothetical, FieldContext, ValuationFeatureVector};
use crate::hmc::PosteriorDraws;
use crate::kinematics::{derive_step_turn_series, StepTurnObservation};
use crate::models::{inverse_arcsine_transform, GroupLevels, ModelSpec, StepModelParams, TurnModelParams};
use crate::tracking::BallCarrierSequence;

pub use vonmises::{sample_von_mises, NORMAL_LIMIT_KAPPA, UNIFORM_KAPPA};

#[derive(Debug, Error)]
pub enum SimulationError {
    #[error("player {0} has no fitted random effect")]
    UnknownPlayer(u64),
    #[error("frame index {0} cannot be simulated")]
    FrameOutOfRange(usize),
    #[error("no posterior draws available")]
    InsufficientDraws,
    #[error("posterior draws do not match the model: {0}")]
    DrawMismatch(String),
    #[error("{0}")]
    Upstream(String),
    #[error("i/o failure: {0}")]
    Io(#[from] std::io::Error),
}

/// Whose random effects drive the hypothetical steps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaselineMode {
    /// A fresh carrier effect from the population distribution.
    Generic,
    /// The observed carrier's own effects.
    OwnPlayer,
    /// Another carrier's effects.
    NamedPlayer(u64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationConfig {
    pub n_draws: usize,
    pub mode: BaselineMode,
    pub seed: u64,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        Self { n_draws: 100, mode: BaselineMode::Generic, seed: 1 }
    }
}

/// Posterior draws of both movement models, paired by index.
#[derive(Debug, Clone)]
pub struct MovementPosterior {
    pub spec: ModelSpec,
    pub levels: GroupLevels,
    pub step: Vec<StepModelParams>,
    pub turn: Vec<TurnModelParams>,
}

impl MovementPosterior {
    pub fn from_draws(
        spec: ModelSpec,
        levels: GroupLevels,
        step: &PosteriorDraws,
        turn: &PosteriorDraws,
    ) -> Result<Self, SimulationError> {
        let n = step.n_total().min(turn.n_total());
        if n == 0 {
            return Err(SimulationError::InsufficientDraws);
        }
        let (j, k) = (levels.carriers.len(), levels.defenses.len());
        let mismatch = |e: crate::models::ModelError| SimulationError::DrawMismatch(e.to_string());
        let step = (0..n)
            .map(|i| StepModelParams::from_slice(step.pooled_draw(i), spec.step.len(), j, k).map_err(mismatch))
            .collect::<Result<_, _>>()?;
        let turn = (0..n)
            .map(|i| TurnModelParams::from_slice(turn.pooled_draw(i), spec.turn.len(), j).map_err(mismatch))
            .collect::<Result<_, _>>()?;
        Ok(Self { spec, levels, step, turn })
    }

    pub fn len(&self) -> usize {
        self.step.len()
    }

    pub fn is_empty(&self) -> bool {
        self.step.is_empty()
    }
}

/// Which fitted level to use for the carrier effect, `None` meaning a fresh draw.
fn carrier_level(levels: &GroupLevels, mode: BaselineMode, observed: u64) -> Result<Option<usize>, SimulationError> {
    match mode {
        BaselineMode::Generic => Ok(None),
        BaselineMode::OwnPlayer => levels.carrier_index(observed).map(Some).ok_or(SimulationError::UnknownPlayer(observed)),
        BaselineMode::NamedPlayer(id) => levels.carrier_index(id).map(Some).ok_or(SimulationError::UnknownPlayer(id)),
    }
}

/// Step length in yards for one posterior draw. `carrier = None` draws a new
/// carrier effect; `defense = None` draws a new defense effect.
pub fn draw_step_length<R: Rng + ?Sized>(
    params: &StepModelParams,
    x_std: &[f64],
    carrier: Option<usize>,
    defense: Option<usize>,
    s_max: f64,
    rng: &mut R,
) -> f64 {
    let u = match carrier {
        Some(j) => params.u[j],
        None => params.tau_u * rng.sample::<f64, _>(StandardNormal),
    };
    let v = match defense {
        Some(k) => params.v[k],
        None => params.tau_v * rng.sample::<f64, _>(StandardNormal),
    };
    let mu = params.alpha0 + x_std.iter().zip(&params.beta).map(|(a, b)| a * b).sum::<f64>() + u + v;
    let z = mu + params.sigma * rng.sample::<f64, _>(StandardNormal);
    inverse_arcsine_transform(z, s_max).0
}

/// Turn angle for one posterior draw given the already drawn step length.
pub fn draw_turn_angle<R: Rng + ?Sized>(
    params: &TurnModelParams,
    x_std: &[f64],
    step_length: f64,
    carrier: Option<usize>,
    rng: &mut R,
) -> f64 {
    let w = match carrier {
        Some(j) => params.w[j],
        None => params.tau_w * rng.sample::<f64, _>(StandardNormal),
    };
    let mu = params.mean_direction(x_std);
    let kappa = (params.gamma0 + params.gamma1 * step_length + w).exp();
    sample_von_mises(mu, kappa, rng)
}

/// Location after a step of `step_length` turning `turn_angle` from `bearing`.
pub fn propose_location(parent: (f64, f64), bearing: f64, step_length: f64, turn_angle: f64) -> (f64, f64) {
    let heading = bearing + turn_angle;
    (parent.0 + step_length * heading.cos(), parent.1 + step_length * heading.sin())
}

/// SplitMix64 finalizer used to derive independent stream seeds.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed for the stream identified by `parts` (e.g. seed, game, play, frame, draw).
pub fn stream_seed(parts: &[u64]) -> u64 {
    parts.iter().fold(0x5354_4550_5455_524e, |acc, &p| mix(acc ^ mix(p)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HypotheticalStep {
    pub draw_index: usize,
    /// Index of the posterior draw used.
    pub posterior_draw: usize,
    pub step_length: f64,
    pub turn_angle: f64,
    pub x: f64,
    pub y: f64,
    pub clamped: bool,
    #[serde(skip)]
    pub features: ValuationFeatureVector,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrameSimulation {
    pub frame_index: usize,
    pub frame_id: u32,
    pub steps: Vec<HypotheticalStep>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlaySimulation {
    pub game_id: u64,
    pub play_id: u64,
    pub carrier_id: u64,
    pub config: SimulationConfig,
    pub frames: Vec<FrameSimulation>,
}

/// Frames with an observed history of two steps and an observed next frame.
pub fn eligible_frames(series: &[StepTurnObservation<f64>]) -> Vec<usize> {
    series.iter().filter(|o| o.prev_turn_angle.is_some()).map(|o| o.frame_index).collect()
}

fn simulate_with_series(
    seq: &BallCarrierSequence,
    series: &[StepTurnObservation<f64>],
    frame_index: usize,
    posterior: &MovementPosterior,
    config: &SimulationConfig,
) -> Result<FrameSimulation, SimulationError> {
    if posterior.is_empty() {
        return Err(SimulationError::InsufficientDraws);
    }
    let obs = series
        .iter()
        .find(|o| o.frame_index == frame_index && o.prev_turn_angle.is_some())
        .ok_or(SimulationError::FrameOutOfRange(frame_index))?;
    let meta = &seq.metadata;
    let ctx = FieldContext::from(meta);
    let snap = &seq.frames[frame_index];
    let next = seq.frames.get(frame_index + 1).ok_or(SimulationError::FrameOutOfRange(frame_index))?;
    let carrier = snap.player(meta.ball_carrier_id).ok_or(SimulationError::Upstream("carrier missing".into()))?;
    let upstream = |e: crate::features::FeatureError| SimulationError::Upstream(e.to_string());
    let fv = movement_features_at(
        snap,
        &ctx,
        carrier.x,
        carrier.y,
        carrier.speed,
        obs.prev_step_length.expect("series always has a previous step"),
        obs.prev_turn_angle.expect("filtered above"),
    )
    .map_err(upstream)?;
    let spec = &posterior.spec;
    let model_err = |e: crate::models::ModelError| SimulationError::Upstream(e.to_string());
    let x_step = spec.step.standardize(&fv).map_err(model_err)?;
    let x_turn = spec.turn.standardize(&fv).map_err(model_err)?;
    let levels = &posterior.levels;
    let carrier_idx = carrier_level(levels, config.mode, meta.ball_carrier_id)?;
    let defense_idx = levels.defense_index(&meta.defense_club);

    let h = config.n_draws;
    let total = posterior.len();
    let frame_parts = [config.seed, meta.game_id, meta.play_id, frame_index as u64];
    let mut pick_rng = ChaCha8Rng::seed_from_u64(stream_seed(&frame_parts));
    let picks: Vec<usize> = if h <= total {
        sample_indices(&mut pick_rng, total, h).into_vec()
    } else {
        (0..h).map(|_| pick_rng.random_range(0..total)).collect()
    };
    let mut steps = Vec::with_capacity(h);
    for (i, &d) in picks.iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(stream_seed(&[frame_parts[0], frame_parts[1], frame_parts[2], frame_parts[3], i as u64]));
        let s = draw_step_length(&posterior.step[d], &x_step, carrier_idx, defense_idx, spec.s_max, &mut rng);
        let phi = draw_turn_angle(&posterior.turn[d], &x_turn, s, carrier_idx, &mut rng);
        let (x, y) = propose_location((carrier.x, carrier.y), obs.incoming_bearing, s, phi);
        let (features, clamped) = refresh_features_for_hypothetical(next, &ctx, (x, y)).map_err(upstream)?;
        steps.push(HypotheticalStep {
            draw_index: i,
            posterior_draw: d,
            step_length: s,
            turn_angle: phi,
            x,
            y,
            clamped,
            features,
        });
    }
    Ok(FrameSimulation { frame_index, frame_id: snap.frame_id, steps })
}

/// `config.n_draws` hypothetical steps from frame `frame_index`.
pub fn simulate_frame(
    seq: &BallCarrierSequence,
    frame_index: usize,
    posterior: &MovementPosterior,
    config: &SimulationConfig,
) -> Result<FrameSimulation, SimulationError> {
    let series = derive_step_turn_series(seq).map_err(|e| SimulationError::Upstream(e.to_string()))?;
    simulate_with_series(seq, &series, frame_index, posterior, config)
}

/// Hypothetical steps for every eligible frame of a play.
pub fn simulate_play(
    seq: &BallCarrierSequence,
    posterior: &MovementPosterior,
    config: &SimulationConfig,
) -> Result<PlaySimulation, SimulationError> {
    if config.n_draws == 0 {
        return Err(SimulationError::InsufficientDraws);
    }
    let series = derive_step_turn_series(seq).map_err(|e| SimulationError::Upstream(e.to_string()))?;
    let frames = eligible_frames(&series)
        .into_iter()
        .map(|t| simulate_with_series(seq, &series, t, posterior, config))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(PlaySimulation {
        game_id: seq.metadata.game_id,
        play_id: seq.metadata.play_id,
        carrier_id: seq.metadata.ball_carrier_id,
        config: config.clone(),
        frames,
    })
}

const PLAY_LINE: &str = "#play";

/// Tab-separated steps of one play: frame, draw, posterior draw, s, phi, x, y,
/// clamped. A leading `#play` line names the game, play and carrier.
pub fn write_play_simulation(sim: &PlaySimulation, path: &Path) -> Result<(), SimulationError> {
    let mut out = std::io::BufWriter::new(fs::File::create(path)?);
    writeln!(out, "{PLAY_LINE}\t{}\t{}\t{}", sim.game_id, sim.play_id, sim.carrier_id)?;
    writeln!(out, "frame_id\th\tdraw\tstep_length\tturn_angle\tx\ty\tclamped")?;
    for f in &sim.frames {
        for s in &f.steps {
            writeln!(
                out,
                "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
                f.frame_id, s.draw_index, s.posterior_draw, s.step_length, s.turn_angle, s.x, s.y, s.clamped as u8
            )?;
        }
    }
    out.flush()?;
    Ok(())
}

/// Reads a file written by [`write_play_simulation`] back into a simulation
/// of `seq`, recomputing each hypothetical location's valuation features.
pub fn read_play_simulation(
    path: &Path,
    seq: &BallCarrierSequence,
    config: &SimulationConfig,
) -> Result<PlaySimulation, SimulationError> {
    let bad = |line: usize, what: &str| SimulationError::Upstream(format!("{}:{line}: {what}", path.display()));
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines().enumerate();
    let m = &seq.metadata;
    let want = format!("{PLAY_LINE}\t{}\t{}\t{}", m.game_id, m.play_id, m.ball_carrier_id);
    match lines.next() {
        Some((_, l)) if l == want => {}
        Some((_, l)) if l.starts_with(PLAY_LINE) => return Err(bad(1, "simulation belongs to another play")),
        _ => return Err(bad(1, "missing play line")),
    }
    match lines.next() {
        Some((_, h)) if h.starts_with("frame_id\t") => {}
        _ => return Err(bad(2, "missing header")),
    }
    let ctx = FieldContext::from(&seq.metadata);
    let mut frames: Vec<FrameSimulation> = Vec::new();
    for (i, line) in lines {
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != 8 {
            return Err(bad(i + 1, "expected 8 columns"));
        }
        let num = |k: usize| cols[k].parse::<f64>().map_err(|_| bad(i + 1, "unparsable number"));
        let int = |k: usize| cols[k].parse::<usize>().map_err(|_| bad(i + 1, "unparsable integer"));
        let frame_id = int(0)? as u32;
        if frames.last().is_none_or(|f| f.frame_id != frame_id) {
            let frame_index = seq
                .frames
                .iter()
                .position(|f| f.frame_id == frame_id)
                .ok_or_else(|| bad(i + 1, "frame not in sequence"))?;
            frames.push(FrameSimulation { frame_index, frame_id, steps: Vec::new() });
        }
        let frame = frames.last_mut().expect("pushed above");
        let next = seq.frames.get(frame.frame_index + 1).ok_or(SimulationError::FrameOutOfRange(frame.frame_index))?;
        let (x, y) = (num(5)?, num(6)?);
        let (features, clamped) =
            refresh_features_for_hypothetical(next, &ctx, (x, y)).map_err(|e| SimulationError::Upstream(e.to_string()))?;
        frame.steps.push(HypotheticalStep {
            draw_index: int(1)?,
            posterior_draw: int(2)?,
            step_length: num(3)?,
            turn_angle: num(4)?,
            x,
            y,
            clamped,
            features,
        });
    }
    Ok(PlaySimulation {
        game_id: seq.metadata.game_id,
        play_id: seq.metadata.play_id,
        carrier_id: seq.metadata.ball_carrier_id,
        config: config.clone(),
        frames,
    })
}
