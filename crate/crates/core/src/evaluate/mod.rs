//! Observed versus hypothetical expected yards: frame deltas, play curves,
//! player metrics and leaderboards.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::{refresh_features_for_hypothetical, FieldContext, ValuationFeatureVector};
use crate::hmc::PosteriorDraws;
use crate::simulate::PlaySimulation;
use crate::stats::quantile;
use crate::tracking::{BallCarrierSequence, TARGET_GOAL_X};
use crate::yards::BoostedModel;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("no hypothetical steps to compare against")]
    EmptyHypotheticalSet,
    #[error("explosiveness needs at least {needed} hypothetical steps per frame, found {found}")]
    InsufficientDraws { needed: usize, found: usize },
    #[error("no frames to aggregate")]
    NoFrames,
    #[error("no random effect named `{0}`")]
    UnknownEffect(String),
    #[error("simulation does not match play {game_id}/{play_id}: {reason}")]
    Mismatch { game_id: u64, play_id: u64, reason: String },
    #[error("{0}")]
    Upstream(String),
}

/// Smallest number of hypothetical steps for which the 0.95 quantile is used.
pub const MIN_EXPLOSIVE_DRAWS: usize = 20;

/// Anything that turns a valuation vector into expected yards gained.
pub trait ValueFunction: Sync {
    fn expected_yards(&self, features: &ValuationFeatureVector) -> Result<f64, EvalError>;
}

impl ValueFunction for BoostedModel {
    fn expected_yards(&self, features: &ValuationFeatureVector) -> Result<f64, EvalError> {
        self.predict(&features.values).map_err(|e| EvalError::Upstream(e.to_string()))
    }
}

/// Which quantity the deltas compare.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DeltaScale {
    /// Expected yards gained from each location.
    #[default]
    YardsGained,
    /// Expected end-of-play field position, i.e. yards gained plus the
    /// location's own progress toward the end zone.
    EndOfPlay,
}

fn score(value: &dyn ValueFunction, f: &ValuationFeatureVector, scale: DeltaScale) -> Result<f64, EvalError> {
    let ell = value.expected_yards(f)?;
    Ok(match scale {
        DeltaScale::YardsGained => ell,
        // first valuation column is the distance to the target end zone
        DeltaScale::EndOfPlay => ell + (TARGET_GOAL_X - f.values[0]),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameEvaluation {
    pub frame_index: usize,
    pub frame_id: u32,
    pub observed: f64,
    pub hypothetical: Vec<f64>,
    pub delta: Vec<f64>,
    pub delta_bar: f64,
    /// Central 95% band of `delta`.
    pub interval: (f64, f64),
}

impl FrameEvaluation {
    /// Share of hypothetical steps the observed step beats.
    pub fn success_rate(&self) -> f64 {
        self.delta.iter().filter(|d| **d > 0.0).count() as f64 / self.delta.len() as f64
    }

    /// Whether the observed value exceeds the 0.95 quantile of the hypotheticals.
    pub fn explosive(&self) -> Result<bool, EvalError> {
        let h = self.hypothetical.len();
        if h < MIN_EXPLOSIVE_DRAWS {
            return Err(EvalError::InsufficientDraws { needed: MIN_EXPLOSIVE_DRAWS, found: h });
        }
        Ok(self.observed > quantile(&self.hypothetical, 0.95))
    }
}

pub fn frame_delta(observed: f64, hypothetical: &[f64]) -> Result<FrameEvaluation, EvalError> {
    if hypothetical.is_empty() {
        return Err(EvalError::EmptyHypotheticalSet);
    }
    let delta: Vec<f64> = hypothetical.iter().map(|h| observed - h).collect();
    let delta_bar = delta.iter().sum::<f64>() / delta.len() as f64;
    let interval = (quantile(&delta, 0.025), quantile(&delta, 0.975));
    Ok(FrameEvaluation {
        frame_index: 0,
        frame_id: 0,
        observed,
        hypothetical: hypothetical.to_vec(),
        delta,
        delta_bar,
        interval,
    })
}

pub fn accumulate_play_delta(frames: &[FrameEvaluation]) -> f64 {
    frames.iter().map(|f| f.delta_bar).sum()
}

/// One play's frame evaluations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlayEvaluation {
    pub game_id: u64,
    pub play_id: u64,
    pub carrier_id: u64,
    pub team: String,
    pub frames: Vec<FrameEvaluation>,
    /// Delta sums between consecutive tagged events, e.g. `handoff..first_contact`.
    pub windows: Vec<(String, f64)>,
}

impl PlayEvaluation {
    pub fn total_delta(&self) -> f64 {
        accumulate_play_delta(&self.frames)
    }

    /// Mean of the per-frame explosive indicators.
    pub fn explosiveness(&self) -> Result<f64, EvalError> {
        if self.frames.is_empty() {
            return Err(EvalError::NoFrames);
        }
        let mut hits = 0usize;
        for f in &self.frames {
            hits += f.explosive()? as usize;
        }
        Ok(hits as f64 / self.frames.len() as f64)
    }

    /// Frame id, delta bar, interval and running total, tab-separated.
    pub fn curve_tsv(&self) -> String {
        let mut out = String::from("frame_id\tdelta_bar\tlower\tupper\tcumulative\n");
        let mut total = 0.0;
        for f in &self.frames {
            total += f.delta_bar;
            let _ = writeln!(out, "{}\t{:.6}\t{:.6}\t{:.6}\t{:.6}", f.frame_id, f.delta_bar, f.interval.0, f.interval.1, total);
        }
        out
    }
}

/// Delta sums over the stretches between consecutive event tags of `seq`.
pub fn event_windows(seq: &BallCarrierSequence, frames: &[FrameEvaluation]) -> Vec<(String, f64)> {
    let tags: Vec<(usize, &str)> =
        seq.frames.iter().enumerate().filter_map(|(i, f)| f.event.as_deref().map(|e| (i, e))).collect();
    tags.windows(2)
        .map(|w| {
            let (a, b) = (w[0].0, w[1].0);
            let sum = frames.iter().filter(|f| f.frame_index >= a && f.frame_index < b).map(|f| f.delta_bar).sum();
            (format!("{}..{}", w[0].1, w[1].1), sum)
        })
        .collect()
}

/// Scores every simulated frame of a play: the observed value comes from the
/// carrier's actual next location, the hypothetical ones from the simulated steps.
pub fn evaluate_play(
    seq: &BallCarrierSequence,
    sim: &PlaySimulation,
    value: &dyn ValueFunction,
    scale: DeltaScale,
) -> Result<PlayEvaluation, EvalError> {
    let meta = &seq.metadata;
    let mismatch = |reason: String| EvalError::Mismatch { game_id: meta.game_id, play_id: meta.play_id, reason };
    if sim.game_id != meta.game_id || sim.play_id != meta.play_id {
        return Err(mismatch(format!("simulation is for {}/{}", sim.game_id, sim.play_id)));
    }
    let ctx = FieldContext::from(meta);
    let mut frames = Vec::with_capacity(sim.frames.len());
    for fs in &sim.frames {
        let next = seq.frames.get(fs.frame_index + 1).ok_or_else(|| mismatch(format!("no frame after {}", fs.frame_index)))?;
        let c = next.player(meta.ball_carrier_id).ok_or_else(|| mismatch("carrier missing".into()))?;
        let (obs_f, _) = refresh_features_for_hypothetical(next, &ctx, (c.x, c.y))
            .map_err(|e| EvalError::Upstream(e.to_string()))?;
        let observed = score(value, &obs_f, scale)?;
        let hyp = fs.steps.iter().map(|s| score(value, &s.features, scale)).collect::<Result<Vec<_>, _>>()?;
        let mut fe = frame_delta(observed, &hyp)?;
        fe.frame_index = fs.frame_index;
        fe.frame_id = fs.frame_id;
        frames.push(fe);
    }
    let windows = event_windows(seq, &frames);
    Ok(PlayEvaluation {
        game_id: meta.game_id,
        play_id: meta.play_id,
        carrier_id: meta.ball_carrier_id,
        team: meta.offense_club.clone(),
        frames,
        windows,
    })
}

/// Mean per-frame success rate, every frame weighted equally.
pub fn yards_success_rate<'a, I: IntoIterator<Item = &'a FrameEvaluation>>(frames: I) -> Result<f64, EvalError> {
    let (mut sum, mut n) = (0.0, 0usize);
    for f in frames {
        sum += f.success_rate();
        n += 1;
    }
    if n == 0 {
        return Err(EvalError::NoFrames);
    }
    Ok(sum / n as f64)
}

/// Explosive-frame share averaged within each play, then across plays.
pub fn explosiveness(plays: &[PlayEvaluation]) -> Result<f64, EvalError> {
    let mut rates = Vec::with_capacity(plays.len());
    for p in plays.iter().filter(|p| !p.frames.is_empty()) {
        rates.push(p.explosiveness()?);
    }
    if rates.is_empty() {
        return Err(EvalError::NoFrames);
    }
    Ok(rates.iter().sum::<f64>() / rates.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlayerMetrics {
    pub player_id: u64,
    pub team: String,
    pub plays: usize,
    pub frames: usize,
    pub yards_success_rate: f64,
    pub explosiveness: f64,
    pub accumulated_delta_per_play: f64,
}

/// Metrics per carrier, ordered by player id. Plays without simulated frames
/// count toward `plays` but contribute no frames.
pub fn player_metrics(plays: &[PlayEvaluation]) -> Result<Vec<PlayerMetrics>, EvalError> {
    let mut by_player: BTreeMap<u64, Vec<&PlayEvaluation>> = BTreeMap::new();
    for p in plays {
        by_player.entry(p.carrier_id).or_default().push(p);
    }
    let mut out = Vec::with_capacity(by_player.len());
    for (player_id, ps) in by_player {
        let frames: Vec<&FrameEvaluation> = ps.iter().flat_map(|p| p.frames.iter()).collect();
        if frames.is_empty() {
            continue;
        }
        let owned: Vec<PlayEvaluation> = ps.iter().map(|p| (*p).clone()).collect();
        out.push(PlayerMetrics {
            player_id,
            team: ps.last().map(|p| p.team.clone()).unwrap_or_default(),
            plays: ps.len(),
            frames: frames.len(),
            yards_success_rate: yards_success_rate(frames.iter().copied())?,
            explosiveness: explosiveness(&owned)?,
            accumulated_delta_per_play: ps.iter().map(|p| p.total_delta()).sum::<f64>() / ps.len() as f64,
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    YardsSuccessRate,
    Explosiveness,
    AccumulatedDelta,
}

impl Metric {
    pub fn of(self, m: &PlayerMetrics) -> f64 {
        match self {
            Self::YardsSuccessRate => m.yards_success_rate,
            Self::Explosiveness => m.explosiveness,
            Self::AccumulatedDelta => m.accumulated_delta_per_play,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::YardsSuccessRate => "yards_success_rate",
            Self::Explosiveness => "explosiveness",
            Self::AccumulatedDelta => "accumulated_delta_per_play",
        }
    }
}

/// Minimum plays for leaderboard eligibility by default.
pub const DEFAULT_MIN_PLAYS: usize = 70;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeaderboardRow {
    pub rank: usize,
    pub player_id: u64,
    pub team: String,
    pub plays: usize,
    pub value: f64,
}

/// Players with at least `min_plays`, best first; ties go to more plays,
/// then to the lower player id.
pub fn build_leaderboard(metrics: &[PlayerMetrics], metric: Metric, min_plays: usize) -> Vec<LeaderboardRow> {
    let mut eligible: Vec<&PlayerMetrics> = metrics.iter().filter(|m| m.plays >= min_plays).collect();
    eligible.sort_by(|a, b| {
        metric
            .of(b)
            .total_cmp(&metric.of(a))
            .then(b.plays.cmp(&a.plays))
            .then(a.player_id.cmp(&b.player_id))
    });
    eligible
        .into_iter()
        .enumerate()
        .map(|(i, m)| LeaderboardRow { rank: i + 1, player_id: m.player_id, team: m.team.clone(), plays: m.plays, value: metric.of(m) })
        .collect()
}

pub fn leaderboard_tsv(rows: &[LeaderboardRow], metric: Metric) -> String {
    let mut out = format!("rank\tplayer_id\tteam\tplays\t{}\n", metric.name());
    for r in rows {
        let _ = writeln!(out, "{}\t{}\t{}\t{}\t{:.6}", r.rank, r.player_id, r.team, r.plays, r.value);
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EffectRow {
    pub rank: usize,
    pub level: String,
    pub n_obs: usize,
    pub mean: f64,
    pub lower: f64,
    pub upper: f64,
}

/// Posterior means and central 95% intervals of one random-effect vector
/// (`u`, `v` or `w`), highest mean first. Levels with no observations in
/// `n_obs` are left out and returned separately.
pub fn random_effect_leaderboard(
    draws: &PosteriorDraws,
    effect: &str,
    n_obs: &BTreeMap<String, usize>,
) -> Result<(Vec<EffectRow>, Vec<String>), EvalError> {
    let prefix = format!("{effect}[");
    let cols: Vec<(usize, String)> = draws
        .names
        .iter()
        .enumerate()
        .filter_map(|(i, n)| n.strip_prefix(&prefix).and_then(|r| r.strip_suffix(']')).map(|l| (i, l.to_string())))
        .collect();
    if cols.is_empty() {
        return Err(EvalError::UnknownEffect(effect.to_string()));
    }
    let mut rows = Vec::new();
    let mut excluded = Vec::new();
    for (i, level) in cols {
        let n = n_obs.get(&level).copied().unwrap_or(0);
        if n == 0 {
            excluded.push(level);
            continue;
        }
        rows.push(EffectRow {
            rank: 0,
            level,
            n_obs: n,
            mean: draws.mean(i),
            lower: draws.quantile(i, 0.025),
            upper: draws.quantile(i, 0.975),
        });
    }
    rows.sort_by(|a, b| b.mean.total_cmp(&a.mean).then(a.level.cmp(&b.level)));
    for (i, r) in rows.iter_mut().enumerate() {
        r.rank = i + 1;
    }
    Ok((rows, excluded))
}

pub fn effect_leaderboard_tsv(rows: &[EffectRow]) -> String {
    let mut out = String::from("rank\tlevel\tn_obs\tmean\tlower\tupper\n");
    for r in rows {
        let _ = writeln!(out, "{}\t{}\t{}\t{:.6}\t{:.6}\t{:.6}", r.rank, r.level, r.n_obs, r.mean, r.lower, r.upper);
    }
    out
}

#[cfg(test)]
mod tests;
