//! Synthetic tracking data rolled forward from known movement models.
//!
//! Each play starts from a loose formation around a random line of
//! scrimmage. After the handoff the carrier's step lengths and turn angles are
//! drawn from the true step and turn models given the covariates of the
//! current frame; defenders pursue the carrier and blockers chase the nearest
//! defender. Every latent draw is recorded so oracle checks can compare fits
//! against the exact generating values.

mod bdb;
mod null;
mod oracle;

use std::f64::consts::{FRAC_PI_2, PI};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::{movement_features_at, FieldContext};
use crate::models::{
    inverse_arcsine_transform, CovariateSpec, GroupLevels, ModelSpec, PriorConfig, StepModelParams,
    TurnModelParams, DEFAULT_STEP_COLUMNS, DEFAULT_TURN_COLUMNS,
};
use crate::scalar::wrap_angle;
use crate::simulate::{sample_von_mises, stream_seed, MovementPosterior};
use crate::tracking::{
    BallCarrierSequence, FrameSnapshot, PlayDirection, PlayMetadata, PlayRecord, PlayerState, Side,
    TerminalEvent, TrackingFrame, FIELD_LENGTH, FIELD_WIDTH, TARGET_GOAL_X,
};

pub use bdb::write_bdb_csv;
pub use null::{null_evaluation_experiment, LinearValue, NullConfig, NullReport};
pub use oracle::{brute_force_density_oracle, finite_difference_gradient, OracleModel, OracleObservation};

/// Cap on redraws of a transformed step that falls outside the transform's domain.
const MAX_REDRAWS: usize = 100;

#[derive(Debug, Error)]
pub enum SyntheticError {
    #[error("invalid scenario: {0}")]
    InvalidScenario(String),
    #[error("{0}")]
    Upstream(String),
    #[error("i/o failure: {0}")]
    Io(#[from] std::io::Error),
}

/// Noise on the quantities that are not drawn from the movement models.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct KinematicNoise {
    /// Standard deviation of the reported speed around `10 * step`, yards/s.
    pub speed_sd: f64,
    /// Per-frame positional jitter of defenders, yards.
    pub defender_jitter: f64,
    /// Per-frame positional jitter of blockers, yards.
    pub blocker_jitter: f64,
}

impl Default for KinematicNoise {
    fn default() -> Self {
        Self { speed_sd: 0.8, defender_jitter: 0.05, blocker_jitter: 0.05 }
    }
}

/// Everything needed to generate one synthetic season.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticScenario {
    pub seed: u64,
    pub n_players_per_side: usize,
    pub n_plays: usize,
    pub n_carriers: usize,
    /// Offensive clubs; carrier `j` plays for club `j % n_offenses`.
    pub n_offenses: usize,
    pub n_defenses: usize,
    pub n_weeks: u32,
    pub plays_per_game: usize,
    /// Range of post-handoff frames before the tackle.
    pub min_frames: usize,
    pub max_frames: usize,
    /// Frames from the snap up to and including the handoff.
    pub pre_handoff_frames: usize,
    pub spec: ModelSpec,
    pub step: StepModelParams,
    pub turn: TurnModelParams,
    pub noise: KinematicNoise,
}

/// Pinned standardization for the default columns, roughly matching the
/// covariate distribution the default scenario produces.
fn default_spec() -> ModelSpec {
    let pin = |columns: &[&str], table: &[(&str, f64, f64)]| {
        let lookup = |c: &str| *table.iter().find(|(n, _, _)| *n == c).expect("pinned column");
        CovariateSpec {
            columns: columns.iter().map(|s| s.to_string()).collect(),
            centers: columns.iter().map(|c| lookup(c).1).collect(),
            scales: columns.iter().map(|c| lookup(c).2).collect(),
        }
    };
    ModelSpec {
        step: pin(&DEFAULT_STEP_COLUMNS, PINNED),
        turn: pin(&DEFAULT_TURN_COLUMNS, PINNED),
        s_max: 1.3,
        prior: PriorConfig::default(),
    }
}

/// `(column, center, scale)` for every default column.
const PINNED: &[(&str, f64, f64)] = &[
    ("bc_endzone_dist", 60.0, 15.0),
    ("bc_center_offset", -2.0, 3.0),
    ("bc_firstdown_dist", 5.0, 4.0),
    ("bc_speed", 4.0, 2.0),
    ("def1_speed", 3.5, 2.0),
    ("def1_motion_angle", 0.0, 1.0),
    ("def1_rel_x", 0.2, 1.3),
    ("def1_rel_y_abs", 0.6, 0.5),
    ("def1_dist", 1.1, 1.0),
    ("count_def_front", 6.7, 3.5),
    ("count_def_left", 8.0, 2.0),
    ("count_off_front", 5.0, 3.8),
    ("count_off_left", 7.0, 1.6),
    ("lag_step_length", 0.4, 0.17),
    ("lag_turn_angle", 0.0, 0.1),
];

fn default_step_beta() -> Vec<f64> {
    vec![0.0, 0.0, -0.02, 0.02, 0.01, 0.0, 0.02, 0.01, 0.015, -0.03, 0.0, 0.01, 0.0, 0.03]
}

fn default_turn_beta() -> Vec<f64> {
    vec![0.0, -0.01, 0.0, 0.0, 0.0, 0.01, 0.0, 0.005, 0.0, 0.0, 0.005, 0.0, -0.005, 0.01]
}

impl Default for SyntheticScenario {
    fn default() -> Self {
        Self::with_seed(1)
    }
}

impl SyntheticScenario {
    /// The default scenario with carrier and defense effects drawn from
    /// their population distributions under `seed`.
    pub fn with_seed(seed: u64) -> Self {
        let (n_carriers, n_defenses) = (15, 4);
        let mut s = Self {
            seed,
            n_players_per_side: 11,
            n_plays: 300,
            n_carriers,
            n_offenses: 3,
            n_defenses,
            n_weeks: 5,
            plays_per_game: 10,
            min_frames: 25,
            max_frames: 35,
            pre_handoff_frames: 6,
            spec: default_spec(),
            step: StepModelParams {
                alpha0: 0.75,
                beta: default_step_beta(),
                sigma: 0.08,
                tau_u: 0.06,
                tau_v: 0.04,
                u: vec![0.0; n_carriers],
                v: vec![0.0; n_defenses],
            },
            turn: TurnModelParams {
                alpha0: 0.0,
                beta: default_turn_beta(),
                gamma0: 4.0,
                gamma1: 2.0,
                tau_w: 0.25,
                w: vec![0.0; n_carriers],
            },
            noise: KinematicNoise::default(),
        };
        s.redraw_effects();
        s
    }

    pub fn from_toml_str(text: &str) -> Result<Self, SyntheticError> {
        let s: Self = toml::from_str(text).map_err(|e| SyntheticError::InvalidScenario(e.to_string()))?;
        s.validate()?;
        Ok(s)
    }

    /// Replaces `u`, `v` and `w` with fresh draws from `N(0, tau^2)` keyed by the seed,
    /// resizing them to the scenario's group counts.
    pub fn redraw_effects(&mut self) {
        let mut rng = ChaCha8Rng::seed_from_u64(stream_seed(&[self.seed, 0xEFFE_C75]));
        let mut draw = |n: usize, tau: f64| -> Vec<f64> {
            (0..n).map(|_| tau * rng.sample::<f64, _>(StandardNormal)).collect()
        };
        self.step.u = draw(self.n_carriers, self.step.tau_u);
        self.step.v = draw(self.n_defenses, self.step.tau_v);
        self.turn.w = draw(self.n_carriers, self.turn.tau_w);
    }

    pub fn validate(&self) -> Result<(), SyntheticError> {
        let bad = |m: String| Err(SyntheticError::InvalidScenario(m));
        if self.n_players_per_side != 11 {
            return bad(format!("n_players_per_side must be 11, got {}", self.n_players_per_side));
        }
        if self.n_plays == 0 || self.n_carriers == 0 || self.n_defenses == 0 || self.n_weeks == 0 {
            return bad("plays, carriers, defenses and weeks must all be positive".into());
        }
        if self.n_offenses == 0 || self.n_offenses > self.n_carriers {
            return bad(format!("n_offenses must be in 1..={}", self.n_carriers));
        }
        if self.plays_per_game == 0 || self.pre_handoff_frames == 0 {
            return bad("plays_per_game and pre_handoff_frames must be positive".into());
        }
        if self.min_frames < 3 || self.min_frames > self.max_frames {
            return bad(format!("frame range {}..={} is invalid", self.min_frames, self.max_frames));
        }
        self.spec.validate().map_err(|e| SyntheticError::InvalidScenario(e.to_string()))?;
        let lens = [
            ("step beta", self.step.beta.len(), self.spec.step.len()),
            ("turn beta", self.turn.beta.len(), self.spec.turn.len()),
            ("u", self.step.u.len(), self.n_carriers),
            ("v", self.step.v.len(), self.n_defenses),
            ("w", self.turn.w.len(), self.n_carriers),
        ];
        for (name, found, expected) in lens {
            if found != expected {
                return bad(format!("{name} has {found} entries, expected {expected}"));
            }
        }
        let variances = [
            ("sigma", self.step.sigma),
            ("tau_u", self.step.tau_u),
            ("tau_v", self.step.tau_v),
            ("tau_w", self.turn.tau_w),
        ];
        for (name, v) in variances {
            if !(v > 0.0) || !v.is_finite() {
                return bad(format!("{name} must be positive and finite, got {v}"));
            }
        }
        let n = &self.noise;
        if [n.speed_sd, n.defender_jitter, n.blocker_jitter].iter().any(|v| !(*v >= 0.0)) {
            return bad("noise scales must be non-negative".into());
        }
        Ok(())
    }

    pub fn carrier_id(j: usize) -> u64 {
        10_001 + j as u64
    }

    pub fn offense_club(o: usize) -> String {
        format!("O{:02}", o + 1)
    }

    pub fn defense_club(d: usize) -> String {
        format!("D{:02}", d + 1)
    }

    /// Group levels indexed exactly like the true effect vectors.
    pub fn levels(&self) -> GroupLevels {
        GroupLevels {
            carriers: (0..self.n_carriers).map(Self::carrier_id).collect(),
            defenses: (0..self.n_defenses).map(Self::defense_club).collect(),
        }
    }

    /// The generating parameters as a one-draw posterior.
    pub fn true_posterior(&self) -> MovementPosterior {
        MovementPosterior { spec: self.spec.clone(), levels: self.levels(), step: vec![self.step.clone()], turn: vec![self.turn.clone()] }
    }

    /// True parameter vectors in sampler order, with names matching a fit on
    /// data where every level appears.
    pub fn true_parameters(&self) -> TrueParameters {
        let levels = self.levels();
        TrueParameters {
            step_names: StepModelParams::names(&self.spec.step.columns, &levels),
            step: self.step.to_vec(),
            turn_names: TurnModelParams::names(&self.spec.turn.columns, &levels),
            turn: self.turn.to_vec(),
            levels,
        }
    }
}

/// Named true values of both models.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrueParameters {
    pub levels: GroupLevels,
    pub step_names: Vec<String>,
    pub step: Vec<f64>,
    pub turn_names: Vec<String>,
    pub turn: Vec<f64>,
}

/// One drawn carrier movement at post-handoff frame `frame_index`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatentStep {
    pub frame_index: usize,
    /// Mean of the transformed step.
    pub mu_step: f64,
    /// Transformed step before the inverse transform.
    pub z: f64,
    pub step_length: f64,
    pub mu_turn: f64,
    pub kappa: f64,
    pub turn_angle: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticPlay {
    pub record: PlayRecord,
    pub week: u32,
    pub direction: PlayDirection,
    pub carrier_id: u64,
    /// Standardized handoff-to-whistle window, as ingestion would produce it.
    pub sequence: BallCarrierSequence,
    /// Every row of the play in raw vendor orientation, football included.
    pub tracking: Vec<TrackingFrame>,
    /// Model-drawn movements for frames `1..`, in order.
    pub latent: Vec<LatentStep>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticData {
    pub scenario: SyntheticScenario,
    pub plays: Vec<SyntheticPlay>,
}

impl SyntheticData {
    pub fn sequences(&self) -> Vec<BallCarrierSequence> {
        self.plays.iter().map(|p| p.sequence.clone()).collect()
    }

    pub fn truth(&self) -> TrueParameters {
        self.scenario.true_parameters()
    }
}

/// Generates every play of `scenario`. Plays use independent random streams,
/// so the result does not depend on how generation is split across threads.
pub fn generate_from_movement_models(scenario: &SyntheticScenario) -> Result<SyntheticData, SyntheticError> {
    scenario.validate()?;
    let jobs = std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1);
    let indices: Vec<usize> = (0..scenario.n_plays).collect();
    let chunk = indices.len().div_ceil(jobs).max(1);
    let mut plays = Vec::with_capacity(scenario.n_plays);
    std::thread::scope(|scope| {
        let handles: Vec<_> = indices
            .chunks(chunk)
            .map(|c| scope.spawn(move || c.iter().map(|&i| generate_play(scenario, i)).collect::<Result<Vec<_>, _>>()))
            .collect();
        for h in handles {
            plays.extend(h.join().expect("generator thread panicked")?);
        }
        Ok::<(), SyntheticError>(())
    })?;
    Ok(SyntheticData { scenario: scenario.clone(), plays })
}

struct Mover {
    id: u64,
    side: Side,
    x: f64,
    y: f64,
    speed: f64,
    accel: f64,
    dis: f64,
    direction: f64,
    /// Yards per frame this player can cover.
    pace: f64,
}

impl Mover {
    fn state(&self) -> PlayerState {
        PlayerState {
            player_id: self.id,
            side: self.side,
            x: self.x,
            y: self.y,
            speed: self.speed,
            accel: self.accel,
            dis: self.dis,
            orientation: self.direction,
            direction: self.direction,
        }
    }

    /// Moves to `(x, y)` and refreshes the derived kinematics.
    fn relocate(&mut self, x: f64, y: f64, reported_speed: f64) {
        let (dx, dy) = (x - self.x, y - self.y);
        self.dis = dx.hypot(dy);
        if self.dis > 0.0 {
            self.direction = dy.atan2(dx);
        }
        self.accel = (reported_speed - self.speed) * 10.0;
        self.speed = reported_speed;
        self.x = x;
        self.y = y;
    }

    /// A step toward `(tx, ty)` of at most `pace`, stopping `stand_off` short, plus jitter.
    fn chase<R: Rng>(&mut self, tx: f64, ty: f64, stand_off: f64, jitter: f64, rng: &mut R) {
        let (dx, dy) = (tx - self.x, ty - self.y);
        let d = dx.hypot(dy);
        let reach = (d - stand_off).clamp(0.0, self.pace);
        let (ux, uy) = if d > 0.0 { (dx / d, dy / d) } else { (0.0, 0.0) };
        let jx = jitter * rng.sample::<f64, _>(StandardNormal);
        let jy = jitter * rng.sample::<f64, _>(StandardNormal);
        let nx = (self.x + reach * ux + jx).clamp(0.0, FIELD_LENGTH);
        let ny = (self.y + reach * uy + jy).clamp(0.0, FIELD_WIDTH);
        let moved = (nx - self.x).hypot(ny - self.y);
        self.relocate(nx, ny, moved * 10.0);
    }
}

fn inside_field(x: f64, y: f64) -> bool {
    (0.0..=FIELD_LENGTH).contains(&x) && (0.0..=FIELD_WIDTH).contains(&y)
}

fn snapshot(frame_id: u32, event: Option<&str>, carrier: &Mover, team: &[Mover], defense: &[Mover]) -> FrameSnapshot {
    let mut players: Vec<PlayerState> =
        std::iter::once(carrier).chain(team).chain(defense).map(Mover::state).collect();
    players.sort_by_key(|p| p.player_id);
    FrameSnapshot { frame_id, event: event.map(str::to_string), players }
}

fn compass_degrees(direction: f64) -> f64 {
    (90.0 - direction.to_degrees()).rem_euclid(360.0)
}

/// Raw-orientation rows for one standardized snapshot, football last.
fn raw_rows(
    snap: &FrameSnapshot,
    game_id: u64,
    play_id: u64,
    direction: PlayDirection,
    clubs: (&str, &str),
    carrier_id: u64,
) -> Vec<TrackingFrame> {
    let flip = direction == PlayDirection::Left;
    let to_raw = |x: f64, y: f64| if flip { (FIELD_LENGTH - x, FIELD_WIDTH - y) } else { (x, y) };
    let heading = |d: f64| {
        let c = compass_degrees(d);
        if flip {
            (c + 180.0).rem_euclid(360.0)
        } else {
            c
        }
    };
    let mut rows: Vec<TrackingFrame> = snap
        .players
        .iter()
        .map(|p| {
            let (x, y) = to_raw(p.x, p.y);
            TrackingFrame {
                game_id,
                play_id,
                player_id: Some(p.player_id),
                frame_id: snap.frame_id,
                x,
                y,
                speed: Some(p.speed),
                accel: p.accel,
                dis: p.dis,
                orientation: Some(heading(p.orientation)),
                direction: Some(heading(p.direction)),
                event: snap.event.clone(),
                club: if p.side == Side::Offense { clubs.0 } else { clubs.1 }.to_string(),
                play_direction: direction,
            }
        })
        .collect();
    let c = snap.player(carrier_id).expect("carrier on field");
    let (x, y) = to_raw(c.x, c.y);
    rows.push(TrackingFrame {
        game_id,
        play_id,
        player_id: None,
        frame_id: snap.frame_id,
        x,
        y,
        speed: Some(c.speed),
        accel: c.accel,
        dis: c.dis,
        orientation: None,
        direction: None,
        event: snap.event.clone(),
        club: "football".into(),
        play_direction: direction,
    });
    rows
}

/// Game index, play id within the game, and game id of play `index`.
fn play_slot(scenario: &SyntheticScenario, index: usize) -> (usize, u64, u64) {
    let g = index / scenario.plays_per_game;
    let play_id = 50 + 25 * (index % scenario.plays_per_game) as u64;
    (g, play_id, 2_024_090_001 + g as u64)
}

fn generate_play(sc: &SyntheticScenario, index: usize) -> Result<SyntheticPlay, SyntheticError> {
    let mut rng = ChaCha8Rng::seed_from_u64(stream_seed(&[sc.seed, index as u64]));
    let (g, play_id, game_id) = play_slot(sc, index);
    let d = g % sc.n_defenses;
    let o = (g / sc.n_defenses) % sc.n_offenses;
    let week = (g % sc.n_weeks as usize) as u32 + 1;
    let roster: Vec<usize> = (o..sc.n_carriers).step_by(sc.n_offenses).collect();
    let j = roster[rng.random_range(0..roster.len())];
    let carrier_id = SyntheticScenario::carrier_id(j);
    let (off_club, def_club) = (SyntheticScenario::offense_club(o), SyntheticScenario::defense_club(d));
    let direction = if rng.random_bool(0.5) { PlayDirection::Left } else { PlayDirection::Right };

    let los: f64 = rng.random_range(25.0..75.0);
    let yards_to_go = rng.random_range(1..=10) as f64;
    let metadata = PlayMetadata {
        game_id,
        play_id,
        ball_carrier_id: carrier_id,
        offense_club: off_club.clone(),
        defense_club: def_club.clone(),
        yardline_absolute: TARGET_GOAL_X - los,
        yards_to_go,
        week,
    };
    let record = PlayRecord {
        game_id,
        play_id,
        offense_club: off_club.clone(),
        defense_club: def_club.clone(),
        yards_to_go,
        absolute_yardline: match direction {
            PlayDirection::Right => los,
            PlayDirection::Left => FIELD_LENGTH - los,
        },
        ball_carrier_id: None,
    };

    let yc: f64 = 26.65 + rng.random_range(-4.0..4.0);
    let jiggle = |rng: &mut ChaCha8Rng, x: f64, y: f64| {
        ((x + rng.random_range(-0.5..0.5)).clamp(0.0, FIELD_LENGTH), (y + rng.random_range(-0.5..0.5)).clamp(0.0, FIELD_WIDTH))
    };
    let mover = |id: u64, side: Side, (x, y): (f64, f64), pace: f64| Mover {
        id,
        side,
        x,
        y,
        speed: 0.0,
        accel: 0.0,
        dis: 0.0,
        direction: if side == Side::Offense { 0.0 } else { PI },
        pace,
    };
    let mut carrier = mover(carrier_id, Side::Offense, jiggle(&mut rng, los - 5.0, yc), 0.0);
    let spots_off = [
        (-0.5, -4.0), (-0.5, -2.0), (-0.5, 0.0), (-0.5, 2.0), (-0.5, 4.0),
        (-1.0, -8.0), (-1.0, 8.0), (-1.0, -15.0), (-1.0, 15.0), (-7.0, 1.0),
    ];
    let team_base = 20_000 + 100 * o as u64;
    let mut team: Vec<Mover> = spots_off
        .iter()
        .enumerate()
        .map(|(k, (dx, dy))| {
            let at = jiggle(&mut rng, los + dx, yc + dy);
            mover(team_base + k as u64, Side::Offense, at, 0.25)
        })
        .collect();
    let spots_def = [
        (1.0, -6.0), (1.0, -2.0), (1.0, 2.0), (1.0, 6.0),
        (5.0, -6.0), (5.0, 0.0), (5.0, 6.0),
        (10.0, -14.0), (10.0, 14.0), (14.0, -5.0), (14.0, 5.0),
    ];
    let def_base = 30_000 + 100 * d as u64;
    let mut defense: Vec<Mover> = spots_def
        .iter()
        .enumerate()
        .map(|(k, (dx, dy))| {
            let pace = rng.random_range(0.3..0.6);
            let at = jiggle(&mut rng, los + dx, yc + dy);
            mover(def_base + k as u64, Side::Defense, at, pace)
        })
        .collect();

    let mut tracking = Vec::new();
    let raw = |snap: &FrameSnapshot| raw_rows(snap, game_id, play_id, direction, (&off_club, &def_club), carrier_id);
    let handoff_id = sc.pre_handoff_frames as u32;
    for fid in 1..handoff_id {
        let ev = (fid == 1).then_some("ball_snap");
        tracking.extend(raw(&snapshot(fid, ev, &carrier, &team, &defense)));
    }

    let ctx = FieldContext::from(&metadata);
    let n_target = rng.random_range(sc.min_frames..=sc.max_frames);
    let mut frames = vec![snapshot(handoff_id, Some("handoff"), &carrier, &team, &defense)];
    let mut latent = Vec::with_capacity(n_target);
    let mut bearing: f64 = 0.15 * rng.sample::<f64, _>(StandardNormal);
    let (mut lag_s, mut lag_phi) = (0.0, 0.0);
    let mut terminal = TerminalEvent::Tackle;
    let upstream = |e: String| SyntheticError::Upstream(e);
    for t in 0..n_target {
        let (s, phi) = if t == 0 {
            (rng.random_range(0.25..0.45), 0.0)
        } else {
            let snap = frames.last().expect("handoff frame present");
            let fv = movement_features_at(snap, &ctx, carrier.x, carrier.y, carrier.speed, lag_s, lag_phi)
                .map_err(|e| upstream(e.to_string()))?;
            let x_step = sc.spec.step.standardize(&fv).map_err(|e| upstream(e.to_string()))?;
            let x_turn = sc.spec.turn.standardize(&fv).map_err(|e| upstream(e.to_string()))?;
            let mu_step = sc.step.linear_predictor(&x_step, j, d);
            // the transform is only defined on [0, pi/2]: redraw the rare excursions
            let mut z = mu_step + sc.step.sigma * rng.sample::<f64, _>(StandardNormal);
            for _ in 0..MAX_REDRAWS {
                if z > 0.0 && z < FRAC_PI_2 {
                    break;
                }
                z = mu_step + sc.step.sigma * rng.sample::<f64, _>(StandardNormal);
            }
            let s = inverse_arcsine_transform(z, sc.spec.s_max).0;
            let mu_turn = sc.turn.mean_direction(&x_turn);
            let kappa = sc.turn.concentration(s, j);
            let phi = sample_von_mises(mu_turn, kappa, &mut rng);
            latent.push(LatentStep { frame_index: t, mu_step, z, step_length: s, mu_turn, kappa, turn_angle: phi });
            (s, phi)
        };
        bearing = wrap_angle(bearing + phi);
        let (nx, ny) = (carrier.x + s * bearing.cos(), carrier.y + s * bearing.sin());
        if !inside_field(nx, ny) {
            latent.pop();
            terminal = TerminalEvent::OutOfBounds;
            break;
        }
        let (cx, cy) = (carrier.x, carrier.y);
        for m in defense.iter_mut() {
            m.chase(cx, cy, 0.5, sc.noise.defender_jitter, &mut rng);
        }
        for m in team.iter_mut() {
            let (tx, ty) = defense
                .iter()
                .map(|dm| (dm.x, dm.y))
                .min_by(|a, b| (a.0 - m.x).hypot(a.1 - m.y).total_cmp(&(b.0 - m.x).hypot(b.1 - m.y)))
                .expect("defense is non-empty");
            m.chase(tx, ty, 1.0, sc.noise.blocker_jitter, &mut rng);
        }
        let reported = (10.0 * s + sc.noise.speed_sd * rng.sample::<f64, _>(StandardNormal)).max(0.0);
        carrier.relocate(nx, ny, reported);
        // the carrier's reported direction is the heading just taken, even for a zero step
        carrier.direction = bearing;
        lag_s = s;
        lag_phi = phi;
        let fid = handoff_id + t as u32 + 1;
        if nx >= TARGET_GOAL_X {
            terminal = TerminalEvent::Touchdown;
            frames.push(snapshot(fid, Some(terminal.as_str()), &carrier, &team, &defense));
            break;
        }
        let last = t + 1 == n_target;
        frames.push(snapshot(fid, last.then_some(terminal.as_str()), &carrier, &team, &defense));
    }
    if terminal == TerminalEvent::OutOfBounds {
        // the first step starts near midfield, so the tagged frame is never the handoff
        frames.last_mut().expect("handoff frame present").event = Some(terminal.as_str().to_string());
    }
    for snap in &frames {
        tracking.extend(raw(snap));
    }
    let sequence = BallCarrierSequence {
        metadata,
        frames,
        start_event: "handoff".into(),
        end_event: terminal,
        warnings: Vec::new(),
    };
    Ok(SyntheticPlay { record, week, direction, carrier_id, sequence, tracking, latent })
}

