//! Anchored frame-level covariates.
//!
//! Every other player is described relative to the ball carrier, and the
//! defenders and teammates are ordered by distance so feature slots are
//! stable across frames. Sign conventions (standardized field, offense
//! attacking +x):
//!
//! * `center_offset = y - 26.65`, positive on the offense's left.
//! * `rel_x = x_player - x_carrier`, positive toward the target end zone.
//! * `motion_angle` is the player's direction of motion minus the bearing
//!   from the player to the carrier, so 0 means moving straight at him.
//! * A player level with the carrier counts as "back"; one at the same `y`
//!   counts as "right".

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use thiserror::Error;

use crate::kinematics::StepTurnObservation;
use crate::scalar::wrap_angle;
use crate::tracking::{
    BallCarrierSequence, FrameSnapshot, PlayMetadata, PlayerState, Side, FIELD_LENGTH, FIELD_WIDTH,
    TARGET_GOAL_X,
};

#[derive(Debug, Error, PartialEq)]
pub enum FeatureError {
    #[error("ball carrier {0} missing from frame")]
    BallCarrierMissing(u64),
    #[error("frame {frame_id} has {offense} offense / {defense} defense players")]
    PlayerCountMismatch { frame_id: u32, offense: usize, defense: usize },
    #[error("series does not align with sequence: {0}")]
    AlignmentError(String),
    #[error("i/o failure: {0}")]
    Io(String),
}

pub const N_DEFENDERS: usize = 11;
pub const N_TEAMMATES: usize = 10;

/// What the carrier-relative features need to know about a play.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FieldContext {
    pub carrier_id: u64,
    pub first_down_x: f64,
}

impl From<&PlayMetadata> for FieldContext {
    fn from(m: &PlayMetadata) -> Self {
        Self { carrier_id: m.ball_carrier_id, first_down_x: m.first_down_x() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RelativeFeatures {
    pub rel_x: f64,
    pub rel_y_abs: f64,
    pub dist: f64,
    pub motion_angle: f64,
}

pub fn relative_features(player: &PlayerState, carrier: &PlayerState) -> RelativeFeatures {
    relative_to(player, carrier.x, carrier.y)
}

fn relative_to(player: &PlayerState, cx: f64, cy: f64) -> RelativeFeatures {
    let (dx, dy) = (cx - player.x, cy - player.y);
    let dist = dx.hypot(dy);
    let motion_angle = if dist == 0.0 { 0.0 } else { wrap_angle(player.direction - dy.atan2(dx)) };
    RelativeFeatures { rel_x: player.x - cx, rel_y_abs: (player.y - cy).abs(), dist, motion_angle }
}

fn center_offset(y: f64) -> f64 {
    y - FIELD_WIDTH / 2.0
}

/// Defenders and teammates (carrier excluded), each sorted by distance to
/// the carrier with ties broken by player id.
pub fn anchor_and_order(
    snapshot: &FrameSnapshot,
    carrier_id: u64,
) -> Result<(Vec<&PlayerState>, Vec<&PlayerState>), FeatureError> {
    let carrier = snapshot.player(carrier_id).ok_or(FeatureError::BallCarrierMissing(carrier_id))?;
    order_around(snapshot, carrier_id, carrier.x, carrier.y)
}

fn order_around(
    snapshot: &FrameSnapshot,
    carrier_id: u64,
    cx: f64,
    cy: f64,
) -> Result<(Vec<&PlayerState>, Vec<&PlayerState>), FeatureError> {
    let mut defense: Vec<&PlayerState> = snapshot.players.iter().filter(|p| p.side == Side::Defense).collect();
    let mut offense: Vec<&PlayerState> = snapshot
        .players
        .iter()
        .filter(|p| p.side == Side::Offense && p.player_id != carrier_id)
        .collect();
    if defense.len() != N_DEFENDERS || offense.len() != N_TEAMMATES {
        return Err(FeatureError::PlayerCountMismatch {
            frame_id: snapshot.frame_id,
            offense: offense.len() + 1,
            defense: defense.len(),
        });
    }
    let key = |p: &PlayerState| (p.x - cx).hypot(p.y - cy);
    let cmp = |a: &&PlayerState, b: &&PlayerState| {
        key(a).total_cmp(&key(b)).then(a.player_id.cmp(&b.player_id))
    };
    defense.sort_by(cmp);
    offense.sort_by(cmp);
    Ok((defense, offense))
}

/// Front/back/left/right head counts around the carrier.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct DirectionCounts {
    pub def_front: u32,
    pub def_back: u32,
    pub def_left: u32,
    pub def_right: u32,
    pub off_front: u32,
    pub off_back: u32,
    pub off_left: u32,
    pub off_right: u32,
}

pub fn direction_counts(defense: &[&PlayerState], offense: &[&PlayerState], carrier: &PlayerState) -> DirectionCounts {
    counts_at(defense, offense, carrier.x, carrier.y)
}

fn counts_at(defense: &[&PlayerState], offense: &[&PlayerState], cx: f64, cy: f64) -> DirectionCounts {
    let mut c = DirectionCounts::default();
    for p in defense {
        if p.x > cx { c.def_front += 1 } else { c.def_back += 1 }
        if p.y > cy { c.def_left += 1 } else { c.def_right += 1 }
    }
    for p in offense {
        if p.x > cx { c.off_front += 1 } else { c.off_back += 1 }
        if p.y > cy { c.off_left += 1 } else { c.off_right += 1 }
    }
    c
}

/// Covariates of the step-length and turn-angle models at one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct MovementFeatureVector {
    pub frame_index: usize,
    pub bc_endzone_dist: f64,
    pub bc_center_offset: f64,
    pub bc_firstdown_dist: f64,
    pub bc_speed: f64,
    pub def1_speed: f64,
    pub def1_motion_angle: f64,
    pub def1_rel_x: f64,
    pub def1_rel_y_abs: f64,
    pub def1_dist: f64,
    pub counts: DirectionCounts,
    pub lag_step_length: f64,
    pub lag_turn_angle: f64,
}

impl MovementFeatureVector {
    /// Every column a model specification may reference.
    pub const COLUMNS: [&'static str; 19] = [
        "bc_endzone_dist",
        "bc_center_offset",
        "bc_firstdown_dist",
        "bc_speed",
        "def1_speed",
        "def1_motion_angle",
        "def1_rel_x",
        "def1_rel_y_abs",
        "def1_dist",
        "count_def_front",
        "count_def_back",
        "count_def_left",
        "count_def_right",
        "count_off_front",
        "count_off_back",
        "count_off_left",
        "count_off_right",
        "lag_step_length",
        "lag_turn_angle",
    ];

    pub fn value(&self, column: &str) -> Option<f64> {
        let c = &self.counts;
        Some(match column {
            "bc_endzone_dist" => self.bc_endzone_dist,
            "bc_center_offset" => self.bc_center_offset,
            "bc_firstdown_dist" => self.bc_firstdown_dist,
            "bc_speed" => self.bc_speed,
            "def1_speed" => self.def1_speed,
            "def1_motion_angle" => self.def1_motion_angle,
            "def1_rel_x" => self.def1_rel_x,
            "def1_rel_y_abs" => self.def1_rel_y_abs,
            "def1_dist" => self.def1_dist,
            "count_def_front" => c.def_front as f64,
            "count_def_back" => c.def_back as f64,
            "count_def_left" => c.def_left as f64,
            "count_def_right" => c.def_right as f64,
            "count_off_front" => c.off_front as f64,
            "count_off_back" => c.off_back as f64,
            "count_off_left" => c.off_left as f64,
            "count_off_right" => c.off_right as f64,
            "lag_step_length" => self.lag_step_length,
            "lag_turn_angle" => self.lag_turn_angle,
            _ => return None,
        })
    }
}

/// Movement covariates for a carrier standing at `(cx, cy)` in `snapshot`.
pub fn movement_features_at(
    snapshot: &FrameSnapshot,
    ctx: &FieldContext,
    cx: f64,
    cy: f64,
    carrier_speed: f64,
    lag_step_length: f64,
    lag_turn_angle: f64,
) -> Result<MovementFeatureVector, FeatureError> {
    let (defense, offense) = order_around(snapshot, ctx.carrier_id, cx, cy)?;
    let d1 = defense[0];
    let rel = relative_to(d1, cx, cy);
    Ok(MovementFeatureVector {
        frame_index: 0,
        bc_endzone_dist: TARGET_GOAL_X - cx,
        bc_center_offset: center_offset(cy),
        bc_firstdown_dist: ctx.first_down_x - cx,
        bc_speed: carrier_speed,
        def1_speed: d1.speed,
        def1_motion_angle: rel.motion_angle,
        def1_rel_x: rel.rel_x,
        def1_rel_y_abs: rel.rel_y_abs,
        def1_dist: rel.dist,
        counts: counts_at(&defense, &offense, cx, cy),
        lag_step_length,
        lag_turn_angle,
    })
}

/// One movement vector per observation that has both lags available.
pub fn assemble_movement_features(
    sequence: &BallCarrierSequence,
    series: &[StepTurnObservation<f64>],
) -> Result<Vec<MovementFeatureVector>, FeatureError> {
    let ctx = FieldContext::from(&sequence.metadata);
    let mut out = Vec::with_capacity(series.len());
    for obs in series {
        let snapshot = sequence.frames.get(obs.frame_index).ok_or_else(|| {
            FeatureError::AlignmentError(format!("frame index {} beyond sequence", obs.frame_index))
        })?;
        if snapshot.frame_id != obs.frame_id {
            return Err(FeatureError::AlignmentError(format!(
                "observation frame {} vs snapshot frame {}",
                obs.frame_id, snapshot.frame_id
            )));
        }
        let (Some(lag_s), Some(lag_phi)) = (obs.prev_step_length, obs.prev_turn_angle) else {
            continue;
        };
        let carrier = snapshot
            .player(ctx.carrier_id)
            .ok_or(FeatureError::BallCarrierMissing(ctx.carrier_id))?;
        let mut v = movement_features_at(snapshot, &ctx, carrier.x, carrier.y, carrier.speed, lag_s, lag_phi)?;
        v.frame_index = obs.frame_index;
        out.push(v);
    }
    Ok(out)
}

const PLAYER_FIELDS: [&str; 7] = ["endzone_dist", "center_offset", "speed", "motion_angle", "rel_x", "rel_y_abs", "dist"];
const CARRIER_FIELDS: [&str; 4] = ["bc_endzone_dist", "bc_center_offset", "bc_firstdown_dist", "bc_speed"];

/// Width of every [`ValuationFeatureVector`].
pub const VALUATION_WIDTH: usize = CARRIER_FIELDS.len() + (N_DEFENDERS + N_TEAMMATES) * PLAYER_FIELDS.len();

/// Column names of the valuation features, in vector order.
pub fn valuation_columns() -> Vec<String> {
    let mut cols: Vec<String> = CARRIER_FIELDS.iter().map(|s| s.to_string()).collect();
    for (prefix, n) in [("def", N_DEFENDERS), ("off", N_TEAMMATES)] {
        for k in 1..=n {
            for f in PLAYER_FIELDS {
                cols.push(format!("{prefix}{k}_{f}"));
            }
        }
    }
    cols
}

/// Carrier, all defenders and all teammates, distance-ordered; fixed width.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ValuationFeatureVector {
    pub values: Vec<f64>,
}

/// Valuation features with the carrier placed at `(cx, cy)` and everyone
/// else where `snapshot` has them. Returns the vector and whether the
/// location had to be clamped into the field.
pub fn refresh_features_for_hypothetical(
    snapshot: &FrameSnapshot,
    ctx: &FieldContext,
    location: (f64, f64),
) -> Result<(ValuationFeatureVector, bool), FeatureError> {
    let cx = location.0.clamp(0.0, FIELD_LENGTH);
    let cy = location.1.clamp(0.0, FIELD_WIDTH);
    let clamped = cx != location.0 || cy != location.1;
    let carrier = snapshot.player(ctx.carrier_id).ok_or(FeatureError::BallCarrierMissing(ctx.carrier_id))?;
    let (defense, offense) = order_around(snapshot, ctx.carrier_id, cx, cy)?;
    let mut values = Vec::with_capacity(VALUATION_WIDTH);
    values.extend([TARGET_GOAL_X - cx, center_offset(cy), ctx.first_down_x - cx, carrier.speed]);
    for p in defense.iter().chain(offense.iter()) {
        let r = relative_to(p, cx, cy);
        values.extend([TARGET_GOAL_X - p.x, center_offset(p.y), p.speed, r.motion_angle, r.rel_x, r.rel_y_abs, r.dist]);
    }
    debug_assert_eq!(values.len(), VALUATION_WIDTH);
    Ok((ValuationFeatureVector { values }, clamped))
}

/// One valuation vector per frame of the sequence.
pub fn assemble_valuation_features(sequence: &BallCarrierSequence) -> Result<Vec<ValuationFeatureVector>, FeatureError> {
    let ctx = FieldContext::from(&sequence.metadata);
    sequence
        .frames
        .iter()
        .map(|snap| {
            let c = snap.player(ctx.carrier_id).ok_or(FeatureError::BallCarrierMissing(ctx.carrier_id))?;
            refresh_features_for_hypothetical(snap, &ctx, (c.x, c.y)).map(|(v, _)| v)
        })
        .collect()
}

/// Writes a feature matrix as tab-separated text with a named header row.
pub fn export_matrix(path: &Path, columns: &[String], rows: &[Vec<f64>]) -> Result<(), FeatureError> {
    let io = |e: std::io::Error| FeatureError::Io(e.to_string());
    let mut w = BufWriter::new(File::create(path).map_err(io)?);
    writeln!(w, "{}", columns.join("\t")).map_err(io)?;
    for r in rows {
        if r.len() != columns.len() {
            return Err(FeatureError::AlignmentError(format!("row width {} != {}", r.len(), columns.len())));
        }
        let line: Vec<String> = r.iter().map(|v| v.to_string()).collect();
        writeln!(w, "{}", line.join("\t")).map_err(io)?;
    }
    w.flush().map_err(io)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn player(id: u64, side: Side, x: f64, y: f64) -> PlayerState {
        PlayerState { player_id: id, side, x, y, speed: 2.0, accel: 0.0, dis: 0.2, orientation: 0.0, direction: 0.0 }
    }

    /// Carrier 1 at (50, 26.65); defenders spread downfield, teammates mirrored.
    fn snapshot() -> FrameSnapshot {
        let mut players = vec![player(1, Side::Offense, 50.0, 26.65)];
        for k in 0..10u64 {
            let dy = if k % 2 == 0 { 3.0 + k as f64 } else { -(2.0 + k as f64) };
            players.push(player(10 + k, Side::Offense, 48.0 - k as f64 * 0.5, 26.65 + dy));
        }
        for k in 0..11u64 {
            players.push(player(30 + k, Side::Defense, 52.0 + k as f64, 20.0 + k as f64 * 1.3));
        }
        FrameSnapshot { frame_id: 1, event: None, players }
    }

    fn ctx() -> FieldContext {
        FieldContext { carrier_id: 1, first_down_x: 60.0 }
    }

    #[test]
    fn ordering_by_distance_then_id() {
        let mut s = snapshot();
        for p in s.players.iter_mut() {
            if p.player_id == 30 {
                p.x = 53.4;
                p.y = 26.65;
            }
            if p.player_id == 31 {
                p.x = 51.2;
                p.y = 26.65;
            }
        }
        let (d, o) = anchor_and_order(&s, 1).unwrap();
        assert_eq!(d[0].player_id, 31);
        assert_eq!(d[1].player_id, 30);
        assert_eq!(o.len(), 10);
        assert!(d.windows(2).all(|w| relative_features(w[0], s.player(1).unwrap()).dist
            <= relative_features(w[1], s.player(1).unwrap()).dist));
    }

    #[test]
    fn equal_distances_break_on_id() {
        let mut s = snapshot();
        for p in s.players.iter_mut() {
            match p.player_id {
                35 => { p.x = 51.0; p.y = 26.65; }
                33 => { p.x = 49.0; p.y = 26.65; }
                _ => {}
            }
        }
        let (d, _) = anchor_and_order(&s, 1).unwrap();
        assert_eq!((d[0].player_id, d[1].player_id), (33, 35));
    }

    #[test]
    fn missing_player_detected() {
        let mut s = snapshot();
        s.players.pop();
        assert!(matches!(anchor_and_order(&s, 1), Err(FeatureError::PlayerCountMismatch { defense: 10, .. })));
        assert_eq!(anchor_and_order(&snapshot(), 99).unwrap_err(), FeatureError::BallCarrierMissing(99));
    }

    #[test]
    fn relative_feature_cases() {
        let c = player(1, Side::Offense, 50.0, 20.0);
        let same = relative_features(&player(2, Side::Defense, 50.0, 20.0), &c);
        assert_eq!((same.rel_x, same.rel_y_abs, same.dist), (0.0, 0.0, 0.0));
        // defender 5 yards nearer the target end zone, running back at the carrier
        let mut d = player(3, Side::Defense, 55.0, 20.0);
        d.direction = PI;
        let r = relative_features(&d, &c);
        assert_eq!(r.rel_x, 5.0);
        assert_eq!(r.dist, 5.0);
        assert!(r.motion_angle.abs() < 1e-12);
        let side = relative_features(&player(4, Side::Defense, 47.0, 16.0), &c);
        assert_eq!(side.rel_y_abs, 4.0);
        assert_eq!(side.dist, 5.0);
    }

    #[test]
    fn counts_and_ties() {
        let c = player(1, Side::Offense, 50.0, 20.0);
        let defs: Vec<PlayerState> = (0..11).map(|k| player(30 + k, Side::Defense, 55.0 + k as f64, 21.0)).collect();
        let refs: Vec<&PlayerState> = defs.iter().collect();
        let n = direction_counts(&refs, &[], &c);
        assert_eq!((n.def_front, n.def_back, n.def_left), (11, 0, 11));

        let level = [player(40, Side::Defense, 50.0, 20.0)];
        let n = direction_counts(&[&level[0]], &[], &c);
        assert_eq!((n.def_front, n.def_back, n.def_left, n.def_right), (0, 1, 0, 1));

        let mates: Vec<PlayerState> = (0..10)
            .map(|k| player(10 + k, Side::Offense, 45.0, if k < 5 { 25.0 } else { 15.0 }))
            .collect();
        let refs: Vec<&PlayerState> = mates.iter().collect();
        let n = direction_counts(&[], &refs, &c);
        assert_eq!((n.off_left, n.off_right, n.off_back), (5, 5, 10));
    }

    #[test]
    fn count_pairs_sum_to_unit_sizes() {
        let v = movement_features_at(&snapshot(), &ctx(), 50.0, 26.65, 5.0, 0.4, 0.0).unwrap();
        assert_eq!(v.counts.def_front + v.counts.def_back, 11);
        assert_eq!(v.counts.off_front + v.counts.off_back, 10);
        assert_eq!(v.counts.def_left + v.counts.def_right, 11);
        assert_eq!(v.bc_endzone_dist, 60.0);
        assert_eq!(v.bc_firstdown_dist, 10.0);
        assert_eq!(v.value("count_def_front"), Some(v.counts.def_front as f64));
        assert_eq!(v.value("nope"), None);
        let snap = snapshot();
        let (d, _) = anchor_and_order(&snap, 1).unwrap();
        let min = d.iter().map(|p| (p.x - 50.0f64).hypot(p.y - 26.65)).fold(f64::INFINITY, f64::min);
        assert_eq!(v.def1_dist, min);
    }

    #[test]
    fn hypothetical_refresh() {
        let s = snapshot();
        let (base, clamped) = refresh_features_for_hypothetical(&s, &ctx(), (50.0, 26.65)).unwrap();
        assert!(!clamped);
        assert_eq!(base.values.len(), VALUATION_WIDTH);
        assert_eq!(valuation_columns().len(), VALUATION_WIDTH);
        let (moved, _) = refresh_features_for_hypothetical(&s, &ctx(), (51.0, 26.65)).unwrap();
        assert_eq!(base.values[0] - moved.values[0], 1.0);
        let (_, clamped) = refresh_features_for_hypothetical(&s, &ctx(), (121.0, 26.65)).unwrap();
        assert!(clamped);
    }

    #[test]
    fn hypothetical_reorders_defenders() {
        let mut s = snapshot();
        for p in s.players.iter_mut() {
            match p.player_id {
                30 => { p.x = 52.0; p.y = 26.65; }
                31 => { p.x = 50.0; p.y = 28.75; }
                _ => {}
            }
        }
        // distances 2.0 (id 30) and 2.1 (id 31) from the observed spot
        let (v, _) = refresh_features_for_hypothetical(&s, &ctx(), (50.0, 26.65)).unwrap();
        assert!((v.values[4 + 6] - 2.0).abs() < 1e-12);
        assert!((v.values[4 + 7 + 6] - 2.1).abs() < 1e-12);
        // step half a yard toward id 31: now it is nearest
        let (v, _) = refresh_features_for_hypothetical(&s, &ctx(), (50.0, 27.15)).unwrap();
        assert!((v.values[4 + 6] - 1.6).abs() < 1e-12);
        assert!(v.values[4 + 4].abs() < 1e-12, "nearest is now level");
    }

    #[test]
    fn mirror_symmetry() {
        let s = snapshot();
        let mut m = s.clone();
        for p in m.players.iter_mut() {
            p.y = FIELD_WIDTH - p.y;
            p.direction = -p.direction;
        }
        let a = movement_features_at(&s, &ctx(), 50.0, 26.0, 5.0, 0.4, 0.1).unwrap();
        let b = movement_features_at(&m, &ctx(), 50.0, FIELD_WIDTH - 26.0, 5.0, 0.4, 0.1).unwrap();
        assert!((a.bc_center_offset + b.bc_center_offset).abs() < 1e-12);
        assert_eq!(a.counts.def_left, b.counts.def_right);
        assert_eq!(a.counts.off_left, b.counts.off_right);
        assert!((a.def1_dist - b.def1_dist).abs() < 1e-12);
        assert!((a.def1_rel_y_abs - b.def1_rel_y_abs).abs() < 1e-12);
    }
}
