//! Tracking data: raw rows, field standardization, ball-carrier sequences
//! and their on-disk store.

mod ingest;
mod sequence;
mod store;

pub use ingest::{
    ingest_directory, load_games, load_player_play, load_plays, parse_tracking_csv, parse_tracking_reader,
    resolve_metadata, ColumnMap, IngestSummary, PlayRecord, RejectedRow, TrackingTable,
};
pub use sequence::{extract_ball_carrier_sequence, group_plays, TerminalEvent};
pub use store::{load_sequences, persist_sequences, StoreManifest, SEQUENCE_SCHEMA_VERSION};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Field length including both end zones (yards).
pub const FIELD_LENGTH: f64 = 120.0;
/// Field width (yards).
pub const FIELD_WIDTH: f64 = 53.3;
/// Standardized x of the goal line the offense attacks.
pub const TARGET_GOAL_X: f64 = 110.0;
/// Standardized x of the offense's own goal line.
pub const OWN_GOAL_X: f64 = 10.0;

#[derive(Debug, Error)]
pub enum TrackingError {
    #[error("missing column `{0}`")]
    MissingColumn(String),
    #[error("malformed row at line {line}: {reason}")]
    MalformedRow { line: usize, reason: String },
    #[error("empty file")]
    EmptyFile,
    #[error("{axis} = {value} is outside the field")]
    OutOfBounds { axis: &'static str, value: f64 },
    #[error("play has no handoff event")]
    NoHandoff,
    #[error("play has no terminal event after the handoff")]
    NoTerminalEvent,
    #[error("frame {0} does not hold 11 offense and 11 defense players")]
    PlayerCountMismatch(u32),
    #[error("frame {0} carries conflicting event tags")]
    ConflictingEvents(u32),
    #[error("gap in frame clock after frame {0}")]
    FrameGap(u32),
    #[error("ball carrier changes during the sequence (event `{0}`)")]
    BallCarrierChange(String),
    #[error("ball carrier {0} not present in play frames")]
    BallCarrierMissing(u64),
    #[error("no metadata for game {game_id} play {play_id}: {reason}")]
    MissingMetadata { game_id: u64, play_id: u64, reason: String },
    #[error("sequence store schema version {found} is not supported (expected {expected})")]
    SchemaVersionMismatch { found: u32, expected: u32 },
    #[error("i/o failure: {0}")]
    IoFailure(#[from] std::io::Error),
    #[error("csv failure: {0}")]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PlayDirection {
    Left,
    Right,
}

impl PlayDirection {
    pub fn parse(s: &str) -> Option<Self> {
        match s.trim() {
            "left" | "Left" | "LEFT" => Some(Self::Left),
            "right" | "Right" | "RIGHT" => Some(Self::Right),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Left => "left",
            Self::Right => "right",
        }
    }
}

/// One player (or football) record at one frame, in vendor units.
///
/// Angles are compass degrees as delivered (0 = +y, clockwise).
#[derive(Debug, Clone, PartialEq)]
pub struct TrackingFrame {
    pub game_id: u64,
    pub play_id: u64,
    /// `None` for the football.
    pub player_id: Option<u64>,
    pub frame_id: u32,
    pub x: f64,
    pub y: f64,
    /// `None` on a vendor dropout.
    pub speed: Option<f64>,
    pub accel: f64,
    pub dis: f64,
    pub orientation: Option<f64>,
    pub direction: Option<f64>,
    pub event: Option<String>,
    pub club: String,
    pub play_direction: PlayDirection,
}

/// Orients a record so the offense attacks toward +x.
///
/// Standardized records carry `PlayDirection::Right`, which makes the
/// operation idempotent.
pub fn standardize_coordinates(frame: &TrackingFrame) -> Result<TrackingFrame, TrackingError> {
    if !(0.0..=FIELD_LENGTH).contains(&frame.x) || !frame.x.is_finite() {
        return Err(TrackingError::OutOfBounds { axis: "x", value: frame.x });
    }
    if !(0.0..=FIELD_WIDTH).contains(&frame.y) || !frame.y.is_finite() {
        return Err(TrackingError::OutOfBounds { axis: "y", value: frame.y });
    }
    let mut out = frame.clone();
    if frame.play_direction == PlayDirection::Left {
        out.x = FIELD_LENGTH - frame.x;
        out.y = FIELD_WIDTH - frame.y;
        out.orientation = frame.orientation.map(rotate_half_turn);
        out.direction = frame.direction.map(rotate_half_turn);
        out.play_direction = PlayDirection::Right;
    }
    Ok(out)
}

fn rotate_half_turn(deg: f64) -> f64 {
    (deg + 180.0).rem_euclid(360.0)
}

/// Converts a compass heading in degrees (0 = +y, clockwise) to a
/// mathematical angle in radians (0 = +x, counter-clockwise) in `(-pi, pi]`.
pub fn compass_to_radians(deg: f64) -> f64 {
    crate::scalar::wrap_angle((90.0 - deg).to_radians())
}

/// Which unit a player belongs to on a given play.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Offense,
    Defense,
}

/// A player's standardized state at one frame. Angles in radians, math convention.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlayerState {
    pub player_id: u64,
    pub side: Side,
    pub x: f64,
    pub y: f64,
    pub speed: f64,
    pub accel: f64,
    pub dis: f64,
    pub orientation: f64,
    pub direction: f64,
}

/// All 22 players at one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameSnapshot {
    pub frame_id: u32,
    pub event: Option<String>,
    pub players: Vec<PlayerState>,
}

impl FrameSnapshot {
    pub fn player(&self, id: u64) -> Option<&PlayerState> {
        self.players.iter().find(|p| p.player_id == id)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlayMetadata {
    pub game_id: u64,
    pub play_id: u64,
    pub ball_carrier_id: u64,
    pub offense_club: String,
    pub defense_club: String,
    /// Yards from the target goal line at the snap.
    pub yardline_absolute: f64,
    pub yards_to_go: f64,
    pub week: u32,
}

impl PlayMetadata {
    /// Standardized x of the line of scrimmage.
    pub fn line_of_scrimmage_x(&self) -> f64 {
        TARGET_GOAL_X - self.yardline_absolute
    }

    /// Standardized x of the first-down line.
    pub fn first_down_x(&self) -> f64 {
        self.line_of_scrimmage_x() + self.yards_to_go
    }
}

/// The handoff-to-whistle slice of a run play.
#[derive(Debug, Clone, PartialEq)]
pub struct BallCarrierSequence {
    pub metadata: PlayMetadata,
    pub frames: Vec<FrameSnapshot>,
    pub start_event: String,
    pub end_event: TerminalEvent,
    pub warnings: Vec<String>,
}

impl BallCarrierSequence {
    /// Ball-carrier locations, one per frame.
    pub fn carrier_path(&self) -> Vec<(f64, f64)> {
        let id = self.metadata.ball_carrier_id;
        self.frames
            .iter()
            .map(|f| {
                let p = f.player(id).expect("validated sequence holds the carrier");
                (p.x, p.y)
            })
            .collect()
    }

    pub fn carrier(&self, frame_index: usize) -> &PlayerState {
        self.frames[frame_index]
            .player(self.metadata.ball_carrier_id)
            .expect("validated sequence holds the carrier")
    }

    /// Frame index of the first occurrence of `event`, if any.
    pub fn event_index(&self, event: &str) -> Option<usize> {
        self.frames.iter().position(|f| f.event.as_deref() == Some(event))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn row(x: f64, y: f64, dir: PlayDirection) -> TrackingFrame {
        TrackingFrame {
            game_id: 1,
            play_id: 1,
            player_id: Some(7),
            frame_id: 84,
            x,
            y,
            speed: Some(5.09),
            accel: 2.54,
            dis: 0.5,
            orientation: Some(249.5),
            direction: Some(141.72),
            event: None,
            club: "DEN".into(),
            play_direction: dir,
        }
    }

    #[test]
    fn right_plays_are_untouched() {
        let r = row(93.14, 30.08, PlayDirection::Right);
        assert_eq!(standardize_coordinates(&r).unwrap(), r);
    }

    #[test]
    fn left_plays_flip_both_axes_and_angles() {
        let s = standardize_coordinates(&row(93.14, 30.08, PlayDirection::Left)).unwrap();
        assert!((s.x - 26.86).abs() < 1e-9);
        assert!((s.y - 23.22).abs() < 1e-9);
        assert!((s.direction.unwrap() - 321.72).abs() < 1e-9);
        assert!((s.orientation.unwrap() - 69.5).abs() < 1e-9);
        assert_eq!(s.play_direction, PlayDirection::Right);
    }

    #[test]
    fn standardization_is_idempotent() {
        let once = standardize_coordinates(&row(12.0, 50.0, PlayDirection::Left)).unwrap();
        let twice = standardize_coordinates(&once).unwrap();
        assert_eq!(once, twice);
    }

    #[test]
    fn out_of_field_rejected() {
        let err = standardize_coordinates(&row(121.0, 3.0, PlayDirection::Right)).unwrap_err();
        assert!(matches!(err, TrackingError::OutOfBounds { axis: "x", .. }));
        let err = standardize_coordinates(&row(1.0, -0.2, PlayDirection::Left)).unwrap_err();
        assert!(matches!(err, TrackingError::OutOfBounds { axis: "y", .. }));
    }

    #[test]
    fn compass_conversion() {
        use std::f64::consts::FRAC_PI_2;
        assert!(compass_to_radians(90.0).abs() < 1e-12);
        assert!((compass_to_radians(0.0) - FRAC_PI_2).abs() < 1e-12);
        assert!((compass_to_radians(180.0) + FRAC_PI_2).abs() < 1e-12);
        // heading down-left on the raw field
        let a = compass_to_radians(219.68);
        assert!(a.cos() < 0.0 && a.sin() < 0.0);
    }
}
