use std::collections::{BTreeMap, HashSet};

use log::warn;
use serde::{Deserialize, Serialize};

use super::{
    compass_to_radians, standardize_coordinates, BallCarrierSequence, FrameSnapshot,
    PlayMetadata, PlayerState, Side, TrackingError, TrackingFrame,
};

const HANDOFF: &str = "handoff";
/// Events that mean the ball left the designated carrier's hands.
const CARRIER_CHANGE_EVENTS: [&str; 3] = ["fumble", "lateral", "fumble_defense_recovered"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TerminalEvent {
    Tackle,
    OutOfBounds,
    Touchdown,
}

impl TerminalEvent {
    pub fn parse(tag: &str) -> Option<Self> {
        match tag {
            "tackle" => Some(Self::Tackle),
            "out_of_bounds" => Some(Self::OutOfBounds),
            "touchdown" => Some(Self::Touchdown),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Tackle => "tackle",
            Self::OutOfBounds => "out_of_bounds",
            Self::Touchdown => "touchdown",
        }
    }
}

/// Groups rows by `(game_id, play_id)` in a deterministic order.
pub fn group_plays(frames: Vec<TrackingFrame>) -> BTreeMap<(u64, u64), Vec<TrackingFrame>> {
    let mut out: BTreeMap<(u64, u64), Vec<TrackingFrame>> = BTreeMap::new();
    for f in frames {
        out.entry((f.game_id, f.play_id)).or_default().push(f);
    }
    out
}

/// Cuts the handoff-to-terminal-event window out of one play.
///
/// Rows are standardized, the football is dropped, and duplicated
/// `(player, frame)` rows keep their first occurrence.
pub fn extract_ball_carrier_sequence(
    play_frames: &[TrackingFrame],
    metadata: &PlayMetadata,
) -> Result<BallCarrierSequence, TrackingError> {
    let mut warnings = Vec::new();
    let mut by_frame: BTreeMap<u32, Vec<TrackingFrame>> = BTreeMap::new();
    let mut seen: HashSet<(u64, u32)> = HashSet::new();
    let mut carrier_seen = false;
    for raw in play_frames {
        let Some(pid) = raw.player_id else { continue };
        if !seen.insert((pid, raw.frame_id)) {
            let msg = format!("duplicate row for player {pid} at frame {}; kept first", raw.frame_id);
            warn!("{msg}");
            warnings.push(msg);
            continue;
        }
        carrier_seen |= pid == metadata.ball_carrier_id;
        by_frame.entry(raw.frame_id).or_default().push(standardize_coordinates(raw)?);
    }
    if !carrier_seen {
        return Err(TrackingError::BallCarrierMissing(metadata.ball_carrier_id));
    }

    let mut events: Vec<(u32, Option<String>)> = Vec::with_capacity(by_frame.len());
    for (&fid, rows) in &by_frame {
        let mut tag: Option<&str> = None;
        for r in rows {
            if let Some(e) = r.event.as_deref() {
                match tag {
                    Some(t) if t != e => return Err(TrackingError::ConflictingEvents(fid)),
                    _ => tag = Some(e),
                }
            }
        }
        events.push((fid, tag.map(str::to_string)));
    }

    let handoffs: Vec<usize> = events
        .iter()
        .enumerate()
        .filter(|(_, (_, e))| e.as_deref() == Some(HANDOFF))
        .map(|(i, _)| i)
        .collect();
    let start = *handoffs.first().ok_or(TrackingError::NoHandoff)?;
    if handoffs.len() > 1 {
        let msg = format!("{} handoff tags; using frame {}", handoffs.len(), events[start].0);
        warn!("{msg}");
        warnings.push(msg);
    }
    let (end, terminal) = events
        .iter()
        .enumerate()
        .skip(start + 1)
        .find_map(|(i, (_, e))| e.as_deref().and_then(TerminalEvent::parse).map(|t| (i, t)))
        .ok_or(TrackingError::NoTerminalEvent)?;

    let mut frames = Vec::with_capacity(end - start + 1);
    for (i, (fid, event)) in events.iter().enumerate().take(end + 1).skip(start) {
        if i > start && *fid != events[i - 1].0 + 1 {
            return Err(TrackingError::FrameGap(events[i - 1].0));
        }
        if let Some(e) = event.as_deref() {
            if CARRIER_CHANGE_EVENTS.contains(&e) {
                return Err(TrackingError::BallCarrierChange(e.to_string()));
            }
        }
        let rows = &by_frame[fid];
        let mut players = Vec::with_capacity(22);
        let (mut n_off, mut n_def) = (0usize, 0usize);
        let mut has_carrier = false;
        for r in rows {
            let side = if r.club == metadata.offense_club {
                n_off += 1;
                Side::Offense
            } else if r.club == metadata.defense_club {
                n_def += 1;
                Side::Defense
            } else {
                continue;
            };
            let pid = r.player_id.expect("football filtered above");
            has_carrier |= pid == metadata.ball_carrier_id;
            let speed = match r.speed {
                Some(s) => s,
                None => {
                    let msg = format!("speed missing for player {pid} at frame {fid}; imputed from dis");
                    warn!("{msg}");
                    warnings.push(msg);
                    r.dis * 10.0
                }
            };
            players.push(PlayerState {
                player_id: pid,
                side,
                x: r.x,
                y: r.y,
                speed,
                accel: r.accel,
                dis: r.dis,
                orientation: r.orientation.map(compass_to_radians).unwrap_or(0.0),
                direction: r.direction.map(compass_to_radians).unwrap_or(0.0),
            });
        }
        if n_off != 11 || n_def != 11 {
            return Err(TrackingError::PlayerCountMismatch(*fid));
        }
        if !has_carrier {
            return Err(TrackingError::BallCarrierMissing(metadata.ball_carrier_id));
        }
        players.sort_by_key(|p| p.player_id);
        frames.push(FrameSnapshot { frame_id: *fid, event: event.clone(), players });
    }

    Ok(BallCarrierSequence {
        metadata: metadata.clone(),
        frames,
        start_event: HANDOFF.to_string(),
        end_event: terminal,
        warnings,
    })
}
