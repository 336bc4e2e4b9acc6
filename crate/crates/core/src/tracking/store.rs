use std::collections::BTreeSet;
use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{
    BallCarrierSequence, FrameSnapshot, PlayMetadata, PlayerState, Side, TerminalEvent,
    TrackingError,
};

pub const SEQUENCE_SCHEMA_VERSION: u32 = 1;
const VERSION_PREFIX: &str = "#stepturn-sequences v";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoreManifest {
    pub schema_version: u32,
    pub sequences: usize,
    pub games: usize,
    pub plays: usize,
    pub frames: usize,
}

fn malformed(line: usize, reason: impl Into<String>) -> TrackingError {
    TrackingError::MalformedRow { line, reason: reason.into() }
}

fn write_versioned(path: &Path) -> Result<csv::Writer<BufWriter<File>>, TrackingError> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "{VERSION_PREFIX}{SEQUENCE_SCHEMA_VERSION}")?;
    Ok(csv::WriterBuilder::new().delimiter(b'\t').from_writer(w))
}

fn read_versioned(path: &Path) -> Result<csv::Reader<BufReader<File>>, TrackingError> {
    let mut r = BufReader::new(File::open(path)?);
    let mut first = String::new();
    r.read_line(&mut first)?;
    let found: u32 = first
        .trim()
        .strip_prefix(VERSION_PREFIX)
        .and_then(|v| v.parse().ok())
        .ok_or_else(|| malformed(1, "missing schema version header"))?;
    if found != SEQUENCE_SCHEMA_VERSION {
        return Err(TrackingError::SchemaVersionMismatch { found, expected: SEQUENCE_SCHEMA_VERSION });
    }
    Ok(csv::ReaderBuilder::new().delimiter(b'\t').from_reader(r))
}

/// Writes sequences as a directory of tab-separated files plus a manifest.
///
/// Floats are written in shortest round-trip form, so a reload is bit-exact.
pub fn persist_sequences(sequences: &[BallCarrierSequence], dir: &Path) -> Result<StoreManifest, TrackingError> {
    fs::create_dir_all(dir)?;
    let mut seqs = write_versioned(&dir.join("sequences.tsv"))?;
    seqs.write_record([
        "seq", "game_id", "play_id", "ball_carrier_id", "offense_club", "defense_club",
        "yardline_absolute", "yards_to_go", "week", "start_event", "end_event", "n_frames", "warnings",
    ])?;
    let mut frames = write_versioned(&dir.join("frames.tsv"))?;
    frames.write_record([
        "seq", "frame_id", "event", "player_id", "side", "x", "y", "speed", "accel", "dis",
        "orientation", "direction",
    ])?;
    let mut games = BTreeSet::new();
    let mut n_frames = 0;
    for (i, s) in sequences.iter().enumerate() {
        let m = &s.metadata;
        games.insert(m.game_id);
        n_frames += s.frames.len();
        seqs.write_record([
            i.to_string(),
            m.game_id.to_string(),
            m.play_id.to_string(),
            m.ball_carrier_id.to_string(),
            m.offense_club.clone(),
            m.defense_club.clone(),
            m.yardline_absolute.to_string(),
            m.yards_to_go.to_string(),
            m.week.to_string(),
            s.start_event.clone(),
            s.end_event.as_str().to_string(),
            s.frames.len().to_string(),
            s.warnings.join(" | "),
        ])?;
        for f in &s.frames {
            for p in &f.players {
                frames.write_record([
                    i.to_string(),
                    f.frame_id.to_string(),
                    f.event.clone().unwrap_or_default(),
                    p.player_id.to_string(),
                    match p.side {
                        Side::Offense => "offense".to_string(),
                        Side::Defense => "defense".to_string(),
                    },
                    p.x.to_string(),
                    p.y.to_string(),
                    p.speed.to_string(),
                    p.accel.to_string(),
                    p.dis.to_string(),
                    p.orientation.to_string(),
                    p.direction.to_string(),
                ])?;
            }
        }
    }
    seqs.flush()?;
    frames.flush()?;
    let manifest = StoreManifest {
        schema_version: SEQUENCE_SCHEMA_VERSION,
        sequences: sequences.len(),
        games: games.len(),
        plays: sequences.len(),
        frames: n_frames,
    };
    let json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    fs::write(dir.join("manifest.json"), json + "\n")?;
    Ok(manifest)
}

fn field<T: std::str::FromStr>(rec: &csv::StringRecord, i: usize, line: usize) -> Result<T, TrackingError> {
    rec.get(i)
        .and_then(|v| v.parse().ok())
        .ok_or_else(|| malformed(line, format!("bad field {i}")))
}

pub fn load_sequences(dir: &Path) -> Result<Vec<BallCarrierSequence>, TrackingError> {
    let mut out: Vec<BallCarrierSequence> = Vec::new();
    let mut seqs = read_versioned(&dir.join("sequences.tsv"))?;
    for (k, rec) in seqs.records().enumerate() {
        let line = k + 3;
        let rec = rec?;
        let end: String = field(&rec, 10, line)?;
        let warnings: String = rec.get(12).unwrap_or("").to_string();
        out.push(BallCarrierSequence {
            metadata: PlayMetadata {
                game_id: field(&rec, 1, line)?,
                play_id: field(&rec, 2, line)?,
                ball_carrier_id: field(&rec, 3, line)?,
                offense_club: field(&rec, 4, line)?,
                defense_club: field(&rec, 5, line)?,
                yardline_absolute: field(&rec, 6, line)?,
                yards_to_go: field(&rec, 7, line)?,
                week: field(&rec, 8, line)?,
            },
            frames: Vec::with_capacity(field(&rec, 11, line)?),
            start_event: field(&rec, 9, line)?,
            end_event: TerminalEvent::parse(&end).ok_or_else(|| malformed(line, "bad terminal event"))?,
            warnings: if warnings.is_empty() {
                Vec::new()
            } else {
                warnings.split(" | ").map(str::to_string).collect()
            },
        });
    }

    let mut frames = read_versioned(&dir.join("frames.tsv"))?;
    for (k, rec) in frames.records().enumerate() {
        let line = k + 3;
        let rec = rec?;
        let seq: usize = field(&rec, 0, line)?;
        let target = out.get_mut(seq).ok_or_else(|| malformed(line, "unknown sequence index"))?;
        let frame_id: u32 = field(&rec, 1, line)?;
        if target.frames.last().map(|f| f.frame_id) != Some(frame_id) {
            let ev = rec.get(2).unwrap_or("");
            target.frames.push(FrameSnapshot {
                frame_id,
                event: (!ev.is_empty()).then(|| ev.to_string()),
                players: Vec::with_capacity(22),
            });
        }
        let side = match rec.get(4) {
            Some("offense") => Side::Offense,
            Some("defense") => Side::Defense,
            _ => return Err(malformed(line, "bad side")),
        };
        target.frames.last_mut().expect("pushed above").players.push(PlayerState {
            player_id: field(&rec, 3, line)?,
            side,
            x: field(&rec, 5, line)?,
            y: field(&rec, 6, line)?,
            speed: field(&rec, 7, line)?,
            accel: field(&rec, 8, line)?,
            dis: field(&rec, 9, line)?,
            orientation: field(&rec, 10, line)?,
            direction: field(&rec, 11, line)?,
        });
    }
    Ok(out)
}
