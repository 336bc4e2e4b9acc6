use std::collections::HashMap;
use std::fs::File;
use std::io::{BufReader, Read};
use std::path::Path;

use log::warn;
use serde::{Deserialize, Serialize};

use super::{
    extract_ball_carrier_sequence, group_plays, BallCarrierSequence, PlayDirection, PlayMetadata, TrackingError,
    TrackingFrame, OWN_GOAL_X, TARGET_GOAL_X,
};

/// Column names of the tracking file. Defaults follow the Big Data Bowl layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ColumnMap {
    pub game_id: String,
    pub play_id: String,
    pub player_id: String,
    pub frame_id: String,
    pub x: String,
    pub y: String,
    pub speed: String,
    pub accel: String,
    pub dis: String,
    pub orientation: String,
    pub direction: String,
    pub event: String,
    pub club: String,
    pub play_direction: String,
}

impl Default for ColumnMap {
    fn default() -> Self {
        Self {
            game_id: "gameId".into(),
            play_id: "playId".into(),
            player_id: "nflId".into(),
            frame_id: "frameId".into(),
            x: "x".into(),
            y: "y".into(),
            speed: "s".into(),
            accel: "a".into(),
            dis: "dis".into(),
            orientation: "o".into(),
            direction: "dir".into(),
            event: "event".into(),
            club: "club".into(),
            play_direction: "playDirection".into(),
        }
    }
}

/// A data row dropped during parsing.
#[derive(Debug, Clone, PartialEq)]
pub struct RejectedRow {
    /// 1-based line number in the file (header is line 1).
    pub line: usize,
    pub reason: String,
}

#[derive(Debug, Clone, Default)]
pub struct TrackingTable {
    pub frames: Vec<TrackingFrame>,
    pub rejected: Vec<RejectedRow>,
}

fn is_missing(s: &str) -> bool {
    let s = s.trim();
    s.is_empty() || s == "NA" || s == "NaN" || s == "nan"
}

fn header_index(headers: &csv::StringRecord) -> HashMap<String, usize> {
    headers
        .iter()
        .enumerate()
        .map(|(i, h)| (h.trim().trim_start_matches('\u{feff}').to_string(), i))
        .collect()
}

fn require(idx: &HashMap<String, usize>, name: &str) -> Result<usize, TrackingError> {
    idx.get(name).copied().ok_or_else(|| TrackingError::MissingColumn(name.to_string()))
}

struct Cols {
    game_id: usize,
    play_id: usize,
    player_id: usize,
    frame_id: usize,
    x: usize,
    y: usize,
    speed: usize,
    accel: usize,
    dis: usize,
    orientation: usize,
    direction: usize,
    event: usize,
    club: usize,
    play_direction: usize,
}

fn parse_num<T: std::str::FromStr>(raw: &str, line: usize, col: &str) -> Result<T, TrackingError> {
    raw.trim().parse::<T>().map_err(|_| TrackingError::MalformedRow {
        line,
        reason: format!("column `{col}`: cannot parse `{raw}`"),
    })
}

fn opt_num(raw: &str, line: usize, col: &str) -> Result<Option<f64>, TrackingError> {
    if is_missing(raw) {
        Ok(None)
    } else {
        parse_num(raw, line, col).map(Some)
    }
}

pub fn parse_tracking_csv(path: &Path, schema: &ColumnMap) -> Result<TrackingTable, TrackingError> {
    let file = File::open(path)?;
    parse_tracking_reader(BufReader::new(file), schema)
}

/// Parses a tracking table from any reader.
///
/// Rows with a missing coordinate are skipped and reported in
/// [`TrackingTable::rejected`]; any other unparseable field is fatal.
pub fn parse_tracking_reader<R: Read>(
    reader: R,
    schema: &ColumnMap,
) -> Result<TrackingTable, TrackingError> {
    let mut rdr = csv::ReaderBuilder::new().flexible(false).from_reader(reader);
    let headers = rdr.headers()?.clone();
    if headers.is_empty() || (headers.len() == 1 && headers[0].trim().is_empty()) {
        return Err(TrackingError::EmptyFile);
    }
    let idx = header_index(&headers);
    let c = Cols {
        game_id: require(&idx, &schema.game_id)?,
        play_id: require(&idx, &schema.play_id)?,
        player_id: require(&idx, &schema.player_id)?,
        frame_id: require(&idx, &schema.frame_id)?,
        x: require(&idx, &schema.x)?,
        y: require(&idx, &schema.y)?,
        speed: require(&idx, &schema.speed)?,
        accel: require(&idx, &schema.accel)?,
        dis: require(&idx, &schema.dis)?,
        orientation: require(&idx, &schema.orientation)?,
        direction: require(&idx, &schema.direction)?,
        event: require(&idx, &schema.event)?,
        club: require(&idx, &schema.club)?,
        play_direction: require(&idx, &schema.play_direction)?,
    };

    let mut table = TrackingTable::default();
    for (i, rec) in rdr.records().enumerate() {
        let line = i + 2;
        let rec = rec.map_err(|e| TrackingError::MalformedRow { line, reason: e.to_string() })?;
        let get = |col: usize| rec.get(col).unwrap_or("");
        if is_missing(get(c.x)) || is_missing(get(c.y)) {
            table.rejected.push(RejectedRow { line, reason: "missing coordinates".into() });
            continue;
        }
        let play_direction = PlayDirection::parse(get(c.play_direction)).ok_or_else(|| {
            TrackingError::MalformedRow {
                line,
                reason: format!("bad play direction `{}`", get(c.play_direction)),
            }
        })?;
        let player_id = if is_missing(get(c.player_id)) {
            None
        } else {
            // vendor files sometimes write ids as floats ("52457.0")
            let raw = get(c.player_id).trim();
            let v: f64 = parse_num(raw, line, &schema.player_id)?;
            Some(v as u64)
        };
        let event = {
            let e = get(c.event).trim();
            if is_missing(e) {
                None
            } else {
                Some(e.to_string())
            }
        };
        table.frames.push(TrackingFrame {
            game_id: parse_num(get(c.game_id), line, &schema.game_id)?,
            play_id: parse_num(get(c.play_id), line, &schema.play_id)?,
            player_id,
            frame_id: parse_num(get(c.frame_id), line, &schema.frame_id)?,
            x: parse_num(get(c.x), line, &schema.x)?,
            y: parse_num(get(c.y), line, &schema.y)?,
            speed: opt_num(get(c.speed), line, &schema.speed)?,
            accel: opt_num(get(c.accel), line, &schema.accel)?.unwrap_or(0.0),
            dis: opt_num(get(c.dis), line, &schema.dis)?.unwrap_or(0.0),
            orientation: opt_num(get(c.orientation), line, &schema.orientation)?,
            direction: opt_num(get(c.direction), line, &schema.direction)?,
            event,
            club: get(c.club).trim().to_string(),
            play_direction,
        });
    }
    if !table.rejected.is_empty() {
        warn!("{} tracking rows rejected for missing coordinates", table.rejected.len());
    }
    Ok(table)
}

/// The subset of a plays-file row the pipeline needs.
#[derive(Debug, Clone, PartialEq)]
pub struct PlayRecord {
    pub game_id: u64,
    pub play_id: u64,
    pub offense_club: String,
    pub defense_club: String,
    pub yards_to_go: f64,
    /// Raw x coordinate of the line of scrimmage.
    pub absolute_yardline: f64,
    /// Present when the plays file carries a `ballCarrierId` column.
    pub ball_carrier_id: Option<u64>,
}

fn open_csv(path: &Path) -> Result<(csv::Reader<BufReader<File>>, HashMap<String, usize>), TrackingError> {
    let mut rdr = csv::Reader::from_reader(BufReader::new(File::open(path)?));
    let headers = rdr.headers()?.clone();
    if headers.is_empty() {
        return Err(TrackingError::EmptyFile);
    }
    let idx = header_index(&headers);
    Ok((rdr, idx))
}

pub fn load_plays(path: &Path) -> Result<Vec<PlayRecord>, TrackingError> {
    let (mut rdr, idx) = open_csv(path)?;
    let g = require(&idx, "gameId")?;
    let p = require(&idx, "playId")?;
    let off = require(&idx, "possessionTeam")?;
    let def = require(&idx, "defensiveTeam")?;
    let ytg = require(&idx, "yardsToGo")?;
    let yl = require(&idx, "absoluteYardlineNumber")?;
    let bc = idx.get("ballCarrierId").copied();
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let line = i + 2;
        let rec = rec.map_err(|e| TrackingError::MalformedRow { line, reason: e.to_string() })?;
        let ball_carrier_id = match bc.map(|c| rec.get(c).unwrap_or("")) {
            Some(raw) if !is_missing(raw) => Some(parse_num::<f64>(raw, line, "ballCarrierId")? as u64),
            _ => None,
        };
        out.push(PlayRecord {
            game_id: parse_num(&rec[g], line, "gameId")?,
            play_id: parse_num(&rec[p], line, "playId")?,
            offense_club: rec[off].trim().to_string(),
            defense_club: rec[def].trim().to_string(),
            yards_to_go: parse_num(&rec[ytg], line, "yardsToGo")?,
            absolute_yardline: parse_num(&rec[yl], line, "absoluteYardlineNumber")?,
            ball_carrier_id,
        });
    }
    Ok(out)
}

/// `gameId -> week` from a games file.
pub fn load_games(path: &Path) -> Result<HashMap<u64, u32>, TrackingError> {
    let (mut rdr, idx) = open_csv(path)?;
    let g = require(&idx, "gameId")?;
    let w = require(&idx, "week")?;
    let mut out = HashMap::new();
    for (i, rec) in rdr.records().enumerate() {
        let line = i + 2;
        let rec = rec.map_err(|e| TrackingError::MalformedRow { line, reason: e.to_string() })?;
        out.insert(parse_num(&rec[g], line, "gameId")?, parse_num(&rec[w], line, "week")?);
    }
    Ok(out)
}

/// `(gameId, playId) -> nflId` of the player credited with the rush attempt.
pub fn load_player_play(path: &Path) -> Result<HashMap<(u64, u64), u64>, TrackingError> {
    let (mut rdr, idx) = open_csv(path)?;
    let g = require(&idx, "gameId")?;
    let p = require(&idx, "playId")?;
    let n = require(&idx, "nflId")?;
    let r = require(&idx, "hadRushAttempt")?;
    let mut out = HashMap::new();
    for (i, rec) in rdr.records().enumerate() {
        let line = i + 2;
        let rec = rec.map_err(|e| TrackingError::MalformedRow { line, reason: e.to_string() })?;
        let flag = rec[r].trim();
        if flag == "1" || flag.eq_ignore_ascii_case("true") {
            let key = (parse_num(&rec[g], line, "gameId")?, parse_num(&rec[p], line, "playId")?);
            let id = parse_num::<f64>(&rec[n], line, "nflId")? as u64;
            out.entry(key).or_insert(id);
        }
    }
    Ok(out)
}

/// Combines a plays-file row with the play direction and week into
/// standardized play metadata.
pub fn resolve_metadata(
    record: &PlayRecord,
    week: u32,
    ball_carrier_id: u64,
    direction: PlayDirection,
) -> Result<PlayMetadata, TrackingError> {
    let yardline_absolute = match direction {
        PlayDirection::Right => TARGET_GOAL_X - record.absolute_yardline,
        PlayDirection::Left => record.absolute_yardline - OWN_GOAL_X,
    };
    if !(yardline_absolute > 0.0 && yardline_absolute < 100.0) {
        return Err(TrackingError::MissingMetadata {
            game_id: record.game_id,
            play_id: record.play_id,
            reason: format!("yardline {yardline_absolute} outside (0, 100)"),
        });
    }
    Ok(PlayMetadata {
        game_id: record.game_id,
        play_id: record.play_id,
        ball_carrier_id,
        offense_club: record.offense_club.clone(),
        defense_club: record.defense_club.clone(),
        yardline_absolute,
        yards_to_go: record.yards_to_go,
        week,
    })
}

/// Sequences built from a Big Data Bowl directory, plus what was left out.
#[derive(Debug, Clone, Default)]
pub struct IngestSummary {
    pub sequences: Vec<BallCarrierSequence>,
    /// `(game, play, reason)` for run plays that could not be turned into a sequence.
    pub skipped: Vec<(u64, u64, String)>,
    pub rejected_rows: usize,
    /// Plays in the tracking files with no rush attempt on record.
    pub non_rush_plays: usize,
}

/// Reads `games.csv`, `plays.csv`, `player_play.csv` (optional when the plays
/// file has `ballCarrierId`) and every `tracking_week_*.csv` in `dir`, and
/// extracts one sequence per designed run with a handoff.
pub fn ingest_directory(dir: &Path, schema: &ColumnMap) -> Result<IngestSummary, TrackingError> {
    let weeks = load_games(&dir.join("games.csv"))?;
    let plays: HashMap<(u64, u64), PlayRecord> =
        load_plays(&dir.join("plays.csv"))?.into_iter().map(|p| ((p.game_id, p.play_id), p)).collect();
    let pp = dir.join("player_play.csv");
    let carriers = if pp.exists() { load_player_play(&pp)? } else { HashMap::new() };

    let mut files: Vec<_> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.file_name().and_then(|n| n.to_str()).is_some_and(|n| n.starts_with("tracking_week_") && n.ends_with(".csv"))
        })
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(TrackingError::MissingMetadata { game_id: 0, play_id: 0, reason: "no tracking_week_*.csv files".into() });
    }
    let mut summary = IngestSummary::default();
    let mut frames = Vec::new();
    for f in &files {
        let table = parse_tracking_csv(f, schema)?;
        summary.rejected_rows += table.rejected.len();
        frames.extend(table.frames);
    }
    for ((game_id, play_id), rows) in group_plays(frames) {
        let Some(record) = plays.get(&(game_id, play_id)) else {
            summary.skipped.push((game_id, play_id, "not in plays file".into()));
            continue;
        };
        let Some(carrier) = record.ball_carrier_id.or_else(|| carriers.get(&(game_id, play_id)).copied()) else {
            summary.non_rush_plays += 1;
            continue;
        };
        let result = weeks
            .get(&game_id)
            .ok_or_else(|| TrackingError::MissingMetadata { game_id, play_id, reason: "game not in games file".into() })
            .and_then(|&week| resolve_metadata(record, week, carrier, rows[0].play_direction))
            .and_then(|meta| extract_ball_carrier_sequence(&rows, &meta));
        match result {
            Ok(seq) => summary.sequences.push(seq),
            Err(e) => summary.skipped.push((game_id, play_id, e.to_string())),
        }
    }
    if !summary.skipped.is_empty() {
        warn!("{} run plays skipped", summary.skipped.len());
    }
    Ok(summary)
}

#[cfg(test)]
mod tests {
    use super::*;

    const HEADER: &str = "gameId,playId,nflId,displayName,frameId,frameType,time,jerseyNumber,club,playDirection,x,y,s,a,dis,o,dir,event";

    fn parse(text: &str) -> Result<TrackingTable, TrackingError> {
        parse_tracking_reader(text.as_bytes(), &ColumnMap::default())
    }

    #[test]
    fn parses_handoff_row() {
        let text = format!(
            "{HEADER}\n2022091800,1,46109,Javonte Williams,84,AFTER_SNAP,t,33,DEN,left,91.30,27.79,5.09,2.54,0.50,249.50,219.68,handoff\n"
        );
        let t = parse(&text).unwrap();
        assert_eq!(t.frames.len(), 1);
        let f = &t.frames[0];
        assert_eq!(f.frame_id, 84);
        assert_eq!(f.x, 91.30);
        assert_eq!(f.y, 27.79);
        assert_eq!(f.speed, Some(5.09));
        assert_eq!(f.event.as_deref(), Some("handoff"));
        assert_eq!(f.player_id, Some(46109));
        assert_eq!(f.play_direction, PlayDirection::Left);
    }

    #[test]
    fn football_row_has_no_player() {
        let text = format!("{HEADER}\n1,1,NA,football,3,SNAP,t,NA,football,right,50.0,20.0,1.0,0.1,0.1,NA,NA,NA\n");
        let t = parse(&text).unwrap();
        assert_eq!(t.frames[0].player_id, None);
        assert_eq!(t.frames[0].direction, None);
        assert_eq!(t.frames[0].event, None);
    }

    #[test]
    fn empty_file_is_an_error() {
        assert!(matches!(parse(""), Err(TrackingError::EmptyFile)));
    }

    #[test]
    fn header_only_gives_no_frames() {
        let t = parse(&format!("{HEADER}\n")).unwrap();
        assert!(t.frames.is_empty());
        assert!(t.rejected.is_empty());
    }

    #[test]
    fn missing_column_named() {
        let err = parse("gameId,playId,nflId,frameId,x,y,s,a,dis,o,event,club,playDirection\n").unwrap_err();
        match err {
            TrackingError::MissingColumn(c) => assert_eq!(c, "dir"),
            e => panic!("unexpected {e:?}"),
        }
    }

    #[test]
    fn missing_coordinates_rejected_with_line() {
        let text = format!(
            "{HEADER}\n1,1,5,a,1,x,t,1,A,right,10,10,1,1,0.1,0,0,NA\n1,1,5,a,2,x,t,1,A,right,NA,10,1,1,0.1,0,0,NA\n"
        );
        let t = parse(&text).unwrap();
        assert_eq!(t.frames.len(), 1);
        assert_eq!(t.rejected, vec![RejectedRow { line: 3, reason: "missing coordinates".into() }]);
    }

    #[test]
    fn malformed_number_is_fatal() {
        let text = format!("{HEADER}\n1,1,5,a,1,x,t,1,A,right,ten,10,1,1,0.1,0,0,NA\n");
        assert!(matches!(parse(&text), Err(TrackingError::MalformedRow { line: 2, .. })));
    }

    #[test]
    fn metadata_yardline_follows_direction() {
        let rec = PlayRecord {
            game_id: 1,
            play_id: 2,
            offense_club: "DEN".into(),
            defense_club: "HOU".into(),
            yards_to_go: 10.0,
            absolute_yardline: 85.0,
            ball_carrier_id: None,
        };
        let left = resolve_metadata(&rec, 2, 9, PlayDirection::Left).unwrap();
        assert_eq!(left.yardline_absolute, 75.0);
        assert_eq!(left.line_of_scrimmage_x(), 35.0);
        let right = resolve_metadata(&rec, 2, 9, PlayDirection::Right).unwrap();
        assert_eq!(right.yardline_absolute, 25.0);
        assert_eq!(right.first_down_x(), 95.0);
    }
}
