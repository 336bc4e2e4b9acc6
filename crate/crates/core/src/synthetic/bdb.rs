//! Writes synthetic plays in the Big Data Bowl CSV layout.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use super::{SyntheticData, SyntheticError};

const TRACKING_HEADER: [&str; 18] = [
    "gameId", "playId", "nflId", "displayName", "frameId", "frameType", "time", "jerseyNumber", "club",
    "playDirection", "x", "y", "s", "a", "dis", "o", "dir", "event",
];

fn csv_err(e: csv::Error) -> SyntheticError {
    SyntheticError::Io(std::io::Error::other(e.to_string()))
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_string(), |x| x.to_string())
}

/// Writes `games.csv`, `plays.csv`, `player_play.csv` and one
/// `tracking_week_<w>.csv` per week into `dir`. Returns the paths written.
pub fn write_bdb_csv(data: &SyntheticData, dir: &Path) -> Result<Vec<PathBuf>, SyntheticError> {
    fs::create_dir_all(dir)?;
    let mut written = Vec::new();

    let games: BTreeMap<u64, (u32, String, String)> = data
        .plays
        .iter()
        .map(|p| (p.record.game_id, (p.week, p.record.offense_club.clone(), p.record.defense_club.clone())))
        .collect();
    let path = dir.join("games.csv");
    let mut w = csv::Writer::from_path(&path).map_err(csv_err)?;
    w.write_record(["gameId", "season", "week", "homeTeamAbbr", "visitorTeamAbbr"]).map_err(csv_err)?;
    for (g, (week, home, away)) in &games {
        w.write_record([g.to_string(), "2024".into(), week.to_string(), home.clone(), away.clone()]).map_err(csv_err)?;
    }
    w.flush()?;
    written.push(path);

    let path = dir.join("plays.csv");
    let mut w = csv::Writer::from_path(&path).map_err(csv_err)?;
    w.write_record(["gameId", "playId", "possessionTeam", "defensiveTeam", "yardsToGo", "absoluteYardlineNumber"])
        .map_err(csv_err)?;
    for p in &data.plays {
        let r = &p.record;
        w.write_record([
            r.game_id.to_string(),
            r.play_id.to_string(),
            r.offense_club.clone(),
            r.defense_club.clone(),
            r.yards_to_go.to_string(),
            r.absolute_yardline.to_string(),
        ])
        .map_err(csv_err)?;
    }
    w.flush()?;
    written.push(path);

    let path = dir.join("player_play.csv");
    let mut w = csv::Writer::from_path(&path).map_err(csv_err)?;
    w.write_record(["gameId", "playId", "nflId", "teamAbbr", "hadRushAttempt"]).map_err(csv_err)?;
    for p in &data.plays {
        let Some(first) = p.sequence.frames.first() else { continue };
        for pl in &first.players {
            let club = if pl.side == crate::tracking::Side::Offense { &p.record.offense_club } else { &p.record.defense_club };
            let flag = if pl.player_id == p.carrier_id { "1" } else { "0" };
            w.write_record([
                p.record.game_id.to_string(),
                p.record.play_id.to_string(),
                pl.player_id.to_string(),
                club.clone(),
                flag.to_string(),
            ])
            .map_err(csv_err)?;
        }
    }
    w.flush()?;
    written.push(path);

    let mut weeks: BTreeMap<u32, Vec<&super::SyntheticPlay>> = BTreeMap::new();
    for p in &data.plays {
        weeks.entry(p.week).or_default().push(p);
    }
    for (week, plays) in weeks {
        let path = dir.join(format!("tracking_week_{week}.csv"));
        let mut w = csv::Writer::from_path(&path).map_err(csv_err)?;
        w.write_record(TRACKING_HEADER).map_err(csv_err)?;
        for p in plays {
            for r in &p.tracking {
                let (id, name, jersey) = match r.player_id {
                    Some(id) => (id.to_string(), format!("Player {id}"), (id % 100).to_string()),
                    None => ("NA".into(), "football".into(), "NA".into()),
                };
                let frame_type = match r.frame_id {
                    1 => "SNAP",
                    _ => "AFTER_SNAP",
                };
                let tenths = r.frame_id - 1;
                let time = format!("2024-09-08 13:{:02}:{:02}.{}", week, tenths / 10 % 60, tenths % 10);
                w.write_record([
                    r.game_id.to_string(),
                    r.play_id.to_string(),
                    id,
                    name,
                    r.frame_id.to_string(),
                    frame_type.to_string(),
                    time,
                    jersey,
                    r.club.clone(),
                    r.play_direction.as_str().to_string(),
                    r.x.to_string(),
                    r.y.to_string(),
                    opt(r.speed),
                    r.accel.to_string(),
                    r.dis.to_string(),
                    opt(r.orientation),
                    opt(r.direction),
                    r.event.clone().unwrap_or_else(|| "NA".into()),
                ])
                .map_err(csv_err)?;
            }
        }
        w.flush()?;
        written.push(path);
    }
    Ok(written)
}
