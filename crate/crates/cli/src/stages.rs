//! The work of each stage. Every stage reads upstream artifacts from disk and
//! writes only into its own directory.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use log::warn;
use serde::{Deserialize, Serialize};
use stepturn::evaluate::{
    build_leaderboard, effect_leaderboard_tsv, evaluate_play, leaderboard_tsv, player_metrics, random_effect_leaderboard,
    yards_success_rate, FrameEvaluation, Metric, PlayEvaluation,
};
use stepturn::features::{valuation_columns, export_matrix, MovementFeatureVector};
use stepturn::hmc::{diagnose, load_draws, save_draws, PosteriorDraws};
use stepturn::models::{fit_step_model, fit_turn_model, movement_rows, GroupLevels, ModelSpec, MovementRow};
use stepturn::report::{delta_curve_svg, hypothetical_histogram_svg};
use stepturn::simulate::{
    read_play_simulation, simulate_play, stream_seed, write_play_simulation, MovementPosterior, SimulationConfig,
    SimulationError,
};
use stepturn::synthetic::{generate_from_movement_models, write_bdb_csv};
use stepturn::tracking::{ingest_directory, load_sequences, persist_sequences, BallCarrierSequence};
use stepturn::yards::{build_yards_dataset, fit_boosted, grouped_cv_rmse, lowocv, BoostedModel, YardsFamily};

use crate::error::PipelineError;
use crate::par_map;
use crate::pipeline::{Pipeline, Stage};

const FIT_STEP_STREAM: u64 = 1;
const FIT_TURN_STREAM: u64 = 2;
const SIMULATE_STREAM: u64 = 3;

pub(crate) fn run(p: &Pipeline, stage: Stage, dir: &Path) -> Result<(), PipelineError> {
    match stage {
        Stage::Synth => synth(p, dir),
        Stage::Ingest => ingest(p, dir),
        Stage::Features => features(p, dir),
        Stage::FitStep | Stage::FitTurn => fit(p, stage, dir),
        Stage::Diagnose => diagnostics(p, dir),
        Stage::Value => value(p, dir),
        Stage::Simulate => simulate(p, dir),
        Stage::Evaluate => evaluate(p, dir),
        Stage::Leaderboard => leaderboard(p, dir),
        Stage::Report => report(p, dir),
    }
}

fn fail(stage: Stage) -> impl Fn(&dyn std::fmt::Display) -> PipelineError {
    move |e| PipelineError::failed(stage.name(), e)
}

fn write_json<T: Serialize>(path: &Path, v: &T) -> Result<(), PipelineError> {
    fs::write(path, serde_json::to_string_pretty(v).expect("serializes") + "\n")?;
    Ok(())
}

fn read_json<T: for<'de> Deserialize<'de>>(stage: Stage, path: &Path) -> Result<T, PipelineError> {
    let text = fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| fail(stage)(&e))
}

fn play_key(game_id: u64, play_id: u64) -> String {
    format!("{game_id}_{play_id}")
}

fn sequences(p: &Pipeline, stage: Stage) -> Result<Vec<BallCarrierSequence>, PipelineError> {
    load_sequences(&p.stage_dir(Stage::Ingest).join("sequences")).map_err(|e| fail(stage)(&e))
}

fn model_setup(p: &Pipeline, stage: Stage) -> Result<(ModelSpec, GroupLevels), PipelineError> {
    let dir = p.stage_dir(Stage::Features);
    let spec: ModelSpec =
        toml::from_str(&fs::read_to_string(dir.join("model_spec.toml"))?).map_err(|e| fail(stage)(&e))?;
    let levels: GroupLevels = read_json(stage, &dir.join("levels.json"))?;
    Ok((spec, levels))
}

fn draws(p: &Pipeline, stage: Stage, fit: Stage) -> Result<PosteriorDraws, PipelineError> {
    load_draws(&p.stage_dir(fit).join("draws")).map_err(|e| fail(stage)(&e))
}

fn rows(p: &Pipeline, stage: Stage) -> Result<Vec<MovementRow>, PipelineError> {
    movement_rows(&sequences(p, stage)?).map_err(|e| fail(stage)(&e))
}

fn synth(p: &Pipeline, dir: &Path) -> Result<(), PipelineError> {
    let mut scenario = p.config.synth.clone().ok_or_else(|| PipelineError::config("synth", "no [synth] section"))?;
    if let Some(seed) = p.config.seed {
        scenario.seed = seed;
    }
    scenario.redraw_effects();
    let data = generate_from_movement_models(&scenario).map_err(|e| fail(Stage::Synth)(&e))?;
    write_bdb_csv(&data, dir).map_err(|e| fail(Stage::Synth)(&e))?;
    write_json(&dir.join("truth.json"), &data.truth())?;
    fs::write(dir.join("scenario.toml"), toml::to_string(&scenario).expect("scenario serializes"))?;
    Ok(())
}

#[derive(Serialize)]
struct IngestReport {
    sequences: usize,
    skipped: usize,
    rejected_rows: usize,
    non_rush_plays: usize,
}

fn ingest(p: &Pipeline, dir: &Path) -> Result<(), PipelineError> {
    let summary = ingest_directory(&p.data_dir(), &p.config.schema).map_err(|e| fail(Stage::Ingest)(&e))?;
    if summary.sequences.is_empty() {
        return Err(PipelineError::failed("ingest", "no ball-carrier sequences found"));
    }
    persist_sequences(&summary.sequences, &dir.join("sequences")).map_err(|e| fail(Stage::Ingest)(&e))?;
    let mut skipped = String::from("game_id\tplay_id\treason\n");
    for (g, pl, why) in &summary.skipped {
        let _ = writeln!(skipped, "{g}\t{pl}\t{}", why.replace(['\t', '\n'], " "));
    }
    fs::write(dir.join("skipped.tsv"), skipped)?;
    write_json(
        &dir.join("summary.json"),
        &IngestReport {
            sequences: summary.sequences.len(),
            skipped: summary.skipped.len(),
            rejected_rows: summary.rejected_rows,
            non_rush_plays: summary.non_rush_plays,
        },
    )
}

fn features(p: &Pipeline, dir: &Path) -> Result<(), PipelineError> {
    let f = fail(Stage::Features);
    let seqs = sequences(p, Stage::Features)?;
    let rows = movement_rows(&seqs).map_err(|e| f(&e))?;
    let spec = match &p.config.model_spec {
        Some(path) => toml::from_str::<ModelSpec>(&fs::read_to_string(path)?).map_err(|e| f(&e))?,
        None => ModelSpec::from_rows(&rows).map_err(|e| f(&e))?,
    };
    spec.validate().map_err(|e| f(&e))?;
    let levels = GroupLevels::from_rows(&rows);
    fs::write(dir.join("model_spec.toml"), toml::to_string(&spec).expect("spec serializes"))?;
    write_json(&dir.join("levels.json"), &levels)?;

    let mut columns: Vec<String> =
        ["game_id", "play_id", "frame_index", "carrier_id", "step_length", "turn_angle"].map(String::from).to_vec();
    columns.extend(MovementFeatureVector::COLUMNS.iter().map(|c| c.to_string()));
    let matrix: Vec<Vec<f64>> = rows
        .iter()
        .map(|r| {
            let mut v =
                vec![r.game_id as f64, r.play_id as f64, r.frame_index as f64, r.carrier_id as f64, r.step_length, r.turn_angle];
            v.extend(MovementFeatureVector::COLUMNS.iter().map(|c| r.features.value(c).expect("listed column")));
            v
        })
        .collect();
    export_matrix(&dir.join("movement.tsv"), &columns, &matrix).map_err(|e| f(&e))?;

    let yards = build_yards_dataset(&seqs).map_err(|e| f(&e))?;
    let mut columns: Vec<String> = ["game_id", "play_id", "week", "frame_index", "target"].map(String::from).to_vec();
    columns.extend(valuation_columns());
    let matrix: Vec<Vec<f64>> = yards
        .rows
        .iter()
        .map(|r| {
            let mut v = vec![r.game_id as f64, r.play_id as f64, r.week as f64, r.frame_index as f64, r.target];
            v.extend_from_slice(&r.features);
            v
        })
        .collect();
    export_matrix(&dir.join("valuation.tsv"), &columns, &matrix).map_err(|e| f(&e))
}

fn fit(p: &Pipeline, stage: Stage, dir: &Path) -> Result<(), PipelineError> {
    let f = fail(stage);
    let seed = p.config.require_seed(stage.name())?;
    let rows = rows(p, stage)?;
    let (spec, levels) = model_setup(p, stage)?;
    let mut sampler = p.config.sampler.clone();
    sampler.jobs = p.config.jobs;
    let d = if stage == Stage::FitStep {
        sampler.seed = stream_seed(&[seed, FIT_STEP_STREAM]);
        fit_step_model(&rows, &spec, &levels, &sampler)
    } else {
        sampler.seed = stream_seed(&[seed, FIT_TURN_STREAM]);
        fit_turn_model(&rows, &spec, &levels, &sampler)
    }
    .map_err(|e| f(&e))?;
    save_draws(&d, &dir.join("draws")).map_err(|e| f(&e))?;
    let mut out = String::from("parameter\tmean\tsd\tq05\tq95\n");
    for (j, name) in d.names.iter().enumerate() {
        let _ = writeln!(
            out,
            "{name}\t{:.6}\t{:.6}\t{:.6}\t{:.6}",
            d.mean(j),
            d.sd(j),
            d.quantile(j, 0.05),
            d.quantile(j, 0.95)
        );
    }
    fs::write(dir.join("summary.tsv"), out)?;
    Ok(())
}

#[derive(Serialize, Deserialize)]
struct DiagnosticsVerdict {
    step: bool,
    turn: bool,
    failing: Vec<String>,
}

fn diagnostics(p: &Pipeline, dir: &Path) -> Result<(), PipelineError> {
    let mut verdict = DiagnosticsVerdict { step: true, turn: true, failing: Vec::new() };
    for (fit, file) in [(Stage::FitStep, "step.txt"), (Stage::FitTurn, "turn.txt")] {
        let d = draws(p, Stage::Diagnose, fit)?;
        let diag = diagnose(&d).map_err(|e| fail(Stage::Diagnose)(&e))?;
        fs::write(dir.join(file), diag.report())?;
        let pass = diag.passes();
        if fit == Stage::FitStep {
            verdict.step = pass;
        } else {
            verdict.turn = pass;
        }
        verdict.failing.extend(diag.failures().into_iter().map(|j| format!("{}:{}", fit.name(), diag.names[j])));
    }
    write_json(&dir.join("verdict.json"), &verdict)
}

/// Turns a failed verdict into an error unless the configuration says otherwise.
pub(crate) fn check_diagnostics(p: &Pipeline, dir: &Path) -> Result<(), PipelineError> {
    let v: DiagnosticsVerdict = read_json(Stage::Diagnose, &dir.join("verdict.json"))?;
    if v.step && v.turn {
        return Ok(());
    }
    let which = match (v.step, v.turn) {
        (false, false) => "both models",
        (false, true) => "the step model",
        _ => "the turn model",
    };
    let msg = format!("{which} ({} parameters)", v.failing.len());
    if p.config.diagnostics.fail_on_breach {
        Err(PipelineError::DiagnosticsFailed(msg))
    } else {
        warn!("convergence diagnostics failed for {msg}");
        Ok(())
    }
}

fn value(p: &Pipeline, dir: &Path) -> Result<(), PipelineError> {
    let f = fail(Stage::Value);
    let data = build_yards_dataset(&sequences(p, Stage::Value)?).map_err(|e| f(&e))?;
    let model = fit_boosted(&data.x(), &data.y(), &p.config.train).map_err(|e| f(&e))?;
    fs::write(dir.join("model.txt"), model.to_text())?;
    if !p.config.value.validate {
        return Ok(());
    }
    let weeks: std::collections::BTreeSet<u32> = data.rows.iter().map(|r| r.week).collect();
    if weeks.len() >= 2 {
        let report = lowocv(&data, &[YardsFamily::InterceptOnly, YardsFamily::Boosted(p.config.train.clone())])
            .map_err(|e| f(&e))?;
        fs::write(dir.join("lowocv.tsv"), report.to_tsv())?;
    } else {
        warn!("value: one week of data, leave-one-week-out skipped");
    }
    let games: std::collections::BTreeSet<u64> = data.games().into_iter().collect();
    if games.len() >= p.config.train.folds {
        let rmse = grouped_cv_rmse(&data, &p.config.train).map_err(|e| f(&e))?;
        let mut out = String::from("fold\trmse\n");
        for (k, r) in rmse.iter().enumerate() {
            let _ = writeln!(out, "{k}\t{r:.6}");
        }
        fs::write(dir.join("grouped_cv.tsv"), out)?;
    } else {
        warn!("value: fewer games than folds, grouped cross-validation skipped");
    }
    Ok(())
}

fn simulation_config(p: &Pipeline, seed: u64) -> SimulationConfig {
    SimulationConfig {
        n_draws: p.config.simulation.n_draws,
        mode: p.config.simulation.mode,
        seed: stream_seed(&[seed, SIMULATE_STREAM]),
    }
}

fn simulate(p: &Pipeline, dir: &Path) -> Result<(), PipelineError> {
    let f = fail(Stage::Simulate);
    let seed = p.config.require_seed("simulate")?;
    let (spec, levels) = model_setup(p, Stage::Simulate)?;
    let step = draws(p, Stage::Simulate, Stage::FitStep)?;
    let turn = draws(p, Stage::Simulate, Stage::FitTurn)?;
    let posterior = MovementPosterior::from_draws(spec, levels, &step, &turn).map_err(|e| f(&e))?;
    let mut seqs = sequences(p, Stage::Simulate)?;
    if let Some(m) = p.config.simulation.max_plays {
        seqs.truncate(m);
    }
    let cfg = simulation_config(p, seed);
    let plays_dir = dir.join("plays");
    fs::create_dir_all(&plays_dir)?;
    let results = par_map(&seqs, p.config.jobs, |seq| -> Result<usize, SimulationError> {
        let sim = simulate_play(seq, &posterior, &cfg)?;
        let m = &seq.metadata;
        write_play_simulation(&sim, &plays_dir.join(format!("{}.tsv", play_key(m.game_id, m.play_id))))?;
        Ok(sim.frames.len())
    });
    let mut index = String::from("game_id\tplay_id\tcarrier_id\tframes\n");
    let mut skipped = String::from("game_id\tplay_id\treason\n");
    for (seq, r) in seqs.iter().zip(results) {
        let m = &seq.metadata;
        match r {
            Ok(n) => {
                let _ = writeln!(index, "{}\t{}\t{}\t{n}", m.game_id, m.play_id, m.ball_carrier_id);
            }
            Err(e @ SimulationError::UnknownPlayer(_)) => {
                let _ = writeln!(skipped, "{}\t{}\t{e}", m.game_id, m.play_id);
            }
            Err(e) => return Err(f(&e)),
        }
    }
    fs::write(dir.join("index.tsv"), index)?;
    fs::write(dir.join("skipped.tsv"), skipped)?;
    Ok(())
}

fn load_evaluations(p: &Pipeline, stage: Stage) -> Result<Vec<PlayEvaluation>, PipelineError> {
    read_json(stage, &p.stage_dir(Stage::Evaluate).join("evaluations.json"))
}

fn evaluate(p: &Pipeline, dir: &Path) -> Result<(), PipelineError> {
    let f = fail(Stage::Evaluate);
    let text = fs::read_to_string(p.stage_dir(Stage::Value).join("model.txt"))?;
    let model = BoostedModel::from_text(&text).map_err(|e| f(&e))?;
    let sim_manifest = p.upstream_manifest(Stage::Evaluate, Stage::Simulate)?;
    let cfg = simulation_config(p, sim_manifest.seed.unwrap_or_default());
    let seqs: HashMap<(u64, u64), BallCarrierSequence> = sequences(p, Stage::Evaluate)?
        .into_iter()
        .map(|s| ((s.metadata.game_id, s.metadata.play_id), s))
        .collect();
    let sim_dir = p.stage_dir(Stage::Simulate);
    let mut keys = Vec::new();
    for line in fs::read_to_string(sim_dir.join("index.tsv"))?.lines().skip(1) {
        let mut cols = line.split('\t').map(|c| c.parse::<u64>());
        match (cols.next(), cols.next()) {
            (Some(Ok(g)), Some(Ok(pl))) => keys.push((g, pl)),
            _ => return Err(f(&format!("bad simulation index line {line:?}"))),
        }
    }
    let results = par_map(&keys, p.config.jobs, |&(g, pl)| -> Result<PlayEvaluation, String> {
        let seq = seqs.get(&(g, pl)).ok_or_else(|| format!("play {g}/{pl} is not in the sequence store"))?;
        let sim = read_play_simulation(&sim_dir.join("plays").join(format!("{}.tsv", play_key(g, pl))), seq, &cfg)
            .map_err(|e| e.to_string())?;
        evaluate_play(seq, &sim, &model, p.config.evaluate.scale).map_err(|e| e.to_string())
    });
    let evals = results.into_iter().collect::<Result<Vec<_>, _>>().map_err(|e| f(&e))?;
    let curves = dir.join("curves");
    fs::create_dir_all(&curves)?;
    let mut totals = String::from("game_id\tplay_id\tcarrier_id\tframes\ttotal_delta\tsuccess_rate\n");
    for e in &evals {
        fs::write(curves.join(format!("{}.tsv", play_key(e.game_id, e.play_id))), e.curve_tsv())?;
        let rate = if e.frames.is_empty() { f64::NAN } else { yards_success_rate(&e.frames).map_err(|x| f(&x))? };
        let _ = writeln!(
            totals,
            "{}\t{}\t{}\t{}\t{:.6}\t{:.6}",
            e.game_id,
            e.play_id,
            e.carrier_id,
            e.frames.len(),
            e.total_delta(),
            rate
        );
    }
    fs::write(dir.join("plays.tsv"), totals)?;
    fs::write(dir.join("evaluations.json"), serde_json::to_string(&evals).expect("serializes") + "\n")?;
    Ok(())
}

fn leaderboard(p: &Pipeline, dir: &Path) -> Result<(), PipelineError> {
    let f = fail(Stage::Leaderboard);
    let evals = load_evaluations(p, Stage::Leaderboard)?;
    let metrics = player_metrics(&evals).map_err(|e| f(&e))?;
    let mut out = String::from("player_id\tteam\tplays\tframes\tyards_success_rate\texplosiveness\taccumulated_delta_per_play\n");
    for m in &metrics {
        let _ = writeln!(
            out,
            "{}\t{}\t{}\t{}\t{:.6}\t{:.6}\t{:.6}",
            m.player_id, m.team, m.plays, m.frames, m.yards_success_rate, m.explosiveness, m.accumulated_delta_per_play
        );
    }
    fs::write(dir.join("player_metrics.tsv"), out)?;
    for metric in [Metric::YardsSuccessRate, Metric::Explosiveness, Metric::AccumulatedDelta] {
        let rows = build_leaderboard(&metrics, metric, p.config.evaluate.min_plays);
        fs::write(dir.join(format!("{}.tsv", metric.name())), leaderboard_tsv(&rows, metric))?;
    }

    let rows = rows(p, Stage::Leaderboard)?;
    let mut carriers: BTreeMap<String, usize> = BTreeMap::new();
    let mut defenses: BTreeMap<String, usize> = BTreeMap::new();
    for r in &rows {
        *carriers.entry(r.carrier_id.to_string()).or_default() += 1;
        *defenses.entry(r.defense.clone()).or_default() += 1;
    }
    let step = draws(p, Stage::Leaderboard, Stage::FitStep)?;
    let turn = draws(p, Stage::Leaderboard, Stage::FitTurn)?;
    let mut excluded = String::from("effect\tlevel\n");
    for (d, effect, n_obs, file) in [
        (&step, "u", &carriers, "carrier_step_effect.tsv"),
        (&turn, "w", &carriers, "carrier_turn_effect.tsv"),
        (&step, "v", &defenses, "defense_step_effect.tsv"),
    ] {
        let (rows, skipped) = random_effect_leaderboard(d, effect, n_obs).map_err(|e| f(&e))?;
        fs::write(dir.join(file), effect_leaderboard_tsv(&rows))?;
        for level in skipped {
            let _ = writeln!(excluded, "{effect}\t{level}");
        }
    }
    fs::write(dir.join("excluded_levels.tsv"), excluded)?;
    Ok(())
}

/// Event tags of a sequence plus the frame the carrier first reaches the line to gain.
fn play_events(seq: &BallCarrierSequence) -> Vec<(u32, String)> {
    let mut events: Vec<(u32, String)> =
        seq.frames.iter().filter_map(|f| f.event.as_ref().map(|e| (f.frame_id, e.clone()))).collect();
    let line = seq.metadata.first_down_x();
    let start = seq.carrier(0).x;
    if start < line {
        if let Some(i) = (1..seq.frames.len()).find(|&i| seq.carrier(i).x >= line) {
            events.push((seq.frames[i].frame_id, "first_down".into()));
        }
    }
    events.sort();
    events
}

fn report(p: &Pipeline, dir: &Path) -> Result<(), PipelineError> {
    let mut evals = load_evaluations(p, Stage::Report)?;
    evals.retain(|e| !e.frames.is_empty());
    evals.sort_by(|a, b| b.total_delta().total_cmp(&a.total_delta()).then((a.game_id, a.play_id).cmp(&(b.game_id, b.play_id))));
    evals.truncate(p.config.report.plays);
    let seqs: HashMap<(u64, u64), BallCarrierSequence> = sequences(p, Stage::Report)?
        .into_iter()
        .map(|s| ((s.metadata.game_id, s.metadata.play_id), s))
        .collect();
    let mut index = String::from("rank\tgame_id\tplay_id\tcarrier_id\ttotal_delta\tcurve\thistogram\n");
    for (rank, e) in evals.iter().enumerate() {
        let key = play_key(e.game_id, e.play_id);
        let events = seqs.get(&(e.game_id, e.play_id)).map(play_events).unwrap_or_default();
        let curve = format!("curve_{key}.svg");
        fs::write(dir.join(&curve), delta_curve_svg(e, &events))?;
        let peak: &FrameEvaluation =
            e.frames.iter().max_by(|a, b| a.delta_bar.total_cmp(&b.delta_bar).then(b.frame_id.cmp(&a.frame_id))).expect("non-empty");
        let hist = format!("hist_{key}.svg");
        let title = format!("game {} play {} frame {}: hypothetical expected yards", e.game_id, e.play_id, peak.frame_id);
        fs::write(dir.join(&hist), hypothetical_histogram_svg(peak, p.config.report.histogram_bins, &title))?;
        let _ = writeln!(
            index,
            "{}\t{}\t{}\t{}\t{:.6}\t{curve}\t{hist}",
            rank + 1,
            e.game_id,
            e.play_id,
            e.carrier_id,
            e.total_delta()
        );
    }
    fs::write(dir.join("index.tsv"), index)?;
    Ok(())
}
