use std::f64::consts::PI;

use stepturn::kinematics::derive_step_turn_series;
use stepturn::models::{
    comparison_log_likelihood, movement_rows, positive_step_data, step_log_likelihood, turn_log_likelihood,
    ComparisonFamily, ComparisonParams, StepData, TurnData,
};
use stepturn::simulate::{read_play_simulation, simulate_play, write_play_simulation, BaselineMode, SimulationConfig};
use stepturn::synthetic::{
    brute_force_density_oracle, generate_from_movement_models, null_evaluation_experiment, write_bdb_csv, LinearValue,
    NullConfig, OracleModel, OracleObservation, SyntheticData, SyntheticScenario,
};
use stepturn::tracking::{ingest_directory, ColumnMap};

fn small(seed: u64, n_plays: usize) -> SyntheticScenario {
    let mut s = SyntheticScenario::with_seed(seed);
    s.n_plays = n_plays;
    s
}

fn generate(s: &SyntheticScenario) -> SyntheticData {
    generate_from_movement_models(s).unwrap()
}

#[test]
fn same_seed_same_season() {
    let a = generate(&small(4, 12));
    let b = generate(&small(4, 12));
    assert_eq!(a, b);
    let c = generate(&small(5, 12));
    assert_ne!(a.plays[0].sequence, c.plays[0].sequence);
}

#[test]
fn series_reconstructs_the_drawn_steps() {
    let data = generate(&small(2, 30));
    let mut checked = 0;
    for p in &data.plays {
        let series = derive_step_turn_series(&p.sequence).unwrap();
        for l in &p.latent {
            let o = series.iter().find(|o| o.frame_index == l.frame_index).expect("drawn step is in the series");
            assert!((o.step_length - l.step_length).abs() < 1e-9, "step {} vs {}", o.step_length, l.step_length);
            let d = (o.turn_angle - l.turn_angle + PI).rem_euclid(2.0 * PI) - PI;
            assert!(d.abs() < 1e-9, "turn {} vs {}", o.turn_angle, l.turn_angle);
            checked += 1;
        }
    }
    assert!(checked > 500);
}

#[test]
fn vanishing_noise_follows_the_means() {
    let mut s = small(3, 10);
    s.step.sigma = 1e-12;
    s.turn.gamma0 = 40.0;
    s.turn.tau_w = 1e-9;
    s.redraw_effects();
    let data = generate(&s);
    for l in data.plays.iter().flat_map(|p| &p.latent) {
        assert!((l.z - l.mu_step).abs() < 1e-9);
        let d = (l.turn_angle - l.mu_turn + PI).rem_euclid(2.0 * PI) - PI;
        assert!(d.abs() < 1e-6);
    }
}

fn circular_variance(angles: &[f64]) -> f64 {
    let n = angles.len() as f64;
    let (s, c) = angles.iter().fold((0.0, 0.0), |(s, c), a| (s + a.sin(), c + a.cos()));
    1.0 - (s * s + c * c).sqrt() / n
}

#[test]
fn turn_spread_shrinks_with_step_length() {
    let data = generate(&small(8, 150));
    let mut pairs: Vec<(f64, f64)> =
        data.plays.iter().flat_map(|p| &p.latent).map(|l| (l.step_length, l.turn_angle)).collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let third = pairs.len() / 3;
    let v: Vec<f64> = (0..3)
        .map(|k| circular_variance(&pairs[k * third..(k + 1) * third].iter().map(|p| p.1).collect::<Vec<_>>()))
        .collect();
    assert!(v[0] > v[1] && v[1] > v[2], "circular variance by tercile {v:?}");
}

#[test]
fn csv_layout_ingests_back_to_the_same_sequences() {
    let data = generate(&small(6, 25));
    let dir = tempfile::tempdir().unwrap();
    write_bdb_csv(&data, dir.path()).unwrap();
    let got = ingest_directory(dir.path(), &ColumnMap::default()).unwrap();
    assert!(got.skipped.is_empty(), "{:?}", got.skipped);
    assert_eq!(got.rejected_rows, 0);
    let mut want = data.sequences();
    want.sort_by_key(|s| (s.metadata.game_id, s.metadata.play_id));
    assert_eq!(got.sequences.len(), want.len());
    for (g, w) in got.sequences.iter().zip(&want) {
        let (mg, mw) = (&g.metadata, &w.metadata);
        assert_eq!((mg.game_id, mg.play_id, mg.ball_carrier_id, mg.week), (mw.game_id, mw.play_id, mw.ball_carrier_id, mw.week));
        assert_eq!((&mg.offense_club, &mg.defense_club, mg.yards_to_go), (&mw.offense_club, &mw.defense_club, mw.yards_to_go));
        assert!((mg.yardline_absolute - mw.yardline_absolute).abs() < 1e-9);
        assert_eq!(g.start_event, w.start_event);
        assert_eq!(g.end_event, w.end_event);
        assert_eq!(g.frames.len(), w.frames.len());
        for (fg, fw) in g.frames.iter().zip(&w.frames) {
            assert_eq!((fg.frame_id, &fg.event), (fw.frame_id, &fw.event));
            for (a, b) in fg.players.iter().zip(&fw.players) {
                assert_eq!((a.player_id, a.side), (b.player_id, b.side));
                assert!((a.x - b.x).abs() < 1e-9 && (a.y - b.y).abs() < 1e-9);
                assert!((a.speed - b.speed).abs() < 1e-9);
            }
        }
    }

    // without player_play.csv and no ballCarrierId column nothing is a rush
    std::fs::remove_file(dir.path().join("player_play.csv")).unwrap();
    let bare = ingest_directory(dir.path(), &ColumnMap::default()).unwrap();
    assert!(bare.sequences.is_empty());
    assert_eq!(bare.non_rush_plays, want.len());
}

#[test]
fn likelihoods_agree_with_the_naive_oracle() {
    let data = generate(&small(9, 20));
    let sc = &data.scenario;
    let levels = sc.levels();
    let rows = movement_rows(&data.sequences()).unwrap();
    let step = StepData::build(&rows, &sc.spec, &levels).unwrap();
    let turn = TurnData::build(&rows, &sc.spec, &levels).unwrap();
    let obs = |x: &[f64], i: usize| OracleObservation {
        x: x.to_vec(),
        step_length: rows[i].step_length,
        turn_angle: rows[i].turn_angle,
        carrier: step.carrier[i],
        defense: step.defense[i],
    };
    let step_obs: Vec<_> = (0..step.n).map(|i| obs(step.row(i), i)).collect();
    let turn_obs: Vec<_> = (0..turn.n).map(|i| obs(turn.row(i), i)).collect();
    let close = |a: f64, b: f64| (a - b).abs() <= 1e-9 * b.abs().max(1.0);

    let model = step_log_likelihood(&sc.step, &step).unwrap();
    let oracle = brute_force_density_oracle(OracleModel::ArcsineStep { params: &sc.step, s_max: sc.spec.s_max }, &step_obs);
    assert!(close(model, oracle), "{model} vs {oracle}");

    let model = turn_log_likelihood(&sc.turn, &turn).unwrap();
    let oracle = brute_force_density_oracle(OracleModel::Turn(&sc.turn), &turn_obs);
    assert!(close(model, oracle), "{model} vs {oracle}");

    let (positive, _) = positive_step_data(&rows, &sc.spec, &levels).unwrap();
    let pos_obs: Vec<_> =
        (0..positive.n).map(|i| OracleObservation { step_length: positive.response[i], ..obs(positive.row(i), i) }).collect();
    let mut cp = ComparisonParams::from(sc.step.clone());
    cp.alpha0 = -1.0;
    cp.dispersion = 3.0;
    let model = comparison_log_likelihood(ComparisonFamily::Gamma, &cp, &positive).unwrap();
    let oracle = brute_force_density_oracle(OracleModel::Gamma(&cp), &pos_obs);
    assert!(close(model, oracle), "{model} vs {oracle}");
    cp.dispersion = 0.5;
    let model = comparison_log_likelihood(ComparisonFamily::LogNormal, &cp, &positive).unwrap();
    let oracle = brute_force_density_oracle(OracleModel::LogNormal(&cp), &pos_obs);
    assert!(close(model, oracle), "{model} vs {oracle}");
}

#[test]
fn stored_simulation_reads_back_identically() {
    let data = generate(&small(10, 3));
    let posterior = data.scenario.true_posterior();
    let cfg = SimulationConfig { n_draws: 12, mode: BaselineMode::OwnPlayer, seed: 5 };
    let seq = &data.plays[1].sequence;
    let sim = simulate_play(seq, &posterior, &cfg).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("play.tsv");
    write_play_simulation(&sim, &path).unwrap();
    assert_eq!(read_play_simulation(&path, seq, &cfg).unwrap(), sim);
    assert!(read_play_simulation(&path, &data.plays[0].sequence, &cfg).is_err());
}

#[test]
fn exchangeable_observed_step_is_calibrated() {
    let data = generate(&small(12, 60));
    let report = null_evaluation_experiment(
        &data,
        &data.scenario.true_posterior(),
        &LinearValue::progress(),
        &NullConfig { n_plays: 60, ..Default::default() },
    )
    .unwrap();
    assert!((report.yards_success_rate - 0.5).abs() < 4.0 * report.success_se.max(0.01), "{report:?}");
    assert!((report.explosiveness - 6.0 / 101.0).abs() < 4.0 * report.explosiveness_se.max(0.005), "{report:?}");
}
