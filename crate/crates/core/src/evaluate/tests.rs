use super::*;
use crate::hmc::SamplerConfig;
use approx::assert_abs_diff_eq;
use proptest::prelude::*;

fn fe(observed: f64, hyp: &[f64]) -> FrameEvaluation {
    frame_delta(observed, hyp).unwrap()
}

fn play(carrier: u64, frames: Vec<FrameEvaluation>) -> PlayEvaluation {
    PlayEvaluation { game_id: 1, play_id: 1, carrier_id: carrier, team: "AAA".into(), frames, windows: vec![] }
}

#[test]
fn four_hypotheticals_by_hand() {
    let f = fe(5.0, &[3.0, 4.0, 6.0, 7.0]);
    assert_eq!(f.delta, vec![2.0, 1.0, -1.0, -2.0]);
    assert_eq!(f.delta_bar, 0.0);
    assert_eq!(f.success_rate(), 0.5);
    assert!(matches!(frame_delta(1.0, &[]), Err(EvalError::EmptyHypotheticalSet)));
}

#[test]
fn ties_are_not_successes() {
    assert_eq!(fe(2.0, &[2.0, 2.0, 1.0, 3.0]).success_rate(), 0.25);
}

#[test]
fn explosive_threshold() {
    let hyp: Vec<f64> = (1..=20).map(f64::from).collect();
    // 0.95 quantile of 1..=20 under linear interpolation: 19 + 0.05
    assert!(fe(19.5, &hyp).explosive().unwrap());
    assert!(!fe(19.0, &hyp).explosive().unwrap());
    let short = fe(100.0, &hyp[..19]);
    assert!(matches!(short.explosive(), Err(EvalError::InsufficientDraws { needed: 20, found: 19 })));
}

#[test]
fn frames_weigh_equally_and_plays_average_first() {
    let a = fe(2.5, &[1.0, 2.0, 3.0, 4.0]); // 0.5
    let b = fe(10.0, &[1.0, 2.0, 3.0, 4.0]); // 1.0
    let c = fe(0.0, &[1.0, 2.0, 3.0, 4.0]); // 0.0
    assert_abs_diff_eq!(yards_success_rate([&a, &b, &c]).unwrap(), 0.5);
    assert!(matches!(yards_success_rate(std::iter::empty()), Err(EvalError::NoFrames)));

    let hyp: Vec<f64> = (1..=20).map(f64::from).collect();
    let hot = fe(50.0, &hyp);
    let cold = fe(0.0, &hyp);
    let plays = vec![play(1, vec![hot]), play(1, vec![cold.clone(), cold.clone(), cold])];
    // per play 1 and 0, not 1/4 pooled
    assert_abs_diff_eq!(explosiveness(&plays).unwrap(), 0.5);
}

#[test]
fn accumulation_and_curve() {
    let frames = vec![fe(1.0, &[0.0]), fe(0.0, &[2.0]), fe(3.0, &[1.0, 2.0])];
    assert_abs_diff_eq!(accumulate_play_delta(&frames), 1.0 - 2.0 + 1.5);
    let p = play(7, frames);
    let tsv = p.curve_tsv();
    assert_eq!(tsv.lines().count(), 4);
    assert!(tsv.lines().last().unwrap().ends_with("0.500000"));
}

fn metrics(id: u64, plays: usize, v: f64) -> PlayerMetrics {
    PlayerMetrics {
        player_id: id,
        team: "T".into(),
        plays,
        frames: plays * 10,
        yards_success_rate: v,
        explosiveness: v / 10.0,
        accumulated_delta_per_play: -v,
    }
}

#[test]
fn leaderboard_order_and_eligibility() {
    let m = vec![metrics(5, 80, 0.6), metrics(3, 90, 0.6), metrics(4, 90, 0.6), metrics(9, 69, 0.9), metrics(1, 70, 0.4)];
    let rows = build_leaderboard(&m, Metric::YardsSuccessRate, DEFAULT_MIN_PLAYS);
    let ids: Vec<u64> = rows.iter().map(|r| r.player_id).collect();
    assert_eq!(ids, vec![3, 4, 5, 1]);
    assert_eq!(rows.iter().map(|r| r.rank).collect::<Vec<_>>(), vec![1, 2, 3, 4]);
    let rows = build_leaderboard(&m, Metric::AccumulatedDelta, 0);
    assert_eq!(rows[0].player_id, 1);
    let tsv = leaderboard_tsv(&rows, Metric::AccumulatedDelta);
    assert!(tsv.starts_with("rank\tplayer_id\tteam\tplays\taccumulated_delta_per_play\n"));
}

#[test]
fn player_metrics_group_by_carrier() {
    let hyp: Vec<f64> = (1..=20).map(f64::from).collect();
    let plays = vec![
        play(2, vec![fe(30.0, &hyp), fe(0.0, &hyp)]),
        play(1, vec![fe(10.5, &hyp)]),
        play(2, vec![fe(0.0, &hyp)]),
    ];
    let m = player_metrics(&plays).unwrap();
    assert_eq!(m.iter().map(|p| p.player_id).collect::<Vec<_>>(), vec![1, 2]);
    let p2 = &m[1];
    assert_eq!((p2.plays, p2.frames), (2, 3));
    assert_abs_diff_eq!(p2.yards_success_rate, (1.0 + 0.0 + 0.0) / 3.0);
    assert_abs_diff_eq!(p2.explosiveness, (0.5 + 0.0) / 2.0);
    assert_abs_diff_eq!(m[0].yards_success_rate, 0.5);
}

fn draws(names: &[&str], columns: &[Vec<f64>]) -> PosteriorDraws {
    let n = columns[0].len();
    let mut values = Vec::new();
    for i in 0..n {
        values.extend(columns.iter().map(|c| c[i]));
    }
    PosteriorDraws {
        names: names.iter().map(|s| s.to_string()).collect(),
        n_chains: 1,
        n_kept: n,
        values,
        seed: 0,
        config: SamplerConfig::default(),
        chain_stats: vec![],
    }
}

#[test]
fn effect_leaderboard_ranks_means_and_flags_unseen() {
    let d = draws(
        &["alpha0", "w[11]", "w[12]", "w[13]"],
        &[vec![0.0; 5], vec![0.1, 0.2, 0.3, 0.4, 0.5], vec![1.0; 5], vec![9.0; 5]],
    );
    let n_obs: BTreeMap<String, usize> = [("11".to_string(), 4), ("12".to_string(), 2)].into();
    let (rows, excluded) = random_effect_leaderboard(&d, "w", &n_obs).unwrap();
    assert_eq!(excluded, vec!["13".to_string()]);
    assert_eq!(rows[0].level, "12");
    assert_eq!(rows[1].level, "11");
    assert_abs_diff_eq!(rows[1].mean, 0.3, epsilon = 1e-12);
    assert_abs_diff_eq!(rows[1].lower, 0.1 + 0.1 * 0.1, epsilon = 1e-12);
    assert!(matches!(random_effect_leaderboard(&d, "u", &n_obs), Err(EvalError::UnknownEffect(_))));
    assert_eq!(effect_leaderboard_tsv(&rows).lines().count(), 3);
}

struct Linear;

impl ValueFunction for Linear {
    fn expected_yards(&self, f: &ValuationFeatureVector) -> Result<f64, EvalError> {
        Ok(0.1 * f.values[0])
    }
}

#[test]
fn end_of_play_scale_adds_progress() {
    let near = ValuationFeatureVector { values: vec![20.0] };
    let far = ValuationFeatureVector { values: vec![30.0] };
    let gained = score(&Linear, &near, DeltaScale::YardsGained).unwrap() - score(&Linear, &far, DeltaScale::YardsGained).unwrap();
    let eop = score(&Linear, &near, DeltaScale::EndOfPlay).unwrap() - score(&Linear, &far, DeltaScale::EndOfPlay).unwrap();
    assert_abs_diff_eq!(gained, -1.0, epsilon = 1e-12);
    assert_abs_diff_eq!(eop, -1.0 + 10.0, epsilon = 1e-12);
}

proptest! {
    #[test]
    fn delta_bar_is_observed_minus_mean(obs in -20.0..20.0f64, hyp in prop::collection::vec(-20.0..20.0f64, 1..60)) {
        let f = fe(obs, &hyp);
        let mean = hyp.iter().sum::<f64>() / hyp.len() as f64;
        prop_assert!((f.delta_bar - (obs - mean)).abs() < 1e-9);
        let r = f.success_rate();
        prop_assert!((0.0..=1.0).contains(&r));
        prop_assert!(f.interval.0 <= f.interval.1);
    }

    #[test]
    fn success_rate_monotone_in_observed(a in -20.0..20.0f64, b in -20.0..20.0f64, hyp in prop::collection::vec(-20.0..20.0f64, 1..60)) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        prop_assert!(fe(lo, &hyp).success_rate() <= fe(hi, &hyp).success_rate());
    }
}
