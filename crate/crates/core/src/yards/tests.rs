use super::*;
use approx::assert_abs_diff_eq;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn cfg(iterations: usize, lr: f64) -> TrainConfig {
    TrainConfig { iterations, learning_rate: lr, max_depth: 3, min_samples_leaf: 5, ..TrainConfig::default() }
}

fn uniform_rows(n: usize, p: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| (0..p).map(|_| rng.random_range(-1.0..1.0)).collect()).collect()
}

fn train_rmse(model: &BoostedModel, x: &[Vec<f64>], y: &[f64]) -> f64 {
    let r: Vec<f64> = x.iter().zip(y).map(|(r, t)| t - model.predict(r).unwrap()).collect();
    rmse(&r)
}

#[test]
fn constant_target_yields_base_only() {
    let x = uniform_rows(100, 3, 1);
    let y = vec![4.5; 100];
    let m = fit_boosted(&x, &y, &cfg(50, 0.1)).unwrap();
    assert!(m.trees.is_empty());
    for r in &x {
        assert_eq!(m.predict(r).unwrap(), 4.5);
    }
}

#[test]
fn step_function_is_learned() {
    // fewer distinct values than bins, so a cut can fall exactly between the classes
    let x = uniform_rows(250, 3, 2);
    let y: Vec<f64> = x.iter().map(|r| if r[0] > 0.0 { 1.0 } else { 0.0 }).collect();
    let m = fit_boosted(&x, &y, &TrainConfig { max_bins: 256, ..cfg(200, 0.1) }).unwrap();
    assert!(train_rmse(&m, &x, &y) < 0.01);
    assert_eq!(m.used_features(), vec![0]);
}

#[test]
fn linear_signal_reaches_noise_floor() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let x = uniform_rows(3000, 2, 4);
    let y: Vec<f64> = x.iter().map(|r| r[0] + 0.1 * rng.sample::<f64, _>(StandardNormal)).collect();
    let m = fit_boosted(&x[..2000], &y[..2000], &cfg(300, 0.1)).unwrap();
    let held = train_rmse(&m, &x[2000..], &y[2000..]);
    assert!(held < 0.15, "{held}");
}

#[test]
fn hand_walked_tree() {
    let tree = Tree {
        nodes: vec![
            Node::Split { feature: 1, threshold: 0.5, left: 1, right: 2 },
            Node::Leaf(-1.0),
            Node::Split { feature: 0, threshold: 2.0, left: 3, right: 4 },
            Node::Leaf(3.0),
            Node::Leaf(7.0),
        ],
    };
    let m = BoostedModel { n_features: 2, base_prediction: 10.0, learning_rate: 0.5, trees: vec![tree.clone(), tree] };
    // x1 = 0.9 > 0.5 goes right, x0 = 2.5 > 2 goes right: leaf 7 twice
    assert_abs_diff_eq!(m.predict(&[2.5, 0.9]).unwrap(), 10.0 + 0.5 * 14.0);
    assert_abs_diff_eq!(m.predict(&[2.0, 0.9]).unwrap(), 10.0 + 0.5 * 6.0);
    assert_abs_diff_eq!(m.predict(&[9.0, 0.5]).unwrap(), 10.0 - 1.0);
    assert!(matches!(m.predict(&[1.0]), Err(YardsError::FeatureWidthMismatch { expected: 2, found: 1 })));
}

#[test]
fn unused_column_does_not_change_predictions() {
    let x = uniform_rows(400, 2, 5);
    let y: Vec<f64> = x.iter().map(|r| r[0] * 2.0).collect();
    let wide: Vec<Vec<f64>> = x.iter().map(|r| vec![r[0], r[1], 0.0]).collect();
    let m = fit_boosted(&wide, &y, &cfg(50, 0.2)).unwrap();
    assert!(!m.used_features().contains(&2));
    for r in &wide {
        let mut alt = r.clone();
        alt[2] = 123.0;
        assert_eq!(m.predict(r).unwrap(), m.predict(&alt).unwrap());
    }
}

#[test]
fn text_round_trip() {
    let x = uniform_rows(200, 4, 6);
    let y: Vec<f64> = x.iter().map(|r| r[1] - r[3] * 0.3).collect();
    let m = fit_boosted(&x, &y, &cfg(30, 0.2)).unwrap();
    let back = BoostedModel::from_text(&m.to_text()).unwrap();
    assert_eq!(back, m);
    assert!(BoostedModel::from_text("nonsense").is_err());
    let truncated: String = m.to_text().lines().take(8).collect::<Vec<_>>().join("\n");
    assert!(BoostedModel::from_text(&truncated).is_err());
}

#[test]
fn invalid_config_and_empty_data() {
    assert!(matches!(fit_boosted(&[], &[], &cfg(10, 0.1)), Err(YardsError::EmptyTrainingSet)));
    let x = uniform_rows(10, 2, 7);
    let y = vec![0.0; 10];
    assert!(matches!(fit_boosted(&x, &y, &cfg(0, 0.1)), Err(YardsError::InvalidConfig(_))));
    assert!(matches!(fit_boosted(&x, &y, &cfg(10, 0.0)), Err(YardsError::InvalidConfig(_))));
    assert!(matches!(fit_boosted(&x, &y, &cfg(10, 1.5)), Err(YardsError::InvalidConfig(_))));
    let mut bad = y.clone();
    bad[3] = f64::NAN;
    assert!(matches!(fit_boosted(&x, &bad, &cfg(10, 0.1)), Err(YardsError::NonFiniteTarget(_))));
}

#[test]
fn kfold_ten_games_five_folds() {
    let groups: Vec<u64> = (0..10).flat_map(|g| std::iter::repeat_n(g, 7)).collect();
    let folds = grouped_kfold(&groups, 5, 1).unwrap();
    for f in 0..5 {
        let games: BTreeSet<u64> = groups.iter().zip(&folds).filter(|(_, k)| **k == f).map(|(g, _)| *g).collect();
        assert_eq!(games.len(), 2);
    }
    assert!(matches!(grouped_kfold(&[1, 1, 1], 5, 1), Err(YardsError::TooFewGroups { found: 1, k: 5 })));
}

#[test]
fn end_of_play_arithmetic() {
    assert_eq!(end_of_play_yardline(17.0, 42.0), (25.0, false));
    assert_eq!(end_of_play_yardline(0.0, 42.0), (42.0, false));
    assert_eq!(end_of_play_yardline(50.0, 42.0), (0.0, true));
    assert_eq!(end_of_play_yardline(-30.0, 90.0), (100.0, false));
}

fn drifting_dataset(signal: bool, seed: u64) -> YardsDataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows = Vec::new();
    for g in 0..40u64 {
        for t in 0..30usize {
            let x0: f64 = rng.random_range(-1.0..1.0);
            let noise: f64 = rng.sample(StandardNormal);
            let drift = 15.0 - 0.5 * t as f64;
            let target = drift + if signal { 4.0 * x0 } else { 0.0 } + noise;
            rows.push(YardsRow {
                game_id: g,
                play_id: 1,
                week: (g % 4) as u32 + 1,
                frame_index: t,
                yardline: 50.0,
                features: vec![x0, t as f64],
                target,
            });
        }
    }
    YardsDataset { columns: vec!["x0".into(), "t".into()], rows }
}

#[test]
fn intercept_rmse_is_spread_around_training_means() {
    let data = drifting_dataset(false, 8);
    let rep = lowocv(&data, &[YardsFamily::InterceptOnly]).unwrap();
    let f = rep.family("intercept").unwrap();
    let mut ss = 0.0;
    for w in 1..=4u32 {
        let train: Vec<f64> = data.rows.iter().filter(|r| r.week != w).map(|r| r.target).collect();
        let m = train.iter().sum::<f64>() / train.len() as f64;
        ss += data.rows.iter().filter(|r| r.week == w).map(|r| (r.target - m).powi(2)).sum::<f64>();
    }
    assert_abs_diff_eq!(f.overall_rmse, (ss / data.rows.len() as f64).sqrt(), epsilon = 1e-9);
}

#[test]
fn boosting_beats_intercept_and_baseline_drifts() {
    let data = drifting_dataset(true, 9);
    let boosted = YardsFamily::Boosted(cfg(200, 0.1));
    let rep = lowocv(&data, &[YardsFamily::InterceptOnly, boosted]).unwrap();
    let base = rep.family("intercept").unwrap();
    let gbt = rep.family("boosted").unwrap();
    assert!(gbt.overall_rmse / base.overall_rmse < 0.9);
    let early = &base.by_frame[0];
    let late = base.by_frame.last().unwrap();
    assert!(early.mean_residual > 2.0 * early.se && late.mean_residual < -2.0 * late.se);
    assert!(rep.to_tsv().lines().count() > 10);
    let mut single = data.clone();
    single.rows.iter_mut().for_each(|r| r.week = 1);
    assert!(matches!(lowocv(&single, &[YardsFamily::InterceptOnly]), Err(YardsError::SingleWeek)));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn training_loss_never_increases(seed in 0u64..1000) {
        let x = uniform_rows(150, 3, seed);
        let y: Vec<f64> = x.iter().map(|r| r[0].sin() + r[1] * r[2]).collect();
        let m = fit_boosted(&x, &y, &cfg(40, 0.3)).unwrap();
        let mut partial = m.clone();
        let mut last = f64::INFINITY;
        for k in 0..=m.trees.len() {
            partial.trees = m.trees[..k].to_vec();
            let r = train_rmse(&partial, &x, &y);
            prop_assert!(r <= last + 1e-12);
            last = r;
        }
    }

    #[test]
    fn row_order_is_irrelevant(seed in 0u64..1000) {
        let x = uniform_rows(120, 3, seed);
        let y: Vec<f64> = x.iter().map(|r| (3.0 * r[0]).cos() - r[2]).collect();
        let m = fit_boosted(&x, &y, &cfg(20, 0.3)).unwrap();
        let mut idx: Vec<usize> = (0..x.len()).collect();
        idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed + 1));
        let xp: Vec<Vec<f64>> = idx.iter().map(|&i| x[i].clone()).collect();
        let yp: Vec<f64> = idx.iter().map(|&i| y[i]).collect();
        prop_assert_eq!(fit_boosted(&xp, &yp, &cfg(20, 0.3)).unwrap(), m);
    }

    #[test]
    fn grouped_folds_never_leak(n_games in 5u64..40, k in 2usize..6, seed in 0u64..100) {
        let groups: Vec<u64> = (0..n_games * 3).map(|i| (i * 7919) % n_games).collect();
        let folds = grouped_kfold(&groups, k, seed).unwrap();
        for f in 0..k {
            let test: BTreeSet<u64> = groups.iter().zip(&folds).filter(|(_, x)| **x == f).map(|(g, _)| *g).collect();
            let train: BTreeSet<u64> = groups.iter().zip(&folds).filter(|(_, x)| **x != f).map(|(g, _)| *g).collect();
            prop_assert!(test.is_disjoint(&train));
            prop_assert!(!test.is_empty());
        }
    }
}
