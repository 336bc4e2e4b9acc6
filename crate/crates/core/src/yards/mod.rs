//! Expected yards gained from valuation features, with grouped
//! cross-validation and a leave-one-week-out comparison harness.

mod gbt;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::{assemble_valuation_features, valuation_columns};
use crate::tracking::{BallCarrierSequence, TARGET_GOAL_X};

pub use gbt::{fit_boosted, fit_intercept, BoostedModel, Node, TrainConfig, Tree};

#[derive(Debug, Error)]
pub enum YardsError {
    #[error("no training observations")]
    EmptyTrainingSet,
    #[error("feature width {found}, expected {expected}")]
    FeatureWidthMismatch { expected: usize, found: usize },
    #[error("target {0} is not finite")]
    NonFiniteTarget(f64),
    #[error("{found} groups cannot fill {k} folds")]
    TooFewGroups { found: usize, k: usize },
    #[error("leave-one-week-out needs at least two weeks")]
    SingleWeek,
    #[error("invalid training configuration: {0}")]
    InvalidConfig(String),
    #[error("malformed model file: {0}")]
    Format(String),
    #[error("{0}")]
    Upstream(String),
}

/// One frame: valuation features and the yards the carrier went on to gain.
#[derive(Debug, Clone, PartialEq)]
pub struct YardsRow {
    pub game_id: u64,
    pub play_id: u64,
    pub week: u32,
    /// Frames since the handoff.
    pub frame_index: usize,
    /// Yards from the target end zone at this frame.
    pub yardline: f64,
    pub features: Vec<f64>,
    pub target: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct YardsDataset {
    pub columns: Vec<String>,
    pub rows: Vec<YardsRow>,
}

impl YardsDataset {
    pub fn x(&self) -> Vec<Vec<f64>> {
        self.rows.iter().map(|r| r.features.clone()).collect()
    }

    pub fn y(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.target).collect()
    }

    pub fn games(&self) -> Vec<u64> {
        self.rows.iter().map(|r| r.game_id).collect()
    }
}

/// Every frame of every sequence. The end-of-play position is capped at the
/// goal line before the target is taken, so a touchdown run never counts
/// yards beyond it.
pub fn build_yards_dataset(sequences: &[BallCarrierSequence]) -> Result<YardsDataset, YardsError> {
    let mut rows = Vec::new();
    for seq in sequences {
        let feats = assemble_valuation_features(seq).map_err(|e| YardsError::Upstream(e.to_string()))?;
        let path = seq.carrier_path();
        let Some(&(end_x, _)) = path.last() else { continue };
        let end_x = end_x.min(TARGET_GOAL_X);
        for (t, (f, (x, _))) in feats.into_iter().zip(path).enumerate() {
            rows.push(YardsRow {
                game_id: seq.metadata.game_id,
                play_id: seq.metadata.play_id,
                week: seq.metadata.week,
                frame_index: t,
                yardline: TARGET_GOAL_X - x,
                features: f.values,
                target: end_x - x,
            });
        }
    }
    Ok(YardsDataset { columns: valuation_columns(), rows })
}

/// Expected end-of-play distance to the target end zone for a carrier
/// `yardline` yards out who is expected to gain `gained`. The flag is set when
/// the gain reaches the end zone.
pub fn end_of_play_yardline(gained: f64, yardline: f64) -> (f64, bool) {
    let end = yardline - gained;
    if end <= 0.0 {
        (0.0, true)
    } else {
        (end.min(100.0), false)
    }
}

/// Fold of every observation such that all observations of a group share a
/// fold. Groups are shuffled under `seed` and dealt round-robin.
pub fn grouped_kfold(groups: &[u64], k: usize, seed: u64) -> Result<Vec<usize>, YardsError> {
    let mut distinct: Vec<u64> = groups.iter().copied().collect::<BTreeSet<_>>().into_iter().collect();
    if k < 2 || distinct.len() < k {
        return Err(YardsError::TooFewGroups { found: distinct.len(), k });
    }
    distinct.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let fold: BTreeMap<u64, usize> = distinct.iter().enumerate().map(|(i, g)| (*g, i % k)).collect();
    Ok(groups.iter().map(|g| fold[g]).collect())
}

fn rmse(residuals: &[f64]) -> f64 {
    (residuals.iter().map(|r| r * r).sum::<f64>() / residuals.len() as f64).sqrt()
}

/// Out-of-fold RMSE of the boosted model under game-grouped k-fold splits.
pub fn grouped_cv_rmse(data: &YardsDataset, config: &TrainConfig) -> Result<Vec<f64>, YardsError> {
    let folds = grouped_kfold(&data.games(), config.folds, config.seed)?;
    let mut out = Vec::with_capacity(config.folds);
    for f in 0..config.folds {
        let (train, test): (Vec<usize>, Vec<usize>) = (0..data.rows.len()).partition(|&i| folds[i] != f);
        let x: Vec<Vec<f64>> = train.iter().map(|&i| data.rows[i].features.clone()).collect();
        let y: Vec<f64> = train.iter().map(|&i| data.rows[i].target).collect();
        let model = fit_boosted(&x, &y, config)?;
        let res = test
            .iter()
            .map(|&i| Ok(data.rows[i].target - model.predict(&data.rows[i].features)?))
            .collect::<Result<Vec<f64>, YardsError>>()?;
        out.push(rmse(&res));
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum YardsFamily {
    InterceptOnly,
    Boosted(TrainConfig),
}

impl YardsFamily {
    pub fn name(&self) -> &'static str {
        match self {
            Self::InterceptOnly => "intercept",
            Self::Boosted(_) => "boosted",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinSummary {
    pub frame_index: usize,
    pub n: usize,
    pub rmse: f64,
    pub mean_residual: f64,
    /// Standard error of the mean residual.
    pub se: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FamilyReport {
    pub family: String,
    /// `(week, n, rmse)` with the week held out.
    pub per_week: Vec<(u32, usize, f64)>,
    pub overall_rmse: f64,
    pub by_frame: Vec<BinSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LowocvReport {
    pub families: Vec<FamilyReport>,
}

impl LowocvReport {
    pub fn family(&self, name: &str) -> Option<&FamilyReport> {
        self.families.iter().find(|f| f.family == name)
    }

    /// Long-format table: family, scope, key, n, rmse, mean residual, se.
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("family\tscope\tkey\tn\trmse\tmean_residual\tse\n");
        for f in &self.families {
            for (w, n, r) in &f.per_week {
                let _ = writeln!(out, "{}\tweek\t{w}\t{n}\t{r:.6}\t\t", f.family);
            }
            let n: usize = f.per_week.iter().map(|w| w.1).sum();
            let _ = writeln!(out, "{}\toverall\tall\t{n}\t{:.6}\t\t", f.family, f.overall_rmse);
            for b in &f.by_frame {
                let _ = writeln!(
                    out,
                    "{}\tframe\t{}\t{}\t{:.6}\t{:.6}\t{:.6}",
                    f.family, b.frame_index, b.n, b.rmse, b.mean_residual, b.se
                );
            }
        }
        out
    }
}

/// Frames at or beyond this index share the last bin.
pub const LAST_FRAME_BIN: usize = 40;

/// Leave-one-week-out: each week is predicted by a model trained on all the
/// others. Residuals are observed minus predicted.
pub fn lowocv(data: &YardsDataset, families: &[YardsFamily]) -> Result<LowocvReport, YardsError> {
    let weeks: BTreeSet<u32> = data.rows.iter().map(|r| r.week).collect();
    if weeks.len() < 2 {
        return Err(YardsError::SingleWeek);
    }
    let mut reports = Vec::with_capacity(families.len());
    for family in families {
        let mut residuals = vec![0.0; data.rows.len()];
        let mut per_week = Vec::with_capacity(weeks.len());
        for &w in &weeks {
            let (train, test): (Vec<usize>, Vec<usize>) = (0..data.rows.len()).partition(|&i| data.rows[i].week != w);
            let y: Vec<f64> = train.iter().map(|&i| data.rows[i].target).collect();
            let predict: Box<dyn Fn(&[f64]) -> Result<f64, YardsError>> = match family {
                YardsFamily::InterceptOnly => {
                    let m = fit_intercept(&y)?;
                    Box::new(move |_| Ok(m))
                }
                YardsFamily::Boosted(cfg) => {
                    let x: Vec<Vec<f64>> = train.iter().map(|&i| data.rows[i].features.clone()).collect();
                    let model = fit_boosted(&x, &y, cfg)?;
                    Box::new(move |f| model.predict(f))
                }
            };
            let mut week_res = Vec::with_capacity(test.len());
            for &i in &test {
                let r = data.rows[i].target - predict(&data.rows[i].features)?;
                residuals[i] = r;
                week_res.push(r);
            }
            per_week.push((w, test.len(), rmse(&week_res)));
        }
        let mut bins: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
        for (row, r) in data.rows.iter().zip(&residuals) {
            bins.entry(row.frame_index.min(LAST_FRAME_BIN)).or_default().push(*r);
        }
        let by_frame = bins
            .into_iter()
            .map(|(frame_index, rs)| {
                let n = rs.len();
                let mean = rs.iter().sum::<f64>() / n as f64;
                let var = if n > 1 { rs.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / (n - 1) as f64 } else { 0.0 };
                BinSummary { frame_index, n, rmse: rmse(&rs), mean_residual: mean, se: (var / n as f64).sqrt() }
            })
            .collect();
        reports.push(FamilyReport {
            family: family.name().to_string(),
            per_week,
            overall_rmse: rmse(&residuals),
            by_frame,
        });
    }
    Ok(LowocvReport { families: reports })
}

#[cfg(test)]
mod tests;
