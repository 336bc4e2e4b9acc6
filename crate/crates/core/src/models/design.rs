//! Model specifications, fitting data, and the orthogonalized design.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::features::{assemble_movement_features, MovementFeatureVector};
use crate::kinematics::derive_step_turn_series;
use crate::tracking::BallCarrierSequence;

use super::prior::PriorConfig;
use super::transform::arcsine_transform;
use super::ModelError;

/// Step-length covariates. Of each front/back and left/right count pair only
/// one member is kept because the pair sums to a constant.
pub const DEFAULT_STEP_COLUMNS: [&str; 14] = [
    "bc_endzone_dist",
    "bc_center_offset",
    "bc_firstdown_dist",
    "bc_speed",
    "def1_speed",
    "def1_motion_angle",
    "def1_rel_x",
    "def1_rel_y_abs",
    "def1_dist",
    "count_def_front",
    "count_def_left",
    "count_off_front",
    "count_off_left",
    "lag_step_length",
];

pub const DEFAULT_TURN_COLUMNS: [&str; 14] = [
    "bc_endzone_dist",
    "bc_center_offset",
    "bc_firstdown_dist",
    "bc_speed",
    "def1_speed",
    "def1_motion_angle",
    "def1_rel_x",
    "def1_rel_y_abs",
    "def1_dist",
    "count_def_front",
    "count_def_left",
    "count_off_front",
    "count_off_left",
    "lag_turn_angle",
];

/// Covariate columns with the centering and scaling applied before fitting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovariateSpec {
    pub columns: Vec<String>,
    pub centers: Vec<f64>,
    pub scales: Vec<f64>,
}

impl CovariateSpec {
    /// Columns with unit scale and zero center.
    pub fn identity(columns: &[&str]) -> Self {
        Self {
            columns: columns.iter().map(|c| c.to_string()).collect(),
            centers: vec![0.0; columns.len()],
            scales: vec![1.0; columns.len()],
        }
    }

    /// Center at the mean and scale by the standard deviation of `rows`.
    /// Constant columns are rejected.
    pub fn fit(columns: &[&str], rows: &[MovementRow]) -> Result<Self, ModelError> {
        let mut spec = Self::identity(columns);
        let n = rows.len() as f64;
        if rows.len() < 2 {
            return Err(ModelError::InsufficientData(rows.len()));
        }
        for (j, col) in columns.iter().enumerate() {
            let mut vals = Vec::with_capacity(rows.len());
            for r in rows {
                vals.push(r.features.value(col).ok_or_else(|| ModelError::UnknownColumn(col.to_string()))?);
            }
            let mean = vals.iter().sum::<f64>() / n;
            let var = vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
            if !(var > 1e-24) {
                return Err(ModelError::CollinearDesign(col.to_string()));
            }
            spec.centers[j] = mean;
            spec.scales[j] = var.sqrt();
        }
        Ok(spec)
    }

    pub fn len(&self) -> usize {
        self.columns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.columns.is_empty()
    }

    /// Standardized covariate row.
    pub fn standardize(&self, fv: &MovementFeatureVector) -> Result<Vec<f64>, ModelError> {
        let mut out = Vec::with_capacity(self.columns.len());
        self.standardize_into(fv, &mut out)?;
        Ok(out)
    }

    pub fn standardize_into(&self, fv: &MovementFeatureVector, out: &mut Vec<f64>) -> Result<(), ModelError> {
        for ((col, c), s) in self.columns.iter().zip(&self.centers).zip(&self.scales) {
            let v = fv.value(col).ok_or_else(|| ModelError::UnknownColumn(col.clone()))?;
            out.push((v - c) / s);
        }
        Ok(())
    }

    fn validate(&self) -> Result<(), ModelError> {
        let p = self.columns.len();
        if self.centers.len() != p || self.scales.len() != p {
            return Err(ModelError::DimensionMismatch { expected: p, found: self.centers.len().min(self.scales.len()) });
        }
        for col in &self.columns {
            if !MovementFeatureVector::COLUMNS.contains(&col.as_str()) {
                return Err(ModelError::UnknownColumn(col.clone()));
            }
        }
        if let Some(s) = self.scales.iter().find(|s| !(**s > 0.0)) {
            return Err(ModelError::InvalidSpec(format!("non-positive scale {s}")));
        }
        Ok(())
    }
}

/// Everything needed to rebuild both movement models' designs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub step: CovariateSpec,
    pub turn: CovariateSpec,
    /// Upper bound of the step-length support.
    pub s_max: f64,
    pub prior: PriorConfig,
}

impl ModelSpec {
    /// Default columns, standardization from `rows`, and `s_max` just above the
    /// largest observed step.
    pub fn from_rows(rows: &[MovementRow]) -> Result<Self, ModelError> {
        let s_max = rows.iter().map(|r| r.step_length).fold(0.0, f64::max) * 1.001;
        if !(s_max > 0.0) {
            return Err(ModelError::InsufficientData(rows.len()));
        }
        Ok(Self {
            step: CovariateSpec::fit(&DEFAULT_STEP_COLUMNS, rows)?,
            turn: CovariateSpec::fit(&DEFAULT_TURN_COLUMNS, rows)?,
            s_max,
            prior: PriorConfig::default(),
        })
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        self.step.validate()?;
        self.turn.validate()?;
        if !(self.s_max > 0.0) || !self.s_max.is_finite() {
            return Err(ModelError::InvalidSpec(format!("s_max must be positive, got {}", self.s_max)));
        }
        self.prior.validate().map_err(ModelError::InvalidSpec)
    }
}

/// One modeled movement: covariates at frame `t` and the step/turn that follows.
#[derive(Debug, Clone, PartialEq)]
pub struct MovementRow {
    pub game_id: u64,
    pub play_id: u64,
    pub week: u32,
    pub carrier_id: u64,
    pub defense: String,
    pub frame_index: usize,
    pub step_length: f64,
    pub turn_angle: f64,
    pub features: MovementFeatureVector,
}

/// Movement rows for every sequence, in input order.
pub fn movement_rows(sequences: &[BallCarrierSequence]) -> Result<Vec<MovementRow>, ModelError> {
    let mut rows = Vec::new();
    for seq in sequences {
        let m = &seq.metadata;
        let series = derive_step_turn_series(seq).map_err(|e| ModelError::Upstream(e.to_string()))?;
        let feats = assemble_movement_features(seq, &series).map_err(|e| ModelError::Upstream(e.to_string()))?;
        let by_index: BTreeMap<usize, _> = series.iter().map(|o| (o.frame_index, o)).collect();
        for f in feats {
            let obs = by_index[&f.frame_index];
            rows.push(MovementRow {
                game_id: m.game_id,
                play_id: m.play_id,
                week: m.week,
                carrier_id: m.ball_carrier_id,
                defense: m.defense_club.clone(),
                frame_index: f.frame_index,
                step_length: obs.step_length,
                turn_angle: obs.turn_angle,
                features: f,
            });
        }
    }
    Ok(rows)
}

/// Sorted levels of the two grouping factors.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct GroupLevels {
    pub carriers: Vec<u64>,
    pub defenses: Vec<String>,
}

impl GroupLevels {
    pub fn from_rows(rows: &[MovementRow]) -> Self {
        let mut carriers: Vec<u64> = rows.iter().map(|r| r.carrier_id).collect();
        carriers.sort_unstable();
        carriers.dedup();
        let mut defenses: Vec<String> = rows.iter().map(|r| r.defense.clone()).collect();
        defenses.sort();
        defenses.dedup();
        Self { carriers, defenses }
    }

    pub fn carrier_index(&self, id: u64) -> Option<usize> {
        self.carriers.binary_search(&id).ok()
    }

    pub fn defense_index(&self, club: &str) -> Option<usize> {
        self.defenses.binary_search_by(|d| d.as_str().cmp(club)).ok()
    }
}

/// Step-model data: standardized covariates (row-major) and transformed steps.
#[derive(Debug, Clone, PartialEq)]
pub struct StepData {
    pub n: usize,
    pub p: usize,
    pub x: Vec<f64>,
    pub response: Vec<f64>,
    pub carrier: Vec<usize>,
    pub defense: Vec<usize>,
    pub n_carriers: usize,
    pub n_defenses: usize,
}

impl StepData {
    pub fn build(rows: &[MovementRow], spec: &ModelSpec, levels: &GroupLevels) -> Result<Self, ModelError> {
        let p = spec.step.len();
        let mut x = Vec::with_capacity(rows.len() * p);
        let mut response = Vec::with_capacity(rows.len());
        let mut carrier = Vec::with_capacity(rows.len());
        let mut defense = Vec::with_capacity(rows.len());
        for r in rows {
            spec.step.standardize_into(&r.features, &mut x)?;
            response.push(arcsine_transform(r.step_length, spec.s_max)?);
            carrier.push(levels.carrier_index(r.carrier_id).ok_or(ModelError::UnknownLevel(r.carrier_id.to_string()))?);
            defense.push(levels.defense_index(&r.defense).ok_or_else(|| ModelError::UnknownLevel(r.defense.clone()))?);
        }
        Ok(Self {
            n: rows.len(),
            p,
            x,
            response,
            carrier,
            defense,
            n_carriers: levels.carriers.len(),
            n_defenses: levels.defenses.len(),
        })
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.x[i * self.p..(i + 1) * self.p]
    }
}

/// Turn-model data: standardized covariates (row-major), turns and the step
/// lengths that enter the concentration.
#[derive(Debug, Clone, PartialEq)]
pub struct TurnData {
    pub n: usize,
    pub p: usize,
    pub x: Vec<f64>,
    pub turn: Vec<f64>,
    pub step: Vec<f64>,
    pub carrier: Vec<usize>,
    pub n_carriers: usize,
}

impl TurnData {
    pub fn build(rows: &[MovementRow], spec: &ModelSpec, levels: &GroupLevels) -> Result<Self, ModelError> {
        let p = spec.turn.len();
        let mut x = Vec::with_capacity(rows.len() * p);
        let mut carrier = Vec::with_capacity(rows.len());
        for r in rows {
            spec.turn.standardize_into(&r.features, &mut x)?;
            carrier.push(levels.carrier_index(r.carrier_id).ok_or(ModelError::UnknownLevel(r.carrier_id.to_string()))?);
        }
        Ok(Self {
            n: rows.len(),
            p,
            x,
            turn: rows.iter().map(|r| r.turn_angle).collect(),
            step: rows.iter().map(|r| r.step_length).collect(),
            carrier,
            n_carriers: levels.carriers.len(),
        })
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.x[i * self.p..(i + 1) * self.p]
    }
}

/// Thin QR of the column-centered design, scaled so `Q' Q = (n - 1) I`.
///
/// With `eta = alpha0 + X beta` the sampler works with `eta = a + Q theta`
/// where `theta = R beta` and `a = alpha0 + means . beta`.
#[derive(Debug, Clone, PartialEq)]
pub struct QrDesign {
    pub n: usize,
    pub p: usize,
    /// Row-major `n x p`.
    pub q: Vec<f64>,
    /// Row-major upper-triangular `p x p`.
    pub r: Vec<f64>,
    pub means: Vec<f64>,
    /// `R^{-T} means`, so `alpha0 = a - offset . theta`.
    pub offset: Vec<f64>,
}

impl QrDesign {
    pub fn new(x: &[f64], n: usize, p: usize, names: &[String]) -> Result<Self, ModelError> {
        if x.len() != n * p {
            return Err(ModelError::DimensionMismatch { expected: n * p, found: x.len() });
        }
        if n <= p + 1 {
            return Err(ModelError::InsufficientData(n));
        }
        let mut means = vec![0.0; p];
        for i in 0..n {
            for j in 0..p {
                means[j] += x[i * p + j];
            }
        }
        means.iter_mut().for_each(|m| *m /= n as f64);
        // column-major working copy
        let mut cols: Vec<Vec<f64>> = (0..p).map(|j| (0..n).map(|i| x[i * p + j] - means[j]).collect()).collect();
        let mut r = vec![0.0; p * p];
        for j in 0..p {
            let norm0 = dot(&cols[j], &cols[j]).sqrt();
            for k in 0..j {
                let proj = dot(&cols[k], &cols[j]);
                r[k * p + j] = proj;
                let (head, tail) = cols.split_at_mut(j);
                for (v, qk) in tail[0].iter_mut().zip(&head[k]) {
                    *v -= proj * qk;
                }
            }
            let norm = dot(&cols[j], &cols[j]).sqrt();
            if !(norm > 1e-8 * norm0.max(1e-300)) || norm0 == 0.0 {
                let name = names.get(j).cloned().unwrap_or_else(|| format!("column {j}"));
                return Err(ModelError::CollinearDesign(name));
            }
            r[j * p + j] = norm;
            cols[j].iter_mut().for_each(|v| *v /= norm);
        }
        let scale = ((n - 1) as f64).sqrt();
        let mut q = vec![0.0; n * p];
        for (j, col) in cols.iter().enumerate() {
            for (i, v) in col.iter().enumerate() {
                q[i * p + j] = v * scale;
            }
        }
        r.iter_mut().for_each(|v| *v /= scale);
        // offset solves R' o = means (forward substitution)
        let mut offset = vec![0.0; p];
        for j in 0..p {
            let mut acc = means[j];
            for k in 0..j {
                acc -= r[k * p + j] * offset[k];
            }
            offset[j] = acc / r[j * p + j];
        }
        Ok(Self { n, p, q, r, means, offset })
    }

    pub fn q_row(&self, i: usize) -> &[f64] {
        &self.q[i * self.p..(i + 1) * self.p]
    }

    /// `beta = R^{-1} theta`.
    pub fn beta(&self, theta: &[f64]) -> Vec<f64> {
        let p = self.p;
        let mut beta = vec![0.0; p];
        for j in (0..p).rev() {
            let mut acc = theta[j];
            for k in j + 1..p {
                acc -= self.r[j * p + k] * beta[k];
            }
            beta[j] = acc / self.r[j * p + j];
        }
        beta
    }

    /// `theta = R beta`.
    pub fn theta(&self, beta: &[f64]) -> Vec<f64> {
        let p = self.p;
        (0..p).map(|j| (j..p).map(|k| self.r[j * p + k] * beta[k]).sum()).collect()
    }

    pub fn alpha0(&self, a: f64, theta: &[f64]) -> f64 {
        a - dot(&self.offset, theta)
    }

    pub fn intercept_a(&self, alpha0: f64, beta: &[f64]) -> f64 {
        alpha0 + dot(&self.means, beta)
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
