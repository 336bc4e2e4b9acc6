//! Step lengths, bearings and turn angles of a moving point.
//!
//! For locations `p_0 .. p_{n-1}` the step `s_t` and bearing `b_t` describe
//! the displacement `p_t -> p_{t+1}`, and the turn `phi_t = b_t - b_{t-1}`
//! (wrapped to `(-pi, pi]`). A path of `n` points yields `n - 2`
//! observations, one for each interior point.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use thiserror::Error;

use crate::scalar::{wrap_angle, Real};
use crate::tracking::BallCarrierSequence;

#[derive(Debug, Error, PartialEq)]
pub enum KinematicsError {
    #[error("non-finite coordinate")]
    NonFiniteInput,
    #[error("coincident points have no bearing")]
    ZeroStep,
    #[error("sequence of {0} frames is too short (need at least 3)")]
    SequenceTooShort(usize),
    #[error("i/o failure: {0}")]
    Io(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Point2<T> {
    pub x: T,
    pub y: T,
}

impl<T: Real> Point2<T> {
    pub fn new(x: T, y: T) -> Self {
        Self { x, y }
    }

    fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    /// Moves `length` along `heading` (radians, math convention).
    pub fn advance(&self, length: T, heading: T) -> Self {
        Self { x: self.x + length * heading.cos(), y: self.y + length * heading.sin() }
    }
}

pub fn step_length<T: Real>(from: Point2<T>, to: Point2<T>) -> Result<T, KinematicsError> {
    if !from.is_finite() || !to.is_finite() {
        return Err(KinematicsError::NonFiniteInput);
    }
    Ok((to.x - from.x).hypot(to.y - from.y))
}

pub fn bearing<T: Real>(from: Point2<T>, to: Point2<T>) -> Result<T, KinematicsError> {
    if !from.is_finite() || !to.is_finite() {
        return Err(KinematicsError::NonFiniteInput);
    }
    let (dx, dy) = (to.x - from.x, to.y - from.y);
    if dx == T::zero() && dy == T::zero() {
        return Err(KinematicsError::ZeroStep);
    }
    Ok(dy.atan2(dx))
}

/// Shortest signed change from `prev` to `curr`; a half turn is `+pi`.
pub fn turn_angle<T: Real>(prev: T, curr: T) -> T {
    wrap_angle(curr - prev)
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepTurnObservation<T> {
    pub play_id: u64,
    pub frame_id: u32,
    /// Index of the step's starting frame within its sequence.
    pub frame_index: usize,
    pub step_length: T,
    pub bearing: T,
    pub turn_angle: T,
    /// Bearing of the step that arrived at this frame (`b_{t-1}`).
    pub incoming_bearing: T,
    pub prev_step_length: Option<T>,
    /// `None` for the first observation of a sequence.
    pub prev_turn_angle: Option<T>,
}

/// Bearings of every step, with zero-length steps inheriting the previous
/// bearing (leading zero steps take the first defined one).
pub fn carried_bearings<T: Real>(path: &[Point2<T>]) -> Result<Vec<T>, KinematicsError> {
    let mut raw = Vec::with_capacity(path.len().saturating_sub(1));
    for w in path.windows(2) {
        match bearing(w[0], w[1]) {
            Ok(b) => raw.push(Some(b)),
            Err(KinematicsError::ZeroStep) => raw.push(None),
            Err(e) => return Err(e),
        }
    }
    let first = raw.iter().flatten().next().copied().unwrap_or_else(T::zero);
    let mut last = first;
    Ok(raw
        .into_iter()
        .map(|b| {
            if let Some(b) = b {
                last = b;
            }
            last
        })
        .collect())
}

/// Step/turn observations for a bare path. Frame ids are the point indices.
pub fn step_turn_series<T: Real>(path: &[Point2<T>]) -> Result<Vec<StepTurnObservation<T>>, KinematicsError> {
    if path.len() < 3 {
        return Err(KinematicsError::SequenceTooShort(path.len()));
    }
    let bearings = carried_bearings(path)?;
    let steps = path
        .windows(2)
        .map(|w| step_length(w[0], w[1]))
        .collect::<Result<Vec<_>, _>>()?;
    let mut out: Vec<StepTurnObservation<T>> = Vec::with_capacity(path.len() - 2);
    for t in 1..path.len() - 1 {
        let turn = turn_angle(bearings[t - 1], bearings[t]);
        let prev_turn = out.last().map(|o| o.turn_angle);
        out.push(StepTurnObservation {
            play_id: 0,
            frame_id: t as u32,
            frame_index: t,
            step_length: steps[t],
            bearing: bearings[t],
            turn_angle: turn,
            incoming_bearing: bearings[t - 1],
            prev_step_length: Some(steps[t - 1]),
            prev_turn_angle: prev_turn,
        });
    }
    Ok(out)
}

/// Step/turn observations along the ball carrier's path.
pub fn derive_step_turn_series(
    sequence: &BallCarrierSequence,
) -> Result<Vec<StepTurnObservation<f64>>, KinematicsError> {
    let path: Vec<Point2<f64>> = sequence.carrier_path().into_iter().map(|(x, y)| Point2::new(x, y)).collect();
    let mut series = step_turn_series(&path)?;
    for obs in &mut series {
        obs.play_id = sequence.metadata.play_id;
        obs.frame_id = sequence.frames[obs.frame_index].frame_id;
    }
    Ok(series)
}

/// Rolls a path forward from `start` given the first bearing `b_0`, the
/// steps `s_0..` and turns `phi_1..` (one fewer than steps).
pub fn reconstruct_path<T: Real>(start: Point2<T>, first_bearing: T, steps: &[T], turns: &[T]) -> Vec<Point2<T>> {
    let mut out = Vec::with_capacity(steps.len() + 1);
    out.push(start);
    let mut heading = first_bearing;
    let mut at = start;
    for (i, &s) in steps.iter().enumerate() {
        if i > 0 {
            heading = heading + turns[i - 1];
        }
        at = at.advance(s, heading);
        out.push(at);
    }
    out
}

/// Writes a series as tab-separated columns for inspection.
pub fn export_series(path: &Path, series: &[StepTurnObservation<f64>]) -> Result<(), KinematicsError> {
    let io = |e: std::io::Error| KinematicsError::Io(e.to_string());
    let mut w = BufWriter::new(File::create(path).map_err(io)?);
    writeln!(w, "play_id\tframe_id\tstep_length\tbearing\tturn_angle\tprev_step_length\tprev_turn_angle").map_err(io)?;
    let opt = |v: Option<f64>| v.map(|v| v.to_string()).unwrap_or_else(|| "NA".into());
    for o in series {
        writeln!(
            w,
            "{}\t{}\t{}\t{}\t{}\t{}\t{}",
            o.play_id,
            o.frame_id,
            o.step_length,
            o.bearing,
            o.turn_angle,
            opt(o.prev_step_length),
            opt(o.prev_turn_angle)
        )
        .map_err(io)?;
    }
    w.flush().map_err(io)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::{FRAC_PI_2, PI};

    fn p(x: f64, y: f64) -> Point2<f64> {
        Point2::new(x, y)
    }

    #[test]
    fn step_length_cases() {
        assert_eq!(step_length(p(0.0, 0.0), p(3.0, 4.0)).unwrap(), 5.0);
        assert_eq!(step_length(p(1.5, 2.5), p(1.5, 2.5)).unwrap(), 0.0);
        assert_eq!(step_length(p(f64::NAN, 0.0), p(1.0, 1.0)), Err(KinematicsError::NonFiniteInput));
        // a 0.30 x 0.40 displacement, the dis column's scale at 10 Hz
        assert!((step_length(p(91.6, 28.19), p(91.3, 27.79)).unwrap() - 0.50).abs() < 0.02);
        assert!((step_length(Point2::new(0.0f32, 0.0), Point2::new(3.0, 4.0)).unwrap() - 5.0).abs() < 1e-6);
    }

    #[test]
    fn bearing_cases() {
        assert_eq!(bearing(p(0.0, 0.0), p(1.0, 0.0)).unwrap(), 0.0);
        assert!((bearing(p(0.0, 0.0), p(0.0, 1.0)).unwrap() - FRAC_PI_2).abs() < 1e-15);
        assert!((bearing(p(0.0, 0.0), p(-1.0, -1.0)).unwrap() + 3.0 * PI / 4.0).abs() < 1e-15);
        assert_eq!(bearing(p(2.0, 2.0), p(2.0, 2.0)), Err(KinematicsError::ZeroStep));
    }

    #[test]
    fn turn_angle_cases() {
        assert_eq!(turn_angle(0.3, 0.3), 0.0);
        assert!((turn_angle(PI - 0.1, -PI + 0.1) - 0.2).abs() < 1e-12);
        assert_eq!(turn_angle(0.0, PI), PI);
    }

    #[test]
    fn series_cases() {
        let s = step_turn_series(&[p(0.0, 0.0), p(1.0, 0.0), p(2.0, 0.0)]).unwrap();
        assert_eq!(s.len(), 1);
        assert_eq!(s[0].turn_angle, 0.0);
        let s = step_turn_series(&[p(0.0, 0.0), p(1.0, 0.0), p(1.0, -1.0)]).unwrap();
        assert!((s[0].turn_angle + FRAC_PI_2).abs() < 1e-15);
        assert_eq!(s[0].prev_turn_angle, None);
        assert_eq!(s[0].prev_step_length, Some(1.0));
        assert_eq!(
            step_turn_series(&[p(0.0, 0.0), p(1.0, 0.0)]),
            Err(KinematicsError::SequenceTooShort(2))
        );
    }

    #[test]
    fn zero_steps_carry_bearing() {
        let s = step_turn_series(&[p(0.0, 0.0), p(0.0, 1.0), p(0.0, 1.0), p(1.0, 1.0)]).unwrap();
        assert_eq!(s.len(), 2);
        assert_eq!(s[0].step_length, 0.0);
        assert!((s[0].bearing - FRAC_PI_2).abs() < 1e-15);
        assert_eq!(s[0].turn_angle, 0.0);
        assert!((s[1].turn_angle + FRAC_PI_2).abs() < 1e-15);
        assert_eq!(s[1].prev_turn_angle, Some(0.0));
        // leading zero step borrows the first defined bearing
        let b = carried_bearings(&[p(0.0, 0.0), p(0.0, 0.0), p(-1.0, 0.0)]).unwrap();
        assert_eq!(b, vec![PI, PI]);
    }

    fn path_strategy() -> impl Strategy<Value = Vec<(f64, f64)>> {
        prop::collection::vec((-50.0..50.0f64, -50.0..50.0f64), 3..40)
    }

    proptest! {
        #[test]
        fn rigid_motion_invariance(pts in path_strategy(), theta in -PI..PI, dx in -10.0..10.0f64, dy in -10.0..10.0f64) {
            let path: Vec<_> = pts.iter().map(|&(x, y)| p(x, y)).collect();
            let moved: Vec<_> = pts.iter().map(|&(x, y)| {
                p(x * theta.cos() - y * theta.sin() + dx, x * theta.sin() + y * theta.cos() + dy)
            }).collect();
            let a = step_turn_series(&path).unwrap();
            let b = step_turn_series(&moved).unwrap();
            for (u, v) in a.iter().zip(&b) {
                prop_assert!((u.step_length - v.step_length).abs() < 1e-9);
                prop_assert!(wrap_angle(u.turn_angle - v.turn_angle).abs() < 1e-9);
                prop_assert!(wrap_angle(v.bearing - u.bearing - theta).abs() < 1e-9);
            }
        }

        #[test]
        fn reconstruction_round_trip(pts in path_strategy()) {
            let path: Vec<_> = pts.iter().map(|&(x, y)| p(x, y)).collect();
            let bearings = carried_bearings(&path).unwrap();
            let steps: Vec<f64> = path.windows(2).map(|w| step_length(w[0], w[1]).unwrap()).collect();
            let turns: Vec<f64> = bearings.windows(2).map(|w| turn_angle(w[0], w[1])).collect();
            let rebuilt = reconstruct_path(path[0], bearings[0], &steps, &turns);
            for (a, b) in path.iter().zip(&rebuilt) {
                prop_assert!((a.x - b.x).abs() < 1e-9 && (a.y - b.y).abs() < 1e-9);
            }
        }
    }
}
