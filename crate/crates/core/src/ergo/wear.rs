//! Kinematic wear dynamics.
//!
//! While the human works, each joint's wear charges towards 1 at a rate set
//! by its current score:
//!
//! ```text
//! V(t) = 1 - (1 - V0) * exp(-∫ G(τ)/C dτ)
//! ```
//!
//! While the human rests it discharges, `V(t) = V0 * exp(-r t / C)`.
//! Over a whole action the charge law is affine in the starting wear, which
//! gives the one-step predictor `V̂ = α V + (1 - α)` with
//! `α = exp(-∫ G/C)`.

use serde::{Deserialize, Serialize};

use super::ErgoError;
use crate::joint::{Joint, JointMap};

/// Largest representable wear. The charge law approaches 1 asymptotically;
/// in floating point it can round onto 1, so results are capped here.
pub const WEAR_CEILING: f64 = 1.0 - f64::EPSILON / 2.0;

fn cap(v: f64) -> f64 {
    v.min(WEAR_CEILING)
}

/// Per-joint wear at a point in time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WearVector {
    pub values: JointMap<f64>,
    /// Seconds since session start.
    pub t: f64,
}

impl WearVector {
    pub fn new(values: JointMap<f64>, t: f64) -> Result<Self, ErgoError> {
        check_wear(&values)?;
        Ok(WearVector { values, t })
    }

    pub fn zero() -> Self {
        WearVector {
            values: JointMap::splat(0.0),
            t: 0.0,
        }
    }

    pub fn get(&self, joint: Joint) -> f64 {
        self.values[joint]
    }
}

pub(crate) fn check_wear(values: &JointMap<f64>) -> Result<(), ErgoError> {
    for (joint, &value) in values.iter() {
        if !(0.0..1.0).contains(&value) {
            return Err(ErgoError::WearOutOfRange { joint, value });
        }
    }
    Ok(())
}

/// Capacity `C` such that a constant score `g_avg` charges wear from 0 to
/// `v_target` in `endurance_s` seconds.
pub fn capacity(g_avg: f64, endurance_s: f64, v_target: f64) -> Result<f64, ErgoError> {
    if !(v_target > 0.0 && v_target < 1.0) {
        return Err(ErgoError::TargetOutOfRange(v_target));
    }
    if !(1.0..=7.0).contains(&g_avg) {
        return Err(ErgoError::ScoreAverageOutOfRange(g_avg));
    }
    if !(endurance_s.is_finite() && endurance_s > 0.0) {
        return Err(ErgoError::BadEndurance(endurance_s));
    }
    Ok(-g_avg * endurance_s / (1.0 - v_target).ln())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoreSample {
    pub t: f64,
    #[serde(flatten)]
    pub scores: JointMap<f64>,
}

/// Per-joint scores over time, each in `[1, 7]`, timestamps strictly
/// increasing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<ScoreSample>", into = "Vec<ScoreSample>")]
pub struct RulaScoreTrace {
    pub samples: Vec<ScoreSample>,
}

impl TryFrom<Vec<ScoreSample>> for RulaScoreTrace {
    type Error = ErgoError;

    fn try_from(samples: Vec<ScoreSample>) -> Result<Self, Self::Error> {
        RulaScoreTrace::new(samples)
    }
}

impl From<RulaScoreTrace> for Vec<ScoreSample> {
    fn from(trace: RulaScoreTrace) -> Self {
        trace.samples
    }
}

impl RulaScoreTrace {
    pub fn new(samples: Vec<ScoreSample>) -> Result<Self, ErgoError> {
        if samples.is_empty() {
            return Err(ErgoError::EmptyTrace);
        }
        for (index, s) in samples.iter().enumerate() {
            if index > 0 && !(s.t > samples[index - 1].t) {
                return Err(ErgoError::NonIncreasingTime { index, t: s.t });
            }
            for (joint, &score) in s.scores.iter() {
                if !(1.0..=7.0).contains(&score) {
                    return Err(ErgoError::ScoreOutOfRange {
                        index,
                        joint,
                        score,
                    });
                }
            }
        }
        Ok(RulaScoreTrace { samples })
    }

    /// Constant scores sampled every `period` seconds over `[0, duration]`;
    /// the last sample lands exactly on `duration`.
    pub fn constant(scores: JointMap<f64>, duration: f64, period: f64) -> Result<Self, ErgoError> {
        if !(duration >= 0.0) {
            return Err(ErgoError::NegativeDuration(duration));
        }
        let steps = (duration / period).ceil().max(0.0) as usize;
        let mut samples: Vec<ScoreSample> = (0..steps)
            .map(|i| ScoreSample {
                t: i as f64 * period,
                scores,
            })
            .collect();
        samples.push(ScoreSample {
            t: duration,
            scores,
        });
        samples.dedup_by(|b, a| b.t <= a.t);
        RulaScoreTrace::new(samples)
    }

    pub fn start(&self) -> f64 {
        self.samples[0].t
    }

    pub fn duration(&self) -> f64 {
        self.samples[self.samples.len() - 1].t - self.samples[0].t
    }

    /// Running trapezoidal integral of each joint's score, one entry per
    /// sample (the first is zero).
    pub fn cumulative_exposure(&self) -> Vec<JointMap<f64>> {
        let mut acc = JointMap::splat(0.0);
        let mut out = Vec::with_capacity(self.samples.len());
        out.push(acc);
        for pair in self.samples.windows(2) {
            let dt = pair[1].t - pair[0].t;
            for joint in Joint::ALL {
                acc[joint] += 0.5 * dt * (pair[0].scores[joint] + pair[1].scores[joint]);
            }
            out.push(acc);
        }
        out
    }

    /// `∫ G dτ` over the whole trace.
    pub fn exposure(&self) -> JointMap<f64> {
        *self
            .cumulative_exposure()
            .last()
            .expect("traces are never empty")
    }
}

/// Wear at every sample of a score trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WearTrajectory {
    /// `(seconds since trace start, wear)`.
    pub samples: Vec<(f64, JointMap<f64>)>,
}

impl WearTrajectory {
    pub fn last(&self) -> JointMap<f64> {
        self.samples.last().expect("trajectories are never empty").1
    }
}

/// Charges `v0` along `trace`.
pub fn integrate_wear(
    v0: &JointMap<f64>,
    trace: &RulaScoreTrace,
    capacity: f64,
) -> Result<WearTrajectory, ErgoError> {
    check_wear(v0)?;
    check_capacity(capacity)?;
    let start = trace.start();
    let samples = trace
        .samples
        .iter()
        .zip(trace.cumulative_exposure())
        .map(|(s, exposure)| {
            // v0 + (1 - v0)(1 - e^-x) is exact at x = 0 and never dips below v0.
            let wear = JointMap::from_fn(|j| {
                cap(v0[j] - (1.0 - v0[j]) * (-exposure[j] / capacity).exp_m1())
            });
            (s.t - start, wear)
        })
        .collect();
    Ok(WearTrajectory { samples })
}

fn check_capacity(capacity: f64) -> Result<(), ErgoError> {
    if capacity.is_finite() && capacity > 0.0 {
        Ok(())
    } else {
        Err(ErgoError::BadCapacity(capacity))
    }
}

/// Discharges wear `v0` over `duration` seconds of rest.
pub fn recover(v0: f64, duration: f64, rate: f64, capacity: f64) -> Result<f64, ErgoError> {
    if !(duration >= 0.0) {
        return Err(ErgoError::NegativeDuration(duration));
    }
    if !(rate >= 0.0 && rate.is_finite()) {
        return Err(ErgoError::BadRecoveryRate(rate));
    }
    check_capacity(capacity)?;
    Ok(v0 * (-rate * duration / capacity).exp())
}

pub fn recover_all(
    v0: &JointMap<f64>,
    duration: f64,
    rate: f64,
    capacity: f64,
) -> Result<JointMap<f64>, ErgoError> {
    check_wear(v0)?;
    let mut out = *v0;
    for joint in Joint::ALL {
        out[joint] = recover(v0[joint], duration, rate, capacity)?;
    }
    Ok(out)
}

/// Per-action prediction coefficients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionModel {
    pub action: String,
    /// `α` per joint, in `(0, 1]`; lower means a more wearing action.
    pub alpha: JointMap<f64>,
    /// Nominal human execution time, seconds.
    pub duration_s: f64,
}

impl ActionModel {
    pub fn new(
        action: impl Into<String>,
        alpha: JointMap<f64>,
        duration_s: f64,
    ) -> Result<Self, ErgoError> {
        let model = ActionModel {
            action: action.into(),
            alpha,
            duration_s,
        };
        model.validate()?;
        Ok(model)
    }

    pub fn validate(&self) -> Result<(), ErgoError> {
        for (joint, &alpha) in self.alpha.iter() {
            if !(alpha > 0.0 && alpha <= 1.0) {
                return Err(ErgoError::AlphaOutOfRange { joint, alpha });
            }
        }
        if !(self.duration_s >= 0.0) {
            return Err(ErgoError::NegativeDuration(self.duration_s));
        }
        Ok(())
    }

    /// `β = 1 - α`.
    pub fn beta(&self) -> JointMap<f64> {
        self.alpha.map(|_, a| 1.0 - a)
    }
}

/// One-step prediction of the wear after the human performs `model`'s action.
pub fn predict(wear: &JointMap<f64>, model: &ActionModel) -> JointMap<f64> {
    JointMap::from_fn(|j| cap(model.alpha[j] * wear[j] + (1.0 - model.alpha[j])))
}
