//! Estimating per-action prediction coefficients from repeated trials.
//!
//! Each trial of an action yields one `α` per joint, either from its score
//! trace (`α = exp(-∫G/C)`) or from the wear measured before and after
//! (`α = (1 - V_end) / (1 - V_start)`). The action's model is the mean over
//! trials.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::ergo::{ActionModel, ErgoError, RulaScoreTrace};
use crate::joint::{Joint, JointMap};

/// What was recorded during one repetition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrialData {
    Trace(RulaScoreTrace),
    Endpoints(JointMap<WearEndpoints>),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WearEndpoints {
    pub start: f64,
    pub end: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub action: String,
    pub duration_s: f64,
    #[serde(flatten)]
    pub data: TrialData,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CalibrationError {
    #[error("no trials")]
    NoTrials,
    #[error("trials mix actions `{0}` and `{1}`")]
    MixedActions(String, String),
    #[error("{joint}: starting wear {start} leaves no room to charge")]
    SaturatedStart { joint: Joint, start: f64 },
    #[error("{joint}: wear endpoints ({start}, {end}) must satisfy 0 <= start <= end < 1")]
    BadEndpoints { joint: Joint, start: f64, end: f64 },
    #[error("trial duration must be non-negative, got {0}")]
    BadDuration(f64),
    #[error("trimmed-mean fraction must lie in [0, 0.5), got {0}")]
    BadTrim(f64),
    #[error(transparent)]
    Ergo(#[from] ErgoError),
}

/// Per-joint `α` of one trial.
pub fn alpha_from_trial(
    trial: &TrialRecord,
    capacity: f64,
) -> Result<JointMap<f64>, CalibrationError> {
    if !(capacity.is_finite() && capacity > 0.0) {
        return Err(ErgoError::BadCapacity(capacity).into());
    }
    match &trial.data {
        TrialData::Trace(trace) => {
            let exposure = trace.exposure();
            Ok(exposure.map(|_, e| (-e / capacity).exp()))
        }
        TrialData::Endpoints(ends) => {
            let mut alpha = JointMap::splat(1.0);
            for (joint, e) in ends.iter() {
                if e.start >= 1.0 {
                    return Err(CalibrationError::SaturatedStart {
                        joint,
                        start: e.start,
                    });
                }
                if !(e.start >= 0.0 && e.end >= e.start && e.end < 1.0) {
                    return Err(CalibrationError::BadEndpoints {
                        joint,
                        start: e.start,
                        end: e.end,
                    });
                }
                alpha[joint] = (1.0 - e.end) / (1.0 - e.start);
            }
            Ok(alpha)
        }
    }
}

/// How per-trial coefficients are combined.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Estimator {
    #[default]
    Mean,
    Median,
    /// Drops this fraction of trials from each end before averaging.
    TrimmedMean {
        fraction: f64,
    },
}

impl Estimator {
    fn combine(self, values: &mut [f64]) -> Result<f64, CalibrationError> {
        match self {
            Estimator::Mean => Ok(mean(values)),
            Estimator::Median => {
                values.sort_by(f64::total_cmp);
                let n = values.len();
                Ok(if n % 2 == 1 {
                    values[n / 2]
                } else {
                    0.5 * (values[n / 2 - 1] + values[n / 2])
                })
            }
            Estimator::TrimmedMean { fraction } => {
                if !(0.0..0.5).contains(&fraction) {
                    return Err(CalibrationError::BadTrim(fraction));
                }
                values.sort_by(f64::total_cmp);
                let cut = (values.len() as f64 * fraction).floor() as usize;
                Ok(mean(&values[cut..values.len() - cut]))
            }
        }
    }
}

fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Sample standard deviation; zero for a single value.
fn sample_stddev(values: &[f64]) -> f64 {
    if values.len() < 2 {
        return 0.0;
    }
    let m = mean(values);
    let ss: f64 = values.iter().map(|v| (v - m) * (v - m)).sum();
    (ss / (values.len() - 1) as f64).sqrt()
}

/// A fitted action model plus the spread of the trials behind it.
#[derive(Debug, Clone, PartialEq)]
pub struct CalibratedModel {
    pub model: ActionModel,
    pub stddev: JointMap<f64>,
    pub n_trials: usize,
}

pub fn estimate_action_model(
    trials: &[TrialRecord],
    capacity: f64,
) -> Result<CalibratedModel, CalibrationError> {
    estimate_action_model_with(trials, capacity, Estimator::Mean)
}

pub fn estimate_action_model_with(
    trials: &[TrialRecord],
    capacity: f64,
    estimator: Estimator,
) -> Result<CalibratedModel, CalibrationError> {
    let first = trials.first().ok_or(CalibrationError::NoTrials)?;
    if let Some(other) = trials.iter().find(|t| t.action != first.action) {
        return Err(CalibrationError::MixedActions(
            first.action.clone(),
            other.action.clone(),
        ));
    }
    let mut per_joint: JointMap<Vec<f64>> = JointMap::default();
    for trial in trials {
        if !(trial.duration_s >= 0.0) {
            return Err(CalibrationError::BadDuration(trial.duration_s));
        }
        let alpha = alpha_from_trial(trial, capacity)?;
        for joint in Joint::ALL {
            per_joint[joint].push(alpha[joint]);
        }
    }
    let mut alpha = JointMap::splat(1.0);
    let mut stddev = JointMap::splat(0.0);
    for joint in Joint::ALL {
        stddev[joint] = sample_stddev(&per_joint[joint]);
        alpha[joint] = estimator.combine(&mut per_joint[joint])?;
    }
    let duration_s = mean(&trials.iter().map(|t| t.duration_s).collect::<Vec<_>>());
    let model = ActionModel::new(first.action.clone(), alpha, duration_s)?;
    Ok(CalibratedModel {
        model,
        stddev,
        n_trials: trials.len(),
    })
}

/// Fits one model per action found in `trials`.
pub fn calibrate_all(
    trials: &[TrialRecord],
    capacity: f64,
    estimator: Estimator,
) -> Result<CalibrationFile, CalibrationError> {
    let mut by_action: BTreeMap<&str, Vec<TrialRecord>> = BTreeMap::new();
    for t in trials {
        by_action
            .entry(t.action.as_str())
            .or_default()
            .push(t.clone());
    }
    let mut file = CalibrationFile::default();
    for group in by_action.values() {
        let fitted = estimate_action_model_with(group, capacity, estimator)?;
        file.insert(&fitted);
    }
    Ok(file)
}

pub const CALIBRATION_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JointFit {
    pub alpha: f64,
    pub stddev: f64,
    pub n_trials: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionFit {
    pub joints: JointMap<JointFit>,
    pub duration_s: f64,
}

/// `{"v": 1, "actions": {action: {"joints": {joint: {alpha, stddev, n_trials}}, "duration_s"}}}`
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationFile {
    pub v: u32,
    pub actions: BTreeMap<String, ActionFit>,
}

impl Default for CalibrationFile {
    fn default() -> Self {
        CalibrationFile {
            v: CALIBRATION_VERSION,
            actions: BTreeMap::new(),
        }
    }
}

impl CalibrationFile {
    pub fn insert(&mut self, fitted: &CalibratedModel) {
        let joints = JointMap::from_fn(|j| JointFit {
            alpha: fitted.model.alpha[j],
            stddev: fitted.stddev[j],
            n_trials: fitted.n_trials,
        });
        self.actions.insert(
            fitted.model.action.clone(),
            ActionFit {
                joints,
                duration_s: fitted.model.duration_s,
            },
        );
    }

    /// Builds a file straight from models, e.g. for hand-written fixtures.
    pub fn from_models<'a>(models: impl IntoIterator<Item = &'a ActionModel>) -> Self {
        let mut file = CalibrationFile::default();
        for m in models {
            file.insert(&CalibratedModel {
                model: m.clone(),
                stddev: JointMap::splat(0.0),
                n_trials: 0,
            });
        }
        file
    }

    pub fn models(&self) -> Result<BTreeMap<String, ActionModel>, ErgoError> {
        self.actions
            .iter()
            .map(|(name, fit)| {
                ActionModel::new(name.clone(), fit.joints.map(|_, f| f.alpha), fit.duration_s)
                    .map(|m| (name.clone(), m))
            })
            .collect()
    }
}
