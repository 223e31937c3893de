//! Ergonomic model of the human worker.
//!
//! Joint angles are turned into continuous RULA-like scores in `[1, 7]`
//! ([`rula`]), scores accumulate into a per-joint kinematic wear that charges
//! like an RC circuit and discharges while the human rests ([`wear`]), and
//! predicted wear is mapped onto hyper-arc costs through three risk bands
//! ([`cost`]).

pub mod cost;
pub mod rula;
pub mod wear;

pub use cost::{gamma_of, human_cost, risk_level, CostConfig, RiskLevel};
pub use rula::{
    rula_score, score_angle_trace, AngleSample, AngleTrace, Breakpoint, JointBands, RulaBandTable,
};
pub use wear::{
    capacity, integrate_wear, predict, recover, recover_all, ActionModel, RulaScoreTrace,
    ScoreSample, WearTrajectory, WearVector, WEAR_CEILING,
};

use crate::joint::Joint;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ErgoError {
    #[error("{joint}: wear {value} is outside [0, 1)")]
    WearOutOfRange { joint: Joint, value: f64 },
    #[error("target wear {0} must lie strictly between 0 and 1")]
    TargetOutOfRange(f64),
    #[error("average score {0} must lie in [1, 7]")]
    ScoreAverageOutOfRange(f64),
    #[error("endurance must be positive, got {0}")]
    BadEndurance(f64),
    #[error("duration must be non-negative, got {0}")]
    NegativeDuration(f64),
    #[error("capacity must be positive, got {0}")]
    BadCapacity(f64),
    #[error("recovery rate must be non-negative, got {0}")]
    BadRecoveryRate(f64),
    #[error("trace has no samples")]
    EmptyTrace,
    #[error("sample {index}: timestamp {t} does not increase")]
    NonIncreasingTime { index: usize, t: f64 },
    #[error("sample {index}: {joint} score {score} is outside [1, 7]")]
    ScoreOutOfRange {
        index: usize,
        joint: Joint,
        score: f64,
    },
    #[error("{joint}: angle {angle} deg is outside the declared range [{min}, {max}]")]
    AngleOutOfRange {
        joint: Joint,
        angle: f64,
        min: f64,
        max: f64,
    },
    #[error("{joint}: prediction coefficient {alpha} is outside (0, 1]")]
    AlphaOutOfRange { joint: Joint, alpha: f64 },
    #[error("invalid band table: {0}")]
    BadTable(String),
    #[error("invalid cost configuration: {0}")]
    BadConfig(String),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
}
