//! Continuous per-joint RULA scoring.
//!
//! Each joint has a neutral angle and a list of breakpoints. Crossing a
//! breakpoint away from neutral raises the score by that breakpoint's step.
//! The hard band edges are replaced by logistic sigmoids, shifted and
//! rescaled so that every contribution is exactly zero at the neutral angle
//! and saturates at its full step far past the breakpoint. The sum starts at
//! 1 and is clamped to `[1, 7]`.

use std::io::Read;

use serde::{Deserialize, Serialize};

use super::wear::{RulaScoreTrace, ScoreSample};
use super::ErgoError;
use crate::joint::{Joint, JointMap};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Breakpoint {
    /// Degrees. Above the neutral angle it belongs to the flexion side,
    /// below it to the extension side.
    pub angle: f64,
    /// Score increase once the breakpoint is passed.
    pub step: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointBands {
    pub neutral: f64,
    pub min_angle: f64,
    pub max_angle: f64,
    pub breakpoints: Vec<Breakpoint>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RulaBandTable {
    /// Sigmoid steepness, per degree.
    pub steepness: f64,
    pub joints: JointMap<JointBands>,
}

fn bands(neutral: f64, min_angle: f64, max_angle: f64, points: &[(f64, f64)]) -> JointBands {
    JointBands {
        neutral,
        min_angle,
        max_angle,
        breakpoints: points
            .iter()
            .map(|&(angle, step)| Breakpoint { angle, step })
            .collect(),
    }
}

impl Default for RulaBandTable {
    /// Standard RULA posture bands, each joint's band scores stretched
    /// linearly over `[1, 7]`:
    ///
    /// | joint    | bands (deg)                        | scores     |
    /// |----------|------------------------------------|------------|
    /// | shoulder | ±20, 20–45, 45–90, >90; ext >20    | 1, 3, 5, 7 |
    /// | elbow    | 60–100, outside                    | 1, 7       |
    /// | wrist    | ±15, beyond                        | 1, 7       |
    /// | trunk    | <20, 20–60, >60                    | 1, 4, 7    |
    /// | neck     | <10, 10–20, >20; ext >10           | 1, 3, 5, 7 |
    fn default() -> Self {
        RulaBandTable {
            steepness: 0.5,
            joints: JointMap([
                bands(
                    0.0,
                    -90.0,
                    180.0,
                    &[(20.0, 2.0), (45.0, 2.0), (90.0, 2.0), (-20.0, 2.0)],
                ),
                bands(80.0, 0.0, 160.0, &[(100.0, 6.0), (60.0, 6.0)]),
                bands(0.0, -90.0, 90.0, &[(15.0, 6.0), (-15.0, 6.0)]),
                bands(0.0, -30.0, 120.0, &[(20.0, 3.0), (60.0, 3.0)]),
                bands(0.0, -60.0, 90.0, &[(10.0, 2.0), (20.0, 2.0), (-10.0, 6.0)]),
            ]),
        }
    }
}

impl RulaBandTable {
    pub fn validate(&self) -> Result<(), ErgoError> {
        if !(self.steepness.is_finite() && self.steepness > 0.0) {
            return Err(ErgoError::BadTable(format!(
                "steepness must be positive, got {}",
                self.steepness
            )));
        }
        for (joint, b) in self.joints.iter() {
            if !(b.min_angle <= b.neutral && b.neutral <= b.max_angle) {
                return Err(ErgoError::BadTable(format!(
                    "{joint}: neutral angle outside its range"
                )));
            }
            for bp in &b.breakpoints {
                if bp.angle == b.neutral {
                    return Err(ErgoError::BadTable(format!(
                        "{joint}: breakpoint at the neutral angle"
                    )));
                }
                if !(bp.step.is_finite() && bp.step > 0.0) {
                    return Err(ErgoError::BadTable(format!(
                        "{joint}: breakpoint steps must be positive"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Upper bound on |dG/dθ| for `joint`, in score units per degree.
    pub fn max_slope(&self, joint: Joint) -> f64 {
        let b = &self.joints[joint];
        b.breakpoints
            .iter()
            .map(|bp| {
                let floor = sigmoid(-self.steepness * (bp.angle - b.neutral).abs());
                bp.step * self.steepness / 4.0 / (1.0 - floor)
            })
            .sum()
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Continuous score of `joint` at `angle` degrees, in `[1, 7]`.
pub fn rula_score(joint: Joint, angle: f64, table: &RulaBandTable) -> Result<f64, ErgoError> {
    let b = &table.joints[joint];
    if !(angle >= b.min_angle && angle <= b.max_angle) {
        return Err(ErgoError::AngleOutOfRange {
            joint,
            angle,
            min: b.min_angle,
            max: b.max_angle,
        });
    }
    let k = table.steepness;
    let mut score = 1.0;
    for bp in &b.breakpoints {
        let reach = (bp.angle - b.neutral).abs();
        let flexion_side = bp.angle > b.neutral;
        // Distance travelled from neutral towards this breakpoint.
        let travelled = if flexion_side {
            angle - b.neutral
        } else {
            b.neutral - angle
        };
        if travelled <= 0.0 {
            continue;
        }
        let floor = sigmoid(-k * reach);
        let s = sigmoid(k * (travelled - reach));
        score += bp.step * (s - floor) / (1.0 - floor);
    }
    Ok(score.clamp(1.0, 7.0))
}

/// One row of joint angles, degrees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AngleSample {
    pub t: f64,
    #[serde(flatten)]
    pub angles: JointMap<f64>,
}

/// Joint angles over time, as streamed by a motion-capture bridge.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AngleTrace {
    pub samples: Vec<AngleSample>,
}

impl AngleTrace {
    /// Parses delimited text with a header naming `t` and every joint, in
    /// any column order. Lines starting with `#` are ignored.
    pub fn from_delimited(reader: impl Read, delimiter: u8) -> Result<AngleTrace, ErgoError> {
        let mut rdr = csv::ReaderBuilder::new()
            .delimiter(delimiter)
            .comment(Some(b'#'))
            .trim(csv::Trim::All)
            .from_reader(reader);
        let header = rdr
            .headers()
            .map_err(|e| ErgoError::Parse {
                line: 1,
                message: e.to_string(),
            })?
            .clone();
        let column = |name: &str| header.iter().position(|h| h.eq_ignore_ascii_case(name));
        let t_col =
            column("t")
                .or_else(|| column("t_seconds"))
                .ok_or_else(|| ErgoError::Parse {
                    line: 1,
                    message: "missing column `t`".into(),
                })?;
        let mut joint_cols = [0usize; 5];
        for joint in Joint::ALL {
            joint_cols[joint.index()] = column(joint.name())
                .or_else(|| column(&format!("{}_deg", joint.name())))
                .ok_or_else(|| ErgoError::Parse {
                    line: 1,
                    message: format!("missing column `{joint}`"),
                })?;
        }
        let mut samples = Vec::new();
        for (i, record) in rdr.records().enumerate() {
            let line = i + 2;
            let record = record.map_err(|e| ErgoError::Parse {
                line,
                message: e.to_string(),
            })?;
            let field = |col: usize| -> Result<f64, ErgoError> {
                let raw = record.get(col).ok_or_else(|| ErgoError::Parse {
                    line,
                    message: "short row".into(),
                })?;
                raw.parse::<f64>().map_err(|e| ErgoError::Parse {
                    line,
                    message: format!("`{raw}`: {e}"),
                })
            };
            let t = field(t_col)?;
            let mut angles = JointMap::splat(0.0);
            for joint in Joint::ALL {
                angles[joint] = field(joint_cols[joint.index()])?;
            }
            samples.push(AngleSample { t, angles });
        }
        let trace = AngleTrace { samples };
        trace.check_times()?;
        Ok(trace)
    }

    /// Parses one JSON object per line: `{"t":..,"shoulder":..,...}`.
    pub fn from_json_lines(text: &str) -> Result<AngleTrace, ErgoError> {
        let mut samples = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let sample: AngleSample = serde_json::from_str(line).map_err(|e| ErgoError::Parse {
                line: i + 1,
                message: e.to_string(),
            })?;
            samples.push(sample);
        }
        let trace = AngleTrace { samples };
        trace.check_times()?;
        Ok(trace)
    }

    fn check_times(&self) -> Result<(), ErgoError> {
        for (index, pair) in self.samples.windows(2).enumerate() {
            if !(pair[1].t > pair[0].t) {
                return Err(ErgoError::NonIncreasingTime {
                    index: index + 1,
                    t: pair[1].t,
                });
            }
        }
        Ok(())
    }
}

/// Scores every sample of an angle trace.
pub fn score_angle_trace(
    trace: &AngleTrace,
    table: &RulaBandTable,
) -> Result<RulaScoreTrace, ErgoError> {
    if trace.samples.is_empty() {
        return Err(ErgoError::EmptyTrace);
    }
    trace.check_times()?;
    let mut samples = Vec::with_capacity(trace.samples.len());
    for s in &trace.samples {
        let mut scores = JointMap::splat(1.0);
        for joint in Joint::ALL {
            scores[joint] = rula_score(joint, s.angles[joint], table)?;
        }
        samples.push(ScoreSample { t: s.t, scores });
    }
    RulaScoreTrace::new(samples)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// The hard-edged band score the sigmoids approximate, stretched to [1, 7].
    fn discrete_score(joint: Joint, angle: f64, table: &RulaBandTable) -> f64 {
        let b = &table.joints[joint];
        1.0 + b
            .breakpoints
            .iter()
            .filter(|bp| {
                if bp.angle > b.neutral {
                    angle > bp.angle
                } else {
                    angle < bp.angle
                }
            })
            .map(|bp| bp.step)
            .sum::<f64>()
    }

    #[test]
    fn neutral_posture_scores_one() {
        let table = RulaBandTable::default();
        for (joint, b) in table.joints.iter() {
            assert_eq!(
                rula_score(joint, b.neutral, &table).unwrap(),
                1.0,
                "{joint}"
            );
        }
    }

    #[test]
    fn far_angles_saturate_at_seven() {
        let table = RulaBandTable::default();
        let s = rula_score(Joint::Shoulder, 180.0, &table).unwrap();
        assert!(s <= 7.0 && s > 6.99, "{s}");
        let s = rula_score(Joint::Neck, -60.0, &table).unwrap();
        assert!(s <= 7.0 && s > 6.99, "{s}");
        // Overshooting steps would exceed 7 without the clamp.
        let mut table = RulaBandTable::default();
        table.joints[Joint::Elbow].breakpoints.push(Breakpoint {
            angle: 120.0,
            step: 6.0,
        });
        assert_eq!(rula_score(Joint::Elbow, 160.0, &table).unwrap(), 7.0);
    }

    #[test]
    fn breakpoints_score_the_midpoint_of_adjacent_bands() {
        let table = RulaBandTable::default();
        // Breakpoints at least 20 degrees from neutral and from each other.
        let cases = [
            (Joint::Shoulder, 20.0_f64),
            (Joint::Shoulder, 45.0),
            (Joint::Shoulder, 90.0),
            (Joint::Shoulder, -20.0),
            (Joint::Elbow, 100.0),
            (Joint::Elbow, 60.0),
            (Joint::Trunk, 20.0),
            (Joint::Trunk, 60.0),
        ];
        for (joint, angle) in cases {
            let below = discrete_score(joint, angle - 1e-9 * angle.signum(), &table);
            let above = discrete_score(joint, angle + 1e-9 * angle.signum(), &table);
            let mid = 0.5 * (below + above);
            let got = rula_score(joint, angle, &table).unwrap();
            assert!(
                (got - mid).abs() <= 0.01,
                "{joint} @ {angle}: {got} vs {mid}"
            );
        }
    }

    #[test]
    fn band_centres_match_discrete_scores() {
        let table = RulaBandTable::default();
        for (joint, angle, want) in [
            (Joint::Shoulder, 32.5, 3.0),
            (Joint::Shoulder, 67.5, 5.0),
            (Joint::Shoulder, 135.0, 7.0),
            (Joint::Elbow, 30.0, 7.0),
            (Joint::Trunk, 40.0, 4.0),
            (Joint::Trunk, 90.0, 7.0),
            (Joint::Wrist, 45.0, 7.0),
        ] {
            let got = rula_score(joint, angle, &table).unwrap();
            assert!((got - want).abs() < 0.01, "{joint} @ {angle}: {got}");
        }
    }

    #[test]
    fn out_of_range_angle_is_rejected() {
        let table = RulaBandTable::default();
        assert!(matches!(
            rula_score(Joint::Wrist, 120.0, &table),
            Err(ErgoError::AngleOutOfRange {
                joint: Joint::Wrist,
                ..
            })
        ));
        assert!(rula_score(Joint::Wrist, f64::NAN, &table).is_err());
    }

    #[test]
    fn shoulder_sweep_is_monotone() {
        let table = RulaBandTable::default();
        let mut trace = AngleTrace::default();
        for i in 0..=1200 {
            let mut angles = JointMap::from_fn(|j| table.joints[j].neutral);
            angles[Joint::Shoulder] = i as f64 * 0.1;
            trace.samples.push(AngleSample {
                t: i as f64 / 60.0,
                angles,
            });
        }
        let scores = score_angle_trace(&trace, &table).unwrap();
        for pair in scores.samples.windows(2) {
            assert!(pair[1].scores[Joint::Shoulder] >= pair[0].scores[Joint::Shoulder]);
        }
    }

    #[test]
    fn ramp_across_a_breakpoint_has_bounded_jumps() {
        let table = RulaBandTable::default();
        let mut trace = AngleTrace::default();
        // One degree per sample straight through the 45 degree band edge.
        for i in 0..60 {
            let mut angles = JointMap::from_fn(|j| table.joints[j].neutral);
            angles[Joint::Shoulder] = 15.0 + i as f64;
            trace.samples.push(AngleSample {
                t: i as f64 / 60.0,
                angles,
            });
        }
        let scores = score_angle_trace(&trace, &table).unwrap();
        let bound = table.max_slope(Joint::Shoulder) * 1.0;
        let max_jump = scores
            .samples
            .windows(2)
            .map(|p| (p[1].scores[Joint::Shoulder] - p[0].scores[Joint::Shoulder]).abs())
            .fold(0.0, f64::max);
        assert!(max_jump > 0.1, "the trace does cross a band edge");
        assert!(max_jump <= bound, "{max_jump} > {bound}");
    }

    #[test]
    fn constant_neutral_trace_scores_one() {
        let table = RulaBandTable::default();
        let trace = AngleTrace {
            samples: (0..10)
                .map(|i| AngleSample {
                    t: i as f64,
                    angles: JointMap::from_fn(|j| table.joints[j].neutral),
                })
                .collect(),
        };
        let scores = score_angle_trace(&trace, &table).unwrap();
        assert!(scores
            .samples
            .iter()
            .all(|s| s.scores.values().all(|&g| g == 1.0)));
    }

    #[test]
    fn delimited_and_json_lines_agree() {
        let csv = "t,neck,shoulder,elbow,wrist,trunk\n0.0,5,10,80,0,3\n0.5,6,12,82,1,4\n";
        let a = AngleTrace::from_delimited(csv.as_bytes(), b',').unwrap();
        let jsonl = "{\"t\":0.0,\"shoulder\":10,\"elbow\":80,\"wrist\":0,\"trunk\":3,\"neck\":5}\n\
                     {\"t\":0.5,\"shoulder\":12,\"elbow\":82,\"wrist\":1,\"trunk\":4,\"neck\":6}\n";
        let b = AngleTrace::from_json_lines(jsonl).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.samples[1].angles[Joint::Neck], 6.0);
    }

    #[test]
    fn malformed_traces_are_rejected() {
        let missing = "t,shoulder,elbow,wrist,trunk\n0,1,2,3,4\n";
        let err = AngleTrace::from_delimited(missing.as_bytes(), b',').unwrap_err();
        assert!(err.to_string().contains("neck"), "{err}");
        let backwards = "t,shoulder,elbow,wrist,trunk,neck\n1,0,80,0,0,0\n0.5,0,80,0,0,0\n";
        assert!(matches!(
            AngleTrace::from_delimited(backwards.as_bytes(), b','),
            Err(ErgoError::NonIncreasingTime { index: 1, .. })
        ));
        let junk = "t,shoulder,elbow,wrist,trunk,neck\n0,x,80,0,0,0\n";
        assert!(matches!(
            AngleTrace::from_delimited(junk.as_bytes(), b','),
            Err(ErgoError::Parse { line: 2, .. })
        ));
    }

    #[test]
    fn default_table_is_valid() {
        RulaBandTable::default().validate().unwrap();
        let mut bad = RulaBandTable::default();
        bad.steepness = 0.0;
        assert!(bad.validate().is_err());
    }
}
