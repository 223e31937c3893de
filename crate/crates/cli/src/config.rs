use std::path::PathBuf;

use clap::Args;
use ergoaog::joint::{Joint, JointMap};
use ergoaog::session::{ClockMode, Handedness, SessionConfig};

use crate::{read_json, CliError};

/// Session configuration: an optional file, then one flag per field.
#[derive(Debug, Clone, Default, Args)]
pub struct ConfigArgs {
    /// JSON file with session configuration; flags below override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub gamma_low: Option<f64>,
    #[arg(long)]
    pub gamma_med: Option<f64>,
    #[arg(long)]
    pub gamma_high: Option<f64>,
    #[arg(long)]
    pub v_th1: Option<f64>,
    #[arg(long)]
    pub v_th2: Option<f64>,
    #[arg(long)]
    pub robot_cost: Option<f64>,
    #[arg(long)]
    pub recovery_rate: Option<f64>,
    #[arg(long)]
    pub g_avg: Option<f64>,
    #[arg(long)]
    pub endurance_s: Option<f64>,
    #[arg(long)]
    pub v_target: Option<f64>,
    #[arg(long)]
    pub capacity: Option<f64>,
    /// Per-joint cost weight, `joint=value`; repeatable.
    #[arg(long = "weight", value_parser = parse_weight)]
    pub weights: Vec<(Joint, f64)>,
    /// Robot execution time, `action=seconds`; repeatable.
    #[arg(long = "robot-duration", value_parser = parse_pair)]
    pub robot_durations: Vec<(String, f64)>,
    #[arg(long)]
    pub sample_period: Option<f64>,
    #[arg(long, value_parser = parse_handedness)]
    pub handedness: Option<Handedness>,
    #[arg(long, value_parser = parse_clock)]
    pub clock: Option<ClockMode>,
}

fn parse_pair(s: &str) -> Result<(String, f64), String> {
    let (key, value) = s
        .split_once('=')
        .ok_or_else(|| format!("expected key=value, got `{s}`"))?;
    let value: f64 = value.parse().map_err(|e| format!("`{value}`: {e}"))?;
    Ok((key.to_string(), value))
}

fn parse_weight(s: &str) -> Result<(Joint, f64), String> {
    let (joint, value) = parse_pair(s)?;
    Ok((joint.parse().map_err(|e| format!("{e}"))?, value))
}

fn parse_handedness(s: &str) -> Result<Handedness, String> {
    serde_json::from_value(serde_json::Value::String(s.to_string()))
        .map_err(|_| format!("expected right or left, got `{s}`"))
}

fn parse_clock(s: &str) -> Result<ClockMode, String> {
    serde_json::from_value(serde_json::Value::String(s.to_string()))
        .map_err(|_| format!("expected logical or wall, got `{s}`"))
}

/// `shoulder,elbow,wrist,trunk,neck`.
pub fn parse_wear(s: &str) -> Result<JointMap<f64>, String> {
    let values: Vec<f64> = s
        .split(',')
        .map(|v| v.trim().parse::<f64>().map_err(|e| format!("`{v}`: {e}")))
        .collect::<Result<_, _>>()?;
    let values: [f64; 5] = values
        .try_into()
        .map_err(|v: Vec<f64>| format!("expected 5 comma-separated values, got {}", v.len()))?;
    Ok(JointMap(values))
}

impl ConfigArgs {
    /// `base` (or the `--config` file when given), with flags applied on top.
    pub fn resolve(&self, base: SessionConfig) -> Result<SessionConfig, CliError> {
        let mut config = match &self.config {
            Some(path) => read_json(path)?,
            None => base,
        };
        let cost = &mut config.cost;
        let scalars = [
            (&mut cost.gamma_low, self.gamma_low),
            (&mut cost.gamma_med, self.gamma_med),
            (&mut cost.gamma_high, self.gamma_high),
            (&mut cost.v_th1, self.v_th1),
            (&mut cost.v_th2, self.v_th2),
            (&mut cost.robot_cost, self.robot_cost),
            (&mut cost.recovery_rate, self.recovery_rate),
            (&mut cost.g_avg, self.g_avg),
            (&mut cost.endurance_s, self.endurance_s),
            (&mut cost.v_target, self.v_target),
        ];
        for (field, flag) in scalars {
            if let Some(value) = flag {
                *field = value;
            }
        }
        if self.capacity.is_some() {
            cost.capacity = self.capacity;
        }
        for (joint, w) in &self.weights {
            cost.weights[*joint] = *w;
        }
        for (action, d) in &self.robot_durations {
            config.robot_durations.insert(action.clone(), *d);
        }
        if let Some(p) = self.sample_period {
            config.sample_period = p;
        }
        if let Some(h) = self.handedness {
            config.handedness = h;
        }
        if let Some(c) = self.clock {
            config.clock = c;
        }
        config
            .validate()
            .map_err(|e| CliError::Invalid(format!("configuration: {e}")))?;
        Ok(config)
    }
}
