//! Hyper-arc costs from predicted wear.

use serde::{Deserialize, Serialize};

use super::wear::capacity;
use super::ErgoError;
use crate::joint::JointMap;

/// Risk band of a predicted wear value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RiskLevel {
    Low,
    Medium,
    High,
}

/// Everything that turns wear into costs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CostConfig {
    pub gamma_low: f64,
    pub gamma_med: f64,
    pub gamma_high: f64,
    pub v_th1: f64,
    pub v_th2: f64,
    /// Fixed cost of any robot hyper-arc.
    pub robot_cost: f64,
    /// Recovery rate `r`; discharge runs `r` times faster than a score-1 charge.
    pub recovery_rate: f64,
    /// Mean score, endurance and target wear from which `C` is derived.
    pub g_avg: f64,
    pub endurance_s: f64,
    pub v_target: f64,
    /// Explicit capacity; when absent it is derived from the three fields above.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub capacity: Option<f64>,
    pub weights: JointMap<f64>,
}

impl Default for CostConfig {
    fn default() -> Self {
        CostConfig {
            gamma_low: 1.0,
            gamma_med: 10.0,
            gamma_high: 100.0,
            v_th1: 0.25,
            v_th2: 0.75,
            robot_cost: 35.0,
            recovery_rate: 3.0,
            g_avg: 3.0,
            endurance_s: 240.0,
            v_target: 0.993,
            capacity: None,
            weights: JointMap::splat(1.0),
        }
    }
}

impl CostConfig {
    pub fn validate(&self) -> Result<(), ErgoError> {
        let bad = |msg: String| Err(ErgoError::BadConfig(msg));
        if !(self.gamma_low > 0.0
            && self.gamma_low < self.gamma_med
            && self.gamma_med < self.gamma_high)
        {
            return bad(format!(
                "need 0 < gamma_low < gamma_med < gamma_high, got {}, {}, {}",
                self.gamma_low, self.gamma_med, self.gamma_high
            ));
        }
        if !(self.v_th1 > 0.0 && self.v_th1 < self.v_th2 && self.v_th2 < 1.0) {
            return bad(format!(
                "need 0 < v_th1 < v_th2 < 1, got {}, {}",
                self.v_th1, self.v_th2
            ));
        }
        if !(self.robot_cost >= 0.0 && self.robot_cost.is_finite()) {
            return bad(format!(
                "robot_cost must be non-negative, got {}",
                self.robot_cost
            ));
        }
        if !(self.recovery_rate >= 0.0 && self.recovery_rate.is_finite()) {
            return bad(format!(
                "recovery_rate must be non-negative, got {}",
                self.recovery_rate
            ));
        }
        if let Some((joint, w)) = self
            .weights
            .iter()
            .find(|(_, w)| !(**w > 0.0 && w.is_finite()))
        {
            return bad(format!("weight of {joint} must be positive, got {w}"));
        }
        self.capacity()?;
        Ok(())
    }

    /// Capacity `C`, score-seconds.
    pub fn capacity(&self) -> Result<f64, ErgoError> {
        match self.capacity {
            Some(c) if c.is_finite() && c > 0.0 => Ok(c),
            Some(c) => Err(ErgoError::BadCapacity(c)),
            None => capacity(self.g_avg, self.endurance_s, self.v_target),
        }
    }
}

/// Band of `v`: low up to and including `v_th1`, high from `v_th2` on.
pub fn risk_level(v: f64, config: &CostConfig) -> RiskLevel {
    if v <= config.v_th1 {
        RiskLevel::Low
    } else if v >= config.v_th2 {
        RiskLevel::High
    } else {
        RiskLevel::Medium
    }
}

pub fn gamma_of(v: f64, config: &CostConfig) -> f64 {
    match risk_level(v, config) {
        RiskLevel::Low => config.gamma_low,
        RiskLevel::Medium => config.gamma_med,
        RiskLevel::High => config.gamma_high,
    }
}

/// Weighted sum of the per-joint γ scores of a predicted wear vector.
pub fn human_cost(predicted: &JointMap<f64>, config: &CostConfig) -> f64 {
    predicted
        .iter()
        .map(|(j, &v)| config.weights[j] * gamma_of(v, config))
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::joint::Joint;

    #[test]
    fn band_edges() {
        let c = CostConfig::default();
        assert_eq!(gamma_of(0.25, &c), 1.0);
        assert_eq!(gamma_of(0.75, &c), 100.0);
        assert_eq!(gamma_of(0.5, &c), 10.0);
        assert_eq!(gamma_of(0.0, &c), 1.0);
        assert_eq!(gamma_of(f64::from_bits(0.25f64.to_bits() + 1), &c), 10.0);
        assert_eq!(gamma_of(f64::from_bits(0.75f64.to_bits() - 1), &c), 10.0);
    }

    #[test]
    fn gamma_is_monotone() {
        let c = CostConfig::default();
        let mut prev = 0.0;
        for i in 0..=1000 {
            let g = gamma_of(i as f64 / 1000.0, &c);
            assert!(g >= prev);
            prev = g;
        }
    }

    #[test]
    fn human_cost_sums() {
        let c = CostConfig::default();
        assert_eq!(human_cost(&JointMap([0.37, 0.2, 0.2, 0.5, 0.55]), &c), 32.0);
        assert_eq!(human_cost(&JointMap::splat(0.1), &c), 5.0);
        assert_eq!(human_cost(&JointMap::splat(0.9), &c), 500.0);
        let mut weighted = c.clone();
        weighted.weights[Joint::Neck] = 2.0;
        assert_eq!(
            human_cost(&JointMap([0.37, 0.2, 0.2, 0.5, 0.55]), &weighted),
            42.0
        );
    }

    /// With default costs the robot is strictly cheaper exactly when some
    /// joint is high or at least four are medium.
    #[test]
    fn robot_threshold_structure() {
        let c = CostConfig::default();
        let levels = [0.1, 0.5, 0.9];
        for code in 0..3usize.pow(5) {
            let mut v = JointMap::splat(0.0);
            let mut rest = code;
            for j in Joint::ALL {
                v[j] = levels[rest % 3];
                rest /= 3;
            }
            let highs = v.values().filter(|&&x| x == 0.9).count();
            let meds = v.values().filter(|&&x| x == 0.5).count();
            let robot_cheaper = human_cost(&v, &c) > c.robot_cost;
            assert_eq!(robot_cheaper, highs > 0 || meds >= 4, "{v:?}");
        }
    }

    #[test]
    fn config_validation() {
        let c = CostConfig::default();
        c.validate().unwrap();
        assert!((c.capacity().unwrap() - 145.11).abs() < 0.01);
        let mut bad = c.clone();
        bad.gamma_med = 0.5;
        assert!(bad.validate().is_err());
        let mut bad = c.clone();
        bad.v_th1 = 0.8;
        assert!(bad.validate().is_err());
        let mut fixed = c.clone();
        fixed.capacity = Some(100.0);
        assert_eq!(fixed.capacity().unwrap(), 100.0);
        let partial: CostConfig = serde_json::from_str(r#"{"robot_cost": 20}"#).unwrap();
        assert_eq!(partial.robot_cost, 20.0);
        assert_eq!(partial.gamma_high, 100.0);
        assert!(serde_json::from_str::<CostConfig>(r#"{"robot": 20}"#).is_err());
    }
}
