//! Monitored upper-body joints and a fixed-size per-joint container.

use std::fmt;
use std::ops::{Index, IndexMut};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// A joint of the strong arm / upper body whose wear is tracked.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Joint {
    Shoulder,
    Elbow,
    Wrist,
    Trunk,
    Neck,
}

impl Joint {
    /// All joints in canonical order. Delimited-text columns follow this order.
    pub const ALL: [Joint; 5] = [
        Joint::Shoulder,
        Joint::Elbow,
        Joint::Wrist,
        Joint::Trunk,
        Joint::Neck,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Joint::Shoulder => "shoulder",
            Joint::Elbow => "elbow",
            Joint::Wrist => "wrist",
            Joint::Trunk => "trunk",
            Joint::Neck => "neck",
        }
    }
}

impl fmt::Display for Joint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown joint `{0}` (expected one of shoulder, elbow, wrist, trunk, neck)")]
pub struct UnknownJoint(pub String);

impl FromStr for Joint {
    type Err = UnknownJoint;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Joint::ALL
            .into_iter()
            .find(|j| j.name().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| UnknownJoint(s.to_string()))
    }
}

/// One value per monitored joint.
///
/// Serializes as a map keyed by joint name so files stay readable; every
/// joint must be present when deserializing.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct JointMap<T>(pub [T; 5]);

impl<T> JointMap<T> {
    pub fn from_fn(mut f: impl FnMut(Joint) -> T) -> Self {
        JointMap(Joint::ALL.map(&mut f))
    }

    pub fn iter(&self) -> impl Iterator<Item = (Joint, &T)> {
        Joint::ALL.into_iter().zip(self.0.iter())
    }

    pub fn values(&self) -> impl Iterator<Item = &T> {
        self.0.iter()
    }

    pub fn map<U>(&self, mut f: impl FnMut(Joint, &T) -> U) -> JointMap<U> {
        JointMap::from_fn(|j| f(j, &self.0[j.index()]))
    }
}

impl<T: Copy> JointMap<T> {
    pub fn splat(value: T) -> Self {
        JointMap([value; 5])
    }
}

impl<T> Index<Joint> for JointMap<T> {
    type Output = T;

    fn index(&self, joint: Joint) -> &T {
        &self.0[joint.index()]
    }
}

impl<T> IndexMut<Joint> for JointMap<T> {
    fn index_mut(&mut self, joint: Joint) -> &mut T {
        &mut self.0[joint.index()]
    }
}

impl<T: Serialize> Serialize for JointMap<T> {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        use serde::ser::SerializeMap;
        let mut map = serializer.serialize_map(Some(5))?;
        for (joint, value) in self.iter() {
            map.serialize_entry(joint.name(), value)?;
        }
        map.end()
    }
}

impl<'de, T: Deserialize<'de>> Deserialize<'de> for JointMap<T> {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        use serde::de::Error;
        let raw = std::collections::BTreeMap::<Joint, T>::deserialize(deserializer)?;
        let mut slots: [Option<T>; 5] = Default::default();
        for (joint, value) in raw {
            slots[joint.index()] = Some(value);
        }
        if let Some(missing) = Joint::ALL.into_iter().find(|j| slots[j.index()].is_none()) {
            return Err(D::Error::custom(format!("missing joint `{missing}`")));
        }
        Ok(JointMap(slots.map(|v| v.expect("checked above"))))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_is_case_insensitive() {
        assert_eq!("Shoulder".parse::<Joint>().unwrap(), Joint::Shoulder);
        assert!("knee".parse::<Joint>().is_err());
    }

    #[test]
    fn missing_joint_is_rejected() {
        let err = serde_json::from_str::<JointMap<f64>>(
            r#"{"shoulder":0.1,"elbow":0.1,"wrist":0.1,"trunk":0.1}"#,
        )
        .unwrap_err();
        assert!(err.to_string().contains("neck"));
    }

    #[test]
    fn serializes_by_name() {
        let m = JointMap([1.0, 2.0, 3.0, 4.0, 5.0]);
        let s = serde_json::to_string(&m).unwrap();
        assert_eq!(
            s,
            r#"{"shoulder":1.0,"elbow":2.0,"wrist":3.0,"trunk":4.0,"neck":5.0}"#
        );
        assert_eq!(serde_json::from_str::<JointMap<f64>>(&s).unwrap(), m);
    }
}
