//! Canonical 52-parameter facial state.
//!
//! Values are the ARKit blendshape coefficients scaled by 1000, so each
//! parameter lives in 0..1000. The lower/upper face partition follows the
//! name prefixes: mouth, cheek, nose, jaw and tongue parameters are
//! lower-face; eye and brow parameters are upper-face. The 33/19 split is
//! asserted at construction so the convention cannot drift silently.

use serde::{Deserialize, Serialize};
use std::sync::LazyLock;

use crate::error::ConfigError;

/// Number of blendshape parameters.
pub const BLENDSHAPE_COUNT: usize = 52;

/// Scaled value ceiling (raw ARKit coefficient 1.0).
pub const BLENDSHAPE_MAX: f64 = 1000.0;

/// Canonical parameter names, grouped by facial region.
pub const BLENDSHAPE_NAMES: [&str; BLENDSHAPE_COUNT] = [
    "browDown_L",
    "browDown_R",
    "browInnerUp",
    "browOuterUp_L",
    "browOuterUp_R",
    "cheekPuff",
    "cheekSquint_L",
    "cheekSquint_R",
    "eyeBlink_L",
    "eyeBlink_R",
    "eyeLookDown_L",
    "eyeLookDown_R",
    "eyeLookIn_L",
    "eyeLookIn_R",
    "eyeLookOut_L",
    "eyeLookOut_R",
    "eyeLookUp_L",
    "eyeLookUp_R",
    "eyeSquint_L",
    "eyeSquint_R",
    "eyeWide_L",
    "eyeWide_R",
    "jawForward",
    "jawLeft",
    "jawOpen",
    "jawRight",
    "mouthClose",
    "mouthDimple_L",
    "mouthDimple_R",
    "mouthFrown_L",
    "mouthFrown_R",
    "mouthFunnel",
    "mouthLeft",
    "mouthLowerDown_L",
    "mouthLowerDown_R",
    "mouthPress_L",
    "mouthPress_R",
    "mouthPucker",
    "mouthRight",
    "mouthRollLower",
    "mouthRollUpper",
    "mouthShrugLower",
    "mouthShrugUpper",
    "mouthSmile_L",
    "mouthSmile_R",
    "mouthStretch_L",
    "mouthStretch_R",
    "mouthUpperUp_L",
    "mouthUpperUp_R",
    "noseSneer_L",
    "noseSneer_R",
    "tongueOut",
];

/// Index of `eyeBlink_L`.
pub const EYE_BLINK_L: usize = 8;
/// Index of `eyeBlink_R`.
pub const EYE_BLINK_R: usize = 9;

/// Look up a parameter index by canonical name.
pub fn blendshape_index(name: &str) -> Option<usize> {
    BLENDSHAPE_NAMES.iter().position(|&n| n == name)
}

/// One frame of facial state, values clamped to `[0, 1000]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlendshapeVector {
    values: Vec<f64>,
}

impl BlendshapeVector {
    pub fn zeros() -> Self {
        Self {
            values: vec![0.0; BLENDSHAPE_COUNT],
        }
    }

    /// Build from already-scaled values; clamps into range and reports how
    /// many entries needed clamping.
    pub fn from_scaled(values: &[f64]) -> Result<(Self, usize), ConfigError> {
        if values.len() != BLENDSHAPE_COUNT {
            return Err(ConfigError::new(format!(
                "expected {BLENDSHAPE_COUNT} values, got {}",
                values.len()
            )));
        }
        let mut clamped = 0;
        let values = values
            .iter()
            .map(|&v| {
                if !(0.0..=BLENDSHAPE_MAX).contains(&v) {
                    clamped += 1;
                }
                v.clamp(0.0, BLENDSHAPE_MAX)
            })
            .collect();
        Ok((Self { values }, clamped))
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, i: usize) -> f64 {
        self.values[i]
    }

    pub fn set(&mut self, i: usize, v: f64) {
        self.values[i] = v.clamp(0.0, BLENDSHAPE_MAX);
    }
}

/// Scale raw ARKit coefficients (0..1) by 1000.
///
/// Out-of-range inputs are clamped and counted rather than rejected.
pub fn scale_arkit(raw: &[f64]) -> Result<(BlendshapeVector, usize), ConfigError> {
    if raw.len() != BLENDSHAPE_COUNT {
        return Err(ConfigError::new(format!(
            "expected {BLENDSHAPE_COUNT} raw coefficients, got {}",
            raw.len()
        )));
    }
    let scaled: Vec<f64> = raw.iter().map(|&v| v * BLENDSHAPE_MAX).collect();
    BlendshapeVector::from_scaled(&scaled)
}

/// Index sets of the lower-face (33) and upper-face (19) parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct FacePartition {
    pub lower: Vec<usize>,
    pub upper: Vec<usize>,
}

static CANONICAL_PARTITION: LazyLock<FacePartition> = LazyLock::new(|| {
    let mut lower = Vec::new();
    let mut upper = Vec::new();
    for (i, name) in BLENDSHAPE_NAMES.iter().enumerate() {
        if name.starts_with("mouth")
            || name.starts_with("cheek")
            || name.starts_with("nose")
            || name.starts_with("jaw")
            || *name == "tongueOut"
        {
            lower.push(i);
        } else if name.starts_with("eye") || name.starts_with("brow") {
            upper.push(i);
        } else {
            panic!("blendshape {name} matches no partition prefix");
        }
    }
    assert_eq!(lower.len(), 33, "lower-face partition must have 33 entries");
    assert_eq!(upper.len(), 19, "upper-face partition must have 19 entries");
    FacePartition { lower, upper }
});

impl FacePartition {
    /// The canonical prefix-rule partition. Panics at first use if the name
    /// table ever stops splitting 33/19.
    pub fn canonical() -> &'static FacePartition {
        &CANONICAL_PARTITION
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn canonical_partition_is_33_19_and_disjoint() {
        let p = FacePartition::canonical();
        assert_eq!(p.lower.len(), 33);
        assert_eq!(p.upper.len(), 19);
        let mut all: Vec<usize> = p.lower.iter().chain(p.upper.iter()).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..BLENDSHAPE_COUNT).collect::<Vec<_>>());
    }

    #[test]
    fn blink_indices_match_names() {
        assert_eq!(BLENDSHAPE_NAMES[EYE_BLINK_L], "eyeBlink_L");
        assert_eq!(BLENDSHAPE_NAMES[EYE_BLINK_R], "eyeBlink_R");
        assert_eq!(blendshape_index("jawOpen"), Some(24));
        assert_eq!(blendshape_index("tongueOut"), Some(51));
        assert_eq!(blendshape_index("nope"), None);
    }

    #[test]
    fn scaling_and_clamping() {
        let mut raw = vec![0.0; BLENDSHAPE_COUNT];
        raw[0] = 0.25;
        raw[1] = 1.0;
        raw[2] = 1.2;
        raw[3] = -0.1;
        let (v, clamped) = scale_arkit(&raw).unwrap();
        assert_eq!(v.get(0), 250.0);
        assert_eq!(v.get(1), 1000.0);
        assert_eq!(v.get(2), 1000.0);
        assert_eq!(v.get(3), 0.0);
        assert_eq!(clamped, 2);

        assert!(scale_arkit(&vec![0.0; 51]).is_err());
    }
}
