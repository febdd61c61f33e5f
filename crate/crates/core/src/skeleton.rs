//! Keypoint layout shared by every field family.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const COCO_KEYPOINT_NAMES: [&str; 17] = [
    "nose",
    "left_eye",
    "right_eye",
    "left_ear",
    "right_ear",
    "left_shoulder",
    "right_shoulder",
    "left_elbow",
    "right_elbow",
    "left_wrist",
    "right_wrist",
    "left_hip",
    "right_hip",
    "left_knee",
    "right_knee",
    "left_ankle",
    "right_ankle",
];

/// COCO per-keypoint standard deviations. The OKS falloff constant is twice
/// these (`k_i = 2 * sigma_i`), as in the reference evaluator.
pub const COCO_SIGMAS: [f64; 17] = [
    0.026, 0.025, 0.025, 0.035, 0.035, 0.079, 0.079, 0.072, 0.072, 0.062, 0.062, 0.107, 0.107,
    0.087, 0.087, 0.089, 0.089,
];

/// Limb connectivity of the COCO skeleton as index pairs.
pub const COCO_LIMBS: [(usize, usize); 19] = [
    (15, 13),
    (13, 11),
    (16, 14),
    (14, 12),
    (11, 12),
    (5, 11),
    (6, 12),
    (5, 6),
    (5, 7),
    (6, 8),
    (7, 9),
    (8, 10),
    (1, 2),
    (0, 1),
    (0, 2),
    (1, 3),
    (2, 4),
    (3, 5),
    (4, 6),
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkeletonSpec {
    pub keypoint_names: Vec<String>,
    pub oks_falloff: Vec<f64>,
    /// Keypoint indices tried in order when picking an instance anchor.
    pub anchor_priority: Vec<usize>,
}

impl SkeletonSpec {
    pub fn new(
        keypoint_names: Vec<String>,
        oks_falloff: Vec<f64>,
        anchor_priority: Vec<usize>,
    ) -> Result<Self> {
        let spec = Self {
            keypoint_names,
            oks_falloff,
            anchor_priority,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// The 17-keypoint COCO layout with torso-first anchor priority.
    pub fn coco() -> Self {
        let names: Vec<String> = COCO_KEYPOINT_NAMES.iter().map(|s| s.to_string()).collect();
        let falloff = COCO_SIGMAS.iter().map(|s| 2.0 * s).collect();
        // left_hip, right_hip, left_shoulder, right_shoulder, nose, then the rest.
        let head = [11usize, 12, 5, 6, 0];
        let mut priority = head.to_vec();
        priority.extend((0..names.len()).filter(|i| !head.contains(i)));
        Self {
            keypoint_names: names,
            oks_falloff: falloff,
            anchor_priority: priority,
        }
    }

    pub fn len(&self) -> usize {
        self.keypoint_names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keypoint_names.is_empty()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.keypoint_names.iter().position(|n| n == name)
    }

    pub fn validate(&self) -> Result<()> {
        if self.keypoint_names.is_empty() {
            return Err(Error::Schema("skeleton has no keypoints".into()));
        }
        if self.keypoint_names.len() != self.oks_falloff.len() {
            return Err(Error::Schema(format!(
                "{} keypoint names but {} falloff constants",
                self.keypoint_names.len(),
                self.oks_falloff.len()
            )));
        }
        if let Some(k) = self.oks_falloff.iter().find(|k| !(k.is_finite() && **k > 0.0)) {
            return Err(Error::Schema(format!("falloff constant {k} is not positive")));
        }
        let mut seen = vec![false; self.len()];
        for &i in &self.anchor_priority {
            if i >= self.len() {
                return Err(Error::Schema(format!("anchor priority index {i} out of range")));
            }
            if std::mem::replace(&mut seen[i], true) {
                return Err(Error::Schema(format!("anchor priority repeats index {i}")));
            }
        }
        Ok(())
    }
}

impl Default for SkeletonSpec {
    fn default() -> Self {
        Self::coco()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn coco_priority_is_a_permutation_with_torso_first() {
        let s = SkeletonSpec::coco();
        s.validate().unwrap();
        assert_eq!(s.anchor_priority.len(), 17);
        assert_eq!(s.anchor_priority[0], s.index_of("left_hip").unwrap());
        assert_eq!(s.anchor_priority[1], s.index_of("right_hip").unwrap());
        assert_eq!(s.anchor_priority[4], s.index_of("nose").unwrap());
    }

    #[test]
    fn rejects_mismatched_falloff() {
        let err = SkeletonSpec::new(vec!["a".into(), "b".into()], vec![0.1], vec![0]).unwrap_err();
        assert!(matches!(err, Error::Schema(_)));
    }

    #[test]
    fn rejects_repeated_priority() {
        let err =
            SkeletonSpec::new(vec!["a".into(), "b".into()], vec![0.1, 0.1], vec![1, 1]).unwrap_err();
        assert!(matches!(err, Error::Schema(_)));
    }
}
