//! Ground-truth scene annotations and their JSON form.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mask::Bitmap;
use crate::skeleton::SkeletonSpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum Visibility {
    Absent = 0,
    Occluded = 1,
    Visible = 2,
}

impl TryFrom<u8> for Visibility {
    type Error = String;
    fn try_from(v: u8) -> std::result::Result<Self, String> {
        match v {
            0 => Ok(Visibility::Absent),
            1 => Ok(Visibility::Occluded),
            2 => Ok(Visibility::Visible),
            other => Err(format!("visibility must be 0, 1 or 2, got {other}")),
        }
    }
}

impl From<Visibility> for u8 {
    fn from(v: Visibility) -> u8 {
        v as u8
    }
}

impl Visibility {
    pub fn is_labeled(self) -> bool {
        self != Visibility::Absent
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Keypoint {
    pub x: f64,
    pub y: f64,
    pub visibility: Visibility,
}

impl Keypoint {
    pub fn new(x: f64, y: f64, visibility: Visibility) -> Self {
        Self { x, y, visibility }
    }

    pub fn absent() -> Self {
        Self::new(0.0, 0.0, Visibility::Absent)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PersonAnnotation {
    pub instance_id: u32,
    pub keypoints: Vec<Keypoint>,
    pub mask: Bitmap,
}

impl PersonAnnotation {
    pub fn labeled_keypoints(&self) -> impl Iterator<Item = (usize, &Keypoint)> {
        self.keypoints
            .iter()
            .enumerate()
            .filter(|(_, k)| k.visibility.is_labeled())
    }

    pub fn area(&self) -> usize {
        self.mask.count()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneAnnotation {
    pub width: usize,
    pub height: usize,
    pub persons: Vec<PersonAnnotation>,
}

#[derive(Serialize, Deserialize)]
struct PersonJson {
    instance_id: u32,
    keypoints: Vec<(f64, f64, Visibility)>,
    mask_rle: Vec<u64>,
}

#[derive(Serialize, Deserialize)]
struct SceneJson {
    width: usize,
    height: usize,
    persons: Vec<PersonJson>,
}

/// Lattice coordinates span `[0, width - 1] x [0, height - 1]`.
pub fn inside_canvas(x: f64, y: f64, width: usize, height: usize) -> bool {
    x.is_finite()
        && y.is_finite()
        && x >= 0.0
        && y >= 0.0
        && x <= (width as f64 - 1.0)
        && y <= (height as f64 - 1.0)
}

impl SceneAnnotation {
    pub fn empty(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            persons: Vec::new(),
        }
    }

    pub fn validate(&self, skeleton: &SkeletonSpec) -> Result<()> {
        if self.width == 0 || self.height == 0 {
            return Err(Error::Schema("canvas must be non-empty".into()));
        }
        let mut ids = Vec::with_capacity(self.persons.len());
        for (k, p) in self.persons.iter().enumerate() {
            if p.instance_id == 0 {
                return Err(Error::Schema(format!("person {k}: instance_id 0 is reserved for background")));
            }
            if ids.contains(&p.instance_id) {
                return Err(Error::Schema(format!("duplicate instance_id {}", p.instance_id)));
            }
            ids.push(p.instance_id);
            if p.keypoints.len() != skeleton.len() {
                return Err(Error::Schema(format!(
                    "person {}: {} keypoints, skeleton has {}",
                    p.instance_id,
                    p.keypoints.len(),
                    skeleton.len()
                )));
            }
            if p.mask.width() != self.width || p.mask.height() != self.height {
                return Err(Error::Mask(format!("person {}: mask canvas mismatch", p.instance_id)));
            }
            for (j, kp) in p.labeled_keypoints() {
                if !inside_canvas(kp.x, kp.y, self.width, self.height) {
                    return Err(Error::Schema(format!(
                        "person {}: labeled keypoint {j} at ({}, {}) lies outside the canvas",
                        p.instance_id, kp.x, kp.y
                    )));
                }
            }
            if p.labeled_keypoints().next().is_some() && p.mask.is_empty() {
                return Err(Error::Mask(format!(
                    "person {}: labeled keypoints but an empty mask",
                    p.instance_id
                )));
            }
        }
        Ok(())
    }

    pub fn from_json(text: &str, skeleton: &SkeletonSpec) -> Result<Self> {
        let raw: SceneJson = serde_json::from_str(text)?;
        let persons = raw
            .persons
            .into_iter()
            .map(|p| {
                let mask = Bitmap::from_rle(raw.width, raw.height, &p.mask_rle).map_err(|e| {
                    Error::Mask(format!("person {}: {e}", p.instance_id))
                })?;
                Ok(PersonAnnotation {
                    instance_id: p.instance_id,
                    keypoints: p
                        .keypoints
                        .into_iter()
                        .map(|(x, y, v)| Keypoint::new(x, y, v))
                        .collect(),
                    mask,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let scene = Self {
            width: raw.width,
            height: raw.height,
            persons,
        };
        scene.validate(skeleton)?;
        Ok(scene)
    }

    pub fn to_json(&self) -> String {
        let raw = SceneJson {
            width: self.width,
            height: self.height,
            persons: self
                .persons
                .iter()
                .map(|p| PersonJson {
                    instance_id: p.instance_id,
                    keypoints: p.keypoints.iter().map(|k| (k.x, k.y, k.visibility)).collect(),
                    mask_rle: p.mask.to_rle(),
                })
                .collect(),
        };
        serde_json::to_string(&raw).expect("scene serialization cannot fail")
    }
}

/// Parses annotation JSON against `skeleton`.
pub fn read_annotations(text: &str, skeleton: &SkeletonSpec) -> Result<SceneAnnotation> {
    SceneAnnotation::from_json(text, skeleton)
}
