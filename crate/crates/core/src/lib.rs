#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

//! Centroid-based field codec for joint multi-person pose estimation and
//! instance segmentation.
//!
//! Ground-truth scenes encode into three field families: binary disk
//! heatmaps, per-keypoint offset fields pointing at the keypoint inside each
//! disk, and per-pixel instance offsets pointing at an instance centroid
//! (either the mask centroid or a high-confidence keypoint). Decoding votes
//! keypoints out of the first two and clusters pixels around keypoint
//! anchors with a Gaussian margin.

pub mod ablation;
pub mod annotation;
pub mod bench;
pub mod config;
pub mod decode;
pub mod encode;
pub mod error;
pub mod grid;
pub mod loss;
pub mod mask;
pub mod metrics;
pub mod skeleton;
pub mod synth;
pub mod vcf;

pub use annotation::{Keypoint, PersonAnnotation, SceneAnnotation, Visibility};
pub use config::{CentroidMode, DecodeConfig, EncodeConfig, GaussianDenominator, SigmaMode};
pub use decode::{decode, DecodedInstance, DecodedKeypoint, Detections};
pub use encode::{encode, EncodedFields};
pub use error::{Error, Result};
pub use grid::FieldGrid;
pub use mask::Bitmap;
pub use skeleton::SkeletonSpec;
