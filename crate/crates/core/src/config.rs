//! Encoder and decoder tunables.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default keypoint disk radius in pixels.
pub const DEFAULT_DISK_RADIUS: f64 = 32.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum GaussianDenominator {
    /// `exp(-d^2 / R^2)`: the response is `exp(-1)` on the disk boundary.
    #[default]
    RSquared,
    /// `exp(-d^2 / R)`.
    RRaw,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum CentroidMode {
    /// Instances cluster around their geometric mask centroid.
    Static,
    /// Instances cluster around a high-confidence keypoint.
    #[default]
    Dynamic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SigmaMode {
    /// Each pixel is scored with the sigma stored at that pixel.
    #[default]
    PerPixel,
    /// Every pixel is scored with the sigma stored at the anchor's pixel.
    Instance,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EncodeConfig {
    pub disk_radius: f64,
    pub gaussian_denominator_mode: GaussianDenominator,
    pub offset_normalization: bool,
    pub centroid_mode: CentroidMode,
}

impl Default for EncodeConfig {
    fn default() -> Self {
        Self {
            disk_radius: DEFAULT_DISK_RADIUS,
            gaussian_denominator_mode: GaussianDenominator::RSquared,
            offset_normalization: true,
            centroid_mode: CentroidMode::Dynamic,
        }
    }
}

impl EncodeConfig {
    pub fn validate(&self) -> Result<()> {
        positive("disk_radius", self.disk_radius)
    }

    /// Denominator of the Gaussian keypoint response.
    pub fn gaussian_denominator(&self) -> f64 {
        match self.gaussian_denominator_mode {
            GaussianDenominator::RSquared => self.disk_radius * self.disk_radius,
            GaussianDenominator::RRaw => self.disk_radius,
        }
    }

    /// Decoder settings matching this encoding, other fields at defaults.
    pub fn matching_decode(&self) -> DecodeConfig {
        DecodeConfig::for_radius(self.disk_radius)
            .with_offset_normalization(self.offset_normalization)
            .with_centroid_mode(self.centroid_mode)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DecodeConfig {
    /// Disk radius the fields were encoded with; scales normalized offsets back to pixels.
    pub disk_radius: f64,
    pub offset_normalization: bool,
    pub centroid_mode: CentroidMode,
    pub heatmap_threshold: f64,
    pub nms_radius: f64,
    pub phi_threshold: f64,
    pub min_instance_pixels: usize,
    pub max_instances: usize,
    pub candidate_score_threshold: f64,
    /// Grouping tolerance around each instance mask (pixels).
    pub grouping_dilation: f64,
    /// When false every heatmap pixel votes for its own position (no offset aggregation).
    pub keypoint_voting: bool,
    pub sigma_mode: SigmaMode,
    /// Vote keypoint slots in parallel.
    pub parallel_voting: bool,
}

impl Default for DecodeConfig {
    fn default() -> Self {
        Self::for_radius(DEFAULT_DISK_RADIUS)
    }
}

impl DecodeConfig {
    /// Defaults whose radius-derived fields follow `disk_radius`.
    pub fn for_radius(disk_radius: f64) -> Self {
        Self {
            disk_radius,
            offset_normalization: true,
            centroid_mode: CentroidMode::Dynamic,
            heatmap_threshold: 0.01,
            nms_radius: disk_radius / 2.0,
            phi_threshold: 0.5,
            min_instance_pixels: 64,
            max_instances: 30,
            candidate_score_threshold: 0.1,
            grouping_dilation: disk_radius / 4.0,
            keypoint_voting: true,
            sigma_mode: SigmaMode::PerPixel,
            parallel_voting: false,
        }
    }

    pub fn with_offset_normalization(mut self, on: bool) -> Self {
        self.offset_normalization = on;
        self
    }

    pub fn with_centroid_mode(mut self, mode: CentroidMode) -> Self {
        self.centroid_mode = mode;
        self
    }

    pub fn validate(&self) -> Result<()> {
        positive("disk_radius", self.disk_radius)?;
        positive("nms_radius", self.nms_radius)?;
        if !(self.grouping_dilation.is_finite() && self.grouping_dilation >= 0.0) {
            return Err(Error::Config(format!(
                "grouping_dilation must be >= 0, got {}",
                self.grouping_dilation
            )));
        }
        unit_open("heatmap_threshold", self.heatmap_threshold)?;
        unit_open("phi_threshold", self.phi_threshold)?;
        unit_open("candidate_score_threshold", self.candidate_score_threshold)?;
        if self.max_instances == 0 {
            return Err(Error::Config("max_instances must be >= 1".into()));
        }
        Ok(())
    }
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(Error::Config(format!("{name} must be > 0, got {v}")))
    }
}

fn unit_open(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v < 1.0 {
        Ok(())
    } else {
        Err(Error::Config(format!("{name} must lie in (0, 1), got {v}")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults() {
        let e = EncodeConfig::default();
        assert_eq!(e.disk_radius, 32.0);
        assert_eq!(e.gaussian_denominator(), 1024.0);
        let d = DecodeConfig::default();
        assert_eq!(d.nms_radius, 16.0);
        assert_eq!(d.grouping_dilation, 8.0);
        assert_eq!(d.heatmap_threshold, 0.01);
        assert_eq!(d.phi_threshold, 0.5);
        assert_eq!((d.min_instance_pixels, d.max_instances), (64, 30));
        e.validate().unwrap();
        d.validate().unwrap();
    }

    #[test]
    fn rejects_out_of_range() {
        let d = DecodeConfig {
            phi_threshold: 1.0,
            ..Default::default()
        };
        assert!(d.validate().is_err());
        let e = EncodeConfig {
            disk_radius: 0.0,
            ..Default::default()
        };
        assert!(e.validate().is_err());
    }

    #[test]
    fn partial_json_resolves_defaults() {
        let d: DecodeConfig = serde_json::from_str(r#"{"phi_threshold":0.4}"#).unwrap();
        assert_eq!(d.phi_threshold, 0.4);
        assert_eq!(d.nms_radius, 16.0);
        assert!(serde_json::from_str::<EncodeConfig>(r#"{"bogus":1}"#).is_err());
    }
}
