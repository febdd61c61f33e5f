//! Flag groups. Flag names mirror config field names one-to-one.

use clap::{ArgAction, Args, ValueEnum};
use vcodec::config::DEFAULT_DISK_RADIUS;
use vcodec::synth::SynthConfig;
use vcodec::{CentroidMode, DecodeConfig, EncodeConfig, GaussianDenominator, SigmaMode};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DenominatorArg {
    /// exp(-d^2 / R^2)
    RSquared,
    /// exp(-d^2 / R)
    RRaw,
}

impl From<DenominatorArg> for GaussianDenominator {
    fn from(v: DenominatorArg) -> Self {
        match v {
            DenominatorArg::RSquared => GaussianDenominator::RSquared,
            DenominatorArg::RRaw => GaussianDenominator::RRaw,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum CentroidModeArg {
    Static,
    Dynamic,
}

impl From<CentroidModeArg> for CentroidMode {
    fn from(v: CentroidModeArg) -> Self {
        match v {
            CentroidModeArg::Static => CentroidMode::Static,
            CentroidModeArg::Dynamic => CentroidMode::Dynamic,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SigmaModeArg {
    PerPixel,
    Instance,
}

impl From<SigmaModeArg> for SigmaMode {
    fn from(v: SigmaModeArg) -> Self {
        match v {
            SigmaModeArg::PerPixel => SigmaMode::PerPixel,
            SigmaModeArg::Instance => SigmaMode::Instance,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct EncodeArgs {
    /// Keypoint disk radius R in pixels.
    #[arg(long, default_value_t = DEFAULT_DISK_RADIUS)]
    pub disk_radius: f64,
    /// Denominator of the Gaussian keypoint response.
    #[arg(long, value_enum, default_value_t = DenominatorArg::RSquared)]
    pub gaussian_denominator_mode: DenominatorArg,
    /// Store keypoint offsets divided by R.
    #[arg(long, action = ArgAction::Set, default_value_t = true)]
    pub offset_normalization: bool,
    /// Instance centroid: mask centroid (static) or anchor keypoint (dynamic).
    #[arg(long, value_enum, default_value_t = CentroidModeArg::Dynamic)]
    pub centroid_mode: CentroidModeArg,
}

impl EncodeArgs {
    pub fn config(&self) -> EncodeConfig {
        EncodeConfig {
            disk_radius: self.disk_radius,
            gaussian_denominator_mode: self.gaussian_denominator_mode.into(),
            offset_normalization: self.offset_normalization,
            centroid_mode: self.centroid_mode.into(),
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct DecodeArgs {
    /// Disk radius R the fields were encoded with.
    #[arg(long, default_value_t = DEFAULT_DISK_RADIUS)]
    pub disk_radius: f64,
    /// Whether keypoint offsets were stored divided by R.
    #[arg(long, action = ArgAction::Set, default_value_t = true)]
    pub offset_normalization: bool,
    /// Centroid mode the fields were encoded with.
    #[arg(long, value_enum, default_value_t = CentroidModeArg::Dynamic)]
    pub centroid_mode: CentroidModeArg,
    /// Heatmap pixels below this probability do not vote.
    #[arg(long, default_value_t = 0.01)]
    pub heatmap_threshold: f64,
    /// Peak suppression radius in pixels [default: disk_radius / 2].
    #[arg(long)]
    pub nms_radius: Option<f64>,
    /// A pixel joins an instance when its Gaussian margin exceeds this.
    #[arg(long, default_value_t = 0.5)]
    pub phi_threshold: f64,
    /// Smaller clusters are discarded.
    #[arg(long, default_value_t = 64)]
    pub min_instance_pixels: usize,
    #[arg(long, default_value_t = 30)]
    pub max_instances: usize,
    /// Keypoint candidates scoring below this are dropped.
    #[arg(long, default_value_t = 0.1)]
    pub candidate_score_threshold: f64,
    /// Reach from a mask within which a keypoint can join it [default: disk_radius / 4].
    #[arg(long)]
    pub grouping_dilation: Option<f64>,
    /// Vote along keypoint offsets; `false` takes heatmap peaks directly.
    #[arg(long, action = ArgAction::Set, default_value_t = true)]
    pub keypoint_voting: bool,
    /// Sigma used to score a pixel: its own, or the anchor pixel's.
    #[arg(long, value_enum, default_value_t = SigmaModeArg::PerPixel)]
    pub sigma_mode: SigmaModeArg,
    /// Vote keypoint slots in parallel.
    #[arg(long, action = ArgAction::Set, default_value_t = false)]
    pub parallel_voting: bool,
}

impl DecodeArgs {
    pub fn config(&self) -> DecodeConfig {
        let base = DecodeConfig::for_radius(self.disk_radius);
        DecodeConfig {
            offset_normalization: self.offset_normalization,
            centroid_mode: self.centroid_mode.into(),
            heatmap_threshold: self.heatmap_threshold,
            nms_radius: self.nms_radius.unwrap_or(base.nms_radius),
            phi_threshold: self.phi_threshold,
            min_instance_pixels: self.min_instance_pixels,
            max_instances: self.max_instances,
            candidate_score_threshold: self.candidate_score_threshold,
            grouping_dilation: self.grouping_dilation.unwrap_or(base.grouping_dilation),
            keypoint_voting: self.keypoint_voting,
            sigma_mode: self.sigma_mode.into(),
            parallel_voting: self.parallel_voting,
            ..base
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Exact person count; overrides --min-persons/--max-persons.
    #[arg(long)]
    pub persons: Option<usize>,
    #[arg(long, default_value_t = 1)]
    pub min_persons: usize,
    #[arg(long, default_value_t = 5)]
    pub max_persons: usize,
    #[arg(long, default_value_t = 401)]
    pub width: usize,
    #[arg(long, default_value_t = 401)]
    pub height: usize,
    /// Largest pairwise IoU between full person masks.
    #[arg(long, default_value_t = 0.3)]
    pub overlap_target: f64,
    #[arg(long, default_value_t = 3.0)]
    pub limb_width_min: f64,
    #[arg(long, default_value_t = 6.0)]
    pub limb_width_max: f64,
    /// Person height range in pixels.
    #[arg(long, default_value_t = 110.0)]
    pub scale_min: f64,
    #[arg(long, default_value_t = 170.0)]
    pub scale_max: f64,
    #[arg(long, default_value_t = 25.0)]
    pub max_rotation_deg: f64,
    #[arg(long, default_value_t = 256)]
    pub min_visible_pixels: usize,
    /// Only emit scenes the default decoder can separate.
    #[arg(long, action = ArgAction::Set, default_value_t = true)]
    pub resolvable: bool,
    #[arg(long, default_value_t = 1000)]
    pub max_attempts: usize,
}

impl SynthArgs {
    pub fn config(&self, disk_radius: f64) -> SynthConfig {
        let person_count = match self.persons {
            Some(n) => (n, n),
            None => (self.min_persons, self.max_persons),
        };
        SynthConfig {
            width: self.width,
            height: self.height,
            person_count,
            overlap_target: self.overlap_target,
            limb_width: (self.limb_width_min, self.limb_width_max),
            scale: (self.scale_min, self.scale_max),
            max_rotation_deg: self.max_rotation_deg,
            min_visible_pixels: self.min_visible_pixels,
            resolvable: self.resolvable,
            disk_radius,
            max_attempts: self.max_attempts,
            rng_seed: self.seed,
        }
    }
}
