//! Ground-truth field encoding: disk heatmaps, keypoint offset fields and
//! instance embedding offsets.

use std::path::Path;

use crate::annotation::{inside_canvas, PersonAnnotation, SceneAnnotation, Visibility};
use crate::config::{CentroidMode, EncodeConfig};
use crate::error::{Error, Result};
use crate::grid::FieldGrid;
use crate::mask::Bitmap;
use crate::skeleton::SkeletonSpec;
use crate::vcf;

pub const MC_OFF_X: &str = "mc/off_x";
pub const MC_OFF_Y: &str = "mc/off_y";
pub const MC_SEED: &str = "mc/seed";
pub const MC_SIGMA: &str = "mc/sigma";
pub const MC_IID: &str = "mc/iid";

pub const HEATMAP_FILE: &str = "heatmaps.vcf";
pub const KEYCENTROID_FILE: &str = "keycentroid.vcf";
pub const MASKCENTROID_FILE: &str = "maskcentroid.vcf";

pub fn heatmap_channel(name: &str) -> String {
    format!("hm/{name}")
}

pub fn keycentroid_channels(name: &str) -> [String; 2] {
    [format!("kc/{name}/dx"), format!("kc/{name}/dy")]
}

pub fn maskcentroid_channels() -> Vec<String> {
    [MC_OFF_X, MC_OFF_Y, MC_SEED, MC_SIGMA, MC_IID]
        .iter()
        .map(|s| s.to_string())
        .collect()
}

/// Emitted when an instance could not use its configured centroid.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum EncodeWarning {
    /// Dynamic mode found no labeled keypoint; the static centroid was used.
    AnchorFallback { instance_id: u32 },
    /// Every pixel of the instance was claimed by a lower instance id.
    FullyOccluded { instance_id: u32 },
}

/// The three field families for one scene.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodedFields {
    pub heatmaps: FieldGrid,
    pub keycentroid: FieldGrid,
    pub maskcentroid: FieldGrid,
    pub disk_radius: f64,
    pub offset_normalization: bool,
    pub warnings: Vec<EncodeWarning>,
}

impl EncodedFields {
    pub fn write_dir(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(e, 0))?;
        vcf::write_field_file(&self.heatmaps, &dir.join(HEATMAP_FILE))?;
        vcf::write_field_file(&self.keycentroid, &dir.join(KEYCENTROID_FILE))?;
        vcf::write_field_file(&self.maskcentroid, &dir.join(MASKCENTROID_FILE))?;
        Ok(())
    }
}

/// Reads the three field files written by [`EncodedFields::write_dir`].
pub fn read_field_dir(dir: &Path) -> Result<(FieldGrid, FieldGrid, FieldGrid)> {
    Ok((
        vcf::read_field_file(&dir.join(HEATMAP_FILE))?,
        vcf::read_field_file(&dir.join(KEYCENTROID_FILE))?,
        vcf::read_field_file(&dir.join(MASKCENTROID_FILE))?,
    ))
}

/// Encodes every field family.
pub fn encode(scene: &SceneAnnotation, skeleton: &SkeletonSpec, cfg: &EncodeConfig) -> Result<EncodedFields> {
    cfg.validate()?;
    scene.validate(skeleton)?;
    let (maskcentroid, warnings) = encode_maskcentroid(scene, skeleton, cfg)?;
    Ok(EncodedFields {
        heatmaps: encode_heatmaps(scene, skeleton, cfg)?,
        keycentroid: encode_keycentroid(scene, skeleton, cfg)?,
        maskcentroid,
        disk_radius: cfg.disk_radius,
        offset_normalization: cfg.offset_normalization,
        warnings,
    })
}

/// Integer pixel range covering the disk of radius `r` around `(cx, cy)`.
fn disk_bounds(cx: f64, cy: f64, r: f64, w: usize, h: usize) -> (usize, usize, usize, usize) {
    let x0 = (cx - r).ceil().max(0.0) as usize;
    let y0 = (cy - r).ceil().max(0.0) as usize;
    let x1 = ((cx + r).floor().min(w as f64 - 1.0)).max(0.0) as usize;
    let y1 = ((cy + r).floor().min(h as f64 - 1.0)).max(0.0) as usize;
    (x0, y0, x1, y1)
}

/// Persons in encoding order: ascending instance id.
fn ordered_persons(scene: &SceneAnnotation) -> Vec<&PersonAnnotation> {
    let mut persons: Vec<&PersonAnnotation> = scene.persons.iter().collect();
    persons.sort_by_key(|p| p.instance_id);
    persons
}

/// Calls `f(x, y, dx, dy, person)` for every pixel of every labeled disk of
/// slot `j`, where `(dx, dy) = q - p` points at the nearest keypoint. Ties go
/// to the lower instance id.
fn for_each_disk_owner<F>(scene: &SceneAnnotation, j: usize, r: f64, mut f: F)
where
    F: FnMut(usize, usize, f64, f64, &PersonAnnotation),
{
    let (w, h) = (scene.width, scene.height);
    let persons = ordered_persons(scene);
    let mut best = vec![f64::INFINITY; w * h];
    let mut owner: Vec<u32> = vec![u32::MAX; w * h];
    let r2 = r * r;
    for (k, p) in persons.iter().enumerate() {
        let q = p.keypoints[j];
        if !q.visibility.is_labeled() {
            continue;
        }
        let (x0, y0, x1, y1) = disk_bounds(q.x, q.y, r, w, h);
        for y in y0..=y1 {
            for x in x0..=x1 {
                let (dx, dy) = (q.x - x as f64, q.y - y as f64);
                let d2 = dx * dx + dy * dy;
                let i = y * w + x;
                if d2 <= r2 && d2 < best[i] {
                    best[i] = d2;
                    owner[i] = k as u32;
                }
            }
        }
    }
    for (i, &k) in owner.iter().enumerate() {
        if k != u32::MAX {
            let p = persons[k as usize];
            let q = p.keypoints[j];
            let (x, y) = (i % w, i / w);
            f(x, y, q.x - x as f64, q.y - y as f64, p);
        }
    }
}

/// Binary disk heatmaps, one channel per keypoint slot. Pixels on the disk
/// boundary count as inside.
pub fn encode_heatmaps(scene: &SceneAnnotation, skeleton: &SkeletonSpec, cfg: &EncodeConfig) -> Result<FieldGrid> {
    let names = skeleton.keypoint_names.iter().map(|n| heatmap_channel(n)).collect();
    let mut grid = FieldGrid::zeros(scene.height, scene.width, names)?;
    let r = cfg.disk_radius;
    let w = scene.width;
    for p in &scene.persons {
        for (j, q) in p.labeled_keypoints() {
            let (x0, y0, x1, y1) = disk_bounds(q.x, q.y, r, scene.width, scene.height);
            let plane = grid.plane_mut(j);
            for y in y0..=y1 {
                for x in x0..=x1 {
                    let (dx, dy) = (x as f64 - q.x, y as f64 - q.y);
                    if dx * dx + dy * dy <= r * r {
                        plane[y * w + x] = 1.0;
                    }
                }
            }
        }
    }
    Ok(grid)
}

/// Per-slot displacement `q - p` inside each keypoint disk, divided by the
/// radius when offset normalization is on. Channel order is `[dx_0, dy_0, dx_1, ...]`.
pub fn encode_keycentroid(scene: &SceneAnnotation, skeleton: &SkeletonSpec, cfg: &EncodeConfig) -> Result<FieldGrid> {
    let names = skeleton
        .keypoint_names
        .iter()
        .flat_map(|n| keycentroid_channels(n))
        .collect();
    let mut grid = FieldGrid::zeros(scene.height, scene.width, names)?;
    let r = cfg.disk_radius;
    let scale = if cfg.offset_normalization { 1.0 / r } else { 1.0 };
    for j in 0..skeleton.len() {
        let mut cells = Vec::new();
        for_each_disk_owner(scene, j, r, |x, y, dx, dy, _| cells.push((x, y, dx, dy)));
        for (x, y, dx, dy) in cells {
            grid.set(2 * j, y, x, (dx * scale) as f32);
            grid.set(2 * j + 1, y, x, (dy * scale) as f32);
        }
    }
    Ok(grid)
}

/// Gaussian response `exp(-((x - xj)^2 + (y - yj)^2) / d)` over the canvas,
/// with `d = R^2` or `d = R` depending on the configured denominator.
pub fn gaussian_response(keypoint: (f64, f64), canvas: (usize, usize), cfg: &EncodeConfig) -> Result<FieldGrid> {
    let (h, w) = canvas;
    if !inside_canvas(keypoint.0, keypoint.1, w, h) {
        return Err(Error::InvalidValue(format!(
            "keypoint ({}, {}) lies outside the {w}x{h} canvas",
            keypoint.0, keypoint.1
        )));
    }
    let d = cfg.gaussian_denominator();
    let mut grid = FieldGrid::zeros(h, w, vec!["gauss".into()])?;
    let plane = grid.plane_mut(0);
    for y in 0..h {
        for x in 0..w {
            let (dx, dy) = (x as f64 - keypoint.0, y as f64 - keypoint.1);
            plane[y * w + x] = (-(dx * dx + dy * dy) / d).exp() as f32;
        }
    }
    Ok(grid)
}

/// Offset-regression weights: inside each disk, the Gaussian response of the
/// keypoint that owns the pixel; zero elsewhere. One channel per slot.
pub fn keycentroid_weights(scene: &SceneAnnotation, skeleton: &SkeletonSpec, cfg: &EncodeConfig) -> Result<FieldGrid> {
    let names = skeleton.keypoint_names.iter().map(|n| format!("w/{n}")).collect();
    let mut grid = FieldGrid::zeros(scene.height, scene.width, names)?;
    let d = cfg.gaussian_denominator();
    for j in 0..skeleton.len() {
        let mut cells = Vec::new();
        for_each_disk_owner(scene, j, cfg.disk_radius, |x, y, dx, dy, _| cells.push((x, y, dx, dy)));
        for (x, y, dx, dy) in cells {
            grid.set(j, y, x, (-(dx * dx + dy * dy) / d).exp() as f32);
        }
    }
    Ok(grid)
}

/// First anchor-priority slot with visibility 2, else the first with visibility 1.
pub fn select_anchor_keypoint(person: &PersonAnnotation, skeleton: &SkeletonSpec) -> Result<usize> {
    for wanted in [Visibility::Visible, Visibility::Occluded] {
        if let Some(&j) = skeleton
            .anchor_priority
            .iter()
            .find(|&&j| person.keypoints.get(j).is_some_and(|k| k.visibility == wanted))
        {
            return Ok(j);
        }
    }
    Err(Error::AnchorUnavailable)
}

/// Per-instance sigma used at encode time: half the equivalent-circle
/// radius, floored at `R / 2`.
pub fn instance_sigma(pixel_count: usize, disk_radius: f64) -> f64 {
    (disk_radius / 2.0).max(0.5 * (pixel_count as f64 / std::f64::consts::PI).sqrt())
}

/// One instance as the encoder sees it after overlap resolution.
#[derive(Debug, Clone)]
pub struct InstanceRegion {
    pub instance_id: u32,
    pub pixels: Bitmap,
    pub centroid: (f64, f64),
    pub anchor_fallback: bool,
}

/// Resolves overlapping masks front-to-back by ascending instance id and
/// picks each instance's centroid for the given mode.
pub fn instance_regions(
    scene: &SceneAnnotation,
    skeleton: &SkeletonSpec,
    mode: CentroidMode,
) -> Vec<InstanceRegion> {
    let (w, h) = (scene.width, scene.height);
    let mut claimed = vec![false; w * h];
    let mut out = Vec::new();
    for p in ordered_persons(scene) {
        let mut pixels = Bitmap::empty(w, h);
        for (x, y) in p.mask.pixels() {
            let i = y * w + x;
            if !claimed[i] {
                claimed[i] = true;
                pixels.set(x, y, true);
            }
        }
        let Some(mean) = pixels.centroid() else {
            out.push(InstanceRegion {
                instance_id: p.instance_id,
                pixels,
                centroid: (f64::NAN, f64::NAN),
                anchor_fallback: false,
            });
            continue;
        };
        let (centroid, anchor_fallback) = match mode {
            CentroidMode::Static => (mean, false),
            CentroidMode::Dynamic => match select_anchor_keypoint(p, skeleton) {
                Ok(j) => ((p.keypoints[j].x, p.keypoints[j].y), false),
                Err(_) => (mean, true),
            },
        };
        out.push(InstanceRegion {
            instance_id: p.instance_id,
            pixels,
            centroid,
            anchor_fallback,
        });
    }
    out
}

/// Instance embedding offsets `v = C - m` for every instance pixel `m`, the
/// centroid seed map, the per-instance sigma and the instance id map.
pub fn encode_maskcentroid(
    scene: &SceneAnnotation,
    skeleton: &SkeletonSpec,
    cfg: &EncodeConfig,
) -> Result<(FieldGrid, Vec<EncodeWarning>)> {
    let (w, h) = (scene.width, scene.height);
    let mut grid = FieldGrid::zeros(h, w, maskcentroid_channels())?;
    let mut warnings = Vec::new();
    for region in instance_regions(scene, skeleton, cfg.centroid_mode) {
        let n = region.pixels.count();
        if n == 0 {
            warnings.push(EncodeWarning::FullyOccluded {
                instance_id: region.instance_id,
            });
            continue;
        }
        if region.anchor_fallback {
            warnings.push(EncodeWarning::AnchorFallback {
                instance_id: region.instance_id,
            });
        }
        let (cx, cy) = region.centroid;
        let sigma = instance_sigma(n, cfg.disk_radius) as f32;
        for (x, y) in region.pixels.pixels() {
            grid.set(0, y, x, (cx - x as f64) as f32);
            grid.set(1, y, x, (cy - y as f64) as f32);
            grid.set(3, y, x, sigma);
            grid.set(4, y, x, region.instance_id as f32);
        }
        let sx = (cx.round().max(0.0) as usize).min(w - 1);
        let sy = (cy.round().max(0.0) as usize).min(h - 1);
        grid.set(2, sy, sx, 1.0);
    }
    Ok((grid, warnings))
}
