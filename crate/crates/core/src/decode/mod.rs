//! Field decoding: keypoint voting and peak extraction, anchor-driven pixel
//! clustering, and instance assembly.

mod assemble;
mod assignment;
mod cluster;
mod nms;
mod vote;

use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

pub use assemble::{assemble_instances, DecodedInstance, DecodedKeypoint};
pub use assignment::max_weight_assignment;
pub use cluster::{cluster_instances, phi, Anchor, Cluster};
pub use nms::{nms_peaks, KeypointCandidate};
pub use vote::{vote_keypoints, VoteMap};

use crate::config::{CentroidMode, DecodeConfig};
use crate::encode::{MC_OFF_X, MC_OFF_Y, MC_SEED, MC_SIGMA};
use crate::error::{Error, Result};
use crate::grid::FieldGrid;
use crate::mask::Bitmap;
use crate::skeleton::SkeletonSpec;

/// Wall time spent in each decode stage.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct StageTimes {
    pub vote: Duration,
    pub nms: Duration,
    pub cluster: Duration,
    pub assemble: Duration,
}

impl StageTimes {
    pub fn total(&self) -> Duration {
        self.vote + self.nms + self.cluster + self.assemble
    }
}

fn check_shapes(heatmaps: &FieldGrid, keycentroid: &FieldGrid, maskcentroid: &FieldGrid, skeleton: &SkeletonSpec) -> Result<()> {
    let dims = |g: &FieldGrid| (g.width(), g.height());
    if dims(heatmaps) != dims(keycentroid) || dims(heatmaps) != dims(maskcentroid) {
        return Err(Error::Schema(format!(
            "field sizes differ: heatmaps {:?}, keycentroid {:?}, maskcentroid {:?}",
            dims(heatmaps),
            dims(keycentroid),
            dims(maskcentroid)
        )));
    }
    if heatmaps.width() == 0 || heatmaps.height() == 0 {
        return Err(Error::Schema("fields have an empty canvas".into()));
    }
    if heatmaps.channel_count() != skeleton.len() {
        return Err(Error::Schema(format!(
            "{} heatmap channels for a {}-keypoint skeleton",
            heatmaps.channel_count(),
            skeleton.len()
        )));
    }
    for name in [MC_OFF_X, MC_OFF_Y, MC_SEED, MC_SIGMA] {
        maskcentroid.require_channel(name)?;
    }
    Ok(())
}

/// Maximum seed value in the 3x3 neighbourhood of `(x, y)`.
fn seed_support(seed: &[f32], w: usize, h: usize, x: f64, y: f64) -> f64 {
    let cx = (x.round().max(0.0) as usize).min(w - 1);
    let cy = (y.round().max(0.0) as usize).min(h - 1);
    let mut best = 0.0f32;
    for ny in cy.saturating_sub(1)..=(cy + 1).min(h - 1) {
        for nx in cx.saturating_sub(1)..=(cx + 1).min(w - 1) {
            best = best.max(seed[ny * w + nx]);
        }
    }
    best as f64
}

/// Seed-map local maxima at or above 0.5.
fn seed_peaks(seed: &[f32], w: usize, h: usize) -> Vec<(f64, f64, f64)> {
    let mut out = Vec::new();
    for y in 0..h {
        for x in 0..w {
            let v = seed[y * w + x];
            if v < 0.5 {
                continue;
            }
            let mut is_max = true;
            'n: for ny in y.saturating_sub(1)..=(y + 1).min(h - 1) {
                for nx in x.saturating_sub(1)..=(x + 1).min(w - 1) {
                    if seed[ny * w + nx] > v {
                        is_max = false;
                        break 'n;
                    }
                }
            }
            if is_max {
                out.push((x as f64, y as f64, v as f64));
            }
        }
    }
    out
}

/// Orders and deduplicates clustering anchors.
///
/// Dynamic mode: candidates of anchor-priority slots, ranked by seed-map
/// support, then score, then y, then x; seed peaks with no keypoint nearby
/// follow (instances encoded with the static fallback). Static mode: seed
/// peaks only. Anchors within `nms_radius` of a higher-ranked anchor are dropped.
pub fn derive_anchors(
    candidates: &[KeypointCandidate],
    maskcentroid: &FieldGrid,
    skeleton: &SkeletonSpec,
    cfg: &DecodeConfig,
) -> Result<Vec<Anchor>> {
    let (w, h) = (maskcentroid.width(), maskcentroid.height());
    let seed = maskcentroid.plane(maskcentroid.require_channel(MC_SEED)?);

    // (support, score, x, y)
    let mut ranked: Vec<(f64, f64, f64, f64)> = Vec::new();
    if cfg.centroid_mode == CentroidMode::Dynamic {
        let mut in_priority = vec![false; skeleton.len()];
        for &j in &skeleton.anchor_priority {
            in_priority[j] = true;
        }
        for c in candidates.iter().filter(|c| in_priority.get(c.slot) == Some(&true)) {
            ranked.push((seed_support(seed, w, h, c.x, c.y), c.score, c.x, c.y));
        }
    }
    for (x, y, v) in seed_peaks(seed, w, h) {
        ranked.push((v, 0.0, x, y));
    }
    ranked.sort_by(|a, b| {
        b.0.total_cmp(&a.0)
            .then(b.1.total_cmp(&a.1))
            .then(a.3.total_cmp(&b.3))
            .then(a.2.total_cmp(&b.2))
    });

    let r2 = cfg.nms_radius * cfg.nms_radius;
    let mut kept: Vec<Anchor> = Vec::new();
    // Bucketed lookup keeps deduplication linear in the candidate count.
    let cell = cfg.nms_radius.max(1.0);
    let mut buckets: std::collections::HashMap<(i64, i64), Vec<usize>> = Default::default();
    for (support, score, x, y) in ranked {
        let (bx, by) = ((x / cell).floor() as i64, (y / cell).floor() as i64);
        let near = (-1..=1).any(|dy| {
            (-1..=1).any(|dx| {
                buckets.get(&(bx + dx, by + dy)).is_some_and(|ids| {
                    ids.iter().any(|&i| {
                        let a = &kept[i];
                        (a.x - x).powi(2) + (a.y - y).powi(2) <= r2
                    })
                })
            })
        });
        if near {
            continue;
        }
        buckets.entry((bx, by)).or_default().push(kept.len());
        kept.push(Anchor {
            x,
            y,
            score: if score > 0.0 { score } else { support },
        });
    }
    Ok(kept)
}

/// Full decode with per-stage timings.
pub fn decode_timed(
    heatmaps: &FieldGrid,
    keycentroid: &FieldGrid,
    maskcentroid: &FieldGrid,
    skeleton: &SkeletonSpec,
    cfg: &DecodeConfig,
) -> Result<(Vec<DecodedInstance>, StageTimes)> {
    cfg.validate()?;
    check_shapes(heatmaps, keycentroid, maskcentroid, skeleton)?;
    let mut times = StageTimes::default();

    let candidates = if cfg.parallel_voting {
        let t = Instant::now();
        let votes = vote_keypoints(heatmaps, keycentroid, cfg)?;
        times.vote = t.elapsed();
        let t = Instant::now();
        let candidates = nms_peaks(&votes, cfg);
        times.nms = t.elapsed();
        candidates
    } else {
        // Slot by slot through one reused buffer; same result as the two
        // whole-map stages, without touching empty cells.
        vote::check_vote_inputs(heatmaps, keycentroid)?;
        let (w, h) = (heatmaps.width(), heatmaps.height());
        let mut buf = vote::VoteBuffer::new(w, h);
        let mut candidates = Vec::new();
        for j in 0..heatmaps.channel_count() {
            let t = Instant::now();
            buf.vote(heatmaps, keycentroid, j, cfg);
            times.vote += t.elapsed();
            let t = Instant::now();
            candidates.extend(nms::slot_peaks(&buf.plane, w, h, j, cfg, Some(&buf.touched)));
            buf.clear();
            times.nms += t.elapsed();
        }
        candidates
    };

    let t = Instant::now();
    let anchors = derive_anchors(&candidates, maskcentroid, skeleton, cfg)?;
    let clusters = cluster_instances(maskcentroid, &anchors, cfg)?;
    times.cluster = t.elapsed();

    let t = Instant::now();
    let instances = assemble_instances(&candidates, &clusters, skeleton, cfg);
    times.assemble = t.elapsed();
    Ok((instances, times))
}

/// Recovers person instances (keypoints and masks) from the three field grids.
pub fn decode(
    heatmaps: &FieldGrid,
    keycentroid: &FieldGrid,
    maskcentroid: &FieldGrid,
    skeleton: &SkeletonSpec,
    cfg: &DecodeConfig,
) -> Result<Vec<DecodedInstance>> {
    decode_timed(heatmaps, keycentroid, maskcentroid, skeleton, cfg).map(|(d, _)| d)
}

/// Detections for one canvas, as exchanged in detections JSON.
#[derive(Debug, Clone, PartialEq)]
pub struct Detections {
    pub width: usize,
    pub height: usize,
    pub instances: Vec<DecodedInstance>,
}

#[derive(Serialize, Deserialize)]
struct InstanceJson {
    score: f64,
    anchor: [f64; 2],
    keypoints: Vec<[f64; 3]>,
    mask_rle: Vec<u64>,
}

#[derive(Serialize, Deserialize)]
struct DetectionsJson {
    width: usize,
    height: usize,
    instances: Vec<InstanceJson>,
}

impl Detections {
    /// Absent keypoints serialize as `[0, 0, 0]`.
    pub fn to_json(&self) -> String {
        let raw = DetectionsJson {
            width: self.width,
            height: self.height,
            instances: self
                .instances
                .iter()
                .map(|d| InstanceJson {
                    score: d.score,
                    anchor: [d.anchor.0, d.anchor.1],
                    keypoints: d
                        .keypoints
                        .iter()
                        .map(|k| if k.present { [k.x, k.y, k.score] } else { [0.0; 3] })
                        .collect(),
                    mask_rle: d.mask.to_rle(),
                })
                .collect(),
        };
        serde_json::to_string(&raw).expect("detections serialization cannot fail")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let raw: DetectionsJson = serde_json::from_str(text)?;
        let instances = raw
            .instances
            .into_iter()
            .enumerate()
            .map(|(i, d)| {
                let mask = Bitmap::from_rle(raw.width, raw.height, &d.mask_rle)
                    .map_err(|e| Error::Mask(format!("instance {i}: {e}")))?;
                Ok(DecodedInstance {
                    keypoints: d
                        .keypoints
                        .iter()
                        .map(|&[x, y, s]| DecodedKeypoint {
                            x,
                            y,
                            score: s,
                            present: s > 0.0,
                        })
                        .collect(),
                    mask,
                    anchor: (d.anchor[0], d.anchor[1]),
                    score: d.score,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            width: raw.width,
            height: raw.height,
            instances,
        })
    }
}
