//! Grouping keypoint candidates into clustered instances.

use crate::config::DecodeConfig;
use crate::mask::Bitmap;
use crate::skeleton::SkeletonSpec;

use super::assignment::max_weight_assignment;
use super::cluster::{Anchor, Cluster};
use super::nms::{rank_order, KeypointCandidate};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecodedKeypoint {
    pub x: f64,
    pub y: f64,
    pub score: f64,
    pub present: bool,
}

impl DecodedKeypoint {
    pub const MISSING: DecodedKeypoint = DecodedKeypoint {
        x: 0.0,
        y: 0.0,
        score: 0.0,
        present: false,
    };
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecodedInstance {
    pub keypoints: Vec<DecodedKeypoint>,
    pub mask: Bitmap,
    pub anchor: (f64, f64),
    /// Mean score of the present keypoints; 0 for mask-only instances.
    pub score: f64,
}

/// Builds a canvas-sized map of cluster indices (`u32::MAX` for none).
pub(crate) fn label_map(clusters: &[Cluster], w: usize, h: usize) -> Vec<u32> {
    let mut labels = vec![u32::MAX; w * h];
    for (k, c) in clusters.iter().enumerate() {
        for (x, y) in c.mask.pixels() {
            let l = &mut labels[y * w + x];
            assert_eq!(*l, u32::MAX, "clusters overlap at ({x}, {y})");
            *l = k as u32;
        }
    }
    labels
}

/// Distance from `(cx, cy)` to the nearest pixel of each cluster within `reach`.
fn nearby_clusters(labels: &[u32], w: usize, h: usize, cx: f64, cy: f64, reach: f64, out: &mut Vec<(usize, f64)>) {
    out.clear();
    let (x0, x1) = ((cx - reach).ceil().max(0.0), (cx + reach).floor().min(w as f64 - 1.0));
    let (y0, y1) = ((cy - reach).ceil().max(0.0), (cy + reach).floor().min(h as f64 - 1.0));
    if x1 < x0 || y1 < y0 {
        return;
    }
    for y in y0 as usize..=y1 as usize {
        for x in x0 as usize..=x1 as usize {
            let l = labels[y * w + x];
            if l == u32::MAX {
                continue;
            }
            let d = ((x as f64 - cx).powi(2) + (y as f64 - cy).powi(2)).sqrt();
            if d > reach {
                continue;
            }
            match out.iter_mut().find(|(k, _)| *k == l as usize) {
                Some(entry) => entry.1 = entry.1.min(d),
                None => out.push((l as usize, d)),
            }
        }
    }
}

/// Some maximum-weight matching only uses, for every row, one of that row's
/// `rows` heaviest columns; keeping the union of those bounds the problem size.
fn prune_columns(weights: &[Vec<f64>]) -> Vec<usize> {
    let rows = weights.len();
    let mut keep = std::collections::BTreeSet::new();
    for row in weights {
        let mut order: Vec<usize> = (0..row.len()).filter(|&j| row[j] > 0.0).collect();
        order.sort_by(|&a, &b| row[b].total_cmp(&row[a]).then(a.cmp(&b)));
        keep.extend(order.into_iter().take(rows));
    }
    keep.into_iter().collect()
}

/// Assigns each candidate to an instance whose mask lies within
/// `grouping_dilation` of it. Within a slot, candidates and instances are
/// paired by maximum total score, so the best candidate inside a mask wins
/// while an occluded keypoint can still reach its own instance when the
/// occluder already holds a stronger candidate. Ties prefer the nearer mask.
pub fn assemble_instances(
    candidates: &[KeypointCandidate],
    clusters: &[Cluster],
    skeleton: &SkeletonSpec,
    cfg: &DecodeConfig,
) -> Vec<DecodedInstance> {
    let Some(first) = clusters.first() else {
        return Vec::new();
    };
    let (w, h) = (first.mask.width(), first.mask.height());
    let labels = label_map(clusters, w, h);
    let reach = cfg.grouping_dilation.max(0.5);
    let mut keypoints = vec![vec![DecodedKeypoint::MISSING; skeleton.len()]; clusters.len()];

    let mut near = Vec::new();
    for slot in 0..skeleton.len() {
        let mut slot_cands: Vec<&KeypointCandidate> =
            candidates.iter().filter(|c| c.slot == slot).collect();
        slot_cands.sort_by(|a, b| rank_order(a.score, a.y, a.x, b.score, b.y, b.x));
        let mut columns: Vec<(&KeypointCandidate, Vec<(usize, f64)>)> = Vec::new();
        for c in slot_cands {
            nearby_clusters(&labels, w, h, c.x, c.y, reach, &mut near);
            if !near.is_empty() {
                columns.push((c, near.clone()));
            }
        }
        if columns.is_empty() {
            continue;
        }
        let weights: Vec<Vec<f64>> = (0..clusters.len())
            .map(|k| {
                columns
                    .iter()
                    .map(|(c, near)| {
                        near.iter()
                            .find(|(l, _)| *l == k)
                            .map_or(0.0, |(_, d)| c.score * (1.0 - 1e-9 * (1.0 + d)))
                    })
                    .collect()
            })
            .collect();
        let kept = prune_columns(&weights);
        let pruned: Vec<Vec<f64>> = weights
            .iter()
            .map(|row| kept.iter().map(|&j| row[j]).collect())
            .collect();
        for (k, col) in max_weight_assignment(&pruned).into_iter().enumerate() {
            if let Some(col) = col {
                let c = columns[kept[col]].0;
                keypoints[k][slot] = DecodedKeypoint {
                    x: c.x,
                    y: c.y,
                    score: c.score,
                    present: true,
                };
            }
        }
    }

    clusters
        .iter()
        .zip(keypoints)
        .map(|(cluster, kps)| {
            let present: Vec<f64> = kps.iter().filter(|k| k.present).map(|k| k.score).collect();
            let score = if present.is_empty() {
                0.0
            } else {
                present.iter().sum::<f64>() / present.len() as f64
            };
            let Anchor { x, y, .. } = cluster.anchor;
            DecodedInstance {
                keypoints: kps,
                mask: cluster.mask.clone(),
                anchor: (x, y),
                score,
            }
        })
        .collect()
}
