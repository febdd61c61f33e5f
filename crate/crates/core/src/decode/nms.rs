//! Peak extraction from vote maps.

use std::cmp::Ordering;

use crate::config::DecodeConfig;

use super::vote::VoteMap;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KeypointCandidate {
    pub slot: usize,
    pub x: f64,
    pub y: f64,
    /// `m / (1 + m)` for the 3x3 vote mass `m` around the peak.
    pub score: f64,
}

/// Descending score, then ascending y, then ascending x.
pub fn rank_order(a_score: f64, a_y: f64, a_x: f64, b_score: f64, b_y: f64, b_x: f64) -> Ordering {
    b_score
        .total_cmp(&a_score)
        .then(a_y.total_cmp(&b_y))
        .then(a_x.total_cmp(&b_x))
}

/// Cells with `v > 0` (and at least `min_value`) and no larger neighbor in
/// their 3x3 neighborhood.
/// `cells` restricts the scan to a superset of the nonzero cells.
fn local_maxima(plane: &[f64], w: usize, h: usize, min_value: f64, cells: Option<&[usize]>) -> Vec<(f64, usize, usize)> {
    let mut maxima = Vec::new();
    let mut visit = |i: usize| {
        let v = plane[i];
        if v <= 0.0 || v < min_value {
            return;
        }
        let (x, y) = (i % w, i / w);
        let (x0, x1) = (x.saturating_sub(1), (x + 1).min(w - 1));
        let (y0, y1) = (y.saturating_sub(1), (y + 1).min(h - 1));
        if (y0..=y1).all(|ny| plane[ny * w + x0..=ny * w + x1].iter().all(|&n| n <= v)) {
            maxima.push((v, x, y));
        }
    };
    match cells {
        Some(cells) => cells.iter().for_each(|&i| visit(i)),
        None => (0..w * h).for_each(visit),
    }
    maxima
}

fn refine(plane: &[f64], w: usize, h: usize, x: usize, y: usize) -> (f64, f64, f64) {
    let (mut m, mut sx, mut sy) = (0.0, 0.0, 0.0);
    for ny in y.saturating_sub(1)..=(y + 1).min(h - 1) {
        for nx in x.saturating_sub(1)..=(x + 1).min(w - 1) {
            let v = plane[ny * w + nx];
            m += v;
            sx += v * nx as f64;
            sy += v * ny as f64;
        }
    }
    (m, sx / m, sy / m)
}

pub(crate) fn slot_peaks(
    plane: &[f64],
    w: usize,
    h: usize,
    slot: usize,
    cfg: &DecodeConfig,
    cells: Option<&[usize]>,
) -> Vec<KeypointCandidate> {
    // A local maximum v bounds its 3x3 mass by 9v, so maxima that cannot reach
    // the score threshold are skipped; everything they could suppress is weaker.
    let t = cfg.candidate_score_threshold;
    let min_mass = t / (1.0 - t);
    let mut maxima = local_maxima(plane, w, h, min_mass / 9.0 * (1.0 - 1e-12), cells);
    maxima.sort_unstable_by(|a, b| rank_order(a.0, a.2 as f64, a.1 as f64, b.0, b.2 as f64, b.1 as f64));

    // Selected peaks are bucketed on a grid of cell size >= r, so a query
    // only inspects the 3x3 surrounding buckets.
    let r = cfg.nms_radius;
    let cell = (r.ceil() as usize).max(1);
    let (gw, gh) = (w.div_ceil(cell), h.div_ceil(cell));
    let mut buckets: Vec<Vec<(usize, usize)>> = vec![Vec::new(); gw * gh];
    let mut out = Vec::new();
    for (_, x, y) in maxima {
        let (bx, by) = (x / cell, y / cell);
        let suppressed = (by.saturating_sub(1)..=(by + 1).min(gh - 1)).any(|qy| {
            (bx.saturating_sub(1)..=(bx + 1).min(gw - 1)).any(|qx| {
                buckets[qy * gw + qx].iter().any(|&(px, py)| {
                    let (dx, dy) = (px as f64 - x as f64, py as f64 - y as f64);
                    dx * dx + dy * dy <= r * r
                })
            })
        });
        if suppressed {
            continue;
        }
        buckets[by * gw + bx].push((x, y));
        let (m, sx, sy) = refine(plane, w, h, x, y);
        let score = (m / (1.0 + m)).clamp(0.0, 1.0);
        if score >= cfg.candidate_score_threshold {
            out.push(KeypointCandidate {
                slot,
                x: sx,
                y: sy,
                score,
            });
        }
    }
    out
}

/// Greedy per-slot non-maximum suppression over local maxima of the vote
/// map. Candidates come out grouped by slot, strongest first.
pub fn nms_peaks(votes: &VoteMap, cfg: &DecodeConfig) -> Vec<KeypointCandidate> {
    let (w, h) = (votes.width, votes.height);
    if w == 0 || h == 0 {
        return Vec::new();
    }
    votes
        .slots
        .iter()
        .enumerate()
        .flat_map(|(j, plane)| slot_peaks(plane, w, h, j, cfg, None))
        .collect()
}
