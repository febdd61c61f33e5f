//! Offset-field Hough voting.

use rayon::prelude::*;

use crate::config::DecodeConfig;
use crate::error::{Error, Result};
use crate::grid::FieldGrid;

/// Per-slot accumulated vote mass, row-major planes.
#[derive(Debug, Clone, PartialEq)]
pub struct VoteMap {
    pub height: usize,
    pub width: usize,
    pub slots: Vec<Vec<f64>>,
}

impl VoteMap {
    pub fn slot_count(&self) -> usize {
        self.slots.len()
    }

    #[inline]
    pub fn get(&self, slot: usize, x: usize, y: usize) -> f64 {
        self.slots[slot][y * self.width + x]
    }

    pub fn total_mass(&self, slot: usize) -> f64 {
        self.slots[slot].iter().sum()
    }
}

/// One slot's vote plane plus the cells that received nonzero mass, so the
/// plane can be scanned and cleared in time proportional to the voters.
pub(crate) struct VoteBuffer {
    pub width: usize,
    pub height: usize,
    pub plane: Vec<f64>,
    pub touched: Vec<usize>,
}

impl VoteBuffer {
    pub fn new(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            plane: vec![0.0; width * height],
            touched: Vec::new(),
        }
    }

    pub fn clear(&mut self) {
        for &i in &self.touched {
            self.plane[i] = 0.0;
        }
        self.touched.clear();
    }

    #[inline]
    fn add(&mut self, i: usize, mass: f64) {
        let v = &mut self.plane[i];
        if *v == 0.0 && mass > 0.0 {
            self.touched.push(i);
        }
        *v += mass;
    }

    /// Distributes `mass` at `(tx, ty)` bilinearly over the four surrounding
    /// cells. Targets outside the canvas are clamped to the border first.
    #[inline]
    fn splat(&mut self, tx: f64, ty: f64, mass: f64) {
        let (w, h) = (self.width, self.height);
        let tx = tx.clamp(0.0, (w - 1) as f64);
        let ty = ty.clamp(0.0, (h - 1) as f64);
        // Truncation is floor here: both coordinates are non-negative.
        let x0 = tx as usize;
        let y0 = ty as usize;
        let fx = tx - x0 as f64;
        let fy = ty - y0 as f64;
        let x1 = (x0 + 1).min(w - 1);
        let y1 = (y0 + 1).min(h - 1);
        self.add(y0 * w + x0, mass * (1.0 - fx) * (1.0 - fy));
        self.add(y0 * w + x1, mass * fx * (1.0 - fy));
        self.add(y1 * w + x0, mass * (1.0 - fx) * fy);
        self.add(y1 * w + x1, mass * fx * fy);
    }

    /// Accumulates slot `j` on top of the current contents.
    pub fn vote(&mut self, heatmaps: &FieldGrid, keycentroid: &FieldGrid, j: usize, cfg: &DecodeConfig) {
        let w = self.width;
        let probs = heatmaps.plane(j);
        let dxs = keycentroid.plane(2 * j);
        let dys = keycentroid.plane(2 * j + 1);
        let scale = if cfg.offset_normalization {
            cfg.disk_radius
        } else {
            1.0
        };
        let threshold = cfg.heatmap_threshold;
        for (y, row) in probs.chunks_exact(w).enumerate() {
            for (x, &p) in row.iter().enumerate() {
                let p = p as f64;
                if p < threshold {
                    continue;
                }
                let i = y * w + x;
                let (x, y) = (x as f64, y as f64);
                let (tx, ty) = if cfg.keypoint_voting {
                    (x + scale * dxs[i] as f64, y + scale * dys[i] as f64)
                } else {
                    (x, y)
                };
                self.splat(tx, ty, p);
            }
        }
    }
}

fn vote_slot(heatmaps: &FieldGrid, keycentroid: &FieldGrid, j: usize, cfg: &DecodeConfig) -> Vec<f64> {
    let mut buf = VoteBuffer::new(heatmaps.width(), heatmaps.height());
    buf.vote(heatmaps, keycentroid, j, cfg);
    buf.plane
}

pub(crate) fn check_vote_inputs(heatmaps: &FieldGrid, keycentroid: &FieldGrid) -> Result<()> {
    if heatmaps.height() != keycentroid.height() || heatmaps.width() != keycentroid.width() {
        return Err(Error::Schema(format!(
            "heatmaps are {}x{} but keycentroid is {}x{}",
            heatmaps.width(),
            heatmaps.height(),
            keycentroid.width(),
            keycentroid.height()
        )));
    }
    if keycentroid.channel_count() != 2 * heatmaps.channel_count() {
        return Err(Error::Schema(format!(
            "keycentroid has {} channels, expected {} for {} heatmap channels",
            keycentroid.channel_count(),
            2 * heatmaps.channel_count(),
            heatmaps.channel_count()
        )));
    }
    Ok(())
}

/// Every heatmap pixel at or above the threshold casts its probability as a
/// vote at the position its offset points to.
pub fn vote_keypoints(heatmaps: &FieldGrid, keycentroid: &FieldGrid, cfg: &DecodeConfig) -> Result<VoteMap> {
    check_vote_inputs(heatmaps, keycentroid)?;
    let slots = 0..heatmaps.channel_count();
    let slots: Vec<Vec<f64>> = if cfg.parallel_voting {
        slots
            .into_par_iter()
            .map(|j| vote_slot(heatmaps, keycentroid, j, cfg))
            .collect()
    } else {
        slots.map(|j| vote_slot(heatmaps, keycentroid, j, cfg)).collect()
    };
    Ok(VoteMap {
        height: heatmaps.height(),
        width: heatmaps.width(),
        slots,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grids(w: usize, h: usize, slots: usize) -> (FieldGrid, FieldGrid) {
        let hm = FieldGrid::zeros(h, w, (0..slots).map(|j| format!("hm/{j}")).collect()).unwrap();
        let kc = FieldGrid::zeros(h, w, (0..2 * slots).map(|j| format!("kc/{j}")).collect()).unwrap();
        (hm, kc)
    }

    #[test]
    fn single_voter_lands_on_target() {
        let (mut hm, mut kc) = grids(20, 20, 1);
        hm.set(0, 5, 5, 1.0);
        // Points at (8.25, 6.5) in normalized units with R = 32.
        kc.set(0, 5, 5, 3.25 / 32.0);
        kc.set(1, 5, 5, 1.5 / 32.0);
        let votes = vote_keypoints(&hm, &kc, &DecodeConfig::default()).unwrap();
        assert!((votes.total_mass(0) - 1.0).abs() < 1e-12);
        assert!((votes.get(0, 8, 6) - 0.75 * 0.5).abs() < 1e-12);
        assert!((votes.get(0, 9, 6) - 0.25 * 0.5).abs() < 1e-12);
        assert!((votes.get(0, 8, 7) - 0.75 * 0.5).abs() < 1e-12);
        assert!((votes.get(0, 9, 7) - 0.25 * 0.5).abs() < 1e-12);
    }

    #[test]
    fn zero_heatmap_zero_votes() {
        let (hm, kc) = grids(8, 8, 2);
        let votes = vote_keypoints(&hm, &kc, &DecodeConfig::default()).unwrap();
        assert!(votes.slots.iter().all(|p| p.iter().all(|v| *v == 0.0)));
    }

    #[test]
    fn two_half_voters_same_cell() {
        let (mut hm, mut kc) = grids(10, 10, 1);
        let cfg = DecodeConfig::default().with_offset_normalization(false);
        for (x, y) in [(2usize, 2usize), (6, 5)] {
            hm.set(0, y, x, 0.5);
            kc.set(0, y, x, 4.0 - x as f32);
            kc.set(1, y, x, 3.0 - y as f32);
        }
        let votes = vote_keypoints(&hm, &kc, &cfg).unwrap();
        // Brute-force accumulation of both voters at the integer target (4, 3).
        let brute: f64 = [0.5f64, 0.5].iter().sum();
        assert_eq!(votes.get(0, 4, 3), brute);
    }

    #[test]
    fn out_of_canvas_targets_clamp_to_border() {
        let (mut hm, mut kc) = grids(10, 10, 1);
        hm.set(0, 5, 5, 0.8);
        kc.set(0, 5, 5, -1.0);
        kc.set(1, 5, 5, 1.0);
        let votes = vote_keypoints(&hm, &kc, &DecodeConfig::default()).unwrap();
        assert!((votes.get(0, 0, 9) - 0.8f32 as f64).abs() < 1e-12);
    }

    #[test]
    fn channel_mismatch_is_schema_error() {
        let (hm, _) = grids(10, 10, 2);
        let (_, kc) = grids(10, 10, 1);
        assert!(matches!(
            vote_keypoints(&hm, &kc, &DecodeConfig::default()),
            Err(Error::Schema(_))
        ));
    }

    #[test]
    fn parallel_matches_sequential() {
        let (mut hm, mut kc) = grids(16, 12, 3);
        for (i, v) in hm.data_mut().iter_mut().enumerate() {
            *v = ((i * 37) % 11) as f32 / 10.0;
        }
        for (i, v) in kc.data_mut().iter_mut().enumerate() {
            *v = (((i * 13) % 7) as f32 - 3.0) / 16.0;
        }
        let seq = vote_keypoints(&hm, &kc, &DecodeConfig::default()).unwrap();
        let cfg = DecodeConfig {
            parallel_voting: true,
            ..Default::default()
        };
        assert_eq!(seq, vote_keypoints(&hm, &kc, &cfg).unwrap());
    }
}
