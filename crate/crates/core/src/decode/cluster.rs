//! Greedy pixel clustering around instance anchors in embedding space.

use crate::config::{DecodeConfig, SigmaMode};
use crate::encode::{MC_OFF_X, MC_OFF_Y, MC_SIGMA};
use crate::error::{Error, Result};
use crate::grid::FieldGrid;
use crate::mask::Bitmap;

/// Gaussian margin `exp(-|e - c|^2 / (2 sigma^2))`.
pub fn phi(e: (f64, f64), centroid: (f64, f64), sigma: f64) -> Result<f64> {
    if !(sigma > 0.0) {
        return Err(Error::Domain(format!("sigma must be > 0, got {sigma}")));
    }
    let (dx, dy) = (e.0 - centroid.0, e.1 - centroid.1);
    Ok((-(dx * dx + dy * dy) / (2.0 * sigma * sigma)).exp())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Anchor {
    pub x: f64,
    pub y: f64,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Cluster {
    pub mask: Bitmap,
    pub anchor: Anchor,
    /// Mean margin over the assigned pixels.
    pub score: f64,
}

/// Assigns pixels to anchors in the given order. Each anchor takes every
/// still-unassigned foreground pixel whose embedding `m + v` scores above
/// `phi_threshold`; clusters smaller than `min_instance_pixels` are released.
pub fn cluster_instances(maskcentroid: &FieldGrid, anchors: &[Anchor], cfg: &DecodeConfig) -> Result<Vec<Cluster>> {
    let ox = maskcentroid.require_channel(MC_OFF_X)?;
    let oy = maskcentroid.require_channel(MC_OFF_Y)?;
    let sc = maskcentroid.require_channel(MC_SIGMA)?;
    let (w, h) = (maskcentroid.width(), maskcentroid.height());
    let (offx, offy, sigma) = (maskcentroid.plane(ox), maskcentroid.plane(oy), maskcentroid.plane(sc));

    let per_pixel = cfg.sigma_mode == SigmaMode::PerPixel;
    let mut unassigned: Vec<u32> = (0..w * h)
        .filter(|&i| {
            let s = sigma[i];
            if per_pixel {
                s > 0.0
            } else {
                s > 0.0 || offx[i] != 0.0 || offy[i] != 0.0
            }
        })
        .map(|i| i as u32)
        .collect();

    // phi > t  <=>  d^2 < -2 sigma^2 ln t
    let log_t = -2.0 * cfg.phi_threshold.ln();
    let mut out = Vec::new();
    let mut members: Vec<u32> = Vec::new();
    let mut taken = vec![false; w * h];
    for anchor in anchors {
        if out.len() >= cfg.max_instances || unassigned.is_empty() {
            break;
        }
        let anchor_sigma = if per_pixel {
            None
        } else {
            let ax = (anchor.x.round().max(0.0) as usize).min(w - 1);
            let ay = (anchor.y.round().max(0.0) as usize).min(h - 1);
            Some(sigma[ay * w + ax] as f64).filter(|s| *s > 0.0)
        };
        members.clear();
        let mut phi_sum = 0.0;
        for &i in &unassigned {
            let i = i as usize;
            let s = anchor_sigma.unwrap_or(sigma[i] as f64);
            if s <= 0.0 {
                continue;
            }
            let ex = (i % w) as f64 + offx[i] as f64;
            let ey = (i / w) as f64 + offy[i] as f64;
            let (dx, dy) = (ex - anchor.x, ey - anchor.y);
            let d2 = dx * dx + dy * dy;
            if d2 < log_t * s * s {
                members.push(i as u32);
                phi_sum += (-d2 / (2.0 * s * s)).exp();
            }
        }
        if members.len() < cfg.min_instance_pixels || members.is_empty() {
            continue;
        }
        let mut mask = Bitmap::empty(w, h);
        for &i in &members {
            taken[i as usize] = true;
            mask.set(i as usize % w, i as usize / w, true);
        }
        unassigned.retain(|&i| !taken[i as usize]);
        out.push(Cluster {
            mask,
            anchor: *anchor,
            score: phi_sum / members.len() as f64,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::annotation::{Keypoint, PersonAnnotation, SceneAnnotation};
    use crate::config::{CentroidMode, EncodeConfig};
    use crate::encode::encode_maskcentroid;
    use crate::skeleton::SkeletonSpec;

    #[test]
    fn phi_values() {
        assert_eq!(phi((3.0, 4.0), (3.0, 4.0), 2.0).unwrap(), 1.0);
        let sigma = 7.0;
        let d = sigma * (2.0 * std::f64::consts::LN_2).sqrt();
        // exp(-d^2 / 2 sigma^2) = exp(-ln 2) = 1/2
        let oracle = 1.0 / 2.0;
        assert!((phi((d, 0.0), (0.0, 0.0), sigma).unwrap() - oracle).abs() < 1e-12);
        assert!(phi((10.0 * sigma, 0.0), (0.0, 0.0), sigma).unwrap() < 1e-21);
        assert!(matches!(phi((0.0, 0.0), (0.0, 0.0), 0.0), Err(Error::Domain(_))));
        assert!(phi((0.0, 0.0), (0.0, 0.0), -1.0).is_err());
    }

    fn rect(w: usize, h: usize, x0: usize, y0: usize, x1: usize, y1: usize) -> Bitmap {
        let mut m = Bitmap::empty(w, h);
        for y in y0..y1 {
            for x in x0..x1 {
                m.set(x, y, true);
            }
        }
        m
    }

    fn scene_of(masks: Vec<Bitmap>) -> SceneAnnotation {
        let (w, h) = (masks[0].width(), masks[0].height());
        SceneAnnotation {
            width: w,
            height: h,
            persons: masks
                .into_iter()
                .enumerate()
                .map(|(k, mask)| PersonAnnotation {
                    instance_id: k as u32 + 1,
                    keypoints: vec![Keypoint::absent()],
                    mask,
                })
                .collect(),
        }
    }

    fn static_cfg() -> EncodeConfig {
        EncodeConfig {
            centroid_mode: CentroidMode::Static,
            ..Default::default()
        }
    }

    fn skeleton1() -> SkeletonSpec {
        SkeletonSpec::new(vec!["a".into()], vec![0.1], vec![0]).unwrap()
    }

    #[test]
    fn single_instance_round_trip() {
        let gt = rect(60, 50, 10, 8, 30, 40);
        let scene = scene_of(vec![gt.clone()]);
        let (mc, _) = encode_maskcentroid(&scene, &skeleton1(), &static_cfg()).unwrap();
        let (cx, cy) = gt.centroid().unwrap();
        let clusters = cluster_instances(
            &mc,
            &[Anchor {
                x: cx,
                y: cy,
                score: 1.0,
            }],
            &DecodeConfig::default(),
        )
        .unwrap();
        assert_eq!(clusters.len(), 1);
        assert_eq!(clusters[0].mask, gt);
        assert!(clusters[0].score > 0.999);
    }

    #[test]
    fn far_anchor_yields_nothing() {
        let gt = rect(200, 50, 10, 8, 30, 40);
        let scene = scene_of(vec![gt]);
        let (mc, _) = encode_maskcentroid(&scene, &skeleton1(), &static_cfg()).unwrap();
        // sigma is 16 here; 10 sigma away.
        let clusters = cluster_instances(
            &mc,
            &[Anchor {
                x: 20.0 + 160.0,
                y: 24.0,
                score: 1.0,
            }],
            &DecodeConfig::default(),
        )
        .unwrap();
        assert!(clusters.is_empty());
    }

    #[test]
    fn two_disjoint_instances() {
        let a = rect(160, 60, 5, 5, 30, 50);
        let b = rect(160, 60, 100, 10, 140, 40);
        let scene = scene_of(vec![a.clone(), b.clone()]);
        let (mc, _) = encode_maskcentroid(&scene, &skeleton1(), &static_cfg()).unwrap();
        let anchors: Vec<Anchor> = [&a, &b]
            .iter()
            .map(|m| {
                let (x, y) = m.centroid().unwrap();
                Anchor { x, y, score: 1.0 }
            })
            .collect();
        let clusters = cluster_instances(&mc, &anchors, &DecodeConfig::default()).unwrap();
        assert_eq!(clusters.len(), 2);
        assert_eq!(clusters[0].mask, a);
        assert_eq!(clusters[1].mask, b);
        let overlap = (0..160 * 60)
            .filter(|&i| clusters[0].mask.bits()[i] && clusters[1].mask.bits()[i])
            .count();
        assert_eq!(overlap, 0);
    }

    #[test]
    fn empty_anchor_list() {
        let mc = FieldGrid::zeros(4, 4, crate::encode::maskcentroid_channels()).unwrap();
        assert!(cluster_instances(&mc, &[], &DecodeConfig::default()).unwrap().is_empty());
    }

    #[test]
    fn small_clusters_released_to_later_anchors() {
        let a = rect(60, 60, 10, 10, 16, 16); // 36 pixels < 64
        let scene = scene_of(vec![a.clone()]);
        let (mc, _) = encode_maskcentroid(&scene, &skeleton1(), &static_cfg()).unwrap();
        let (cx, cy) = a.centroid().unwrap();
        let anchor = Anchor {
            x: cx,
            y: cy,
            score: 1.0,
        };
        assert!(cluster_instances(&mc, &[anchor], &DecodeConfig::default())
            .unwrap()
            .is_empty());
        let cfg = DecodeConfig {
            min_instance_pixels: 10,
            ..Default::default()
        };
        assert_eq!(cluster_instances(&mc, &[anchor], &cfg).unwrap().len(), 1);
    }
}
