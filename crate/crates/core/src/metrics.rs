//! COCO-style evaluation: OKS, mask IoU and 101-point interpolated AP.

use serde::{Deserialize, Serialize};

use crate::annotation::{PersonAnnotation, SceneAnnotation};
use crate::decode::{DecodedInstance, DecodedKeypoint};
use crate::error::{Error, Result};
pub use crate::mask::mask_iou;
use crate::skeleton::SkeletonSpec;

/// The COCO threshold ladder 0.50, 0.55, ..., 0.95.
pub fn coco_thresholds() -> Vec<f64> {
    (0..10).map(|i| 0.5 + 0.05 * i as f64).collect()
}

/// Object keypoint similarity against one ground-truth person. Detected
/// keypoints marked not present contribute zero; 0 when the ground truth has
/// no labeled keypoints.
pub fn oks(det: &[DecodedKeypoint], gt: &PersonAnnotation, area: f64, skeleton: &SkeletonSpec) -> f64 {
    let mut sum = 0.0;
    let mut labeled = 0usize;
    for (j, g) in gt.labeled_keypoints() {
        labeled += 1;
        let Some(d) = det.get(j).filter(|d| d.present) else {
            continue;
        };
        let k = skeleton.oks_falloff[j];
        let d2 = (d.x - g.x).powi(2) + (d.y - g.y).powi(2);
        sum += (-d2 / (2.0 * area * k * k)).exp();
    }
    if labeled == 0 {
        0.0
    } else {
        sum / labeled as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SimilarityKind {
    Oks,
    MaskIou,
}

/// One image's scored detections and their similarity to each ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageSimilarities {
    pub scores: Vec<f64>,
    /// `similarity[d][g]`
    pub similarity: Vec<Vec<f64>>,
    pub gt_count: usize,
    /// Ground-truth ids, parallel to the similarity columns.
    pub gt_ids: Vec<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdAp {
    pub threshold: f64,
    pub ap: f64,
    pub recall: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApSummary {
    pub per_threshold: Vec<ThresholdAp>,
    /// Mean AP over the thresholds.
    pub map: f64,
}

impl ApSummary {
    pub fn at(&self, threshold: f64) -> Option<&ThresholdAp> {
        self.per_threshold
            .iter()
            .find(|t| (t.threshold - threshold).abs() < 1e-9)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Match {
    pub detection: usize,
    pub gt_id: u32,
    pub similarity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrPoint {
    pub threshold: f64,
    pub recall: f64,
    pub precision: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ApOutcome {
    pub summary: ApSummary,
    /// Per-image matches at the first threshold.
    pub matches: Vec<Vec<Match>>,
    pub pr_points: Vec<PrPoint>,
}

fn by_score_desc(scores: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    order
}

/// Greedy matching at threshold `t`: detections in descending score take the
/// unmatched ground truth with the highest similarity `>= t`, ties to the
/// lower ground-truth index. Returns `matched gt` per detection.
pub fn greedy_match(image: &ImageSimilarities, t: f64) -> Vec<Option<usize>> {
    let mut gt_taken = vec![false; image.gt_count];
    let mut out = vec![None; image.scores.len()];
    for d in by_score_desc(&image.scores) {
        let mut best: Option<(usize, f64)> = None;
        for g in 0..image.gt_count {
            let s = image.similarity[d][g];
            if gt_taken[g] || s < t {
                continue;
            }
            if best.is_none_or(|(_, bs)| s > bs) {
                best = Some((g, s));
            }
        }
        if let Some((g, _)) = best {
            gt_taken[g] = true;
            out[d] = Some(g);
        }
    }
    out
}

/// 101-point interpolated AP from detections ranked by score.
fn interpolated_ap(ranked_tp: &[bool], total_gt: usize) -> (f64, f64, Vec<(f64, f64)>) {
    if total_gt == 0 {
        return (0.0, 0.0, Vec::new());
    }
    let mut tp = 0usize;
    let mut curve = Vec::with_capacity(ranked_tp.len());
    for (i, &hit) in ranked_tp.iter().enumerate() {
        tp += hit as usize;
        curve.push((tp as f64 / total_gt as f64, tp as f64 / (i + 1) as f64));
    }
    let recall = curve.last().map_or(0.0, |c| c.0);
    let mut envelope: Vec<f64> = curve.iter().map(|c| c.1).collect();
    for i in (0..envelope.len().saturating_sub(1)).rev() {
        envelope[i] = envelope[i].max(envelope[i + 1]);
    }
    let mut sum = 0.0;
    for r in 0..=100 {
        let level = r as f64 / 100.0;
        let idx = curve.partition_point(|c| c.0 < level - 1e-12);
        if idx < envelope.len() {
            sum += envelope[idx];
        }
    }
    (sum / 101.0, recall, curve)
}

/// AP over a set of images at each threshold.
pub fn average_precision_from_similarities(images: &[ImageSimilarities], thresholds: &[f64]) -> ApOutcome {
    let total_gt: usize = images.iter().map(|i| i.gt_count).sum();
    // Global rank: score descending, then image order, then detection order.
    let mut global: Vec<(usize, usize, f64)> = images
        .iter()
        .enumerate()
        .flat_map(|(im, img)| img.scores.iter().enumerate().map(move |(d, &s)| (im, d, s)))
        .collect();
    global.sort_by(|a, b| b.2.total_cmp(&a.2).then(a.0.cmp(&b.0)).then(a.1.cmp(&b.1)));

    let mut per_threshold = Vec::with_capacity(thresholds.len());
    let mut pr_points = Vec::new();
    let mut matches = vec![Vec::new(); images.len()];
    for (ti, &t) in thresholds.iter().enumerate() {
        let matched: Vec<Vec<Option<usize>>> = images.iter().map(|img| greedy_match(img, t)).collect();
        if ti == 0 {
            for (im, m) in matched.iter().enumerate() {
                for (d, g) in m.iter().enumerate() {
                    if let Some(g) = *g {
                        matches[im].push(Match {
                            detection: d,
                            gt_id: images[im].gt_ids.get(g).copied().unwrap_or(g as u32),
                            similarity: images[im].similarity[d][g],
                        });
                    }
                }
            }
        }
        let ranked_tp: Vec<bool> = global.iter().map(|&(im, d, _)| matched[im][d].is_some()).collect();
        let (ap, recall, curve) = interpolated_ap(&ranked_tp, total_gt);
        pr_points.extend(curve.into_iter().map(|(recall, precision)| PrPoint {
            threshold: t,
            recall,
            precision,
        }));
        per_threshold.push(ThresholdAp {
            threshold: t,
            ap,
            recall,
        });
    }
    let map = if per_threshold.is_empty() {
        0.0
    } else {
        per_threshold.iter().map(|t| t.ap).sum::<f64>() / per_threshold.len() as f64
    };
    ApOutcome {
        summary: ApSummary { per_threshold, map },
        matches,
        pr_points,
    }
}

fn keypoint_gts(scene: &SceneAnnotation) -> Vec<&PersonAnnotation> {
    scene
        .persons
        .iter()
        .filter(|p| p.labeled_keypoints().next().is_some())
        .collect()
}

fn mask_gts(scene: &SceneAnnotation) -> Vec<&PersonAnnotation> {
    scene.persons.iter().filter(|p| !p.mask.is_empty()).collect()
}

/// Similarity table for one image.
pub fn image_similarities(
    detections: &[DecodedInstance],
    scene: &SceneAnnotation,
    kind: SimilarityKind,
    skeleton: &SkeletonSpec,
) -> Result<ImageSimilarities> {
    let gts = match kind {
        SimilarityKind::Oks => keypoint_gts(scene),
        SimilarityKind::MaskIou => mask_gts(scene),
    };
    let mut similarity = Vec::with_capacity(detections.len());
    for d in detections {
        let row = gts
            .iter()
            .map(|g| match kind {
                SimilarityKind::Oks => {
                    let area = g.area().max(1) as f64;
                    Ok(oks(&d.keypoints, g, area, skeleton))
                }
                SimilarityKind::MaskIou => mask_iou(&d.mask, &g.mask),
            })
            .collect::<Result<Vec<f64>>>()?;
        similarity.push(row);
    }
    Ok(ImageSimilarities {
        scores: detections.iter().map(|d| d.score).collect(),
        similarity,
        gt_count: gts.len(),
        gt_ids: gts.iter().map(|g| g.instance_id).collect(),
    })
}

/// AP for one similarity kind over paired (detections, scene) images.
pub fn average_precision(
    detections: &[Vec<DecodedInstance>],
    gts: &[SceneAnnotation],
    kind: SimilarityKind,
    thresholds: &[f64],
    skeleton: &SkeletonSpec,
) -> Result<ApOutcome> {
    if detections.len() != gts.len() {
        return Err(Error::Schema(format!(
            "{} detection sets for {} scenes",
            detections.len(),
            gts.len()
        )));
    }
    let images = detections
        .iter()
        .zip(gts)
        .map(|(d, g)| image_similarities(d, g, kind, skeleton))
        .collect::<Result<Vec<_>>>()?;
    Ok(average_precision_from_similarities(&images, thresholds))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageMatches {
    pub keypoint: Vec<Match>,
    pub mask: Vec<Match>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    pub keypoint_ap: ApSummary,
    pub mask_ap: ApSummary,
    /// Matches at the 0.50 threshold.
    pub matches: Vec<ImageMatches>,
    #[serde(skip)]
    pub pr_points: Vec<(SimilarityKind, PrPoint)>,
}

/// Keypoint and mask AP over the COCO threshold ladder.
pub fn evaluate(detections: &[Vec<DecodedInstance>], gts: &[SceneAnnotation], skeleton: &SkeletonSpec) -> Result<EvalResult> {
    let thresholds = coco_thresholds();
    let kp = average_precision(detections, gts, SimilarityKind::Oks, &thresholds, skeleton)?;
    let mk = average_precision(detections, gts, SimilarityKind::MaskIou, &thresholds, skeleton)?;
    let matches = kp
        .matches
        .into_iter()
        .zip(mk.matches)
        .map(|(keypoint, mask)| ImageMatches { keypoint, mask })
        .collect();
    let mut pr_points: Vec<(SimilarityKind, PrPoint)> =
        kp.pr_points.into_iter().map(|p| (SimilarityKind::Oks, p)).collect();
    pr_points.extend(mk.pr_points.into_iter().map(|p| (SimilarityKind::MaskIou, p)));
    Ok(EvalResult {
        keypoint_ap: kp.summary,
        mask_ap: mk.summary,
        matches,
        pr_points,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::annotation::{Keypoint, Visibility};
    use crate::mask::Bitmap;

    fn person_with(kps: Vec<Keypoint>) -> PersonAnnotation {
        let mut mask = Bitmap::empty(10, 10);
        mask.set(1, 1, true);
        PersonAnnotation {
            instance_id: 1,
            keypoints: kps,
            mask,
        }
    }

    fn as_det(p: &PersonAnnotation, shift: f64) -> Vec<DecodedKeypoint> {
        p.keypoints
            .iter()
            .map(|k| DecodedKeypoint {
                x: k.x + shift,
                y: k.y,
                score: 1.0,
                present: true,
            })
            .collect()
    }

    #[test]
    fn oks_cases() {
        let sk = SkeletonSpec::coco();
        let kps: Vec<Keypoint> = (0..17)
            .map(|i| Keypoint::new(i as f64, 2.0 * i as f64, Visibility::Visible))
            .collect();
        let gt = person_with(kps);
        assert_eq!(oks(&as_det(&gt, 0.0), &gt, 500.0, &sk), 1.0);
        assert!(oks(&as_det(&gt, 1e6), &gt, 500.0, &sk) < 1e-30);

        let mut single = vec![Keypoint::absent(); 17];
        single[0] = Keypoint::new(5.0, 5.0, Visibility::Visible);
        let gt = person_with(single);
        let area = 300.0;
        let k = sk.oks_falloff[0];
        let d = (2.0 * area * k * k).sqrt();
        let expected = (-1.0f64).exp();
        assert!((oks(&as_det(&gt, d), &gt, area, &sk) - expected).abs() < 1e-12);
        let unlabeled = person_with(vec![Keypoint::absent(); 17]);
        assert_eq!(oks(&as_det(&unlabeled, 0.0), &unlabeled, area, &sk), 0.0);
    }

    fn img(scores: &[f64], sims: &[f64]) -> ImageSimilarities {
        ImageSimilarities {
            scores: scores.to_vec(),
            similarity: sims.iter().map(|s| vec![*s]).collect(),
            gt_count: 1,
            gt_ids: vec![1],
        }
    }

    #[test]
    fn two_detection_examples() {
        let t = [0.5];
        let good_first = average_precision_from_similarities(&[img(&[0.9, 0.8], &[0.9, 0.1])], &t);
        assert_eq!(good_first.summary.map, 1.0);
        let good_second = average_precision_from_similarities(&[img(&[0.8, 0.9], &[0.9, 0.1])], &t);
        assert!((good_second.summary.map - 0.5).abs() < 1e-12);
    }

    #[test]
    fn empty_detections_and_perfect_detections() {
        let none = average_precision_from_similarities(&[img(&[], &[])], &coco_thresholds());
        assert_eq!(none.summary.map, 0.0);
        let perfect = average_precision_from_similarities(&[img(&[1.0], &[1.0])], &coco_thresholds());
        assert!(perfect.summary.per_threshold.iter().all(|t| t.ap == 1.0));
    }

    #[test]
    fn matching_ties_go_to_lower_gt() {
        let image = ImageSimilarities {
            scores: vec![0.9],
            similarity: vec![vec![0.7, 0.7]],
            gt_count: 2,
            gt_ids: vec![4, 9],
        };
        assert_eq!(greedy_match(&image, 0.5), vec![Some(0)]);
    }
}
