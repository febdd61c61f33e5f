#![allow(dead_code)]

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use vcodec::metrics::{evaluate, EvalResult};
use vcodec::{
    decode, encode, Bitmap, DecodedInstance, EncodeConfig, FieldGrid, Keypoint, PersonAnnotation, SceneAnnotation,
    SkeletonSpec, Visibility,
};

pub struct RoundTrip {
    pub eval: EvalResult,
    pub detections: Vec<Vec<DecodedInstance>>,
    /// Largest distance between a labeled keypoint and its decoded position.
    pub worst_keypoint_error: f64,
    pub worst_mask_iou: f64,
    /// Ground-truth persons without a mask match at IoU 0.5.
    pub unmatched: usize,
}

pub fn round_trip(scenes: &[SceneAnnotation], enc: &EncodeConfig) -> RoundTrip {
    let skeleton = SkeletonSpec::coco();
    let dec = enc.matching_decode();
    let detections: Vec<Vec<DecodedInstance>> = scenes
        .iter()
        .map(|s| {
            let f = encode(s, &skeleton, enc).unwrap();
            decode(&f.heatmaps, &f.keycentroid, &f.maskcentroid, &skeleton, &dec).unwrap()
        })
        .collect();
    let eval = evaluate(&detections, scenes, &skeleton).unwrap();
    let mut worst_keypoint_error: f64 = 0.0;
    let mut worst_mask_iou: f64 = 1.0;
    let mut unmatched = 0;
    for ((scene, dets), matches) in scenes.iter().zip(&detections).zip(&eval.matches) {
        for person in &scene.persons {
            let Some(m) = matches.mask.iter().find(|m| m.gt_id == person.instance_id) else {
                unmatched += 1;
                continue;
            };
            worst_mask_iou = worst_mask_iou.min(m.similarity);
            let det = &dets[m.detection];
            for (j, k) in person.labeled_keypoints() {
                let d = &det.keypoints[j];
                let err = if d.present {
                    (d.x - k.x).hypot(d.y - k.y)
                } else {
                    f64::INFINITY
                };
                worst_keypoint_error = worst_keypoint_error.max(err);
            }
        }
    }
    RoundTrip {
        eval,
        detections,
        worst_keypoint_error,
        worst_mask_iou,
        unmatched,
    }
}

pub fn random_grid(rng: &mut ChaCha8Rng, h: usize, w: usize, c: usize, lo: f32, hi: f32) -> FieldGrid {
    let data = (0..h * w * c).map(|_| rng.random_range(lo..hi)).collect();
    FieldGrid::new(h, w, (0..c).map(|i| format!("c{i}")).collect(), data).unwrap()
}

/// A scene of 1-3 axis-aligned rectangles on a small canvas, each with a
/// visible hip keypoint inside its rectangle.
pub fn random_box_scene(rng: &mut ChaCha8Rng, w: usize, h: usize) -> SceneAnnotation {
    let skeleton = SkeletonSpec::coco();
    let n = rng.random_range(1..=3);
    let mut persons = Vec::with_capacity(n);
    for id in 1..=n as u32 {
        let (bw, bh) = (rng.random_range(3..=w / 2), rng.random_range(3..=h / 2));
        let (x0, y0) = (rng.random_range(0..=w - bw), rng.random_range(0..=h - bh));
        let mut mask = Bitmap::empty(w, h);
        for y in y0..y0 + bh {
            for x in x0..x0 + bw {
                mask.set(x, y, true);
            }
        }
        let mut keypoints = vec![Keypoint::absent(); skeleton.len()];
        keypoints[11] = Keypoint::new(
            rng.random_range(x0 as f64..(x0 + bw - 1) as f64),
            rng.random_range(y0 as f64..(y0 + bh - 1) as f64),
            Visibility::Visible,
        );
        persons.push(PersonAnnotation {
            instance_id: id,
            keypoints,
            mask,
        });
    }
    SceneAnnotation {
        width: w,
        height: h,
        persons,
    }
}

/// `|a - n| <= rel * max(|a|, |n|)` for every element, with `abs_floor`
/// absorbing elements that are zero in both.
pub fn worst_relative_error(analytic: &FieldGrid, numeric: &FieldGrid, abs_floor: f64) -> f64 {
    analytic
        .data()
        .iter()
        .zip(numeric.data())
        .map(|(&a, &n)| {
            let (a, n) = (a as f64, n as f64);
            let diff = (a - n).abs();
            if diff <= abs_floor {
                0.0
            } else {
                diff / a.abs().max(n.abs())
            }
        })
        .fold(0.0, f64::max)
}
