mod common;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use vcodec::encode::{encode_heatmaps, encode_keycentroid, keycentroid_weights, MC_OFF_X, MC_OFF_Y, MC_SIGMA};
use vcodec::loss::{
    combined_loss, heatmap_loss, keycentroid_loss, maskcentroid_loss, maskcentroid_loss_grad, LossWeights,
    Predictions,
};
use vcodec::synth::{generate_scene, SynthConfig};
use vcodec::{
    encode, Bitmap, EncodeConfig, Error, FieldGrid, Keypoint, PersonAnnotation, SceneAnnotation, SkeletonSpec,
    Visibility,
};

use common::{random_box_scene, random_grid};

/// Predicted offsets equal to the encoded targets, with a constant sigma.
fn fitted_prediction(scene: &SceneAnnotation, cfg: &EncodeConfig, sigma: f32) -> FieldGrid {
    let f = encode(scene, &SkeletonSpec::coco(), cfg).unwrap();
    let mut mc = f.maskcentroid;
    let c = mc.require_channel(MC_SIGMA).unwrap();
    mc.plane_mut(c).fill(sigma);
    mc
}

fn standard_scene() -> SceneAnnotation {
    generate_scene(&SynthConfig::default().with_persons(3, 3).with_seed(12)).unwrap()
}

#[test]
fn fitted_offsets_give_small_mask_loss() {
    let skeleton = SkeletonSpec::coco();
    let cfg = EncodeConfig::default();
    let scene = standard_scene();
    let pred = fitted_prediction(&scene, &cfg, (cfg.disk_radius / 4.0) as f32);
    let loss = maskcentroid_loss(&pred, &pred, &scene, &skeleton, &cfg).unwrap();
    assert!(loss < 0.05, "{loss}");
    assert!((loss - FITTED_LOSS).abs() < 1e-9, "{loss}");

    let mut flipped = pred.clone();
    for name in [MC_OFF_X, MC_OFF_Y] {
        let c = flipped.require_channel(name).unwrap();
        for v in flipped.plane_mut(c) {
            *v = -*v;
        }
    }
    let worse = maskcentroid_loss(&flipped, &pred, &scene, &skeleton, &cfg).unwrap();
    assert!(worse > loss, "{worse} <= {loss}");
}

/// Snapshot of the fitted loss on `standard_scene`.
const FITTED_LOSS: f64 = 1.2728711698797344e-5;

#[test]
fn single_pixel_instance() {
    let skeleton = SkeletonSpec::coco();
    let cfg = EncodeConfig {
        disk_radius: 4.0,
        ..Default::default()
    };
    let mut mask = Bitmap::empty(20, 20);
    mask.set(10, 10, true);
    let mut keypoints = vec![Keypoint::absent(); 17];
    keypoints[11] = Keypoint::new(10.0, 10.0, Visibility::Visible);
    let scene = SceneAnnotation {
        width: 20,
        height: 20,
        persons: vec![PersonAnnotation {
            instance_id: 1,
            keypoints,
            mask,
        }],
    };
    let pred = fitted_prediction(&scene, &cfg, 1.0);
    let g = maskcentroid_loss_grad(&pred, &pred, &scene, &skeleton, &cfg).unwrap();
    // One member at the centroid (phi = 1) and one ring pixel at distance in (R, 2R].
    assert!(g.value.is_finite() && g.value > 0.0);
    // The ring pixel is at least R = 4 away, so its BCE is at most -ln(1 - exp(-8)).
    let ring_bound = -(-(-8.0f64).exp()).ln_1p();
    assert!(g.value <= (ring_bound + 1e-6) / 2.0, "{}", g.value);
    let sigma_grad: Vec<f32> = g.sigma.plane(g.sigma.require_channel(MC_SIGMA).unwrap()).to_vec();
    assert_eq!(sigma_grad.iter().filter(|&&v| v != 0.0).count(), 1);
    assert!(sigma_grad[10 * 20 + 10] > 0.0, "a wider kernel only raises the ring term");
}

#[test]
fn single_pixel_instance_without_ring() {
    let skeleton = SkeletonSpec::coco();
    let cfg = EncodeConfig {
        disk_radius: 4.0,
        ..Default::default()
    };
    let mut mask = Bitmap::empty(1, 1);
    mask.set(0, 0, true);
    let mut keypoints = vec![Keypoint::absent(); 17];
    keypoints[11] = Keypoint::new(0.0, 0.0, Visibility::Visible);
    let scene = SceneAnnotation {
        width: 1,
        height: 1,
        persons: vec![PersonAnnotation {
            instance_id: 1,
            keypoints,
            mask,
        }],
    };
    let pred = fitted_prediction(&scene, &cfg, 1.0);
    let loss = maskcentroid_loss(&pred, &pred, &scene, &skeleton, &cfg).unwrap();
    assert!(loss <= 2e-6, "{loss}");
}

#[test]
fn nonpositive_sigma_and_empty_scenes_are_rejected() {
    let skeleton = SkeletonSpec::coco();
    let cfg = EncodeConfig::default();
    let scene = standard_scene();
    let pred = fitted_prediction(&scene, &cfg, 0.0);
    assert!(matches!(
        maskcentroid_loss(&pred, &pred, &scene, &skeleton, &cfg),
        Err(Error::Domain(_))
    ));
    let empty = SceneAnnotation::empty(scene.width, scene.height);
    assert!(matches!(
        maskcentroid_loss(&pred, &pred, &empty, &skeleton, &cfg),
        Err(Error::UndefinedLoss(_))
    ));
}

#[test]
fn unnamed_channels_are_read_by_position() {
    let skeleton = SkeletonSpec::coco();
    let cfg = EncodeConfig::default();
    let scene = standard_scene();
    let pred = fitted_prediction(&scene, &cfg, 8.0);
    let plane = |name| pred.plane(pred.require_channel(name).unwrap()).to_vec();
    let (h, w) = (pred.height(), pred.width());
    let offsets = FieldGrid::new(h, w, vec!["a".into(), "b".into()], [plane(MC_OFF_X), plane(MC_OFF_Y)].concat()).unwrap();
    let sigma = FieldGrid::new(h, w, vec!["s".into()], plane(MC_SIGMA)).unwrap();
    let named = maskcentroid_loss(&pred, &pred, &scene, &skeleton, &cfg).unwrap();
    let positional = maskcentroid_loss(&offsets, &sigma, &scene, &skeleton, &cfg).unwrap();
    assert_eq!(named, positional);
}

#[test]
fn heatmap_loss_symmetries() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let p = random_grid(&mut rng, 7, 9, 2, 0.01, 0.99);
    let mut y = random_grid(&mut rng, 7, 9, 2, 0.0, 1.0);
    for v in y.data_mut() {
        *v = v.round();
    }
    let flip = |g: &FieldGrid| {
        let mut g = g.clone();
        for v in g.data_mut() {
            *v = 1.0 - *v;
        }
        g
    };
    let a = heatmap_loss(&p, &y).unwrap();
    let b = heatmap_loss(&flip(&p), &flip(&y)).unwrap();
    assert!((a - b).abs() < 1e-6, "{a} vs {b}");
    // Perfect binary predictions cost only the clamp.
    assert!(heatmap_loss(&y, &y).unwrap() <= 1.1e-7);
}

#[test]
fn keycentroid_loss_ignores_weight_scale_and_unweighted_pixels() {
    let skeleton = SkeletonSpec::coco();
    let cfg = EncodeConfig::default();
    let scene = standard_scene();
    let target = encode_keycentroid(&scene, &skeleton, &cfg).unwrap();
    let weight = keycentroid_weights(&scene, &skeleton, &cfg).unwrap();
    assert_eq!(keycentroid_loss(&target, &target, &weight).unwrap(), 0.0);

    let mut shifted = target.clone();
    for v in shifted.data_mut() {
        *v += 0.1;
    }
    let base = keycentroid_loss(&shifted, &target, &weight).unwrap();
    // Every weighted pixel is off by (0.1, 0.1).
    assert!((base - 0.02).abs() < 1e-6, "{base}");
    let mut doubled = weight.clone();
    for v in doubled.data_mut() {
        *v *= 2.0;
    }
    assert!((keycentroid_loss(&shifted, &target, &doubled).unwrap() - base).abs() < 1e-12);

    let mut outside = shifted.clone();
    for (v, w) in outside.data_mut().chunks_mut(weight.plane_len()).zip(0..) {
        let wplane = weight.plane(w / 2);
        for (x, &wx) in v.iter_mut().zip(wplane) {
            if wx == 0.0 {
                *x = 1e3;
            }
        }
    }
    assert_eq!(keycentroid_loss(&outside, &target, &weight).unwrap(), base);
}

#[test]
fn combined_loss_weights_terms() {
    let skeleton = SkeletonSpec::coco();
    let cfg = EncodeConfig::default();
    let scene = standard_scene();
    let f = encode(&scene, &skeleton, &cfg).unwrap();
    let mut heat = f.heatmaps.clone();
    for v in heat.data_mut() {
        *v = 0.25 + 0.5 * *v;
    }
    let mut mc = f.maskcentroid.clone();
    let c = mc.require_channel(MC_SIGMA).unwrap();
    mc.plane_mut(c).fill(8.0);
    let preds = Predictions {
        heatmaps: &heat,
        keycentroid: &f.keycentroid,
        maskcentroid: &mc,
    };
    let r = combined_loss(preds, &scene, &skeleton, &cfg, LossWeights::default()).unwrap();
    let h = heatmap_loss(&heat, &encode_heatmaps(&scene, &skeleton, &cfg).unwrap()).unwrap();
    assert_eq!(r.heatmap, h);
    assert_eq!(r.keycentroid, 0.0);
    assert!((r.value - (4.0 * r.heatmap + r.keycentroid + r.maskcentroid)).abs() < 1e-12);
    let only_mask = combined_loss(preds, &scene, &skeleton, &cfg, LossWeights::new(0.0, 0.0, 1.0)).unwrap();
    assert_eq!(only_mask.heatmap, 0.0);
    assert_eq!(only_mask.value, r.maskcentroid);
    assert!(combined_loss(preds, &scene, &skeleton, &cfg, LossWeights::new(0.0, 0.0, 0.0)).is_err());
    assert!(combined_loss(preds, &scene, &skeleton, &cfg, LossWeights::new(-1.0, 1.0, 1.0)).is_err());
}

#[test]
fn mask_loss_is_finite_on_random_predictions() {
    let skeleton = SkeletonSpec::coco();
    let cfg = EncodeConfig {
        disk_radius: 4.0,
        ..Default::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..50 {
        let scene = random_box_scene(&mut rng, 14, 12);
        let offsets = random_grid(&mut rng, 12, 14, 2, -20.0, 20.0);
        let sigma = random_grid(&mut rng, 12, 14, 1, 0.1, 10.0);
        let g = maskcentroid_loss_grad(&offsets, &sigma, &scene, &skeleton, &cfg).unwrap();
        assert!(g.value.is_finite() && g.value >= 0.0);
        assert!(g.offsets.data().iter().chain(g.sigma.data()).all(|v| v.is_finite()));
    }
}
