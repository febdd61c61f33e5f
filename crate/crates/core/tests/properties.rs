mod common;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use vcodec::decode::{nms_peaks, phi, vote_keypoints};
use vcodec::synth::{
    displaced_centroid_fraction, generate_corpus, generate_scene, make_occlusion_suite, perturb_fields, SynthConfig,
};
use vcodec::{decode, encode, DecodeConfig, EncodeConfig, FieldGrid, SkeletonSpec, Visibility};

use common::random_grid;

fn cfg_cases(n: u32) -> ProptestConfig {
    ProptestConfig {
        cases: n,
        ..ProptestConfig::default()
    }
}

proptest! {
    #![proptest_config(cfg_cases(64))]

    #[test]
    fn votes_conserve_heatmap_mass(
        seed in any::<u64>(),
        h in 2usize..20,
        w in 2usize..20,
        slots in 1usize..4,
        threshold in 0.0f64..0.5,
        voting in any::<bool>(),
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let heat = random_grid(&mut rng, h, w, slots, 0.0, 1.0);
        // Offsets reach well past the border; clamping must not lose mass.
        let kc = random_grid(&mut rng, h, w, 2 * slots, -3.0, 3.0);
        let cfg = DecodeConfig {
            heatmap_threshold: threshold,
            keypoint_voting: voting,
            disk_radius: 4.0,
            ..DecodeConfig::default()
        };
        let votes = vote_keypoints(&heat, &kc, &cfg).unwrap();
        for j in 0..slots {
            let expected: f64 = heat.plane(j).iter().map(|&p| p as f64).filter(|&p| p >= threshold).sum();
            let got = votes.total_mass(j);
            prop_assert!((got - expected).abs() <= 1e-9 * expected.max(1.0), "slot {j}: {got} vs {expected}");
        }
    }

    #[test]
    fn phi_decreases_with_distance(d1 in 0.0f64..50.0, gap in 1e-3f64..20.0, sigma in 0.5f64..30.0) {
        let near = phi((d1, 0.0), (0.0, 0.0), sigma).unwrap();
        let far = phi((0.0, d1 + gap), (0.0, 0.0), sigma).unwrap();
        prop_assert!(far <= near);
        if far > 0.0 {
            prop_assert!(far < near);
        }
        prop_assert!((0.0..=1.0).contains(&near));
    }

    #[test]
    fn phi_is_rotation_and_translation_invariant(
        d in 0.0f64..40.0, a in 0.0f64..std::f64::consts::TAU, cx in -100.0f64..100.0, cy in -100.0f64..100.0, sigma in 0.5f64..30.0,
    ) {
        let base = phi((d, 0.0), (0.0, 0.0), sigma).unwrap();
        let moved = phi((cx + d * a.cos(), cy + d * a.sin()), (cx, cy), sigma).unwrap();
        prop_assert!((base - moved).abs() <= 1e-9);
    }
}

proptest! {
    #![proptest_config(cfg_cases(6))]

    #[test]
    fn scaling_binary_heatmaps_keeps_peak_order(seed in 0u64..1000, scale in 0.05f32..1.0) {
        let skeleton = SkeletonSpec::coco();
        let enc = EncodeConfig::default();
        let scene = generate_scene(&SynthConfig::default().with_seed(seed)).unwrap();
        let f = encode(&scene, &skeleton, &enc).unwrap();
        let mut scaled = f.heatmaps.clone();
        for v in scaled.data_mut() {
            *v *= scale;
        }
        let dec = enc.matching_decode();
        let a = nms_peaks(&vote_keypoints(&f.heatmaps, &f.keycentroid, &dec).unwrap(), &dec);
        let b = nms_peaks(&vote_keypoints(&scaled, &f.keycentroid, &dec).unwrap(), &dec);
        prop_assert_eq!(a.len(), b.len());
        for (p, q) in a.iter().zip(&b) {
            prop_assert_eq!(p.slot, q.slot);
            prop_assert!((p.x - q.x).abs() < 1e-9 && (p.y - q.y).abs() < 1e-9);
            prop_assert!(q.score <= p.score);
        }
        let da = decode(&f.heatmaps, &f.keycentroid, &f.maskcentroid, &skeleton, &dec).unwrap();
        let db = decode(&scaled, &f.keycentroid, &f.maskcentroid, &skeleton, &dec).unwrap();
        let masks = |d: &[vcodec::DecodedInstance]| {
            let mut m: Vec<Vec<u64>> = d.iter().map(|i| i.mask.to_rle()).collect();
            m.sort();
            m
        };
        prop_assert_eq!(masks(&da), masks(&db));
    }

    #[test]
    fn decode_is_deterministic(seed in 0u64..1000) {
        let skeleton = SkeletonSpec::coco();
        let enc = EncodeConfig::default();
        let scene = generate_scene(&SynthConfig::default().with_seed(seed)).unwrap();
        let f = perturb_fields(&encode(&scene, &skeleton, &enc).unwrap(), 0.05, seed).unwrap();
        let seq = enc.matching_decode();
        let par = DecodeConfig { parallel_voting: true, ..seq.clone() };
        let first = decode(&f.heatmaps, &f.keycentroid, &f.maskcentroid, &skeleton, &seq).unwrap();
        prop_assert_eq!(&first, &decode(&f.heatmaps, &f.keycentroid, &f.maskcentroid, &skeleton, &seq).unwrap());
        prop_assert_eq!(&first, &decode(&f.heatmaps, &f.keycentroid, &f.maskcentroid, &skeleton, &par).unwrap());
    }

    #[test]
    fn synthetic_scenes_are_well_formed(seed in any::<u64>()) {
        let skeleton = SkeletonSpec::coco();
        let cfg = SynthConfig::default().with_seed(seed);
        let scenes = generate_corpus(&cfg, 3).unwrap();
        prop_assert_eq!(&scenes, &generate_corpus(&cfg, 3).unwrap());
        for s in &scenes {
            s.validate(&skeleton).unwrap();
            prop_assert!((1..=5).contains(&s.persons.len()));
            let mut claimed = vec![false; s.width * s.height];
            for p in &s.persons {
                prop_assert!(p.mask.count() >= cfg.min_visible_pixels);
                prop_assert!(p.labeled_keypoints().next().is_some());
                for (x, y) in p.mask.pixels() {
                    // Visible masks are disjoint after occlusion.
                    prop_assert!(!claimed[y * s.width + x]);
                    claimed[y * s.width + x] = true;
                }
                for k in &p.keypoints {
                    if k.visibility == Visibility::Visible {
                        prop_assert!(p.mask.contains(k.x.round() as i64, k.y.round() as i64));
                    }
                }
            }
        }
    }
}

#[test]
fn corpus_prefix_is_stable() {
    let cfg = SynthConfig::default().with_seed(17);
    let long = generate_corpus(&cfg, 6).unwrap();
    assert_eq!(&long[..3], &generate_corpus(&cfg, 3).unwrap()[..]);
    assert_ne!(long[0], generate_scene(&cfg.clone().with_seed(18)).unwrap());
}

#[test]
fn perturbation_noise_has_requested_spread() {
    let skeleton = SkeletonSpec::coco();
    let enc = EncodeConfig::default();
    let scene = generate_scene(&SynthConfig::default().with_seed(3)).unwrap();
    let clean = encode(&scene, &skeleton, &enc).unwrap();
    let sigma = 0.05;
    let noisy = perturb_fields(&clean, sigma, 99).unwrap();

    let diffs: Vec<f64> = noisy
        .keycentroid
        .data()
        .iter()
        .zip(clean.keycentroid.data())
        .map(|(&a, &b)| a as f64 - b as f64)
        .collect();
    let n = diffs.len() as f64;
    let mean = diffs.iter().sum::<f64>() / n;
    let std = (diffs.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / n).sqrt();
    assert!((std - sigma).abs() <= 0.05 * sigma, "offset noise std {std}");
    assert!(mean.abs() < 1e-3);

    // Heatmap noise is clamped at 0: background pixels average sigma / sqrt(2 pi).
    let (mut sum, mut count) = (0.0, 0usize);
    for (&a, &b) in noisy.heatmaps.data().iter().zip(clean.heatmaps.data()) {
        if b == 0.0 {
            sum += a as f64;
            count += 1;
        }
    }
    let half_normal_mean = sigma / (2.0 * std::f64::consts::PI).sqrt();
    let got = sum / count as f64;
    assert!((got - half_normal_mean).abs() <= 0.05 * half_normal_mean, "{got} vs {half_normal_mean}");
    assert!(noisy.heatmaps.data().iter().all(|v| (0.0..=1.0).contains(v)));

    // Sigma and seed channels are left alone.
    for name in ["mc/sigma", "mc/seed"] {
        if let Some(c) = clean.maskcentroid.channel_index(name) {
            assert_eq!(clean.maskcentroid.plane(c), noisy.maskcentroid.plane(c));
        }
    }
    let again = perturb_fields(&clean, sigma, 99).unwrap();
    assert!(again.keycentroid.bit_eq(&noisy.keycentroid));
    assert!(perturb_fields(&clean, 0.0, 1).unwrap().heatmaps.bit_eq(&clean.heatmaps));
    assert!(perturb_fields(&clean, -1.0, 1).is_err());
}

#[test]
fn occlusion_suite_is_entangled_and_deterministic() {
    let cfg = SynthConfig::default().with_seed(2);
    let suite = make_occlusion_suite(&cfg, 20).unwrap();
    assert_eq!(suite, make_occlusion_suite(&cfg, 20).unwrap());
    let skeleton = SkeletonSpec::coco();
    for s in &suite {
        assert!((2..=3).contains(&s.persons.len()));
        assert!(displaced_centroid_fraction(s) >= 0.8);
        for p in &s.persons {
            assert!(skeleton
                .anchor_priority
                .iter()
                .any(|&j| p.keypoints[j].visibility == Visibility::Visible));
        }
    }
}

#[test]
fn field_grid_rejects_bad_shapes() {
    assert!(FieldGrid::new(2, 2, vec!["a".into()], vec![0.0; 3]).is_err());
    assert!(FieldGrid::new(2, 2, vec!["a".into(), "a".into()], vec![0.0; 8]).is_err());
}
