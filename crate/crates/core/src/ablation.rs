//! The two built-in studies: keypoint voting against heatmap argmax under
//! field noise, and static against dynamic centroids on entangled scenes.

use serde::{Deserialize, Serialize};

use crate::config::{CentroidMode, DecodeConfig, EncodeConfig};
use crate::decode::decode;
use crate::encode::encode;
use crate::error::Result;
use crate::metrics::{evaluate, EvalResult};
use crate::skeleton::SkeletonSpec;
use crate::synth::{generate_corpus, make_occlusion_suite, perturb_fields, SynthConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VotingAblation {
    pub scenes: usize,
    pub noise_sigma: f64,
    pub argmax_keypoint_map: f64,
    pub voting_keypoint_map: f64,
    /// Keypoint recall at OKS 0.75 with voting, on clean and on noisy fields.
    pub clean_recall_75: f64,
    pub noisy_recall_75: f64,
}

impl VotingAblation {
    pub fn gap(&self) -> f64 {
        self.voting_keypoint_map - self.argmax_keypoint_map
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CentroidAblation {
    pub scenes: usize,
    pub static_mask_map: f64,
    pub dynamic_mask_map: f64,
    pub static_keypoint_map: f64,
    pub dynamic_keypoint_map: f64,
}

impl CentroidAblation {
    pub fn gap(&self) -> f64 {
        self.dynamic_mask_map - self.static_mask_map
    }
}

fn recall_75(r: &EvalResult) -> f64 {
    r.keypoint_ap.at(0.75).map_or(0.0, |t| t.recall)
}

/// Scene `i` of the corpus is perturbed with seed `noise_seed + i`.
pub fn voting_ablation(corpus: &SynthConfig, scenes: usize, noise_sigma: f64, noise_seed: u64) -> Result<VotingAblation> {
    let skeleton = SkeletonSpec::coco();
    let truth = generate_corpus(corpus, scenes)?;
    let enc = EncodeConfig::default();
    let voting = enc.matching_decode();
    let argmax = DecodeConfig {
        keypoint_voting: false,
        ..voting.clone()
    };
    let mut clean = Vec::with_capacity(scenes);
    let mut noisy_voting = Vec::with_capacity(scenes);
    let mut noisy_argmax = Vec::with_capacity(scenes);
    for (i, scene) in truth.iter().enumerate() {
        let fields = encode(scene, &skeleton, &enc)?;
        clean.push(decode(&fields.heatmaps, &fields.keycentroid, &fields.maskcentroid, &skeleton, &voting)?);
        let noisy = perturb_fields(&fields, noise_sigma, noise_seed.wrapping_add(i as u64))?;
        let run = |cfg: &DecodeConfig| decode(&noisy.heatmaps, &noisy.keycentroid, &noisy.maskcentroid, &skeleton, cfg);
        noisy_voting.push(run(&voting)?);
        noisy_argmax.push(run(&argmax)?);
    }
    let clean = evaluate(&clean, &truth, &skeleton)?;
    let voted = evaluate(&noisy_voting, &truth, &skeleton)?;
    let argmaxed = evaluate(&noisy_argmax, &truth, &skeleton)?;
    Ok(VotingAblation {
        scenes,
        noise_sigma,
        argmax_keypoint_map: argmaxed.keypoint_ap.map,
        voting_keypoint_map: voted.keypoint_ap.map,
        clean_recall_75: recall_75(&clean),
        noisy_recall_75: recall_75(&voted),
    })
}

/// Encodes and decodes the occlusion suite once per centroid mode.
pub fn centroid_ablation(suite: &SynthConfig, scenes: usize) -> Result<CentroidAblation> {
    let skeleton = SkeletonSpec::coco();
    let truth = make_occlusion_suite(suite, scenes)?;
    let mut maps = Vec::new();
    for mode in [CentroidMode::Static, CentroidMode::Dynamic] {
        let enc = EncodeConfig {
            centroid_mode: mode,
            ..Default::default()
        };
        let dec = enc.matching_decode();
        let dets = truth
            .iter()
            .map(|s| {
                let f = encode(s, &skeleton, &enc)?;
                decode(&f.heatmaps, &f.keycentroid, &f.maskcentroid, &skeleton, &dec)
            })
            .collect::<Result<Vec<_>>>()?;
        let r = evaluate(&dets, &truth, &skeleton)?;
        maps.push((r.mask_ap.map, r.keypoint_ap.map));
    }
    Ok(CentroidAblation {
        scenes,
        static_mask_map: maps[0].0,
        dynamic_mask_map: maps[1].0,
        static_keypoint_map: maps[0].1,
        dynamic_keypoint_map: maps[1].1,
    })
}
