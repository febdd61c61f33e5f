//! Deterministic synthetic multi-person scenes built from capsule stick
//! figures, plus field perturbation for robustness studies.
//!
//! Every random draw comes from a ChaCha stream addressed by
//! `(seed, scene, person, attempt)`, so a person's geometry does not depend
//! on how many draws other persons consumed.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::annotation::{inside_canvas, Keypoint, PersonAnnotation, SceneAnnotation, Visibility};
use crate::encode::{EncodedFields, MC_OFF_X, MC_OFF_Y};
use crate::error::{Error, Result};
use crate::mask::Bitmap;
use crate::skeleton::SkeletonSpec;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub width: usize,
    pub height: usize,
    /// Inclusive person-count range.
    pub person_count: (usize, usize),
    /// Largest allowed pairwise IoU between the full (pre-occlusion) person masks.
    pub overlap_target: f64,
    /// Capsule radius range in pixels.
    pub limb_width: (f64, f64),
    /// Person height range in pixels.
    pub scale: (f64, f64),
    /// Largest in-plane body rotation in degrees.
    pub max_rotation_deg: f64,
    /// Persons with fewer visible pixels are resampled.
    pub min_visible_pixels: usize,
    /// Only emit scenes the default decoder can separate at `disk_radius`:
    /// same-slot keypoints of different persons at least `0.75 R` apart,
    /// labeled keypoints within `R / 4 - 1.5` of their own visible mask, no
    /// keypoint closer to another person's mask than to its own unless that
    /// person has its own keypoint in the slot, and anchors farther apart than the half-maximum radius of the
    /// clustering kernel.
    pub resolvable: bool,
    pub disk_radius: f64,
    pub max_attempts: usize,
    pub rng_seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            width: 401,
            height: 401,
            person_count: (1, 5),
            overlap_target: 0.3,
            limb_width: (3.0, 6.0),
            scale: (110.0, 170.0),
            max_rotation_deg: 25.0,
            min_visible_pixels: 256,
            resolvable: true,
            disk_radius: crate::config::DEFAULT_DISK_RADIUS,
            max_attempts: 1000,
            rng_seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.rng_seed = seed;
        self
    }

    pub fn with_persons(mut self, min: usize, max: usize) -> Self {
        self.person_count = (min, max);
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.width < 64 || self.height < 64 {
            return bad(format!("canvas {}x{} is smaller than 64x64", self.width, self.height));
        }
        if self.person_count.0 > self.person_count.1 {
            return bad(format!("empty person_count range {:?}", self.person_count));
        }
        for (name, (lo, hi)) in [("limb_width", self.limb_width), ("scale", self.scale)] {
            if !(lo > 0.0 && lo <= hi && hi.is_finite()) {
                return bad(format!("invalid {name} range ({lo}, {hi})"));
            }
        }
        if !(0.0..1.0).contains(&self.overlap_target) {
            return bad(format!("overlap_target {} outside [0, 1)", self.overlap_target));
        }
        if !(self.disk_radius > 0.0 && self.disk_radius.is_finite()) {
            return bad(format!("disk_radius must be positive, got {}", self.disk_radius));
        }
        if self.max_attempts == 0 {
            return bad("max_attempts must be >= 1".into());
        }
        Ok(())
    }
}

fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn stream_id(scene: u64, person: usize, attempt: usize) -> u64 {
    (scene << 32) ^ ((attempt as u64) << 8) ^ person as u64
}

fn uniform(rng: &mut ChaCha8Rng, (lo, hi): (f64, f64)) -> f64 {
    if hi > lo {
        rng.random_range(lo..hi)
    } else {
        lo
    }
}

/// A posed figure: 17 joint positions, capsule radius and head radius.
#[derive(Debug, Clone)]
struct Figure {
    joints: [(f64, f64); 17],
    limb_radius: f64,
    head_radius: f64,
    /// Draw a capsule along the spine; without it the torso is an outline.
    spine: bool,
}

/// Capsules drawn for every figure, as joint index pairs.
const BODY_CAPSULES: [(usize, usize); 12] = [
    (15, 13),
    (13, 11),
    (16, 14),
    (14, 12),
    (11, 12),
    (5, 11),
    (6, 12),
    (5, 6),
    (5, 7),
    (6, 8),
    (7, 9),
    (8, 10),
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum PoseStyle {
    Standing,
    /// Arms and legs swung towards one side, as in a stride or a reach.
    Lunging,
}

struct PoseParams {
    height: f64,
    limb_radius: f64,
    rotation: f64,
    arm: [(f64, f64); 2],
    leg: [(f64, f64); 2],
}

fn sample_pose(rng: &mut ChaCha8Rng, cfg: &SynthConfig, style: PoseStyle) -> PoseParams {
    let height = uniform(rng, cfg.scale);
    let limb_radius = uniform(rng, cfg.limb_width);
    let max_rot = cfg.max_rotation_deg.to_radians();
    let rotation = if max_rot > 0.0 {
        rng.random_range(-max_rot..=max_rot)
    } else {
        0.0
    };
    let deg = |rng: &mut ChaCha8Rng, lo: f64, hi: f64| rng.random_range(lo..hi).to_radians();
    match style {
        PoseStyle::Standing => PoseParams {
            height,
            limb_radius,
            rotation,
            // (outward swing of the upper limb from straight down, bend at the middle joint)
            arm: [
                (deg(rng, 10.0, 150.0), deg(rng, 0.0, 100.0)),
                (deg(rng, 10.0, 150.0), deg(rng, 0.0, 100.0)),
            ],
            leg: [
                (deg(rng, 0.0, 30.0), deg(rng, -30.0, 10.0)),
                (deg(rng, 0.0, 30.0), deg(rng, -30.0, 10.0)),
            ],
        },
        PoseStyle::Lunging => PoseParams {
            height,
            limb_radius,
            rotation,
            // Left limbs swing out, right limbs swing across towards the left side.
            arm: [
                (deg(rng, 60.0, 120.0), deg(rng, 0.0, 40.0)),
                (deg(rng, -120.0, -60.0), deg(rng, -40.0, 0.0)),
            ],
            leg: [
                (deg(rng, 35.0, 60.0), deg(rng, -20.0, 20.0)),
                (deg(rng, -50.0, -25.0), deg(rng, -20.0, 20.0)),
            ],
        },
    }
}

/// Joint positions relative to the mid-hip point, before rotation. The
/// person's left side is at +x (a figure facing the viewer).
fn local_joints(p: &PoseParams) -> [(f64, f64); 17] {
    let s = p.height;
    let neck = (0.0, -0.30 * s);
    let nose = (0.0, -0.42 * s);
    let mut j = [(0.0, 0.0); 17];
    j[0] = nose;
    j[1] = (nose.0 + 0.025 * s, nose.1 - 0.02 * s);
    j[2] = (nose.0 - 0.025 * s, nose.1 - 0.02 * s);
    j[3] = (nose.0 + 0.05 * s, nose.1);
    j[4] = (nose.0 - 0.05 * s, nose.1);
    j[5] = (neck.0 + 0.11 * s, neck.1);
    j[6] = (neck.0 - 0.11 * s, neck.1);
    j[11] = (0.07 * s, 0.0);
    j[12] = (-0.07 * s, 0.0);
    // Limb chains: direction angle measured from straight down, positive
    // swinging towards the figure's own side.
    let chain = |root: (f64, f64), side: f64, (swing, bend): (f64, f64), l1: f64, l2: f64| {
        let a1 = swing;
        let mid = (root.0 + side * l1 * a1.sin(), root.1 + l1 * a1.cos());
        let a2 = swing + bend;
        let end = (mid.0 + side * l2 * a2.sin(), mid.1 + l2 * a2.cos());
        (mid, end)
    };
    let (le, lw) = chain(j[5], 1.0, p.arm[0], 0.17 * s, 0.15 * s);
    let (re, rw) = chain(j[6], -1.0, p.arm[1], 0.17 * s, 0.15 * s);
    let (lk, la) = chain(j[11], 1.0, p.leg[0], 0.24 * s, 0.23 * s);
    let (rk, ra) = chain(j[12], -1.0, p.leg[1], 0.24 * s, 0.23 * s);
    j[7] = le;
    j[8] = re;
    j[9] = lw;
    j[10] = rw;
    j[13] = lk;
    j[14] = rk;
    j[15] = la;
    j[16] = ra;
    j
}

fn place(p: &PoseParams, root: (f64, f64)) -> Figure {
    let (sin, cos) = p.rotation.sin_cos();
    let mut joints = local_joints(p);
    for q in joints.iter_mut() {
        let (x, y) = *q;
        *q = (root.0 + cos * x - sin * y, root.1 + sin * x + cos * y);
    }
    Figure {
        joints,
        limb_radius: p.limb_radius,
        head_radius: 0.065 * p.height,
        spine: true,
    }
}

fn stamp_capsule(mask: &mut Bitmap, a: (f64, f64), b: (f64, f64), r: f64) {
    let (w, h) = (mask.width() as f64, mask.height() as f64);
    let x0 = (a.0.min(b.0) - r).floor().max(0.0);
    let x1 = (a.0.max(b.0) + r).ceil().min(w - 1.0);
    let y0 = (a.1.min(b.1) - r).floor().max(0.0);
    let y1 = (a.1.max(b.1) + r).ceil().min(h - 1.0);
    if x1 < x0 || y1 < y0 {
        return;
    }
    let (dx, dy) = (b.0 - a.0, b.1 - a.1);
    let len2 = dx * dx + dy * dy;
    for y in y0 as usize..=y1 as usize {
        for x in x0 as usize..=x1 as usize {
            let (px, py) = (x as f64 - a.0, y as f64 - a.1);
            let t = if len2 > 0.0 {
                ((px * dx + py * dy) / len2).clamp(0.0, 1.0)
            } else {
                0.0
            };
            let (ex, ey) = (px - t * dx, py - t * dy);
            if ex * ex + ey * ey <= r * r {
                mask.set(x, y, true);
            }
        }
    }
}

fn rasterize(f: &Figure, w: usize, h: usize) -> Bitmap {
    let mut mask = Bitmap::empty(w, h);
    for &(a, b) in &BODY_CAPSULES {
        stamp_capsule(&mut mask, f.joints[a], f.joints[b], f.limb_radius);
    }
    let mid_hip = mid(f.joints[11], f.joints[12]);
    let neck = mid(f.joints[5], f.joints[6]);
    if f.spine {
        stamp_capsule(&mut mask, mid_hip, neck, f.limb_radius);
    }
    stamp_capsule(&mut mask, neck, f.joints[0], f.limb_radius);
    stamp_capsule(&mut mask, f.joints[0], f.joints[0], f.head_radius);
    mask
}

fn mid(a: (f64, f64), b: (f64, f64)) -> (f64, f64) {
    ((a.0 + b.0) / 2.0, (a.1 + b.1) / 2.0)
}

fn full_iou(a: &Bitmap, b: &Bitmap) -> f64 {
    crate::mask::mask_iou(a, b).unwrap_or(0.0)
}

/// Applies z-order (later persons occlude earlier ones) and assigns
/// visibility: 0 off-canvas, 2 on the person's own visible pixels, 1 otherwise.
fn compose(figures: &[Figure], full: &[Bitmap], w: usize, h: usize) -> SceneAnnotation {
    let mut persons = Vec::with_capacity(figures.len());
    for (k, (fig, mask)) in figures.iter().zip(full).enumerate() {
        let mut visible = mask.clone();
        for later in &full[k + 1..] {
            for (x, y) in later.pixels() {
                visible.set(x, y, false);
            }
        }
        let keypoints = fig
            .joints
            .iter()
            .map(|&(x, y)| {
                if !inside_canvas(x, y, w, h) {
                    Keypoint::absent()
                } else if visible.get(x.round() as usize, y.round() as usize) {
                    Keypoint::new(x, y, Visibility::Visible)
                } else {
                    Keypoint::new(x, y, Visibility::Occluded)
                }
            })
            .collect();
        persons.push(PersonAnnotation {
            instance_id: k as u32 + 1,
            keypoints,
            mask: visible,
        });
    }
    SceneAnnotation {
        width: w,
        height: h,
        persons,
    }
}

fn anchor_position(p: &PersonAnnotation, skeleton: &SkeletonSpec) -> Option<(f64, f64)> {
    crate::encode::select_anchor_keypoint(p, skeleton)
        .ok()
        .map(|j| (p.keypoints[j].x, p.keypoints[j].y))
}

/// Distance from `(x, y)` to the nearest set pixel of `mask`, or infinity
/// when none lies within `cap`.
fn mask_distance(mask: &Bitmap, (x, y): (f64, f64), cap: f64) -> f64 {
    let (w, h) = (mask.width() as i64, mask.height() as i64);
    let x0 = ((x - cap).floor() as i64).max(0);
    let x1 = ((x + cap).ceil() as i64).min(w - 1);
    let y0 = ((y - cap).floor() as i64).max(0);
    let y1 = ((y + cap).ceil() as i64).min(h - 1);
    let mut best = f64::INFINITY;
    for py in y0..=y1 {
        for px in x0..=x1 {
            if mask.get(px as usize, py as usize) {
                let d = ((px as f64 - x).powi(2) + (py as f64 - y).powi(2)).sqrt();
                if d <= cap {
                    best = best.min(d);
                }
            }
        }
    }
    best
}

/// Checks that hold for every emitted scene: enough visible pixels and at
/// least one visible keypoint per person, plus decodability when requested.
fn scene_acceptable(scene: &SceneAnnotation, skeleton: &SkeletonSpec, cfg: &SynthConfig) -> bool {
    for p in &scene.persons {
        if p.mask.count() < cfg.min_visible_pixels {
            return false;
        }
        if !p.keypoints.iter().any(|k| k.visibility == Visibility::Visible) {
            return false;
        }
    }
    !cfg.resolvable || resolvable(scene, skeleton, cfg.disk_radius)
}

fn resolvable(scene: &SceneAnnotation, skeleton: &SkeletonSpec, r: f64) -> bool {
    let reach = r / 4.0;
    let own_gap = reach - 1.5;
    let persons = &scene.persons;
    for p in persons {
        for (_, k) in p.labeled_keypoints() {
            if mask_distance(&p.mask, (k.x, k.y), own_gap) > own_gap {
                return false;
            }
        }
    }
    let sep2 = (0.75 * r).powi(2);
    let half_max = (2.0 * std::f64::consts::LN_2).sqrt();
    for (a, pa) in persons.iter().enumerate() {
        for pb in &persons[a + 1..] {
            for (ka, kb) in pa.keypoints.iter().zip(&pb.keypoints) {
                // A keypoint whose slot is empty in the other person must not be
                // nearer to that person's mask than to its own.
                for (k, own, other, other_kp) in [(ka, pa, pb, kb), (kb, pb, pa, ka)] {
                    if k.visibility.is_labeled() && !other_kp.visibility.is_labeled() {
                        let cross = mask_distance(&other.mask, (k.x, k.y), reach);
                        if cross.is_finite() && cross < mask_distance(&own.mask, (k.x, k.y), reach) + 2.0 {
                            return false;
                        }
                    }
                }
                if !(ka.visibility.is_labeled() && kb.visibility.is_labeled()) {
                    continue;
                }
                if (ka.x - kb.x).powi(2) + (ka.y - kb.y).powi(2) < sep2 {
                    return false;
                }
                // A swapped pairing must be ineligible or clearly worse.
                let cross_a = mask_distance(&pb.mask, (ka.x, ka.y), reach);
                let cross_b = mask_distance(&pa.mask, (kb.x, kb.y), reach);
                if cross_a.is_finite() && cross_b.is_finite() {
                    let own = mask_distance(&pa.mask, (ka.x, ka.y), reach)
                        + mask_distance(&pb.mask, (kb.x, kb.y), reach);
                    if cross_a + cross_b < own + 2.0 {
                        return false;
                    }
                }
            }
            if let (Some(ca), Some(cb)) = (anchor_position(pa, skeleton), anchor_position(pb, skeleton)) {
                let sigma = crate::encode::instance_sigma(pa.mask.count(), r)
                    .max(crate::encode::instance_sigma(pb.mask.count(), r));
                let need = (half_max * sigma + 2.0).max(0.5 * r + 2.0);
                if (ca.0 - cb.0).powi(2) + (ca.1 - cb.1).powi(2) < need * need {
                    return false;
                }
            }
        }
    }
    true
}

fn random_root(rng: &mut ChaCha8Rng, p: &PoseParams, w: usize, h: usize) -> (f64, f64) {
    let s = p.height;
    let span = |lo: f64, hi: f64, rng: &mut ChaCha8Rng| {
        if hi > lo {
            rng.random_range(lo..hi)
        } else {
            (lo + hi) / 2.0
        }
    };
    (
        span(0.2 * s, w as f64 - 0.2 * s, rng),
        span(0.45 * s, h as f64 - 0.4 * s, rng),
    )
}

fn generate_indexed(cfg: &SynthConfig, scene_index: u64, skeleton: &SkeletonSpec) -> Result<SceneAnnotation> {
    cfg.validate()?;
    let (w, h) = (cfg.width, cfg.height);
    let mut count_rng = stream_rng(cfg.rng_seed, stream_id(scene_index, 0xff, 0));
    for attempt in 0..cfg.max_attempts {
        let n = if cfg.person_count.1 > cfg.person_count.0 {
            count_rng.random_range(cfg.person_count.0..=cfg.person_count.1)
        } else {
            cfg.person_count.0
        };
        let mut figures = Vec::with_capacity(n);
        let mut full: Vec<Bitmap> = Vec::with_capacity(n);
        let mut ok = true;
        for k in 0..n {
            // Each person gets a bounded number of placement tries inside this attempt.
            let mut placed = false;
            for retry in 0..32 {
                let mut rng = stream_rng(cfg.rng_seed, stream_id(scene_index, k, attempt * 32 + retry));
                let pose = sample_pose(&mut rng, cfg, PoseStyle::Standing);
                let root = random_root(&mut rng, &pose, w, h);
                let fig = place(&pose, root);
                let mask = rasterize(&fig, w, h);
                if mask.count() < cfg.min_visible_pixels {
                    continue;
                }
                if full.iter().any(|m| full_iou(m, &mask) > cfg.overlap_target) {
                    continue;
                }
                figures.push(fig);
                full.push(mask);
                placed = true;
                break;
            }
            if !placed {
                ok = false;
                break;
            }
        }
        if !ok {
            continue;
        }
        let scene = compose(&figures, &full, w, h);
        if scene_acceptable(&scene, skeleton, cfg) {
            return Ok(scene);
        }
    }
    Err(Error::Generation(format!(
        "no valid scene after {} attempts; try a larger canvas, fewer persons or a higher overlap target",
        cfg.max_attempts
    )))
}

/// Generates one scene, fully determined by `cfg` (including its seed).
pub fn generate_scene(cfg: &SynthConfig) -> Result<SceneAnnotation> {
    generate_indexed(cfg, 0, &SkeletonSpec::coco())
}

/// Generates `count` scenes `0..count` from one seed.
pub fn generate_corpus(cfg: &SynthConfig, count: usize) -> Result<Vec<SceneAnnotation>> {
    let skeleton = SkeletonSpec::coco();
    (0..count as u64)
        .map(|i| generate_indexed(cfg, i, &skeleton))
        .collect()
}

/// Fraction of persons whose visible-mask centroid does not land on their
/// own visible pixels (it falls on background or on another person).
pub fn displaced_centroid_fraction(scene: &SceneAnnotation) -> f64 {
    if scene.persons.is_empty() {
        return 0.0;
    }
    let displaced = scene
        .persons
        .iter()
        .filter(|p| match p.mask.centroid() {
            None => true,
            Some((cx, cy)) => !p.mask.contains(cx.round() as i64, cy.round() as i64),
        })
        .count();
    displaced as f64 / scene.persons.len() as f64
}

/// Scenes of two or three heavily entangled persons sharing one body
/// centroid, so that mask centroids coincide or fall off the persons' own
/// pixels, while each person keeps a visible anchor-priority keypoint.
pub fn make_occlusion_suite(cfg: &SynthConfig, count: usize) -> Result<Vec<SceneAnnotation>> {
    if count == 0 {
        return Err(Error::Config("occlusion suite needs count >= 1".into()));
    }
    cfg.validate()?;
    let skeleton = SkeletonSpec::coco();
    (0..count as u64)
        .map(|i| occlusion_scene(cfg, i, &skeleton))
        .collect()
}

fn occlusion_scene(cfg: &SynthConfig, scene_index: u64, skeleton: &SkeletonSpec) -> Result<SceneAnnotation> {
    let (w, h) = (cfg.width, cfg.height);
    let lo = cfg.person_count.0.clamp(2, 3);
    let hi = cfg.person_count.1.clamp(lo, 3);
    let suite_stream = scene_index | (1 << 31);
    for attempt in 0..cfg.max_attempts {
        let mut rng = stream_rng(cfg.rng_seed, stream_id(suite_stream, 0xff, attempt));
        let n = if hi > lo { rng.random_range(lo..=hi) } else { lo };
        let center = (
            rng.random_range(0.35 * w as f64..0.65 * w as f64),
            rng.random_range(0.35 * h as f64..0.65 * h as f64),
        );
        let base = rng.random_range(0.0..std::f64::consts::PI);
        let mut figures = Vec::with_capacity(n);
        let mut full = Vec::with_capacity(n);
        for k in 0..n {
            let mut prng = stream_rng(cfg.rng_seed, stream_id(suite_stream, k, attempt));
            let mut pose = sample_pose(&mut prng, cfg, PoseStyle::Lunging);
            let spread = std::f64::consts::PI / n as f64;
            pose.rotation = base + k as f64 * spread + prng.random_range(-0.15..0.15);
            // Place once to measure the mask centroid, then shift it onto the shared center.
            let outline = |root| Figure {
                spine: false,
                ..place(&pose, root)
            };
            let probe = rasterize(&outline(center), w, h);
            let (cx, cy) = probe.centroid().unwrap_or(center);
            let jitter = (prng.random_range(-4.0..4.0), prng.random_range(-4.0..4.0));
            let root = (center.0 + (center.0 - cx) + jitter.0, center.1 + (center.1 - cy) + jitter.1);
            let fig = outline(root);
            full.push(rasterize(&fig, w, h));
            figures.push(fig);
        }
        let scene = compose(&figures, &full, w, h);
        let visible_anchor = scene.persons.iter().all(|p| {
            skeleton
                .anchor_priority
                .iter()
                .any(|&j| p.keypoints[j].visibility == Visibility::Visible)
        });
        let suite_cfg = SynthConfig {
            resolvable: false,
            ..cfg.clone()
        };
        if visible_anchor
            && scene_acceptable(&scene, skeleton, &suite_cfg)
            && displaced_centroid_fraction(&scene) >= 0.8
        {
            return Ok(scene);
        }
    }
    Err(Error::Generation(format!(
        "no entangled scene after {} attempts",
        cfg.max_attempts
    )))
}

/// Adds i.i.d. Gaussian noise to heatmaps (then clamped to [0, 1]) and to
/// the offset channels. Offsets stored in pixels receive noise scaled by the
/// disk radius so that `noise_sigma` is always in normalized units. Seed,
/// sigma and instance-id channels are untouched.
pub fn perturb_fields(fields: &EncodedFields, noise_sigma: f64, rng_seed: u64) -> Result<EncodedFields> {
    if !(noise_sigma >= 0.0 && noise_sigma.is_finite()) {
        return Err(Error::Config(format!("noise_sigma must be >= 0, got {noise_sigma}")));
    }
    let mut out = fields.clone();
    if noise_sigma == 0.0 {
        return Ok(out);
    }
    let r = fields.disk_radius;
    let normal = |s: f64| Normal::new(0.0, s).expect("finite positive sigma");

    let mut rng = stream_rng(rng_seed, 1);
    let n = normal(noise_sigma);
    for v in out.heatmaps.data_mut() {
        *v = (*v as f64 + n.sample(&mut rng)).clamp(0.0, 1.0) as f32;
    }

    let mut rng = stream_rng(rng_seed, 2);
    let kc_sigma = if fields.offset_normalization {
        noise_sigma
    } else {
        noise_sigma * r
    };
    let n = normal(kc_sigma);
    for v in out.keycentroid.data_mut() {
        *v = (*v as f64 + n.sample(&mut rng)) as f32;
    }

    let mut rng = stream_rng(rng_seed, 3);
    let n = normal(noise_sigma * r);
    for name in [MC_OFF_X, MC_OFF_Y] {
        let c = out.maskcentroid.require_channel(name)?;
        for v in out.maskcentroid.plane_mut(c) {
            *v = (*v as f64 + n.sample(&mut rng)) as f32;
        }
    }
    Ok(out)
}
