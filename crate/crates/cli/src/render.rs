//! PNG overlays of scenes and detections.

use image::codecs::png::PngEncoder;
use image::{ExtendedColorType, ImageEncoder, Rgb, RgbImage};

use vcodec::encode::select_anchor_keypoint;
use vcodec::skeleton::COCO_LIMBS;
use vcodec::{Bitmap, Detections, SceneAnnotation, SkeletonSpec};

use crate::CliError;

pub const PALETTE: [[u8; 3]; 10] = [
    [230, 25, 75],
    [60, 180, 75],
    [0, 130, 200],
    [245, 130, 48],
    [145, 30, 180],
    [70, 240, 240],
    [240, 50, 230],
    [210, 245, 60],
    [250, 190, 190],
    [0, 128, 128],
];

const KEYPOINT_COLOR: Rgb<u8> = Rgb([255, 255, 255]);
const ANCHOR_COLOR: Rgb<u8> = Rgb([255, 225, 25]);
const ANCHOR_ARM: i64 = 4;

pub struct OverlayInstance {
    pub mask: Bitmap,
    pub keypoints: Vec<Option<(f64, f64)>>,
    pub anchor: Option<(f64, f64)>,
}

pub struct Overlay {
    pub width: usize,
    pub height: usize,
    pub instances: Vec<OverlayInstance>,
}

impl Overlay {
    pub fn from_scene(scene: &SceneAnnotation, skeleton: &SkeletonSpec) -> Self {
        let instances = scene
            .persons
            .iter()
            .map(|p| OverlayInstance {
                mask: p.mask.clone(),
                keypoints: p
                    .keypoints
                    .iter()
                    .map(|k| k.visibility.is_labeled().then_some((k.x, k.y)))
                    .collect(),
                anchor: select_anchor_keypoint(p, skeleton)
                    .ok()
                    .map(|j| (p.keypoints[j].x, p.keypoints[j].y)),
            })
            .collect();
        Self {
            width: scene.width,
            height: scene.height,
            instances,
        }
    }

    pub fn from_detections(dets: &Detections) -> Self {
        let instances = dets
            .instances
            .iter()
            .map(|d| OverlayInstance {
                mask: d.mask.clone(),
                keypoints: d.keypoints.iter().map(|k| k.present.then_some((k.x, k.y))).collect(),
                anchor: Some(d.anchor),
            })
            .collect();
        Self {
            width: dets.width,
            height: dets.height,
            instances,
        }
    }
}

fn put(img: &mut RgbImage, x: i64, y: i64, c: Rgb<u8>) {
    if x >= 0 && y >= 0 && (x as u32) < img.width() && (y as u32) < img.height() {
        img.put_pixel(x as u32, y as u32, c);
    }
}

fn line(img: &mut RgbImage, a: (f64, f64), b: (f64, f64), c: Rgb<u8>) {
    let steps = (b.0 - a.0).abs().max((b.1 - a.1).abs()).ceil().max(1.0) as usize;
    for s in 0..=steps {
        let t = s as f64 / steps as f64;
        let x = a.0 + (b.0 - a.0) * t;
        let y = a.1 + (b.1 - a.1) * t;
        put(img, x.round() as i64, y.round() as i64, c);
    }
}

fn dot(img: &mut RgbImage, p: (f64, f64), c: Rgb<u8>) {
    let (cx, cy) = (p.0.round() as i64, p.1.round() as i64);
    for dy in -1..=1 {
        for dx in -1..=1 {
            put(img, cx + dx, cy + dy, c);
        }
    }
}

/// Masks at half intensity over black, then limbs, keypoints and anchor
/// crosses. Instance `i` uses palette entry `i mod 10`.
pub fn render(overlay: &Overlay, width: usize, height: usize) -> RgbImage {
    let mut img = RgbImage::new(width as u32, height as u32);
    for (i, inst) in overlay.instances.iter().enumerate() {
        let [r, g, b] = PALETTE[i % PALETTE.len()];
        let fill = Rgb([r / 2, g / 2, b / 2]);
        for (x, y) in inst.mask.pixels() {
            put(&mut img, x as i64, y as i64, fill);
        }
    }
    for (i, inst) in overlay.instances.iter().enumerate() {
        let color = Rgb(PALETTE[i % PALETTE.len()]);
        for &(a, b) in COCO_LIMBS.iter() {
            if let (Some(Some(p)), Some(Some(q))) = (inst.keypoints.get(a), inst.keypoints.get(b)) {
                line(&mut img, *p, *q, color);
            }
        }
        for p in inst.keypoints.iter().flatten() {
            dot(&mut img, *p, KEYPOINT_COLOR);
        }
        if let Some((ax, ay)) = inst.anchor {
            let (cx, cy) = (ax.round() as i64, ay.round() as i64);
            for d in -ANCHOR_ARM..=ANCHOR_ARM {
                put(&mut img, cx + d, cy, ANCHOR_COLOR);
                put(&mut img, cx, cy + d, ANCHOR_COLOR);
            }
        }
    }
    img
}

pub fn render_png(overlay: &Overlay, width: usize, height: usize) -> Result<Vec<u8>, CliError> {
    let img = render(overlay, width, height);
    let mut buf = Vec::new();
    PngEncoder::new(&mut buf)
        .write_image(img.as_raw(), img.width(), img.height(), ExtendedColorType::Rgb8)
        .map_err(|e| CliError::Data(format!("png encoding failed: {e}")))?;
    Ok(buf)
}
