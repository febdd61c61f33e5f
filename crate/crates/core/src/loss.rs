//! Training losses over field grids, with analytic gradients and a
//! central-difference harness to check them.
//!
//! All reductions run in f64 in storage order (channel-major, row-major),
//! so values are bit-reproducible.

use serde::{Deserialize, Serialize};

use crate::annotation::SceneAnnotation;
use crate::config::EncodeConfig;
use crate::encode::{encode_heatmaps, encode_keycentroid, instance_regions, keycentroid_weights, MC_OFF_X, MC_OFF_Y, MC_SIGMA};
use crate::error::{Error, Result};
use crate::grid::FieldGrid;
use crate::skeleton::SkeletonSpec;

/// Probability clamp used inside every logarithm.
pub const EPS: f64 = 1e-7;

/// Regression pixels need a weight above this.
pub const MIN_WEIGHT: f64 = 1e-6;

fn same_shape(a: &FieldGrid, b: &FieldGrid, what: &str) -> Result<()> {
    if a.height() != b.height() || a.width() != b.width() || a.channel_count() != b.channel_count() {
        return Err(Error::Schema(format!(
            "{what}: shapes {}x{}x{} and {}x{}x{} differ",
            a.height(),
            a.width(),
            a.channel_count(),
            b.height(),
            b.width(),
            b.channel_count()
        )));
    }
    Ok(())
}

fn grad_grid(like: &FieldGrid, data: Vec<f64>) -> FieldGrid {
    FieldGrid::new(
        like.height(),
        like.width(),
        like.channels().to_vec(),
        data.into_iter().map(|g| g as f32).collect(),
    )
    .expect("gradient has the shape of its input")
}

/// BCE term and its derivative in the prediction; the derivative is zero
/// where the clamp is active.
#[inline]
fn bce(p: f64, y: f64) -> (f64, f64) {
    let q = p.clamp(EPS, 1.0 - EPS);
    let value = -(y * q.ln() + (1.0 - y) * (1.0 - q).ln());
    let slope = if p > EPS && p < 1.0 - EPS {
        -y / q + (1.0 - y) / (1.0 - q)
    } else {
        0.0
    };
    (value, slope)
}

/// Mean binary cross-entropy over all pixels and channels.
pub fn heatmap_loss(pred: &FieldGrid, target: &FieldGrid) -> Result<f64> {
    heatmap_loss_grad(pred, target).map(|(v, _)| v)
}

pub fn heatmap_loss_grad(pred: &FieldGrid, target: &FieldGrid) -> Result<(f64, FieldGrid)> {
    same_shape(pred, target, "heatmap loss")?;
    let n = pred.data().len();
    if n == 0 {
        return Err(Error::UndefinedLoss("heatmap loss over an empty grid".into()));
    }
    let mut sum = 0.0;
    let mut grad = Vec::with_capacity(n);
    for (&p, &y) in pred.data().iter().zip(target.data()) {
        let (v, g) = bce(p as f64, y as f64);
        sum += v;
        grad.push(g / n as f64);
    }
    Ok((sum / n as f64, grad_grid(pred, grad)))
}

/// Weighted squared offset error inside keypoint disks, normalized by the
/// total weight. `weight` has one channel per slot (as produced by
/// `keycentroid_weights`) or a single channel shared by all slots.
pub fn keycentroid_loss(pred: &FieldGrid, target: &FieldGrid, weight: &FieldGrid) -> Result<f64> {
    keycentroid_loss_grad(pred, target, weight).map(|(v, _)| v)
}

pub fn keycentroid_loss_grad(pred: &FieldGrid, target: &FieldGrid, weight: &FieldGrid) -> Result<(f64, FieldGrid)> {
    same_shape(pred, target, "keycentroid loss")?;
    let slots = pred.channel_count() / 2;
    if !pred.channel_count().is_multiple_of(2) {
        return Err(Error::Schema(format!(
            "keycentroid grids need an even channel count, got {}",
            pred.channel_count()
        )));
    }
    if weight.height() != pred.height()
        || weight.width() != pred.width()
        || !(weight.channel_count() == slots || weight.channel_count() == 1)
    {
        return Err(Error::Schema(format!(
            "weight grid {}x{}x{} does not fit {} slots of {}x{}",
            weight.height(),
            weight.width(),
            weight.channel_count(),
            slots,
            pred.height(),
            pred.width()
        )));
    }
    let plane = pred.plane_len();
    let mut total_w = 0.0;
    let mut sum = 0.0;
    for j in 0..slots {
        let w = weight.plane(if weight.channel_count() == 1 { 0 } else { j });
        let (px, py) = (pred.plane(2 * j), pred.plane(2 * j + 1));
        let (tx, ty) = (target.plane(2 * j), target.plane(2 * j + 1));
        for i in 0..plane {
            let wi = w[i] as f64;
            if wi < 0.0 || !wi.is_finite() {
                return Err(Error::InvalidValue(format!("negative or non-finite weight {wi}")));
            }
            if wi <= MIN_WEIGHT {
                continue;
            }
            let (dx, dy) = (px[i] as f64 - tx[i] as f64, py[i] as f64 - ty[i] as f64);
            total_w += wi;
            sum += wi * (dx * dx + dy * dy);
        }
    }
    if total_w == 0.0 {
        return Err(Error::UndefinedLoss("keycentroid weight is zero everywhere".into()));
    }
    let mut grad = vec![0.0f64; pred.data().len()];
    for j in 0..slots {
        let w = weight.plane(if weight.channel_count() == 1 { 0 } else { j });
        for c in [2 * j, 2 * j + 1] {
            let (p, t) = (pred.plane(c), target.plane(c));
            let g = &mut grad[c * plane..(c + 1) * plane];
            for i in 0..plane {
                let wi = w[i] as f64;
                if wi > MIN_WEIGHT {
                    g[i] = 2.0 * wi * (p[i] as f64 - t[i] as f64) / total_w;
                }
            }
        }
    }
    Ok((sum / total_w, grad_grid(pred, grad)))
}

/// Gradients of the mask-centroid loss.
#[derive(Debug, Clone)]
pub struct MaskCentroidGrad {
    pub value: f64,
    /// Same layout as the predicted offsets.
    pub offsets: FieldGrid,
    /// Same layout as the predicted sigma.
    pub sigma: FieldGrid,
}

/// Background pixels of the ring around centroid `c`: the `count` nearest
/// pixels with `R < |p - c| <= 2R`, ordered by distance, then y, then x.
pub fn background_ring(background: &[bool], w: usize, h: usize, c: (f64, f64), r: f64, count: usize) -> Vec<usize> {
    let (x0, x1) = (((c.0 - 2.0 * r).floor().max(0.0)) as usize, ((c.0 + 2.0 * r).ceil().min(w as f64 - 1.0)) as usize);
    let (y0, y1) = (((c.1 - 2.0 * r).floor().max(0.0)) as usize, ((c.1 + 2.0 * r).ceil().min(h as f64 - 1.0)) as usize);
    let mut ring = Vec::new();
    for y in y0..=y1 {
        for x in x0..=x1 {
            if !background[y * w + x] {
                continue;
            }
            let d2 = (x as f64 - c.0).powi(2) + (y as f64 - c.1).powi(2);
            if d2 > r * r && d2 <= 4.0 * r * r {
                ring.push((d2, y, x));
            }
        }
    }
    ring.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    ring.truncate(count);
    ring.into_iter().map(|(_, y, x)| y * w + x).collect()
}

/// For every instance (static or dynamic centroid per `cfg`), BCE between
/// `phi(m + v, C, sigma)` and membership, over the instance pixels plus an
/// equal number of ring background pixels; averaged over instances. `sigma`
/// is the instance mean of the predicted sigma.
///
/// `pred_offsets` carries `mc/off_x` and `mc/off_y` (or two unnamed channels
/// in that order); `pred_sigma` carries `mc/sigma` (or one channel).
pub fn maskcentroid_loss(
    pred_offsets: &FieldGrid,
    pred_sigma: &FieldGrid,
    scene: &SceneAnnotation,
    skeleton: &SkeletonSpec,
    cfg: &EncodeConfig,
) -> Result<f64> {
    maskcentroid_loss_grad(pred_offsets, pred_sigma, scene, skeleton, cfg).map(|g| g.value)
}

pub fn maskcentroid_loss_grad(
    pred_offsets: &FieldGrid,
    pred_sigma: &FieldGrid,
    scene: &SceneAnnotation,
    skeleton: &SkeletonSpec,
    cfg: &EncodeConfig,
) -> Result<MaskCentroidGrad> {
    let (w, h) = (scene.width, scene.height);
    for (g, what, min_channels) in [(pred_offsets, "offsets", 2), (pred_sigma, "sigma", 1)] {
        if g.width() != w || g.height() != h || g.channel_count() < min_channels {
            return Err(Error::Schema(format!(
                "predicted {what} grid {}x{}x{} does not fit a {w}x{h} scene",
                g.height(),
                g.width(),
                g.channel_count()
            )));
        }
    }
    let (cx_off, cy_off) = (
        pred_offsets.channel_index(MC_OFF_X).unwrap_or(0),
        pred_offsets.channel_index(MC_OFF_Y).unwrap_or(1),
    );
    let ox = pred_offsets.plane(cx_off);
    let oy = pred_offsets.plane(cy_off);
    let c_sigma = pred_sigma.channel_index(MC_SIGMA).unwrap_or(0);
    let sg = pred_sigma.plane(c_sigma);

    let regions: Vec<_> = instance_regions(scene, skeleton, cfg.centroid_mode)
        .into_iter()
        .filter(|r| !r.pixels.is_empty())
        .collect();
    if regions.is_empty() {
        return Err(Error::UndefinedLoss("scene has no instance pixels".into()));
    }
    let mut background = vec![true; w * h];
    for r in &regions {
        for (x, y) in r.pixels.pixels() {
            background[y * w + x] = false;
        }
    }

    let n_inst = regions.len() as f64;
    let plane = w * h;
    let mut g_off = vec![0.0f64; pred_offsets.data().len()];
    let mut g_sig = vec![0.0f64; pred_sigma.data().len()];
    let mut total = 0.0;
    for region in &regions {
        let members: Vec<usize> = region.pixels.pixels().map(|(x, y)| y * w + x).collect();
        let mut sigma = 0.0;
        for &i in &members {
            let s = sg[i] as f64;
            if !(s > 0.0) {
                return Err(Error::Domain(format!(
                    "predicted sigma {s} at ({}, {}) must be positive",
                    i % w,
                    i / w
                )));
            }
            sigma += s;
        }
        sigma /= members.len() as f64;
        let c = region.centroid;
        let ring = background_ring(&background, w, h, c, cfg.disk_radius, members.len());
        let count = (members.len() + ring.len()) as f64;
        let scale = 1.0 / (n_inst * count);
        let two_s2 = 2.0 * sigma * sigma;
        let mut d_sigma = 0.0;
        let mut sum = 0.0;
        for (pixels, y) in [(&members, 1.0), (&ring, 0.0)] {
            for &i in pixels.iter() {
                let (mx, my) = ((i % w) as f64, (i / w) as f64);
                let ex = mx + ox[i] as f64 - c.0;
                let ey = my + oy[i] as f64 - c.1;
                let d2 = ex * ex + ey * ey;
                let phi = (-d2 / two_s2).exp();
                let (v, slope) = bce(phi, y);
                sum += v;
                if slope != 0.0 {
                    let dphi = slope * phi * scale;
                    g_off[cx_off * plane + i] += dphi * (-ex / (sigma * sigma));
                    g_off[cy_off * plane + i] += dphi * (-ey / (sigma * sigma));
                    d_sigma += dphi * d2 / (sigma * sigma * sigma);
                }
            }
        }
        total += sum / count;
        let per_pixel = d_sigma / members.len() as f64;
        for &i in &members {
            g_sig[c_sigma * plane + i] += per_pixel;
        }
    }
    Ok(MaskCentroidGrad {
        value: total / n_inst,
        offsets: grad_grid(pred_offsets, g_off),
        sigma: grad_grid(pred_sigma, g_sig),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LossWeights {
    pub heatmap: f64,
    pub keycentroid: f64,
    pub maskcentroid: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            heatmap: 4.0,
            keycentroid: 1.0,
            maskcentroid: 1.0,
        }
    }
}

impl LossWeights {
    pub fn new(heatmap: f64, keycentroid: f64, maskcentroid: f64) -> Self {
        Self {
            heatmap,
            keycentroid,
            maskcentroid,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let all = [self.heatmap, self.keycentroid, self.maskcentroid];
        if all.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::Config(format!("loss weights must be >= 0, got {all:?}")));
        }
        if all.iter().all(|w| *w == 0.0) {
            return Err(Error::Config("loss weights are all zero".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    pub value: f64,
    pub heatmap: f64,
    pub keycentroid: f64,
    pub maskcentroid: f64,
    pub weights: LossWeights,
}

impl LossReport {
    pub fn from_terms(heatmap: f64, keycentroid: f64, maskcentroid: f64, weights: LossWeights) -> Self {
        Self {
            value: weights.heatmap * heatmap + weights.keycentroid * keycentroid + weights.maskcentroid * maskcentroid,
            heatmap,
            keycentroid,
            maskcentroid,
            weights,
        }
    }
}

/// Predicted fields in the encoder's layouts.
#[derive(Debug, Clone, Copy)]
pub struct Predictions<'a> {
    pub heatmaps: &'a FieldGrid,
    pub keycentroid: &'a FieldGrid,
    /// Needs the offset and sigma channels.
    pub maskcentroid: &'a FieldGrid,
}

/// Weighted sum of the three losses against targets encoded from `scene`.
/// Terms with zero weight are not evaluated and reported as 0.
pub fn combined_loss(
    preds: Predictions<'_>,
    scene: &SceneAnnotation,
    skeleton: &SkeletonSpec,
    cfg: &EncodeConfig,
    weights: LossWeights,
) -> Result<LossReport> {
    weights.validate()?;
    cfg.validate()?;
    let heatmap = if weights.heatmap > 0.0 {
        heatmap_loss(preds.heatmaps, &encode_heatmaps(scene, skeleton, cfg)?)?
    } else {
        0.0
    };
    let keycentroid = if weights.keycentroid > 0.0 {
        let target = encode_keycentroid(scene, skeleton, cfg)?;
        keycentroid_loss(preds.keycentroid, &target, &keycentroid_weights(scene, skeleton, cfg)?)?
    } else {
        0.0
    };
    let maskcentroid = if weights.maskcentroid > 0.0 {
        maskcentroid_loss(preds.maskcentroid, preds.maskcentroid, scene, skeleton, cfg)?
    } else {
        0.0
    };
    Ok(LossReport::from_terms(heatmap, keycentroid, maskcentroid, weights))
}

/// Central differences `(f(x+) - f(x-)) / (x+ - x-)` per element, where
/// `x± = x ± step` rounded to f32; dividing by the step that is actually
/// stored keeps the quotient exact for quadratics.
pub fn numeric_gradient<F>(mut loss: F, grid: &FieldGrid, step: f64) -> Result<FieldGrid>
where
    F: FnMut(&FieldGrid) -> f64,
{
    if !(step > 0.0 && step.is_finite()) {
        return Err(Error::Config(format!("finite-difference step must be positive, got {step}")));
    }
    let mut probe = grid.clone();
    let mut out = Vec::with_capacity(grid.data().len());
    for i in 0..grid.data().len() {
        let x = grid.data()[i];
        let hi = (x as f64 + step) as f32;
        let lo = (x as f64 - step) as f32;
        probe.data_mut()[i] = hi;
        let f_hi = loss(&probe);
        probe.data_mut()[i] = lo;
        let f_lo = loss(&probe);
        probe.data_mut()[i] = x;
        out.push((f_hi - f_lo) / (hi as f64 - lo as f64));
    }
    Ok(grad_grid(grid, out))
}
