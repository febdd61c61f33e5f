//! Binary instance masks and their run-length encoding.
//!
//! Runs are row-major and always start with a (possibly empty) zero-run,
//! alternating zero/one counts. This differs from COCO's column-major RLE.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Bitmap {
    width: usize,
    height: usize,
    bits: Vec<bool>,
}

impl Bitmap {
    pub fn empty(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            bits: vec![false; width * height],
        }
    }

    pub fn from_bits(width: usize, height: usize, bits: Vec<bool>) -> Result<Self> {
        if bits.len() != width * height {
            return Err(Error::Mask(format!(
                "bitmap of {} bits does not fit a {width}x{height} canvas",
                bits.len()
            )));
        }
        Ok(Self {
            width,
            height,
            bits,
        })
    }

    pub fn from_rle(width: usize, height: usize, runs: &[u64]) -> Result<Self> {
        let total: u64 = runs.iter().sum();
        let n = (width * height) as u64;
        if total != n {
            return Err(Error::Mask(format!(
                "run lengths sum to {total}, canvas {width}x{height} needs {n}"
            )));
        }
        let mut bits = Vec::with_capacity(n as usize);
        for (i, &run) in runs.iter().enumerate() {
            bits.extend(std::iter::repeat_n(i % 2 == 1, run as usize));
        }
        Ok(Self {
            width,
            height,
            bits,
        })
    }

    pub fn to_rle(&self) -> Vec<u64> {
        let mut runs = Vec::new();
        let mut current = false;
        let mut count = 0u64;
        for &b in &self.bits {
            if b != current {
                runs.push(count);
                count = 0;
                current = b;
            }
            count += 1;
        }
        runs.push(count);
        runs
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> bool {
        self.bits[y * self.width + x]
    }

    /// Membership test for arbitrary (possibly off-canvas) integer coordinates.
    #[inline]
    pub fn contains(&self, x: i64, y: i64) -> bool {
        x >= 0
            && y >= 0
            && (x as usize) < self.width
            && (y as usize) < self.height
            && self.bits[y as usize * self.width + x as usize]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: bool) {
        self.bits[y * self.width + x] = v;
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|b| **b).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.bits.iter().any(|b| *b)
    }

    /// Iterates `(x, y)` of set pixels in row-major order.
    pub fn pixels(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        let w = self.width;
        self.bits
            .iter()
            .enumerate()
            .filter(|(_, b)| **b)
            .map(move |(i, _)| (i % w, i / w))
    }

    /// Mean pixel position, or `None` for an empty mask.
    pub fn centroid(&self) -> Option<(f64, f64)> {
        let (mut sx, mut sy, mut n) = (0.0, 0.0, 0usize);
        for (x, y) in self.pixels() {
            sx += x as f64;
            sy += y as f64;
            n += 1;
        }
        (n > 0).then(|| (sx / n as f64, sy / n as f64))
    }

    /// Inclusive bounding box `(x0, y0, x1, y1)`.
    pub fn bbox(&self) -> Option<(usize, usize, usize, usize)> {
        let mut bb: Option<(usize, usize, usize, usize)> = None;
        for (x, y) in self.pixels() {
            bb = Some(match bb {
                None => (x, y, x, y),
                Some((x0, y0, x1, y1)) => (x0.min(x), y0.min(y), x1.max(x), y1.max(y)),
            });
        }
        bb
    }

    pub fn same_canvas(&self, other: &Bitmap) -> bool {
        self.width == other.width && self.height == other.height
    }
}

/// Intersection over union; 0 when both masks are empty.
pub fn mask_iou(a: &Bitmap, b: &Bitmap) -> Result<f64> {
    if !a.same_canvas(b) {
        return Err(Error::Schema(format!(
            "mask canvases differ: {}x{} vs {}x{}",
            a.width, a.height, b.width, b.height
        )));
    }
    let (mut inter, mut union) = (0u64, 0u64);
    for (&p, &q) in a.bits.iter().zip(&b.bits) {
        inter += (p && q) as u64;
        union += (p || q) as u64;
    }
    Ok(if union == 0 {
        0.0
    } else {
        inter as f64 / union as f64
    })
}
