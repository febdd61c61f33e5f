//! Named-channel float grids.

use crate::error::{Error, Result};

/// An `H x W x C` float32 grid stored as channel-major planes, each plane
/// row-major. Every heatmap, offset field, seed map and sigma map in the
/// codec travels as a `FieldGrid`.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldGrid {
    height: usize,
    width: usize,
    channels: Vec<String>,
    data: Vec<f32>,
}

impl FieldGrid {
    pub fn new(height: usize, width: usize, channels: Vec<String>, data: Vec<f32>) -> Result<Self> {
        check_channel_names(&channels)?;
        let expected = height * width * channels.len();
        if data.len() != expected {
            return Err(Error::Length {
                expected: expected as u64,
                found: data.len() as u64,
            });
        }
        Ok(Self {
            height,
            width,
            channels,
            data,
        })
    }

    pub fn zeros(height: usize, width: usize, channels: Vec<String>) -> Result<Self> {
        let n = height * width * channels.len();
        Self::new(height, width, channels, vec![0.0; n])
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn plane_len(&self) -> usize {
        self.height * self.width
    }

    pub fn channel_count(&self) -> usize {
        self.channels.len()
    }

    pub fn channels(&self) -> &[String] {
        &self.channels
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    pub fn channel_index(&self, name: &str) -> Option<usize> {
        self.channels.iter().position(|c| c == name)
    }

    /// Index of `name`, or a schema error naming the missing channel.
    pub fn require_channel(&self, name: &str) -> Result<usize> {
        self.channel_index(name)
            .ok_or_else(|| Error::Schema(format!("missing channel `{name}`")))
    }

    pub fn plane(&self, c: usize) -> &[f32] {
        let n = self.plane_len();
        &self.data[c * n..(c + 1) * n]
    }

    pub fn plane_mut(&mut self, c: usize) -> &mut [f32] {
        let n = self.plane_len();
        &mut self.data[c * n..(c + 1) * n]
    }

    #[inline]
    pub fn get(&self, c: usize, y: usize, x: usize) -> f32 {
        self.data[(c * self.height + y) * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, c: usize, y: usize, x: usize, v: f32) {
        self.data[(c * self.height + y) * self.width + x] = v;
    }

    pub fn same_shape(&self, other: &FieldGrid) -> bool {
        self.height == other.height
            && self.width == other.width
            && self.channels.len() == other.channels.len()
    }

    /// Fails on the first NaN or infinite value.
    pub fn check_finite(&self) -> Result<()> {
        match self.data.iter().position(|v| !v.is_finite()) {
            None => Ok(()),
            Some(i) => {
                let n = self.plane_len().max(1);
                let c = i / n;
                let (y, x) = ((i % n) / self.width.max(1), i % self.width.max(1));
                Err(Error::InvalidValue(format!(
                    "non-finite value {} in channel `{}` at ({x}, {y})",
                    self.data[i], self.channels[c]
                )))
            }
        }
    }

    /// Bit-level equality, distinguishing -0.0 from 0.0.
    pub fn bit_eq(&self, other: &FieldGrid) -> bool {
        self.height == other.height
            && self.width == other.width
            && self.channels == other.channels
            && self.data.len() == other.data.len()
            && self
                .data
                .iter()
                .zip(&other.data)
                .all(|(a, b)| a.to_bits() == b.to_bits())
    }
}

pub(crate) fn check_channel_names(channels: &[String]) -> Result<()> {
    for (i, name) in channels.iter().enumerate() {
        if name.is_empty() {
            return Err(Error::Schema(format!("channel {i} has an empty name")));
        }
        if channels[..i].contains(name) {
            return Err(Error::Schema(format!("duplicate channel name `{name}`")));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn names(n: &[&str]) -> Vec<String> {
        n.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn layout_is_channel_major() {
        let data: Vec<f32> = (0..12).map(|v| v as f32).collect();
        let g = FieldGrid::new(2, 3, names(&["a", "b"]), data).unwrap();
        assert_eq!(g.get(0, 1, 2), 5.0);
        assert_eq!(g.get(1, 0, 0), 6.0);
        assert_eq!(g.plane(1), &[6.0, 7.0, 8.0, 9.0, 10.0, 11.0]);
    }

    #[test]
    fn rejects_bad_length_and_names() {
        assert!(matches!(
            FieldGrid::new(2, 2, names(&["a"]), vec![0.0; 3]),
            Err(Error::Length { expected: 4, found: 3 })
        ));
        assert!(matches!(
            FieldGrid::zeros(1, 1, names(&["a", "a"])),
            Err(Error::Schema(_))
        ));
        assert!(matches!(FieldGrid::zeros(1, 1, names(&[""])), Err(Error::Schema(_))));
    }

    #[test]
    fn finite_check_reports_location() {
        let mut g = FieldGrid::zeros(2, 2, names(&["a"])).unwrap();
        g.set(0, 1, 0, f32::NAN);
        let msg = g.check_finite().unwrap_err().to_string();
        assert!(msg.contains("(0, 1)"), "{msg}");
    }
}
