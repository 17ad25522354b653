use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Extent of a video volume: frames × rows × cols.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Dims {
    pub frames: usize,
    pub rows: usize,
    pub cols: usize,
}

impl Dims {
    pub const fn new(frames: usize, rows: usize, cols: usize) -> Self {
        Dims { frames, rows, cols }
    }

    pub const fn len(&self) -> usize {
        self.frames * self.rows * self.cols
    }

    pub const fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub const fn frame_len(&self) -> usize {
        self.rows * self.cols
    }

    #[inline]
    pub const fn index(&self, t: usize, r: usize, c: usize) -> usize {
        (t * self.rows + r) * self.cols + c
    }

    #[inline]
    pub const fn coords(&self, idx: usize) -> (usize, usize, usize) {
        let c = idx % self.cols;
        let rest = idx / self.cols;
        (rest / self.rows, rest % self.rows, c)
    }

    /// Index of a signed coordinate, if it falls inside the volume.
    #[inline]
    pub fn checked_index(&self, t: i64, r: i64, c: i64) -> Option<usize> {
        if t < 0 || r < 0 || c < 0 {
            return None;
        }
        let (t, r, c) = (t as usize, r as usize, c as usize);
        (t < self.frames && r < self.rows && c < self.cols).then(|| self.index(t, r, c))
    }
}

impl fmt::Display for Dims {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}x{}", self.frames, self.rows, self.cols)
    }
}

/// Grayscale video with luminance samples in `[0, 1]`, frame-major then
/// row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Video {
    dims: Dims,
    samples: Vec<f64>,
}

impl Video {
    pub fn new(dims: Dims, samples: Vec<f64>) -> Result<Self> {
        if dims.is_empty() {
            return Err(Error::TooSmall {
                dims,
                reason: "every dimension must be at least 1".into(),
            });
        }
        if samples.len() != dims.len() {
            return Err(Error::Config(format!(
                "{} samples supplied for a {} video",
                samples.len(),
                dims
            )));
        }
        if let Some(i) = samples.iter().position(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::Config(format!(
                "sample {} = {} lies outside [0, 1]",
                i, samples[i]
            )));
        }
        Ok(Video { dims, samples })
    }

    pub fn filled(dims: Dims, value: f64) -> Self {
        Video::new(dims, vec![value; dims.len()]).expect("fill value must lie in [0, 1]")
    }

    pub fn from_fn(dims: Dims, mut f: impl FnMut(usize, usize, usize) -> f64) -> Result<Self> {
        let mut samples = Vec::with_capacity(dims.len());
        for t in 0..dims.frames {
            for r in 0..dims.rows {
                for c in 0..dims.cols {
                    samples.push(f(t, r, c));
                }
            }
        }
        Video::new(dims, samples)
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    #[inline]
    pub fn get(&self, t: usize, r: usize, c: usize) -> f64 {
        self.samples[self.dims.index(t, r, c)]
    }

    pub fn frame(&self, t: usize) -> &[f64] {
        let n = self.dims.frame_len();
        &self.samples[t * n..(t + 1) * n]
    }

    /// Mutable samples. Callers must keep every value in `[0, 1]`.
    pub(crate) fn samples_mut(&mut self) -> &mut [f64] {
        &mut self.samples
    }

    pub fn into_samples(self) -> Vec<f64> {
        self.samples
    }

    /// Frames in reverse order.
    pub fn reversed(&self) -> Video {
        let n = self.dims.frame_len();
        let samples = self.samples.chunks(n).rev().flatten().copied().collect();
        Video {
            dims: self.dims,
            samples,
        }
    }

    /// Frames `start..end` as a new video.
    pub fn frames_range(&self, start: usize, end: usize) -> Result<Video> {
        if start >= end || end > self.dims.frames {
            return Err(Error::Config(format!(
                "frame range {start}..{end} outside 0..{}",
                self.dims.frames
            )));
        }
        let n = self.dims.frame_len();
        Ok(Video {
            dims: Dims::new(end - start, self.dims.rows, self.dims.cols),
            samples: self.samples[start * n..end * n].to_vec(),
        })
    }
}

/// Binary volume marking sites, e.g. ground truth or a detection map.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MaskVolume {
    dims: Dims,
    bits: Vec<bool>,
}

impl MaskVolume {
    pub fn empty(dims: Dims) -> Self {
        MaskVolume {
            dims,
            bits: vec![false; dims.len()],
        }
    }

    pub fn from_bits(dims: Dims, bits: Vec<bool>) -> Result<Self> {
        if bits.len() != dims.len() {
            return Err(Error::Config(format!(
                "{} mask bits supplied for {}",
                bits.len(),
                dims
            )));
        }
        Ok(MaskVolume { dims, bits })
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn bits_mut(&mut self) -> &mut [bool] {
        &mut self.bits
    }

    #[inline]
    pub fn get(&self, t: usize, r: usize, c: usize) -> bool {
        self.bits[self.dims.index(t, r, c)]
    }

    #[inline]
    pub fn set(&mut self, t: usize, r: usize, c: usize, v: bool) {
        let i = self.dims.index(t, r, c);
        self.bits[i] = v;
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn frame(&self, t: usize) -> &[bool] {
        let n = self.dims.frame_len();
        &self.bits[t * n..(t + 1) * n]
    }

    /// Indices of frames holding at least one set site.
    pub fn active_frames(&self) -> Vec<usize> {
        (0..self.dims.frames)
            .filter(|&t| self.frame(t).iter().any(|&b| b))
            .collect()
    }

    pub fn union(&self, other: &MaskVolume) -> Result<MaskVolume> {
        self.check_dims(other)?;
        let bits = self
            .bits
            .iter()
            .zip(&other.bits)
            .map(|(&a, &b)| a || b)
            .collect();
        Ok(MaskVolume {
            dims: self.dims,
            bits,
        })
    }

    pub fn reversed(&self) -> MaskVolume {
        let n = self.dims.frame_len();
        MaskVolume {
            dims: self.dims,
            bits: self.bits.chunks(n).rev().flatten().copied().collect(),
        }
    }

    pub(crate) fn check_dims(&self, other: &MaskVolume) -> Result<()> {
        if self.dims != other.dims {
            return Err(Error::DimMismatch {
                left: self.dims,
                right: other.dims,
            });
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn index_round_trip() {
        let d = Dims::new(3, 5, 7);
        for i in 0..d.len() {
            let (t, r, c) = d.coords(i);
            assert_eq!(d.index(t, r, c), i);
        }
        assert_eq!(d.checked_index(-1, 0, 0), None);
        assert_eq!(d.checked_index(0, 5, 0), None);
        assert_eq!(d.checked_index(2, 4, 6), Some(d.len() - 1));
    }

    #[test]
    fn rejects_out_of_range_samples() {
        assert!(Video::new(Dims::new(1, 1, 2), vec![0.5, 1.5]).is_err());
        assert!(Video::new(Dims::new(1, 1, 2), vec![0.5]).is_err());
        assert!(Video::new(Dims::new(0, 1, 1), vec![]).is_err());
    }

    #[test]
    fn reversal_is_an_involution() {
        let v = Video::from_fn(Dims::new(4, 2, 3), |t, r, c| {
            (t * 6 + r * 3 + c) as f64 / 24.0
        })
        .unwrap();
        let rev = v.reversed();
        assert_eq!(rev.get(0, 1, 2), v.get(3, 1, 2));
        assert_eq!(rev.reversed(), v);
    }
}
