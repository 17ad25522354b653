//! Synthetic copy-move forgeries with exact ground truth.
//!
//! A region of a frame span is pasted elsewhere in the same video, optionally
//! rotated (bilinear resampling) and/or played backwards in time, with a
//! linear alpha ramp at the boundary. Ground truth marks both the original
//! and the clone.

use std::io::Cursor;

use image::codecs::jpeg::JpegEncoder;
use image::ExtendedColorType;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::frame_to_gray;
use crate::rng;
use crate::video::{Dims, MaskVolume, Video};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "shape")]
pub enum RegionShape {
    /// Disc of `radius` pixels around `center = [row, col]`.
    Cylinder { center: [f64; 2], radius: f64 },
    /// Axis-aligned rectangle; `top_left = [row, col]`, `size = [rows, cols]`.
    Box {
        top_left: [usize; 2],
        size: [usize; 2],
    },
}

impl RegionShape {
    fn center(&self) -> (f64, f64) {
        match *self {
            RegionShape::Cylinder { center, .. } => (center[0], center[1]),
            RegionShape::Box { top_left, size } => (
                top_left[0] as f64 + (size[0] as f64 - 1.0) / 2.0,
                top_left[1] as f64 + (size[1] as f64 - 1.0) / 2.0,
            ),
        }
    }

    /// Distance to the boundary from a point relative to the center:
    /// positive inside, negative outside.
    fn inside_distance(&self, dy: f64, dx: f64) -> f64 {
        match *self {
            RegionShape::Cylinder { radius, .. } => radius - (dy * dy + dx * dx).sqrt(),
            RegionShape::Box { size, .. } => {
                let hy = (size[0] as f64 - 1.0) / 2.0;
                let hx = (size[1] as f64 - 1.0) / 2.0;
                (hy - dy.abs()).min(hx - dx.abs())
            }
        }
    }

    /// Half-extent of a bounding square around the center.
    fn reach(&self) -> f64 {
        match *self {
            RegionShape::Cylinder { radius, .. } => radius,
            RegionShape::Box { size, .. } => {
                let hy = (size[0] as f64 - 1.0) / 2.0;
                let hx = (size[1] as f64 - 1.0) / 2.0;
                (hy * hy + hx * hx).sqrt()
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ForgeryKind {
    /// An object is pasted; the alpha ramp lies inside the region.
    Additive,
    /// Background is pasted over something; the ramp extends outside the
    /// region so the covered content disappears entirely.
    Occlusive,
}

/// A copy-move: `region` over frames `frame_start..frame_start + frame_count`
/// is pasted at `displacement = [dr, dc, dt]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ForgerySpec {
    pub region: RegionShape,
    pub frame_start: usize,
    pub frame_count: usize,
    pub displacement: [i64; 3],
    #[serde(default)]
    pub rotation_deg: f64,
    #[serde(default)]
    pub temporal_flip: bool,
    pub kind: ForgeryKind,
    #[serde(default = "default_feather")]
    pub feather: f64,
    /// Mark only the clone in the ground truth.
    #[serde(default)]
    pub gt_destination_only: bool,
}

fn default_feather() -> f64 {
    2.0
}

impl ForgerySpec {
    /// Rigid additive disc clone.
    pub fn translation(
        center: [f64; 2],
        radius: f64,
        frames: (usize, usize),
        displacement: [i64; 3],
    ) -> Self {
        ForgerySpec {
            region: RegionShape::Cylinder { center, radius },
            frame_start: frames.0,
            frame_count: frames.1,
            displacement,
            rotation_deg: 0.0,
            temporal_flip: false,
            kind: ForgeryKind::Additive,
            feather: default_feather(),
            gt_destination_only: false,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ForgeryStats {
    /// Largest per-frame equivalent radius `sqrt(A(t)/pi)` of the clone.
    pub rho_max: f64,
    /// Largest number of frames any pixel of the clone spans.
    pub d_max: usize,
}

#[derive(Clone, Debug)]
pub struct Forgery {
    pub forged: Video,
    pub gt: MaskVolume,
    pub stats: ForgeryStats,
}

/// Bilinear sample with edge clamping.
#[inline]
fn bilinear(frame: &[f64], rows: usize, cols: usize, y: f64, x: f64) -> f64 {
    let y = y.clamp(0.0, (rows - 1) as f64);
    let x = x.clamp(0.0, (cols - 1) as f64);
    let (y0, x0) = (y.floor() as usize, x.floor() as usize);
    let (y1, x1) = ((y0 + 1).min(rows - 1), (x0 + 1).min(cols - 1));
    let (fy, fx) = (y - y0 as f64, x - x0 as f64);
    let at = |r: usize, c: usize| frame[r * cols + c];
    let top = at(y0, x0) * (1.0 - fx) + at(y0, x1) * fx;
    let bottom = at(y1, x0) * (1.0 - fx) + at(y1, x1) * fx;
    top * (1.0 - fy) + bottom * fy
}

/// Per-pixel geometry shared by the paste and the ground truth.
struct Placement {
    src_center: (f64, f64),
    dst_center: (f64, f64),
    cos: f64,
    sin: f64,
}

impl Placement {
    fn new(spec: &ForgerySpec) -> Self {
        let src_center = spec.region.center();
        let dst_center = (
            src_center.0 + spec.displacement[0] as f64,
            src_center.1 + spec.displacement[1] as f64,
        );
        let theta = spec.rotation_deg.to_radians();
        Placement {
            src_center,
            dst_center,
            cos: theta.cos(),
            sin: theta.sin(),
        }
    }

    /// Source position feeding destination pixel `(r, c)`.
    #[inline]
    fn source_of(&self, r: usize, c: usize) -> (f64, f64) {
        let dy = r as f64 - self.dst_center.0;
        let dx = c as f64 - self.dst_center.1;
        // Inverse rotation.
        let sy = self.cos * dy - self.sin * dx;
        let sx = self.sin * dy + self.cos * dx;
        (self.src_center.0 + sy, self.src_center.1 + sx)
    }
}

fn alpha(kind: ForgeryKind, inside: f64, feather: f64) -> f64 {
    if feather <= 0.0 {
        return if inside >= 0.0 { 1.0 } else { 0.0 };
    }
    match kind {
        ForgeryKind::Additive if inside < 0.0 => 0.0,
        ForgeryKind::Additive => (inside / feather).min(1.0),
        ForgeryKind::Occlusive => (1.0 + inside / feather).clamp(0.0, 1.0),
    }
}

fn validate(spec: &ForgerySpec, d: Dims) -> Result<()> {
    let bad = |m: String| Err(Error::Forgery(m));
    if spec.frame_count == 0 {
        return bad("frame_count must be positive".into());
    }
    if !spec.rotation_deg.is_finite() || !(spec.feather >= 0.0) {
        return bad("rotation and feather must be finite, feather non-negative".into());
    }
    if let RegionShape::Cylinder { radius, .. } = spec.region {
        if !(radius > 0.0) {
            return bad("radius must be positive".into());
        }
    }
    let src_end = spec.frame_start + spec.frame_count;
    let dst_start = spec.frame_start as i64 + spec.displacement[2];
    if src_end > d.frames || dst_start < 0 || dst_start + spec.frame_count as i64 > d.frames as i64
    {
        return bad(format!(
            "frames {}..{} shifted by {} leave 0..{}",
            spec.frame_start, src_end, spec.displacement[2], d.frames
        ));
    }
    let reach = spec.region.reach();
    let margin = if spec.kind == ForgeryKind::Occlusive {
        spec.feather
    } else {
        0.0
    };
    let p = Placement::new(spec);
    for (name, (cy, cx), extra) in [
        ("source", p.src_center, 0.0),
        ("destination", p.dst_center, margin),
    ] {
        let e = reach + extra;
        if cy - e < 0.0
            || cx - e < 0.0
            || cy + e > (d.rows - 1) as f64
            || cx + e > (d.cols - 1) as f64
        {
            return bad(format!(
                "{name} region around ({cy}, {cx}) leaves the {}x{} frame",
                d.rows, d.cols
            ));
        }
    }
    Ok(())
}

/// Pastes the clone described by `spec` and returns the forged video with
/// ground truth and size statistics.
pub fn apply_copy_move(video: &Video, spec: &ForgerySpec) -> Result<Forgery> {
    let d = video.dims();
    validate(spec, d)?;
    let place = Placement::new(spec);
    let rigid = spec.rotation_deg == 0.0;
    let dst_start = (spec.frame_start as i64 + spec.displacement[2]) as usize;
    let (dr, dc) = (spec.displacement[0], spec.displacement[1]);

    let mut forged = video.clone();
    let mut src_gt = MaskVolume::empty(d);
    let mut dst_gt = MaskVolume::empty(d);
    let n = d.frame_len();
    for k in 0..spec.frame_count {
        let src_t = if spec.temporal_flip {
            spec.frame_start + spec.frame_count - 1 - k
        } else {
            spec.frame_start + k
        };
        let dst_t = dst_start + k;
        let src_frame = video.frame(src_t);
        let out = &mut forged.samples_mut()[dst_t * n..(dst_t + 1) * n];
        for r in 0..d.rows {
            for c in 0..d.cols {
                let dy = r as f64 - place.dst_center.0;
                let dx = c as f64 - place.dst_center.1;
                let inside = spec.region.inside_distance(dy, dx);
                let a = alpha(spec.kind, inside, spec.feather);
                if inside >= 0.0 {
                    dst_gt.set(dst_t, r, c, true);
                }
                if a <= 0.0 {
                    continue;
                }
                let v = if rigid {
                    let (sr, sc) = (r as i64 - dr, c as i64 - dc);
                    src_frame[sr as usize * d.cols + sc as usize]
                } else {
                    let (sy, sx) = place.source_of(r, c);
                    bilinear(src_frame, d.rows, d.cols, sy, sx)
                };
                let i = r * d.cols + c;
                out[i] = if a >= 1.0 {
                    v
                } else {
                    a * v + (1.0 - a) * out[i]
                };
            }
        }
    }
    // Source pixels whose image lands inside the clone region.
    for t in spec.frame_start..spec.frame_start + spec.frame_count {
        for r in 0..d.rows {
            for c in 0..d.cols {
                let sy = r as f64 - place.src_center.0;
                let sx = c as f64 - place.src_center.1;
                let dy = place.cos * sy + place.sin * sx;
                let dx = -place.sin * sy + place.cos * sx;
                if spec.region.inside_distance(dy, dx) >= 0.0 {
                    src_gt.set(t, r, c, true);
                }
            }
        }
    }
    if src_gt
        .bits()
        .iter()
        .zip(dst_gt.bits())
        .any(|(&a, &b)| a && b)
    {
        return Err(Error::Forgery(
            "source and destination regions overlap".into(),
        ));
    }
    let stats = clone_stats(&dst_gt);
    let gt = if spec.gt_destination_only {
        dst_gt
    } else {
        src_gt.union(&dst_gt)?
    };
    Ok(Forgery { forged, gt, stats })
}

fn clone_stats(clone: &MaskVolume) -> ForgeryStats {
    let d = clone.dims();
    let rho_max = (0..d.frames)
        .map(|t| clone.frame(t).iter().filter(|&&b| b).count())
        .max()
        .map_or(0.0, |a| (a as f64 / std::f64::consts::PI).sqrt());
    let mut depth = vec![0usize; d.frame_len()];
    for t in 0..d.frames {
        for (acc, &b) in depth.iter_mut().zip(clone.frame(t)) {
            *acc += b as usize;
        }
    }
    ForgeryStats {
        rho_max,
        d_max: depth.into_iter().max().unwrap_or(0),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum TextureKind {
    /// Gaussian white noise blurred with `sigma` pixels in space and
    /// `temporal_sigma` frames in time (0 keeps frames independent).
    GaussianBlurNoise { sigma: f64, temporal_sigma: f64 },
    /// Random gray squares of `size` pixels, redrawn every frame.
    Tiles { size: usize },
    /// `(r + c + t)` normalized to `[0, 1]`.
    Gradient,
}

fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let half = (3.0 * sigma).ceil() as i64;
    let w: Vec<f64> = (-half..=half)
        .map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let s: f64 = w.iter().sum();
    w.into_iter().map(|v| v / s).collect()
}

/// 1D convolution along an axis with mirrored borders; `stride` is the
/// element step along the axis and `len` the axis length.
fn blur_axis(data: &mut [f64], d: Dims, axis: usize, kernel: &[f64]) {
    let half = (kernel.len() / 2) as i64;
    let (len, stride) = match axis {
        0 => (d.frames, d.frame_len()),
        1 => (d.rows, d.cols),
        _ => (d.cols, 1),
    };
    let mirror = |i: i64| -> usize {
        let n = len as i64;
        let mut i = i;
        if n == 1 {
            return 0;
        }
        while i < 0 || i >= n {
            i = if i < 0 { -i } else { 2 * (n - 1) - i };
        }
        i as usize
    };
    let starts: Vec<usize> = (0..d.len())
        .filter(|&i| {
            let (t, r, c) = d.coords(i);
            [t, r, c][axis] == 0
        })
        .collect();
    let src = data.to_vec();
    let mut line = vec![0.0; len];
    for s in starts {
        for (i, out) in line.iter_mut().enumerate() {
            *out = kernel
                .iter()
                .enumerate()
                .map(|(k, w)| w * src[s + mirror(i as i64 + k as i64 - half) * stride])
                .sum();
        }
        for (i, v) in line.iter().enumerate() {
            data[s + i * stride] = *v;
        }
    }
}

/// Deterministic synthetic video for a given seed.
pub fn synth_texture(dims: Dims, kind: TextureKind, seed: u64) -> Result<Video> {
    if dims.is_empty() {
        return Err(Error::TooSmall {
            dims,
            reason: "every dimension must be at least 1".into(),
        });
    }
    let mut rng = rng::stream(seed, &[0x7e47]);
    match kind {
        TextureKind::Gradient => {
            let denom = (dims.rows + dims.cols + dims.frames - 3).max(1) as f64;
            Video::from_fn(dims, |t, r, c| (r + c + t) as f64 / denom)
        }
        TextureKind::Tiles { size } => {
            let size = size.max(1);
            let (tr, tc) = (dims.rows.div_ceil(size), dims.cols.div_ceil(size));
            let levels: Vec<f64> = (0..dims.frames * tr * tc)
                .map(|_| rng.gen::<f64>())
                .collect();
            Video::from_fn(dims, |t, r, c| levels[(t * tr + r / size) * tc + c / size])
        }
        TextureKind::GaussianBlurNoise {
            sigma,
            temporal_sigma,
        } => {
            let mut data: Vec<f64> = (0..dims.len())
                .map(|_| rng.sample(StandardNormal))
                .collect();
            if sigma > 0.0 {
                let k = gaussian_kernel(sigma);
                blur_axis(&mut data, dims, 1, &k);
                blur_axis(&mut data, dims, 2, &k);
            }
            if temporal_sigma > 0.0 && dims.frames > 1 {
                blur_axis(&mut data, dims, 0, &gaussian_kernel(temporal_sigma));
            }
            let mean = data.iter().sum::<f64>() / data.len() as f64;
            let var = data.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / data.len() as f64;
            let scale = if var > 0.0 { 0.15 / var.sqrt() } else { 0.0 };
            Video::new(
                dims,
                data.into_iter()
                    .map(|v| (0.5 + (v - mean) * scale).clamp(0.0, 1.0))
                    .collect(),
            )
        }
    }
}

/// Sets a disc in every frame to a constant value (a saturated area).
pub fn saturate_disc(video: &Video, center: [f64; 2], radius: f64, value: f64) -> Result<Video> {
    let d = video.dims();
    let samples = video.samples();
    Video::from_fn(d, |t, r, c| {
        let (dy, dx) = (r as f64 - center[0], c as f64 - center[1]);
        if dy * dy + dx * dx <= radius * radius {
            value
        } else {
            samples[d.index(t, r, c)]
        }
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Degradation {
    AdditiveGaussianNoise {
        sigma: f64,
        seed: u64,
    },
    /// Every frame is re-encoded as a baseline JPEG at `quality` (1..=100).
    PerFrameJpeg {
        quality: u8,
    },
}

/// Applies a degradation; results are clamped to `[0, 1]`.
pub fn degrade(video: &Video, how: Degradation) -> Result<Video> {
    let d = video.dims();
    match how {
        Degradation::AdditiveGaussianNoise { sigma, seed } => {
            if sigma == 0.0 {
                return Ok(video.clone());
            }
            let mut rng = rng::stream(seed, &[0xde9a]);
            let samples = video
                .samples()
                .iter()
                .map(|&v| {
                    let n: f64 = rng.sample(StandardNormal);
                    (v + sigma * n).clamp(0.0, 1.0)
                })
                .collect();
            Video::new(d, samples)
        }
        Degradation::PerFrameJpeg { quality } => {
            if !(1..=100).contains(&quality) {
                return Err(Error::Config(format!(
                    "JPEG quality {quality} outside 1..=100"
                )));
            }
            let frames: Vec<Vec<f64>> = (0..d.frames)
                .into_par_iter()
                .map(|t| {
                    let gray = frame_to_gray(video, t);
                    let mut buf = Vec::new();
                    JpegEncoder::new_with_quality(&mut buf, quality)
                        .encode(
                            gray.as_raw(),
                            d.cols as u32,
                            d.rows as u32,
                            ExtendedColorType::L8,
                        )
                        .map_err(|e| Error::Config(format!("JPEG encoding failed: {e}")))?;
                    let img = image::load(Cursor::new(buf), image::ImageFormat::Jpeg)
                        .map_err(|e| Error::Config(format!("JPEG decoding failed: {e}")))?
                        .to_luma8();
                    Ok(img.as_raw().iter().map(|&v| v as f64 / 255.0).collect())
                })
                .collect::<Result<_>>()?;
            Video::new(d, frames.concat())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn texture(d: Dims) -> Video {
        synth_texture(
            d,
            TextureKind::GaussianBlurNoise {
                sigma: 1.5,
                temporal_sigma: 0.0,
            },
            7,
        )
        .unwrap()
    }

    #[test]
    fn rigid_translation_copies_exactly() {
        let v = texture(Dims::new(6, 60, 80));
        let spec = ForgerySpec::translation([20.0, 20.0], 10.0, (1, 3), [25, 40, 1]);
        let f = apply_copy_move(&v, &spec).unwrap();
        for k in 0..3 {
            for r in 0..60 {
                for c in 0..80 {
                    let (dy, dx) = (r as f64 - 45.0, c as f64 - 60.0);
                    if 10.0 - (dy * dy + dx * dx).sqrt() >= spec.feather {
                        assert_eq!(f.forged.get(2 + k, r, c), v.get(1 + k, r - 25, c - 40));
                    }
                }
            }
        }
        // Untouched frames stay identical.
        assert_eq!(f.forged.frame(0), v.frame(0));
        assert_eq!(f.forged.frame(5), v.frame(5));
    }

    #[test]
    fn temporal_flip_reverses_frames() {
        let v = texture(Dims::new(10, 50, 50));
        let spec = ForgerySpec {
            temporal_flip: true,
            ..ForgerySpec::translation([15.0, 15.0], 8.0, (2, 5), [20, 20, 2])
        };
        let f = apply_copy_move(&v, &spec).unwrap();
        for k in 0..5 {
            assert_eq!(f.forged.get(4 + k, 35, 35), v.get(2 + 4 - k, 15, 15));
        }
    }

    #[test]
    fn gt_has_two_components_and_stats() {
        let v = texture(Dims::new(8, 80, 100));
        let spec = ForgerySpec::translation([25.0, 25.0], 12.0, (1, 5), [30, 45, 2]);
        let f = apply_copy_move(&v, &spec).unwrap();
        let lab = crate::postproc::RegionLabeling::new(&f.gt);
        assert_eq!(lab.len(), 2);
        assert!(f.stats.d_max <= spec.frame_count);
        assert_eq!(f.stats.d_max, 5);
        assert!((f.stats.rho_max - 12.0).abs() <= 1.0, "{}", f.stats.rho_max);
    }

    #[test]
    fn destination_only_ground_truth() {
        let v = texture(Dims::new(4, 60, 60));
        let spec = ForgerySpec {
            gt_destination_only: true,
            ..ForgerySpec::translation([15.0, 15.0], 8.0, (0, 4), [30, 30, 0])
        };
        let f = apply_copy_move(&v, &spec).unwrap();
        assert!(f.gt.get(0, 45, 45));
        assert!(!f.gt.get(0, 15, 15));
    }

    #[test]
    fn out_of_bounds_and_overlap_are_rejected() {
        let v = texture(Dims::new(4, 60, 60));
        let spec = ForgerySpec::translation([15.0, 15.0], 8.0, (0, 4), [50, 0, 0]);
        assert!(matches!(apply_copy_move(&v, &spec), Err(Error::Forgery(_))));
        let spec = ForgerySpec::translation([15.0, 15.0], 8.0, (2, 4), [20, 20, 0]);
        assert!(matches!(apply_copy_move(&v, &spec), Err(Error::Forgery(_))));
        let spec = ForgerySpec::translation([20.0, 20.0], 10.0, (0, 2), [5, 5, 0]);
        assert!(matches!(apply_copy_move(&v, &spec), Err(Error::Forgery(_))));
    }

    #[test]
    fn occlusive_seam_is_bounded() {
        // Flat background pasted over a bright object: the transition must
        // not be steeper than the feather ramp allows.
        let mut v = Video::filled(Dims::new(2, 60, 90), 0.2);
        v = saturate_disc(&v, [30.0, 65.0], 9.0, 0.9).unwrap();
        let spec = ForgerySpec {
            kind: ForgeryKind::Occlusive,
            feather: 3.0,
            ..ForgerySpec::translation([30.0, 20.0], 12.0, (0, 2), [0, 45, 0])
        };
        let f = apply_copy_move(&v, &spec).unwrap();
        assert!((f.forged.get(0, 30, 65) - 0.2).abs() < 1e-12);
        let mut worst: f64 = 0.0;
        for r in 1..59 {
            for c in 1..89 {
                let gx = f.forged.get(0, r, c + 1) - f.forged.get(0, r, c);
                let gy = f.forged.get(0, r + 1, c) - f.forged.get(0, r, c);
                worst = worst.max(gx.abs()).max(gy.abs());
            }
        }
        // Object contrast 0.7 spread over at least `feather` pixels.
        assert!(worst <= 0.7 / 3.0 + 1e-9, "{worst}");
    }

    #[test]
    fn gradient_formula() {
        let v = synth_texture(Dims::new(3, 4, 5), TextureKind::Gradient, 0).unwrap();
        assert_eq!(v.get(2, 3, 4), 1.0);
        assert_eq!(v.get(1, 2, 0), 3.0 / 9.0);
    }

    #[test]
    fn textures_are_deterministic() {
        let d = Dims::new(3, 20, 30);
        for kind in [
            TextureKind::GaussianBlurNoise {
                sigma: 1.0,
                temporal_sigma: 1.0,
            },
            TextureKind::Tiles { size: 4 },
        ] {
            assert_eq!(
                synth_texture(d, kind, 5).unwrap(),
                synth_texture(d, kind, 5).unwrap()
            );
            assert_ne!(
                synth_texture(d, kind, 5).unwrap(),
                synth_texture(d, kind, 6).unwrap()
            );
        }
    }

    #[test]
    fn zero_noise_is_identity() {
        let v = texture(Dims::new(2, 10, 10));
        let out = degrade(
            &v,
            Degradation::AdditiveGaussianNoise {
                sigma: 0.0,
                seed: 1,
            },
        )
        .unwrap();
        assert_eq!(out, v);
    }
}
